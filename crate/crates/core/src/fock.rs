//! Exact enumeration over excitation number.
//!
//! Every quantity of [`crate::analytic`] is recomputed here by summing over a
//! truncated number distribution and routing each excitation independently.
//! Nothing in this module calls the closed forms, so it serves as their oracle.

use crate::analytic::{memory_efficiency, storage_time, ConditionalProbs, ProtocolObservables, SourceStatistics};
use crate::error::{check_range, Error, Result};
use crate::params::SourceParams;

pub const DEFAULT_N_MAX: usize = 64;
pub const TAIL_BOUND: f64 = 1e-12;

/// Probabilities indexed by excitation number `0..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonNumberDist {
    probs: Vec<f64>,
}

impl PhotonNumberDist {
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Domain {
                name: "probs",
                value: f64::NAN,
                domain: "non-empty, finite, non-negative",
            });
        }
        Ok(PhotonNumberDist { probs })
    }

    /// Deterministic `n` excitations.
    pub fn fock(n: usize) -> Self {
        let mut probs = vec![0.0; n + 1];
        probs[n] = 1.0;
        PhotonNumberDist { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    /// Each excitation survives independently with probability `eta`.
    pub fn apply_loss(&self, eta: f64) -> Result<Self> {
        check_range("eta", eta, (0.0..=1.0).contains(&eta), "[0, 1]")?;
        let mut out = vec![0.0; self.probs.len()];
        let mut row = vec![1.0];
        for (n, &p) in self.probs.iter().enumerate() {
            if n > 0 {
                row = next_binomial_row(&row, eta);
            }
            for (k, &b) in row.iter().enumerate() {
                out[k] += p * b;
            }
        }
        Ok(PhotonNumberDist { probs: out })
    }
}

/// Binomial(n, eta) probabilities from those of Binomial(n - 1, eta).
fn next_binomial_row(row: &[f64], eta: f64) -> Vec<f64> {
    let mut next = vec![0.0; row.len() + 1];
    for (k, &b) in row.iter().enumerate() {
        next[k] += b * (1.0 - eta);
        next[k + 1] += b * eta;
    }
    next
}

/// Thermal distribution `n^k / (1 + n)^(k + 1)` of one mode of a two-mode
/// squeezed state with mean `n_mean`.
pub fn tms_distribution(n_mean: f64, n_max: usize) -> Result<PhotonNumberDist> {
    check_range("n_mean", n_mean, n_mean >= 0.0, "[0, inf)")?;
    if n_max < 1 {
        return Err(Error::Domain {
            name: "n_max",
            value: n_max as f64,
            domain: "n_max >= 1",
        });
    }
    let q = n_mean / (1.0 + n_mean);
    let tail = q.powi(n_max as i32 + 1);
    if tail > TAIL_BOUND {
        return Err(Error::Truncation {
            n_max,
            tail,
            bound: TAIL_BOUND,
        });
    }
    let mut probs = Vec::with_capacity(n_max + 1);
    let mut p = 1.0 / (1.0 + n_mean);
    for _ in 0..=n_max {
        probs.push(p);
        p *= q;
    }
    Ok(PhotonNumberDist { probs })
}

/// Excitation distribution conditioned on a herald click of the signal
/// detector with efficiency `eta_s`.
pub fn conditional_distribution(n_mean: f64, eta_s: f64, n_max: usize) -> Result<PhotonNumberDist> {
    heralded_distribution(n_mean, eta_s, 0.0, n_max).map(|(d, _)| d)
}

/// Like [`conditional_distribution`], with an independent signal background
/// click of probability `bg_signal`. Also returns the enumerated herald
/// probability used as normalization.
pub fn heralded_distribution(
    n_mean: f64,
    eta_s: f64,
    bg_signal: f64,
    n_max: usize,
) -> Result<(PhotonNumberDist, f64)> {
    check_range("eta_s", eta_s, eta_s > 0.0 && eta_s <= 1.0, "(0, 1]")?;
    check_range("bg_signal", bg_signal, (0.0..1.0).contains(&bg_signal), "[0, 1)")?;
    let thermal = tms_distribution(n_mean, n_max)?;
    let mut miss = 1.0;
    let mut weights: Vec<f64> = thermal
        .probs
        .iter()
        .map(|&p| {
            let w = p * (1.0 - miss * (1.0 - bg_signal));
            miss *= 1.0 - eta_s;
            w
        })
        .collect();
    let herald: f64 = weights.iter().sum();
    if !(herald > 0.0) {
        return Err(Error::Undefined("herald probability"));
    }
    for w in &mut weights {
        *w /= herald;
    }
    Ok((PhotonNumberDist { probs: weights }, herald))
}

/// Outcome probabilities of the two idler detectors behind a 50:50 splitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionCells {
    pub none: f64,
    pub only2: f64,
    pub only3: f64,
    pub both: f64,
}

impl DetectionCells {
    pub fn click2(&self) -> f64 {
        self.only2 + self.both
    }

    pub fn click3(&self) -> f64 {
        self.only3 + self.both
    }

    /// Adds an independent background click of probability `bg` to each detector.
    pub fn with_background(&self, bg: f64) -> Self {
        let keep = 1.0 - bg;
        DetectionCells {
            none: self.none * keep * keep,
            only2: self.only2 * keep + self.none * bg * keep,
            only3: self.only3 * keep + self.none * bg * keep,
            both: self.both + (self.only2 + self.only3) * bg + self.none * bg * bg,
        }
    }
}

/// Routes every excitation to D2 with probability `eta/2`, D3 with `eta/2`,
/// or loses it. Given `k` detected quanta, both detectors fire with
/// probability `1 - 2^(1 - k)`, so all terms are non-negative.
pub fn detection_cells(dist: &PhotonNumberDist, eta_total: f64) -> Result<DetectionCells> {
    check_range("eta_total", eta_total, (0.0..=1.0).contains(&eta_total), "[0, 1]")?;
    let mut cells = DetectionCells {
        none: 0.0,
        only2: 0.0,
        only3: 0.0,
        both: 0.0,
    };
    let mut row = vec![1.0];
    for (n, &p) in dist.probs.iter().enumerate() {
        if n > 0 {
            row = next_binomial_row(&row, eta_total);
        }
        if p == 0.0 {
            continue;
        }
        cells.none += p * row[0];
        let mut half_pow = 1.0;
        for &b in &row[1..] {
            half_pow *= 0.5;
            cells.only2 += p * b * half_pow;
            cells.only3 += p * b * half_pow;
            cells.both += p * b * (1.0 - 2.0 * half_pow);
        }
    }
    Ok(cells)
}

/// `(P(>= 1 click at D2), P(>= 1 click at both D2 and D3))`.
pub fn detection_probs(dist: &PhotonNumberDist, eta_total: f64) -> Result<(f64, f64)> {
    let c = detection_cells(dist, eta_total)?;
    Ok((c.click2(), c.both))
}

/// Smallest truncation order, at least `n_max`, that meets the tail bound for
/// a thermal mode of mean `n_mean`.
pub fn required_n_max(n_mean: f64, n_max: usize) -> usize {
    let q = n_mean / (1.0 + n_mean);
    if q <= 0.0 {
        return n_max;
    }
    let needed = (TAIL_BOUND.ln() / q.ln()).ceil() as usize;
    n_max.max(needed)
}

fn conditional_cells(sp: &SourceParams, eta: f64, dist: &PhotonNumberDist, tau: f64) -> Result<ConditionalProbs> {
    let c = detection_cells(dist, eta)?.with_background(sp.bg_idler);
    Ok(ConditionalProbs {
        tau,
        p2_1: c.click2(),
        p3_1: c.click3(),
        p23_1: c.both,
    })
}

fn heralded_for(sp: &SourceParams, n_max: usize) -> Result<PhotonNumberDist> {
    sp.validate()?;
    heralded_distribution(sp.n_mean(), sp.eta_s, sp.bg_signal, n_max).map(|(d, _)| d)
}

/// Enumerated counterpart of [`crate::analytic::conditional_probs`].
pub fn oracle_conditional_probs(tau: f64, sp: &SourceParams, n_max: usize) -> Result<ConditionalProbs> {
    let dist = heralded_for(sp, n_max)?;
    conditional_cells(sp, memory_efficiency(tau, sp)?, &dist, tau)
}

/// Enumerated counterpart of [`crate::analytic::unconditional_probs`].
pub fn oracle_source_statistics(sp: &SourceParams, tau: f64, n_max: usize) -> Result<SourceStatistics> {
    let dist = heralded_for(sp, n_max)?;
    let eta = memory_efficiency(tau, sp)?;
    let conditional = conditional_cells(sp, eta, &dist, tau)?;
    let thermal = tms_distribution(sp.n_mean(), n_max)?;
    let c = detection_cells(&thermal, eta)?.with_background(sp.bg_idler);
    let (_, herald) = heralded_distribution(sp.n_mean(), sp.eta_s, sp.bg_signal, n_max)?;
    Ok(SourceStatistics {
        herald,
        conditional,
        p2: c.click2(),
        p3: c.click3(),
        p23: c.both,
    })
}

/// Enumerated counterpart of [`crate::analytic::protocol_observables`]: the
/// herald trial is enumerated explicitly with its truncated-geometric law.
pub fn oracle_protocol_observables(sp: &SourceParams, n_trials: u32, n_max: usize) -> Result<ProtocolObservables> {
    if n_trials == 0 {
        return Err(Error::Domain {
            name: "N",
            value: 0.0,
            domain: "N >= 1",
        });
    }
    let dist = heralded_for(sp, n_max)?;
    let (mut p2, mut p3, mut p23, mut herald) = (0.0, 0.0, 0.0, 0.0);
    for j in 1..=n_trials {
        let w = sp.p1 * (1.0 - sp.p1).powi(j as i32 - 1);
        let tau = storage_time(sp, n_trials, j)?;
        let c = conditional_cells(sp, memory_efficiency(tau, sp)?, &dist, tau)?;
        p2 += w * c.p2_1;
        p3 += w * c.p3_1;
        p23 += w * c.p23_1;
        herald += w;
    }
    let none = 1.0 - herald;
    let bg = sp.bg_idler;
    Ok(ProtocolObservables {
        n_trials,
        delta_t: f64::from(n_trials) * sp.t0,
        p2: p2 + none * bg,
        p3: p3 + none * bg,
        p23: p23 + none * bg * bg,
        herald,
        p2_h: p2 / herald,
        p3_h: p3 / herald,
        p23_h: p23 / herald,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vacuum_distribution() {
        let d = tms_distribution(0.0, 8).unwrap();
        assert_eq!(d.probs()[0], 1.0);
        assert!(d.probs()[1..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn thermal_ratio_is_tanh_squared() {
        let n = 0.037_612_838_515_546_64;
        let d = tms_distribution(n, DEFAULT_N_MAX).unwrap();
        assert!((d.probs()[1] / d.probs()[0] - n / (1.0 + n)).abs() < 1e-16);
        assert!((d.total() - 1.0).abs() < TAIL_BOUND);
        // sinh^2 = n and tanh^2 = sinh^2 / cosh^2
        let chi = n.sqrt().asinh();
        assert!((d.probs()[1] / d.probs()[0] - chi.tanh().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn truncation_is_reported() {
        assert!(matches!(tms_distribution(42.0, 64), Err(Error::Truncation { .. })));
        let n_max = required_n_max(42.0, 64);
        assert!(tms_distribution(42.0, n_max).is_ok());
    }

    #[test]
    fn heralding_removes_vacuum() {
        for (n, eta_s) in [(0.03, 0.08), (0.4, 0.5), (1.0, 1.0)] {
            let d = conditional_distribution(n, eta_s, 128).unwrap();
            assert_eq!(d.probs()[0], 0.0);
            assert!((d.total() - 1.0).abs() < 1e-14);
            assert!(d.mean() >= 1.0);
        }
    }

    #[test]
    fn perfect_herald_is_renormalized_thermal_tail() {
        let n = 0.3;
        let d = conditional_distribution(n, 1.0, 96).unwrap();
        let t = tms_distribution(n, 96).unwrap();
        let norm: f64 = t.probs()[1..].iter().sum();
        for k in 1..=96 {
            assert!((d.probs()[k] - t.probs()[k] / norm).abs() < 1e-15);
        }
    }

    #[test]
    fn enumerated_herald_probability_inverts_mean() {
        // p1 = 0.1 and eta_s = 0.5 give n = 2/9.
        let (_, herald) = heralded_distribution(2.0 / 9.0, 0.5, 0.0, 64).unwrap();
        assert!((herald - 0.1).abs() < 1e-14);
    }

    #[test]
    fn detection_edge_cases() {
        let d = conditional_distribution(0.2, 0.3, 64).unwrap();
        assert_eq!(detection_probs(&d, 0.0).unwrap(), (0.0, 0.0));
        let single = PhotonNumberDist::fock(1);
        let (p, c) = detection_probs(&single, 0.3).unwrap();
        assert!((p - 0.15).abs() < 1e-16);
        assert_eq!(c, 0.0);
        let two = PhotonNumberDist::fock(2);
        let (p, c) = detection_probs(&two, 1.0).unwrap();
        assert!((p - 0.75).abs() < 1e-16 && (c - 0.5).abs() < 1e-16);
    }

    #[test]
    fn cells_sum_to_total() {
        let d = tms_distribution(0.5, 64).unwrap();
        let c = detection_cells(&d, 0.7).unwrap().with_background(0.1);
        assert!((c.none + c.only2 + c.only3 + c.both - d.total()).abs() < 1e-14);
    }

    fn random_dist() -> impl Strategy<Value = PhotonNumberDist> {
        proptest::collection::vec(0.0f64..1.0, 2..24).prop_map(|mut v| {
            let s: f64 = v.iter().sum::<f64>() + 1e-9;
            v.iter_mut().for_each(|p| *p /= s);
            PhotonNumberDist::from_probs(v).unwrap()
        })
    }

    proptest! {
        #[test]
        fn loss_commutes(d in random_dist(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let twice = d.apply_loss(a).unwrap().apply_loss(b).unwrap();
            let once = d.apply_loss(a * b).unwrap();
            for (x, y) in twice.probs().iter().zip(once.probs()) {
                prop_assert!((x - y).abs() < 1e-13);
            }
        }

        #[test]
        fn loss_then_detection_equals_combined_efficiency(d in random_dist(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (p1, c1) = detection_probs(&d.apply_loss(a).unwrap(), b).unwrap();
            let (p2, c2) = detection_probs(&d, a * b).unwrap();
            prop_assert!((p1 - p2).abs() < 1e-13 && (c1 - c2).abs() < 1e-13);
        }
    }
}
