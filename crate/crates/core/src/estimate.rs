//! Frequency estimates of click probabilities and their ratios.
//!
//! Every shot falls into one of eight cells (herald, D2 click, D3 click). The
//! cell counts are multinomial, and every observable is a product of powers of
//! linear combinations of cell frequencies. Standard errors use the first-order
//! delta method with the multinomial covariance
//! `Cov(pi_i, pi_j) = (pi_i delta_ij - pi_i pi_j) / S`, giving
//! `Var f = (sum_i pi_i g_i^2 - (sum_i pi_i g_i)^2) / S` with `g = grad f`.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::record::DetectionRecord;

const CELLS: usize = 8;

fn cell(herald: bool, d2: bool, d3: bool) -> usize {
    (usize::from(herald) << 2) | (usize::from(d2) << 1) | usize::from(d3)
}

/// Cell counts over a set of shots. Merging is associative and commutative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    counts: [u64; CELLS],
}

impl Tally {
    pub fn add(&mut self, herald: bool, d2: bool, d3: bool) {
        self.counts[cell(herald, d2, d3)] += 1;
    }

    /// Adds `n` shots without herald or clicks.
    pub fn add_empty(&mut self, n: u64) {
        self.counts[0] += n;
    }

    pub fn merge(mut self, other: &Tally) -> Tally {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self
    }

    pub fn shots(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn heralded(&self) -> u64 {
        self.counts[4..].iter().sum()
    }

    pub fn count(&self, herald: bool, d2: bool, d3: bool) -> u64 {
        self.counts[cell(herald, d2, d3)]
    }

    pub fn from_record(rec: &DetectionRecord) -> Tally {
        let mut t = Tally::default();
        for e in rec.entries() {
            t.add(e.herald_trial.is_some(), e.d2.is_some(), e.d3.is_some());
        }
        t.add_empty(rec.header().shot_count - rec.entries().len() as u64);
        t
    }

    pub fn estimates(&self) -> Result<Estimates> {
        let shots = self.shots();
        if shots == 0 {
            return Err(Error::Undefined("estimate over an empty record"));
        }
        let pi: Vec<f64> = self.counts.iter().map(|&c| c as f64 / shots as f64).collect();
        let heralded = self.heralded();
        let map = Observable::ALL
            .iter()
            .map(|&o| {
                let n_samples = if o.is_conditional() { heralded } else { shots };
                (o, o.form().evaluate(&pi, shots, n_samples))
            })
            .collect();
        Ok(Estimates { map })
    }
}

/// A scalar estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
}

impl Estimate {
    /// Number of standard errors separating the estimate from `reference`.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = self.value - reference;
        if d == 0.0 {
            0.0
        } else {
            d.abs() / self.std_error
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Observable {
    Herald,
    P2,
    P3,
    P23,
    G2,
    EtaD,
    P2Cond,
    P3Cond,
    P23Cond,
    Alpha,
    GSi,
}

impl Observable {
    pub const ALL: [Observable; 11] = [
        Observable::Herald,
        Observable::P2,
        Observable::P3,
        Observable::P23,
        Observable::G2,
        Observable::EtaD,
        Observable::P2Cond,
        Observable::P3Cond,
        Observable::P23Cond,
        Observable::Alpha,
        Observable::GSi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Observable::Herald => "herald",
            Observable::P2 => "P2",
            Observable::P3 => "P3",
            Observable::P23 => "P23",
            Observable::G2 => "g2",
            Observable::EtaD => "eta_D",
            Observable::P2Cond => "p2_1",
            Observable::P3Cond => "p3_1",
            Observable::P23Cond => "p23_1",
            Observable::Alpha => "alpha",
            Observable::GSi => "g_si",
        }
    }

    fn is_conditional(self) -> bool {
        matches!(
            self,
            Observable::P2Cond | Observable::P3Cond | Observable::P23Cond | Observable::Alpha
        )
    }

    fn form(self) -> Form {
        use Observable::*;
        fn herald(i: usize) -> f64 {
            f64::from(u8::from(i & 4 != 0))
        }
        fn d2(i: usize) -> f64 {
            f64::from(u8::from(i & 2 != 0))
        }
        fn d3(i: usize) -> f64 {
            f64::from(u8::from(i & 1 != 0))
        }
        fn both(i: usize) -> f64 {
            d2(i) * d3(i)
        }
        fn clicks(i: usize) -> f64 {
            d2(i) + d3(i)
        }
        let h = |f: fn(usize) -> f64| move |i: usize| herald(i) * f(i);
        match self {
            Herald => Form::new().times(herald, 1),
            P2 => Form::new().times(d2, 1),
            P3 => Form::new().times(d3, 1),
            P23 => Form::new().times(both, 1),
            G2 => Form::new().times(both, 1).times(d2, -1).times(d3, -1),
            EtaD => Form::new().times(clicks, 1),
            P2Cond => Form::new().times(h(d2), 1).times(herald, -1),
            P3Cond => Form::new().times(h(d3), 1).times(herald, -1),
            P23Cond => Form::new().times(h(both), 1).times(herald, -1),
            Alpha => Form::new()
                .times(h(both), 1)
                .times(herald, 1)
                .times(h(d2), -1)
                .times(h(d3), -1),
            GSi => Form::new()
                .times(h(clicks), 1)
                .times(herald, -1)
                .times(clicks, -1),
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `prod_k (sum_i c_ki pi_i)^e_k`.
struct Form {
    factors: Vec<([f64; CELLS], i32)>,
}

impl Form {
    fn new() -> Self {
        Form { factors: Vec::new() }
    }

    fn times(mut self, coef: impl Fn(usize) -> f64, exponent: i32) -> Self {
        let mut c = [0.0; CELLS];
        for (i, v) in c.iter_mut().enumerate() {
            *v = coef(i);
        }
        self.factors.push((c, exponent));
        self
    }

    fn evaluate(&self, pi: &[f64], shots: u64, n_samples: u64) -> Option<Estimate> {
        let sums: Vec<f64> = self
            .factors
            .iter()
            .map(|(c, _)| c.iter().zip(pi).map(|(a, b)| a * b).sum())
            .collect();
        if self.factors.iter().zip(&sums).any(|((_, e), &s)| *e < 0 && s == 0.0) {
            return None;
        }
        let value: f64 = self.factors.iter().zip(&sums).map(|((_, e), s)| s.powi(*e)).product();
        let grad = |i: usize| -> f64 {
            (0..self.factors.len())
                .map(|k| {
                    let (c, e) = &self.factors[k];
                    if c[i] == 0.0 {
                        return 0.0;
                    }
                    let rest: f64 = (0..self.factors.len())
                        .filter(|&l| l != k)
                        .map(|l| sums[l].powi(self.factors[l].1))
                        .product();
                    f64::from(*e) * c[i] * sums[k].powi(e - 1) * rest
                })
                .sum()
        };
        let g: Vec<f64> = (0..CELLS).map(grad).collect();
        let mean: f64 = pi.iter().zip(&g).map(|(p, g)| p * g).sum();
        let second: f64 = pi.iter().zip(&g).map(|(p, g)| p * g * g).sum();
        let var = ((second - mean * mean) / shots as f64).max(0.0);
        Some(Estimate {
            value,
            std_error: var.sqrt(),
            n_samples,
        })
    }
}

/// Estimates keyed by observable; `None` marks an undefined estimate
/// (zero denominator count).
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    map: BTreeMap<Observable, Option<Estimate>>,
}

impl Estimates {
    pub fn get(&self, o: Observable) -> Option<Estimate> {
        self.map.get(&o).copied().flatten()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Observable, Option<Estimate>)> + '_ {
        self.map.iter().map(|(k, v)| (*k, *v))
    }
}

/// Estimates of every observable of a record.
pub fn estimate_observables(rec: &DetectionRecord) -> Result<Estimates> {
    Tally::from_record(rec).estimates()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binomial_error_for_single_probability() {
        let mut t = Tally::default();
        for i in 0..1000 {
            t.add(false, i % 4 == 0, false);
        }
        let e = t.estimates().unwrap().get(Observable::P2).unwrap();
        assert_eq!(e.value, 0.25);
        assert!((e.std_error - (0.25f64 * 0.75 / 1000.0).sqrt()).abs() < 1e-15);
        assert_eq!(e.n_samples, 1000);
    }

    #[test]
    fn conditional_error_uses_heralded_count() {
        let mut t = Tally::default();
        for i in 0..400 {
            t.add(true, i % 5 == 0, false);
        }
        t.add_empty(10_000);
        let e = t.estimates().unwrap().get(Observable::P2Cond).unwrap();
        assert!((e.value - 0.2).abs() < 1e-15);
        assert!((e.std_error - (0.2f64 * 0.8 / 400.0).sqrt()).abs() < 1e-12);
        assert_eq!(e.n_samples, 400);
    }

    #[test]
    fn perfect_single_photons_give_zero_g2() {
        let mut t = Tally::default();
        for i in 0..100 {
            t.add(true, i % 2 == 0, i % 2 == 1);
        }
        t.add_empty(50);
        let est = t.estimates().unwrap();
        assert_eq!(est.get(Observable::G2).unwrap().value, 0.0);
        assert_eq!(est.get(Observable::Alpha).unwrap().value, 0.0);
    }

    #[test]
    fn undefined_when_denominator_is_zero() {
        let mut t = Tally::default();
        t.add_empty(10);
        let est = t.estimates().unwrap();
        assert!(est.get(Observable::G2).is_none());
        assert!(est.get(Observable::Alpha).is_none());
        assert_eq!(est.get(Observable::P2).unwrap().value, 0.0);
        assert!(Tally::default().estimates().is_err());
    }

    #[test]
    fn delta_method_matches_replicate_spread() {
        // Independent clicks: g2 = 1. Compare the delta-method error with the
        // spread of 200 independent replicates.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (p, shots) = (0.05, 20_000);
        let mut values = Vec::new();
        let mut reported = 0.0;
        for _ in 0..200 {
            let mut t = Tally::default();
            for _ in 0..shots {
                t.add(false, rng.random::<f64>() < p, rng.random::<f64>() < p);
            }
            let e = t.estimates().unwrap().get(Observable::G2).unwrap();
            values.push(e.value);
            reported += e.std_error / 200.0;
        }
        let mean = values.iter().sum::<f64>() / 200.0;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 199.0).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sd / 200f64.sqrt());
        assert!((reported / sd - 1.0).abs() < 0.15, "reported {reported} spread {sd}");
    }

    #[test]
    fn error_scales_as_inverse_sqrt() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut run = |n: u64| {
            let mut t = Tally::default();
            for _ in 0..n {
                t.add(false, rng.random::<f64>() < 0.1, false);
            }
            t.estimates().unwrap().get(Observable::P2).unwrap().std_error
        };
        let ratio = run(10_000) / run(40_000);
        assert!((ratio - 2.0).abs() < 0.4);
    }

    #[test]
    fn merge_is_associative() {
        let mut a = Tally::default();
        a.add(true, true, false);
        let mut b = Tally::default();
        b.add(false, false, true);
        b.add_empty(3);
        let mut c = Tally::default();
        c.add(true, true, true);
        assert_eq!(a.merge(&b).merge(&c), a.merge(&b.merge(&c)));
        assert_eq!(a.merge(&b).shots(), 5);
    }
}
