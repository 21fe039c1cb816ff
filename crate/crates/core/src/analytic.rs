//! Closed-form click and coincidence probabilities of the heralded source and
//! of the N-trial feedback protocol.
//!
//! The heralded excitation is a two-mode-squeezed (thermal) mode conditioned on
//! a signal click. With `n` the mean excitation number and
//! `u = p1 (1 - eta_s) / eta_s`, the no-click generating function of the
//! heralded state is
//!
//! ```text
//! G(x) = E[(1 - x)^n | herald] = (1 - x) / ((1 + x n) (1 + x u))
//! ```
//!
//! so that `Pi(x) = 1 - G(x)` and the two-detector coincidence after a 50:50
//! split, `1 - 2 G(x/2) + G(x)`, are evaluated in forms whose numerators carry
//! only positive terms. Background clicks are independent Bernoulli events per
//! detector and gate.

use crate::error::{check_range, Error, Result};
use crate::params::SourceParams;

/// Mean excitation number `sinh^2 chi = p1 / (eta_s (1 - p1))`.
pub fn mean_excitation(p1: f64, eta_s: f64) -> Result<f64> {
    check_range("p1", p1, p1 > 0.0 && p1 < 1.0, "(0, 1)")?;
    check_range("eta_s", eta_s, eta_s > 0.0 && eta_s <= 1.0, "(0, 1]")?;
    Ok(p1 / (eta_s * (1.0 - p1)))
}

/// Probability that a detector of efficiency `eta` registers at least one
/// click from the heralded excitation.
pub fn pi_click(eta: f64, p1: f64, eta_s: f64) -> Result<f64> {
    check_range("eta", eta, (0.0..=1.0).contains(&eta), "[0, 1]")?;
    let n = mean_excitation(p1, eta_s)?;
    Ok(HeraldedTms::new(n, p1, eta_s).click(eta))
}

/// Probability that both detectors click when the heralded excitation is
/// read with total efficiency `eta` and split 50:50.
pub fn coincidence_prob(eta: f64, p1: f64, eta_s: f64) -> Result<f64> {
    check_range("eta", eta, (0.0..=1.0).contains(&eta), "[0, 1]")?;
    let n = mean_excitation(p1, eta_s)?;
    Ok(HeraldedTms::new(n, p1, eta_s).coincidence(eta / 2.0))
}

/// Conditional state of a heralded two-mode-squeezed source: real heralds
/// with weight `weight`, background heralds otherwise (thermal with `n_dark`).
#[derive(Debug, Clone, Copy)]
pub(crate) struct HeraldedState {
    true_herald: HeraldedTms,
    weight: f64,
    n_dark: f64,
}

#[derive(Debug, Clone, Copy)]
struct HeraldedTms {
    n: f64,
    u: f64,
}

impl HeraldedTms {
    fn new(n: f64, p1: f64, eta_s: f64) -> Self {
        HeraldedTms {
            n,
            u: p1 * (1.0 - eta_s) / eta_s,
        }
    }

    fn click(&self, x: f64) -> f64 {
        let (n, u) = (self.n, self.u);
        x * (1.0 + n + u + x * n * u) / ((1.0 + x * n) * (1.0 + x * u))
    }

    /// Both halves of a 50:50 split click, total efficiency `2 a`.
    fn coincidence(&self, a: f64) -> f64 {
        let (n, u) = (self.n, self.u);
        let poly = n + u + n * n + n * u + u * u + 3.0 * a * n * u * (n + u + 1.0)
            + 2.0 * a * a * n * n * u * u;
        2.0 * a * a * poly / ((1.0 + a * n) * (1.0 + 2.0 * a * n) * (1.0 + a * u) * (1.0 + 2.0 * a * u))
    }
}

pub(crate) fn thermal_click(x: f64, m: f64) -> f64 {
    x * m / (1.0 + x * m)
}

pub(crate) fn thermal_coincidence(a: f64, m: f64) -> f64 {
    2.0 * a * a * m * m / ((1.0 + a * m) * (1.0 + 2.0 * a * m))
}

impl HeraldedState {
    pub(crate) fn new(sp: &SourceParams) -> Self {
        let p_true = sp.true_herald_probability();
        let n = sp.n_mean();
        HeraldedState {
            true_herald: HeraldedTms::new(n, p_true, sp.eta_s),
            weight: p_true / sp.p1,
            n_dark: n * (1.0 - sp.eta_s) / (1.0 + sp.eta_s * n),
        }
    }

    fn click(&self, x: f64) -> f64 {
        let w = self.weight;
        w * self.true_herald.click(x) + (1.0 - w) * thermal_click(x, self.n_dark)
    }

    fn coincidence(&self, a: f64) -> f64 {
        let w = self.weight;
        w * self.true_herald.coincidence(a) + (1.0 - w) * thermal_coincidence(a, self.n_dark)
    }
}

/// Adds independent background clicks `bg` to a pair of symmetric detectors
/// with per-detector click probability `click` and coincidence `coinc`.
pub(crate) fn with_background(click: f64, coinc: f64, bg: f64) -> (f64, f64) {
    let keep = 1.0 - bg;
    (click + bg * (1.0 - click), keep * keep * coinc + bg * (bg + 2.0 * keep * click))
}

/// Heralded click and coincidence probabilities at one storage time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalProbs {
    pub tau: f64,
    pub p2_1: f64,
    pub p3_1: f64,
    pub p23_1: f64,
}

impl ConditionalProbs {
    /// Anticorrelation parameter `p23|1 / (p2|1 p3|1)`.
    pub fn alpha(&self) -> Result<f64> {
        ratio(self.p23_1, self.p2_1 * self.p3_1, "alpha")
    }
}

fn ratio(num: f64, den: f64, what: &'static str) -> Result<f64> {
    if den > 0.0 {
        Ok(num / den)
    } else {
        Err(Error::Undefined(what))
    }
}

/// Retrieval efficiency after storing for `tau`: Gaussian decay with the
/// coherence time, scaled by the read factor.
pub fn memory_efficiency(tau: f64, sp: &SourceParams) -> Result<f64> {
    check_range("tau", tau, tau >= 0.0, "[0, inf)")?;
    let x = tau / sp.tau_c;
    Ok(sp.read_factor * sp.eta_i0 * (-x * x).exp())
}

pub fn conditional_probs(tau: f64, sp: &SourceParams) -> Result<ConditionalProbs> {
    sp.validate()?;
    let eta = memory_efficiency(tau, sp)?;
    let state = HeraldedState::new(sp);
    Ok(conditional_from_state(&state, eta, sp.bg_idler, tau))
}

fn conditional_from_state(state: &HeraldedState, eta: f64, bg: f64, tau: f64) -> ConditionalProbs {
    let a = eta / 2.0;
    let (p, p23) = with_background(state.click(a), state.coincidence(a), bg);
    ConditionalProbs {
        tau,
        p2_1: p,
        p3_1: p,
        p23_1: p23,
    }
}

/// Statistics of the heralded source read out at a fixed storage time, with
/// every write trial read (no feedback).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceStatistics {
    pub herald: f64,
    pub conditional: ConditionalProbs,
    /// Unconditional click probability per idler detector.
    pub p2: f64,
    pub p3: f64,
    /// Unconditional idler coincidence probability.
    pub p23: f64,
}

impl SourceStatistics {
    /// Normalized signal-idler cross-correlation `(p2|1 + p3|1) / (p2 + p3)`.
    pub fn g_si(&self) -> Result<f64> {
        ratio(self.conditional.p2_1 + self.conditional.p3_1, self.p2 + self.p3, "g_si")
    }

    /// Zero-delay autocorrelation of the unheralded idler.
    pub fn idler_g2(&self) -> Result<f64> {
        ratio(self.p23, self.p2 * self.p3, "idler g2")
    }
}

/// Unconditional idler statistics and `g_si` at storage time `tau`.
pub fn unconditional_probs(sp: &SourceParams, tau: f64) -> Result<SourceStatistics> {
    let conditional = conditional_probs(tau, sp)?;
    let a = memory_efficiency(tau, sp)? / 2.0;
    let n = sp.n_mean();
    let (p, p23) = with_background(thermal_click(a, n), thermal_coincidence(a, n), sp.bg_idler);
    Ok(SourceStatistics {
        herald: sp.p1,
        conditional,
        p2: p,
        p3: p,
        p23,
    })
}

/// Protocol-level probabilities per predetermined read slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolObservables {
    pub n_trials: u32,
    /// Duration `N t0` between the first write trial and the read.
    pub delta_t: f64,
    pub p2: f64,
    pub p3: f64,
    pub p23: f64,
    /// Probability that some trial heralded, `1 - (1 - p1)^N`.
    pub herald: f64,
    /// Click probabilities restricted to heralded shots.
    pub p2_h: f64,
    pub p3_h: f64,
    pub p23_h: f64,
}

impl ProtocolObservables {
    pub fn g2(&self) -> Result<f64> {
        ratio(self.p23, self.p2 * self.p3, "g2")
    }

    pub fn eta_d(&self) -> f64 {
        self.p2 + self.p3
    }

    /// Anticorrelation parameter of the heralded shots.
    pub fn alpha(&self) -> Result<f64> {
        ratio(self.p23_h, self.p2_h * self.p3_h, "alpha")
    }

    pub fn g_si(&self) -> Result<f64> {
        ratio(self.p2_h + self.p3_h, self.p2 + self.p3, "g_si")
    }
}

/// Storage time of an excitation heralded on trial `j` of `n_trials`.
pub fn storage_time(sp: &SourceParams, n_trials: u32, j: u32) -> Result<f64> {
    let tau = f64::from(n_trials) * sp.t0 - f64::from(j) * sp.t0 + sp.halt_offset;
    if tau < 0.0 {
        return Err(Error::NegativeStorage(tau));
    }
    Ok(tau)
}

/// Sums the heralded contributions over trials `j = 1..=N`, each weighted by
/// `p1 (1 - p1)^(j - 1)` and read after `(N - j) t0`; the never-heralded
/// branch contributes background clicks only.
pub fn protocol_observables(sp: &SourceParams, n_trials: u32) -> Result<ProtocolObservables> {
    sp.validate()?;
    if n_trials == 0 {
        return Err(Error::Domain {
            name: "N",
            value: 0.0,
            domain: "N >= 1",
        });
    }
    let state = HeraldedState::new(sp);
    let miss = 1.0 - sp.p1;
    let (mut p2, mut p23) = (NeumaierSum::default(), NeumaierSum::default());
    let mut weight = sp.p1;
    for j in 1..=n_trials {
        let tau = storage_time(sp, n_trials, j)?;
        let c = conditional_from_state(&state, memory_efficiency(tau, sp)?, sp.bg_idler, tau);
        p2.add(weight * c.p2_1);
        p23.add(weight * c.p23_1);
        weight *= miss;
    }
    let none = miss.powi(n_trials as i32);
    let herald = -(f64::from(n_trials) * (-sp.p1).ln_1p()).exp_m1();
    let (h2, h23) = (p2.total(), p23.total());
    let bg = sp.bg_idler;
    let total2 = h2 + none * bg;
    let total23 = h23 + none * bg * bg;
    Ok(ProtocolObservables {
        n_trials,
        delta_t: f64::from(n_trials) * sp.t0,
        p2: total2,
        p3: total2,
        p23: total23,
        herald,
        p2_h: h2 / herald,
        p3_h: h2 / herald,
        p23_h: h23 / herald,
    })
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct NeumaierSum {
    sum: f64,
    carry: f64,
}

impl NeumaierSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        if a == b {
            0.0
        } else {
            (a - b).abs() / a.abs().max(b.abs())
        }
    }

    /// The expression as displayed, without the cancellation-free rewrite.
    fn pi_displayed(eta: f64, p1: f64, eta_s: f64) -> f64 {
        let n = p1 / (eta_s * (1.0 - p1));
        1.0 - (1.0 / (1.0 + eta * n) - 1.0 / (1.0 + (eta_s + eta * (1.0 - eta_s)) * n)) / p1
    }

    #[test]
    fn mean_excitation_examples() {
        // 0.003 / (0.08 * 0.997)
        assert!(rel(mean_excitation(0.003, 0.08).unwrap(), 0.037_612_838_515_546_64) < 1e-14);
        assert!(rel(mean_excitation(0.1, 0.5).unwrap(), 2.0 / 9.0) < 1e-15);
        assert!(mean_excitation(1e-300, 0.5).unwrap() < 1e-299);
        assert!(mean_excitation(0.0, 0.5).is_err());
        assert!(mean_excitation(0.1, 1.5).is_err());
    }

    #[test]
    fn heralding_probability_round_trip() {
        for k in 0..200 {
            let p1 = 1e-5 * (0.5f64 / 1e-5).powf(f64::from(k) / 199.0);
            for eta_s in [0.01, 0.08, 0.5, 1.0] {
                let n = mean_excitation(p1, eta_s).unwrap();
                let herald = eta_s * n / (1.0 + eta_s * n);
                assert!(rel(herald, p1) < 1e-12, "p1={p1} eta_s={eta_s}");
            }
        }
    }

    #[test]
    fn pi_click_limits() {
        for p1 in [1e-4, 0.003, 0.1, 0.3] {
            for eta_s in [0.01, 0.08, 1.0] {
                assert_eq!(pi_click(0.0, p1, eta_s).unwrap(), 0.0);
            }
            assert_eq!(pi_click(1.0, p1, 1.0).unwrap(), 1.0);
        }
        assert!(pi_click(-0.1, 0.1, 0.5).is_err());
    }

    #[test]
    fn pi_click_matches_displayed_form_and_enumeration() {
        // 40-digit enumeration of the heralded thermal state, n <= 400.
        let expected = 0.040_097_550_028_648_37;
        let pi = pi_click(0.0375, 0.003, 0.08).unwrap();
        assert!(rel(pi, expected) < 1e-12, "{pi}");
        for eta in [0.01, 0.2, 0.7, 1.0] {
            for (p1, eta_s) in [(0.003, 0.08), (0.2, 0.3), (1e-3, 1.0)] {
                let a = pi_click(eta, p1, eta_s).unwrap();
                assert!(rel(a, pi_displayed(eta, p1, eta_s)) < 1e-9);
            }
        }
    }

    #[test]
    fn pi_click_monotone_in_eta() {
        for p1 in [1e-4, 0.01, 0.3] {
            for eta_s in [0.01, 0.5, 1.0] {
                let mut prev = 0.0;
                for k in 0..=100 {
                    let v = pi_click(f64::from(k) / 100.0, p1, eta_s).unwrap();
                    assert!(v >= prev && v <= 1.0);
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn coincidence_form_matches_second_difference() {
        let tms = HeraldedTms::new(0.3, 0.1, 0.4);
        let g = |x: f64| 1.0 - tms.click(x);
        for a in [0.01, 0.1, 0.4, 0.5] {
            let direct = 1.0 - 2.0 * g(a) + g(2.0 * a);
            assert!(rel(tms.coincidence(a), direct) < 1e-10);
        }
    }

    #[test]
    fn memory_efficiency_examples() {
        let sp = SourceParams::experiment().with_read_factor(2.0 / 3.0);
        let base = sp.read_factor * sp.eta_i0;
        assert_eq!(memory_efficiency(0.0, &sp).unwrap(), base);
        assert!(rel(memory_efficiency(sp.tau_c, &sp).unwrap(), base / std::f64::consts::E) < 1e-15);
        assert!(rel(memory_efficiency(2.0 * sp.tau_c, &sp).unwrap(), base * (-4.0f64).exp()) < 1e-15);
        assert!(memory_efficiency(-1.0, &sp).is_err());
    }

    #[test]
    fn conditional_symmetric_and_bounded() {
        let sp = SourceParams::experiment().with_backgrounds(1e-3, 0.0);
        for tau in [0.0, 1e-6, 30e-6, 100e-6] {
            let c = conditional_probs(tau, &sp).unwrap();
            assert_eq!(c.p2_1, c.p3_1);
            assert!(c.p23_1 >= 0.0 && c.p23_1 <= c.p2_1 + c.p3_1);
        }
    }

    #[test]
    fn no_retrieval_means_no_clicks() {
        // exp(-(1e3)^2) underflows to zero
        let sp = SourceParams::experiment().with_tau_c(1e-9);
        let c = conditional_probs(1e-6, &sp).unwrap();
        assert_eq!((c.p2_1, c.p23_1), (0.0, 0.0));
        assert_eq!(c.alpha(), Err(Error::Undefined("alpha")));
    }

    #[test]
    fn alpha_increases_with_p1() {
        let base = SourceParams::experiment();
        let alpha = |p1: f64| conditional_probs(0.0, &base.with_p1(p1)).unwrap().alpha().unwrap();
        assert!(alpha(1e-4) < alpha(1e-3) && alpha(1e-3) < alpha(1e-2));
        // At eta_s = 0.08 alpha peaks near p1 = 0.27 (mean excitation ~ 5) and
        // then turns over; from eta_s = 0.1 upwards it rises on all of [1e-4, 0.3].
        for (eta_s, p1_max) in [(0.08, 0.25), (0.1, 0.3), (0.5, 0.3), (1.0, 0.3)] {
            let sp = SourceParams { eta_s, ..base };
            let mut prev = 0.0;
            for k in 0..200 {
                let p1 = 1e-4 * (p1_max / 1e-4f64).powf(f64::from(k) / 199.0);
                let a = conditional_probs(0.0, &sp.with_p1(p1)).unwrap().alpha().unwrap();
                assert!(a > prev, "eta_s={eta_s} p1={p1}");
                prev = a;
            }
        }
    }

    #[test]
    fn unconditional_examples() {
        // n = 0.2 and eta_i = 0.1: p1 = eta_s n / (1 + eta_s n) with eta_s = 0.5.
        let sp = SourceParams {
            p1: 0.1 / 1.1,
            eta_s: 0.5,
            eta_i0: 0.1,
            ..SourceParams::experiment()
        };
        let s = unconditional_probs(&sp, 0.0).unwrap();
        assert!(rel(s.p2, 0.009_900_990_099_009_901) < 1e-12);
        assert!(rel(s.p3, s.p2) == 0.0);
    }

    #[test]
    fn g_si_small_chi_limit() {
        let sp = SourceParams::experiment();
        let mut prev = f64::INFINITY;
        for p1 in [1e-3, 1e-4, 1e-5, 1e-6] {
            let s = unconditional_probs(&sp.with_p1(p1), 0.0).unwrap();
            let err = (s.g_si().unwrap() * p1 - sp.eta_s).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev / sp.eta_s < 1e-4);
    }

    #[test]
    fn g_si_tends_to_one_under_background() {
        let sp = SourceParams::experiment().with_backgrounds(1e-2, 0.0);
        let s = unconditional_probs(&sp, 5.0 * sp.tau_c).unwrap();
        assert!((s.g_si().unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn signal_background_mixture_reduces_to_plain_herald() {
        let sp = SourceParams::experiment().with_backgrounds(0.0, 0.0);
        let a = conditional_probs(0.0, &sp).unwrap();
        let b = conditional_probs(0.0, &sp.with_backgrounds(0.0, 1e-15)).unwrap();
        assert!(rel(a.p2_1, b.p2_1) < 1e-9 && rel(a.p23_1, b.p23_1) < 1e-9);
    }

    #[test]
    fn single_trial_protocol() {
        let sp = SourceParams::experiment().with_backgrounds(2e-4, 0.0);
        let obs = protocol_observables(&sp, 1).unwrap();
        let c = conditional_probs(0.0, &sp).unwrap();
        let bg = sp.bg_idler;
        assert!(rel(obs.p2, sp.p1 * c.p2_1 + (1.0 - sp.p1) * bg) < 1e-14);
        assert!(rel(obs.p23, sp.p1 * c.p23_1 + (1.0 - sp.p1) * bg * bg) < 1e-14);
        assert!(protocol_observables(&sp, 0).is_err());
    }

    #[test]
    fn ideal_memory_geometric_identity() {
        let sp = SourceParams::experiment().with_tau_c(f64::INFINITY);
        let c = conditional_probs(0.0, &sp).unwrap();
        for n in [1u32, 2, 10, 150, 1000, 7000] {
            let obs = protocol_observables(&sp, n).unwrap();
            let scale = 1.0 - (1.0 - sp.p1).powi(n as i32);
            assert!(rel(obs.p2, c.p2_1 * scale) < 1e-12);
            assert!(rel(obs.p23, c.p23_1 * scale) < 1e-12);
        }
    }

    #[test]
    fn storage_time_with_halt_offset() {
        let sp = SourceParams::experiment().with_halt_offset(1.5e-6);
        assert!(rel(storage_time(&sp, 150, 1).unwrap(), 149.0 * 300e-9 + 1.5e-6) < 1e-14);
        assert_eq!(storage_time(&SourceParams::experiment(), 10, 10).unwrap(), 0.0);
        assert!(storage_time(&SourceParams::experiment(), 10, 11).is_err());
    }
}
