//! Physical parameters of one write/read channel.

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};

/// Parameters of the heralded source and its memory.
///
/// `p1` is the measured herald probability per write trial and is the primary
/// input; the mean excitation number is always derived from it. Times are in
/// seconds. `tau_c` may be `f64::INFINITY` for an ideal memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    pub p1: f64,
    pub eta_s: f64,
    /// Idler retrieval and detection efficiency at zero storage, before the 50:50 split.
    pub eta_i0: f64,
    pub tau_c: f64,
    pub t0: f64,
    /// Background click probability per idler detector per read gate.
    pub bg_idler: f64,
    /// Background click probability per signal (herald) gate.
    pub bg_signal: f64,
    /// Empirical scale on the idler efficiency.
    pub read_factor: f64,
    /// Constant added to every storage time of the feedback protocol.
    pub halt_offset: f64,
    /// Passive signal loss factor. Metadata only.
    pub meta_eps_s: Option<f64>,
    /// Passive idler loss factor. Metadata only.
    pub meta_eps_i: Option<f64>,
}

impl SourceParams {
    pub fn new(p1: f64, eta_s: f64, eta_i0: f64, tau_c: f64, t0: f64) -> Result<Self> {
        let sp = SourceParams {
            p1,
            eta_s,
            eta_i0,
            tau_c,
            t0,
            bg_idler: 0.0,
            bg_signal: 0.0,
            read_factor: 1.0,
            halt_offset: 0.0,
            meta_eps_s: None,
            meta_eps_i: None,
        };
        sp.validate()?;
        Ok(sp)
    }

    /// Measured values of the rubidium-ensemble experiment: p1 = 0.003,
    /// eta_s = 0.08, eta_i0 = 0.075, tau_c = 31.5 us, t0 = 300 ns,
    /// with passive losses eps_s = 0.3 and eps_i = 0.22.
    pub fn experiment() -> Self {
        SourceParams {
            p1: 0.003,
            eta_s: 0.08,
            eta_i0: 0.075,
            tau_c: 31.5e-6,
            t0: 300e-9,
            bg_idler: 0.0,
            bg_signal: 0.0,
            read_factor: 1.0,
            halt_offset: 0.0,
            meta_eps_s: Some(0.3),
            meta_eps_i: Some(0.22),
        }
    }

    pub fn with_p1(mut self, p1: f64) -> Self {
        self.p1 = p1;
        self
    }

    pub fn with_tau_c(mut self, tau_c: f64) -> Self {
        self.tau_c = tau_c;
        self
    }

    pub fn with_backgrounds(mut self, bg_idler: f64, bg_signal: f64) -> Self {
        self.bg_idler = bg_idler;
        self.bg_signal = bg_signal;
        self
    }

    pub fn with_read_factor(mut self, read_factor: f64) -> Self {
        self.read_factor = read_factor;
        self
    }

    pub fn with_halt_offset(mut self, halt_offset: f64) -> Self {
        self.halt_offset = halt_offset;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_range("p1", self.p1, self.p1 > 0.0 && self.p1 < 1.0, "(0, 1)")?;
        check_range("eta_s", self.eta_s, self.eta_s > 0.0 && self.eta_s <= 1.0, "(0, 1]")?;
        check_range("eta_i0", self.eta_i0, self.eta_i0 > 0.0 && self.eta_i0 <= 1.0, "(0, 1]")?;
        if !(self.tau_c > 0.0) {
            return Err(Error::Domain {
                name: "tau_c",
                value: self.tau_c,
                domain: "(0, inf]",
            });
        }
        check_range("t0", self.t0, self.t0 > 0.0, "(0, inf)")?;
        check_range("bg_idler", self.bg_idler, (0.0..1.0).contains(&self.bg_idler), "[0, 1)")?;
        check_range("bg_signal", self.bg_signal, (0.0..1.0).contains(&self.bg_signal), "[0, 1)")?;
        check_range(
            "read_factor",
            self.read_factor,
            self.read_factor > 0.0 && self.read_factor <= 1.0,
            "(0, 1]",
        )?;
        check_range("halt_offset", self.halt_offset, self.halt_offset >= 0.0, "[0, inf)")?;
        if self.p1 <= self.bg_signal {
            return Err(Error::Domain {
                name: "p1",
                value: self.p1,
                domain: "(bg_signal, 1): heralds cannot be rarer than background",
            });
        }
        for (name, eps) in [("meta_eps_s", self.meta_eps_s), ("meta_eps_i", self.meta_eps_i)] {
            if let Some(e) = eps {
                check_range(name, e, e > 0.0 && e <= 1.0, "(0, 1]")?;
            }
        }
        Ok(())
    }

    /// Herald probability due to real signal photons, with background heralds removed.
    pub fn true_herald_probability(&self) -> f64 {
        (self.p1 - self.bg_signal) / (1.0 - self.bg_signal)
    }

    /// Mean excitation number of the write process, accounting for signal background.
    pub fn n_mean(&self) -> f64 {
        let p = self.true_herald_probability();
        p / (self.eta_s * (1.0 - p))
    }

    /// Intrinsic signal efficiency eta_s / eps_s, when eps_s is known.
    pub fn intrinsic_eta_s(&self) -> Option<f64> {
        self.meta_eps_s.map(|e| self.eta_s / e)
    }

    /// Intrinsic idler efficiency eta_i0 / eps_i, when eps_i is known.
    pub fn intrinsic_eta_i(&self) -> Option<f64> {
        self.meta_eps_i.map(|e| self.eta_i0 / e)
    }
}
