//! Seeded Monte-Carlo simulation of the feedback protocol at the level of
//! individual write trials and photoelectric events.
//!
//! Shots are split into shards of `shard_size`. Shard `k` draws from a
//! ChaCha8 stream selected by `set_stream(k)` on a generator seeded with the
//! master seed, so the output depends only on `(seed, config)` and never on
//! how shards are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::{self, memory_efficiency, storage_time};
use crate::error::{Error, Result};
use crate::estimate::Tally;
use crate::params::SourceParams;
use crate::record::{DetectionRecord, GateSchedule, GateWindows, RecordHeader, RecordWriter, ShotEntry, TICK_SECONDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceMode {
    /// Two-mode-squeezed write process: thermal excitation number.
    Thermal,
    /// Weak coherent read-out at the thermal protocol's detected mean.
    Coherent,
    /// Exactly one excitation per write trial.
    SingleEmitter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Experiment {
    /// Up to N write trials; halt on herald, clean on failure, read at `N t0`.
    Protocol,
    /// One write trial per shot, always read after `storage_time` seconds.
    Characterization { storage_time: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub source: SourceParams,
    pub n_trials: u32,
    pub shots: u64,
    pub seed: u64,
    pub source_mode: SourceMode,
    pub experiment: Experiment,
    pub gates: GateWindows,
    pub shard_size: u64,
    /// Upper bound on the in-memory record size, in bytes.
    pub memory_budget: usize,
}

impl ProtocolConfig {
    pub fn new(source: SourceParams, n_trials: u32, shots: u64, seed: u64) -> Self {
        ProtocolConfig {
            source,
            n_trials,
            shots,
            seed,
            source_mode: SourceMode::Thermal,
            experiment: Experiment::Protocol,
            gates: GateWindows::default(),
            shard_size: 65_536,
            memory_budget: 1 << 30,
        }
    }

    /// Single write trial per shot, read after `storage_time`.
    pub fn characterization(source: SourceParams, storage_time: f64, shots: u64, seed: u64) -> Self {
        ProtocolConfig {
            experiment: Experiment::Characterization { storage_time },
            ..ProtocolConfig::new(source, 1, shots, seed)
        }
    }

    pub fn with_mode(mut self, mode: SourceMode) -> Self {
        self.source_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if self.shard_size == 0 {
            return Err(Error::Config("shard_size must be positive".into()));
        }
        if let Experiment::Characterization { storage_time } = self.experiment {
            if !(storage_time >= 0.0 && storage_time.is_finite()) {
                return Err(Error::Config(format!("storage time {storage_time} must be finite and >= 0")));
            }
            if self.n_trials != 1 {
                return Err(Error::Config("characterization runs use one trial per shot".into()));
            }
        }
        self.schedule().validate()
    }

    pub fn trial_period_ticks(&self) -> u32 {
        to_ticks(self.source.t0) as u32
    }

    pub fn schedule(&self) -> GateSchedule {
        let read_start = match self.experiment {
            Experiment::Protocol => {
                u64::from(self.n_trials - 1) * u64::from(self.trial_period_ticks()) + to_ticks(self.source.halt_offset)
            }
            Experiment::Characterization { storage_time } => to_ticks(storage_time),
        };
        GateSchedule {
            n_trials: self.n_trials,
            trial_period: self.trial_period_ticks(),
            read_start,
            windows: self.gates,
        }
    }

    /// Hash of everything that determines the record except the shot count
    /// and the memory budget, so partial campaigns share it.
    pub fn config_hash(&self) -> u64 {
        #[derive(Serialize)]
        struct Hashed<'a> {
            source: &'a SourceParams,
            n_trials: u32,
            source_mode: SourceMode,
            experiment: Experiment,
            gates: GateWindows,
            shard_size: u64,
        }
        let h = Hashed {
            source: &self.source,
            n_trials: self.n_trials,
            source_mode: self.source_mode,
            experiment: self.experiment,
            gates: self.gates,
            shard_size: self.shard_size,
        };
        let json = serde_json::to_vec(&h).expect("config serializes");
        let digest = Sha256::digest(&json);
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    pub fn n_shards(&self) -> u64 {
        self.shots.div_ceil(self.shard_size)
    }
}

fn to_ticks(seconds: f64) -> u64 {
    (seconds / TICK_SECONDS).round() as u64
}

/// Result of one write trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteOutcome {
    pub heralded: bool,
    pub n: u32,
}

/// Precomputed sampling constants for the write process.
#[derive(Debug, Clone)]
pub struct WriteSampler {
    mode: SourceMode,
    n_mean: f64,
    /// `n / (1 + n)`, the thermal ratio.
    ratio: f64,
    ln_ratio: f64,
    ln_miss: f64,
    bg_signal: f64,
    poisson: Option<Poisson<f64>>,
}

impl WriteSampler {
    pub fn new(sp: &SourceParams, mode: SourceMode) -> Self {
        let n_mean = sp.n_mean();
        let ratio = n_mean / (1.0 + n_mean);
        WriteSampler {
            mode,
            n_mean,
            ratio,
            ln_ratio: ratio.ln(),
            ln_miss: (-sp.eta_s).ln_1p(),
            bg_signal: sp.bg_signal,
            poisson: (n_mean > 0.0).then(|| Poisson::new(n_mean).expect("positive mean")),
        }
    }

    pub fn n_mean(&self) -> f64 {
        self.n_mean
    }

    fn sample_thermal<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        // Inversion of P(n >= k) = ratio^k with u in (0, 1].
        let u = 1.0 - rng.random::<f64>();
        if u > self.ratio {
            0
        } else {
            (u.ln() / self.ln_ratio).floor() as u32
        }
    }
}

/// One write pulse: draw the excitation number, then herald on at least one
/// detected signal photon or a signal background click.
pub fn simulate_write_trial<R: Rng + ?Sized>(rng: &mut R, sampler: &WriteSampler) -> WriteOutcome {
    let n = match sampler.mode {
        SourceMode::Thermal => sampler.sample_thermal(rng),
        SourceMode::Coherent => sampler.poisson.as_ref().map_or(0, |p| p.sample(rng) as u32),
        SourceMode::SingleEmitter => 1,
    };
    let mut heralded = false;
    if n > 0 {
        let p_click = -(f64::from(n) * sampler.ln_miss).exp_m1();
        heralded = rng.random::<f64>() < p_click;
    }
    if !heralded && sampler.bg_signal > 0.0 {
        heralded = rng.random::<f64>() < sampler.bg_signal;
    }
    WriteOutcome { heralded, n }
}

/// Outcome of one protocol shot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotOutcome {
    pub herald_trial: Option<u32>,
    /// Excitations in memory at read-out (zero after cleaning).
    pub stored_n: u32,
    /// Seconds between the heralding write pulse and the read; `None` when
    /// nothing heralded.
    pub storage_time: Option<f64>,
    pub clicks_d2: bool,
    pub clicks_d3: bool,
    pub d1_tick: Option<u64>,
    pub d2_tick: Option<u64>,
    pub d3_tick: Option<u64>,
}

/// Per-configuration constants shared by all shots.
#[derive(Debug, Clone)]
pub struct ShotSimulator {
    experiment: Experiment,
    mode: SourceMode,
    sampler: WriteSampler,
    n_trials: u32,
    /// Idler efficiency per herald trial (protocol) or the single storage time.
    eta: Vec<f64>,
    storage: Vec<f64>,
    bg_idler: f64,
    /// Per-detector click probability of the coherent read-out.
    coherent_click: f64,
    schedule: GateSchedule,
}

impl ShotSimulator {
    pub fn new(cfg: &ProtocolConfig) -> Result<Self> {
        cfg.validate()?;
        let sp = &cfg.source;
        let (storage, matched) = match cfg.experiment {
            Experiment::Protocol => {
                let storage = (1..=cfg.n_trials)
                    .map(|j| storage_time(sp, cfg.n_trials, j))
                    .collect::<Result<Vec<_>>>()?;
                (storage, analytic::protocol_observables(sp, cfg.n_trials)?.p2)
            }
            Experiment::Characterization { storage_time } => {
                (vec![storage_time], analytic::unconditional_probs(sp, storage_time)?.p2)
            }
        };
        let eta = storage
            .iter()
            .map(|&t| memory_efficiency(t, sp))
            .collect::<Result<Vec<_>>>()?;
        let coherent_click = ((matched - sp.bg_idler) / (1.0 - sp.bg_idler)).max(0.0);
        Ok(ShotSimulator {
            experiment: cfg.experiment,
            mode: cfg.source_mode,
            sampler: WriteSampler::new(sp, cfg.source_mode),
            n_trials: cfg.n_trials,
            eta,
            storage,
            bg_idler: sp.bg_idler,
            coherent_click,
            schedule: cfg.schedule(),
        })
    }

    fn read<R: Rng + ?Sized>(&self, rng: &mut R, n: u32, eta: f64) -> (bool, bool) {
        let (mut d2, mut d3) = (false, false);
        if self.mode == SourceMode::Coherent {
            d2 = rng.random::<f64>() < self.coherent_click;
            d3 = rng.random::<f64>() < self.coherent_click;
        } else {
            let half = eta / 2.0;
            for _ in 0..n {
                let u = rng.random::<f64>();
                if u < half {
                    d2 = true;
                } else if u < eta {
                    d3 = true;
                }
            }
        }
        if self.bg_idler > 0.0 {
            d2 |= rng.random::<f64>() < self.bg_idler;
            d3 |= rng.random::<f64>() < self.bg_idler;
        }
        (d2, d3)
    }

    pub fn simulate_shot<R: Rng + ?Sized>(&self, rng: &mut R) -> ShotOutcome {
        let (herald_trial, stored_n, eta, storage) = match self.experiment {
            Experiment::Protocol => {
                let mut found = None;
                for j in 1..=self.n_trials {
                    let w = simulate_write_trial(rng, &self.sampler);
                    if w.heralded {
                        found = Some((j, w.n));
                        break;
                    }
                }
                match found {
                    Some((j, n)) => {
                        let k = (j - 1) as usize;
                        (Some(j), n, self.eta[k], Some(self.storage[k]))
                    }
                    None => (None, 0, 0.0, None),
                }
            }
            Experiment::Characterization { .. } => {
                let w = simulate_write_trial(rng, &self.sampler);
                (w.heralded.then_some(1), w.n, self.eta[0], Some(self.storage[0]))
            }
        };
        let (clicks_d2, clicks_d3) = self.read(rng, stored_n, eta);
        let s = &self.schedule;
        ShotOutcome {
            herald_trial,
            stored_n: if self.mode == SourceMode::Coherent { 0 } else { stored_n },
            storage_time: herald_trial.and(storage),
            clicks_d2,
            clicks_d3,
            d1_tick: herald_trial.map(|j| s.d1_tick(j)),
            d2_tick: clicks_d2.then(|| s.d2_tick()),
            d3_tick: clicks_d3.then(|| s.d3_tick()),
        }
    }
}

impl ShotOutcome {
    fn entry(&self, shot: u64) -> ShotEntry {
        ShotEntry {
            shot,
            herald_trial: self.herald_trial,
            d1: self.d1_tick,
            d2: self.d2_tick,
            d3: self.d3_tick,
        }
    }
}

/// Convenience wrapper: one shot from a fresh simulator.
pub fn simulate_shot<R: Rng + ?Sized>(rng: &mut R, cfg: &ProtocolConfig) -> Result<ShotOutcome> {
    Ok(ShotSimulator::new(cfg)?.simulate_shot(rng))
}

fn shard_rng(seed: u64, shard: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    rng
}

fn shard_shots(cfg: &ProtocolConfig, shard: u64) -> std::ops::Range<u64> {
    let start = shard * cfg.shard_size;
    start..(start + cfg.shard_size).min(cfg.shots)
}

fn run_shard(sim: &ShotSimulator, cfg: &ProtocolConfig, shard: u64) -> Vec<ShotEntry> {
    let mut rng = shard_rng(cfg.seed, shard);
    shard_shots(cfg, shard)
        .filter_map(|shot| {
            let e = sim.simulate_shot(&mut rng).entry(shot);
            (!e.is_empty()).then_some(e)
        })
        .collect()
}

fn tally_shard(sim: &ShotSimulator, cfg: &ProtocolConfig, shard: u64) -> Tally {
    let mut rng = shard_rng(cfg.seed, shard);
    let mut t = Tally::default();
    for _ in shard_shots(cfg, shard) {
        let o = sim.simulate_shot(&mut rng);
        t.add(o.herald_trial.is_some(), o.clicks_d2, o.clicks_d3);
    }
    t
}

const SHARDS_PER_BATCH: u64 = 64;

/// Runs shards `shards` of the campaign and returns their gated record.
pub fn run_shards(cfg: &ProtocolConfig, shards: std::ops::Range<u64>) -> Result<DetectionRecord> {
    let sim = ShotSimulator::new(cfg)?;
    let shards = shards.start.min(cfg.n_shards())..shards.end.min(cfg.n_shards());
    let first_shot = (shards.start * cfg.shard_size).min(cfg.shots);
    let end_shot = (shards.end * cfg.shard_size).min(cfg.shots);
    let header = RecordHeader::new(cfg.config_hash(), cfg.seed, first_shot, end_shot - first_shot, cfg.schedule());
    let mut entries: Vec<ShotEntry> = Vec::new();
    let mut start = shards.start;
    while start < shards.end {
        let end = (start + SHARDS_PER_BATCH).min(shards.end);
        let batch: Vec<Vec<ShotEntry>> = (start..end).into_par_iter().map(|k| run_shard(&sim, cfg, k)).collect();
        for b in batch {
            entries.extend(b);
        }
        let needed = entries.len() * std::mem::size_of::<ShotEntry>();
        if needed > cfg.memory_budget {
            return Err(Error::MemoryBudget {
                needed,
                budget: cfg.memory_budget,
            });
        }
        start = end;
    }
    Ok(DetectionRecord::from_parts_unchecked(header, entries))
}

/// Runs the whole campaign in memory.
pub fn run_campaign(cfg: &ProtocolConfig) -> Result<DetectionRecord> {
    run_shards(cfg, 0..cfg.n_shards())
}

/// Runs the campaign on a dedicated pool of `workers` threads.
pub fn run_campaign_with_workers(cfg: &ProtocolConfig, workers: usize) -> Result<DetectionRecord> {
    pool(workers)?.install(|| run_campaign(cfg))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))
}

/// Streams the campaign record to `out` batch by batch, without holding it in
/// memory. Returns the tally of all shots.
pub fn run_campaign_to_writer<W: std::io::Write>(cfg: &ProtocolConfig, out: W) -> Result<Tally> {
    let sim = ShotSimulator::new(cfg)?;
    let header = RecordHeader::new(cfg.config_hash(), cfg.seed, 0, cfg.shots, cfg.schedule());
    let mut writer = RecordWriter::new(out, header)?;
    let mut tally = Tally::default();
    let mut start = 0;
    while start < cfg.n_shards() {
        let end = (start + SHARDS_PER_BATCH).min(cfg.n_shards());
        let batch: Vec<Vec<ShotEntry>> = (start..end).into_par_iter().map(|k| run_shard(&sim, cfg, k)).collect();
        for e in batch.iter().flatten() {
            writer.push(e)?;
            tally.add(e.herald_trial.is_some(), e.d2.is_some(), e.d3.is_some());
        }
        start = end;
    }
    writer.finish()?;
    tally.add_empty(cfg.shots - tally.shots());
    Ok(tally)
}

/// Runs the campaign keeping only cell counts. Produces the same tally as
/// estimating from [`run_campaign`]'s record.
pub fn run_tally(cfg: &ProtocolConfig) -> Result<Tally> {
    let sim = ShotSimulator::new(cfg)?;
    Ok((0..cfg.n_shards())
        .into_par_iter()
        .map(|k| tally_shard(&sim, cfg, k))
        .reduce(Tally::default, |a, b| a.merge(&b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::Observable;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn saturated_herald() {
        // eta_s = 1 and n = 1000: a miss needs the n = 0 outcome, probability 1/1001.
        let sp = SourceParams {
            p1: 1000.0 / 1001.0,
            eta_s: 1.0,
            ..SourceParams::experiment()
        };
        let s = WriteSampler::new(&sp, SourceMode::Thermal);
        assert!((s.n_mean() - 1000.0).abs() < 1e-9);
        let mut r = rng(1);
        let hits = (0..100_000).filter(|_| simulate_write_trial(&mut r, &s).heralded).count();
        assert!(hits as f64 / 1e5 > 0.997);

        // Coherent mode: P(n = 0) = exp(-1000).
        let s = WriteSampler::new(&sp, SourceMode::Coherent);
        assert!((0..10_000).all(|_| simulate_write_trial(&mut r, &s).heralded));
    }

    #[test]
    fn write_trials_are_deterministic() {
        let s = WriteSampler::new(&SourceParams::experiment().with_p1(0.2), SourceMode::Thermal);
        let (mut a, mut b) = (rng(9), rng(9));
        for _ in 0..10_000 {
            assert_eq!(simulate_write_trial(&mut a, &s), simulate_write_trial(&mut b, &s));
        }
    }

    #[test]
    fn thermal_sampler_matches_distribution() {
        let sp = SourceParams::experiment().with_p1(0.3);
        let s = WriteSampler::new(&sp, SourceMode::Thermal);
        let n = s.n_mean();
        let q = n / (1.0 + n);
        let mut r = rng(3);
        let trials = 200_000;
        let mut hist = [0u64; 6];
        for _ in 0..trials {
            let k = s.sample_thermal(&mut r) as usize;
            hist[k.min(5)] += 1;
        }
        for (k, &c) in hist.iter().enumerate().take(5) {
            let p = (1.0 - q) * q.powi(k as i32);
            let sd = (p * (1.0 - p) / trials as f64).sqrt();
            assert!((c as f64 / trials as f64 - p).abs() < 4.0 * sd, "k={k}");
        }
    }

    #[test]
    fn herald_rate_matches_p1() {
        let sp = SourceParams::experiment().with_p1(0.05).with_backgrounds(0.0, 0.01);
        let s = WriteSampler::new(&sp, SourceMode::Thermal);
        let mut r = rng(5);
        let trials = 1_000_000;
        let hits = (0..trials).filter(|_| simulate_write_trial(&mut r, &s).heralded).count();
        let sd = (sp.p1 * (1.0 - sp.p1) / trials as f64).sqrt();
        assert!((hits as f64 / trials as f64 - sp.p1).abs() < 4.0 * sd);
    }

    #[test]
    fn shot_invariants() {
        let sp = SourceParams::experiment().with_p1(0.05).with_backgrounds(0.01, 0.0);
        let cfg = ProtocolConfig::new(sp, 20, 1, 0);
        let sim = ShotSimulator::new(&cfg).unwrap();
        let s = cfg.schedule();
        let mut r = rng(8);
        for _ in 0..20_000 {
            let o = sim.simulate_shot(&mut r);
            match o.herald_trial {
                Some(j) => {
                    let expected = f64::from(20 - j) * sp.t0;
                    assert!((o.storage_time.unwrap() - expected).abs() < 1e-15);
                    assert_eq!(o.d1_tick, Some(s.d1_tick(j)));
                    assert!(o.stored_n >= 1);
                }
                None => {
                    assert_eq!(o.stored_n, 0);
                    assert!(o.storage_time.is_none() && o.d1_tick.is_none());
                }
            }
            assert_eq!(o.d2_tick.is_some(), o.clicks_d2);
        }
    }

    #[test]
    fn single_emitter_never_double_clicks() {
        let sp = SourceParams {
            eta_i0: 1.0,
            ..SourceParams::experiment().with_p1(0.08)
        };
        let cfg = ProtocolConfig::new(sp, 5, 100_000, 4).with_mode(SourceMode::SingleEmitter);
        let t = run_tally(&cfg).unwrap();
        assert_eq!(t.count(true, true, true) + t.count(false, true, true), 0);
        assert!(t.count(true, true, false) > 0);
    }

    #[test]
    fn tally_matches_record() {
        let sp = SourceParams::experiment().with_p1(0.02).with_backgrounds(1e-3, 1e-4);
        let mut cfg = ProtocolConfig::new(sp, 30, 50_000, 77);
        cfg.shard_size = 4096;
        let rec = run_campaign(&cfg).unwrap();
        assert_eq!(Tally::from_record(&rec), run_tally(&cfg).unwrap());
        assert_eq!(DetectionRecord::new(*rec.header(), rec.entries().to_vec()).unwrap(), rec);
    }

    #[test]
    fn halves_merge_into_full_campaign() {
        let mut cfg = ProtocolConfig::new(SourceParams::experiment().with_p1(0.02), 10, 10_000, 3);
        cfg.shard_size = 1000;
        let full = run_campaign(&cfg).unwrap();
        let merged = run_shards(&cfg, 0..4).unwrap().merge(run_shards(&cfg, 4..10).unwrap()).unwrap();
        assert_eq!(merged, full);
        assert_eq!(merged.to_bytes(), full.to_bytes());
    }

    #[test]
    fn zero_shots_gives_empty_record() {
        let cfg = ProtocolConfig::new(SourceParams::experiment(), 10, 0, 3);
        let rec = run_campaign(&cfg).unwrap();
        assert_eq!(rec.header().shot_count, 0);
        let bytes = rec.to_bytes();
        assert_eq!(DetectionRecord::read_from(&mut bytes.as_slice()).unwrap(), rec);
    }

    #[test]
    fn memory_budget_is_enforced() {
        let mut cfg = ProtocolConfig::new(SourceParams::experiment().with_p1(0.3), 10, 100_000, 3);
        cfg.memory_budget = 1024;
        assert!(matches!(run_campaign(&cfg), Err(Error::MemoryBudget { .. })));
        let mut buf = Vec::new();
        let tally = run_campaign_to_writer(&cfg, &mut buf).unwrap();
        let rec = DetectionRecord::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(Tally::from_record(&rec), tally);
    }

    #[test]
    fn streamed_equals_in_memory() {
        let mut cfg = ProtocolConfig::new(SourceParams::experiment().with_p1(0.01), 50, 20_000, 12);
        cfg.shard_size = 3000;
        let mut buf = Vec::new();
        run_campaign_to_writer(&cfg, &mut buf).unwrap();
        assert_eq!(buf, run_campaign(&cfg).unwrap().to_bytes());
    }

    #[test]
    fn characterization_matches_source_statistics() {
        let sp = SourceParams::experiment().with_p1(0.05);
        let cfg = ProtocolConfig::characterization(sp, 1e-6, 2_000_000, 21);
        let est = run_tally(&cfg).unwrap().estimates().unwrap();
        let a = analytic::unconditional_probs(&sp, 1e-6).unwrap();
        let checks = [
            (Observable::Herald, a.herald),
            (Observable::P2, a.p2),
            (Observable::P2Cond, a.conditional.p2_1),
            (Observable::P23Cond, a.conditional.p23_1),
            (Observable::GSi, a.g_si().unwrap()),
        ];
        for (o, v) in checks {
            let e = est.get(o).unwrap();
            assert!(e.z_score(v) < 4.0, "{o}: {} vs {v} ({})", e.value, e.std_error);
        }
    }

    #[test]
    fn config_hash_ignores_shot_count() {
        let a = ProtocolConfig::new(SourceParams::experiment(), 10, 100, 1);
        let b = ProtocolConfig { shots: 7, ..a.clone() };
        let c = ProtocolConfig { n_trials: 11, ..a.clone() };
        assert_eq!(a.config_hash(), b.config_hash());
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn tick_layout() {
        let cfg = ProtocolConfig::new(SourceParams::experiment(), 150, 1, 0);
        let s = cfg.schedule();
        assert_eq!(s.trial_period, 150);
        assert_eq!(s.read_start, 149 * 150);
        assert_eq!(s.d1_tick(1), 30);
        assert_eq!(s.d2_tick(), 149 * 150 + 25);
    }
}
