//! Agreement between the closed form, the enumeration oracle and the
//! simulator, and convergence of the estimators.

use heralded_source::analytic::{protocol_observables, unconditional_probs};
use heralded_source::estimate::{estimate_observables, Observable, Tally};
use heralded_source::fock::{oracle_protocol_observables, oracle_source_statistics, required_n_max, DEFAULT_N_MAX};
use heralded_source::record::DetectionRecord;
use heralded_source::sim::{run_campaign, run_tally, ProtocolConfig, SourceMode};
use heralded_source::SourceParams;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

#[test]
fn three_routes_agree_on_protocol() {
    let sp = SourceParams::experiment().with_p1(0.01).with_backgrounds(2e-4, 1e-4);
    for n in [1, 7, 60] {
        let a = protocol_observables(&sp, n).unwrap();
        let o = oracle_protocol_observables(&sp, n, required_n_max(sp.n_mean(), DEFAULT_N_MAX)).unwrap();
        assert!(rel(a.p2, o.p2) < 1e-10 && rel(a.p23, o.p23) < 1e-10 && rel(a.herald, o.herald) < 1e-10);
        let est = run_tally(&ProtocolConfig::new(sp, n, 400_000, u64::from(n))).unwrap().estimates().unwrap();
        for (obs, v) in [
            (Observable::Herald, a.herald),
            (Observable::P2, a.p2),
            (Observable::P3, a.p3),
            (Observable::EtaD, a.eta_d()),
            (Observable::P2Cond, a.p2_h),
        ] {
            let e = est.get(obs).unwrap();
            assert!(e.z_score(v) < 4.5, "N={n} {obs}: {} +- {} vs {v}", e.value, e.std_error);
        }
    }
}

#[test]
fn three_routes_agree_on_characterization() {
    let sp = SourceParams::experiment().with_p1(0.08).with_backgrounds(1e-4, 0.0);
    let tau = 5e-6;
    let a = unconditional_probs(&sp, tau).unwrap();
    let o = oracle_source_statistics(&sp, tau, DEFAULT_N_MAX).unwrap();
    assert!(rel(a.p23, o.p23) < 1e-10 && rel(a.g_si().unwrap(), o.g_si().unwrap()) < 1e-10);
    let est = run_tally(&ProtocolConfig::characterization(sp, tau, 1_000_000, 3))
        .unwrap()
        .estimates()
        .unwrap();
    for (obs, v) in [
        (Observable::P2, a.p2),
        (Observable::P23, a.p23),
        (Observable::G2, a.idler_g2().unwrap()),
        (Observable::GSi, a.g_si().unwrap()),
        (Observable::Alpha, a.conditional.alpha().unwrap()),
    ] {
        let e = est.get(obs).unwrap();
        assert!(e.z_score(v) < 4.5, "{obs}: {} +- {} vs {v}", e.value, e.std_error);
    }
}

#[test]
fn deviations_shrink_with_shots() {
    let sp = SourceParams::experiment().with_p1(0.03);
    let exact = protocol_observables(&sp, 20).unwrap().eta_d();
    let mut errs = Vec::new();
    for shots in [100_000u64, 1_000_000, 10_000_000] {
        // Average |deviation| over a few seeds to keep the comparison stable.
        let mut dev = 0.0;
        for seed in 0..3 {
            let e = run_tally(&ProtocolConfig::new(sp, 20, shots, seed)).unwrap().estimates().unwrap();
            dev += (e.get(Observable::EtaD).unwrap().value - exact).abs();
        }
        errs.push(dev / 3.0);
    }
    assert!(errs[2] < errs[0], "{errs:?}");
    assert!(errs[2] < 4.0 * (exact / 1e7).sqrt(), "{errs:?}");
}

#[test]
fn conditional_estimates_ignore_unheralded_shots() {
    let sp = SourceParams::experiment().with_p1(0.02).with_backgrounds(5e-3, 0.0);
    let rec = run_campaign(&ProtocolConfig::new(sp, 10, 50_000, 8)).unwrap();
    let all = estimate_observables(&rec).unwrap();
    let heralded: Vec<_> = rec.entries().iter().filter(|e| e.herald_trial.is_some()).copied().collect();
    let only = DetectionRecord::new(*rec.header(), heralded).unwrap();
    let cut = estimate_observables(&only).unwrap();
    for o in [Observable::P2Cond, Observable::P3Cond, Observable::P23Cond, Observable::Alpha] {
        assert_eq!(all.get(o).map(|e| e.value), cut.get(o).map(|e| e.value), "{o}");
    }
}

#[test]
fn coherent_mode_is_poissonian_single_emitter_is_not() {
    let sp = SourceParams::experiment().with_p1(0.05);
    let coh = run_tally(&ProtocolConfig::characterization(sp, 80e-9, 2_000_000, 1).with_mode(SourceMode::Coherent))
        .unwrap()
        .estimates()
        .unwrap();
    let g2 = coh.get(Observable::G2).unwrap();
    assert!(g2.z_score(1.0) < 4.0, "{g2:?}");
    let single = SourceParams {
        eta_i0: 0.5,
        ..sp
    };
    let t: Tally = run_tally(&ProtocolConfig::new(single, 30, 200_000, 2).with_mode(SourceMode::SingleEmitter)).unwrap();
    assert_eq!(t.estimates().unwrap().get(Observable::Alpha).unwrap().value, 0.0);
}
