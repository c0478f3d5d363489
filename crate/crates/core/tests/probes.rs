use msflab_core::msf::CouplingMatrixH;
use msflab_core::oscillator::ImpactOscillatorParams;
use msflab_core::probe::{
    bifurcation_scan, probe_base_state, random_displacement, run_probe, run_probe_from, ProbeSettings,
};

fn short() -> ProbeSettings {
    ProbeSettings { max_periods: 300, record_window: 50, ..ProbeSettings::default() }
}

#[test]
fn unperturbed_pair_never_separates() {
    let p = ImpactOscillatorParams::elastic();
    let settings = ProbeSettings { perturbation_magnitude: 0.0, stop_on_sync: false, ..short() };
    let r = run_probe(&p, &CouplingMatrixH::position_spring(), &settings).unwrap();
    assert!(r.synchronized);
    assert_eq!(r.peak_difference, 0.0);
}

#[test]
fn swapping_the_nodes_gives_the_same_maxima() {
    let p = ImpactOscillatorParams::elastic();
    let h = CouplingMatrixH::position_spring();
    let settings = ProbeSettings { sigma: 0.4, ..short() };
    let base = probe_base_state(&p, &settings).unwrap();
    let d = random_displacement(3, 0, 1e-3);
    let a = run_probe_from(&p, &h, &settings, &base, [[0.0, 0.0], d]).unwrap();
    let b = run_probe_from(&p, &h, &settings, &base, [d, [0.0, 0.0]]).unwrap();
    assert_eq!(a.synchronized, b.synchronized);
    assert_eq!(a.local_maxima, b.local_maxima);
    assert!(!a.local_maxima.is_empty());
}

#[test]
fn same_seed_same_run() {
    let p = ImpactOscillatorParams::elastic();
    let h = CouplingMatrixH::position_spring();
    let settings = ProbeSettings { sigma: 0.05, rng_seed: 11, ..short() };
    assert_eq!(run_probe(&p, &h, &settings).unwrap(), run_probe(&p, &h, &settings).unwrap());
    let other = ProbeSettings { rng_seed: 12, ..settings.clone() };
    assert_ne!(
        run_probe(&p, &h, &settings).unwrap().local_maxima,
        run_probe(&p, &h, &other).unwrap().local_maxima
    );
}

#[test]
fn uncoupled_elastic_pair_stays_apart() {
    let p = ImpactOscillatorParams::elastic();
    let cols = bifurcation_scan(&p, &CouplingMatrixH::position_spring(), &[0.0], &ProbeSettings::default()).unwrap();
    let r = cols[0].result.as_ref().unwrap();
    assert!(!r.synchronized);
    let mut maxima = cols[0].maxima().unwrap();
    maxima.sort_by(f64::total_cmp);
    maxima.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
    assert!(maxima.len() > 5, "{maxima:?}");
}

#[test]
fn stable_inelastic_couplings_collapse_to_zero() {
    let p = ImpactOscillatorParams::inelastic();
    let cols =
        bifurcation_scan(&p, &CouplingMatrixH::position_spring(), &[0.3, 0.45, 0.55], &ProbeSettings::default())
            .unwrap();
    for c in cols {
        let r = c.result.as_ref().unwrap();
        assert!(r.synchronized, "sigma {}", c.sigma);
        assert!(r.sync_time.is_some());
        assert_eq!(c.maxima().unwrap(), vec![0.0]);
    }
}
