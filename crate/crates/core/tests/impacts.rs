use msflab_core::jacobian::event_window_jacobian;
use msflab_core::oscillator::{EventRecord, ImpactOscillator, ImpactOscillatorParams, OscState, Step};

type M2 = [[f64; 2]; 2];

fn mul(a: M2, b: M2) -> M2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Damped-oscillator fundamental matrix over `t`, written out in closed form.
fn free_flow(zeta: f64, t: f64) -> M2 {
    let wd = (1.0 - zeta * zeta).sqrt();
    let (c, s, e) = ((wd * t).cos(), (wd * t).sin(), (-zeta * t).exp());
    [
        [e * (c + zeta * s / wd), e * s / wd],
        [-e * s / wd, e * (c - zeta * s / wd)],
    ]
}

fn saltation(p: &ImpactOscillatorParams, e: &EventRecord) -> M2 {
    let g = -p.x_w + p.f * (p.eta * e.tau_c).cos();
    let r = p.restitution;
    [[-r, 0.0], [(1.0 + r) * g / e.v_pre, -r]]
}

/// State at the start of the first scan step that holds an impact.
fn before_first_impact(osc: &ImpactOscillator) -> OscState {
    let mut s = osc.simulate(&OscState::origin(), 40.0 * osc.period()).unwrap().end;
    loop {
        match osc.step(&s, osc.scan_step()) {
            Step::Free(next) => s = next,
            Step::Impact(_) => return s,
        }
    }
}

#[test]
fn window_jacobian_matches_saltation_composition() {
    for p in [ImpactOscillatorParams::elastic(), ImpactOscillatorParams::inelastic()] {
        let osc = ImpactOscillator::new(p).unwrap();
        let s = before_first_impact(&osc);
        let window = osc.scan_step();
        let traj = osc.simulate(&s, window).unwrap();
        assert_eq!(traj.events.len(), 1);
        let e = traj.events[0];
        let want = mul(
            free_flow(p.zeta, s.tau + window - e.tau_c),
            mul(saltation(&p, &e), free_flow(p.zeta, e.tau_c - s.tau)),
        );
        let est = event_window_jacobian(&osc, &s, window, 1e-7).unwrap();
        assert!(est.consistent);
        for i in 0..2 {
            for j in 0..2 {
                let got = est.phi[(i, j)].re;
                assert!((got - want[i][j]).abs() < 1e-5 * (1.0 + want[i][j].abs()), "{got} vs {}", want[i][j]);
            }
        }
        let det = est.phi.determinant().re;
        let want_det = p.restitution.powi(2) * (-2.0 * p.zeta * window).exp();
        assert!((det - want_det).abs() < 1e-5, "det {det} vs {want_det}");
    }
}

#[test]
fn impacts_land_on_the_wall_with_reversed_velocity() {
    let p = ImpactOscillatorParams::inelastic();
    let osc = ImpactOscillator::new(p).unwrap();
    let traj = osc.simulate(&OscState::origin(), 50.0 * osc.period()).unwrap();
    assert!(!traj.events.is_empty());
    for e in &traj.events {
        assert!(e.v_pre > 0.0);
        assert_eq!(e.v_post, -p.restitution * e.v_pre);
    }
    assert!(traj.events.windows(2).all(|w| w[0].tau_c < w[1].tau_c));
    assert!(traj.end.x <= p.x_w);
}

#[test]
fn splitting_a_run_does_not_change_it() {
    let osc = ImpactOscillator::new(ImpactOscillatorParams::elastic()).unwrap();
    let start = OscState::new(0.5, 0.0, 0.0);
    let whole = osc.simulate(&start, 30.0).unwrap();
    let first = osc.simulate(&start, 12.5).unwrap();
    let second = osc.simulate(&first.end, 17.5).unwrap();
    assert_eq!(first.events.len() + second.events.len(), whole.events.len());
    assert!((second.end.x - whole.end.x).abs() < 1e-9);
    assert!((second.end.v - whole.end.v).abs() < 1e-9);
}
