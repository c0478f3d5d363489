use msflab_core::matrix::{mat_exp, mat_log, SquareMatrix};
use msflab_core::msf::PerturbationState;
use msflab_core::network::{graph_spectrum, CouplingGraph};
use msflab_core::oscillator::{ImpactOscillator, ImpactOscillatorParams, OscState};
use num_complex::Complex64;
use proptest::prelude::*;

fn mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn entries() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 4)
        .prop_filter("invertible", |e| (e[0] * e[3] - e[1] * e[2]).abs() > 1e-2)
}

proptest! {
    #[test]
    fn exp_inverts_log(e in entries()) {
        let m = SquareMatrix::from_real(2, &e);
        let back = mat_exp(&mat_log(&m).unwrap()).unwrap();
        prop_assert!((&back - &m).frobenius_norm() <= 1e-9 * m.frobenius_norm());
    }

    #[test]
    fn log_inverts_exp_for_small_generators(e in prop::collection::vec(-1.0..1.0f64, 4)) {
        // Eigenvalues have |Im| < pi here, so the principal branch applies.
        let a = SquareMatrix::from_real(2, &e);
        let back = mat_log(&mat_exp(&a).unwrap()).unwrap();
        prop_assert!((&back - &a).frobenius_norm() < 1e-9);
    }

    #[test]
    fn determinant_of_exponential(e in prop::collection::vec(-3.0..3.0f64, 9)) {
        let m = SquareMatrix::from_real(3, &e);
        let det = mat_exp(&m).unwrap().determinant();
        let want = m.trace().re.exp();
        prop_assert!((det - Complex64::new(want, 0.0)).norm() <= 1e-9 * want);
    }

    #[test]
    fn segment_propagator_is_a_semigroup(s in 0.0..5.0f64, t in 0.0..5.0f64) {
        let osc = ImpactOscillator::new(ImpactOscillatorParams::elastic()).unwrap();
        let joined = mul(osc.segment_propagator(t), osc.segment_propagator(s));
        let direct = osc.segment_propagator(s + t);
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((joined[i][j] - direct[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn impact_reverses_and_scales_velocity(v in 1e-6..5.0f64, tau in 0.0..100.0f64, r in 0.0..=1.0f64) {
        let p = ImpactOscillatorParams { restitution: r, ..ImpactOscillatorParams::inelastic() };
        let osc = ImpactOscillator::new(p).unwrap();
        let (after, record) = osc.apply_impact(&OscState::new(p.x_w, v, tau));
        prop_assert_eq!(after.x, p.x_w);
        prop_assert_eq!(after.tau, tau);
        prop_assert_eq!(after.v, -r * v);
        prop_assert_eq!(record.v_post, after.v);
    }

    #[test]
    fn renormalisation_does_not_change_the_exponent(
        e in entries(),
        scale in 1e-6..1e6f64,
        steps in 1usize..40,
    ) {
        let m = SquareMatrix::from_real(2, &e);
        let xi = vec![Complex64::new(0.3, 0.0), Complex64::new(-0.7, 0.0)];
        let mut unit = PerturbationState::new(xi.clone()).unwrap();
        let mut scaled = PerturbationState::new(xi.iter().map(|z| z * scale).collect()).unwrap();
        let mut raw = xi.clone();
        for _ in 0..steps {
            unit.advance(&m, 0.5).unwrap();
            scaled.advance(&m, 0.5).unwrap();
            raw = m.mul_vec(&raw);
        }
        let norm0 = xi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let direct = (norm / norm0).ln() / (0.5 * steps as f64);
        prop_assert!((unit.exponent() - scaled.exponent()).abs() < 1e-12);
        prop_assert!((unit.exponent() - direct).abs() < 1e-9 * (1.0 + direct.abs()));
    }

    #[test]
    fn zero_row_sum_graphs_have_a_zero_eigenvalue(
        n in 2usize..7,
        w in prop::collection::vec(0.0..2.0f64, 21),
    ) {
        let mut g = vec![0.0; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                g[i * n + j] = w[k];
                g[j * n + i] = w[k];
                k += 1;
            }
        }
        for i in 0..n {
            g[i * n + i] = -(0..n).filter(|&j| j != i).map(|j| g[i * n + j]).sum::<f64>();
        }
        let spectrum = graph_spectrum(&CouplingGraph::new(n, g).unwrap()).unwrap();
        prop_assert!(spectrum[0].norm() < 1e-9);
        prop_assert!(spectrum.iter().all(|z| z.im == 0.0 && z.re < 1e-9));
    }
}
