//! Trajectory Jacobians from finite perturbations of the initial condition.
//!
//! For a flow map `phi_t`, column `i` of the estimate is
//! `(phi_t(x0 + delta e_i) - phi_t(x0)) / delta` with `e_i` the standard
//! basis. Nothing about the flow needs to be differentiable, only continuous
//! across the perturbation, so the same estimator works over windows that
//! contain impacts. Whether the perturbed trajectories saw the same number of
//! events as the central one is recorded, not corrected.
//!
//! The quotient divides by the step actually taken, `(x0 + delta) - x0` in
//! floating point, and a flow may supply the numerator more accurately than
//! by subtracting two end states. The oscillator does so on windows without
//! impacts, where the flow is affine.

use crate::error::{MsfError, Result};
use crate::matrix::{SquareMatrix, SINGULARITY_THRESHOLD};
use crate::oscillator::{ImpactOscillator, OscState};

/// Default perturbation size.
pub const DEFAULT_DELTA: f64 = 1e-7;

/// A deterministic flow: initial state and duration to final state and the
/// number of events passed on the way.
pub trait FlowMap {
    fn evaluate(&self, x0: &[f64], t: f64) -> Result<(Vec<f64>, usize)>;

    /// `phi_t(x0 + step) - phi_t(x0)` given the central result, with the
    /// event count of the displaced trajectory.
    fn difference(
        &self,
        x0: &[f64],
        step: &[f64],
        t: f64,
        center: &(Vec<f64>, usize),
    ) -> Result<(Vec<f64>, usize)> {
        let shifted: Vec<f64> = x0.iter().zip(step).map(|(a, b)| a + b).collect();
        let (end, events) = self.evaluate(&shifted, t)?;
        check_finite(&end)?;
        Ok((end.iter().zip(&center.0).map(|(a, b)| a - b).collect(), events))
    }
}

impl<F> FlowMap for F
where
    F: Fn(&[f64], f64) -> Result<(Vec<f64>, usize)>,
{
    fn evaluate(&self, x0: &[f64], t: f64) -> Result<(Vec<f64>, usize)> {
        self(x0, t)
    }
}

/// The impact oscillator started at a fixed time `tau0`.
#[derive(Clone, Copy, Debug)]
pub struct ImpactFlow<'a> {
    pub oscillator: &'a ImpactOscillator,
    pub tau0: f64,
}

impl FlowMap for ImpactFlow<'_> {
    fn evaluate(&self, x0: &[f64], t: f64) -> Result<(Vec<f64>, usize)> {
        let start = OscState::new(x0[0], x0[1], self.tau0);
        let (end, events) = self.oscillator.advance_counting(&start, t)?;
        Ok((vec![end.x, end.v], events))
    }

    fn difference(
        &self,
        x0: &[f64],
        step: &[f64],
        t: f64,
        center: &(Vec<f64>, usize),
    ) -> Result<(Vec<f64>, usize)> {
        let shifted = [x0[0] + step[0], x0[1] + step[1]];
        let (end, events) = self.evaluate(&shifted, t)?;
        check_finite(&end)?;
        if events == 0 && center.1 == 0 {
            let m = self.oscillator.segment_propagator(t);
            let d = [shifted[0] - x0[0], shifted[1] - x0[1]];
            let out = (0..2).map(|i| m[i][0] * d[0] + m[i][1] * d[1]).collect();
            return Ok((out, 0));
        }
        Ok((end.iter().zip(&center.0).map(|(a, b)| a - b).collect(), events))
    }
}

#[derive(Clone, Debug)]
pub struct JacobiEstimate {
    pub phi: SquareMatrix,
    pub delta_used: f64,
    /// Event count of the central trajectory followed by one per basis direction.
    pub event_counts: Vec<usize>,
    /// All perturbed trajectories passed the same number of events as the central one.
    pub consistent: bool,
}

pub fn estimate_jacobian(
    flow: &impl FlowMap,
    x0: &[f64],
    t: f64,
    delta: f64,
) -> Result<JacobiEstimate> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(MsfError::invalid(format!("perturbation delta = {delta} must be positive")));
    }
    estimate_with_steps(flow, x0, t, &vec![delta; x0.len()], delta)
}

/// Forward differences with a signed step per coordinate.
fn estimate_with_steps(
    flow: &impl FlowMap,
    x0: &[f64],
    t: f64,
    steps: &[f64],
    delta: f64,
) -> Result<JacobiEstimate> {
    if !(t >= 0.0) {
        return Err(MsfError::invalid(format!("duration t = {t} must be non-negative")));
    }
    let n = x0.len();
    let center = flow.evaluate(x0, t)?;
    check_finite(&center.0)?;
    let mut phi = SquareMatrix::zeros(n);
    let mut event_counts = Vec::with_capacity(n + 1);
    event_counts.push(center.1);
    for (i, &nominal) in steps.iter().enumerate() {
        let mut step = vec![0.0; n];
        // The representable displacement, not the requested one.
        step[i] = (x0[i] + nominal) - x0[i];
        if step[i] == 0.0 {
            return Err(MsfError::invalid(format!(
                "perturbation {nominal:e} vanishes against coordinate {}",
                x0[i]
            )));
        }
        let (diff, events) = flow.difference(x0, &step, t, &center)?;
        check_finite(&diff)?;
        for (row, d) in diff.iter().enumerate() {
            phi[(row, i)] = (d / step[i]).into();
        }
        event_counts.push(events);
    }
    let center_events = center.1;
    let consistent = event_counts.iter().all(|&c| c == center_events);
    Ok(JacobiEstimate {
        phi,
        delta_used: delta,
        event_counts,
        consistent,
    })
}

fn check_finite(state: &[f64]) -> Result<()> {
    if state.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MsfError::Propagation(format!("flow produced {state:?}")))
    }
}

/// Jacobian of the oscillator flow across a short window holding exactly one
/// impact of the central trajectory.
///
/// A start closer to the wall than `delta` is perturbed in position away from
/// the wall, since a start beyond it would be reset on the spot.
pub fn event_window_jacobian(
    oscillator: &ImpactOscillator,
    s_pre: &OscState,
    window: f64,
    delta: f64,
) -> Result<JacobiEstimate> {
    if !(window > 0.0 && window <= 2.0 * oscillator.scan_step()) {
        return Err(MsfError::invalid(format!(
            "event window {window} must lie in (0, 2 * scan_step]"
        )));
    }
    let central = oscillator.simulate(s_pre, window)?;
    if central.events.len() != 1 {
        return Err(MsfError::InvalidWindow {
            impacts: central.events.len(),
        });
    }
    let tau_c = central.events[0].tau_c;
    let flow = ImpactFlow {
        oscillator,
        tau0: s_pre.tau,
    };
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(MsfError::invalid(format!("perturbation delta = {delta} must be positive")));
    }
    let wall = oscillator.params().x_w;
    let dx = if s_pre.x + delta < wall { delta } else { -delta };
    let estimate = estimate_with_steps(&flow, &s_pre.phase_point(), window, &[dx, delta], delta)?;
    let norm = estimate.phi.frobenius_norm();
    if estimate.phi.min_singular_value_estimate() < SINGULARITY_THRESHOLD * norm {
        return Err(MsfError::GrazingSingularity { tau_c });
    }
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::mat_exp;
    use crate::oscillator::ImpactOscillatorParams;
    use std::f64::consts::FRAC_PI_2;

    fn real_close(m: &SquareMatrix, want: [[f64; 2]; 2], tol: f64) -> bool {
        (0..2).all(|i| (0..2).all(|j| (m[(i, j)].re - want[i][j]).abs() < tol && m[(i, j)].im == 0.0))
    }

    #[test]
    fn zero_duration_gives_identity() {
        let osc = ImpactOscillator::new(ImpactOscillatorParams::elastic()).unwrap();
        let flow = ImpactFlow { oscillator: &osc, tau0: 3.0 };
        let est = estimate_jacobian(&flow, &[0.5, 0.1], 0.0, 1e-7).unwrap();
        assert!(real_close(&est.phi, [[1.0, 0.0], [0.0, 1.0]], 1e-9));
        assert!(est.consistent);
    }

    #[test]
    fn undamped_quarter_turn_is_rotation() {
        let osc = ImpactOscillator::new(ImpactOscillatorParams {
            zeta: 0.0,
            f: 0.0,
            ..ImpactOscillatorParams::elastic().without_wall()
        })
        .unwrap();
        let flow = ImpactFlow { oscillator: &osc, tau0: 0.0 };
        let est = estimate_jacobian(&flow, &[0.2, -0.4], FRAC_PI_2, 1e-7).unwrap();
        assert!(real_close(&est.phi, [[0.0, 1.0], [-1.0, 0.0]], 1e-9), "{:?}", est.phi);
    }

    #[test]
    fn affine_flow_is_exact_for_any_delta() {
        let osc = ImpactOscillator::new(ImpactOscillatorParams::elastic().without_wall()).unwrap();
        let flow = ImpactFlow { oscillator: &osc, tau0: 1.3 };
        let gen = SquareMatrix::from_real_rows([[0.0, 1.0], [-1.0, -0.1]]);
        let want = mat_exp(&gen.scale_real(0.5)).unwrap();
        for delta in [1e-12, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-1] {
            let est = estimate_jacobian(&flow, &[0.7, -0.3], 0.5, delta).unwrap();
            assert!((&est.phi - &want).frobenius_norm() < 1e-12, "delta {delta}");
        }
    }

    #[test]
    fn subtraction_fallback_divides_by_the_representable_step() {
        // For a linear closure the default numerator is exact up to rounding of
        // the end states, which is small when the state is small.
        let scale = |x: &[f64], _t: f64| Ok((vec![3.0 * x[0], -x[1]], 0));
        let est = estimate_jacobian(&scale, &[1e-3, 2e-3], 1.0, 1e-9).unwrap();
        assert!(real_close(&est.phi, [[3.0, 0.0], [0.0, -1.0]], 1e-9));
    }

    #[test]
    fn vanishing_perturbation_is_rejected() {
        let id = |x: &[f64], _t: f64| Ok((x.to_vec(), 0));
        assert!(estimate_jacobian(&id, &[1e20, 0.0], 1.0, 1e-9).is_err());
    }

    #[test]
    fn closures_are_flow_maps() {
        let shear = |x: &[f64], t: f64| Ok((vec![x[0] + t * x[1], x[1]], 0));
        let est = estimate_jacobian(&shear, &[1.0, 2.0], 3.0, 1e-6).unwrap();
        assert!(real_close(&est.phi, [[1.0, 3.0], [0.0, 1.0]], 1e-9));
    }

    #[test]
    fn rejects_bad_arguments_and_nonfinite_flows() {
        let id = |x: &[f64], _t: f64| Ok((x.to_vec(), 0));
        assert!(estimate_jacobian(&id, &[0.0], 1.0, 0.0).is_err());
        assert!(estimate_jacobian(&id, &[0.0], -1.0, 1e-7).is_err());
        let blow_up = |_x: &[f64], _t: f64| Ok((vec![f64::NAN], 0));
        assert!(matches!(
            estimate_jacobian(&blow_up, &[0.0], 1.0, 1e-7),
            Err(MsfError::Propagation(_))
        ));
    }

    #[test]
    fn inconsistent_event_counts_are_flagged() {
        // Central trajectory sits exactly on a switching threshold.
        let step = |x: &[f64], _t: f64| Ok((x.to_vec(), usize::from(x[0] > 0.0)));
        let est = estimate_jacobian(&step, &[0.0, 0.0], 1.0, 1e-7).unwrap();
        assert_eq!(est.event_counts, vec![0, 1, 0]);
        assert!(!est.consistent);
    }
}
