//! Forced linear oscillator with a rigid wall, integrated in closed form.
//!
//! Dimensionless model:
//!
//! ```text
//! x' = v
//! v' = -2 zeta v - x + f cos(eta tau)          while x < x_w
//! v(tau_c+) = -R v(tau_c-)                      when x(tau_c) = x_w
//! ```
//!
//! Between impacts the motion is the sum of the steady-state response
//! `A cos(eta tau) + B sin(eta tau)` and a decaying homogeneous part, so every
//! free segment is evaluated exactly. Impacts are found by sampling the
//! segment on a regular grid and refining the first crossing by bisection.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{MsfError, Result};

/// Default sampling interval of the impact scan.
pub const DEFAULT_SCAN_STEP: f64 = 1e-3;

/// Width of the final bisection bracket, in local time.
pub const IMPACT_TIME_TOLERANCE: f64 = 1e-15;

/// Impacts slower than this are flagged as grazing.
pub const GRAZING_VELOCITY: f64 = 1e-8;

/// Maximum number of impacts tolerated within one forcing period.
pub const CHATTER_CAP: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactOscillatorParams {
    /// Damping ratio.
    pub zeta: f64,
    /// Forcing frequency over natural frequency.
    pub eta: f64,
    /// Forcing amplitude. Unity under the standard scaling.
    #[serde(default = "unit")]
    pub f: f64,
    /// Wall position.
    pub x_w: f64,
    /// Coefficient of restitution.
    #[serde(alias = "R")]
    pub restitution: f64,
    #[serde(default = "enabled")]
    pub wall_enabled: bool,
}

fn unit() -> f64 {
    1.0
}

fn enabled() -> bool {
    true
}

impl ImpactOscillatorParams {
    /// Elastic impacts: R = 1, x_w = 2, zeta = 0.05, eta = 0.712.
    pub fn elastic() -> Self {
        ImpactOscillatorParams {
            zeta: 0.05,
            eta: 0.712,
            f: 1.0,
            x_w: 2.0,
            restitution: 1.0,
            wall_enabled: true,
        }
    }

    /// Inelastic impacts: R = 0.9, x_w = 1.5, zeta = 0.05, eta = 0.5975.
    pub fn inelastic() -> Self {
        ImpactOscillatorParams {
            zeta: 0.05,
            eta: 0.5975,
            f: 1.0,
            x_w: 1.5,
            restitution: 0.9,
            wall_enabled: true,
        }
    }

    /// The same oscillator with the wall removed.
    pub fn without_wall(self) -> Self {
        ImpactOscillatorParams {
            wall_enabled: false,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.zeta, self.eta, self.f, self.restitution]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite || (self.wall_enabled && !self.x_w.is_finite()) {
            return Err(MsfError::invalid("oscillator parameters must be finite"));
        }
        if !(0.0..1.0).contains(&self.zeta) {
            return Err(MsfError::invalid(format!(
                "zeta = {} outside [0, 1); only underdamped segments are supported",
                self.zeta
            )));
        }
        if self.eta <= 0.0 {
            return Err(MsfError::invalid(format!("eta = {} must be positive", self.eta)));
        }
        if self.f < 0.0 {
            return Err(MsfError::invalid(format!("f = {} must be non-negative", self.f)));
        }
        if !(self.restitution > 0.0 && self.restitution <= 1.0) {
            return Err(MsfError::invalid(format!(
                "restitution R = {} outside (0, 1]",
                self.restitution
            )));
        }
        Ok(())
    }

    /// Damped natural frequency `sqrt(1 - zeta^2)`.
    pub fn damped_frequency(&self) -> f64 {
        (1.0 - self.zeta * self.zeta).sqrt()
    }

    /// Forcing period `2 pi / eta`.
    pub fn period(&self) -> f64 {
        TAU / self.eta
    }

    /// Generator of the free linear dynamics, `[[0, 1], [-1, -2 zeta]]`.
    pub fn segment_generator(&self) -> [[f64; 2]; 2] {
        [[0.0, 1.0], [-1.0, -2.0 * self.zeta]]
    }
}

/// Physical parameters of the forced mass-spring-damper with a wall.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionalParams {
    pub m: f64,
    pub c: f64,
    pub k: f64,
    #[serde(rename = "F")]
    pub force: f64,
    #[serde(rename = "Omega")]
    pub omega: f64,
    #[serde(rename = "X_w")]
    pub wall: f64,
    /// Dimensionless already; passed through unchanged.
    #[serde(alias = "R")]
    pub restitution: f64,
}

impl DimensionalParams {
    /// Natural frequency `sqrt(k / m)`.
    pub fn natural_frequency(&self) -> f64 {
        (self.k / self.m).sqrt()
    }
}

/// Reduces the physical model to the dimensionless one.
///
/// Time is scaled by the natural frequency and positions by `F / k`, so the
/// forcing amplitude becomes exactly one.
pub fn nondimensionalize(p: &DimensionalParams) -> Result<ImpactOscillatorParams> {
    for (name, value) in [("m", p.m), ("k", p.k), ("F", p.force), ("Omega", p.omega)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(MsfError::invalid(format!("{name} = {value} must be positive")));
        }
    }
    if !(p.c >= 0.0 && p.c.is_finite()) {
        return Err(MsfError::invalid(format!("c = {} must be non-negative", p.c)));
    }
    let omega = p.natural_frequency();
    Ok(ImpactOscillatorParams {
        zeta: p.c / (2.0 * (p.m * p.k).sqrt()),
        eta: p.omega / omega,
        f: 1.0,
        x_w: p.k * p.wall / p.force,
        restitution: p.restitution,
        wall_enabled: true,
    })
}

/// Coefficients of the steady-state response `A cos(eta tau) + B sin(eta tau)`.
pub fn steady_state_coefficients(p: &ImpactOscillatorParams) -> Result<(f64, f64)> {
    let detune = 1.0 - p.eta * p.eta;
    let drag = 2.0 * p.zeta * p.eta;
    let d = detune * detune + drag * drag;
    if d == 0.0 {
        return Err(MsfError::Resonance);
    }
    Ok((detune * p.f / d, drag * p.f / d))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscState {
    pub x: f64,
    pub v: f64,
    pub tau: f64,
}

impl OscState {
    pub fn new(x: f64, v: f64, tau: f64) -> Self {
        OscState { x, v, tau }
    }

    pub fn origin() -> Self {
        OscState::new(0.0, 0.0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.v.is_finite() && self.tau.is_finite()
    }

    pub fn phase_point(&self) -> [f64; 2] {
        [self.x, self.v]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tau_c: f64,
    pub v_pre: f64,
    pub v_post: f64,
    /// Impact velocity below [`GRAZING_VELOCITY`].
    pub grazing: bool,
}

/// Outcome of [`ImpactOscillator::step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Step {
    Free(OscState),
    Impact(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub end: OscState,
    pub events: Vec<EventRecord>,
}

/// A validated oscillator with its steady-state response precomputed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImpactOscillator {
    params: ImpactOscillatorParams,
    amp_cos: f64,
    amp_sin: f64,
    omega_d: f64,
    scan_step: f64,
}

impl ImpactOscillator {
    pub fn new(params: ImpactOscillatorParams) -> Result<Self> {
        params.validate()?;
        let (amp_cos, amp_sin) = steady_state_coefficients(&params)?;
        Ok(ImpactOscillator {
            params,
            amp_cos,
            amp_sin,
            omega_d: params.damped_frequency(),
            scan_step: DEFAULT_SCAN_STEP,
        })
    }

    pub fn with_scan_step(mut self, scan_step: f64) -> Result<Self> {
        if !(scan_step > 0.0 && scan_step.is_finite()) {
            return Err(MsfError::invalid(format!("scan step {scan_step} must be positive")));
        }
        self.scan_step = scan_step;
        Ok(self)
    }

    pub fn params(&self) -> &ImpactOscillatorParams {
        &self.params
    }

    pub fn scan_step(&self) -> f64 {
        self.scan_step
    }

    pub fn period(&self) -> f64 {
        self.params.period()
    }

    /// Wall position, if the wall is present.
    pub fn wall(&self) -> Option<f64> {
        self.params.wall_enabled.then_some(self.params.x_w)
    }

    /// Forcing phase `eta * tau` reduced to `[0, 2 pi)`.
    fn phase(&self, tau: f64) -> f64 {
        (self.params.eta * tau).rem_euclid(TAU)
    }

    /// Steady-state position and velocity at time `tau`.
    pub fn steady_state(&self, tau: f64) -> (f64, f64) {
        self.particular(self.phase(tau))
    }

    /// Steady-state position and velocity at forcing phase `theta`.
    fn particular(&self, theta: f64) -> (f64, f64) {
        let (s, c) = theta.sin_cos();
        (
            self.amp_cos * c + self.amp_sin * s,
            self.params.eta * (self.amp_sin * c - self.amp_cos * s),
        )
    }

    /// Acceleration given by the vector field.
    pub fn acceleration(&self, s: &OscState) -> f64 {
        let p = &self.params;
        -2.0 * p.zeta * s.v - s.x + p.f * self.phase(s.tau).cos()
    }

    /// `exp(J dt)` for the free generator `J = [[0, 1], [-1, -2 zeta]]`.
    pub fn segment_propagator(&self, dt: f64) -> [[f64; 2]; 2] {
        let z = self.params.zeta;
        let w = self.omega_d;
        let decay = (-z * dt).exp();
        let (sn, cs) = (w * dt).sin_cos();
        let k = sn / w;
        [
            [decay * (cs + z * k), decay * k],
            [-decay * k, decay * (cs - z * k)],
        ]
    }

    /// Free motion over `dt`, ignoring the wall.
    pub fn propagate_free(&self, s: &OscState, dt: f64) -> OscState {
        if dt == 0.0 {
            return *s;
        }
        let theta0 = self.phase(s.tau);
        let (xp0, vp0) = self.particular(theta0);
        let (xp1, vp1) = self.particular(theta0 + self.params.eta * dt);
        let m = self.segment_propagator(dt);
        let (y, w) = (s.x - xp0, s.v - vp0);
        OscState {
            x: xp1 + m[0][0] * y + m[0][1] * w,
            v: vp1 + m[1][0] * y + m[1][1] * w,
            tau: s.tau + dt,
        }
    }

    /// Advances by at most one scan interval `dt`: either the free end state
    /// or the refined time of the first impact inside the interval.
    pub fn step(&self, s: &OscState, dt: f64) -> Step {
        let end = self.propagate_free(s, dt);
        match self.wall() {
            Some(wall) => match self.crossing_in(s, wall, 0.0, s.v, dt, &end) {
                Some(offset) => Step::Impact(s.tau + offset),
                None => Step::Free(end),
            },
            None => Step::Free(end),
        }
    }

    /// Checks one scan interval `[lo, hi]` of the segment starting at `s`,
    /// given the velocity at `lo` and the state at `hi`. Returns the local
    /// offset of the crossing.
    fn crossing_in(
        &self,
        s: &OscState,
        wall: f64,
        lo: f64,
        v_lo: f64,
        hi: f64,
        at_hi: &OscState,
    ) -> Option<f64> {
        if at_hi.x - wall > 0.0 {
            return Some(self.bisect_crossing(s, wall, lo, hi));
        }
        if v_lo > 0.0 && at_hi.v <= 0.0 {
            let apex = self.bisect_apex(s, lo, hi);
            if self.propagate_free(s, apex).x - wall > 0.0 {
                return Some(self.bisect_crossing(s, wall, lo, apex));
            }
        }
        None
    }

    /// Earliest wall crossing in `(s.tau, s.tau + horizon]`, refined by
    /// bisection. Returns the impact time.
    ///
    /// The segment is sampled every `scan_step`; a crossing is bracketed when a
    /// sample lies beyond the wall, or when the velocity changes sign inside a
    /// step and the apex found by bisection lies beyond the wall.
    pub fn detect_next_impact(&self, s: &OscState, horizon: f64, scan_step: f64) -> Option<f64> {
        let wall = self.wall()?;
        if !(horizon > 0.0) {
            return None;
        }
        let mut lo = 0.0;
        let mut v_lo = s.v;
        let mut k = 1u64;
        loop {
            let hi = (k as f64 * scan_step).min(horizon);
            let st = self.propagate_free(s, hi);
            if let Some(offset) = self.crossing_in(s, wall, lo, v_lo, hi, &st) {
                return Some(s.tau + offset);
            }
            if hi >= horizon {
                return None;
            }
            lo = hi;
            v_lo = st.v;
            k += 1;
        }
    }

    /// Largest bracket point still on the free side of an upward crossing.
    fn bisect_crossing(&self, s: &OscState, wall: f64, mut lo: f64, mut hi: f64) -> f64 {
        while hi - lo > IMPACT_TIME_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.propagate_free(s, mid).x - wall > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    fn bisect_apex(&self, s: &OscState, mut lo: f64, mut hi: f64) -> f64 {
        while hi - lo > IMPACT_TIME_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.propagate_free(s, mid).v > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Impact reset: position kept, velocity reversed and scaled by `R`.
    pub fn apply_impact(&self, s: &OscState) -> (OscState, EventRecord) {
        let v_post = -self.params.restitution * s.v;
        let record = EventRecord {
            tau_c: s.tau,
            v_pre: s.v,
            v_post,
            grazing: s.v.abs() < GRAZING_VELOCITY,
        };
        (OscState { v: v_post, ..*s }, record)
    }

    /// Event-driven simulation over `duration`.
    pub fn simulate(&self, s0: &OscState, duration: f64) -> Result<Trajectory> {
        let mut events = Vec::new();
        let end = self.advance(s0, duration, |e| events.push(*e))?;
        Ok(Trajectory { end, events })
    }

    /// Like [`simulate`](Self::simulate) but only counts impacts.
    pub fn advance_counting(&self, s0: &OscState, duration: f64) -> Result<(OscState, usize)> {
        let mut count = 0;
        let end = self.advance(s0, duration, |_| count += 1)?;
        Ok((end, count))
    }

    /// Event-driven propagation reporting every impact to `on_event`.
    pub fn advance(
        &self,
        s0: &OscState,
        duration: f64,
        mut on_event: impl FnMut(&EventRecord),
    ) -> Result<OscState> {
        if !(duration >= 0.0) {
            return Err(MsfError::invalid(format!("duration {duration} must be non-negative")));
        }
        if !s0.is_finite() {
            return Err(MsfError::Propagation(format!("initial state {s0:?}")));
        }
        let end_tau = s0.tau + duration;
        let period = self.period();
        let mut state = *s0;
        // Impact times inside the trailing forcing period, for the chatter cap.
        let mut recent: std::collections::VecDeque<f64> = Default::default();
        loop {
            let remaining = end_tau - state.tau;
            match self.detect_next_impact(&state, remaining, self.scan_step) {
                Some(tau_c) => {
                    let at_wall = self.propagate_free(&state, tau_c - state.tau);
                    let (next, record) = self.apply_impact(&at_wall);
                    if !next.is_finite() {
                        return Err(MsfError::Propagation(format!("state {next:?} after impact")));
                    }
                    on_event(&record);
                    while recent.front().is_some_and(|&t| t <= tau_c - period) {
                        recent.pop_front();
                    }
                    recent.push_back(tau_c);
                    if recent.len() > CHATTER_CAP {
                        return Err(MsfError::Chatter {
                            count: recent.len(),
                            tau: tau_c,
                        });
                    }
                    state = next;
                }
                None => {
                    let mut out = self.propagate_free(&state, remaining.max(0.0));
                    out.tau = end_tau;
                    if !out.is_finite() {
                        return Err(MsfError::Propagation(format!("state {out:?}")));
                    }
                    return Ok(out);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn forced() -> ImpactOscillator {
        ImpactOscillator::new(ImpactOscillatorParams::elastic()).unwrap()
    }

    /// Classical fourth-order Runge-Kutta for the wall-free ODE.
    fn rk4(p: &ImpactOscillatorParams, s: OscState, dt: f64, h: f64) -> OscState {
        let rhs = |t: f64, x: f64, v: f64| (v, -2.0 * p.zeta * v - x + p.f * (p.eta * t).cos());
        let steps = (dt / h).round() as usize;
        let (mut t, mut x, mut v) = (s.tau, s.x, s.v);
        for _ in 0..steps {
            let k1 = rhs(t, x, v);
            let k2 = rhs(t + h / 2.0, x + h / 2.0 * k1.0, v + h / 2.0 * k1.1);
            let k3 = rhs(t + h / 2.0, x + h / 2.0 * k2.0, v + h / 2.0 * k2.1);
            let k4 = rhs(t + h, x + h * k3.0, v + h * k3.1);
            x += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            t += h;
        }
        OscState::new(x, v, t)
    }

    #[test]
    fn nondimensionalize_examples() {
        let p = nondimensionalize(&DimensionalParams {
            m: 1.0,
            c: 0.1,
            k: 1.0,
            force: 1.0,
            omega: 0.712,
            wall: 2.0,
            restitution: 1.0,
        })
        .unwrap();
        assert!((p.zeta - 0.05).abs() < 1e-15);
        assert!((p.eta - 0.712).abs() < 1e-15);
        assert_eq!((p.f, p.x_w), (1.0, 2.0));

        let p = nondimensionalize(&DimensionalParams {
            m: 1.0,
            c: 0.0,
            k: 1.0,
            force: 1.0,
            omega: 1.0,
            wall: 0.0,
            restitution: 1.0,
        })
        .unwrap();
        assert_eq!((p.zeta, p.eta, p.f, p.x_w), (0.0, 1.0, 1.0, 0.0));

        let p = nondimensionalize(&DimensionalParams {
            m: 4.0,
            c: 0.4,
            k: 1.0,
            force: 2.0,
            omega: 0.25,
            wall: 3.0,
            restitution: 0.9,
        })
        .unwrap();
        assert!((p.zeta - 0.1).abs() < 1e-15);
        assert!((p.eta - 0.5).abs() < 1e-15);
        assert!((p.x_w - 1.5).abs() < 1e-15);
        assert_eq!(p.f, 1.0);
    }

    #[test]
    fn nondimensionalize_rejects_nonpositive_inputs() {
        let good = DimensionalParams {
            m: 1.0,
            c: 0.1,
            k: 1.0,
            force: 1.0,
            omega: 1.0,
            wall: 1.0,
            restitution: 1.0,
        };
        for bad in [
            DimensionalParams { m: 0.0, ..good },
            DimensionalParams { k: -1.0, ..good },
            DimensionalParams { force: 0.0, ..good },
            DimensionalParams { omega: 0.0, ..good },
        ] {
            assert!(matches!(nondimensionalize(&bad), Err(MsfError::InvalidParameter(_))));
        }
    }

    #[test]
    fn steady_state_examples() {
        let p = ImpactOscillatorParams {
            eta: 1e-9,
            ..ImpactOscillatorParams::elastic()
        };
        let (a, b) = steady_state_coefficients(&p).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && b.abs() < 1e-9);

        let (a, b) = steady_state_coefficients(&ImpactOscillatorParams::elastic()).unwrap();
        assert!((a - 1.98674).abs() < 1e-5, "{a}");
        assert!((b - 0.28690).abs() < 1e-5, "{b}");

        let p = ImpactOscillatorParams {
            f: 0.0,
            ..ImpactOscillatorParams::inelastic()
        };
        assert_eq!(steady_state_coefficients(&p).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn steady_state_solves_segment_ode() {
        let p = ImpactOscillatorParams::elastic();
        let (a, b) = steady_state_coefficients(&p).unwrap();
        let eta = p.eta;
        for i in 0..100 {
            let t = 0.37 * i as f64 - 11.0;
            let (s, c) = (eta * t).sin_cos();
            let x = a * c + b * s;
            let v = eta * (b * c - a * s);
            let acc = -eta * eta * x;
            let residual = acc + 2.0 * p.zeta * v + x - p.f * c;
            assert!(residual.abs() < 1e-12, "{residual}");
        }
    }

    #[test]
    fn undamped_resonance_is_rejected() {
        let p = ImpactOscillatorParams {
            zeta: 0.0,
            eta: 1.0,
            ..ImpactOscillatorParams::elastic()
        };
        assert_eq!(steady_state_coefficients(&p), Err(MsfError::Resonance));
        assert!(ImpactOscillator::new(p).is_err());
    }

    #[test]
    fn invalid_params_are_rejected() {
        let base = ImpactOscillatorParams::elastic();
        for bad in [
            ImpactOscillatorParams { zeta: 1.0, ..base },
            ImpactOscillatorParams { zeta: -0.1, ..base },
            ImpactOscillatorParams { eta: 0.0, ..base },
            ImpactOscillatorParams { f: -1.0, ..base },
            ImpactOscillatorParams { restitution: 0.0, ..base },
            ImpactOscillatorParams { restitution: 1.1, ..base },
            ImpactOscillatorParams { zeta: f64::NAN, ..base },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        let no_wall = ImpactOscillatorParams {
            x_w: f64::INFINITY,
            wall_enabled: false,
            ..base
        };
        assert!(no_wall.validate().is_ok());
    }

    #[test]
    fn propagate_free_trivial_cases() {
        let osc = forced();
        let s = OscState::new(0.3, -0.2, 4.0);
        assert_eq!(osc.propagate_free(&s, 0.0), s);

        let unforced = ImpactOscillator::new(ImpactOscillatorParams {
            f: 0.0,
            ..ImpactOscillatorParams::elastic()
        })
        .unwrap();
        assert_eq!(
            unforced.propagate_free(&OscState::origin(), 5.0),
            OscState::new(0.0, 0.0, 5.0)
        );
    }

    #[test]
    fn propagate_free_matches_runge_kutta() {
        let osc = forced();
        let exact = osc.propagate_free(&OscState::origin(), 1.0);
        let reference = rk4(osc.params(), OscState::origin(), 1.0, 1e-5);
        assert!((exact.x - reference.x).abs() < 1e-8);
        assert!((exact.v - reference.v).abs() < 1e-8);
    }

    #[test]
    fn segment_solution_satisfies_the_ode() {
        let osc = forced();
        let p = *osc.params();
        let s0 = OscState::new(-0.4, 1.3, 17.0);
        let h = 1e-3;
        for i in 1..40 {
            let t = 0.25 * i as f64;
            let at = |dt: f64| osc.propagate_free(&s0, t + dt);
            // Five-point stencil for the derivative of v.
            let dv = (-at(2.0 * h).v + 8.0 * at(h).v - 8.0 * at(-h).v + at(-2.0 * h).v) / (12.0 * h);
            let dx = (-at(2.0 * h).x + 8.0 * at(h).x - 8.0 * at(-h).x + at(-2.0 * h).x) / (12.0 * h);
            let s = at(0.0);
            let residual = dv - (-2.0 * p.zeta * s.v - s.x + p.f * (p.eta * s.tau).cos());
            assert!(residual.abs() < 1e-10, "t={t} residual={residual}");
            assert!((dx - s.v).abs() < 1e-10);
        }
    }

    #[test]
    fn homogeneous_propagator_is_a_semigroup() {
        let osc = forced();
        let a = osc.segment_propagator(0.7);
        let b = osc.segment_propagator(1.1);
        let ab = osc.segment_propagator(1.8);
        for i in 0..2 {
            for j in 0..2 {
                let prod = b[i][0] * a[0][j] + b[i][1] * a[1][j];
                assert!((prod - ab[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn no_impact_while_retreating() {
        let osc = forced();
        let s = OscState::new(-1.0, -0.5, 0.0);
        assert_eq!(osc.detect_next_impact(&s, 0.1, DEFAULT_SCAN_STEP), None);
    }

    #[test]
    fn detects_close_impact_to_bisection_accuracy() {
        let osc = forced();
        let s = OscState::new(1.999, 1.0, 0.0);
        let tau_c = osc.detect_next_impact(&s, 0.1, DEFAULT_SCAN_STEP).unwrap();
        // Dense bracketing of the analytic solution at step 1e-6.
        let mut lo = 0.0;
        let mut root = None;
        for k in 1..=100_000 {
            let hi = k as f64 * 1e-6;
            let gl = osc.propagate_free(&s, lo).x - 2.0;
            let gh = osc.propagate_free(&s, hi).x - 2.0;
            if gl <= 0.0 && gh > 0.0 {
                root = Some(lo - gl * (hi - lo) / (gh - gl));
                break;
            }
            lo = hi;
        }
        let root = root.unwrap();
        assert!((tau_c - root).abs() < 1e-6, "{tau_c} vs {root}");
        assert!((tau_c - 0.001).abs() < 1e-5);
    }

    #[test]
    fn finds_crossing_hidden_between_scan_points() {
        let osc = forced();
        // Apex barely above the wall, reached and left within one scan step.
        let s = OscState::new(2.0 - 2e-8, 3e-4, 0.0);
        let hit = osc.detect_next_impact(&s, 0.5, 0.1);
        assert!(hit.is_some());
    }

    #[test]
    fn no_wall_no_impacts() {
        let osc = ImpactOscillator::new(ImpactOscillatorParams::elastic().without_wall()).unwrap();
        let s = OscState::new(5.0, 3.0, 0.0);
        assert_eq!(osc.detect_next_impact(&s, 100.0, DEFAULT_SCAN_STEP), None);
        let traj = osc.simulate(&OscState::origin(), 50.0).unwrap();
        assert!(traj.events.is_empty());
        let direct = osc.propagate_free(&OscState::origin(), 50.0);
        assert!((traj.end.x - direct.x).abs() < 1e-15 && (traj.end.v - direct.v).abs() < 1e-15);
    }

    #[test]
    fn impact_reset_examples() {
        let inelastic = ImpactOscillator::new(ImpactOscillatorParams::inelastic()).unwrap();
        let (s, rec) = inelastic.apply_impact(&OscState::new(1.5, 1.2, 3.0));
        assert!((s.v + 1.08).abs() < 1e-15);
        assert_eq!((s.x, s.tau), (1.5, 3.0));
        assert!(!rec.grazing);

        let (s, _) = forced().apply_impact(&OscState::new(2.0, 2.0, 0.0));
        assert_eq!(s.v, -2.0);

        let (s, rec) = inelastic.apply_impact(&OscState::new(1.5, 0.0, 0.0));
        assert_eq!(s.v, 0.0);
        assert!(rec.grazing);
    }

    fn check_run(params: ImpactOscillatorParams) {
        let osc = ImpactOscillator::new(params).unwrap();
        let mut max_gap = f64::NEG_INFINITY;
        let mut state = OscState::origin();
        let mut events = Vec::new();
        for _ in 0..100 {
            let traj = osc.simulate(&state, osc.period()).unwrap();
            state = traj.end;
            events.extend(traj.events);
            max_gap = max_gap.max(state.x - params.x_w);
        }
        assert!(!events.is_empty());
        for pair in events.windows(2) {
            assert!(pair[0].tau_c < pair[1].tau_c);
        }
        for e in &events {
            assert_eq!(e.v_post, -params.restitution * e.v_pre);
            assert!(e.v_pre >= 0.0);
        }
        assert!(max_gap <= 1e-9);
    }

    #[test]
    fn elastic_run_invariants() {
        check_run(ImpactOscillatorParams::elastic());
    }

    #[test]
    fn inelastic_run_invariants() {
        check_run(ImpactOscillatorParams::inelastic());
    }

    #[test]
    fn chatter_cap_aborts_sticking_motion() {
        // Pressed against the wall by a static load: impacts accumulate.
        let osc = ImpactOscillator::new(ImpactOscillatorParams {
            zeta: 0.05,
            eta: 1e-6,
            f: 3.0,
            x_w: 1.0,
            restitution: 0.5,
            wall_enabled: true,
        })
        .unwrap();
        let err = osc.simulate(&OscState::new(1.0, 0.0, 0.0), 10.0).unwrap_err();
        assert!(matches!(err, MsfError::Chatter { .. }), "{err}");
    }
}
