//! Transversal Lyapunov exponents and master stability function sweeps.
//!
//! A transverse perturbation `xi` evolves under `[DF + (alpha + i beta) H]`.
//! For a non-smooth oscillator `DF` does not exist at impacts, so each scan
//! step instead takes the single-oscillator trajectory Jacobian `Phi` of the
//! step (analytic between impacts, finite-difference estimate across one),
//! writes it as `exp(A h)` through the matrix logarithm and builds the coupled
//! step map
//!
//! ```text
//! P = exp(log(Phi) + (alpha + i beta) H h)
//! ```
//!
//! The exponent is the time average of `ln |P xi|` with `xi` renormalised
//! after every step.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MsfError, Result};
use crate::jacobian::{estimate_jacobian, event_window_jacobian, ImpactFlow, JacobiEstimate};
use crate::matrix::{mat_exp, mat_log, SquareMatrix};
use crate::oscillator::{
    ImpactOscillator, ImpactOscillatorParams, OscState, Step, GRAZING_VELOCITY,
};

/// Complex coupling parameter `sigma * gamma = alpha + i beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsfQuery {
    pub alpha: f64,
    pub beta: f64,
}

impl MsfQuery {
    pub fn new(alpha: f64, beta: f64) -> Self {
        MsfQuery { alpha, beta }
    }

    pub fn real(alpha: f64) -> Self {
        MsfQuery { alpha, beta: 0.0 }
    }

    pub fn coupling(&self) -> Complex64 {
        Complex64::new(self.alpha, self.beta)
    }
}

/// Inner coupling matrix: which state components of a neighbour act on which
/// equations of a node.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrixH {
    matrix: SquareMatrix,
}

impl CouplingMatrixH {
    pub fn new(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n || n == 0 {
            return Err(MsfError::invalid(format!(
                "coupling matrix needs {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(MsfError::invalid("coupling matrix entries must be finite"));
        }
        Ok(CouplingMatrixH {
            matrix: SquareMatrix::from_real(n, entries),
        })
    }

    /// Linear spring between positions: `[[0, 0], [1, 0]]`.
    pub fn position_spring() -> Self {
        CouplingMatrixH {
            matrix: SquareMatrix::from_real_rows([[0.0, 0.0], [1.0, 0.0]]),
        }
    }

    pub fn zero(n: usize) -> Self {
        CouplingMatrixH {
            matrix: SquareMatrix::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.matrix
    }

    /// Entries as real row-major values.
    pub fn entries(&self) -> Vec<f64> {
        self.matrix.to_real_vec()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TleSettings {
    /// Forcing periods simulated before accumulation starts.
    pub transient_periods: u32,
    /// Upper bound on accumulated forcing periods.
    pub max_periods: u32,
    /// Number of trailing samples entering the convergence test.
    pub sample_window: usize,
    pub std_tolerance: f64,
    pub scan_step: f64,
    pub jacobi_delta: f64,
}

impl Default for TleSettings {
    fn default() -> Self {
        TleSettings {
            transient_periods: 500,
            max_periods: 2000,
            sample_window: 100,
            std_tolerance: 1e-5,
            scan_step: 1e-3,
            jacobi_delta: crate::jacobian::DEFAULT_DELTA,
        }
    }
}

impl TleSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.std_tolerance, self.scan_step, self.jacobi_delta]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive || self.max_periods == 0 || self.sample_window == 0 {
            return Err(MsfError::invalid("TLE settings must be positive"));
        }
        if self.sample_window > self.max_periods as usize {
            return Err(MsfError::invalid(format!(
                "sample window {} exceeds max periods {}",
                self.sample_window, self.max_periods
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum TleWarning {
    /// Perturbed and central trajectories disagreed on the number of impacts,
    /// also after retrying with a smaller perturbation.
    InconsistentJacobian { tau: f64, delta: f64 },
    GrazingImpact { tau_c: f64 },
    /// A scan step held more than one impact; the step Jacobian was estimated
    /// across all of them.
    MultipleImpacts { tau: f64, count: usize },
    /// Imaginary part dropped from real-coupling step maps (Frobenius norms).
    ImaginaryPartDiscarded {
        free_step: f64,
        impact_steps: usize,
        impact_max: f64,
        impact_total: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TleResult {
    /// Transversal Lyapunov exponent per unit dimensionless time.
    pub lambda: f64,
    pub converged: bool,
    /// Forcing periods of accumulation.
    pub periods_used: u32,
    /// Forcing periods of transient before accumulation.
    pub transient_periods: u32,
    /// Running estimate at the end of each forcing period.
    pub samples: Vec<f64>,
    pub impacts: usize,
    pub warnings: Vec<TleWarning>,
}

impl TleResult {
    /// Population standard deviation of the last `window` samples.
    pub fn trailing_std(&self, window: usize) -> Option<f64> {
        trailing_std(&self.samples, window)
    }
}

fn trailing_std(samples: &[f64], window: usize) -> Option<f64> {
    if window == 0 || samples.len() < window {
        return None;
    }
    let tail = &samples[samples.len() - window..];
    let mean = tail.iter().sum::<f64>() / window as f64;
    let var = tail.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / window as f64;
    Some(var.sqrt())
}

/// Transverse perturbation with its accumulated logarithmic growth.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationState {
    pub xi: Vec<Complex64>,
    pub log_growth_sum: f64,
    pub elapsed: f64,
    scratch: Vec<Complex64>,
}

impl PerturbationState {
    /// Starts from the direction of `xi`; its length is not counted as growth.
    pub fn new(xi: Vec<Complex64>) -> Result<Self> {
        let norm = euclid(&xi);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(MsfError::invalid("initial perturbation must be non-zero and finite"));
        }
        let scratch = vec![Complex64::new(0.0, 0.0); xi.len()];
        Ok(PerturbationState {
            xi: xi.into_iter().map(|z| z / norm).collect(),
            log_growth_sum: 0.0,
            elapsed: 0.0,
            scratch,
        })
    }

    /// Maps `xi` through one step of length `dt` and renormalises.
    pub fn advance(&mut self, step_map: &SquareMatrix, dt: f64) -> Result<()> {
        let n = self.xi.len();
        for i in 0..n {
            self.scratch[i] = (0..n).map(|j| step_map[(i, j)] * self.xi[j]).sum();
        }
        let norm = euclid(&self.scratch);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(MsfError::Propagation(format!(
                "perturbation norm {norm} after step at elapsed {}",
                self.elapsed
            )));
        }
        for (x, s) in self.xi.iter_mut().zip(&self.scratch) {
            *x = s / norm;
        }
        self.log_growth_sum += norm.ln();
        self.elapsed += dt;
        Ok(())
    }

    pub fn exponent(&self) -> f64 {
        self.log_growth_sum / self.elapsed
    }
}

fn euclid(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Coupled step map with the imaginary part removed for real coupling.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledPropagator {
    pub matrix: SquareMatrix,
    /// Frobenius norm of the discarded imaginary part (zero when `beta != 0`).
    pub discarded_imag: f64,
}

/// `exp(log(phi_single) + (alpha + i beta) H h)`.
///
/// For `beta = 0` the perturbation of the real network is real, so the
/// imaginary part of the result is treated as linearisation error and
/// dropped; its magnitude is returned alongside.
pub fn coupled_step_propagator(
    phi_single: &SquareMatrix,
    h_matrix: &CouplingMatrixH,
    q: MsfQuery,
    h: f64,
) -> Result<CoupledPropagator> {
    if phi_single.dim() != h_matrix.dim() {
        return Err(MsfError::invalid(format!(
            "Jacobian is {}x{} but coupling matrix is {}x{}",
            phi_single.dim(),
            phi_single.dim(),
            h_matrix.dim(),
            h_matrix.dim()
        )));
    }
    if !(h > 0.0) {
        return Err(MsfError::invalid(format!("step h = {h} must be positive")));
    }
    let log = mat_log(phi_single)?;
    let generator = &log + &h_matrix.matrix().scale(q.coupling() * h);
    let full = mat_exp(&generator)?;
    if q.beta == 0.0 {
        Ok(CoupledPropagator {
            discarded_imag: full.imag_norm(),
            matrix: full.real_part(),
        })
    } else {
        Ok(CoupledPropagator {
            matrix: full,
            discarded_imag: 0.0,
        })
    }
}

fn real_2x2(m: [[f64; 2]; 2]) -> SquareMatrix {
    SquareMatrix::from_real_rows(m)
}

/// Runs the transient from rest at `tau = 0` and returns the settled state.
pub fn settle_transient(params: &ImpactOscillatorParams, settings: &TleSettings) -> Result<OscState> {
    let osc = ImpactOscillator::new(*params)?.with_scan_step(settings.scan_step)?;
    let duration = settings.transient_periods as f64 * osc.period();
    osc.advance(&OscState::origin(), duration, |_| {})
}

/// Transversal Lyapunov exponent at one coupling value.
///
/// `base_state` is a settled state to start accumulating from; when absent the
/// transient is simulated first.
pub fn compute_tle(
    params: &ImpactOscillatorParams,
    h_matrix: &CouplingMatrixH,
    q: MsfQuery,
    settings: &TleSettings,
    base_state: Option<OscState>,
) -> Result<TleResult> {
    settings.validate()?;
    if !(q.alpha.is_finite() && q.beta.is_finite()) {
        return Err(MsfError::invalid("coupling parameter must be finite"));
    }
    if h_matrix.dim() != 2 {
        return Err(MsfError::invalid("the oscillator has a 2-dimensional state"));
    }
    let osc = ImpactOscillator::new(*params)?.with_scan_step(settings.scan_step)?;
    let base = match base_state {
        Some(s) => s,
        None => settle_transient(params, settings)?,
    };
    TleRun::new(&osc, h_matrix, q, settings)?.run(base)
}

struct TleRun<'a> {
    osc: &'a ImpactOscillator,
    h_matrix: &'a CouplingMatrixH,
    q: MsfQuery,
    settings: &'a TleSettings,
    free_map: CoupledPropagator,
}

impl<'a> TleRun<'a> {
    fn new(
        osc: &'a ImpactOscillator,
        h_matrix: &'a CouplingMatrixH,
        q: MsfQuery,
        settings: &'a TleSettings,
    ) -> Result<Self> {
        let h = settings.scan_step;
        // Impact-free steps all share the same single-oscillator Jacobian.
        let free_map =
            coupled_step_propagator(&real_2x2(osc.segment_propagator(h)), h_matrix, q, h)?;
        Ok(TleRun {
            osc,
            h_matrix,
            q,
            settings,
            free_map,
        })
    }

    fn run(&self, base: OscState) -> Result<TleResult> {
        let h = self.settings.scan_step;
        let period = self.osc.period();
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let mut xi = PerturbationState::new(vec![one, zero])?;
        let mut state = base;
        let mut samples = Vec::new();
        let mut warnings = Vec::new();
        let mut impacts = 0usize;
        let mut impact_imag = (0usize, 0.0f64, 0.0f64);
        let mut converged = false;
        let mut steps = 0u64;
        let mut next_sample = period;

        while samples.len() < self.settings.max_periods as usize {
            match self.osc.step(&state, h) {
                Step::Free(next) => {
                    xi.advance(&self.free_map.matrix, h)?;
                    state = next;
                }
                Step::Impact(_) => {
                    let (next, count, map) = self.impact_step(&state, h, &mut warnings)?;
                    impacts += count;
                    if self.q.beta == 0.0 {
                        impact_imag.0 += 1;
                        impact_imag.1 = impact_imag.1.max(map.discarded_imag);
                        impact_imag.2 += map.discarded_imag;
                    }
                    xi.advance(&map.matrix, h)?;
                    state = next;
                }
            }
            steps += 1;
            let elapsed = steps as f64 * h;
            if elapsed >= next_sample {
                next_sample += period;
                samples.push(xi.log_growth_sum / elapsed);
                if let Some(std) = trailing_std(&samples, self.settings.sample_window) {
                    if std < self.settings.std_tolerance {
                        converged = true;
                        break;
                    }
                }
            }
        }

        if self.q.beta == 0.0 && (self.free_map.discarded_imag > 0.0 || impact_imag.2 > 0.0) {
            warnings.push(TleWarning::ImaginaryPartDiscarded {
                free_step: self.free_map.discarded_imag,
                impact_steps: impact_imag.0,
                impact_max: impact_imag.1,
                impact_total: impact_imag.2,
            });
        }
        Ok(TleResult {
            lambda: samples.last().copied().unwrap_or(f64::NAN),
            converged,
            periods_used: samples.len() as u32,
            transient_periods: self.settings.transient_periods,
            samples,
            impacts,
            warnings,
        })
    }

    /// Step map for a scan step whose base trajectory hits the wall.
    fn impact_step(
        &self,
        state: &OscState,
        h: f64,
        warnings: &mut Vec<TleWarning>,
    ) -> Result<(OscState, usize, CoupledPropagator)> {
        let central = self.osc.simulate(state, h)?;
        let count = central.events.len();
        let tau_c = central.events.first().map_or(state.tau, |e| e.tau_c);
        for e in &central.events {
            if e.v_pre.abs() < GRAZING_VELOCITY {
                warnings.push(TleWarning::GrazingImpact { tau_c: e.tau_c });
            }
        }
        let estimate = |delta: f64| -> Result<JacobiEstimate> {
            if count == 1 {
                event_window_jacobian(self.osc, state, h, delta)
            } else {
                let flow = ImpactFlow {
                    oscillator: self.osc,
                    tau0: state.tau,
                };
                estimate_jacobian(&flow, &state.phase_point(), h, delta)
            }
        };
        let at_impact = |e: MsfError| MsfError::AtImpact {
            tau_c,
            source: Box::new(e),
        };
        let mut jac = estimate(self.settings.jacobi_delta).map_err(at_impact)?;
        if !jac.consistent {
            jac = estimate(self.settings.jacobi_delta / 10.0).map_err(at_impact)?;
            if !jac.consistent {
                warnings.push(TleWarning::InconsistentJacobian {
                    tau: state.tau,
                    delta: jac.delta_used,
                });
            }
        }
        if count > 1 {
            warnings.push(TleWarning::MultipleImpacts {
                tau: state.tau,
                count,
            });
        }
        let map = coupled_step_propagator(&jac.phi, self.h_matrix, self.q, h).map_err(at_impact)?;
        Ok((central.end, count, map))
    }
}

/// One grid point of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct MsfPoint {
    pub query: MsfQuery,
    pub result: Result<TleResult>,
}

/// Evaluates the master stability function on the product grid of `alphas`
/// and `betas` (alpha-major). The transient runs once; grid points are
/// computed in parallel and returned in grid order.
pub fn msf_sweep(
    params: &ImpactOscillatorParams,
    h_matrix: &CouplingMatrixH,
    alphas: &[f64],
    betas: &[f64],
    settings: &TleSettings,
) -> Result<Vec<MsfPoint>> {
    if alphas.is_empty() || betas.is_empty() {
        return Err(MsfError::invalid("sweep grids must be non-empty"));
    }
    settings.validate()?;
    let base = settle_transient(params, settings)?;
    let queries: Vec<MsfQuery> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| MsfQuery::new(a, b)))
        .collect();
    Ok(queries
        .into_par_iter()
        .map(|query| MsfPoint {
            query,
            result: compute_tle(params, h_matrix, query, settings, Some(base)),
        })
        .collect())
}
