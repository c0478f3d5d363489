//! Direct simulation of diffusively coupled impact oscillators.
//!
//! Node `i` obeys the single-oscillator equation plus
//! `sigma * H * sum_j G_ij x_j`, and hits its own wall. For a symmetric
//! zero-row-sum `G` the network mean `u` moves like a single free oscillator,
//! and the deviations from it obey the constant linear system
//! `e' = (I (x) J + sigma G (x) H) e`. Between impacts both parts are
//! propagated in closed form; at an impact the reset of one node is split
//! into its effect on the mean and on the deviations.
//!
//! The two-node probe uses the half difference `d = (x1 - x2) / 2` as its only
//! deviation coordinate, so `x1 = u + d` and `x2 = u - d`. Identical nodes then
//! stay identical exactly, and relabelling the nodes negates `d` exactly.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MsfError, Result};
use crate::matrix::{expm_pade13, solve_eigen, SquareMatrix};
use crate::msf::{settle_transient, CouplingMatrixH, TleSettings};
use crate::network::CouplingGraph;
use crate::oscillator::{
    ImpactOscillator, ImpactOscillatorParams, OscState, CHATTER_CAP, IMPACT_TIME_TOLERANCE,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSettings {
    pub sigma: f64,
    /// Length of the random initial displacement of the perturbed node.
    pub perturbation_magnitude: f64,
    pub rng_seed: u64,
    pub max_periods: u32,
    pub sync_threshold: f64,
    /// Trailing forcing periods in which difference maxima are recorded.
    pub record_window: u32,
    pub transient_periods: u32,
    pub scan_step: f64,
    /// End the run as soon as synchronisation is detected.
    pub stop_on_sync: bool,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            sigma: 0.0,
            perturbation_magnitude: 1e-3,
            rng_seed: 0,
            max_periods: 2000,
            sync_threshold: 1e-10,
            record_window: 100,
            transient_periods: 500,
            scan_step: 1e-3,
            stop_on_sync: true,
        }
    }
}

impl ProbeSettings {
    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() {
            return Err(MsfError::invalid(format!("sigma = {} must be finite", self.sigma)));
        }
        if !(self.perturbation_magnitude >= 0.0 && self.perturbation_magnitude.is_finite()) {
            return Err(MsfError::invalid("perturbation magnitude must be non-negative"));
        }
        if !(self.sync_threshold > 0.0 && self.scan_step > 0.0 && self.scan_step.is_finite()) {
            return Err(MsfError::invalid("sync threshold and scan step must be positive"));
        }
        if self.max_periods == 0 || self.record_window == 0 || self.record_window > self.max_periods {
            return Err(MsfError::invalid(format!(
                "need 0 < record_window ({}) <= max_periods ({})",
                self.record_window, self.max_periods
            )));
        }
        Ok(())
    }

    fn tle_settings(&self) -> TleSettings {
        TleSettings {
            transient_periods: self.transient_periods,
            scan_step: self.scan_step,
            ..TleSettings::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeResult {
    pub synchronized: bool,
    /// Time from the start of the run to the beginning of the synchronised
    /// stretch.
    pub sync_time: Option<f64>,
    /// Local maxima of the position difference of nodes 1 and 2 within the
    /// record window; empty when synchronised.
    pub local_maxima: Vec<f64>,
    /// Simulated time in forcing periods.
    pub periods_run: f64,
    pub impacts: usize,
    /// Largest full-state difference between nodes seen during the run.
    pub peak_difference: f64,
}

/// `exp(K s)` for a constant real generator.
struct LinearFlow {
    n: usize,
    generator: SquareMatrix,
    modal: Option<(SquareMatrix, Vec<num_complex::Complex64>, SquareMatrix)>,
}

impl LinearFlow {
    fn new(n: usize, generator: &[f64]) -> Result<Self> {
        let generator = SquareMatrix::from_real(n, generator);
        let modal = solve_eigen(&generator).ok().and_then(|eig| {
            if eig.near_defective() {
                return None;
            }
            let inv = eig.vectors.inverse()?;
            Some((eig.vectors, eig.values, inv))
        });
        Ok(LinearFlow {
            n,
            generator,
            modal,
        })
    }

    fn at(&self, s: f64) -> Result<Vec<f64>> {
        let n = self.n;
        match &self.modal {
            Some((v, values, inv)) => {
                let e: Vec<_> = values.iter().map(|l| (l * s).exp()).collect();
                Ok((0..n * n)
                    .map(|k| {
                        let (i, j) = (k / n, k % n);
                        (0..n).map(|m| v[(i, m)] * e[m] * inv[(m, j)]).sum::<num_complex::Complex64>().re
                    })
                    .collect())
            }
            None => Ok(expm_pade13(&self.generator.scale_real(s))?.to_real_vec()),
        }
    }
}

fn apply(m: &[f64], z: &[f64], out: &mut [f64]) {
    let n = z.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = m[i * n..(i + 1) * n].iter().zip(z).map(|(a, b)| a * b).sum();
    }
}

/// Coupled identical oscillators as network mean plus deviation coordinates.
struct CoupledNetwork<'a> {
    osc: &'a ImpactOscillator,
    nodes: usize,
    /// Deviation coordinates, each a position-velocity pair.
    modes: usize,
    /// Node offset from the mean: `offset_i = sum_m weights[i][m] z_m`.
    weights: Vec<f64>,
    /// Velocity change of mode `m` per unit velocity jump of node `i`.
    kicks: Vec<f64>,
    flow: LinearFlow,
}

struct NetState {
    u: OscState,
    z: Vec<f64>,
}

impl<'a> CoupledNetwork<'a> {
    fn new(
        osc: &'a ImpactOscillator,
        h: &CouplingMatrixH,
        sigma: f64,
        nodes: usize,
        modes: usize,
        mode_coupling: &[f64],
        weights: Vec<f64>,
        kicks: Vec<f64>,
    ) -> Result<Self> {
        if h.dim() != 2 {
            return Err(MsfError::invalid("the oscillator has a 2-dimensional state"));
        }
        let j = osc.params().segment_generator();
        let hm = h.entries();
        let dim = 2 * modes;
        let mut k = vec![0.0; dim * dim];
        for a in 0..modes {
            for b in 0..modes {
                let c = sigma * mode_coupling[a * modes + b];
                for r in 0..2 {
                    for s in 0..2 {
                        let own = if a == b { j[r][s] } else { 0.0 };
                        k[(2 * a + r) * dim + 2 * b + s] = own + c * hm[r * 2 + s];
                    }
                }
            }
        }
        Ok(CoupledNetwork {
            osc,
            nodes,
            modes,
            weights,
            kicks,
            flow: LinearFlow::new(dim, &k)?,
        })
    }

    fn pair(osc: &'a ImpactOscillator, h: &CouplingMatrixH, sigma: f64) -> Result<Self> {
        Self::new(osc, h, sigma, 2, 1, &[-2.0], vec![1.0, -1.0], vec![0.5, -0.5])
    }

    fn graph(osc: &'a ImpactOscillator, h: &CouplingMatrixH, graph: &CouplingGraph, sigma: f64) -> Result<Self> {
        if !graph.is_symmetric() {
            return Err(MsfError::InvalidGraph(
                "direct simulation needs a symmetric coupling graph".into(),
            ));
        }
        let n = graph.n_nodes();
        let weights = (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect();
        let kicks = (0..n * n)
            .map(|k| if k / n == k % n { 1.0 - 1.0 / n as f64 } else { -1.0 / n as f64 })
            .collect();
        Self::new(osc, h, sigma, n, n, graph.entries(), weights, kicks)
    }

    fn initial(&self, base: &OscState, displacement: &[[f64; 2]]) -> NetState {
        let inv_n = 1.0 / self.nodes as f64;
        let sum_x: f64 = displacement.iter().map(|p| p[0]).sum();
        let sum_v: f64 = displacement.iter().map(|p| p[1]).sum();
        let u = OscState::new(base.x + sum_x * inv_n, base.v + sum_v * inv_n, base.tau);
        let mut z = vec![0.0; 2 * self.modes];
        for m in 0..self.modes {
            for (i, p) in displacement.iter().enumerate() {
                let c = self.kicks[m * self.nodes + i];
                z[2 * m] += c * p[0];
                z[2 * m + 1] += c * p[1];
            }
        }
        NetState { u, z }
    }

    fn offset(&self, z: &[f64], i: usize) -> (f64, f64) {
        let w = &self.weights[i * self.modes..(i + 1) * self.modes];
        let mut out = (0.0, 0.0);
        for (m, c) in w.iter().enumerate() {
            if *c != 0.0 {
                out.0 += c * z[2 * m];
                out.1 += c * z[2 * m + 1];
            }
        }
        out
    }

    fn node(&self, s: &NetState, i: usize) -> (f64, f64) {
        let (dx, dv) = self.offset(&s.z, i);
        (s.u.x + dx, s.u.v + dv)
    }

    fn advance_by(&self, s: &NetState, dt: f64) -> Result<NetState> {
        let m = self.flow.at(dt)?;
        let mut z = vec![0.0; s.z.len()];
        apply(&m, &s.z, &mut z);
        Ok(NetState {
            u: self.osc.propagate_free(&s.u, dt),
            z,
        })
    }

    /// Crossing time of node `i` inside `(0, dt]`, if any.
    fn crossing(&self, s: &NetState, i: usize, wall: f64, dt: f64, end: &NetState) -> Result<Option<f64>> {
        let pos = |t: f64| -> Result<(f64, f64)> { Ok(self.node(&self.advance_by(s, t)?, i)) };
        let (x_end, v_end) = self.node(end, i);
        let upper = if x_end - wall > 0.0 {
            dt
        } else {
            let v0 = self.node(s, i).1;
            if !(v0 > 0.0 && v_end <= 0.0) {
                return Ok(None);
            }
            let (mut lo, mut hi) = (0.0, dt);
            while hi - lo > IMPACT_TIME_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if pos(mid)?.1 > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let apex = 0.5 * (lo + hi);
            if pos(apex)?.0 - wall <= 0.0 {
                return Ok(None);
            }
            apex
        };
        let (mut lo, mut hi) = (0.0, upper);
        while hi - lo > IMPACT_TIME_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if pos(mid)?.0 - wall > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(Some(lo))
    }

    /// Velocity reset of the listed nodes at the current instant.
    fn reset(&self, s: &mut NetState, hit: &[usize]) {
        let r = self.osc.params().restitution;
        let jumps: Vec<(usize, f64)> = hit.iter().map(|&i| (i, -(1.0 + r) * self.node(s, i).1)).collect();
        let total: f64 = jumps.iter().map(|j| j.1).sum();
        s.u.v += total / self.nodes as f64;
        for m in 0..self.modes {
            let dv: f64 = jumps.iter().map(|&(i, j)| self.kicks[m * self.nodes + i] * j).sum();
            s.z[2 * m + 1] += dv;
        }
    }

    /// Largest state difference between node 0 and any other node.
    fn spread(&self, z: &[f64]) -> f64 {
        let (x0, v0) = self.offset(z, 0);
        (1..self.nodes)
            .map(|i| {
                let (x, v) = self.offset(z, i);
                (x - x0).hypot(v - v0)
            })
            .fold(0.0, f64::max)
    }

    fn run(&self, base: &OscState, displacement: &[[f64; 2]], settings: &ProbeSettings) -> Result<ProbeResult> {
        let h = settings.scan_step;
        let period = self.osc.period();
        let duration = settings.max_periods as f64 * period;
        let record_from = (settings.max_periods - settings.record_window) as f64 * period;
        let wall = self.osc.wall();
        let step_map = self.flow.at(h)?;

        let mut state = self.initial(base, displacement);
        let tau0 = state.u.tau;
        let mut elapsed = 0.0;
        let mut impacts = 0usize;
        let mut recent: Vec<VecDeque<f64>> = vec![VecDeque::new(); self.nodes];
        let mut sync_start: Option<f64> = None;
        let mut synchronized = false;
        let mut peak_difference = 0.0f64;
        let mut maxima = Vec::new();
        let mut trail = [f64::NAN; 2];
        let mut scratch = vec![0.0; state.z.len()];

        loop {
            let spread = self.spread(&state.z);
            if !spread.is_finite() || !state.u.is_finite() {
                return Err(MsfError::Propagation(format!("network state at tau = {}", state.u.tau)));
            }
            peak_difference = peak_difference.max(spread);
            if spread < settings.sync_threshold {
                let start = *sync_start.get_or_insert(elapsed);
                if elapsed - start >= period {
                    synchronized = true;
                    if settings.stop_on_sync {
                        break;
                    }
                }
            } else {
                sync_start = None;
                if !settings.stop_on_sync {
                    synchronized = false;
                }
            }
            if self.nodes > 1 {
                let diff = (self.offset(&state.z, 0).0 - self.offset(&state.z, 1).0).abs();
                if trail[1] > trail[0] && trail[1] >= diff && elapsed >= record_from {
                    maxima.push(trail[1]);
                }
                trail = [trail[1], diff];
            }
            if elapsed >= duration {
                break;
            }

            apply(&step_map, &state.z, &mut scratch);
            let end = NetState {
                u: self.osc.propagate_free(&state.u, h),
                z: scratch.clone(),
            };
            let mut first: Option<f64> = None;
            let mut hits: Vec<(usize, f64)> = Vec::new();
            if let Some(wall) = wall {
                for i in 0..self.nodes {
                    if let Some(t) = self.crossing(&state, i, wall, h, &end)? {
                        first = Some(first.map_or(t, |f: f64| f.min(t)));
                        hits.push((i, t));
                    }
                }
            }
            match first {
                None => {
                    state = end;
                }
                Some(t) => {
                    let mut next = self.advance_by(&state, t)?;
                    let hit: Vec<usize> = hits
                        .iter()
                        .filter(|(_, c)| *c <= t + 2.0 * IMPACT_TIME_TOLERANCE)
                        .map(|(i, _)| *i)
                        .collect();
                    self.reset(&mut next, &hit);
                    let tau_c = next.u.tau;
                    for &i in &hit {
                        let q = &mut recent[i];
                        while q.front().is_some_and(|&x| x <= tau_c - period) {
                            q.pop_front();
                        }
                        q.push_back(tau_c);
                        if q.len() > CHATTER_CAP {
                            return Err(MsfError::Chatter {
                                count: q.len(),
                                tau: tau_c,
                            });
                        }
                    }
                    impacts += hit.len();
                    state = next;
                }
            }
            elapsed = state.u.tau - tau0;
        }

        Ok(ProbeResult {
            synchronized,
            sync_time: if synchronized { sync_start } else { None },
            local_maxima: if synchronized { Vec::new() } else { maxima },
            periods_run: elapsed / period,
            impacts,
            peak_difference,
        })
    }
}

/// Seeded random displacement of length `magnitude`; `stream` selects an
/// independent sequence for the same seed.
pub fn random_displacement(seed: u64, stream: u64, magnitude: f64) -> [f64; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let theta = rng.random::<f64>() * TAU;
    [magnitude * theta.cos(), magnitude * theta.sin()]
}

fn oscillator(p: &ImpactOscillatorParams, settings: &ProbeSettings) -> Result<ImpactOscillator> {
    settings.validate()?;
    ImpactOscillator::new(*p)?.with_scan_step(settings.scan_step)
}

/// Settled single-oscillator state shared by all probe runs.
pub fn probe_base_state(p: &ImpactOscillatorParams, settings: &ProbeSettings) -> Result<OscState> {
    settle_transient(p, &settings.tle_settings())
}

/// Two-node probe from `base` with explicit displacements of both nodes.
pub fn run_probe_from(
    p: &ImpactOscillatorParams,
    h: &CouplingMatrixH,
    settings: &ProbeSettings,
    base: &OscState,
    displacement: [[f64; 2]; 2],
) -> Result<ProbeResult> {
    let osc = oscillator(p, settings)?;
    CoupledNetwork::pair(&osc, h, settings.sigma)?.run(base, &displacement, settings)
}

/// Two mutually coupled oscillators started from the settled state, node 2
/// displaced in a random direction.
pub fn run_probe(
    p: &ImpactOscillatorParams,
    h: &CouplingMatrixH,
    settings: &ProbeSettings,
) -> Result<ProbeResult> {
    let base = probe_base_state(p, settings)?;
    let d = random_displacement(settings.rng_seed, 0, settings.perturbation_magnitude);
    run_probe_from(p, h, settings, &base, [[0.0, 0.0], d])
}

#[derive(Clone, Debug, PartialEq)]
pub struct BifurcationColumn {
    pub sigma: f64,
    pub result: Result<ProbeResult>,
}

impl BifurcationColumn {
    /// Difference maxima, a single zero for a synchronised run.
    pub fn maxima(&self) -> Option<Vec<f64>> {
        match &self.result {
            Ok(r) if r.synchronized => Some(vec![0.0]),
            Ok(r) => Some(r.local_maxima.clone()),
            Err(_) => None,
        }
    }
}

/// Probe runs over a grid of coupling strengths, in parallel. Run `k` draws
/// its displacement from stream `k` of the seed.
pub fn bifurcation_scan(
    p: &ImpactOscillatorParams,
    h: &CouplingMatrixH,
    sigmas: &[f64],
    settings: &ProbeSettings,
) -> Result<Vec<BifurcationColumn>> {
    if sigmas.is_empty() {
        return Err(MsfError::invalid("sigma grid must be non-empty"));
    }
    let base = probe_base_state(p, settings)?;
    Ok(sigmas
        .par_iter()
        .enumerate()
        .map(|(k, &sigma)| {
            let run = ProbeSettings {
                sigma,
                ..settings.clone()
            };
            let d = random_displacement(settings.rng_seed, k as u64, settings.perturbation_magnitude);
            BifurcationColumn {
                sigma,
                result: run_probe_from(p, h, &run, &base, [[0.0, 0.0], d]),
            }
        })
        .collect())
}

/// Direct simulation of a network on a symmetric graph. Every node except the
/// first gets an independent random displacement; the position difference
/// maxima refer to the first two nodes.
pub fn simulate_network(
    p: &ImpactOscillatorParams,
    h: &CouplingMatrixH,
    graph: &CouplingGraph,
    settings: &ProbeSettings,
) -> Result<ProbeResult> {
    let osc = oscillator(p, settings)?;
    let base = probe_base_state(p, settings)?;
    let displacement: Vec<[f64; 2]> = (0..graph.n_nodes())
        .map(|i| {
            if i == 0 {
                [0.0, 0.0]
            } else {
                random_displacement(settings.rng_seed, i as u64, settings.perturbation_magnitude)
            }
        })
        .collect();
    CoupledNetwork::graph(&osc, h, graph, settings.sigma)?.run(&base, &displacement, settings)
}
