//! Subcommand execution.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use msflab_core::msf::{compute_tle, msf_sweep, CouplingMatrixH, MsfPoint, MsfQuery, TleWarning};
use msflab_core::network::{mode_spectrum, sync_verdict, CouplingGraph, DEFAULT_VERDICT_MARGIN};
use msflab_core::oscillator::{ImpactOscillator, OscState};
use msflab_core::probe::{bifurcation_scan, run_probe, simulate_network, BifurcationColumn};

use crate::config::ExperimentConfig;
use crate::output;
use crate::plot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    /// Exponent at the single coupling value tle.alpha + i tle.beta.
    Tle,
    /// Exponent over the alpha x beta grid of the sweep section.
    MsfSweep,
    /// One two-oscillator probe at probe.sigma.
    Probe,
    /// Probe runs over the sigma grid of the sweep section.
    Bifurcation,
    /// Mode exponents and stability verdict for a coupling graph.
    Network,
    /// Event log of a single oscillator.
    Simulate,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub plot: bool,
}

/// Exit status: every point succeeded and converged.
pub const EXIT_OK: i32 = 0;
/// At least one point failed, or the run could not start.
pub const EXIT_FAILED: i32 = 1;
/// All points finished but some exponent did not meet the convergence test.
pub const EXIT_UNCONVERGED: i32 = 2;

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
    pub unconverged: usize,
    pub notes: Vec<String>,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        if !self.failures.is_empty() {
            EXIT_FAILED
        } else if self.unconverged > 0 {
            EXIT_UNCONVERGED
        } else {
            EXIT_OK
        }
    }

    fn tally(&mut self, points: &[MsfPoint]) {
        for p in points {
            match &p.result {
                Ok(r) => {
                    if !r.converged {
                        self.unconverged += 1;
                    }
                    let flagged = r
                        .warnings
                        .iter()
                        .filter(|w| !matches!(w, TleWarning::ImaginaryPartDiscarded { .. }))
                        .count();
                    if flagged > 0 {
                        self.notes.push(format!(
                            "alpha = {}, beta = {}: {flagged} warning(s)",
                            p.query.alpha, p.query.beta
                        ));
                    }
                }
                Err(e) => self
                    .failures
                    .push(format!("alpha = {}, beta = {}: {e}", p.query.alpha, p.query.beta)),
            }
        }
    }

    fn tally_probes(&mut self, columns: &[BifurcationColumn]) {
        for c in columns {
            if let Err(e) = &c.result {
                self.failures.push(format!("sigma = {}: {e}", c.sigma));
            }
        }
    }
}

fn create(dir: &Path, name: &str, report: &mut Report) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    report.files.push(path);
    Ok(BufWriter::new(file))
}

fn plot_into(report: &mut Report, dir: &Path, name: &str, draw: impl FnOnce(&Path) -> Result<()>) {
    let path = dir.join(name);
    match draw(&path) {
        Ok(()) => report.files.push(path),
        Err(e) => report.notes.push(format!("{name} not drawn: {e:#}")),
    }
}

/// Runs one subcommand and writes its outputs into `opts.out_dir`.
///
/// Grid computations use the current rayon pool. Results are written in grid
/// order regardless of completion order.
pub fn run(cmd: Subcommand, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Report> {
    cfg.validate()?;
    let dir = &opts.out_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut report = Report::default();
    let effective = cfg.effective().to_toml()?;
    std::fs::write(dir.join("config.toml"), effective)?;
    report.files.push(dir.join("config.toml"));

    let params = cfg.params();
    let h = CouplingMatrixH::position_spring();
    let plot = opts.plot || cfg.output.plot;

    match cmd {
        Subcommand::Tle => {
            let query = MsfQuery::new(cfg.tle.alpha, cfg.tle.beta);
            let point = MsfPoint {
                query,
                result: compute_tle(&params, &h, query, &cfg.tle.settings(), None),
            };
            let points = [point];
            output::write_tle_grid(create(dir, "tle.csv", &mut report)?, &points)?;
            report.tally(&points);
            if let Ok(r) = &points[0].result {
                report.notes.push(format!(
                    "tle = {} ({}converged after {} periods)",
                    r.lambda,
                    if r.converged { "" } else { "not " },
                    r.periods_used
                ));
            }
            if plot {
                let csv = dir.join("tle.csv");
                plot_into(&mut report, dir, "tle.svg", |svg| plot::plot_tle_csv(&csv, svg, false));
            }
        }
        Subcommand::MsfSweep => {
            let betas = cfg.sweep.betas();
            let points = msf_sweep(&params, &h, &cfg.sweep.alphas(), &betas, &cfg.tle.settings())?;
            output::write_tle_grid(create(dir, "msf.csv", &mut report)?, &points)?;
            report.tally(&points);
            if plot {
                let csv = dir.join("msf.csv");
                plot_into(&mut report, dir, "msf.svg", |svg| plot::plot_tle_csv(&csv, svg, false));
                if betas == [0.0] {
                    plot_into(&mut report, dir, "msf_sigma.svg", |svg| plot::plot_tle_csv(&csv, svg, true));
                }
            }
        }
        Subcommand::Probe => {
            let column = BifurcationColumn {
                sigma: cfg.probe.sigma,
                result: run_probe(&params, &h, &cfg.probe),
            };
            if let Ok(r) = &column.result {
                report.notes.push(match r.sync_time {
                    Some(t) => format!("synchronized at t = {t}"),
                    None => format!("not synchronized after {} periods", r.periods_run.round()),
                });
            }
            let columns = [column];
            output::write_probe_summary(create(dir, "probe.csv", &mut report)?, &columns)?;
            output::write_bifurcation(create(dir, "probe_maxima.csv", &mut report)?, &columns)?;
            report.tally_probes(&columns);
        }
        Subcommand::Bifurcation => {
            let columns = bifurcation_scan(&params, &h, &cfg.sweep.sigmas(), &cfg.probe)?;
            output::write_bifurcation(create(dir, "bifurcation.csv", &mut report)?, &columns)?;
            output::write_probe_summary(create(dir, "probe.csv", &mut report)?, &columns)?;
            report.tally_probes(&columns);
            if plot {
                let csv = dir.join("bifurcation.csv");
                plot_into(&mut report, dir, "bifurcation.svg", |svg| plot::plot_bifurcation_csv(&csv, svg));
            }
        }
        Subcommand::Network => {
            let graph = match &cfg.network.graph {
                Some(path) => CouplingGraph::load(path)?,
                None => CouplingGraph::two_node(),
            };
            let sigma = cfg.network.sigma;
            let spectrum = mode_spectrum(&params, &h, &graph, sigma, &cfg.tle.settings())?;
            output::write_modes(create(dir, "modes.csv", &mut report)?, &spectrum)?;
            for (k, e) in &spectrum.errors {
                report.failures.push(format!("mode {k}: {e}"));
            }
            for r in spectrum.tle.iter().flatten() {
                if !r.converged {
                    report.unconverged += 1;
                }
            }
            let line = match sync_verdict(&spectrum, DEFAULT_VERDICT_MARGIN) {
                Ok(v) => {
                    let worst = spectrum
                        .transverse_exponents()?
                        .into_iter()
                        .fold(f64::NEG_INFINITY, f64::max);
                    format!("verdict: {v} (sigma = {sigma}, largest transverse tle = {worst})")
                }
                Err(e) => {
                    report.failures.push(e.to_string());
                    format!("verdict: unavailable ({e})")
                }
            };
            std::fs::write(dir.join("verdict.txt"), format!("{line}\n"))?;
            report.files.push(dir.join("verdict.txt"));
            report.notes.push(line);
            if cfg.network.simulate {
                let settings = msflab_core::probe::ProbeSettings {
                    sigma,
                    ..cfg.probe.clone()
                };
                let column = BifurcationColumn {
                    sigma,
                    result: simulate_network(&params, &h, &graph, &settings),
                };
                let columns = [column];
                output::write_probe_summary(create(dir, "network_probe.csv", &mut report)?, &columns)?;
                report.tally_probes(&columns);
            }
        }
        Subcommand::Simulate => {
            let osc = ImpactOscillator::new(params)?.with_scan_step(cfg.tle.scan_step)?;
            let start = OscState::new(cfg.simulate.x0, cfg.simulate.v0, 0.0);
            let traj = osc.simulate(&start, cfg.simulate.periods * osc.period())?;
            output::write_events(create(dir, "events.csv", &mut report)?, &traj.events)?;
            report.notes.push(format!(
                "{} impacts; final state x = {}, v = {} at tau = {}",
                traj.events.len(),
                traj.end.x,
                traj.end.v,
                traj.end.tau
            ));
        }
    }
    Ok(report)
}
