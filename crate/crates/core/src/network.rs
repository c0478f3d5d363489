//! Coupling graphs, their eigenmodes and synchronisation verdicts.

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{MsfError, Result};
use crate::matrix::{solve_eigen, SquareMatrix};
use crate::msf::{compute_tle, settle_transient, CouplingMatrixH, MsfQuery, TleResult, TleSettings};
use crate::oscillator::ImpactOscillatorParams;

/// Tolerance on row sums of a diffusive coupling matrix.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;
const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// Half-width of the band around zero where the verdict is marginal.
pub const DEFAULT_VERDICT_MARGIN: f64 = 1e-3;

/// Diffusive coupling coefficients between network nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingGraph {
    n: usize,
    g: Vec<f64>,
    symmetric: bool,
}

impl CouplingGraph {
    /// Row-major coefficients; every row must sum to zero.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(MsfError::InvalidGraph("graph has no nodes".into()));
        }
        if entries.len() != n * n {
            return Err(MsfError::InvalidGraph(format!(
                "{n} nodes need {} coefficients, got {}",
                n * n,
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|v| !v.is_finite()) {
            return Err(MsfError::InvalidGraph(format!("non-finite coefficient {bad}")));
        }
        for (i, row) in entries.chunks(n).enumerate() {
            let sum: f64 = row.iter().sum();
            if sum.abs() > ROW_SUM_TOLERANCE {
                return Err(MsfError::InvalidGraph(format!(
                    "row {} sums to {sum:e}, not zero",
                    i + 1
                )));
            }
        }
        let symmetric = (0..n).all(|i| {
            (0..i).all(|j| (entries[i * n + j] - entries[j * n + i]).abs() <= SYMMETRY_TOLERANCE)
        });
        Ok(CouplingGraph {
            n,
            g: entries,
            symmetric,
        })
    }

    /// Two mutually coupled nodes, `[[-1, 1], [1, -1]]`.
    pub fn two_node() -> Self {
        Self::all_to_all(2)
    }

    /// Complete graph with unit weights: off-diagonal 1, diagonal `-(n-1)`.
    pub fn all_to_all(n: usize) -> Self {
        let g = (0..n * n)
            .map(|k| if k / n == k % n { -(n as f64 - 1.0) } else { 1.0 })
            .collect();
        CouplingGraph {
            n,
            g,
            symmetric: true,
        }
    }

    /// Undirected cycle with unit weights. Needs at least three nodes.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(MsfError::InvalidGraph(format!("a ring needs 3 or more nodes, got {n}")));
        }
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            g[i * n + i] = -2.0;
            g[i * n + (i + 1) % n] = 1.0;
            g[i * n + (i + n - 1) % n] = 1.0;
        }
        Ok(CouplingGraph {
            n,
            g,
            symmetric: true,
        })
    }

    /// Whitespace-separated rows, one per node. Blank lines and text after
    /// `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let row = content
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| MsfError::Parse {
                        line,
                        message: format!("'{tok}' is not a number"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push((line, row));
        }
        let n = rows.len();
        if n == 0 {
            return Err(MsfError::Parse {
                line: text.lines().count().max(1),
                message: "no matrix rows".into(),
            });
        }
        let mut entries = Vec::with_capacity(n * n);
        for (line, row) in rows {
            if row.len() != n {
                return Err(MsfError::Parse {
                    line,
                    message: format!("expected {n} entries, found {}", row.len()),
                });
            }
            let sum: f64 = row.iter().sum();
            if sum.abs() > ROW_SUM_TOLERANCE {
                return Err(MsfError::Parse {
                    line,
                    message: format!("row sums to {sum:e}, not zero"),
                });
            }
            entries.extend(row);
        }
        Self::new(n, entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| MsfError::InvalidGraph(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.g
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn to_matrix(&self) -> SquareMatrix {
        SquareMatrix::from_real(self.n, &self.g)
    }
}

/// Eigenvalues of the coupling matrix, `gamma_0` (the one nearest zero)
/// first, the rest by decreasing real part. Symmetric graphs report real
/// eigenvalues.
pub fn graph_spectrum(g: &CouplingGraph) -> Result<Vec<Complex64>> {
    let mut values = solve_eigen(&g.to_matrix())?.values;
    if g.is_symmetric() {
        for z in &mut values {
            z.im = 0.0;
        }
    }
    let zero = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(k, _)| k)
        .expect("graph has at least one node");
    let gamma0 = values.remove(zero);
    values.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    values.insert(0, gamma0);
    Ok(values)
}

/// Graph eigenvalues with the transversal exponent of every mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSpectrum {
    pub sigma: f64,
    pub eigenvalues: Vec<Complex64>,
    /// Per mode; index 0 is the synchronous mode and is left empty.
    pub tle: Vec<Option<TleResult>>,
    /// Modes whose exponent could not be computed.
    pub errors: Vec<(usize, MsfError)>,
}

impl ModeSpectrum {
    pub fn transverse_exponents(&self) -> Result<Vec<f64>> {
        if self.eigenvalues.len() < 2 {
            return Err(MsfError::Incomplete("graph has no transverse modes".into()));
        }
        (1..self.eigenvalues.len())
            .map(|k| match self.tle.get(k) {
                Some(Some(r)) => Ok(r.lambda),
                _ => Err(MsfError::Incomplete(format!("no exponent for mode {k}"))),
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Unstable,
    Marginal,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Marginal => "marginal",
        })
    }
}

/// Stable iff every exponent is below `-margin`, unstable iff any exceeds
/// `+margin`.
pub fn verdict_from_exponents(exponents: &[f64], margin: f64) -> Verdict {
    if exponents.iter().any(|&l| l > margin) {
        Verdict::Unstable
    } else if exponents.iter().all(|&l| l < -margin) {
        Verdict::Stable
    } else {
        Verdict::Marginal
    }
}

pub fn sync_verdict(spectrum: &ModeSpectrum, margin: f64) -> Result<Verdict> {
    Ok(verdict_from_exponents(&spectrum.transverse_exponents()?, margin))
}

/// Computes the exponent of every transverse mode at coupling strength
/// `sigma`. Modes with equal eigenvalues share one computation.
pub fn mode_spectrum(
    p: &ImpactOscillatorParams,
    h: &CouplingMatrixH,
    graph: &CouplingGraph,
    sigma: f64,
    settings: &TleSettings,
) -> Result<ModeSpectrum> {
    if !sigma.is_finite() {
        return Err(MsfError::invalid(format!("sigma = {sigma} must be finite")));
    }
    let eigenvalues = graph_spectrum(graph)?;
    let base = settle_transient(p, settings)?;

    let mut distinct: Vec<Complex64> = Vec::new();
    let mut which = vec![usize::MAX; eigenvalues.len()];
    for (k, gamma) in eigenvalues.iter().enumerate().skip(1) {
        match distinct.iter().position(|d| (d - gamma).norm() <= 1e-12) {
            Some(i) => which[k] = i,
            None => {
                which[k] = distinct.len();
                distinct.push(*gamma);
            }
        }
    }
    let computed: Vec<Result<TleResult>> = distinct
        .par_iter()
        .map(|gamma| {
            let q = MsfQuery::new(sigma * gamma.re, sigma * gamma.im);
            compute_tle(p, h, q, settings, Some(base))
        })
        .collect();

    let mut tle = vec![None];
    let mut errors = Vec::new();
    for (k, &i) in which.iter().enumerate().skip(1) {
        match &computed[i] {
            Ok(r) => tle.push(Some(r.clone())),
            Err(e) => {
                tle.push(None);
                errors.push((k, e.clone()));
            }
        }
    }
    Ok(ModeSpectrum {
        sigma,
        eigenvalues,
        tle,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reals(g: &CouplingGraph) -> Vec<f64> {
        graph_spectrum(g).unwrap().iter().map(|z| z.re).collect()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9)
    }

    #[test]
    fn spectra_of_standard_graphs() {
        assert!(close(&reals(&CouplingGraph::two_node()), &[0.0, -2.0]));
        assert!(close(&reals(&CouplingGraph::all_to_all(3)), &[0.0, -3.0, -3.0]));
        assert!(close(&reals(&CouplingGraph::ring(4).unwrap()), &[0.0, -2.0, -2.0, -4.0]));
    }

    #[test]
    fn directed_graph_keeps_complex_eigenvalues() {
        // Directed 3-cycle: eigenvalues 0 and -3/2 +- i sqrt(3)/2.
        let g = CouplingGraph::new(3, vec![-1.0, 1.0, 0.0, 0.0, -1.0, 1.0, 1.0, 0.0, -1.0]).unwrap();
        assert!(!g.is_symmetric());
        let s = graph_spectrum(&g).unwrap();
        assert!(s[0].norm() < 1e-9);
        assert!((s[1].re + 1.5).abs() < 1e-9 && (s[1].im.abs() - 0.75f64.sqrt()).abs() < 1e-9);
        assert!((s[1] - s[2].conj()).norm() < 1e-9);
    }

    #[test]
    fn row_sums_are_enforced() {
        let err = CouplingGraph::new(2, vec![-1.0, 1.0, 1.0, -0.5]).unwrap_err();
        assert!(matches!(err, MsfError::InvalidGraph(_)));
    }

    #[test]
    fn parse_reports_line_numbers() {
        let g = CouplingGraph::parse("# pair\n-1 1\n\n1 -1\n").unwrap();
        assert_eq!(g, CouplingGraph::two_node());
        let err = CouplingGraph::parse("-1 1\n1 x\n").unwrap_err();
        assert_eq!(err, MsfError::Parse { line: 2, message: "'x' is not a number".into() });
        let err = CouplingGraph::parse("-1 1\n\n1 -2\n").unwrap_err();
        assert!(matches!(err, MsfError::Parse { line: 3, .. }));
        let err = CouplingGraph::parse("-1 1\n1 -1 0\n").unwrap_err();
        assert!(matches!(err, MsfError::Parse { line: 2, .. }));
    }

    #[test]
    fn verdict_examples() {
        assert_eq!(verdict_from_exponents(&[-0.02, -0.05], DEFAULT_VERDICT_MARGIN), Verdict::Stable);
        assert_eq!(verdict_from_exponents(&[0.01, -0.3], DEFAULT_VERDICT_MARGIN), Verdict::Unstable);
        assert_eq!(verdict_from_exponents(&[-0.0004], DEFAULT_VERDICT_MARGIN), Verdict::Marginal);
    }

    #[test]
    fn missing_modes_are_incomplete() {
        let spectrum = ModeSpectrum {
            sigma: 1.0,
            eigenvalues: vec![Complex64::new(0.0, 0.0), Complex64::new(-2.0, 0.0)],
            tle: vec![None, None],
            errors: vec![],
        };
        assert!(matches!(
            sync_verdict(&spectrum, DEFAULT_VERDICT_MARGIN),
            Err(MsfError::Incomplete(_))
        ));
    }

    #[test]
    fn smooth_modes_follow_the_eigenvalue_oracle() {
        // Without the wall, mode k has exponent max Re eig(J + sigma gamma_k H).
        let p = ImpactOscillatorParams::elastic().without_wall();
        let settings = TleSettings {
            transient_periods: 0,
            ..TleSettings::default()
        };
        let s = mode_spectrum(&p, &CouplingMatrixH::position_spring(), &CouplingGraph::all_to_all(3), -0.5, &settings)
            .unwrap();
        // sigma gamma = 1.5: lambda^2 + 0.1 lambda - 0.5 = 0.
        let want = (-0.1 + (0.01f64 + 2.0).sqrt()) / 2.0;
        let got = s.transverse_exponents().unwrap();
        assert_eq!(got.len(), 2);
        assert!(got.iter().all(|l| (l - want).abs() < 1e-3), "{got:?}");
        assert_eq!(sync_verdict(&s, DEFAULT_VERDICT_MARGIN).unwrap(), Verdict::Unstable);
    }
}
