//! CSV files written by the subcommands, and readers for the plotted ones.
//!
//! Numbers use the shortest representation that parses back to the same
//! value, so reruns of a deterministic computation give identical bytes.

use std::io::{Read, Write};

use anyhow::{bail, Context, Result};
use msflab_core::msf::MsfPoint;
use msflab_core::network::ModeSpectrum;
use msflab_core::oscillator::EventRecord;
use msflab_core::probe::BifurcationColumn;

pub const TLE_HEADER: [&str; 5] = ["alpha", "beta", "tle", "converged", "periods_used"];
pub const BIFURCATION_HEADER: [&str; 2] = ["sigma", "local_max"];
pub const PROBE_HEADER: [&str; 3] = ["sigma", "synchronized", "sync_time"];
pub const EVENTS_HEADER: [&str; 3] = ["tau_c", "v_pre", "v_post"];
pub const MODES_HEADER: [&str; 6] = ["k", "gamma_re", "gamma_im", "tle", "converged", "periods_used"];

pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(header)?;
    Ok(out)
}

/// One row per grid point; failed points have empty result fields.
pub fn write_tle_grid<W: Write>(w: W, points: &[MsfPoint]) -> Result<()> {
    let mut out = writer(w, &TLE_HEADER)?;
    for p in points {
        let (tle, converged, periods) = match &p.result {
            Ok(r) => (num(r.lambda), r.converged.to_string(), r.periods_used.to_string()),
            Err(_) => (String::new(), String::new(), String::new()),
        };
        out.write_record([num(p.query.alpha), num(p.query.beta), tle, converged, periods])?;
    }
    out.flush()?;
    Ok(())
}

/// One row per recorded maximum; synchronised runs give a single zero.
pub fn write_bifurcation<W: Write>(w: W, columns: &[BifurcationColumn]) -> Result<()> {
    let mut out = writer(w, &BIFURCATION_HEADER)?;
    for c in columns {
        for m in c.maxima().unwrap_or_default() {
            out.write_record([num(c.sigma), num(m)])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_probe_summary<W: Write>(w: W, columns: &[BifurcationColumn]) -> Result<()> {
    let mut out = writer(w, &PROBE_HEADER)?;
    for c in columns {
        let (synced, time) = match &c.result {
            Ok(r) => (r.synchronized.to_string(), r.sync_time.map(num).unwrap_or_default()),
            Err(_) => (String::new(), String::new()),
        };
        out.write_record([num(c.sigma), synced, time])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_events<W: Write>(w: W, events: &[EventRecord]) -> Result<()> {
    let mut out = writer(w, &EVENTS_HEADER)?;
    for e in events {
        out.write_record([num(e.tau_c), num(e.v_pre), num(e.v_post)])?;
    }
    out.flush()?;
    Ok(())
}

/// Mode 0 is the synchronous mode and has no exponent.
pub fn write_modes<W: Write>(w: W, spectrum: &ModeSpectrum) -> Result<()> {
    let mut out = writer(w, &MODES_HEADER)?;
    for (k, gamma) in spectrum.eigenvalues.iter().enumerate() {
        let (tle, converged, periods) = match spectrum.tle.get(k).and_then(|r| r.as_ref()) {
            Some(r) => (num(r.lambda), r.converged.to_string(), r.periods_used.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        out.write_record([k.to_string(), num(gamma.re), num(gamma.im), tle, converged, periods])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TleRow {
    pub alpha: f64,
    pub beta: f64,
    pub tle: f64,
    pub converged: bool,
}

fn reader<R: Read>(r: R, header: &[&str]) -> Result<csv::Reader<R>> {
    let mut rd = csv::Reader::from_reader(r);
    let found: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if found != header {
        bail!("expected columns {}, found {}", header.join(","), found.join(","));
    }
    Ok(rd)
}

fn field(rec: &csv::StringRecord, i: usize, line: u64) -> Result<f64> {
    rec[i]
        .parse::<f64>()
        .with_context(|| format!("line {line}: '{}' is not a number", &rec[i]))
}

/// Rows of a TLE grid file, skipping failed points.
pub fn read_tle_grid<R: Read>(r: R) -> Result<Vec<TleRow>> {
    let mut rows = Vec::new();
    for rec in reader(r, &TLE_HEADER)?.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec[2].is_empty() {
            continue;
        }
        rows.push(TleRow {
            alpha: field(&rec, 0, line)?,
            beta: field(&rec, 1, line)?,
            tle: field(&rec, 2, line)?,
            converged: &rec[3] == "true",
        });
    }
    Ok(rows)
}

pub fn read_bifurcation<R: Read>(r: R) -> Result<Vec<(f64, f64)>> {
    let mut rows = Vec::new();
    for rec in reader(r, &BIFURCATION_HEADER)?.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((field(&rec, 0, line)?, field(&rec, 1, line)?));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use msflab_core::error::MsfError;
    use msflab_core::msf::{MsfQuery, TleResult};

    fn tle(lambda: f64, converged: bool) -> TleResult {
        TleResult {
            lambda,
            converged,
            periods_used: 120,
            transient_periods: 500,
            samples: vec![lambda],
            impacts: 0,
            warnings: vec![],
        }
    }

    #[test]
    fn tle_grid_round_trip() {
        let points = vec![
            MsfPoint { query: MsfQuery::real(-1.0), result: Ok(tle(-0.05, true)) },
            MsfPoint { query: MsfQuery::new(0.5, 0.25), result: Ok(tle(1e-7, false)) },
            MsfPoint { query: MsfQuery::real(2.0), result: Err(MsfError::Resonance) },
        ];
        let mut buf = Vec::new();
        write_tle_grid(&mut buf, &points).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "alpha,beta,tle,converged,periods_used\n-1.0,0.0,-0.05,true,120\n0.5,0.25,1e-7,false,120\n2.0,0.0,,,\n"
        );
        let rows = read_tle_grid(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1], TleRow { alpha: 0.5, beta: 0.25, tle: 1e-7, converged: false });
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(read_tle_grid("a,b\n1,2\n".as_bytes()).is_err());
        assert!(read_bifurcation("sigma,local_max\n0.1,x\n".as_bytes()).is_err());
    }

    #[test]
    fn events_file_layout() {
        let events = [EventRecord { tau_c: 1.5, v_pre: 0.25, v_post: -0.25, grazing: false }];
        let mut buf = Vec::new();
        write_events(&mut buf, &events).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "tau_c,v_pre,v_post\n1.5,0.25,-0.25\n");
    }
}
