//! `trace.csv` rows: one line per sample and drone, ordered by time then drone.

use std::io::{Read, Write};

use stlfleet::mission::Mission;
use stlfleet::planner::FleetSamples;
use stlfleet::primitives::AxisState;
use stlfleet::stl::TimeGrid;

use crate::CliError;

pub const HEADER: [&str; 11] = ["t", "drone", "px", "py", "pz", "vx", "vy", "vz", "ax", "ay", "az"];

/// Round-trip float formatting (17 significant digits).
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trace<W: Write>(samples: &FleetSamples, ids: &[String], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for k in 0..samples.grid.count() {
        let t = num(samples.grid.time(k));
        for (d, id) in ids.iter().enumerate() {
            let s = samples.state(k, d);
            let mut row = vec![t.clone(), id.clone()];
            row.extend(s.iter().map(|a| num(a.p)));
            row.extend(s.iter().map(|a| num(a.v)));
            row.extend(s.iter().map(|a| num(a.a)));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn bad(line: u64, message: impl Into<String>) -> CliError {
    CliError::Trace {
        line,
        message: message.into(),
    }
}

/// Parses a trace for `mission`: the header must match exactly, rows must
/// cover every drone at every sample of `[0, T]` in order.
pub fn read_trace<R: Read>(input: R, mission: &Mission) -> Result<FleetSamples, CliError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(HEADER) {
        return Err(bad(1, format!("header must be `{}`", HEADER.join(","))));
    }
    let grid = mission.grid()?;
    let q = mission.drone_count();
    let ts = grid.sample_period();
    let mut states = Vec::with_capacity(grid.count() * q);
    for (i, record) in r.records().enumerate() {
        let line = i as u64 + 2;
        let record = record?;
        if record.len() != HEADER.len() {
            return Err(bad(line, format!("expected {} fields, found {}", HEADER.len(), record.len())));
        }
        let (k, d) = (i / q, i % q);
        if k >= grid.count() {
            return Err(bad(line, "more rows than the mission horizon allows"));
        }
        let field = |j: usize| -> Result<f64, CliError> {
            let v: f64 = record[j]
                .trim()
                .parse()
                .map_err(|_| bad(line, format!("`{}` is not a number in column {}", &record[j], HEADER[j])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(line, format!("non-finite value in column {}", HEADER[j])))
            }
        };
        let t = field(0)?;
        if (t - grid.time(k)).abs() > 1e-9 * ts.max(1.0) {
            return Err(bad(line, format!("expected t = {} for this row, found {t}", grid.time(k))));
        }
        if record[1].trim() != mission.drones[d].id {
            return Err(bad(line, format!("expected drone `{}`, found `{}`", mission.drones[d].id, &record[1])));
        }
        let mut s = [AxisState::default(); 3];
        for (ax, st) in s.iter_mut().enumerate() {
            *st = AxisState::new(field(2 + ax)?, field(5 + ax)?, field(8 + ax)?);
        }
        states.push(s);
    }
    if states.len() != grid.count() * q {
        return Err(bad(
            states.len() as u64 + 1,
            format!("trace ends early: {} rows for {} samples of {} drones", states.len(), grid.count(), q),
        ));
    }
    Ok(FleetSamples {
        grid,
        drone_count: q,
        states,
    })
}

/// One column per drone after the time column.
pub fn write_profile<W: Write>(grid: &TimeGrid, ids: &[String], columns: &[Vec<f64>], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(ids.iter().cloned());
    w.write_record(&header)?;
    for k in 0..grid.count() {
        let mut row = vec![num(grid.time(k))];
        row.extend(columns.iter().map(|c| num(c[k])));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
