//! Observation and truth files.
//!
//! Observations are long-format CSV with a 1-based step column `t`:
//! `t,value` for the skew-normal model (`obs_per_step` rows per step),
//! `t,y` for stochastic volatility and `t,time` for Hawkes event times,
//! where step `t` covers `[(t-1) * interval, t * interval)`. Latent truth is
//! `t,state`.

use std::fs;
use std::io::Write;
use std::path::Path;

use abc_smc2::models::{EventSeries, HawkesKnown, SimulatedData, SnSample};

use crate::output::fmt_real;
use crate::CliError;

fn bad(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {msg}", path.display()))
}

/// `(t, value)` rows of a two-column file with the given header.
fn read_pairs(path: &Path, header: [&str; 2]) -> Result<Vec<(usize, f64)>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(path, e))?;
    let found: Vec<String> = reader.headers().map_err(|e| bad(path, e))?.iter().map(str::to_owned).collect();
    if found != header {
        return Err(bad(path, format!("expected header {}, found {}", header.join(","), found.join(","))));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(path, e))?;
        let line = i + 2;
        let t: usize = record[0].trim().parse().map_err(|e| bad(path, format!("line {line}: t: {e}")))?;
        let v: f64 = record[1].trim().parse().map_err(|e| bad(path, format!("line {line}: {e}")))?;
        if t == 0 {
            return Err(bad(path, format!("line {line}: t starts at 1")));
        }
        rows.push((t, v));
    }
    Ok(rows)
}

/// Values grouped by step for steps `1..=horizon`, in file order within a
/// step.
fn group(path: &Path, rows: Vec<(usize, f64)>, horizon: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let mut out = vec![Vec::new(); horizon];
    for (t, v) in rows {
        if t <= horizon {
            out[t - 1].push(v);
        }
    }
    if let Some(t) = out.iter().position(Vec::is_empty) {
        return Err(bad(path, format!("no observations for step {}", t + 1)));
    }
    Ok(out)
}

pub fn read_skew_normal(path: &Path, obs_per_step: usize, horizon: usize) -> Result<Vec<SnSample>, CliError> {
    let groups = group(path, read_pairs(path, ["t", "value"])?, horizon)?;
    groups
        .into_iter()
        .enumerate()
        .map(|(i, values)| {
            if values.len() != obs_per_step {
                return Err(bad(path, format!("step {} has {} values, expected {obs_per_step}", i + 1, values.len())));
            }
            SnSample::new(values).map_err(|e| bad(path, format!("step {}: {e}", i + 1)))
        })
        .collect()
}

pub fn read_sv(path: &Path, horizon: usize) -> Result<Vec<f64>, CliError> {
    let groups = group(path, read_pairs(path, ["t", "y"])?, horizon)?;
    groups
        .into_iter()
        .enumerate()
        .map(|(i, v)| match v.as_slice() {
            [y] => Ok(*y),
            _ => Err(bad(path, format!("step {} has {} values, expected 1", i + 1, v.len()))),
        })
        .collect()
}

pub fn read_hawkes(path: &Path, known: &HawkesKnown, horizon: usize) -> Result<Vec<EventSeries>, CliError> {
    let mut events = vec![Vec::new(); horizon];
    for (t, time) in read_pairs(path, ["t", "time"])? {
        if t <= horizon {
            events[t - 1].push(time);
        }
    }
    events
        .into_iter()
        .enumerate()
        .map(|(i, ev)| {
            let start = i as f64 * known.interval;
            EventSeries::new(start, start + known.interval, ev).map_err(|e| bad(path, format!("step {}: {e}", i + 1)))
        })
        .collect()
}

pub fn read_truth(path: &Path, horizon: usize) -> Result<Vec<f64>, CliError> {
    let groups = group(path, read_pairs(path, ["t", "state"])?, horizon)?;
    groups
        .into_iter()
        .enumerate()
        .map(|(i, v)| match v.as_slice() {
            [x] => Ok(*x),
            _ => Err(bad(path, format!("step {} has {} truth values", i + 1, v.len()))),
        })
        .collect()
}

pub fn write_data(path: &Path, data: &SimulatedData) -> Result<(), CliError> {
    let mut out = String::new();
    match data {
        SimulatedData::SkewNormal(steps) => {
            out.push_str("t,value\n");
            for (i, s) in steps.iter().enumerate() {
                for v in &s.values {
                    out.push_str(&format!("{},{}\n", i + 1, fmt_real(*v)));
                }
            }
        }
        SimulatedData::StochasticVolatility(y) => {
            out.push_str("t,y\n");
            for (i, v) in y.iter().enumerate() {
                out.push_str(&format!("{},{}\n", i + 1, fmt_real(*v)));
            }
        }
        SimulatedData::Hawkes(series) => {
            out.push_str("t,time\n");
            for (i, s) in series.iter().enumerate() {
                for v in &s.events {
                    out.push_str(&format!("{},{}\n", i + 1, fmt_real(*v)));
                }
            }
        }
    }
    write_file(path, &out)
}

pub fn write_truth(path: &Path, truth: &[f64]) -> Result<(), CliError> {
    let mut out = String::from("t,state\n");
    for (i, v) in truth.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, fmt_real(*v)));
    }
    write_file(path, &out)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = fs::File::create(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use abc_smc2::models::simulate_dataset;

    #[test]
    fn simulated_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let ds = simulate_dataset("sv", &[0.7], 5, 3).unwrap();
        write_data(&p, &ds.data).unwrap();
        assert_eq!(SimulatedData::StochasticVolatility(read_sv(&p, 5).unwrap()), ds.data);

        let ds = simulate_dataset("skew_normal", &[0.25, 2.0], 3, 3).unwrap();
        write_data(&p, &ds.data).unwrap();
        assert_eq!(SimulatedData::SkewNormal(read_skew_normal(&p, 100, 3).unwrap()), ds.data);
        assert!(read_skew_normal(&p, 50, 3).is_err());

        let ds = simulate_dataset("hawkes", &[0.5, 0.5], 4, 3).unwrap();
        write_data(&p, &ds.data).unwrap();
        assert_eq!(SimulatedData::Hawkes(read_hawkes(&p, &HawkesKnown::default(), 4).unwrap()), ds.data);

        write_truth(&p, &ds.truth).unwrap();
        assert_eq!(read_truth(&p, 4).unwrap(), ds.truth);
    }

    #[test]
    fn short_or_malformed_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "t,y\n1,0.5\n2,0.1\n").unwrap();
        assert!(matches!(read_sv(&p, 3), Err(CliError::Config(m)) if m.contains("step 3")));
        fs::write(&p, "t,value\n1,0.5\n").unwrap();
        assert!(read_sv(&p, 1).is_err());
        fs::write(&p, "t,y\n1,abc\n").unwrap();
        assert!(read_sv(&p, 1).is_err());
    }
}
