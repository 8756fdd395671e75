//! CSV trace ingestion and emission.
//!
//! Every file starts with a `timestamp` column (seconds, strictly increasing
//! at a fixed step) followed by any of `green_kw.<dc>`, `price.<dc>` and
//! `rate.<class>`. Each column must appear in exactly one file. Power and
//! price columns must share one step; rate columns another. A row's value
//! holds until the next row, so hourly data expands to finer slots as a
//! step function.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use geoprofit_core::loss::WorkloadStats;
use geoprofit_core::simulator::{RawTraces, TraceSet};

use crate::config::{RunConfig, TraceSection};
use crate::error::{CliError, CliResult};
use crate::report::fmt_num;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Column {
    Green(usize),
    Price(usize),
    Rate(usize),
}

struct Series {
    file: PathBuf,
    start: f64,
    step: f64,
    values: Vec<f64>,
}

fn parse_header(name: &str, dcs: &[&str], classes: &[&str]) -> Option<Column> {
    let (kind, who) = name.split_once('.')?;
    match kind {
        "green_kw" => dcs.iter().position(|d| *d == who).map(Column::Green),
        "price" => dcs.iter().position(|d| *d == who).map(Column::Price),
        "rate" => classes.iter().position(|c| *c == who).map(Column::Rate),
        _ => None,
    }
}

fn read_file(path: &Path, dcs: &[&str], classes: &[&str]) -> CliResult<Vec<(Column, Series)>> {
    let shown = path.display();
    let err = |m: String| CliError::Traces(format!("{shown}: {m}"));
    let mut rdr =
        csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| err(format!("cannot open: {e}")))?;
    let header = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    if header.get(0) != Some("timestamp") {
        return Err(err("line 1, column 1: first column must be \"timestamp\"".into()));
    }
    let mut cols = Vec::with_capacity(header.len() - 1);
    for (k, name) in header.iter().enumerate().skip(1) {
        let c = parse_header(name, dcs, classes)
            .ok_or_else(|| err(format!("line 1, column {name}: not a configured green_kw/price/rate column")))?;
        if cols.contains(&c) {
            return Err(err(format!("line 1, column {name}: appears twice (column {})", k + 1)));
        }
        cols.push(c);
    }
    let mut times: Vec<f64> = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); cols.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let cell = |k: usize| -> CliResult<f64> {
            let name = &header[k];
            let raw = rec.get(k).unwrap_or("");
            let v: f64 =
                raw.parse().map_err(|_| err(format!("line {line}, column {name}: \"{raw}\" is not a number")))?;
            if !v.is_finite() {
                return Err(err(format!("line {line}, column {name}: value must be finite")));
            }
            Ok(v)
        };
        let t = cell(0)?;
        if let Some(&prev) = times.last() {
            if t == prev {
                return Err(err(format!("line {line}, column timestamp: duplicated timestamp {raw}", raw = &rec[0])));
            }
            if t < prev {
                return Err(err(format!("line {line}, column timestamp: timestamps must increase")));
            }
        }
        for (k, out) in values.iter_mut().enumerate() {
            let v = cell(k + 1)?;
            if v < 0.0 {
                return Err(err(format!("line {line}, column {}: negative value {v}", &header[k + 1])));
            }
            out.push(v);
        }
        times.push(t);
        if times.len() >= 3 {
            let n = times.len();
            let (first, last) = (times[1] - times[0], times[n - 1] - times[n - 2]);
            if (last - first).abs() > 1e-9 * first {
                return Err(err(format!("line {line}, column timestamp: step {last} differs from {first}")));
            }
        }
    }
    if times.len() < 2 {
        return Err(err("needs at least two data rows to fix the time step".into()));
    }
    let step = times[1] - times[0];
    Ok(cols
        .into_iter()
        .zip(values)
        .map(|(c, values)| (c, Series { file: path.to_path_buf(), start: times[0], step, values }))
        .collect())
}

/// Loads and aggregates trace files into slots.
pub fn load_traces(section: &TraceSection, cfg: &RunConfig) -> CliResult<TraceSet> {
    let dcs = cfg.dc_names();
    let classes = cfg.class_names();
    let mut found: HashMap<Column, Series> = HashMap::new();
    for path in &section.files {
        for (c, s) in read_file(path, &dcs, &classes)? {
            if let Some(prev) = found.get(&c) {
                return Err(CliError::Traces(format!(
                    "{}: column {} already read from {}",
                    path.display(),
                    column_name(c, &dcs, &classes),
                    prev.file.display()
                )));
            }
            found.insert(c, s);
        }
    }
    let mut take = |c: Column| {
        found.remove(&c).ok_or_else(|| {
            CliError::Traces(format!("missing column {} in the trace files", column_name(c, &dcs, &classes)))
        })
    };
    let mut green = Vec::new();
    let mut price = Vec::new();
    for i in 0..dcs.len() {
        green.push(take(Column::Green(i))?);
        price.push(take(Column::Price(i))?);
    }
    let rates = (0..classes.len()).map(|j| take(Column::Rate(j))).collect::<CliResult<Vec<_>>>()?;

    let start = green[0].start;
    let power_step = green[0].step;
    for s in green.iter().chain(&price).chain(&rates) {
        if s.start != start {
            return Err(CliError::Traces(format!(
                "{}: first timestamp {} differs from {start}",
                s.file.display(),
                s.start
            )));
        }
    }
    for s in green.iter().chain(&price) {
        if s.step != power_step {
            return Err(CliError::Traces(format!(
                "{}: power/price step {} differs from {power_step}",
                s.file.display(),
                s.step
            )));
        }
    }
    let rate_step = rates[0].step;
    if rates.iter().any(|s| s.step != rate_step) || rate_step < 1.0 || rate_step.fract() != 0.0 {
        return Err(CliError::Traces("rate columns must share one step that is a whole number of seconds".into()));
    }
    // coarse rate rows carry no lag structure; they are expanded to seconds
    // for the mean and the class falls back to i.i.d. with `fallback_cv`
    let coarse = rate_step > 1.0;
    let per_second: Vec<Vec<f64>> = rates
        .iter()
        .map(|s| s.values.iter().flat_map(|&v| std::iter::repeat_n(v, rate_step as usize)).collect())
        .collect();
    let raw = RawTraces {
        power_step,
        green_kw: green.into_iter().map(|s| s.values).collect(),
        price: price.into_iter().map(|s| s.values).collect(),
        rates: per_second,
    };
    let mut set = raw.into_slots(section.slot_length, section.lag_cap).map_err(|e| CliError::Traces(e.to_string()))?;
    if set.is_empty() {
        return Err(CliError::Traces(format!(
            "trace files cover {} s, shorter than one slot of {} s",
            raw.duration(),
            section.slot_length
        )));
    }
    if coarse {
        for slot in &mut set.slots {
            for s in &mut slot.class_stats {
                *s = WorkloadStats::iid(s.mean_rate, section.fallback_cv)
                    .map_err(|e| CliError::Traces(e.to_string()))?;
            }
        }
    }
    Ok(set)
}

fn column_name(c: Column, dcs: &[&str], classes: &[&str]) -> String {
    match c {
        Column::Green(i) => format!("green_kw.{}", dcs[i]),
        Column::Price(i) => format!("price.{}", dcs[i]),
        Column::Rate(j) => format!("rate.{}", classes[j]),
    }
}

/// Renders raw traces as two files: `(power.csv, rates.csv)`.
pub fn write_raw(raw: &RawTraces, dcs: &[&str], classes: &[&str]) -> CliResult<(Vec<u8>, Vec<u8>)> {
    let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
    let mut power = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["timestamp".to_string()];
    head.extend(dcs.iter().map(|d| format!("green_kw.{d}")));
    head.extend(dcs.iter().map(|d| format!("price.{d}")));
    power.write_record(&head).map_err(csv_err)?;
    let hours = raw.green_kw.first().map_or(0, Vec::len);
    for h in 0..hours {
        let mut row = vec![fmt_num(h as f64 * raw.power_step)];
        row.extend(raw.green_kw.iter().map(|s| fmt_num(s[h])));
        row.extend(raw.price.iter().map(|s| fmt_num(s[h])));
        power.write_record(&row).map_err(csv_err)?;
    }
    let mut rates = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["timestamp".to_string()];
    head.extend(classes.iter().map(|c| format!("rate.{c}")));
    rates.write_record(&head).map_err(csv_err)?;
    let seconds = raw.rates.first().map_or(0, Vec::len);
    for t in 0..seconds {
        let mut row = vec![t.to_string()];
        row.extend(raw.rates.iter().map(|s| fmt_num(s[t])));
        rates.write_record(&row).map_err(csv_err)?;
    }
    let done = |w: csv::Writer<Vec<u8>>| w.into_inner().map_err(|e| CliError::Runtime(e.to_string()));
    Ok((done(power)?, done(rates)?))
}
