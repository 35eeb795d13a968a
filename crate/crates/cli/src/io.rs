use std::collections::HashMap;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use sepfda::{Curves, Grid, Mat};

pub const CURVE_HEADER: [&str; 4] = ["sample_id", "coordinate", "time", "value"];

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn open_input(path: &Path) -> Result<Box<dyn Read>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(io::stdin()));
    }
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(Box::new(f))
}

pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        None => Ok(Box::new(io::stdout())),
        Some(p) if p.as_os_str() == "-" => Ok(Box::new(io::stdout())),
        Some(p) => {
            let f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            Ok(Box::new(io::BufWriter::new(f)))
        }
    }
}

struct Row {
    coordinate: usize,
    time: f64,
    value: f64,
    line: u64,
}

fn parse_field<T: std::str::FromStr>(raw: &str, name: &str, line: u64) -> Result<T> {
    raw.trim().parse().map_err(|_| anyhow!("line {line}: cannot parse {name} {raw:?}"))
}

/// Reads long-format curves; every sample must share one (coordinate, time) grid.
pub fn read_curves(path: &Path) -> Result<Curves> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(open_input(path)?);
    let header = reader.headers().with_context(|| format!("{}: cannot read header", path.display()))?;
    if header.iter().map(str::trim).ne(CURVE_HEADER) {
        bail!(
            "{}: header must be exactly `{}`, found `{}`",
            path.display(),
            CURVE_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        );
    }

    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<Row>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            anyhow!("{}: line {line}: malformed CSV record: {e}", path.display())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            bail!("{}: line {line}: expected 4 fields, found {}", path.display(), record.len());
        }
        let id = record[0].trim().to_string();
        if id.is_empty() {
            bail!("{}: line {line}: empty sample_id", path.display());
        }
        let coordinate: usize = parse_field(&record[1], "coordinate", line)?;
        if coordinate == 0 {
            bail!("{}: line {line}: coordinate is 1-based, found 0", path.display());
        }
        let time: f64 = parse_field(&record[2], "time", line)?;
        let value: f64 = parse_field(&record[3], "value", line)?;
        if !time.is_finite() || !value.is_finite() {
            bail!("{}: line {line}: time and value must be finite", path.display());
        }
        let slot = *index.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            rows.push(Vec::new());
            rows.len() - 1
        });
        rows[slot].push(Row { coordinate, time, value, line });
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }

    for (id, r) in order.iter().zip(rows.iter_mut()) {
        r.sort_by(|a, b| a.coordinate.cmp(&b.coordinate).then(a.time.total_cmp(&b.time)));
        if let Some(w) = r.windows(2).find(|w| w[0].coordinate == w[1].coordinate && w[0].time == w[1].time) {
            bail!(
                "{}: line {}: duplicate observation for sample {id}, coordinate {}, time {}",
                path.display(),
                w[1].line,
                w[1].coordinate,
                w[1].time
            );
        }
    }

    let first = &rows[0];
    let p = first.iter().map(|r| r.coordinate).max().unwrap_or(0);
    let times: Vec<f64> = first.iter().filter(|r| r.coordinate == 1).map(|r| r.time).collect();
    let q = times.len();
    if q == 0 || first.len() != p * q {
        bail!(
            "{}: sample {} does not observe every coordinate 1..={p} on a common time grid",
            path.display(),
            order[0]
        );
    }
    for (k, r) in first.iter().enumerate() {
        if r.coordinate != k / q + 1 || r.time != times[k % q] {
            bail!(
                "{}: line {}: sample {} coordinate {} is not observed on the same times as coordinate 1",
                path.display(),
                r.line,
                order[0],
                r.coordinate
            );
        }
    }

    let mut samples = Vec::with_capacity(rows.len());
    for (id, r) in order.iter().zip(&rows) {
        if r.len() != p * q {
            bail!(
                "{}: sample {id} has {} observations, expected {} ({p} coordinates x {q} times)",
                path.display(),
                r.len(),
                p * q
            );
        }
        let mut x = Mat::zeros(p, q);
        for (k, row) in r.iter().enumerate() {
            if row.coordinate != k / q + 1 || row.time != times[k % q] {
                bail!(
                    "{}: line {}: sample {id} is not observed on the shared (coordinate, time) grid",
                    path.display(),
                    row.line
                );
            }
            x[(k / q, k % q)] = row.value;
        }
        samples.push(x);
    }
    let grid = Grid::new(times).context("invalid time grid")?;
    Ok(Curves::new(grid, samples, order)?)
}

pub fn write_curves(curves: &Curves, out: Box<dyn Write>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_HEADER)?;
    let times = curves.grid.points();
    for (id, x) in curves.ids.iter().zip(&curves.samples) {
        for j in 0..x.rows() {
            let coord = (j + 1).to_string();
            for (l, &t) in times.iter().enumerate() {
                w.write_record([id.as_str(), &coord, &fmt_f64(t), &fmt_f64(x[(j, l)])])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(value: &T, out: Box<dyn Write>) -> Result<()> {
    let mut out = out;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let reader = io::BufReader::new(open_input(path)?);
    serde_json::from_reader(reader).with_context(|| format!("{}: invalid JSON document", path.display()))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.to_rows()
}

pub fn from_rows(rows: &[Vec<f64>], name: &str) -> Result<Mat> {
    Mat::from_rows(rows).with_context(|| format!("field {name} is not a rectangular matrix"))
}
