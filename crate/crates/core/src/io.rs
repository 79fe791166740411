//! File formats.
//!
//! * `.dat`: whitespace-separated numeric columns, no header. Trajectories
//!   carry `t x_1 ... x_d`; plot series carry exactly `t value`.
//! * CSV: header row, `.` decimal separator, `{}` float formatting so values
//!   round-trip exactly.
//! * Binary draws: `ISVD`, a version byte, row and column counts as `u64` LE,
//!   then the matrix as row-major `f64` LE.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::gibbs::PosteriorDraws;
use crate::observe::{ObservationSeries, ResidualSeries};
use crate::ode::TrajectoryGrid;
use crate::posterior::SummarySeries;

pub const DRAWS_MAGIC: &[u8; 4] = b"ISVD";
pub const DRAWS_VERSION: u8 = 1;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write rows of numbers separated by single spaces.
pub fn write_dat<'a, I>(path: impl AsRef<Path>, rows: I) -> Result<()>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let path = path.as_ref();
    let mut w = create(path)?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    finish(w, path)
}

/// Read a whitespace-separated numeric table; blank lines and `#` comments
/// are skipped and every row must have the same width.
pub fn read_dat(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>().map_err(|_| parse_err(path, idx + 1, format!("not a number: `{tok}`"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(path, idx + 1, format!("expected {} columns, got {}", first.len(), row.len())));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_two_column_dat(path: impl AsRef<Path>, times: &[f64], values: &[f64]) -> Result<()> {
    if times.len() != values.len() {
        return Err(Error::LengthMismatch {
            expected: times.len(),
            got: values.len(),
        });
    }
    let rows: Vec<[f64; 2]> = times.iter().zip(values).map(|(t, v)| [*t, *v]).collect();
    write_dat(path, rows.iter().map(|r| &r[..]))
}

pub fn write_trajectory(path: impl AsRef<Path>, traj: &TrajectoryGrid) -> Result<()> {
    let rows: Vec<Vec<f64>> = traj
        .times()
        .iter()
        .zip(traj.states())
        .map(|(t, x)| std::iter::once(*t).chain(x.iter().copied()).collect())
        .collect();
    write_dat(path, rows.iter().map(|r| &r[..]))
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<TrajectoryGrid> {
    let path = path.as_ref();
    let rows = read_dat(path)?;
    if rows.is_empty() || rows[0].len() < 2 {
        return Err(parse_err(path, 0, "trajectory needs a time column and at least one state column"));
    }
    let times = rows.iter().map(|r| r[0]).collect();
    let states = rows.iter().map(|r| r[1..].to_vec()).collect();
    TrajectoryGrid::new(times, states)
}

/// Write a CSV of equally long columns under the given headers.
pub fn write_columns_csv(path: impl AsRef<Path>, headers: &[&str], columns: &[&[f64]]) -> Result<()> {
    let path = path.as_ref();
    let n = columns.first().map_or(0, |c| c.len());
    if let Some(bad) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::LengthMismatch { expected: n, got: bad.len() });
    }
    let mut w = csv::Writer::from_writer(create(path)?);
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    w.write_record(headers).map_err(csv_err)?;
    for i in 0..n {
        w.write_record(columns.iter().map(|c| c[i].to_string())).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a CSV whose header must equal `headers`; returns the columns.
pub fn read_columns_csv(path: impl AsRef<Path>, headers: &[&str]) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let found = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    if found.iter().ne(headers.iter().copied()) {
        return Err(parse_err(path, 1, format!("expected header `{}`, got `{}`", headers.join(","), found.iter().collect::<Vec<_>>().join(","))));
    }
    let mut columns = vec![Vec::new(); headers.len()];
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            col.push(field.parse::<f64>().map_err(|_| parse_err(path, line, format!("not a number: `{field}`")))?);
        }
    }
    Ok(columns)
}

pub fn write_observations(path: impl AsRef<Path>, obs: &ObservationSeries) -> Result<()> {
    write_columns_csv(path, &["t", "value"], &[&obs.times, &obs.values])
}

pub fn read_observations(path: impl AsRef<Path>, noise_var: f64) -> Result<ObservationSeries> {
    let mut cols = read_columns_csv(path, &["t", "value"])?;
    let values = cols.pop().unwrap();
    let times = cols.pop().unwrap();
    ObservationSeries::new(times, values, noise_var)
}

pub fn write_residuals(path: impl AsRef<Path>, resid: &ResidualSeries) -> Result<()> {
    write_columns_csv(path, &["t", "residual"], &[resid.times(), resid.residuals()])
}

pub fn read_residuals(path: impl AsRef<Path>, noise_var: f64) -> Result<ResidualSeries> {
    let mut cols = read_columns_csv(path, &["t", "residual"])?;
    let r = cols.pop().unwrap();
    let t = cols.pop().unwrap();
    ResidualSeries::new(t, r, noise_var)
}

/// `{target}_mean.dat`, `_lower.dat`, `_upper.dat` and `_summary.csv` in `dir`.
pub fn write_summary(dir: impl AsRef<Path>, summary: &SummarySeries) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let name = summary.target.name();
    let mut written = Vec::new();
    for (suffix, values) in [("mean", &summary.mean), ("lower", &summary.lower), ("upper", &summary.upper)] {
        let path = dir.join(format!("{name}_{suffix}.dat"));
        write_two_column_dat(&path, &summary.times, values)?;
        written.push(path);
    }
    let path = dir.join(format!("{name}_summary.csv"));
    write_columns_csv(
        &path,
        &["t", "mean", "lower", "upper"],
        &[&summary.times, &summary.mean, &summary.lower, &summary.upper],
    )?;
    written.push(path);
    Ok(written)
}

pub fn write_draws_csv(path: impl AsRef<Path>, draws: &PosteriorDraws) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    w.write_record((1..=draws.n_obs()).map(|i| format!("sigma2_{i}"))).map_err(csv_err)?;
    for row in draws.rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_draws_csv(path: impl AsRef<Path>) -> Result<PosteriorDraws> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_reader(open(path)?);
    let n = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.len();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        for field in record.iter() {
            values.push(field.parse::<f64>().map_err(|_| parse_err(path, line, format!("not a number: `{field}`")))?);
        }
    }
    PosteriorDraws::from_rows(n, values)
}

pub fn write_draws_bin(path: impl AsRef<Path>, draws: &PosteriorDraws) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    w.write_all(DRAWS_MAGIC).map_err(io_err)?;
    w.write_all(&[DRAWS_VERSION]).map_err(io_err)?;
    w.write_all(&(draws.n_draws() as u64).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(draws.n_obs() as u64).to_le_bytes()).map_err(io_err)?;
    for v in draws.sigma2() {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    finish(w, path)
}

pub fn read_draws_bin(path: impl AsRef<Path>) -> Result<PosteriorDraws> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 21 || &bytes[..4] != DRAWS_MAGIC {
        return Err(parse_err(path, 0, "not a draws file (bad magic)"));
    }
    if bytes[4] != DRAWS_VERSION {
        return Err(parse_err(path, 0, format!("unsupported draws version {}", bytes[4])));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
    let (rows, cols) = (word(5), word(13));
    let body = &bytes[21..];
    let expected = rows.checked_mul(cols).and_then(|c| c.checked_mul(8));
    if expected != Some(body.len()) {
        return Err(parse_err(path, 0, format!("{rows} x {cols} draws do not match {} payload bytes", body.len())));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    PosteriorDraws::from_rows(cols, values)
}

/// Read draws in either format, recognising the binary magic.
pub fn read_draws(path: impl AsRef<Path>) -> Result<PosteriorDraws> {
    let path = path.as_ref();
    let mut head = [0u8; 4];
    let is_bin = open(path)?.read_exact(&mut head).is_ok() && &head == DRAWS_MAGIC;
    if is_bin {
        read_draws_bin(path)
    } else {
        read_draws_csv(path)
    }
}

/// `chain,sweep,lambda`, sweeps counted from 1 within each chain.
pub fn write_trace(path: impl AsRef<Path>, draws: &PosteriorDraws) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["chain", "sweep", "lambda"]).map_err(csv_err)?;
    for (c, trace) in draws.lambda_traces().iter().enumerate() {
        for (t, lambda) in trace.iter().enumerate() {
            w.write_record([c.to_string(), (t + 1).to_string(), lambda.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
