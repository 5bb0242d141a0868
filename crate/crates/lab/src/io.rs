//! CSV and JSON artifacts.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use width_sde_core::control::ControlSolution;
use width_sde_core::ergodic::OccupationHistogram;
use width_sde_core::integrate::{CoordinateSystem, PathSample};
use width_sde_core::timechange::WeightedPath;

use crate::error::{LabError, LabResult};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LabError + '_ {
    move |source| LabError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> LabError + '_ {
    move |source| LabError::Csv { path: path.to_path_buf(), source }
}

pub fn ensure_dir(dir: &Path) -> LabResult<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn writer(path: &Path) -> LabResult<csv::Writer<BufWriter<File>>> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let file = File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn write_rows<R: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> LabResult<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// `t,x,y` or `t,xi,eta` depending on the path's coordinates.
pub fn write_path_csv(path: &Path, sample: &PathSample) -> LabResult<()> {
    let [a, b] = sample.coordinate_system.column_names();
    write_rows(path, &["t", a, b], sample.times.iter().zip(&sample.states).map(|(t, s)| (t, s[0], s[1])))
}

pub fn write_weighted_csv(path: &Path, wp: &WeightedPath) -> LabResult<()> {
    let rows = wp.times.iter().zip(&wp.states).zip(&wp.log_weight).map(|((t, s), w)| (t, s[0], s[1], w));
    write_rows(path, &["t", "x", "y", "log_weight"], rows)
}

pub fn write_control_csv(path: &Path, sol: &ControlSolution) -> LabResult<()> {
    write_rows(path, &["t", "p", "u"], sol.samples().into_iter().map(|r| (r[0], r[1], r[2])))
}

/// One row per cell, keyed by the lower-left corner.
pub fn write_histogram_csv(path: &Path, h: &OccupationHistogram) -> LabResult<()> {
    let ny = h.ny();
    let rows = (0..h.nx()).flat_map(|i| (0..ny).map(move |j| (i, j))).map(|(i, j)| (h.x_edges[i], h.y_edges[j], h.cell(i, j)));
    write_rows(path, &["x_edge", "y_edge", "mass"], rows)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> LabResult<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Appends one compact JSON object per line.
pub fn append_jsonl<T: Serialize>(path: &Path, values: &[T]) -> LabResult<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    for v in values {
        let line = serde_json::to_string(v).expect("artifact serializes");
        writeln!(f, "{line}").map_err(io_err(path))?;
    }
    Ok(())
}

fn read_table(path: &Path, min_cols: usize) -> LabResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path).map_err(csv_err(path))?;
    let mut header = Vec::new();
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) if v.len() >= min_cols => rows.push(v),
            Ok(_) => return Err(LabError::config(format!("{}: row {} has fewer than {min_cols} columns", path.display(), k + 1))),
            Err(_) if k == 0 => header = rec.iter().map(str::to_owned).collect(),
            Err(e) => return Err(LabError::config(format!("{}: row {}: {e}", path.display(), k + 1))),
        }
    }
    Ok((header, rows))
}

/// Two-column `r,f` table; a header row is optional.
pub fn read_profile_csv(path: &Path) -> LabResult<(Vec<f64>, Vec<f64>)> {
    let (_, rows) = read_table(path, 2)?;
    Ok(rows.into_iter().map(|r| (r[0], r[1])).unzip())
}

/// Path file with columns `t,x[,y]` (or `t,xi,eta` when so headed).
pub fn read_path_csv(path: &Path) -> LabResult<PathSample> {
    let (header, rows) = read_table(path, 2)?;
    let cs = if header.get(1).is_some_and(|h| h == "xi") { CoordinateSystem::Transformed } else { CoordinateSystem::Original };
    let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let states: Vec<[f64; 2]> = rows.iter().map(|r| [r[1], r.get(2).copied().unwrap_or(0.0)]).collect();
    let min_x = match cs {
        CoordinateSystem::Transformed => states.iter().map(|s| 1.0 / s[0]).fold(f64::INFINITY, f64::min),
        _ => states.iter().map(|s| s[0]).fold(f64::INFINITY, f64::min),
    };
    Ok(PathSample { times, states, coordinate_system: cs, min_x, hit_floor: false, rng_fingerprint: 0 })
}

/// Artifacts written by a run, relative to the output directory.
#[derive(Debug, Default, Clone, Serialize)]
pub struct Artifacts {
    #[serde(skip)]
    pub root: PathBuf,
    pub files: Vec<String>,
}

impl Artifacts {
    pub fn new(root: &Path) -> LabResult<Self> {
        ensure_dir(root)?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    /// Registers `name` and returns its full path.
    pub fn file(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_owned());
        }
        self.root.join(name)
    }
}
