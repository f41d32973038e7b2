//! CSV, report and manifest files.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use mmc_core::modulation::Arm;
use mmc_core::trajectory::{Record, Trajectory, COLUMNS};
use sha2::{Digest, Sha256};

use crate::runner::{Report, RunOutput};
use crate::scenario::{Mode, Scenario};

/// CSV header: the fixed columns, then `cell_<arm>_<n>` when cells are kept.
pub fn csv_header(t: &Trajectory) -> String {
    let mut h = COLUMNS.join(",");
    if t.cells.is_some() {
        for arm in Arm::ALL {
            for k in 1..=t.n_cells {
                let _ = write!(h, ",cell_{}_{k}", arm.name());
            }
        }
    }
    h
}

/// Writes every `every`-th record.
pub fn write_csv<W: Write>(t: &Trajectory, every: usize, mut w: W) -> io::Result<()> {
    writeln!(w, "{}", csv_header(t))?;
    let mut line = String::new();
    for k in (0..t.len()).step_by(every.max(1)) {
        line.clear();
        for (i, v) in t.records[k].values().iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            let _ = write!(line, "{v}");
        }
        if let Some(cells) = t.cells_at(k) {
            for v in cells {
                let _ = write!(line, ",{v}");
            }
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()
}

/// Reports as `[heading]` blocks of `key = value` lines.
pub fn format_reports(s: &Scenario, reports: &[Report]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario = {}", s.name);
    let _ = writeln!(out, "engine = mmc-core {}", mmc_core::VERSION);
    for r in reports {
        let _ = writeln!(out, "\n[{}]", r.heading());
        for (k, v) in &r.fields {
            let _ = writeln!(out, "{k} = {v}");
        }
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Files written for one scenario, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Written {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

/// Writes the trajectory CSVs, `reports.txt`, `config.scn` and
/// `manifest.txt` into `dir`.
pub fn emit_outputs(s: &Scenario, out: &RunOutput, dir: &Path) -> io::Result<Written> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for r in &out.runs {
        let name = match s.mode {
            Mode::Run => "trajectory.csv".to_string(),
            Mode::Compare => format!("trajectory_{}.csv", r.plant.name()),
        };
        let f = fs::File::create(dir.join(&name))?;
        write_csv(&r.trajectory, s.output_every, BufWriter::with_capacity(1 << 20, f))?;
        files.push(name);
    }
    fs::write(dir.join("reports.txt"), format_reports(s, &out.reports))?;
    files.push("reports.txt".into());
    fs::write(dir.join("config.scn"), &s.source)?;
    files.push("config.scn".into());

    let mut manifest = String::new();
    let _ = writeln!(manifest, "scenario = {}", s.name);
    let _ = writeln!(manifest, "engine = mmc-core {}", mmc_core::VERSION);
    let _ = writeln!(manifest, "config_sha256 = {}", sha256_hex(s.source.as_bytes()));
    let _ = writeln!(manifest, "dt_s = {}", s.dt);
    let _ = writeln!(manifest, "output_every = {}", s.output_every);
    for f in &files {
        let bytes = fs::read(dir.join(f))?;
        let _ = writeln!(manifest, "file {f} sha256 = {}", sha256_hex(&bytes));
    }
    fs::write(dir.join("manifest.txt"), manifest)?;
    files.push("manifest.txt".into());
    Ok(Written {
        dir: dir.to_path_buf(),
        files,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for CsvError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for CsvError {}

/// Reads a trajectory CSV written by [`write_csv`]. Cell columns are kept;
/// event markers are not stored in the CSV.
pub fn read_csv(text: &str) -> Result<Trajectory, CsvError> {
    let err = |line: usize, message: String| CsvError { line, message };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < COLUMNS.len() || cols[..COLUMNS.len()] != COLUMNS {
        return Err(err(1, format!("header must start with {}", COLUMNS.join(","))));
    }
    let extra = cols.len() - COLUMNS.len();
    if extra % 4 != 0 {
        return Err(err(1, format!("{extra} cell columns is not a multiple of four")));
    }
    let n_cells = extra / 4;
    let mut records = Vec::new();
    let mut cells = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut vals = Vec::with_capacity(cols.len());
        for field in line.split(',') {
            vals.push(field.trim().parse::<f64>().map_err(|_| err(i + 1, format!("`{field}` is not a number")))?);
        }
        if vals.len() != cols.len() {
            return Err(err(i + 1, format!("{} fields, header has {}", vals.len(), cols.len())));
        }
        records.push(Record {
            t: vals[0],
            i_dc: vals[1],
            i_ac: vals[2],
            v_sigma: vals[3],
            v_delta: vals[4],
            d_dc_pred: vals[5],
            d_dc_comp: vals[6],
            d_dc_final: vals[7],
            d_ac: vals[8],
            i_ac_ref: vals[9],
            i_dc_ref: vals[10],
            v_sigma_ref: vals[11],
        });
        cells.extend_from_slice(&vals[COLUMNS.len()..]);
    }
    if records.len() < 2 {
        return Err(err(1, "need at least two records".into()));
    }
    let dt = records[1].t - records[0].t;
    for (k, w) in records.windows(2).enumerate() {
        if ((w[1].t - w[0].t) - dt).abs() > 1e-6 * dt {
            return Err(err(k + 3, "sample spacing is not uniform".into()));
        }
    }
    Ok(Trajectory {
        dt,
        records,
        n_cells,
        cells: (n_cells > 0).then_some(cells),
        events: Vec::new(),
        clamps: Vec::new(),
        saturated_samples: 0,
    })
}
