//! CSV time series, JSON summary and gnuplot script output.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EpisodeSpec, MetricSummary};
use crate::controllers::ControllerKind;
use crate::error::{Error, Result};
use crate::multibody::RobotModel;
use crate::robots::GainSet;
use crate::sim::{SimConfig, Trajectory};

pub const SUMMARY_FILE: &str = "summary.json";
pub const GNUPLOT_FILE: &str = "plot.gp";
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    /// Write measured solver times; when false the column is all zeros so
    /// that repeated runs produce identical files.
    pub timing: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions { timing: true }
    }
}

/// `<robot>_<controller>_<experiment>_<param>.csv`
pub fn episode_file_name(robot: &str, controller: ControllerKind, spec: EpisodeSpec) -> String {
    format!("{robot}_{}_{}_{}.csv", controller.name(), spec.experiment.name(), spec.param_label())
}

fn axis_names(task_dim: usize) -> &'static [&'static str] {
    if task_dim == 2 {
        &["x", "z"]
    } else {
        &["x", "y", "z"]
    }
}

/// Column names in file order.
pub fn csv_header(task_dim: usize, inputs: usize) -> Vec<String> {
    let axes = axis_names(task_dim);
    let mut cols = vec!["t".to_string()];
    for prefix in ["e", "y", "yref"] {
        cols.extend(axes.iter().map(|a| format!("{prefix}_{a}")));
    }
    cols.extend(["V", "V_over_V0", "Vdot", "delta"].map(String::from));
    cols.extend((1..=inputs).map(|i| format!("u_{i}")));
    cols.extend(["qp_status", "solve_time_ms"].map(String::from));
    cols
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Writes a trajectory as CSV. Leading `#` lines carry the simulation
/// settings, gains and any failure message.
pub fn write_csv(
    path: &Path,
    model: &RobotModel,
    gains: &GainSet,
    sim: &SimConfig,
    traj: &Trajectory,
    opts: &CsvOptions,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let gains_text: Vec<String> = gains.entries().iter().map(|(k, v)| format!("{k}={v}")).collect();
    let meta = [
        format!("# robot={} n={} m={} task_dim={}", model.name, model.n(), model.m(), model.task_dim),
        format!(
            "# dt={} control_decimation={} integrator={} sampling=control-rate",
            sim.dt,
            sim.control_decimation,
            sim.integrator.name()
        ),
        format!("# gains {}", gains_text.join(" ")),
    ];
    for line in meta {
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    if let Some(f) = &traj.failure {
        writeln!(out, "# failure: {}", f.replace('\n', " ")).map_err(|e| Error::io(path, e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(model.task_dim, model.m())).map_err(|e| csv_err(path, e))?;
    let v0 = traj.samples.first().map_or(0.0, |s| s.control.v);
    let mut record: Vec<String> = Vec::new();
    for (k, s) in traj.samples.iter().enumerate() {
        record.clear();
        let c = &s.control;
        record.push(s.state.t.to_string());
        record.extend(s.error().iter().map(f64::to_string));
        record.extend(s.y.iter().map(f64::to_string));
        record.extend(s.reference.y.iter().map(f64::to_string));
        let ratio = if k == 0 {
            1.0
        } else if v0 > 0.0 {
            c.v / v0
        } else {
            0.0
        };
        for v in [c.v, ratio, c.vdot, c.delta] {
            record.push(v.to_string());
        }
        record.extend(c.u.iter().map(f64::to_string));
        record.push(c.qp_status.map_or("none", |st| st.as_str()).to_string());
        let ms = if opts.timing { c.solve_time * 1e3 } else { 0.0 };
        record.push(ms.to_string());
        w.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// A CSV file read back: metadata lines, header and raw cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub meta: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Parses a numeric column.
    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name).ok_or_else(|| Error::Unknown {
            kind: "column",
            name: name.to_string(),
        })?;
        self.rows
            .iter()
            .map(|r| {
                r[i].parse::<f64>()
                    .map_err(|e| Error::Validation(format!("column {name}: '{}' is not a number: {e}", r[i])))
            })
            .collect()
    }
}

pub fn parse_csv(path: &Path) -> Result<CsvTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut meta = Vec::new();
    let mut reader = BufReader::new(file);
    let mut body = String::new();
    let mut line = String::new();
    loop {
        line.clear();
        let read = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if read == 0 {
            break;
        }
        if line.starts_with('#') {
            meta.push(line.trim_end().to_string());
        } else {
            body.push_str(&line);
            break;
        }
    }
    std::io::Read::read_to_string(&mut reader, &mut body).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        rows.push(rec.iter().map(String::from).collect());
    }
    Ok(CsvTable { meta, header, rows })
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub schema_version: u32,
    pub dt: f64,
    pub control_decimation: usize,
    pub integrator: String,
    /// MSE is averaged over every logged control sample.
    pub mse_sampling: String,
    pub final_error: String,
    /// Command-line overrides as given, `key=value`.
    pub overrides: Vec<String>,
    pub rows: Vec<MetricSummary>,
}

impl SummaryFile {
    pub fn new(sim: &SimConfig, overrides: Vec<String>, rows: Vec<MetricSummary>) -> Self {
        SummaryFile {
            schema_version: SUMMARY_SCHEMA_VERSION,
            dt: sim.dt,
            control_decimation: sim.control_decimation,
            integrator: sim.integrator.name().to_string(),
            mse_sampling: "control-rate".to_string(),
            final_error: "instantaneous at episode end".to_string(),
            overrides,
            rows,
        }
    }
}

/// Writes `summary.json` through a temporary file and a rename.
pub fn write_summary(dir: &Path, summary: &SummaryFile) -> Result<PathBuf> {
    let path = dir.join(SUMMARY_FILE);
    let tmp = dir.join(format!(".{SUMMARY_FILE}.tmp"));
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::Serialize(e.to_string()))?;
    std::fs::write(&tmp, text + "\n").map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes a gnuplot script plotting `V / V0` and the task error of each
/// listed CSV file.
pub fn write_gnuplot_script(dir: &Path, csv_files: &[String]) -> Result<PathBuf> {
    let path = dir.join(GNUPLOT_FILE);
    let mut s = String::new();
    s.push_str("# gnuplot -persist plot.gp\n");
    s.push_str("set datafile separator ','\nset datafile commentschars '#'\n");
    s.push_str("set key autotitle columnhead noenhanced\nset xlabel 't [s]'\nset grid\n\n");
    s.push_str("set multiplot layout 2,1\nset logscale y\nset ylabel 'V / V0'\n");
    let plot = |col: &str| -> String {
        let items: Vec<String> = csv_files
            .iter()
            .map(|f| format!("'{f}' using 't':'{col}' with lines title '{}'", f.trim_end_matches(".csv")))
            .collect();
        format!("plot {}\n", items.join(", \\\n     "))
    };
    if csv_files.is_empty() {
        s.push_str("# no episodes\n");
    } else {
        s.push_str(&plot("V_over_V0"));
        s.push_str("unset logscale y\nset ylabel 'e_x [m]'\n");
        s.push_str(&plot("e_x"));
    }
    s.push_str("unset multiplot\n");
    std::fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
