//! CSV and JSON emission of run results.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fundamental::{write_price_csv, FundamentalPath, PathSource};
use crate::relarb::ArbitrageConstants;
use crate::simulator::{emitted_indices, EnsembleScalars, EnsembleSummary, PathOutcome, PathStatus};

/// JSON formatter writing every float with 17 significant digits.
#[derive(Clone, Copy, Debug, Default)]
pub struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(crate::fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Pretty-printed JSON with full-precision floats.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Pretty17::default());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// `PrettyFormatter` with [`FullPrecision`] floats.
#[derive(Default)]
struct Pretty17 {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

macro_rules! forward {
    ($($name:ident($($arg:ident: $ty:ty),*)),* $(,)?) => {
        $(fn $name<W: ?Sized + Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.inner.$name(writer $(, $arg)*)
        })*
    };
}

impl serde_json::ser::Formatter for Pretty17 {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        FullPrecision.write_f64(writer, value)
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        FullPrecision.write_f32(writer, value)
    }

    forward!(
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        begin_object_value(),
        end_object_value(),
    );
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    config_digest: &'a str,
    version: &'static str,
    warnings: &'a [String],
    results: &'a EnsembleScalars,
    constants: Option<&'a ArbitrageConstants>,
}

/// Run metadata; the only file that carries wall-clock time.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub base_seed: u64,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
    pub statuses: Vec<PathStatus>,
}

pub fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, io::Error::other(e))
}

fn write_rows(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn numbered(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (1..=d).map(move |i| format!("{prefix}_{i}"))
}

/// Writes one path as CSV, keeping every `stride`-th row and the last one.
///
/// Rows before the last carry status `active`; the last row carries the
/// path's final status.
pub fn write_path_csv<W: Write>(o: &PathOutcome, stride: usize, writer: W) -> Result<()> {
    let r = &o.record;
    let d = r.dim();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    for p in ["P", "Q", "J", "mu"] {
        header.extend(numbered(p, d));
    }
    header.extend(["V", "G_term", "Gamma", "status"].map(String::from));
    let io_err = |e: csv::Error| Error::io("<paths csv>", io::Error::other(e));
    w.write_record(&header).map_err(io_err)?;
    let idx = r.emitted_indices(stride);
    let last = r.len().saturating_sub(1);
    for &k in &idx {
        let mut row = vec![crate::fmt_f64(r.grid[k])];
        for series in [&r.p, &r.q, &r.j, &r.mu] {
            row.extend(series[k].iter().map(|&x| crate::fmt_f64(x)));
        }
        row.push(crate::fmt_f64(o.wealth.v_master[k]));
        row.push(crate::fmt_f64(o.wealth.g_term[k]));
        row.push(crate::fmt_f64(o.wealth.gamma[k]));
        row.push(if k == last { r.status.as_str() } else { "active" }.to_string());
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io("<paths csv>", e))
}

/// Everything a run writes, besides the manifest.
pub struct RunOutputs<'a> {
    pub summary: &'a EnsembleSummary,
    pub constants: Option<&'a ArbitrageConstants>,
    pub warnings: &'a [String],
    pub digest: &'a str,
    pub stride: usize,
}

/// Writes `summary.json`, the panel CSVs and, per retained path,
/// `paths_<k>.csv` and `fundamental_<k>.csv` into `dir`. Returns the files
/// written.
pub fn emit_outputs(out: &RunOutputs, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let summary = SummaryFile {
        config_digest: out.digest,
        version: env!("CARGO_PKG_VERSION"),
        warnings: out.warnings,
        results: &out.summary.scalars,
        constants: out.constants,
    };
    let p = dir.join("summary.json");
    write_text(&p, &to_json(&summary)?)?;
    files.push(p);

    let s = &out.summary.series;
    if !s.grid.is_empty() {
        let idx = emitted_indices(s.grid.len(), out.stride);
        let f = crate::fmt_f64;
        let p = dir.join("panel_wealth.csv");
        write_rows(
            &p,
            ["t", "V_impact_mean", "V_impact_min", "V_impact_max", "V_frictionless_mean", "alive"]
                .map(String::from)
                .to_vec(),
            idx.iter().map(|&k| {
                vec![
                    f(s.grid[k]),
                    f(s.v_impact_mean[k]),
                    f(s.v_impact_min[k]),
                    f(s.v_impact_max[k]),
                    f(s.v_frictionless_mean[k]),
                    s.alive[k].to_string(),
                ]
            }),
        )?;
        files.push(p);

        let p = dir.join("panel_decomposition.csv");
        write_rows(
            &p,
            ["t", "V_mean", "G_term_mean", "Gamma_mean", "Gamma_time_mean", "Gamma_hessian_mean", "Gamma_impact_mean"]
                .map(String::from)
                .to_vec(),
            idx.iter().map(|&k| {
                vec![
                    f(s.grid[k]),
                    f(s.v_impact_mean[k]),
                    f(s.g_term_mean[k]),
                    f(s.gamma_mean[k]),
                    f(s.gamma_time_mean[k]),
                    f(s.gamma_hessian_mean[k]),
                    f(s.gamma_impact_mean[k]),
                ]
            }),
        )?;
        files.push(p);

        let d = s.q_mean.len();
        let p = dir.join("panel_holdings.csv");
        let mut header = vec!["t".to_string()];
        header.extend(numbered("Q_mean", d));
        header.extend(numbered("Q_sample", d));
        write_rows(
            &p,
            header,
            idx.iter().map(|&k| {
                let mut row = vec![f(s.grid[k])];
                row.extend(s.q_mean.iter().map(|q| f(q[k])));
                row.extend(s.q_sample.iter().map(|q| q.get(k).map_or(String::new(), |&x| f(x))));
                row
            }),
        )?;
        files.push(p);
    }

    if let Some(stats) = &out.summary.scalars.dv {
        let p = dir.join("panel_dv.csv");
        let shown = stats.truncate(&out.summary.dv_samples);
        write_rows(&p, vec!["dv".to_string()], shown.iter().map(|&x| vec![crate::fmt_f64(x)]))?;
        files.push(p);
    }

    for o in &out.summary.kept {
        let p = dir.join(format!("paths_{}.csv", o.index));
        write_path_csv(o, out.stride, create(&p)?)?;
        files.push(p);
        let fp = FundamentalPath {
            grid: o.record.grid.clone(),
            s: o.record.s.clone(),
            source: PathSource::Simulated,
        };
        let p = dir.join(format!("fundamental_{}.csv", o.index));
        write_price_csv(&fp, create(&p)?)?;
        files.push(p);
    }
    Ok(files)
}

pub fn write_manifest(m: &RunManifest, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join("manifest.json");
    write_text(&p, &to_json(m)?)?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        let s = to_json(&vec![0.1_f64, 1.0 / 3.0, 0.0, -2.5e-300, f64::NAN]).unwrap();
        let back: Vec<Option<f64>> = serde_json::from_str(&s).unwrap();
        assert_eq!(back[0], Some(0.1));
        assert_eq!(back[1], Some(1.0 / 3.0));
        assert_eq!(back[2], Some(0.0));
        assert_eq!(back[3], Some(-2.5e-300));
        assert_eq!(back[4], None);
        assert!(s.contains("3.3333333333333331e-1"));
    }

    #[test]
    fn empty_ensemble_writes_only_summary() {
        let dir = tempfile::tempdir().unwrap();
        let summary = EnsembleSummary::default();
        let files = emit_outputs(
            &RunOutputs {
                summary: &summary,
                constants: None,
                warnings: &[],
                digest: "x",
                stride: 1,
            },
            dir.path(),
        )
        .unwrap();
        assert_eq!(files, vec![dir.path().join("summary.json")]);
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&files[0]).unwrap()).unwrap();
        assert_eq!(v["results"]["n_paths"], 0);
    }
}
