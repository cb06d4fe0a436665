use std::fs;
use std::path::{Path, PathBuf};

use super::config::SketchDim;
use super::runner::{curves, ExperimentResult, Sweep};
use crate::error::{Error, Result};

pub const SUMMARY_HEADER: [&str; 8] = [
    "dataset",
    "model",
    "sketch_dim",
    "frac_observed",
    "n_per_class",
    "n_trials",
    "mean_acc",
    "ci95",
];

pub const RAW_HEADER: [&str; 11] = [
    "dataset",
    "model",
    "sketch_dim",
    "frac_observed",
    "n_per_class",
    "trial_index",
    "seed",
    "n_observed",
    "ratio",
    "accuracy",
    "error",
];

pub const CURVE_HEADER: [&str; 5] = ["sweep_value", "model", "mean_acc", "ci95", "n"];

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub model: String,
    pub sketch_dim: SketchDim,
    pub frac_observed: Option<f64>,
    pub n_per_class: Option<usize>,
    /// Successful trials.
    pub n_trials: usize,
    pub mean_acc: f64,
    pub ci95: Option<f64>,
}

pub fn summary_rows(result: &ExperimentResult) -> Vec<SummaryRow> {
    result
        .summaries
        .iter()
        .map(|(k, s)| SummaryRow {
            dataset: k.dataset.clone(),
            model: k.model.clone(),
            sketch_dim: k.sketch_dim,
            frac_observed: k.frac_observed,
            n_per_class: k.n_per_class,
            n_trials: s.n,
            mean_acc: s.mean,
            ci95: s.ci95,
        })
        .collect()
}

fn acc(x: f64) -> String {
    format!("{x:.4}")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

fn write_table<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut rows = rows.into_iter().peekable();
    if rows.peek().is_none() {
        return Err(Error::InvalidParameter(format!(
            "refusing to write empty table {}",
            path.display()
        )));
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_summary(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    write_table(
        path.as_ref(),
        &SUMMARY_HEADER,
        rows.iter().map(|r| {
            vec![
                r.dataset.clone(),
                r.model.clone(),
                r.sketch_dim.to_string(),
                opt(r.frac_observed),
                opt(r.n_per_class),
                r.n_trials.to_string(),
                acc(r.mean_acc),
                r.ci95.map(acc).unwrap_or_default(),
            ]
        }),
    )
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(SUMMARY_HEADER.iter().copied()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = |field: &str, m: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{field}: {m}"),
        };
        fn parse_opt<T: std::str::FromStr>(s: &str) -> std::result::Result<Option<T>, String>
        where
            T::Err: std::fmt::Display,
        {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e: T::Err| e.to_string())
            }
        }
        out.push(SummaryRow {
            dataset: rec[0].to_string(),
            model: rec[1].to_string(),
            sketch_dim: rec[2].parse().map_err(|e: Error| bad("sketch_dim", e.to_string()))?,
            frac_observed: parse_opt(&rec[3]).map_err(|m| bad("frac_observed", m))?,
            n_per_class: parse_opt(&rec[4]).map_err(|m| bad("n_per_class", m))?,
            n_trials: rec[5]
                .parse()
                .map_err(|e: std::num::ParseIntError| bad("n_trials", e.to_string()))?,
            mean_acc: rec[6]
                .parse()
                .map_err(|e: std::num::ParseFloatError| bad("mean_acc", e.to_string()))?,
            ci95: parse_opt(&rec[7]).map_err(|m| bad("ci95", m))?,
        });
    }
    Ok(out)
}

pub fn write_raw_trials(result: &ExperimentResult, path: impl AsRef<Path>) -> Result<()> {
    write_table(
        path.as_ref(),
        &RAW_HEADER,
        result.trials.iter().map(|t| {
            let (a, e) = match &t.accuracy {
                Ok(a) => (acc(*a), String::new()),
                Err(e) => (String::new(), e.clone()),
            };
            vec![
                t.key.dataset.clone(),
                t.key.model.clone(),
                t.key.sketch_dim.to_string(),
                opt(t.key.frac_observed),
                opt(t.key.n_per_class),
                t.trial_index.to_string(),
                t.seed.to_string(),
                t.n_observed.to_string(),
                format!("{:.4}", t.ratio),
                a,
                e,
            ]
        }),
    )
}

/// Writes `summary.csv` and `raw_trials.csv` into `out_dir`.
pub fn write_results(result: &ExperimentResult, out_dir: impl AsRef<Path>) -> Result<()> {
    let out_dir = out_dir.as_ref();
    write_summary(&summary_rows(result), out_dir.join("summary.csv"))?;
    write_raw_trials(result, out_dir.join("raw_trials.csv"))
}

/// Writes one `curve_<dataset>_<sweep>.csv` per dataset and returns the paths.
pub fn write_curves(result: &ExperimentResult, sweep: Sweep, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    let mut paths = Vec::new();
    for (dataset, points) in curves(result, sweep) {
        let path = out_dir.join(format!("curve_{dataset}_{}.csv", sweep.name()));
        write_table(
            &path,
            &CURVE_HEADER,
            points.iter().map(|p| {
                vec![
                    p.sweep_value.to_string(),
                    p.model.clone(),
                    acc(p.stat.mean),
                    p.stat.ci95.map(acc).unwrap_or_default(),
                    p.stat.n.to_string(),
                ]
            }),
        )?;
        paths.push(path);
    }
    Ok(paths)
}
