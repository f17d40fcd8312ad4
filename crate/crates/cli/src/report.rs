//! Long-format result rows, per-condition summaries, and the plot-ready
//! files derived from them.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use esi_core::formats::Manifest;

use crate::error::{CliError, CliResult};

pub const RESULT_COLUMNS: [&str; 14] = [
    "method",
    "family",
    "S",
    "noise",
    "snr_db",
    "trial",
    "seed",
    "beta_used",
    "se",
    "mcc",
    "le_mm",
    "sd_mm",
    "wall_ms",
    "status",
];

pub const METRICS: [&str; 4] = ["se", "mcc", "le_mm", "sd_mm"];

/// SNR of the bar table.
pub const BAR_SNR_DB: f64 = 5.0;

/// The parts of a long-format row that summaries and curves need.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub family: String,
    pub s: String,
    pub noise: String,
    pub snr_db: f64,
    /// SE, MCC, LE, SD; `None` for failed cells.
    pub metrics: Option<[f64; 4]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionSummary {
    pub method: String,
    pub family: String,
    pub s: String,
    pub noise: String,
    pub snr_db: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean: [Option<f64>; 4],
    /// Standard error of the mean; needs at least two successful trials.
    pub sem: [Option<f64>; 4],
}

fn schema(msg: impl Into<String>) -> CliError {
    CliError::Core(esi_core::Error::Schema(msg.into()))
}

/// Groups rows by (method, noise, SNR) in order of first appearance.
pub fn summarize(rows: &[ResultRow]) -> Vec<ConditionSummary> {
    let mut out: Vec<ConditionSummary> = Vec::new();
    let mut samples: Vec<Vec<[f64; 4]>> = Vec::new();
    for r in rows {
        let idx = match out
            .iter()
            .position(|c| c.method == r.method && c.noise == r.noise && c.snr_db == r.snr_db)
        {
            Some(i) => i,
            None => {
                out.push(ConditionSummary {
                    method: r.method.clone(),
                    family: r.family.clone(),
                    s: r.s.clone(),
                    noise: r.noise.clone(),
                    snr_db: r.snr_db,
                    n_ok: 0,
                    n_failed: 0,
                    mean: [None; 4],
                    sem: [None; 4],
                });
                samples.push(Vec::new());
                out.len() - 1
            }
        };
        match r.metrics {
            Some(m) => samples[idx].push(m),
            None => out[idx].n_failed += 1,
        }
    }
    for (c, vals) in out.iter_mut().zip(&samples) {
        c.n_ok = vals.len();
        for k in 0..4 {
            let xs: Vec<f64> = vals.iter().map(|m| m[k]).collect();
            c.mean[k] = mean(&xs);
            c.sem[k] = sem(&xs);
        }
    }
    out
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn sem(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    Some((var / xs.len() as f64).sqrt())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_summary(path: &Path, summary: &[ConditionSummary]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "method", "family", "S", "noise", "snr_db", "n_ok", "n_failed",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    for m in METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_sem"));
    }
    w.write_record(&header)?;
    for c in summary {
        let mut rec = vec![
            c.method.clone(),
            c.family.clone(),
            c.s.clone(),
            c.noise.clone(),
            c.snr_db.to_string(),
            c.n_ok.to_string(),
            c.n_failed.to_string(),
        ];
        for k in 0..4 {
            rec.push(opt(c.mean[k]));
            rec.push(opt(c.sem[k]));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Reads a long-format results CSV. Fails with a schema error when the file
/// is empty, lacks a required column, or has no data rows.
pub fn read_results(path: &Path) -> CliResult<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.is_empty() {
        return Err(schema(format!("{} is empty", path.display())));
    }
    let col = |name: &str| -> CliResult<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| schema(format!("{} has no `{name}` column", path.display())))
    };
    let (method, noise, snr, status) = (
        col("method")?,
        col("noise")?,
        col("snr_db")?,
        col("status")?,
    );
    let metric_cols = [col("se")?, col("mcc")?, col("le_mm")?, col("sd_mm")?];
    let family = col("family").ok();
    let s = col("S").ok();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let num = |c: usize, what: &str| -> CliResult<f64> {
            field(c)
                .parse::<f64>()
                .map_err(|_| schema(format!("line {line}: invalid {what} `{}`", field(c))))
        };
        let metrics = if field(status) == "ok" {
            Some([
                num(metric_cols[0], "se")?,
                num(metric_cols[1], "mcc")?,
                num(metric_cols[2], "le_mm")?,
                num(metric_cols[3], "sd_mm")?,
            ])
        } else {
            None
        };
        rows.push(ResultRow {
            method: field(method).to_string(),
            family: family.map(|c| field(c).to_string()).unwrap_or_default(),
            s: s.map(|c| field(c).to_string()).unwrap_or_default(),
            noise: field(noise).to_string(),
            snr_db: num(snr, "snr_db")?,
            metrics,
        });
    }
    if rows.is_empty() {
        return Err(schema(format!("{} has no data rows", path.display())));
    }
    Ok(rows)
}

#[derive(Clone, Debug, Default)]
pub struct ReportOutcome {
    pub summary_rows: usize,
    pub curve_files: Vec<PathBuf>,
    pub bar_files: Vec<PathBuf>,
}

fn first_seen<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), |x| x.to_string())
}

/// Writes `summary.csv`, one `curve_<metric>_<noise>.dat` per metric and
/// noise kind (SNR in the first column, one column per method), and a
/// `bars_snr5_<noise>.dat` table when 5 dB is on the grid. If a benchmark
/// manifest sits next to the CSV its entries head every data file.
pub fn run_report(results_csv: &Path, out_dir: &Path) -> CliResult<ReportOutcome> {
    let rows = read_results(results_csv)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let summary = summarize(&rows);
    write_summary(&out_dir.join("summary.csv"), &summary)?;

    let mut preamble = String::new();
    let manifest_path = results_csv.with_file_name("manifest.txt");
    if let Ok(m) = Manifest::read(&manifest_path) {
        for (k, v) in m.iter() {
            let _ = writeln!(preamble, "# {k} = {v}");
        }
    }

    let methods = first_seen(rows.iter().map(|r| r.method.as_str()));
    let noises = first_seen(rows.iter().map(|r| r.noise.as_str()));
    let snrs: Vec<f64> = {
        let set: BTreeSet<u64> = rows.iter().map(|r| order_key(r.snr_db)).collect();
        set.into_iter().map(from_order_key).collect()
    };
    let lookup = |method: &str, noise: &str, snr: f64| {
        summary
            .iter()
            .find(|c| c.method == method && c.noise == noise && c.snr_db == snr)
    };

    let mut outcome = ReportOutcome {
        summary_rows: summary.len(),
        ..Default::default()
    };
    for noise in &noises {
        for (k, metric) in METRICS.iter().enumerate() {
            let mut text = preamble.clone();
            let _ = writeln!(text, "# mean {metric} per SNR, noise = {noise}");
            let _ = writeln!(text, "# snr_db {}", methods.join(" "));
            for &snr in &snrs {
                let mut line = snr.to_string();
                for m in &methods {
                    line.push(' ');
                    line.push_str(&fmt_cell(lookup(m, noise, snr).and_then(|c| c.mean[k])));
                }
                let _ = writeln!(text, "{line}");
            }
            let path = out_dir.join(format!("curve_{metric}_{noise}.dat"));
            fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
            outcome.curve_files.push(path);
        }
        if snrs.contains(&BAR_SNR_DB) {
            let mut text = preamble.clone();
            let _ = writeln!(
                text,
                "# per-method means and standard errors at {BAR_SNR_DB} dB, noise = {noise}"
            );
            let cols: Vec<String> = METRICS
                .iter()
                .flat_map(|m| [format!("{m}_mean"), format!("{m}_sem")])
                .collect();
            let _ = writeln!(text, "# method {}", cols.join(" "));
            for m in &methods {
                let Some(c) = lookup(m, noise, BAR_SNR_DB) else {
                    continue;
                };
                let mut line = m.clone();
                for k in 0..4 {
                    line.push(' ');
                    line.push_str(&fmt_cell(c.mean[k]));
                    line.push(' ');
                    line.push_str(&fmt_cell(c.sem[k]));
                }
                let _ = writeln!(text, "{line}");
            }
            let path = out_dir.join(format!("bars_snr5_{noise}.dat"));
            fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
            outcome.bar_files.push(path);
        }
    }
    Ok(outcome)
}

/// Monotone map from finite `f64` to `u64`, for sorting SNR values.
fn order_key(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn from_order_key(k: u64) -> f64 {
    f64::from_bits(if k >> 63 == 1 { k & !(1 << 63) } else { !k })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, snr: f64, se: Option<f64>) -> ResultRow {
        ResultRow {
            method: method.into(),
            family: String::new(),
            s: String::new(),
            noise: "gaussian".into(),
            snr_db: snr,
            metrics: se.map(|v| [v, 0.5, 1.0, 2.0]),
        }
    }

    #[test]
    fn summary_groups_in_first_seen_order() {
        let rows = vec![
            row("GBF", 0.0, Some(0.2)),
            row("GBF", 0.0, Some(0.4)),
            row("MNE", 0.0, None),
            row("GBF", 5.0, Some(0.1)),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 3);
        assert_eq!((s[0].method.as_str(), s[0].n_ok), ("GBF", 2));
        assert!((s[0].mean[0].unwrap() - 0.3).abs() < 1e-15);
        assert!((s[0].sem[0].unwrap() - 0.1).abs() < 1e-15);
        assert_eq!((s[1].n_ok, s[1].n_failed, s[1].mean[0]), (0, 1, None));
        assert_eq!(s[2].sem[0], None);
    }

    #[test]
    fn order_key_sorts_like_floats() {
        let mut xs = vec![5.0, -20.0, 0.0, -0.5, 20.0, -5.0];
        let mut keys: Vec<u64> = xs.iter().map(|&x| order_key(x)).collect();
        keys.sort();
        xs.sort_by(f64::total_cmp);
        assert_eq!(keys.into_iter().map(from_order_key).collect::<Vec<_>>(), xs);
    }
}
