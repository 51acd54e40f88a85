//! Command execution. Every command produces one table in grid order plus a
//! list of warnings; I/O lives in [`write_outputs`].

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use kmsprod::fading;
use kmsprod::metrics;
use kmsprod::oracle;
use kmsprod::product::{self, Estimate, ProductDistribution, ProductModel, Source};
use kmsprod::validate::{self, CriterionReport, ValidationOptions};

use crate::config::{Command, ConfigError, GridScale, RunConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(#[from] kmsprod::Error),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Output { .. } => 2,
            RunError::Numerical(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    pub table: Table,
    pub warnings: Vec<String>,
    pub validation: Option<Vec<CriterionReport>>,
}

impl RunOutput {
    pub fn validation_failed(&self) -> bool {
        self.validation.as_ref().is_some_and(|v| v.iter().any(|r| !r.passed))
    }
}

/// Shortest round-trip decimal, switching to exponent form outside
/// `[1e-4, 1e15)`.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn source_label(s: Source) -> &'static str {
    validate::source_name(s)
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

struct Samples {
    sorted: Vec<f64>,
}

impl Samples {
    fn n(&self) -> f64 {
        self.sorted.len() as f64
    }

    fn below(&self, y: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= y) as f64 / self.n()
    }

    fn proportion(&self, y: f64) -> (f64, f64) {
        let p = self.below(y);
        (p, (p * (1.0 - p) / self.n()).sqrt())
    }

    /// Histogram density over `[y e^-h, y e^h]`.
    fn density(&self, y: f64) -> (f64, f64) {
        const H: f64 = 0.05;
        let (lo, hi) = (y * (-H).exp(), y * H.exp());
        let p = self.below(hi) - self.below(lo);
        let w = hi - lo;
        (p / w, (p * (1.0 - p) / self.n()).sqrt() / w)
    }

    fn mean_of<F: Fn(f64) -> f64>(&self, f: F) -> (f64, f64) {
        let n = self.n();
        let vals: Vec<f64> = self.sorted.iter().map(|&y| f(y)).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, (var / n).sqrt())
    }
}

fn draw(model: &ProductModel, cfg: &RunConfig) -> Result<Option<Samples>, RunError> {
    if cfg.mc_samples == 0 {
        return Ok(None);
    }
    let mut sorted = oracle::sample_product_seeded(model, cfg.seed, cfg.mc_samples)?;
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(Some(Samples { sorted }))
}

fn estimate_warnings(at: &str, x: f64, e: &Estimate, out: &mut Vec<String>) {
    for w in &e.warnings {
        let name = serde_json::to_value(w).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        out.push(format!("{at}={}: {name}", fmt_num(x)));
    }
}

fn fallback_note(estimates: &[Estimate], out: &mut Vec<String>) {
    let n = estimates.iter().filter(|e| e.source != Source::Series).count();
    if n > 0 {
        out.push(format!(
            "{n} of {} points fell back from the series to quadrature (see the source column)",
            estimates.len()
        ));
    }
}

fn mc_columns(row: &mut Vec<String>, mc: Option<(f64, f64)>) {
    if let Some((v, se)) = mc {
        row.push(fmt_num(v));
        row.push(fmt_num(se));
    }
}

fn cascade(cfg: &RunConfig) -> Result<ProductDistribution, RunError> {
    let model = ProductModel::new(cfg.links[0], cfg.links[1])?;
    Ok(ProductDistribution::new(model, cfg.policy)?)
}

pub fn run(cfg: &RunConfig) -> Result<RunOutput, RunError> {
    let mut warnings = Vec::new();
    let mut validation = None;
    let table = match cfg.command {
        Command::Pdf | Command::Cdf | Command::Mgf => {
            let dist = cascade(cfg)?;
            let grid = cfg.grid.expect("grid default");
            let xs = grid.abscissae();
            let (col, at) = match cfg.command {
                Command::Pdf => ("pdf", "y"),
                Command::Cdf => ("cdf", "y"),
                _ => ("mgf", "s"),
            };
            let est: Vec<Estimate> = xs
                .par_iter()
                .map(|&x| match cfg.command {
                    Command::Pdf => dist.pdf(x),
                    Command::Cdf => dist.cdf(x),
                    _ => dist.mgf(x),
                })
                .collect::<kmsprod::Result<_>>()?;
            let samples = draw(dist.model(), cfg)?;
            let mut cols = vec![at, col, "tail_estimate", "source"];
            if samples.is_some() {
                cols.extend(["mc_value", "mc_stderr"]);
            }
            let mut rows = Vec::new();
            for (&x, e) in xs.iter().zip(&est) {
                estimate_warnings(at, x, e, &mut warnings);
                let mut row = vec![fmt_num(x), fmt_num(e.value), fmt_num(e.error_estimate), source_label(e.source).into()];
                let mc = samples.as_ref().map(|s| match cfg.command {
                    Command::Pdf => s.density(x),
                    Command::Cdf => s.proportion(x),
                    _ => s.mean_of(|y| (x * y).exp()),
                });
                mc_columns(&mut row, mc);
                rows.push(row);
            }
            fallback_note(&est, &mut warnings);
            Table { header: header(&cols), rows }
        }
        Command::OpCascade | Command::OpRelay => {
            let dist = cascade(cfg)?;
            let grid = cfg.grid.expect("grid default");
            let xs = grid.abscissae();
            let relay = cfg.command == Command::OpRelay;
            let est: Vec<(Estimate, f64)> = xs
                .par_iter()
                .map(|&x| {
                    let th = grid.linear(x);
                    let e = dist.cdf(th)?;
                    let f_sr = if relay { fading::cdf_single(&cfg.links[2], th)? } else { 0.0 };
                    Ok((e, f_sr))
                })
                .collect::<kmsprod::Result<_>>()?;
            let rd = draw(dist.model(), cfg)?;
            let sr = if relay && cfg.mc_samples > 0 {
                Some(oracle::sample_single_seeded(&cfg.links[2], cfg.seed.wrapping_add(1), cfg.mc_samples)?)
            } else {
                None
            };
            // the relay draws pair up in sampling order, so keep an unsorted copy
            let rd_raw = if relay && cfg.mc_samples > 0 {
                Some(oracle::sample_product_seeded(dist.model(), cfg.seed, cfg.mc_samples)?)
            } else {
                None
            };
            let at = if grid.scale == GridScale::Db { "gamma_th_dB" } else { "gamma_th" };
            let mut cols = vec![at, "op", "tail_estimate", "source"];
            if rd.is_some() {
                cols.extend(["mc_value", "mc_stderr"]);
                if relay {
                    cols.push("mc_exact_value");
                }
            }
            let mut rows = Vec::new();
            for (&x, (e, f_sr)) in xs.iter().zip(&est) {
                estimate_warnings(at, x, e, &mut warnings);
                let th = grid.linear(x);
                let (op, err) = if relay {
                    (metrics::relay_outage(*f_sr, e.value), (1.0 - f_sr) * e.error_estimate + 1e-12)
                } else {
                    (e.value, e.error_estimate)
                };
                let mut row = vec![fmt_num(x), fmt_num(op), fmt_num(err), source_label(e.source).into()];
                if let (true, Some(sr), Some(rd)) = (relay, &sr, &rd_raw) {
                    let n = sr.len() as f64;
                    let (mut hit_min, mut hit_exact) = (0usize, 0usize);
                    for (a, b) in sr.iter().zip(rd) {
                        hit_min += usize::from(a.min(*b) <= th);
                        hit_exact += usize::from(a * b / (a + b + 1.0) <= th);
                    }
                    let p = hit_min as f64 / n;
                    mc_columns(&mut row, Some((p, (p * (1.0 - p) / n).sqrt())));
                    row.push(fmt_num(hit_exact as f64 / n));
                } else {
                    mc_columns(&mut row, rd.as_ref().map(|s| s.proportion(th)));
                }
                rows.push(row);
            }
            let plain: Vec<Estimate> = est.into_iter().map(|e| e.0).collect();
            fallback_note(&plain, &mut warnings);
            Table { header: header(&cols), rows }
        }
        Command::Moments => {
            let model = ProductModel::new(cfg.links[0], cfg.links[1])?;
            let samples = draw(&model, cfg)?;
            let mut cols = vec!["n", "moment", "tail_estimate", "source"];
            if samples.is_some() {
                cols.extend(["mc_value", "mc_stderr"]);
            }
            let mut rows = Vec::new();
            for &n in &cfg.orders {
                let v = product::moment_product(&model, n)?;
                let mut row = vec![n.to_string(), fmt_num(v), "0".into(), "closed_form".into()];
                mc_columns(&mut row, samples.as_ref().map(|s| s.mean_of(|y| y.powi(n as i32))));
                rows.push(row);
            }
            Table { header: header(&cols), rows }
        }
        Command::Af | Command::Cqei => {
            let model = ProductModel::new(cfg.links[0], cfg.links[1])?;
            let (name, v) = if cfg.command == Command::Af {
                ("af", metrics::amount_of_fading(&model))
            } else {
                ("cqei", metrics::cqei(&model))
            };
            let samples = draw(&model, cfg)?;
            let mut cols = vec!["metric", "value", "tail_estimate", "source"];
            if samples.is_some() {
                cols.extend(["mc_value", "mc_stderr"]);
            }
            let mut row = vec![name.to_string(), fmt_num(v), "0".into(), "closed_form".into()];
            let power = if cfg.command == Command::Af { 2 } else { 3 };
            mc_columns(&mut row, samples.as_ref().map(|s| batch_ratio(&s.sorted, cfg.seed, power)));
            Table {
                header: header(&cols),
                rows: vec![row],
            }
        }
        Command::Sample => {
            let model = ProductModel::new(cfg.links[0], cfg.links[1])?;
            let ys = oracle::sample_product_seeded(&model, cfg.seed, cfg.mc_samples)?;
            Table {
                header: header(&["index", "y"]),
                rows: ys.iter().enumerate().map(|(i, y)| vec![i.to_string(), fmt_num(*y)]).collect(),
            }
        }
        Command::Validate => {
            let opts = ValidationOptions { seed: cfg.seed, full: cfg.full };
            let reports = validate::run_suite(&opts);
            let rows = reports
                .iter()
                .map(|r| vec![r.id.to_string(), r.title.to_string(), r.passed.to_string(), r.summary.clone()])
                .collect();
            validation = Some(reports);
            Table {
                header: header(&["criterion", "title", "passed", "summary"]),
                rows,
            }
        }
    };
    warnings.sort();
    warnings.dedup();
    Ok(RunOutput {
        table,
        warnings,
        validation,
    })
}

/// `Var/E^2` (power 2) or `Var/E^3` (power 3) with a batch-means standard
/// error over 20 interleaved batches of the sample.
fn batch_ratio(sorted: &[f64], seed: u64, power: i32) -> (f64, f64) {
    let ratio = |xs: &mut dyn Iterator<Item = f64>| {
        let (mut n, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for x in xs {
            n += 1.0;
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / n;
        (s2 / n - mean * mean) / mean.powi(power)
    };
    let all = ratio(&mut sorted.iter().copied());
    const B: usize = 20;
    if sorted.len() < 2 * B {
        return (all, f64::NAN);
    }
    // sorted order would bias the batches; stride through it instead
    let offset = (seed % B as u64) as usize;
    let parts: Vec<f64> = (0..B)
        .map(|b| ratio(&mut sorted.iter().copied().skip((b + offset) % B).step_by(B)))
        .collect();
    let mean = parts.iter().sum::<f64>() / B as f64;
    let var = parts.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (B - 1) as f64;
    (all, (var / B as f64).sqrt())
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    library_version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    seed: u64,
    csv: Option<String>,
    columns: &'a [String],
    rows: usize,
    warnings: &'a [String],
    validation: Option<&'a [CriterionReport]>,
}

pub fn render_csv(table: &Table) -> Result<Vec<u8>, RunError> {
    let io = |e: csv::Error| RunError::Output {
        path: "csv".into(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.header).map_err(io)?;
    for r in &table.rows {
        w.write_record(r).map_err(io)?;
    }
    w.into_inner().map_err(|e| RunError::Output {
        path: "csv".into(),
        message: e.to_string(),
    })
}

pub fn render_manifest(cfg: &RunConfig, out: &RunOutput) -> String {
    let m = Manifest {
        tool: "kmsprod",
        version: env!("CARGO_PKG_VERSION"),
        library_version: kmsprod::VERSION,
        command: cfg.command.name(),
        config: cfg,
        seed: cfg.seed,
        csv: cfg.out.as_ref().map(|p| p.display().to_string()),
        columns: &out.table.header,
        rows: out.table.rows.len(),
        warnings: &out.warnings,
        validation: out.validation.as_deref(),
    };
    let mut s = serde_json::to_string_pretty(&m).unwrap_or_else(|e| format!("{{\"error\": \"{e}\"}}"));
    s.push('\n');
    s
}

/// Writes the CSV to `--out` (manifest beside it as `<stem>.manifest.json`),
/// or the CSV to stdout and the manifest to stderr.
pub fn write_outputs(cfg: &RunConfig, out: &RunOutput) -> Result<(), RunError> {
    let csv = render_csv(&out.table)?;
    let manifest = render_manifest(cfg, out);
    let fail = |path: &std::path::Path, e: std::io::Error| RunError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    match &cfg.out {
        Some(path) => {
            fs::write(path, &csv).map_err(|e| fail(path, e))?;
            let mpath = path.with_extension("manifest.json");
            fs::write(&mpath, manifest).map_err(|e| fail(&mpath, e))?;
        }
        None => {
            std::io::stdout()
                .write_all(&csv)
                .map_err(|e| fail(std::path::Path::new("stdout"), e))?;
            eprint!("{manifest}");
        }
    }
    Ok(())
}

/// Parses and runs `key=value` text directly; convenient for tests.
pub fn run_text(command: Command, text: &str) -> Result<RunOutput, RunError> {
    let cfg = crate::config::parse_params(command, text)?;
    run(&cfg)
}

/// Merges assignment sources, later ones overriding earlier ones.
pub fn merge(sources: Vec<BTreeMap<String, String>>) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for s in sources {
        out.extend(s);
    }
    out
}
