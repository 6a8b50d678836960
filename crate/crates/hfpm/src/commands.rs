//! Subcommand bodies. Each writes its outputs under `out` and returns the
//! paths it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use hfpm_core::cost::ComponentCostTable;
use hfpm_core::redistribution::top_fraction;
use hfpm_core::svd::SvdFactor;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::pipeline::{self, mean_std, SimRow};
use crate::tensor_file::TensorFile;

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| CliError::io(p, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).expect("report types serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    let io = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    CliError::io(path, io)
}

#[derive(Debug, Serialize)]
struct FactorFiles {
    u: String,
    sigma: String,
    v: String,
}

fn write_factor(dir: &Path, id: &str, f: &SvdFactor) -> Result<FactorFiles> {
    let names = FactorFiles {
        u: format!("{id}.u.hfpm"),
        sigma: format!("{id}.sigma.hfpm"),
        v: format!("{id}.v.hfpm"),
    };
    TensorFile::from_matrix(&f.u).write(&dir.join(&names.u))?;
    TensorFile::from_vector(&f.sigma).write(&dir.join(&names.sigma))?;
    TensorFile::from_matrix(&f.v).write(&dir.join(&names.v))?;
    Ok(names)
}

/// Reads a factor written by [`cmd_decompose`] or [`cmd_finetune`].
pub fn read_factor(dir: &Path, id: &str) -> Result<SvdFactor> {
    let read = |suffix: &str| {
        let p = dir.join(format!("{id}.{suffix}.hfpm"));
        TensorFile::read(&p).map(|t| (p, t))
    };
    let wrap = |p: PathBuf, source| CliError::Tensor { path: p, source };
    let (pu, u) = read("u")?;
    let (ps, s) = read("sigma")?;
    let (pv, v) = read("v")?;
    let u = u.to_matrix().map_err(|e| wrap(pu, e))?;
    let sigma = s.to_vector().map_err(|e| wrap(ps, e))?;
    let v = v.to_matrix().map_err(|e| wrap(pv, e))?;
    Ok(SvdFactor::from_parts(u, sigma, v)?)
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    id: String,
    rows: usize,
    cols: usize,
    rank: usize,
    full_rank: usize,
    reconstruction_error: f64,
    relative_error: f64,
    files: FactorFiles,
}

#[derive(Debug, Serialize)]
struct Manifest {
    schema_version: u32,
    matrices: Vec<ManifestEntry>,
}

/// SVD + truncation of every input matrix (the task's base weights when the
/// config lists no files).
pub fn cmd_decompose(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let weights = if cfg.inputs.is_empty() {
        pipeline::task_weights(&pipeline::build_task(cfg)?)
    } else {
        cfg.inputs
            .iter()
            .map(|p| {
                let m = TensorFile::read(p)?.to_matrix().map_err(|source| CliError::Tensor {
                    path: p.clone(),
                    source,
                })?;
                let id = p.file_stem().map_or_else(|| "matrix".into(), |s| s.to_string_lossy().into_owned());
                Ok((id, m))
            })
            .collect::<Result<Vec<_>>>()?
    };
    let done = pipeline::decompose(&weights, cfg.rank_policy)?;
    let dir = out.join("factors");
    create_dir(&dir)?;
    let mut matrices = Vec::new();
    for (d, (_, w)) in done.iter().zip(&weights) {
        matrices.push(ManifestEntry {
            id: d.id.clone(),
            rows: w.rows(),
            cols: w.cols(),
            rank: d.factor.rank(),
            full_rank: d.full.rank(),
            reconstruction_error: d.reconstruction_error,
            relative_error: d.relative_error,
            files: write_factor(&dir, &d.id, &d.factor)?,
        });
    }
    let manifest = out.join("manifest.json");
    write_json(
        &manifest,
        &Manifest {
            schema_version: crate::config::SCHEMA_VERSION,
            matrices,
        },
    )?;
    Ok(vec![dir, manifest])
}

#[derive(Debug, Serialize)]
struct GradientFile<'a> {
    id: String,
    rank: usize,
    record: &'a hfpm_core::redistribution::GradientRecord,
}

#[derive(Debug, Serialize)]
struct FinetuneSummary {
    initial_loss: f64,
    final_loss: f64,
    /// Share of gradient mass on the top 10% of ranks, first step vs all steps.
    top10_first_step: Vec<f64>,
    top10_accumulated: Vec<f64>,
}

pub fn cmd_finetune(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let task = pipeline::build_task(cfg)?;
    let outcome = pipeline::run_finetune(cfg, &task)?;
    let fdir = out.join("factors");
    let gdir = out.join("gradient");
    create_dir(&fdir)?;
    create_dir(&gdir)?;
    for (i, (f, r)) in outcome.factors.iter().zip(&outcome.records).enumerate() {
        let id = pipeline::matrix_id(i);
        write_factor(&fdir, &id, f)?;
        write_json(
            &gdir.join(format!("{id}.grad.json")),
            &GradientFile {
                id: id.clone(),
                rank: r.len(),
                record: r,
            },
        )?;
    }
    let curve = out.join("loss_curve.csv");
    let mut w = csv_writer(&curve)?;
    for e in &outcome.curve {
        w.serialize(e).map_err(|e| csv_err(&curve, e))?;
    }
    w.flush().map_err(|e| CliError::io(&curve, e))?;
    let summary = out.join("finetune.json");
    write_json(
        &summary,
        &FinetuneSummary {
            initial_loss: outcome.initial_loss,
            final_loss: outcome.final_loss,
            top10_first_step: outcome.records.iter().map(|r| top_fraction(&r.first_step, 10.0)).collect(),
            top10_accumulated: outcome.records.iter().map(|r| top_fraction(&r.accumulated, 10.0)).collect(),
        },
    )?;
    Ok(vec![fdir, gdir, curve, summary])
}

pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_JSON: &str = "summary.json";

pub fn write_rows(path: &Path, rows: &[SimRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    if rows.is_empty() {
        w.write_record([
            "k_percent",
            "seed",
            "selection_mode",
            "loss",
            "saturations",
            "energy_pj",
            "latency_ns",
            "conversions",
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn cmd_simulate(cfg: &ExperimentConfig, table: &ComponentCostTable, jobs: usize, out: &Path) -> Result<Vec<PathBuf>> {
    let sim = pipeline::simulate(cfg, table, jobs)?;
    create_dir(out)?;
    let csv_path = out.join(RESULTS_CSV);
    write_rows(&csv_path, &sim.rows)?;
    let json = out.join(SUMMARY_JSON);
    write_json(&json, &sim.rollup)?;
    Ok(vec![csv_path, json])
}

/// One line of the aggregated report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub run: String,
    pub selection_mode: String,
    pub k_percent: f64,
    pub seeds: usize,
    pub mean_loss: f64,
    pub std_loss: f64,
    pub mean_saturations: f64,
    pub mean_energy_pj: f64,
    pub mean_latency_ns: f64,
}

const REPORT_HEADER: [&str; 9] = [
    "run",
    "selection_mode",
    "k_percent",
    "seeds",
    "mean_loss",
    "std_loss",
    "mean_saturations",
    "mean_energy_pj",
    "mean_latency_ns",
];

fn results_file(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(RESULTS_CSV)
    } else {
        p.to_path_buf()
    }
}

/// Groups one run's rows by `(selection_mode, k_percent)`.
pub fn aggregate(run: &str, rows: &[SimRow]) -> Vec<ReportRow> {
    let mut keys: Vec<(String, f64)> = rows.iter().map(|r| (r.selection_mode.clone(), r.k_percent)).collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup();
    keys.into_iter()
        .map(|(mode, k)| {
            let sel: Vec<&SimRow> = rows.iter().filter(|r| r.selection_mode == mode && r.k_percent == k).collect();
            let losses: Vec<f64> = sel.iter().map(|r| r.loss).collect();
            let (mean_loss, std_loss) = mean_std(&losses);
            let n = sel.len() as f64;
            ReportRow {
                run: run.to_string(),
                selection_mode: mode,
                k_percent: k,
                seeds: sel.len(),
                mean_loss,
                std_loss,
                mean_saturations: sel.iter().map(|r| r.saturations as f64).sum::<f64>() / n,
                mean_energy_pj: sel.iter().map(|r| r.energy_pj).sum::<f64>() / n,
                mean_latency_ns: sel.iter().map(|r| r.latency_ns).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Aggregates simulate outputs. Unreadable inputs become warnings; the
/// report covers whatever could be read.
pub fn cmd_report(inputs: &[PathBuf], out: &Path) -> Result<(Vec<PathBuf>, Vec<String>)> {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for p in inputs {
        let file = results_file(p);
        let read = csv::Reader::from_path(&file).and_then(|mut r| r.deserialize::<SimRow>().collect::<Result<Vec<_>, _>>());
        match read {
            Ok(run_rows) => rows.extend(aggregate(&p.display().to_string(), &run_rows)),
            Err(e) => warnings.push(format!("skipped {}: {e}", file.display())),
        }
    }
    create_dir(out)?;
    let csv_path = out.join("report.csv");
    let mut w = csv_writer(&csv_path)?;
    if rows.is_empty() {
        w.write_record(REPORT_HEADER).map_err(|e| csv_err(&csv_path, e))?;
    }
    for r in &rows {
        w.serialize(r).map_err(|e| csv_err(&csv_path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&csv_path, e))?;

    let mut md = String::from("# Loss vs SLC budget\n\n");
    md.push_str(&format!("| {} |\n", REPORT_HEADER.join(" | ")));
    md.push_str(&format!("|{}\n", "---|".repeat(REPORT_HEADER.len())));
    for r in &rows {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {:.6e} | {:.3e} | {:.2} | {:.4e} | {:.4e} |\n",
            r.run,
            r.selection_mode,
            r.k_percent,
            r.seeds,
            r.mean_loss,
            r.std_loss,
            r.mean_saturations,
            r.mean_energy_pj,
            r.mean_latency_ns
        ));
    }
    if !warnings.is_empty() {
        md.push_str("\n## Warnings\n\n");
        for w in &warnings {
            md.push_str(&format!("- {w}\n"));
        }
    }
    let md_path = out.join("report.md");
    fs::write(&md_path, md).map_err(|e| CliError::io(&md_path, e))?;
    Ok((vec![csv_path, md_path], warnings))
}
