use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fairprice_core::datakit::Dataset;
use fairprice_core::ensemble::{run_ensemble, EnsembleRun};
use fairprice_core::fairmodels::{fit_fair, FairModel, FairModelKind};
use fairprice_core::metrics::{double_lift, solidarity_table, FairnessEvaluator, FairnessReport};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::svg::scatter_svg;

/// Fairness criteria plotted against RMSE, one CSV per criterion.
pub const SCATTER_METRICS: [&str; 4] = ["gini", "dir", "lipschitz_q95", "median_ite"];

const REQUIRED_ARTIFACTS: [&str; 2] = ["config.json", "evaluation.json"];

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(fairprice_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    if !path.exists() {
        return Err(CliError::MissingArtifact(path.display().to_string()));
    }
    std::fs::read(path).map_err(|e| io_err(path, e))
}

fn pretty<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn write_config(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    write_file(&out.join("config.json"), &pretty(cfg)?)
}

pub fn model_path(out: &Path, kind: FairModelKind) -> PathBuf {
    out.join("models").join(format!("{}.json", kind.name()))
}

pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> CliResult<Dataset> {
    let data = cfg.dataset()?;
    let mut csv = Vec::new();
    data.write_csv(&mut csv)?;
    write_file(&out.join("data.csv"), &csv)?;
    write_file(&out.join("data.json"), &pretty(&data.sidecar())?)?;
    Ok(data)
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> CliResult<Vec<FairModel>> {
    let (train, _) = cfg.split()?;
    let mut models = Vec::with_capacity(cfg.models.len());
    for &kind in &cfg.models {
        log::info!("fitting {}", kind.name());
        let model = fit_fair(kind, &cfg.fair, &train)?;
        write_file(&model_path(out, kind), model.to_json()?.as_bytes())?;
        models.push(model);
    }
    write_config(cfg, out)?;
    Ok(models)
}

fn load_models(cfg: &RunConfig, out: &Path) -> CliResult<Vec<FairModel>> {
    cfg.models
        .iter()
        .map(|&kind| {
            let path = model_path(out, kind);
            let text = String::from_utf8_lossy(&read_file(&path)?).into_owned();
            Ok(FairModel::from_json(&text)?)
        })
        .collect()
}

/// Report without the per-leaf records; the ITE summary stays.
#[derive(Debug, Clone, Serialize)]
pub struct ModelEvaluation {
    pub model: String,
    pub rmse: f64,
    pub gini: f64,
    pub dir: f64,
    pub lipschitz_q95: f64,
    pub median_ite: f64,
    pub ite_deciles: Vec<f64>,
}

impl ModelEvaluation {
    fn new(model: &str, report: &FairnessReport) -> Self {
        Self {
            model: model.into(),
            rmse: report.rmse,
            gini: report.gini,
            dir: report.dir,
            lipschitz_q95: report.lipschitz_q95,
            median_ite: report.median_ite,
            ite_deciles: report.ite_distribution.as_ref().map(|d| d.deciles.clone()).unwrap_or_default(),
        }
    }

    pub fn metric(&self, name: &str) -> f64 {
        match name {
            "rmse" => self.rmse,
            "gini" => self.gini,
            "dir" => self.dir,
            "lipschitz_q95" => self.lipschitz_q95,
            "median_ite" => self.median_ite,
            other => panic!("unknown metric `{other}`"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub test: Vec<ModelEvaluation>,
    pub train: Vec<ModelEvaluation>,
}

fn evaluate_on(models: &[FairModel], data: &Dataset, cfg: &RunConfig) -> CliResult<Vec<ModelEvaluation>> {
    let evaluator = FairnessEvaluator::new(data, cfg.metrics)?;
    models
        .iter()
        .map(|m| {
            let report = evaluator.report(&m.predict(data)?)?;
            Ok(ModelEvaluation::new(m.kind().name(), &report))
        })
        .collect()
}

pub fn scatter_csv(rows: &[ModelEvaluation], metric: &str) -> String {
    let mut s = format!("model,rmse,{metric}\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.model, r.rmse, r.metric(metric)));
    }
    s
}

pub fn cmd_evaluate(cfg: &RunConfig, out: &Path, svg: bool) -> CliResult<Evaluation> {
    let models = load_models(cfg, out)?;
    let (train, test) = cfg.split()?;
    let evaluation = Evaluation {
        test: evaluate_on(&models, &test, cfg)?,
        train: evaluate_on(&models, &train, cfg)?,
    };
    write_file(&out.join("evaluation.json"), &pretty(&evaluation)?)?;
    for metric in SCATTER_METRICS {
        write_file(&out.join(format!("scatter_{metric}.csv")), scatter_csv(&evaluation.test, metric).as_bytes())?;
        if svg {
            let points: Vec<(String, f64, f64)> = evaluation
                .test
                .iter()
                .map(|r| (r.model.clone(), r.rmse, r.metric(metric)))
                .collect();
            write_file(&out.join(format!("scatter_{metric}.svg")), scatter_svg(&points, "rmse", metric).as_bytes())?;
        }
    }
    Ok(evaluation)
}

/// Solidarity of each fair model against the best estimate, and double
/// lift of each adjusted model against the unaware benchmark, on the test
/// split.
pub fn cmd_analytics(cfg: &RunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let models = load_models(cfg, out)?;
    let (_, test) = cfg.split()?;
    let mut preds = BTreeMap::new();
    for m in &models {
        preds.insert(m.kind(), m.predict(&test)?);
    }
    let need = |kind: FairModelKind| {
        preds
            .get(&kind)
            .ok_or_else(|| CliError::MissingArtifact(model_path(out, kind).display().to_string()))
    };
    let dir = out.join("analytics");
    let mut written = Vec::new();

    let mb = need(FairModelKind::Mb)?;
    for (&kind, yhat) in &preds {
        if kind == FairModelKind::Mb {
            continue;
        }
        let table = solidarity_table(&test, yhat, mb, &cfg.analytics.solidarity)?;
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        let path = dir.join(format!("solidarity_{}.csv", kind.name()));
        write_file(&path, &buf)?;
        written.push(path);
    }

    let mu = need(FairModelKind::Mu)?;
    let in_a = test.group_mask()?;
    for kind in [FairModelKind::Mo, FairModelKind::Mdf, FairModelKind::Mscm] {
        let Some(yhat) = preds.get(&kind) else { continue };
        let rows = double_lift(mu, yhat, test.target(), &in_a, cfg.analytics.lift_bins)?;
        let mut w = csv_writer();
        for r in &rows {
            w.serialize(r).map_err(fairprice_core::Error::from)?;
        }
        let path = dir.join(format!("double_lift_MU_{}.csv", kind.name()));
        write_file(&path, &w.into_inner().expect("in-memory writer"))?;
        written.push(path);
    }
    Ok(written)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

/// Runs the ensemble on the training split; the test split stays unseen.
pub fn cmd_ensemble(cfg: &RunConfig, out: &Path) -> CliResult<EnsembleRun> {
    let (train, _) = cfg.split()?;
    let run = run_ensemble(&train, &cfg.ensemble)?;
    run.write_outputs(out.join("ensemble"))?;
    write_config(cfg, out)?;
    Ok(run)
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub artifacts: Vec<Artifact>,
    pub evaluation: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble_selected: Option<serde_json::Value>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn collect_files(root: &Path, dir: &Path, acc: &mut Vec<PathBuf>) -> CliResult<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(root, &p, acc)?;
        } else if p.strip_prefix(root).is_ok_and(|r| !r.starts_with("summary.json") && !r.starts_with("summary.md")) {
            acc.push(p);
        }
    }
    Ok(())
}

/// Bundles a run directory into `summary.json` and `summary.md`.
pub fn cmd_report(out: &Path) -> CliResult<Summary> {
    for name in REQUIRED_ARTIFACTS {
        read_file(&out.join(name))?;
    }
    let config = read_file(&out.join("config.json"))?;
    let cfg: serde_json::Value = serde_json::from_slice(&config)?;
    let evaluation: serde_json::Value = serde_json::from_slice(&read_file(&out.join("evaluation.json"))?)?;
    let selected_path = out.join("ensemble").join("selected.json");
    let ensemble_selected = if selected_path.exists() {
        Some(serde_json::from_slice(&read_file(&selected_path)?)?)
    } else {
        None
    };

    let mut files = Vec::new();
    collect_files(out, out, &mut files)?;
    let artifacts = files
        .iter()
        .map(|p| {
            Ok(Artifact {
                path: p.strip_prefix(out).expect("under run dir").to_string_lossy().replace('\\', "/"),
                sha256: sha256_hex(&read_file(p)?),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let summary = Summary {
        config_sha256: sha256_hex(&config),
        seed: cfg.get("seed").and_then(|v| v.as_u64()),
        artifacts,
        evaluation,
        ensemble_selected,
    };
    write_file(&out.join("summary.json"), &pretty(&summary)?)?;
    write_file(&out.join("summary.md"), markdown(&summary).as_bytes())?;
    Ok(summary)
}

fn markdown(s: &Summary) -> String {
    let mut md = String::from("# Run summary\n\n");
    md.push_str(&format!("- config sha256: `{}`\n", s.config_sha256));
    if let Some(seed) = s.seed {
        md.push_str(&format!("- seed: {seed}\n"));
    }
    md.push_str("\n## Test metrics\n\n| model | rmse | gini | dir | lipschitz_q95 | median_ite |\n|---|---|---|---|---|---|\n");
    if let Some(rows) = s.evaluation.get("test").and_then(|v| v.as_array()) {
        for r in rows {
            let f = |k: &str| r.get(k).and_then(|v| v.as_f64()).map_or("NA".to_string(), |x| format!("{x:.6}"));
            md.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} |\n",
                r.get("model").and_then(|v| v.as_str()).unwrap_or("?"),
                f("rmse"),
                f("gini"),
                f("dir"),
                f("lipschitz_q95"),
                f("median_ite"),
            ));
        }
    }
    if let Some(sel) = &s.ensemble_selected {
        md.push_str("\n## Selected ensemble solution\n\n");
        if let Some(obj) = sel.get("objectives").and_then(|v| v.as_object()) {
            for (k, v) in obj {
                md.push_str(&format!("- {k}: {v}\n"));
            }
        }
    }
    md.push_str("\n## Artifacts\n\n");
    for a in &s.artifacts {
        md.push_str(&format!("- `{}` {}\n", a.path, a.sha256));
    }
    md
}
