//! Two-stage ensemble: the orthogonalized (MO) and synthetic-control (MSCM)
//! models are blended by a gated network whose weights are evolved with
//! NSGA-II against the four objectives, then one solution is picked by TOPSIS.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::datakit::{Dataset, Encoder};
use crate::error::{domain, Error, Result};
use crate::fairmodels::{
    fit_mb, fit_mbc, fit_mdf, fit_mo, fit_mscm, fit_mu, FairConfig, FairModelKind, MoModel, MscmModel,
};
use crate::metrics::{objective_vector, EvaluatorConfig, FairnessEvaluator, FairnessReport, ObjectiveVector};
use crate::moo::{
    nondominated_indices, nsga2_evolve_with, topsis_select, write_parallel_coordinates, Individual, NsgaConfig,
    TopsisConfig,
};
use crate::predictors::{MlpModel, OutputActivation};

/// Output bias that drives the gate to exactly 1 (or below 1e-17 when negated).
pub const ENDPOINT_BIAS: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionSettings {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub eta_c: f64,
    pub eta_m: f64,
}

impl Default for EvolutionSettings {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 25,
            crossover_prob: 0.9,
            mutation_prob: 0.1,
            eta_c: 15.0,
            eta_m: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Base learner settings (engine, forest and donor pool for MSCM).
    pub fair: FairConfig,
    pub hidden: usize,
    /// Feed the standardized non-protected features to the gate alongside
    /// the two base predictions.
    pub include_features: bool,
    pub weight_bound: f64,
    pub bias_bound: f64,
    pub validation_fraction: f64,
    pub evaluator: EvaluatorConfig,
    pub evolution: EvolutionSettings,
    pub topsis: TopsisConfig,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            fair: FairConfig::default(),
            hidden: 8,
            include_features: true,
            weight_bound: 5.0,
            bias_bound: ENDPOINT_BIAS,
            validation_fraction: 0.25,
            evaluator: EvaluatorConfig::default(),
            evolution: EvolutionSettings::default(),
            topsis: TopsisConfig::default(),
            seed: 0,
        }
    }
}

/// Gate network: `premium = g * mo + (1 - g) * mscm` with `g` in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaLearner {
    pub encoder: Option<Encoder>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub mlp: MlpModel,
}

impl MetaLearner {
    fn fit_inputs(data: &Dataset, mo: &[f64], mscm: &[f64], include_features: bool, hidden: usize) -> Result<Self> {
        let encoder = if include_features {
            Some(Encoder::fit(data, false)?)
        } else {
            None
        };
        let width = encoder.as_ref().map_or(0, |e| e.ncols()) + 2;
        let mut meta = Self {
            encoder,
            center: vec![0.0; width],
            scale: vec![1.0; width],
            mlp: MlpModel::zeros(&[width, hidden, 1], 1, OutputActivation::Logistic)?,
        };
        let raw = meta.raw_inputs(data, mo, mscm)?;
        for j in 0..width {
            let col = raw.column(j);
            let m = col.sum() / col.len() as f64;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64;
            meta.center[j] = m;
            meta.scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Ok(meta)
    }

    fn raw_inputs(&self, data: &Dataset, mo: &[f64], mscm: &[f64]) -> Result<Array2<f64>> {
        let n = data.n_rows();
        let features = match &self.encoder {
            Some(e) => Some(e.transform(data)?),
            None => None,
        };
        let p = features.as_ref().map_or(0, |f| f.ncols());
        let mut x = Array2::zeros((n, p + 2));
        for i in 0..n {
            if let Some(f) = &features {
                for j in 0..p {
                    x[[i, j]] = f.design[[i, j]];
                }
            }
            x[[i, p]] = mo[i];
            x[[i, p + 1]] = mscm[i];
        }
        Ok(x)
    }

    /// Standardized network inputs.
    pub fn inputs(&self, data: &Dataset, mo: &[f64], mscm: &[f64]) -> Result<Array2<f64>> {
        let mut x = self.raw_inputs(data, mo, mscm)?;
        for mut row in x.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.center[j]) / self.scale[j];
            }
        }
        Ok(x)
    }

    pub fn genome_length(&self) -> usize {
        self.mlp.params.len()
    }

    pub fn encode(&self) -> Vec<f64> {
        self.mlp.params.clone()
    }

    pub fn decode(&self, genome: &[f64]) -> Result<Self> {
        Ok(Self {
            mlp: self.mlp.clone().with_params(genome.to_vec())?,
            ..self.clone()
        })
    }

    pub fn gates(&self, inputs: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.mlp.predict(inputs)
    }

    pub fn output_bias_index(&self) -> usize {
        self.mlp.output_bias_index(0, 0)
    }

    /// Per-gene bounds: weights in `[-w, w]`, the output bias in `[-b, b]`.
    pub fn bounds(&self, weight_bound: f64, bias_bound: f64) -> Vec<(f64, f64)> {
        let k = self.output_bias_index();
        (0..self.genome_length())
            .map(|i| {
                let b = if i == k { bias_bound } else { weight_bound };
                (-b, b)
            })
            .collect()
    }

    /// Genome with every parameter zero except the output bias.
    pub fn endpoint_genome(&self, bias: f64) -> Vec<f64> {
        let mut g = vec![0.0; self.genome_length()];
        g[self.output_bias_index()] = bias;
        g
    }
}

pub fn blend(gates: &[f64], mo: &[f64], mscm: &[f64]) -> Vec<f64> {
    gates
        .iter()
        .zip(mo.iter().zip(mscm))
        .map(|(g, (a, b))| g * a + (1.0 - g) * b)
        .collect()
}

/// Deployable ensemble: both base models plus the selected gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub mo: MoModel,
    pub mscm: MscmModel,
    pub meta: MetaLearner,
}

impl EnsembleModel {
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let mo = self.mo.predict(data)?;
        let mscm = self.mscm.predict(data)?;
        let x = self.meta.inputs(data, &mo, &mscm)?;
        Ok(blend(&self.meta.gates(x.view())?, &mo, &mscm))
    }
}

/// Frozen evaluation state shared by every genome within a run.
pub struct EvaluationContext {
    meta: MetaLearner,
    inputs: Array2<f64>,
    mo: Vec<f64>,
    mscm: Vec<f64>,
    evaluator: FairnessEvaluator,
    cache: Mutex<BTreeMap<Vec<u64>, [f64; 4]>>,
}

impl EvaluationContext {
    pub fn new(meta: MetaLearner, data: &Dataset, mo: Vec<f64>, mscm: Vec<f64>, evaluator: FairnessEvaluator) -> Result<Self> {
        let inputs = meta.inputs(data, &mo, &mscm)?;
        Ok(Self {
            meta,
            inputs,
            mo,
            mscm,
            evaluator,
            cache: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn meta(&self) -> &MetaLearner {
        &self.meta
    }

    pub fn evaluator(&self) -> &FairnessEvaluator {
        &self.evaluator
    }

    pub fn predictions(&self, genome: &[f64]) -> Result<Vec<f64>> {
        let gates = self.meta.decode(genome)?.gates(self.inputs.view())?;
        Ok(blend(&gates, &self.mo, &self.mscm))
    }

    fn compute(&self, genome: &[f64]) -> Result<[f64; 4]> {
        let p = self.predictions(genome)?;
        if p.iter().any(|v| !v.is_finite()) {
            return domain("non-finite blended premium");
        }
        Ok(self.evaluator.objectives(&p)?.to_array())
    }

    /// Objective vector of a genome; failures map to all `+inf`.
    pub fn evaluate_genome(&self, genome: &[f64]) -> [f64; 4] {
        let key: Vec<u64> = genome.iter().map(|v| v.to_bits()).collect();
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return *v;
        }
        let v = self.compute(genome).unwrap_or_else(|e| {
            log::warn!("genome evaluation failed: {e}");
            [f64::INFINITY; 4]
        });
        self.cache.lock().expect("cache lock").insert(key, v);
        v
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoSolution {
    pub genome: Vec<f64>,
    pub objectives: ObjectiveVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSolution {
    /// Position in the archive.
    pub index: usize,
    pub closeness: f64,
    pub genome: Vec<f64>,
    pub objectives: ObjectiveVector,
    pub topsis: TopsisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub rmse: f64,
    pub gini: f64,
    pub dir: f64,
    pub lipschitz_q95: f64,
    pub median_ite: f64,
}

impl ReportRow {
    fn new(model: &str, r: &FairnessReport) -> Self {
        Self {
            model: model.into(),
            rmse: r.rmse,
            gini: r.gini,
            dir: r.dir,
            lipschitz_q95: r.lipschitz_q95,
            median_ite: r.median_ite,
        }
    }

    pub fn objectives(&self) -> ObjectiveVector {
        objective_vector(&FairnessReport {
            rmse: self.rmse,
            gini: self.gini,
            dir: self.dir,
            lipschitz_q95: self.lipschitz_q95,
            median_ite: self.median_ite,
            ite_distribution: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarRow {
    pub model: String,
    pub rmse: usize,
    pub dir_gap: usize,
    pub lipschitz: usize,
    pub median_ite: usize,
}

/// Per-dimension ranks (1 = best) over minimization-aligned scores; ties
/// share the lower rank.
pub fn radar_export(rows: &[ReportRow]) -> Vec<RadarRow> {
    let objs: Vec<[f64; 4]> = rows.iter().map(|r| r.objectives().to_array()).collect();
    let rank = |i: usize, j: usize| 1 + objs.iter().filter(|o| o[j] < objs[i][j]).count();
    rows.iter()
        .enumerate()
        .map(|(i, r)| RadarRow {
            model: r.model.clone(),
            rmse: rank(i, 0),
            dir_gap: rank(i, 1),
            lipschitz: rank(i, 2),
            median_ite: rank(i, 3),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRun {
    pub archive: Vec<ParetoSolution>,
    pub selected: SelectedSolution,
    pub endpoints: [ObjectiveVector; 2],
    pub report: Vec<ReportRow>,
    pub model: EnsembleModel,
    pub evaluations: usize,
}

/// TOPSIS over the archive after dropping criteria that are zero for every
/// solution (their weight is spread over the rest in proportion).
fn select(archive: &[ParetoSolution], topsis: &TopsisConfig) -> Result<(usize, f64)> {
    let rows: Vec<[f64; 4]> = archive.iter().map(|s| s.objectives.to_array()).collect();
    let keep: Vec<usize> = (0..4).filter(|&j| rows.iter().any(|r| r[j] != 0.0)).collect();
    if keep.is_empty() {
        return Ok((0, 1.0));
    }
    let total: f64 = keep.iter().map(|&j| topsis.weights[j]).sum();
    let config = if total > 0.0 {
        TopsisConfig {
            weights: keep.iter().map(|&j| topsis.weights[j] / total).collect(),
            criteria: keep.iter().map(|&j| topsis.criteria[j]).collect(),
        }
    } else {
        TopsisConfig {
            weights: vec![1.0 / keep.len() as f64; keep.len()],
            criteria: keep.iter().map(|&j| topsis.criteria[j]).collect(),
        }
    };
    let matrix: Vec<Vec<f64>> = rows.iter().map(|r| keep.iter().map(|&j| r[j]).collect()).collect();
    let res = topsis_select(&matrix, &config)?;
    Ok((res.best, res.closeness[res.best]))
}

pub fn run_ensemble(data: &Dataset, config: &EnsembleConfig) -> Result<EnsembleRun> {
    if config.topsis.weights.len() != 4 {
        return Err(Error::Dimension {
            expected: 4,
            found: config.topsis.weights.len(),
        });
    }
    config.topsis.validate()?;
    let (train, valid) = data.split(config.validation_fraction, config.seed)?;
    let engine = &config.fair.engine;
    let mo_model = fit_mo(engine, &train)?;
    let (mscm_model, _) = fit_mscm(&config.fair, &train)?;
    let meta = MetaLearner::fit_inputs(
        &train,
        &mo_model.predict(&train)?,
        &mscm_model.predict(&train)?,
        config.include_features,
        config.hidden,
    )?;
    let evaluator = FairnessEvaluator::new(&valid, EvaluatorConfig { seed: config.seed, ..config.evaluator })?;
    let mo_valid = mo_model.predict(&valid)?;
    let mscm_valid = mscm_model.predict(&valid)?;
    let ctx = EvaluationContext::new(meta.clone(), &valid, mo_valid.clone(), mscm_valid.clone(), evaluator)?;

    let ev = &config.evolution;
    let nsga = NsgaConfig {
        population: ev.population,
        generations: ev.generations,
        crossover_prob: ev.crossover_prob,
        mutation_prob: ev.mutation_prob,
        eta_c: ev.eta_c,
        eta_m: ev.eta_m,
        bounds: meta.bounds(config.weight_bound, config.bias_bound),
        seed: config.seed,
    };
    let endpoints = [meta.endpoint_genome(config.bias_bound), meta.endpoint_genome(-config.bias_bound)];
    let result = nsga2_evolve_with(|g| ctx.evaluate_genome(g).to_vec(), &nsga, &endpoints, |_, _| {})?;
    let endpoint_objs = endpoints.clone().map(|g| ctx.evaluate_genome(&g));

    // final archive: non-dominated members of the last front plus both endpoints
    let mut pool: Vec<Individual> = result.archive.clone();
    for (g, o) in endpoints.iter().zip(&endpoint_objs) {
        pool.push(Individual {
            genome: g.clone(),
            objectives: o.to_vec(),
            rank: 1,
            crowding: 0.0,
        });
    }
    let mut seen = std::collections::BTreeSet::new();
    pool.retain(|i| seen.insert(i.genome.iter().map(|v| v.to_bits()).collect::<Vec<u64>>()));
    pool.retain(|i| i.objectives.iter().all(|v| v.is_finite()));
    let objs: Vec<Vec<f64>> = pool.iter().map(|i| i.objectives.clone()).collect();
    let archive: Vec<ParetoSolution> = nondominated_indices(&objs)
        .into_iter()
        .map(|k| ParetoSolution {
            genome: pool[k].genome.clone(),
            objectives: ObjectiveVector::from_array(pool[k].objectives.clone().try_into().expect("four objectives")),
        })
        .collect();
    if archive.is_empty() {
        return domain("every candidate gate produced non-finite objectives");
    }
    let (index, closeness) = select(&archive, &config.topsis)?;
    let chosen = &archive[index];
    let selected = SelectedSolution {
        index,
        closeness,
        genome: chosen.genome.clone(),
        objectives: chosen.objectives,
        topsis: config.topsis.clone(),
    };
    let model = EnsembleModel {
        mo: mo_model.clone(),
        mscm: mscm_model.clone(),
        meta: meta.decode(&chosen.genome)?,
    };

    // comparison table on the validation split
    let mb = fit_mb(engine, &train)?;
    let mut preds: Vec<(FairModelKind, Vec<f64>)> = vec![
        (FairModelKind::Mb, mb.predict(&valid)?),
        (FairModelKind::Mu, fit_mu(engine, &train)?.predict(&valid)?),
        (FairModelKind::Mo, mo_valid),
        (FairModelKind::Mdf, fit_mdf(mb.clone(), &train)?.predict(&valid)?),
        (FairModelKind::Mbc, fit_mbc(mb, &train)?.predict(&valid)?),
        (FairModelKind::Mscm, mscm_valid),
    ];
    let mut report = Vec::new();
    for (kind, p) in preds.drain(..) {
        report.push(ReportRow::new(kind.name(), &ctx.evaluator().report(&p)?));
    }
    report.push(ReportRow::new("Ensemble", &ctx.evaluator().report(&ctx.predictions(&chosen.genome)?)?));

    Ok(EnsembleRun {
        archive,
        selected,
        endpoints: endpoint_objs.map(ObjectiveVector::from_array),
        report,
        model,
        evaluations: result.evaluations,
    })
}

impl EnsembleRun {
    pub fn radar(&self) -> Vec<RadarRow> {
        radar_export(&self.report)
    }

    /// Writes `pareto.csv`, `pareto.json`, `selected.json`, `report.csv`,
    /// `radar.csv` and `ensemble_model.json` into `dir`.
    pub fn write_outputs(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let individuals: Vec<Individual> = self
            .archive
            .iter()
            .map(|s| Individual {
                genome: s.genome.clone(),
                objectives: s.objectives.to_array().to_vec(),
                rank: 1,
                crowding: 0.0,
            })
            .collect();
        let mut buf = Vec::new();
        write_parallel_coordinates(&mut buf, &ObjectiveVector::NAMES, &individuals)?;
        write(dir.join("pareto.csv"), &buf)?;
        write(dir.join("pareto.json"), serde_json::to_string_pretty(&self.archive)?.as_bytes())?;
        write(dir.join("selected.json"), serde_json::to_string_pretty(&self.selected)?.as_bytes())?;
        write(dir.join("report.csv"), &to_csv(&self.report)?)?;
        write(dir.join("radar.csv"), &to_csv(&self.radar())?)?;
        write(dir.join("ensemble_model.json"), serde_json::to_string_pretty(&self.model)?.as_bytes())?;
        Ok(())
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))
}

fn write(path: std::path::PathBuf, bytes: &[u8]) -> Result<()> {
    std::fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}
