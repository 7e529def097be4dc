//! End-to-end orchestration: train a model on a partially labeled dataset,
//! solve each label layer, decode the readouts, score the predictions, and
//! sweep unlabeled fractions.
//!
//! All stages are deterministic functions of (dataset, config, seed); sweep
//! cells and label layers fan out in parallel without changing any result.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::annealer::{
    bias_mode, default_bias_magnitude, exact_ground_state, majority_of, path_integral_anneal,
    simulated_anneal, AnnealSchedule, LayerProblem, ReadSet, ScheduleKind, SolverDiagnostics,
    SpinConfiguration,
};
use crate::dataset::{split, Dataset, LabelId, SplitSpec};
use crate::encoding::{
    build_codebook, compute_barycenters, greedy_label_path, shortest_label_path, LabelCodebook,
};
use crate::error::{Error, Result};
use crate::learning::{fit, FitOptions, FitReport, LearningProblem, Optimizer};
use crate::par::{derive_seed, map_indices};
use crate::similarity::{
    coupling, knn_mask, prune_connectivity, similarity_matrix, CouplingMatrix, SimilarityModel,
};

/// Which solver classifies the layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Sa,
    Exact,
    Pimc,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sa" => Ok(SolverKind::Sa),
            "exact" => Ok(SolverKind::Exact),
            "pimc" => Ok(SolverKind::Pimc),
            other => Err(Error::InvalidArgument(format!(
                "unknown solver {other:?}; expected sa, exact, or pimc"
            ))),
        }
    }
}

/// Labeled-data treatment: hard clamps or large finite biases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HMode {
    Clamp,
    Bias { magnitude: Option<f64> },
}

/// Optional overrides on the solver schedule defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOptions {
    pub sweeps: Option<usize>,
    pub reads: Option<usize>,
    pub t_hot: Option<f64>,
    pub t_cold: Option<f64>,
    pub trotter_slices: Option<usize>,
    pub gamma_initial: Option<f64>,
    pub temperature: Option<f64>,
}

impl ScheduleOptions {
    fn apply(&self, mut schedule: AnnealSchedule) -> AnnealSchedule {
        if let Some(s) = self.sweeps {
            schedule.sweeps = s;
        }
        if let Some(r) = self.reads {
            schedule.reads = r;
        }
        match &mut schedule.kind {
            ScheduleKind::SimulatedAnnealing { t_hot, t_cold } => {
                if let Some(v) = self.t_hot {
                    *t_hot = v;
                }
                if let Some(v) = self.t_cold {
                    *t_cold = v;
                }
            }
            ScheduleKind::PathIntegral {
                trotter_slices,
                gamma_initial,
                temperature,
            } => {
                if let Some(v) = self.trotter_slices {
                    *trotter_slices = v;
                }
                if let Some(v) = self.gamma_initial {
                    *gamma_initial = v;
                }
                if let Some(v) = self.temperature {
                    *temperature = v;
                }
            }
        }
        schedule
    }
}

/// Parameter-learning settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnOptions {
    pub enabled: bool,
    pub budget: usize,
    pub optimizer: Optimizer,
    pub block_max: usize,
}

impl Default for LearnOptions {
    fn default() -> Self {
        Self {
            enabled: true,
            budget: 8,
            optimizer: Optimizer::CoordinateDescent,
            block_max: crate::learning::DEFAULT_BLOCK_MAX,
        }
    }
}

/// Everything train/classify/sweep need besides the dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub model: SimilarityModel,
    pub xi: usize,
    pub solver: SolverKind,
    pub schedule: ScheduleOptions,
    pub h_mode: HMode,
    pub learn: LearnOptions,
    /// Use the greedy path heuristic regardless of label count.
    pub heuristic_path: bool,
    /// Randomly eliminate couplings down to the xi budget after masking.
    pub prune: bool,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(model: SimilarityModel, xi: usize, seed: u64) -> Self {
        Self {
            model,
            xi,
            solver: SolverKind::Sa,
            schedule: ScheduleOptions::default(),
            h_mode: HMode::Clamp,
            learn: LearnOptions::default(),
            heuristic_path: false,
            prune: false,
            seed,
        }
    }
}

/// Shape and content digest of the dataset a model was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFingerprint {
    pub n: usize,
    pub l: usize,
    pub u: usize,
    pub d: usize,
    pub k: usize,
    pub hash: u64,
}

impl DataFingerprint {
    fn of(dataset: &Dataset) -> Self {
        Self {
            n: dataset.len(),
            l: dataset.num_labeled(),
            u: dataset.num_unlabeled(),
            d: dataset.dim,
            k: dataset.num_labels(),
            hash: dataset.fingerprint(),
        }
    }
}

/// A trained transductive model: codebook, fitted similarity parameters,
/// the coupling matrix over all points, and per-layer clamp assignments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub codebook: LabelCodebook,
    pub model: SimilarityModel,
    pub xi: usize,
    pub coupling: CouplingMatrix,
    /// clamp_plan[layer] lists (spin index, clamp value) for labeled spins.
    pub clamp_plan: Vec<Vec<(usize, i8)>>,
    pub schedule: AnnealSchedule,
    pub solver: SolverKind,
    pub h_mode: HMode,
    pub label_names: Vec<String>,
    pub fingerprint: DataFingerprint,
    pub fit_report: Option<FitReport>,
}

/// Runs the full training pass: barycenters, label path, codebook,
/// likelihood fit, similarity/mask/coupling over all points, clamp plan,
/// solver schedule.
pub fn train(dataset: &Dataset, config: &PipelineConfig) -> Result<TrainedModel> {
    dataset.validate()?;
    let k = dataset.num_labels();
    if k < 2 {
        return Err(Error::InvalidArgument(
            "classification needs at least two labels".into(),
        ));
    }
    if dataset.num_labeled() < k {
        return Err(Error::LabelCoverage(format!(
            "{} labeled points cannot cover {k} labels",
            dataset.num_labeled()
        )));
    }
    if dataset.label_counts().iter().any(|&c| c == 0) {
        return Err(Error::LabelCoverage("a label has no labeled points".into()));
    }

    let barycenters = compute_barycenters(dataset)?;
    let order = if config.heuristic_path {
        greedy_label_path(&barycenters, config.model.norm_order())?
    } else {
        shortest_label_path(&barycenters, config.model.norm_order())?
    };
    let codebook = build_codebook(&order)?;

    let (model, fit_report) = if config.learn.enabled && !config.model.params().is_empty() {
        let mut problem = LearningProblem::from_dataset(
            dataset,
            &codebook,
            config.model.clone(),
            config.xi,
            derive_seed(config.seed, 0xb1, 0),
        )?;
        problem.block_max = config.learn.block_max;
        let init = problem.initial_params();
        let options = FitOptions {
            budget: config.learn.budget,
            optimizer: config.learn.optimizer,
            ..FitOptions::default()
        };
        let report = fit(&problem, &init, &options)?;
        (config.model.with_params(&report.theta)?, Some(report))
    } else {
        (config.model.clone(), None)
    };

    let similarity = similarity_matrix(dataset, &model)?;
    let mask = knn_mask(&similarity, config.xi)?;
    let mut coupling_matrix = coupling(&similarity, &mask)?;
    if config.prune {
        let (pruned, _report) = prune_connectivity(
            &coupling_matrix,
            config.xi,
            dataset.num_labeled(),
            derive_seed(config.seed, 0xc2, 0),
        )?;
        coupling_matrix = pruned;
    }

    let clamp_plan: Vec<Vec<(usize, i8)>> = (0..codebook.alpha())
        .map(|layer| {
            dataset
                .labeled
                .iter()
                .enumerate()
                .map(|(i, (_, lab))| {
                    (i, codebook.code_bit(codebook.primary_code(*lab), layer))
                })
                .collect()
        })
        .collect();

    // Resolve the bias magnitude now so the stored model is self-contained.
    let template = LayerProblem::from_coupling_matrix(&coupling_matrix);
    let h_mode = match config.h_mode {
        HMode::Clamp => HMode::Clamp,
        HMode::Bias { magnitude } => HMode::Bias {
            magnitude: Some(magnitude.unwrap_or_else(|| default_bias_magnitude(&template))),
        },
    };

    // Schedule defaults measure the local field bound of a configured layer.
    let mut measured = template.clone();
    if let HMode::Bias { magnitude: Some(mag) } = h_mode {
        for &(i, v) in &clamp_plan[0] {
            measured.set_bias(i, mag * v as f64)?;
        }
    }
    let schedule_seed = derive_seed(config.seed, 0x5c, 0);
    let schedule = match config.solver {
        SolverKind::Sa | SolverKind::Exact => {
            config.schedule.apply(AnnealSchedule::default_sa(&measured, schedule_seed))
        }
        SolverKind::Pimc => config
            .schedule
            .apply(AnnealSchedule::default_path_integral(&measured, schedule_seed)),
    };
    schedule.validate()?;

    Ok(TrainedModel {
        codebook,
        model,
        xi: config.xi,
        coupling: coupling_matrix,
        clamp_plan,
        schedule,
        solver: config.solver,
        h_mode,
        label_names: dataset.label_names.clone(),
        fingerprint: DataFingerprint::of(dataset),
        fit_report,
    })
}

/// Classification result: predicted labels for the unlabeled points plus
/// the raw per-layer bits and solver diagnostics behind them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyOutcome {
    pub predictions: Vec<LabelId>,
    pub codes: Vec<u32>,
    /// layer_bits[layer][unlabeled index]
    pub layer_bits: Vec<Vec<i8>>,
    pub layer_diagnostics: Vec<SolverDiagnostics>,
}

fn exact_read_set(problem: &LayerProblem) -> Result<ReadSet> {
    let gs = exact_ground_state(problem)?;
    Ok(ReadSet {
        diagnostics: SolverDiagnostics {
            solver: "exact".into(),
            best_energy: gs.energy,
            mean_acceptance: 1.0,
        },
        reads: vec![gs],
    })
}

fn solve_layer(model: &TrainedModel, layer: usize) -> Result<(Vec<i8>, SolverDiagnostics)> {
    let mut problem = LayerProblem::from_coupling_matrix(&model.coupling);
    for &(i, v) in &model.clamp_plan[layer] {
        problem.set_clamp(i, v)?;
    }
    let mut schedule = model.schedule;
    schedule.seed = derive_seed(model.schedule.seed, layer as u64, 0x1a);

    let biased = match model.h_mode {
        HMode::Clamp => None,
        HMode::Bias { magnitude } => {
            let mag = magnitude.ok_or_else(|| {
                Error::InvalidArgument("bias mode without a resolved magnitude".into())
            })?;
            Some(bias_mode(&problem, mag)?)
        }
    };
    let solve_target = biased.as_ref().unwrap_or(&problem);

    let reads = match model.solver {
        SolverKind::Sa => simulated_anneal(solve_target, &schedule)?,
        SolverKind::Pimc => path_integral_anneal(solve_target, &schedule)?,
        SolverKind::Exact => exact_read_set(solve_target)?,
    };

    let readout = match model.h_mode {
        HMode::Clamp => majority_of(&reads.reads),
        HMode::Bias { .. } => {
            // Only reads whose labeled spins came back correct are accepted.
            let plan = &model.clamp_plan[layer];
            let accepted: Vec<SpinConfiguration> = reads
                .reads
                .iter()
                .filter(|r| plan.iter().all(|&(i, v)| r.spins[i] == v))
                .cloned()
                .collect();
            if accepted.is_empty() {
                return Err(Error::Solver(format!(
                    "no read of layer {layer} honored the labeled biases; increase the bias magnitude"
                )));
            }
            majority_of(&accepted)
        }
    };
    Ok((readout, reads.diagnostics))
}

/// Solves every layer, majority-votes the reads, assembles codes, and
/// decodes them through the codebook. Layers execute independently (and in
/// parallel) with per-layer derived seeds.
pub fn classify(model: &TrainedModel, dataset: &Dataset) -> Result<ClassifyOutcome> {
    if DataFingerprint::of(dataset) != model.fingerprint {
        return Err(Error::ModelMismatch(
            "model was trained on a different dataset or split".into(),
        ));
    }
    let l = dataset.num_labeled();
    let u = dataset.num_unlabeled();
    let alpha = model.codebook.alpha();

    let per_layer = map_indices(alpha, |layer| solve_layer(model, layer));
    let mut layer_bits = Vec::with_capacity(alpha);
    let mut layer_diagnostics = Vec::with_capacity(alpha);
    for result in per_layer {
        let (readout, diagnostics) = result?;
        layer_bits.push(readout[l..l + u].to_vec());
        layer_diagnostics.push(diagnostics);
    }

    let codes: Vec<u32> = (0..u)
        .map(|i| {
            let bits: Vec<i8> = (0..alpha).map(|a| layer_bits[a][i]).collect();
            model.codebook.code_from_bits(&bits)
        })
        .collect();
    let predictions = codes.iter().map(|&c| model.codebook.decode(c)).collect();

    Ok(ClassifyOutcome {
        predictions,
        codes,
        layer_bits,
        layer_diagnostics,
    })
}

/// Accuracy, confusion counts, optional per-layer bit error rates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy: f64,
    /// confusion[true][predicted]
    pub confusion: Vec<Vec<usize>>,
    pub per_layer_bit_errors: Vec<f64>,
    pub runtime_seconds: f64,
    pub seed: u64,
}

/// Scores predictions against the hidden truth. An empty prediction set is
/// vacuously perfect.
pub fn evaluate(
    predictions: &[LabelId],
    hidden_truth: &[LabelId],
    num_labels: usize,
) -> Result<EvaluationReport> {
    if predictions.len() != hidden_truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} truth entries",
            predictions.len(),
            hidden_truth.len()
        )));
    }
    let mut confusion = vec![vec![0usize; num_labels]; num_labels];
    let mut correct = 0usize;
    for (&p, &t) in predictions.iter().zip(hidden_truth) {
        if p >= num_labels || t >= num_labels {
            return Err(Error::LabelCoverage("label id out of range".into()));
        }
        confusion[t][p] += 1;
        if p == t {
            correct += 1;
        }
    }
    let accuracy = if predictions.is_empty() {
        1.0
    } else {
        correct as f64 / predictions.len() as f64
    };
    Ok(EvaluationReport {
        accuracy,
        confusion,
        per_layer_bit_errors: Vec::new(),
        runtime_seconds: 0.0,
        seed: 0,
    })
}

/// Per-layer bit error rates against the truth. A doubled label whose two
/// codes differ at a layer accepts either bit there.
pub fn layer_bit_errors(
    outcome: &ClassifyOutcome,
    codebook: &LabelCodebook,
    hidden_truth: &[LabelId],
) -> Vec<f64> {
    let u = hidden_truth.len();
    (0..codebook.alpha())
        .map(|layer| {
            if u == 0 {
                return 0.0;
            }
            let errors = (0..u)
                .filter(|&i| {
                    let predicted = outcome.layer_bits[layer][i];
                    !codebook
                        .codes(hidden_truth[i])
                        .iter()
                        .any(|&c| codebook.code_bit(c, layer) == predicted)
                })
                .count();
            errors as f64 / u as f64
        })
        .collect()
}

/// One split-train-classify-evaluate pass at the given unlabeled fraction.
/// Returns the split dataset, the model, the raw outcome, and the filled-in
/// evaluation report.
pub fn run_once(
    full: &Dataset,
    fraction: f64,
    config: &PipelineConfig,
    seed: u64,
) -> Result<(Dataset, TrainedModel, ClassifyOutcome, EvaluationReport)> {
    let started = Instant::now();
    let part = split(
        full,
        &SplitSpec {
            unlabeled_fraction: fraction,
            seed,
            stratified: true,
        },
    )?;
    let mut cell_config = config.clone();
    cell_config.seed = seed;
    let model = train(&part, &cell_config)?;
    let outcome = classify(&model, &part)?;
    let truth = part
        .hidden_truth
        .clone()
        .ok_or_else(|| Error::InvalidArgument("split lost its hidden truth".into()))?;
    let mut report = evaluate(&outcome.predictions, &truth, part.num_labels())?;
    report.per_layer_bit_errors = layer_bit_errors(&outcome, &model.codebook, &truth);
    report.runtime_seconds = started.elapsed().as_secs_f64();
    report.seed = seed;
    Ok((part, model, outcome, report))
}

/// One sweep cell: a fraction, a repeat index, its derived seed, and either
/// an evaluation report or the error that stopped it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub fraction: f64,
    pub repeat: usize,
    pub seed: u64,
    pub outcome: std::result::Result<EvaluationReport, String>,
}

/// Aggregated sweep row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub mean_accuracy: Option<f64>,
    pub std_dev: Option<f64>,
    pub succeeded: usize,
    pub failed: usize,
}

/// Full sweep output: aggregate rows plus every cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<CellResult>,
}

impl SweepTable {
    /// Aggregate CSV: `fraction,mean_accuracy,std,repeats`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fraction,mean_accuracy,std,repeats\n");
        for row in &self.rows {
            let mean = row
                .mean_accuracy
                .map(|m| format!("{m:.6}"))
                .unwrap_or_else(|| "failed".into());
            let std = row
                .std_dev
                .map(|s| format!("{s:.6}"))
                .unwrap_or_else(|| "failed".into());
            out.push_str(&format!(
                "{:.6},{},{},{}\n",
                row.fraction, mean, std, row.succeeded
            ));
        }
        out
    }

    /// Per-cell CSV: `fraction,repeat,seed,accuracy` with `failed` markers.
    pub fn cells_csv(&self) -> String {
        let mut out = String::from("fraction,repeat,seed,accuracy\n");
        for cell in &self.cells {
            let acc = match &cell.outcome {
                Ok(report) => format!("{:.6}", report.accuracy),
                Err(_) => "failed".into(),
            };
            out.push_str(&format!(
                "{:.6},{},{},{}\n",
                cell.fraction, cell.repeat, cell.seed, acc
            ));
        }
        out
    }
}

/// Sweeps unlabeled fractions with seeded repeats: every cell is a fresh
/// stratified split, trained and classified from scratch. Cell failures are
/// recorded and the sweep continues.
pub fn sweep(
    full: &Dataset,
    fractions: &[f64],
    repeats: usize,
    seed: u64,
    config: &PipelineConfig,
) -> Result<SweepTable> {
    if fractions.is_empty() {
        return Err(Error::InvalidArgument("no fractions to sweep".into()));
    }
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be >= 1".into()));
    }
    for &f in fractions {
        if !(0.0..1.0).contains(&f) {
            return Err(Error::InvalidArgument(format!(
                "fraction {f} outside [0, 1)"
            )));
        }
    }

    let cells: Vec<CellResult> = map_indices(fractions.len() * repeats, |ci| {
        let fi = ci / repeats;
        let repeat = ci % repeats;
        let cell_seed = derive_seed(seed, fi as u64, repeat as u64);
        let outcome = run_once(full, fractions[fi], config, cell_seed)
            .map(|(_, _, _, report)| report)
            .map_err(|e| e.to_string());
        CellResult {
            fraction: fractions[fi],
            repeat,
            seed: cell_seed,
            outcome,
        }
    });

    let rows = fractions
        .iter()
        .enumerate()
        .map(|(fi, &fraction)| {
            let accs: Vec<f64> = cells[fi * repeats..(fi + 1) * repeats]
                .iter()
                .filter_map(|c| c.outcome.as_ref().ok().map(|r| r.accuracy))
                .collect();
            let failed = repeats - accs.len();
            if accs.is_empty() {
                SweepRow {
                    fraction,
                    mean_accuracy: None,
                    std_dev: None,
                    succeeded: 0,
                    failed,
                }
            } else {
                let mean = accs.iter().sum::<f64>() / accs.len() as f64;
                let std = if accs.len() > 1 {
                    (accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
                        / (accs.len() - 1) as f64)
                        .sqrt()
                } else {
                    0.0
                };
                SweepRow {
                    fraction,
                    mean_accuracy: Some(mean),
                    std_dev: Some(std),
                    succeeded: accs.len(),
                    failed,
                }
            }
        })
        .collect();

    Ok(SweepTable { rows, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_blobs, DataPoint};
    use crate::par::with_thread_cap;

    fn two_blobs(seed: u64, per_center: usize, spread: f64) -> Dataset {
        let centers = [
            DataPoint::new(vec![0.0, 0.0]),
            DataPoint::new(vec![6.0, 0.5]),
        ];
        generate_blobs(&centers, per_center, spread, seed).unwrap()
    }

    fn blob_config(seed: u64) -> PipelineConfig {
        PipelineConfig::new(SimilarityModel::reciprocal(1.0, 1.0), 3, seed)
    }

    #[test]
    fn train_two_blob_minimal_pipeline() {
        let full = two_blobs(1, 10, 0.7);
        let part = split(
            &full,
            &SplitSpec {
                unlabeled_fraction: 0.5,
                seed: 2,
                stratified: true,
            },
        )
        .unwrap();
        let model = train(&part, &blob_config(3)).unwrap();
        assert_eq!(model.codebook.alpha(), 1);
        assert_eq!(model.clamp_plan.len(), 1);
        // Layer-0 clamps follow the labels' single-bit codes.
        for &(i, v) in &model.clamp_plan[0] {
            let lab = part.labeled[i].1;
            let expect = model
                .codebook
                .code_bit(model.codebook.primary_code(lab), 0);
            assert_eq!(v, expect);
        }
        assert!(model.fit_report.is_some());
    }

    #[test]
    fn classify_assigns_nearest_blob() {
        let full = two_blobs(7, 12, 0.6);
        let part = split(
            &full,
            &SplitSpec {
                unlabeled_fraction: 0.5,
                seed: 8,
                stratified: true,
            },
        )
        .unwrap();
        let mut config = blob_config(9);
        config.solver = SolverKind::Exact; // 12 free spins: exact is instant
        let model = train(&part, &config).unwrap();
        let outcome = classify(&model, &part).unwrap();
        let truth = part.hidden_truth.as_ref().unwrap();
        let report = evaluate(&outcome.predictions, truth, 2).unwrap();
        assert_eq!(report.accuracy, 1.0);
    }

    #[test]
    fn sa_matches_exact_on_small_problem() {
        let full = two_blobs(15, 10, 0.8);
        let part = split(
            &full,
            &SplitSpec {
                unlabeled_fraction: 0.4,
                seed: 4,
                stratified: true,
            },
        )
        .unwrap();
        let mut sa_config = blob_config(5);
        sa_config.solver = SolverKind::Sa;
        let mut exact_config = blob_config(5);
        exact_config.solver = SolverKind::Exact;
        let sa_model = train(&part, &sa_config).unwrap();
        let exact_model = train(&part, &exact_config).unwrap();
        let sa_out = classify(&sa_model, &part).unwrap();
        let exact_out = classify(&exact_model, &part).unwrap();
        assert_eq!(sa_out.predictions, exact_out.predictions);
    }

    #[test]
    fn duplicated_point_inherits_label() {
        // An unlabeled point sitting exactly on a labeled one.
        let ds = two_blobs(3, 4, 0.5);
        let anchor = ds.labeled[0].0.clone();
        let anchor_label = ds.labeled[0].1;
        let mut part = ds.clone();
        part.unlabeled.push(anchor);
        part.hidden_truth = Some(vec![anchor_label]);
        let mut config = blob_config(6);
        config.solver = SolverKind::Exact;
        let model = train(&part, &config).unwrap();
        let outcome = classify(&model, &part).unwrap();
        assert_eq!(outcome.predictions, vec![anchor_label]);
    }

    #[test]
    fn pimc_classifies_separated_blobs() {
        let full = two_blobs(43, 8, 0.5);
        let part = split(
            &full,
            &SplitSpec {
                unlabeled_fraction: 0.4,
                seed: 3,
                stratified: true,
            },
        )
        .unwrap();
        let mut config = blob_config(6);
        config.solver = SolverKind::Pimc;
        let model = train(&part, &config).unwrap();
        assert!(matches!(
            model.schedule.kind,
            crate::annealer::ScheduleKind::PathIntegral { .. }
        ));
        let outcome = classify(&model, &part).unwrap();
        let truth = part.hidden_truth.as_ref().unwrap();
        let report = evaluate(&outcome.predictions, truth, 2).unwrap();
        assert!(report.accuracy >= 0.9, "accuracy {}", report.accuracy);
    }

    #[test]
    fn evaluate_counts() {
        let report = evaluate(&[0, 1, 1, 0], &[0, 1, 0, 1], 2).unwrap();
        assert!((report.accuracy - 0.5).abs() < 1e-12);
        assert_eq!(report.confusion[0][0], 1);
        assert_eq!(report.confusion[0][1], 1);
        assert_eq!(report.confusion[1][0], 1);
        assert_eq!(report.confusion[1][1], 1);
        let perfect = evaluate(&[0, 1], &[0, 1], 2).unwrap();
        assert_eq!(perfect.accuracy, 1.0);
    }

    #[test]
    fn evaluate_rejects_mismatched_lengths() {
        assert!(evaluate(&[0], &[0, 1], 2).is_err());
    }

    #[test]
    fn sweep_deterministic_across_thread_counts() {
        let full = two_blobs(19, 8, 0.7);
        let config = blob_config(0);
        let a = sweep(&full, &[0.3, 0.6], 2, 77, &config).unwrap();
        let b = with_thread_cap(1, || sweep(&full, &[0.3, 0.6], 2, 77, &config).unwrap());
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.cells_csv(), b.cells_csv());
        assert_eq!(a.to_csv().lines().count(), 3);
    }

    #[test]
    fn sweep_degenerate_single_cell() {
        let full = two_blobs(23, 8, 0.7);
        let table = sweep(&full, &[0.5], 1, 1, &blob_config(0)).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].succeeded, 1);
        assert_eq!(table.rows[0].std_dev, Some(0.0));
    }

    #[test]
    fn sweep_records_cell_failures() {
        // Fraction high enough that the tiny label cannot be preserved.
        let centers = [
            DataPoint::new(vec![0.0, 0.0]),
            DataPoint::new(vec![5.0, 0.0]),
        ];
        let mut full = generate_blobs(&centers, 2, 0.4, 3).unwrap();
        // Shrink label 1 to a single point: fraction 0.8 of 3 points = 2
        // removed, caps make it infeasible.
        full.labeled.remove(3);
        let table = sweep(&full, &[0.8], 2, 5, &blob_config(0)).unwrap();
        assert_eq!(table.rows[0].succeeded, 0);
        assert_eq!(table.rows[0].failed, 2);
        assert!(table.to_csv().contains("failed"));
    }

    #[test]
    fn classify_rejects_foreign_dataset() {
        let full = two_blobs(1, 6, 0.5);
        let part = split(
            &full,
            &SplitSpec {
                unlabeled_fraction: 0.4,
                seed: 2,
                stratified: true,
            },
        )
        .unwrap();
        let model = train(&part, &blob_config(3)).unwrap();
        let other = two_blobs(2, 6, 0.5);
        let other_part = split(
            &other,
            &SplitSpec {
                unlabeled_fraction: 0.4,
                seed: 2,
                stratified: true,
            },
        )
        .unwrap();
        assert!(matches!(
            classify(&model, &other_part),
            Err(Error::ModelMismatch(_))
        ));
    }

    #[test]
    fn bias_mode_keeps_labeled_bits() {
        let full = two_blobs(29, 8, 0.6);
        let part = split(
            &full,
            &SplitSpec {
                unlabeled_fraction: 0.5,
                seed: 13,
                stratified: true,
            },
        )
        .unwrap();
        let mut config = blob_config(31);
        config.h_mode = HMode::Bias { magnitude: None };
        let model = train(&part, &config).unwrap();
        let HMode::Bias { magnitude: Some(mag) } = model.h_mode else {
            panic!("magnitude must be resolved at train time");
        };
        assert!(mag > 0.0);
        let outcome = classify(&model, &part).unwrap();
        let truth = part.hidden_truth.as_ref().unwrap();
        let report = evaluate(&outcome.predictions, truth, 2).unwrap();
        // The blobs are well separated; bias mode should match clamping.
        assert!(report.accuracy >= 0.9, "accuracy {}", report.accuracy);
    }

    #[test]
    fn layer_order_is_irrelevant() {
        // Three labels -> two layers; solving layers in any order yields
        // the same predictions because each layer is seeded independently.
        let centers = [
            DataPoint::new(vec![0.0, 0.0]),
            DataPoint::new(vec![5.0, 0.0]),
            DataPoint::new(vec![0.0, 5.0]),
        ];
        let full = generate_blobs(&centers, 8, 0.6, 37).unwrap();
        let part = split(
            &full,
            &SplitSpec {
                unlabeled_fraction: 0.4,
                seed: 5,
                stratified: true,
            },
        )
        .unwrap();
        let model = train(&part, &blob_config(41)).unwrap();
        let seq = with_thread_cap(1, || classify(&model, &part).unwrap());
        let par = classify(&model, &part).unwrap();
        assert_eq!(seq.predictions, par.predictions);
        assert_eq!(seq.layer_bits, par.layer_bits);
    }
}
