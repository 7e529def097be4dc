//! `ising-ssl`: train, classify, evaluate, and sweep semi-supervised
//! classification runs, plus a solver-vs-exact verification suite.
//!
//! Every command is reproducible from its config and seed alone; the
//! effective config is echoed into the output directory next to the
//! artifacts. `ISING_SSL_THREADS` caps worker threads (0 or unset: all
//! cores).

mod config;
mod svg;

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use ising_ssl::dataset::{load_csv, pca_project_with, split, Dataset, PcaOptions, SplitSpec};
use ising_ssl::oracle::solver_vs_exact;
use ising_ssl::par::{derive_seed, init_global_thread_cap};
use ising_ssl::pipeline::{
    classify, evaluate, layer_bit_errors, run_once, sweep, train, SolverKind, TrainedModel,
};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "ising-ssl",
    version,
    about = "Semi-supervised classification by layered Ising ground states"
)]
struct Cli {
    /// Run configuration file (flat key=value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; overrides the config's `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Solver override: sa, exact, or pimc.
    #[arg(long, global = true)]
    solver: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on the configured dataset and write model.json.
    Train,
    /// Classify the unlabeled points of the configured dataset.
    Classify {
        /// Trained model document from `train`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Score a predictions CSV against the dataset's hidden truth.
    Evaluate {
        /// Predictions CSV from `classify`.
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Repeated splits over unlabeled fractions; writes CSV and SVG plots.
    Sweep {
        /// Comma-separated unlabeled fractions, e.g. 0.3,0.5,0.8.
        #[arg(long, value_delimiter = ',', required = true)]
        fractions: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Run annealing solvers against the exact ground-state oracle.
    OracleCheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        /// Free (unclamped) spins per instance.
        #[arg(long, default_value_t = 16)]
        free_spins: usize,
    },
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("ISING_SSL_THREADS") {
        let threads: usize = threads
            .parse()
            .map_err(|_| anyhow!("ISING_SSL_THREADS must be an integer"))?;
        init_global_thread_cap(threads);
    }

    let solver_override = cli
        .solver
        .as_deref()
        .map(str::parse::<SolverKind>)
        .transpose()?;
    match &cli.command {
        Command::Train => cmd_train(&load_config(&cli)?),
        Command::Classify { model } => {
            cmd_classify(&load_config(&cli)?, model, solver_override)
        }
        Command::Evaluate { predictions } => cmd_evaluate(&load_config(&cli)?, predictions),
        Command::Sweep { fractions, repeats } => {
            cmd_sweep(&load_config(&cli)?, fractions, *repeats)
        }
        Command::OracleCheck {
            instances,
            free_spins,
        } => cmd_oracle_check(&cli, *instances, *free_spins),
    }
}

/// Reads the config file and applies command-line overrides.
fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("this command requires --config"))?;
    let mut config = RunConfig::from_file(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(solver) = &cli.solver {
        config.solver = solver.parse::<SolverKind>()?;
    }
    Ok(config)
}

/// Writes through a temp file then renames, so readers never see partial
/// artifacts.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn echo_config(config: &RunConfig) -> Result<()> {
    write_atomic(
        &config.output_dir.join("config.txt"),
        config.to_flat_string().as_bytes(),
    )
}

/// Loads, optionally projects, and (when `apply_split`) splits the
/// configured dataset. The split is seeded by the master seed, so `train`
/// and `classify` reconstruct the identical partition. `sweep` draws its
/// own splits and loads with `apply_split = false`.
fn load_dataset(config: &RunConfig, apply_split: bool) -> Result<Dataset> {
    if !config.data_path.exists() {
        bail!("data file {} does not exist", config.data_path.display());
    }
    let mut ds = load_csv(&config.data_path, config.data_has_labels)?;
    if let Some(dims) = config.pca_dims {
        ds = pca_project_with(
            &ds,
            PcaOptions {
                target_dim: dims,
                whiten: config.whiten,
            },
        )?;
    }
    if apply_split && config.split_fraction > 0.0 {
        if ds.num_unlabeled() != 0 {
            bail!("split.fraction applies only to fully labeled datasets");
        }
        ds = split(
            &ds,
            &SplitSpec {
                unlabeled_fraction: config.split_fraction,
                seed: config.seed,
                stratified: config.split_stratified,
            },
        )?;
    }
    Ok(ds)
}

fn cmd_train(config: &RunConfig) -> Result<()> {
    let dataset = load_dataset(config, true)?;
    let model = config.build_model(&dataset)?;
    let trained = train(&dataset, &config.pipeline_config(model))?;

    echo_config(config)?;
    write_atomic(
        &config.output_dir.join("model.json"),
        serde_json::to_string_pretty(&trained)?.as_bytes(),
    )?;
    write_atomic(
        &config.output_dir.join("codebook.json"),
        serde_json::to_string_pretty(&trained.codebook)?.as_bytes(),
    )?;
    if let Some(report) = &trained.fit_report {
        write_atomic(
            &config.output_dir.join("fit_report.json"),
            serde_json::to_string_pretty(report)?.as_bytes(),
        )?;
    }
    if config.dump_matrices {
        write_atomic(
            &config.output_dir.join("coupling.csv"),
            trained.coupling.as_matrix().to_csv().as_bytes(),
        )?;
    }
    eprintln!(
        "trained: {} labels over {} points, alpha={}, model written to {}",
        trained.label_names.len(),
        trained.fingerprint.n,
        trained.codebook.alpha(),
        config.output_dir.join("model.json").display()
    );
    Ok(())
}

fn read_model(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read model {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Re-targets a stored model at a different solver. When the solver family
/// changes, the stored schedule no longer fits and a default of the right
/// kind is derived from the model's couplings (same seed).
fn apply_solver_override(model: &mut TrainedModel, kind: SolverKind) {
    use ising_ssl::annealer::{AnnealSchedule, LayerProblem, ScheduleKind};
    model.solver = kind;
    let fits = matches!(
        (kind, model.schedule.kind),
        (SolverKind::Sa | SolverKind::Exact, ScheduleKind::SimulatedAnnealing { .. })
            | (SolverKind::Pimc, ScheduleKind::PathIntegral { .. })
    );
    if !fits {
        let template = LayerProblem::from_coupling_matrix(&model.coupling);
        model.schedule = match kind {
            SolverKind::Sa | SolverKind::Exact => {
                AnnealSchedule::default_sa(&template, model.schedule.seed)
            }
            SolverKind::Pimc => {
                AnnealSchedule::default_path_integral(&template, model.schedule.seed)
            }
        };
    }
}

fn cmd_classify(
    config: &RunConfig,
    model_path: &Path,
    solver_override: Option<SolverKind>,
) -> Result<()> {
    let dataset = load_dataset(config, true)?;
    let mut model = read_model(model_path)?;
    if let Some(kind) = solver_override {
        apply_solver_override(&mut model, kind);
    }
    let outcome = classify(&model, &dataset)?;
    if dataset.num_unlabeled() == 0 {
        eprintln!("warning: dataset has no unlabeled points; predictions are empty");
    }
    for (layer, diag) in outcome.layer_diagnostics.iter().enumerate() {
        eprintln!(
            "layer {layer}: solver {} best energy {:.6} mean acceptance {:.3}",
            diag.solver, diag.best_energy, diag.mean_acceptance
        );
    }

    let mut csv = String::new();
    let truth = dataset.hidden_truth.as_ref();
    if truth.is_some() {
        csv.push_str("index,predicted_label,true_label,correct\n");
    } else {
        csv.push_str("index,predicted_label\n");
    }
    for (i, &pred) in outcome.predictions.iter().enumerate() {
        match truth {
            Some(t) => {
                let correct = (pred == t[i]) as u8;
                csv.push_str(&format!(
                    "{i},{},{},{correct}\n",
                    dataset.label_names[pred], dataset.label_names[t[i]]
                ));
            }
            None => csv.push_str(&format!("{i},{}\n", dataset.label_names[pred])),
        }
    }
    if let Some(t) = truth {
        let report = evaluate(&outcome.predictions, t, dataset.num_labels())?;
        csv.push_str(&format!("# accuracy,{:.6}\n", report.accuracy));
        let bit_errors = layer_bit_errors(&outcome, &model.codebook, t);
        eprintln!(
            "accuracy {:.4}, per-layer bit error rates {:?}",
            report.accuracy, bit_errors
        );
    }

    echo_config(config)?;
    write_atomic(&config.output_dir.join("predictions.csv"), csv.as_bytes())?;
    eprintln!(
        "predictions written to {}",
        config.output_dir.join("predictions.csv").display()
    );
    Ok(())
}

fn cmd_evaluate(config: &RunConfig, predictions_path: &Path) -> Result<()> {
    let dataset = load_dataset(config, true)?;
    let truth = dataset
        .hidden_truth
        .as_ref()
        .ok_or_else(|| anyhow!("dataset has no hidden truth to evaluate against"))?;

    let text = std::fs::read_to_string(predictions_path)
        .with_context(|| format!("cannot read predictions {}", predictions_path.display()))?;
    let mut predictions = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            bail!("predictions line {}: expected index,label", lineno + 1);
        }
        let name = fields[1].trim();
        let id = dataset
            .label_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| anyhow!("unknown label {name:?} on line {}", lineno + 1))?;
        predictions.push(id);
    }

    let report = evaluate(&predictions, truth, dataset.num_labels())?;
    let doc = serde_json::json!({
        "accuracy": report.accuracy,
        "confusion": report.confusion,
        "label_names": dataset.label_names,
        "evaluated": predictions.len(),
    });
    echo_config(config)?;
    write_atomic(
        &config.output_dir.join("evaluation.json"),
        serde_json::to_string_pretty(&doc)?.as_bytes(),
    )?;
    println!("accuracy {:.6} over {} predictions", report.accuracy, predictions.len());
    Ok(())
}

fn cmd_sweep(config: &RunConfig, fractions: &[f64], repeats: usize) -> Result<()> {
    if fractions.is_empty() {
        bail!("sweep needs at least one fraction");
    }
    let dataset = load_dataset(config, false)?;
    if dataset.num_unlabeled() != 0 {
        bail!("sweep draws its own splits; supply a fully labeled dataset");
    }
    let model = config.build_model(&dataset)?;
    let pipeline_config = config.pipeline_config(model);
    let table = sweep(&dataset, fractions, repeats, config.seed, &pipeline_config)?;

    echo_config(config)?;
    write_atomic(
        &config.output_dir.join("sweep.csv"),
        table.to_csv().as_bytes(),
    )?;
    write_atomic(
        &config.output_dir.join("sweep_cells.csv"),
        table.cells_csv().as_bytes(),
    )?;

    // One figure per fraction: replay the first repeat's cell (identical
    // seed derivation, hence identical results to the sweep's own cell).
    for (fi, &fraction) in fractions.iter().enumerate() {
        let cell_seed = derive_seed(config.seed, fi as u64, 0);
        match run_once(&dataset, fraction, &pipeline_config, cell_seed) {
            Ok((part, _model, outcome, report)) => {
                let title = format!(
                    "unlabeled {:.0}% accuracy {:.2}%",
                    fraction * 100.0,
                    report.accuracy * 100.0
                );
                let figure = svg::scatter(&part, &outcome, &title);
                write_atomic(
                    &config
                        .output_dir
                        .join(format!("scatter_{:03}.svg", (fraction * 100.0).round() as u32)),
                    figure.as_bytes(),
                )?;
            }
            Err(e) => eprintln!("figure for fraction {fraction} skipped: {e}"),
        }
    }

    print!("{}", table.to_csv());
    eprintln!(
        "sweep artifacts written under {}",
        config.output_dir.display()
    );
    Ok(())
}

fn cmd_oracle_check(cli: &Cli, instances: usize, free_spins: usize) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let solvers: Vec<SolverKind> = match cli.solver.as_deref() {
        None | Some("sa") => vec![SolverKind::Sa],
        Some("pimc") => vec![SolverKind::Pimc],
        Some("both") => vec![SolverKind::Sa, SolverKind::Pimc],
        Some(other) => bail!("oracle-check solver must be sa, pimc, or both, got {other:?}"),
    };
    // Two labeled points per side; the rest free.
    let labeled_per_side = 2;
    let per_side = labeled_per_side + free_spins.div_ceil(2);
    let report = solver_vs_exact(&solvers, instances, per_side, labeled_per_side, 4, seed)?;
    print!("{}", report.to_csv());
    if let Some(out) = &cli.out {
        write_atomic(&out.join("oracle_check.csv"), report.to_csv().as_bytes())?;
    }
    if let Some(rate) = report.rate_of("sa") {
        if rate < 0.95 {
            bail!("sa matched the exact oracle on only {:.1}% of instances", rate * 100.0);
        }
    }
    Ok(())
}
