//! Solver verification against exhaustive enumeration.
//!
//! Instances mimic the problems the pipeline actually produces: two -blob
//! point clouds, reciprocal-distance similarities masked to the nearest
//! neighbors, labeled points clamped to opposite spins. Small enough that
//! the exact ground state is instant, realistic enough that a lazy solver
//! fails.

use serde::{Deserialize, Serialize};

use crate::annealer::{
    bias_mode, default_bias_magnitude, exact_ground_state, path_integral_anneal, simulated_anneal,
    AnnealSchedule, LayerProblem,
};
use crate::dataset::{generate_blobs, DataPoint};
use crate::error::{Error, Result};
use crate::par::{derive_seed, map_indices};
use crate::pipeline::SolverKind;
use crate::similarity::{coupling, knn_mask, similarity_matrix, SimilarityModel};

/// A generated test problem and its shape.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub problem: LayerProblem,
    pub spins: usize,
    pub free_spins: usize,
}

/// Builds one seeded instance: `2 * per_side` points in two Gaussian blobs,
/// reciprocal-distance couplings masked to `xi` neighbors, and the first
/// `labeled_per_side` points of each blob clamped to -1 / +1.
pub fn ssl_instance(
    seed: u64,
    per_side: usize,
    labeled_per_side: usize,
    xi: usize,
) -> Result<OracleInstance> {
    if labeled_per_side == 0 || labeled_per_side > per_side {
        return Err(Error::InvalidArgument(
            "labeled_per_side must be in 1..=per_side".into(),
        ));
    }
    let centers = [
        DataPoint::new(vec![0.0, 0.0]),
        DataPoint::new(vec![3.0, 0.6]),
    ];
    let ds = generate_blobs(&centers, per_side, 1.1, seed)?;
    let model = SimilarityModel::reciprocal(1.0, 0.5);
    let s = similarity_matrix(&ds, &model)?;
    let mask = knn_mask(&s, xi.min(ds.len() - 1))?;
    let j = coupling(&s, &mask)?;

    let mut problem = LayerProblem::from_coupling_matrix(&j);
    for side in 0..2 {
        let value: i8 = if side == 0 { -1 } else { 1 };
        for k in 0..labeled_per_side {
            problem.set_clamp(side * per_side + k, value)?;
        }
    }
    let spins = ds.len();
    let free_spins = spins - 2 * labeled_per_side;
    Ok(OracleInstance {
        problem,
        spins,
        free_spins,
    })
}

/// Success counts of one solver against the exact ground state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleRow {
    pub solver: String,
    pub instances: usize,
    pub matches: usize,
    pub rate: f64,
}

/// The whole suite's rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleSuiteReport {
    pub rows: Vec<OracleRow>,
}

impl OracleSuiteReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("solver,instances,matches,rate\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.4}\n",
                row.solver, row.instances, row.matches, row.rate
            ));
        }
        out
    }

    pub fn rate_of(&self, solver: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.solver == solver).map(|r| r.rate)
    }
}

fn solver_name(kind: SolverKind) -> &'static str {
    match kind {
        SolverKind::Sa => "sa",
        SolverKind::Exact => "exact",
        SolverKind::Pimc => "pimc",
    }
}

/// Runs `instances` seeded problems; a solver scores a match when its best
/// read reaches the exact ground-state energy. Instances run in parallel,
/// each fully determined by its derived seed.
pub fn solver_vs_exact(
    solvers: &[SolverKind],
    instances: usize,
    per_side: usize,
    labeled_per_side: usize,
    xi: usize,
    base_seed: u64,
) -> Result<OracleSuiteReport> {
    if instances == 0 {
        return Err(Error::InvalidArgument("need at least one instance".into()));
    }
    let matches: Vec<Result<Vec<bool>>> = map_indices(instances, |i| {
        let seed = derive_seed(base_seed, i as u64, 0x0a);
        let instance = ssl_instance(seed, per_side, labeled_per_side, xi)?;
        let ground = exact_ground_state(&instance.problem)?;
        let tol = 1e-9 * (1.0 + ground.energy.abs());
        solvers
            .iter()
            .map(|&kind| {
                let best = match kind {
                    SolverKind::Exact => exact_ground_state(&instance.problem)?.energy,
                    SolverKind::Sa => {
                        let schedule = AnnealSchedule::default_sa(&instance.problem, seed);
                        simulated_anneal(&instance.problem, &schedule)?
                            .diagnostics
                            .best_energy
                    }
                    SolverKind::Pimc => {
                        let schedule =
                            AnnealSchedule::default_path_integral(&instance.problem, seed);
                        path_integral_anneal(&instance.problem, &schedule)?
                            .diagnostics
                            .best_energy
                    }
                };
                Ok(best <= ground.energy + tol)
            })
            .collect()
    });

    let mut counts = vec![0usize; solvers.len()];
    for per_instance in matches {
        for (count, hit) in counts.iter_mut().zip(per_instance?) {
            if hit {
                *count += 1;
            }
        }
    }
    Ok(OracleSuiteReport {
        rows: solvers
            .iter()
            .zip(counts)
            .map(|(&kind, matches)| OracleRow {
                solver: solver_name(kind).to_string(),
                instances,
                matches,
                rate: matches as f64 / instances as f64,
            })
            .collect(),
    })
}

/// For `instances` seeded problems, checks that the exact ground state
/// under default-magnitude biases agrees with the clamped ground state on
/// every spin. Returns (agreements, instances).
pub fn clamp_vs_bias_agreement(
    instances: usize,
    per_side: usize,
    labeled_per_side: usize,
    xi: usize,
    base_seed: u64,
) -> Result<(usize, usize)> {
    let agreements: Vec<Result<bool>> = map_indices(instances, |i| {
        let seed = derive_seed(base_seed, i as u64, 0x0b);
        let instance = ssl_instance(seed, per_side, labeled_per_side, xi)?;
        let clamped = exact_ground_state(&instance.problem)?;
        let h_mag = default_bias_magnitude(&instance.problem);
        let freed = bias_mode(&instance.problem, h_mag)?;
        let biased = exact_ground_state(&freed)?;
        Ok(clamped.spins == biased.spins)
    });
    let mut agree = 0usize;
    for a in agreements {
        if a? {
            agree += 1;
        }
    }
    Ok((agree, instances))
}
