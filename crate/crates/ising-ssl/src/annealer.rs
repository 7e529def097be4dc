//! Per-layer Ising problems and their solvers.
//!
//! A layer holds symmetric couplings J_ij, optional biases h_i, and hard
//! clamps for labeled spins. Energy is
//!
//!   E(s) = - sum_i h_i s_i - sum_{i<j} J_ij s_i s_j
//!
//! with each unordered pair counted once. Solvers: exhaustive enumeration
//! (the verification oracle, Gray-ordered so each step flips one spin),
//! Metropolis simulated annealing with restarts, and an optional
//! path-integral Monte Carlo emulation of transverse-field annealing.
//! Every read derives its own seed from the schedule seed, so a read set
//! is identical whether reads run serially or in parallel.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::map_indices;
use crate::similarity::CouplingMatrix;

/// Exhaustive search is 2^n; beyond this many free spins we refuse.
pub const MAX_EXACT_FREE_SPINS: usize = 24;

/// One Ising layer: couplings, biases, clamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemRepr", into = "ProblemRepr")]
pub struct LayerProblem {
    n: usize,
    couplings: BTreeMap<(usize, usize), f64>,
    neighbors: Vec<Vec<(usize, f64)>>,
    biases: Vec<f64>,
    clamps: Vec<Option<i8>>,
}

impl LayerProblem {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            couplings: BTreeMap::new(),
            neighbors: vec![Vec::new(); n],
            biases: vec![0.0; n],
            clamps: vec![None; n],
        }
    }

    /// Builds a problem with the couplings of a masked similarity matrix.
    pub fn from_coupling_matrix(j: &CouplingMatrix) -> Self {
        let n = j.n();
        let mut p = Self::new(n);
        for (a, b, v) in j.nonzero_pairs() {
            p.couplings.insert((a, b), v);
        }
        p.rebuild_neighbors();
        p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let key = (i.min(j), i.max(j));
        self.couplings.get(&key).copied().unwrap_or(0.0)
    }

    pub fn bias(&self, i: usize) -> f64 {
        self.biases[i]
    }

    pub fn clamp(&self, i: usize) -> Option<i8> {
        self.clamps[i]
    }

    pub fn set_coupling(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        if i == j || i >= self.n || j >= self.n {
            return Err(Error::InvalidArgument(format!(
                "coupling ({i},{j}) out of range for n={}",
                self.n
            )));
        }
        if !v.is_finite() {
            return Err(Error::InvalidArgument("coupling must be finite".into()));
        }
        let key = (i.min(j), i.max(j));
        if v == 0.0 {
            self.couplings.remove(&key);
        } else {
            self.couplings.insert(key, v);
        }
        self.rebuild_neighbors();
        Ok(())
    }

    pub fn set_bias(&mut self, i: usize, h: f64) -> Result<()> {
        if i >= self.n {
            return Err(Error::InvalidArgument(format!("spin {i} out of range")));
        }
        if self.clamps[i].is_some() && h != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "spin {i} is clamped; clamps and biases are exclusive"
            )));
        }
        self.biases[i] = h;
        Ok(())
    }

    pub fn set_clamp(&mut self, i: usize, value: i8) -> Result<()> {
        if i >= self.n {
            return Err(Error::InvalidArgument(format!("spin {i} out of range")));
        }
        if value != 1 && value != -1 {
            return Err(Error::InvalidArgument("clamp must be +1 or -1".into()));
        }
        if self.biases[i] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "spin {i} is biased; clamps and biases are exclusive"
            )));
        }
        self.clamps[i] = Some(value);
        Ok(())
    }

    fn rebuild_neighbors(&mut self) {
        for adj in &mut self.neighbors {
            adj.clear();
        }
        for (&(a, b), &v) in &self.couplings {
            self.neighbors[a].push((b, v));
            self.neighbors[b].push((a, v));
        }
    }

    /// Indices without a clamp.
    pub fn free_spins(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.clamps[i].is_none()).collect()
    }

    /// max_i (sum_j |J_ij| + |h_i|): an upper bound on any local field, the
    /// default hot temperature.
    pub fn local_field_bound(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                self.neighbors[i].iter().map(|(_, v)| v.abs()).sum::<f64>() + self.biases[i].abs()
            })
            .fold(0.0, f64::max)
    }

    /// max_i sum_j |J_ij| over couplings alone.
    pub fn max_abs_coupling_row_sum(&self) -> f64 {
        (0..self.n)
            .map(|i| self.neighbors[i].iter().map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Energy without validity checks; callers guarantee spins are +/-1 of
    /// the right length.
    fn raw_energy(&self, spins: &[i8]) -> f64 {
        let mut e = 0.0;
        for i in 0..self.n {
            e -= self.biases[i] * spins[i] as f64;
        }
        for (&(a, b), &v) in &self.couplings {
            e -= v * (spins[a] as f64) * (spins[b] as f64);
        }
        e
    }

    fn check_spins(&self, spins: &[i8]) -> Result<()> {
        if spins.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "{} spins for a problem of {}",
                spins.len(),
                self.n
            )));
        }
        if spins.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument("spins must be +/-1".into()));
        }
        for (i, c) in self.clamps.iter().enumerate() {
            if let Some(v) = c {
                if spins[i] != *v {
                    return Err(Error::ClampViolation { spin: i });
                }
            }
        }
        Ok(())
    }
}

/// Spin values plus their energy under the originating problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinConfiguration {
    pub spins: Vec<i8>,
    pub energy: f64,
}

/// The two solver families and their knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    SimulatedAnnealing {
        t_hot: f64,
        t_cold: f64,
    },
    PathIntegral {
        trotter_slices: usize,
        gamma_initial: f64,
        temperature: f64,
    },
}

/// A full annealing schedule: solver kind, sweep count, read count, seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub kind: ScheduleKind,
    pub sweeps: usize,
    pub reads: usize,
    pub seed: u64,
}

impl AnnealSchedule {
    /// Default simulated-annealing schedule for a problem: hot at the local
    /// field bound, cold three decades down, 2000 sweeps, 32 reads.
    pub fn default_sa(problem: &LayerProblem, seed: u64) -> Self {
        let bound = problem.local_field_bound().max(1.0);
        AnnealSchedule {
            kind: ScheduleKind::SimulatedAnnealing {
                t_hot: bound,
                t_cold: 1e-3 * bound,
            },
            sweeps: 2000,
            reads: 32,
            seed,
        }
    }

    /// Default path-integral schedule: 16 replicas, transverse field from
    /// the local field bound down to zero, low fixed temperature.
    pub fn default_path_integral(problem: &LayerProblem, seed: u64) -> Self {
        let bound = problem.local_field_bound().max(1.0);
        AnnealSchedule {
            kind: ScheduleKind::PathIntegral {
                trotter_slices: 16,
                gamma_initial: bound,
                temperature: 0.05 * bound,
            },
            sweeps: 2000,
            reads: 32,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::InvalidArgument("sweeps must be >= 1".into()));
        }
        if self.reads == 0 {
            return Err(Error::InvalidArgument("reads must be >= 1".into()));
        }
        match self.kind {
            ScheduleKind::SimulatedAnnealing { t_hot, t_cold } => {
                if !(t_hot > t_cold && t_cold > 0.0) {
                    return Err(Error::InvalidArgument(
                        "need t_hot > t_cold > 0".into(),
                    ));
                }
            }
            ScheduleKind::PathIntegral {
                trotter_slices,
                gamma_initial,
                temperature,
            } => {
                if trotter_slices < 2 {
                    return Err(Error::InvalidArgument("need >= 2 Trotter slices".into()));
                }
                if !(gamma_initial > 0.0) || !(temperature > 0.0) {
                    return Err(Error::InvalidArgument(
                        "transverse field and temperature must be positive".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Solver run statistics for the diagnostics channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub solver: String,
    pub best_energy: f64,
    pub mean_acceptance: f64,
}

/// The configurations read back from repeated solver runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadSet {
    pub reads: Vec<SpinConfiguration>,
    pub diagnostics: SolverDiagnostics,
}

impl ReadSet {
    pub fn best(&self) -> &SpinConfiguration {
        self.reads
            .iter()
            .min_by(|a, b| a.energy.partial_cmp(&b.energy).unwrap())
            .expect("read set is never empty")
    }
}

/// Energy of a configuration, validating length, values, and clamps.
pub fn energy(problem: &LayerProblem, spins: &[i8]) -> Result<f64> {
    problem.check_spins(spins)?;
    Ok(problem.raw_energy(spins))
}

fn lex_less(a: &[i8], b: &[i8]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return x < y;
        }
    }
    false
}

/// Exhaustive minimum over all assignments of the free spins (clamps
/// fixed). Ties resolve to the lexicographically smallest spin vector with
/// -1 ordered before +1.
pub fn exact_ground_state(problem: &LayerProblem) -> Result<SpinConfiguration> {
    let free = problem.free_spins();
    let nf = free.len();
    if nf > MAX_EXACT_FREE_SPINS {
        return Err(Error::TooManyFreeSpins {
            got: nf,
            limit: MAX_EXACT_FREE_SPINS,
        });
    }

    let mut spins: Vec<i8> = (0..problem.n)
        .map(|i| problem.clamps[i].unwrap_or(-1))
        .collect();
    let mut chain_energy = problem.raw_energy(&spins);
    let mut best = SpinConfiguration {
        spins: spins.clone(),
        energy: chain_energy,
    };

    // Gray-code walk: step g flips exactly one free spin, so the energy
    // update is a local-field delta. Candidates are re-evaluated from
    // scratch before they can become the incumbent.
    for g in 1u64..(1u64 << nf) {
        let i = free[g.trailing_zeros() as usize];
        let mut local = problem.biases[i];
        for &(j, v) in &problem.neighbors[i] {
            local += v * spins[j] as f64;
        }
        chain_energy += 2.0 * spins[i] as f64 * local;
        spins[i] = -spins[i];

        let tol = 1e-9 * (1.0 + best.energy.abs());
        if chain_energy <= best.energy + tol {
            let exact = problem.raw_energy(&spins);
            if exact < best.energy || (exact == best.energy && lex_less(&spins, &best.spins)) {
                best = SpinConfiguration {
                    spins: spins.clone(),
                    energy: exact,
                };
            }
        }
    }
    Ok(best)
}

fn init_spins(problem: &LayerProblem, free: &[usize], rng: &mut ChaCha8Rng) -> Vec<i8> {
    let mut spins: Vec<i8> = (0..problem.n)
        .map(|i| problem.clamps[i].unwrap_or(1))
        .collect();
    for &i in free {
        spins[i] = if rng.random::<bool>() { 1 } else { -1 };
    }
    spins
}

fn sa_read(
    problem: &LayerProblem,
    t_hot: f64,
    t_cold: f64,
    sweeps: usize,
    seed: u64,
) -> (SpinConfiguration, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let free = problem.free_spins();
    let mut spins = init_spins(problem, &free, &mut rng);
    let mut accepted = 0u64;
    let mut proposed = 0u64;

    let ratio = t_cold / t_hot;
    for sweep in 0..sweeps {
        let frac = if sweeps > 1 {
            sweep as f64 / (sweeps - 1) as f64
        } else {
            1.0
        };
        let t = t_hot * ratio.powf(frac);
        for &i in &free {
            let mut local = problem.biases[i];
            for &(j, v) in &problem.neighbors[i] {
                local += v * spins[j] as f64;
            }
            let delta = 2.0 * spins[i] as f64 * local;
            proposed += 1;
            if delta <= 0.0 || rng.random::<f64>() < (-delta / t).exp() {
                spins[i] = -spins[i];
                accepted += 1;
            }
        }
    }

    let energy = problem.raw_energy(&spins);
    let acceptance = if proposed == 0 {
        0.0
    } else {
        accepted as f64 / proposed as f64
    };
    (SpinConfiguration { spins, energy }, acceptance)
}

/// Metropolis simulated annealing: `reads` independent restarts under a
/// geometric temperature ramp. Read r uses seed `schedule.seed ^ r`, making
/// the result order-independent under parallel execution.
pub fn simulated_anneal(problem: &LayerProblem, schedule: &AnnealSchedule) -> Result<ReadSet> {
    schedule.validate()?;
    let ScheduleKind::SimulatedAnnealing { t_hot, t_cold } = schedule.kind else {
        return Err(Error::InvalidArgument(
            "schedule kind must be simulated_annealing".into(),
        ));
    };
    let results = map_indices(schedule.reads, |r| {
        sa_read(problem, t_hot, t_cold, schedule.sweeps, schedule.seed ^ r as u64)
    });
    Ok(collect_reads(results, "simulated_annealing"))
}

fn collect_reads(results: Vec<(SpinConfiguration, f64)>, solver: &str) -> ReadSet {
    let best_energy = results
        .iter()
        .map(|(c, _)| c.energy)
        .fold(f64::INFINITY, f64::min);
    let mean_acceptance =
        results.iter().map(|(_, a)| a).sum::<f64>() / results.len().max(1) as f64;
    ReadSet {
        reads: results.into_iter().map(|(c, _)| c).collect(),
        diagnostics: SolverDiagnostics {
            solver: solver.to_string(),
            best_energy,
            mean_acceptance,
        },
    }
}

fn pimc_read(
    problem: &LayerProblem,
    slices: usize,
    gamma_initial: f64,
    temperature: f64,
    sweeps: usize,
    seed: u64,
) -> (SpinConfiguration, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let free = problem.free_spins();
    let beta = 1.0 / temperature;
    let mut replicas: Vec<Vec<i8>> = (0..slices)
        .map(|_| init_spins(problem, &free, &mut rng))
        .collect();
    let mut accepted = 0u64;
    let mut proposed = 0u64;

    for sweep in 0..sweeps {
        let s_t = if sweeps > 1 {
            1.0 - sweep as f64 / (sweeps - 1) as f64
        } else {
            0.0
        };
        let gamma = (gamma_initial * s_t).max(1e-9);
        // Trotter bond strength: replicas lock as the field shuts off.
        let x = (beta * gamma / slices as f64).min(30.0);
        let j_perp = -0.5 * x.tanh().ln();
        for p in 0..slices {
            let up = (p + slices - 1) % slices;
            let down = (p + 1) % slices;
            for &i in &free {
                let mut local = problem.biases[i];
                for &(j, v) in &problem.neighbors[i] {
                    local += v * replicas[p][j] as f64;
                }
                let spin = replicas[p][i] as f64;
                let trotter = (replicas[up][i] + replicas[down][i]) as f64;
                let delta_action = 2.0 * spin * ((beta / slices as f64) * local + j_perp * trotter);
                proposed += 1;
                if delta_action <= 0.0 || rng.random::<f64>() < (-delta_action).exp() {
                    replicas[p][i] = -replicas[p][i];
                    accepted += 1;
                }
            }
        }
    }

    let spins = replicas.swap_remove(0);
    let energy = problem.raw_energy(&spins);
    let acceptance = if proposed == 0 {
        0.0
    } else {
        accepted as f64 / proposed as f64
    };
    (SpinConfiguration { spins, energy }, acceptance)
}

/// Path-integral Monte Carlo over Trotter replicas with a linearly
/// decaying transverse field; the readout is replica 0 after the last
/// sweep. Same clamp and seed contracts as [`simulated_anneal`].
pub fn path_integral_anneal(problem: &LayerProblem, schedule: &AnnealSchedule) -> Result<ReadSet> {
    schedule.validate()?;
    let ScheduleKind::PathIntegral {
        trotter_slices,
        gamma_initial,
        temperature,
    } = schedule.kind
    else {
        return Err(Error::InvalidArgument(
            "schedule kind must be path_integral".into(),
        ));
    };
    let results = map_indices(schedule.reads, |r| {
        pimc_read(
            problem,
            trotter_slices,
            gamma_initial,
            temperature,
            schedule.sweeps,
            schedule.seed ^ r as u64,
        )
    });
    Ok(collect_reads(results, "path_integral"))
}

/// Per-spin majority over reads. Even-split ties take the value from the
/// lowest-energy read (first such read on equal energies).
pub fn majority_readout(reads: &ReadSet) -> Vec<i8> {
    majority_of(&reads.reads)
}

/// Majority vote over an explicit read slice (used when reads are filtered
/// first, e.g. to those honoring finite-bias labels).
pub fn majority_of(reads: &[SpinConfiguration]) -> Vec<i8> {
    assert!(!reads.is_empty(), "majority vote over zero reads");
    let n = reads[0].spins.len();
    let best = reads
        .iter()
        .min_by(|a, b| a.energy.partial_cmp(&b.energy).unwrap())
        .unwrap();
    (0..n)
        .map(|i| {
            let sum: i64 = reads.iter().map(|r| r.spins[i] as i64).sum();
            match sum.cmp(&0) {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => -1,
                std::cmp::Ordering::Equal => best.spins[i],
            }
        })
        .collect()
}

/// Default bias magnitude for [`bias_mode`]: ten times the largest coupling
/// row sum (floored at one for empty graphs).
pub fn default_bias_magnitude(problem: &LayerProblem) -> f64 {
    let row = problem.max_abs_coupling_row_sum();
    if row > 0.0 {
        10.0 * row
    } else {
        1.0
    }
}

/// Replaces every clamp with a finite bias h = h_mag * clamp, freeing those
/// spins: the "large bias" treatment of labeled data.
pub fn bias_mode(problem: &LayerProblem, h_mag: f64) -> Result<LayerProblem> {
    if !(h_mag > 0.0) {
        return Err(Error::InvalidArgument("bias magnitude must be positive".into()));
    }
    let mut out = problem.clone();
    for i in 0..out.n {
        if let Some(v) = out.clamps[i] {
            out.clamps[i] = None;
            out.biases[i] = h_mag * v as f64;
        }
    }
    Ok(out)
}

/// Serialized form of a problem: sparse couplings, biases, clamps.
#[derive(Serialize, Deserialize)]
struct ProblemRepr {
    n: usize,
    couplings: Vec<(usize, usize, f64)>,
    biases: Vec<(usize, f64)>,
    clamps: Vec<(usize, i8)>,
}

impl From<LayerProblem> for ProblemRepr {
    fn from(p: LayerProblem) -> Self {
        ProblemRepr {
            n: p.n,
            couplings: p.couplings.iter().map(|(&(a, b), &v)| (a, b, v)).collect(),
            biases: p
                .biases
                .iter()
                .enumerate()
                .filter(|(_, h)| **h != 0.0)
                .map(|(i, &h)| (i, h))
                .collect(),
            clamps: p
                .clamps
                .iter()
                .enumerate()
                .filter_map(|(i, c)| c.map(|v| (i, v)))
                .collect(),
        }
    }
}

impl TryFrom<ProblemRepr> for LayerProblem {
    type Error = Error;

    fn try_from(repr: ProblemRepr) -> Result<Self> {
        let mut p = LayerProblem::new(repr.n);
        for (a, b, v) in repr.couplings {
            p.set_coupling(a, b, v)?;
        }
        for (i, h) in repr.biases {
            p.set_bias(i, h)?;
        }
        for (i, v) in repr.clamps {
            p.set_clamp(i, v)?;
        }
        Ok(p)
    }
}
