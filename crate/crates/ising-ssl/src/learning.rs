//! Boltzmann maximum-likelihood fitting of similarity parameters on the
//! labeled subset.
//!
//! With biases removed, the labeled spins of each layer follow a Boltzmann
//! distribution whose energy is the (negated) sum of coupling terms. The
//! partition function factorizes across layers, so the negative
//! log-likelihood of the observed label bits is
//!
//!   nll(theta) = alpha * log Z_layer(theta)
//!              - sum_a sum_{i<j} J_ij(theta) lab_i^a lab_j^a / T
//!
//! Z_layer is enumerated exactly (Gray-ordered, log-sum-exp streaming) up
//! to 20 points; larger labeled sets fall back to a composite likelihood
//! over seeded label-stratified blocks. Parameters are positive scales, so
//! the coordinate optimizer scans and refines each one on a log axis.

use serde::{Deserialize, Serialize};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{DataPoint, Dataset, LabelId};
use crate::encoding::LabelCodebook;
use crate::error::{Error, Result};
use crate::par::{derive_seed, map_indices};
use crate::similarity::{
    coupling, knn_mask, similarity_matrix_points, CouplingMatrix, SimilarityModel,
};

/// Exact enumeration bound for one partition function.
pub const MAX_EXACT_PARTITION: usize = 20;

/// Composite-likelihood block size once the labeled set exceeds the exact
/// bound.
pub const DEFAULT_BLOCK_MAX: usize = 16;

/// The labeled-data fitting problem: points, their per-layer target bits,
/// the model family, and the masking budget.
#[derive(Debug, Clone)]
pub struct LearningProblem {
    points: Vec<DataPoint>,
    labels: Vec<LabelId>,
    /// targets[layer][i] is lab_i at that layer, as a spin.
    targets: Vec<Vec<i8>>,
    model: SimilarityModel,
    pub temperature: f64,
    pub xi: usize,
    pub block_seed: u64,
    pub block_max: usize,
}

impl LearningProblem {
    /// Assembles the problem from a dataset's labeled points and a codebook.
    /// Doubled-code labels contribute their first Gray code as the target.
    pub fn from_dataset(
        dataset: &Dataset,
        codebook: &LabelCodebook,
        model: SimilarityModel,
        xi: usize,
        block_seed: u64,
    ) -> Result<Self> {
        let l = dataset.num_labeled();
        if l == 0 {
            return Err(Error::LabelCoverage("no labeled points to learn from".into()));
        }
        if xi == 0 {
            return Err(Error::InvalidArgument("xi must be >= 1".into()));
        }
        model.validate(dataset.dim)?;
        let alpha = codebook.alpha();
        let mut targets = vec![Vec::with_capacity(l); alpha];
        for (_, lab) in &dataset.labeled {
            let code = codebook.primary_code(*lab);
            for (layer, row) in targets.iter_mut().enumerate() {
                row.push(codebook.code_bit(code, layer));
            }
        }
        Ok(Self {
            points: dataset.labeled.iter().map(|(p, _)| p.clone()).collect(),
            labels: dataset.labeled.iter().map(|(_, lab)| *lab).collect(),
            targets,
            model,
            temperature: 1.0,
            xi,
            block_seed,
            block_max: DEFAULT_BLOCK_MAX,
        })
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn num_layers(&self) -> usize {
        self.targets.len()
    }

    pub fn model(&self) -> &SimilarityModel {
        &self.model
    }

    pub fn initial_params(&self) -> Vec<f64> {
        self.model.params()
    }

    /// Deterministic label-stratified partition into blocks of at most
    /// `block_max` points. A single block covering everything when the
    /// exact bound allows it.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let l = self.points.len();
        if l <= self.block_max.min(MAX_EXACT_PARTITION) {
            return vec![(0..l).collect()];
        }
        let cap = self.block_max.min(MAX_EXACT_PARTITION);
        let num_blocks = l.div_ceil(cap);
        let num_labels = self.labels.iter().copied().max().unwrap_or(0) + 1;
        let mut per_label: Vec<Vec<usize>> = vec![Vec::new(); num_labels];
        for (i, &lab) in self.labels.iter().enumerate() {
            per_label[lab].push(i);
        }
        let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); num_blocks];
        let mut cursor = 0usize;
        for (lab, indices) in per_label.iter().enumerate() {
            let mut shuffled = indices.clone();
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(self.block_seed, lab as u64, 0x0b));
            shuffled.shuffle(&mut rng);
            for idx in shuffled {
                blocks[cursor % num_blocks].push(idx);
                cursor += 1;
            }
        }
        blocks
    }
}

/// Flat adjacency of a small coupling matrix, tuned for Gray-ordered
/// enumeration: CSR offsets plus (index, weight/T) pairs.
struct FlatAdjacency {
    offsets: Vec<usize>,
    entries: Vec<(usize, f64)>,
    /// sum of J_ij / T over i<j: the all-down state's statistic.
    all_down: f64,
}

impl FlatAdjacency {
    fn build(j: &CouplingMatrix, t: f64) -> Self {
        let n = j.n();
        let pairs = j.nonzero_pairs();
        let mut counts = vec![0usize; n + 1];
        for &(a, b, _) in &pairs {
            counts[a + 1] += 1;
            counts[b + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut entries = vec![(0usize, 0.0f64); pairs.len() * 2];
        let mut all_down = 0.0;
        for &(a, b, v) in &pairs {
            entries[cursor[a]] = (b, v / t);
            cursor[a] += 1;
            entries[cursor[b]] = (a, v / t);
            cursor[b] += 1;
            all_down += v / t;
        }
        Self {
            offsets,
            entries,
            all_down,
        }
    }

    #[inline]
    fn local(&self, k: usize, spins: &[f64]) -> f64 {
        let mut s = 0.0;
        for &(j, w) in &self.entries[self.offsets[k]..self.offsets[k + 1]] {
            s += w * spins[j];
        }
        s
    }
}

/// Log of the layer partition function of a labeled coupling submatrix:
/// log sum over all 2^n spin vectors of exp(sum_{i<j} J_ij s_i s_j / T).
/// Gray-ordered enumeration with a streaming max-shifted accumulator.
pub fn log_layer_partition(j_labeled: &CouplingMatrix, t: f64) -> Result<f64> {
    let n = j_labeled.n();
    if n > MAX_EXACT_PARTITION {
        return Err(Error::TooManyForExactPartition {
            got: n,
            limit: MAX_EXACT_PARTITION,
        });
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument("temperature must be positive".into()));
    }
    if n == 0 {
        return Ok(0.0);
    }

    let adj = FlatAdjacency::build(j_labeled, t);
    let mut spins = vec![-1.0f64; n];
    let mut x = adj.all_down;
    let mut max_seen = x;
    let mut acc = 1.0f64;
    for g in 1u64..(1u64 << n) {
        let k = g.trailing_zeros() as usize;
        x -= 2.0 * spins[k] * adj.local(k, &spins);
        spins[k] = -spins[k];
        if x <= max_seen {
            acc += (x - max_seen).exp();
        } else {
            acc = acc * (max_seen - x).exp() + 1.0;
            max_seen = x;
        }
    }
    Ok(max_seen + acc.ln())
}

/// The layer partition function itself (may overflow to infinity for
/// extreme couplings; use [`log_layer_partition`] in optimization loops).
pub fn layer_partition(j_labeled: &CouplingMatrix, t: f64) -> Result<f64> {
    Ok(log_layer_partition(j_labeled, t)?.exp())
}

fn block_coupling(
    problem: &LearningProblem,
    model: &SimilarityModel,
    indices: &[usize],
) -> Result<CouplingMatrix> {
    let pts: Vec<DataPoint> = indices.iter().map(|&i| problem.points[i].clone()).collect();
    let s = similarity_matrix_points(&pts, model)?;
    let xi_eff = problem.xi.min(pts.len().saturating_sub(1));
    if xi_eff == 0 {
        // Single-point block: no couplings at all.
        return CouplingMatrix::from_matrix(crate::matrix::SquareMatrix::zeros(pts.len()));
    }
    let mask = knn_mask(&s, xi_eff)?;
    coupling(&s, &mask)
}

fn block_nll(problem: &LearningProblem, indices: &[usize], j: &CouplingMatrix) -> Result<f64> {
    let t = problem.temperature;
    let log_z = log_layer_partition(j, t)?;
    let alpha = problem.num_layers();
    let mut clamped = 0.0;
    for target in &problem.targets {
        for (bi, &i) in indices.iter().enumerate() {
            for (bj, &jj) in indices.iter().enumerate().skip(bi + 1) {
                clamped += j.get(bi, bj) * target[i] as f64 * target[jj] as f64;
            }
        }
    }
    Ok(alpha as f64 * log_z - clamped / t)
}

/// Negative log-likelihood of the observed label bits under parameters
/// `theta`. Exceeding the exact bound switches to the composite
/// (sum-over-blocks) likelihood automatically; blocks evaluate in parallel.
pub fn nll(problem: &LearningProblem, theta: &[f64]) -> Result<f64> {
    let model = problem.model.with_params(theta)?;
    let blocks = problem.blocks();
    let per_block = map_indices(blocks.len(), |bi| {
        let j = block_coupling(problem, &model, &blocks[bi])?;
        block_nll(problem, &blocks[bi], &j)
    });
    let mut total = 0.0;
    for value in per_block {
        total += value?;
    }
    if !total.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    Ok(total)
}

/// Analytic gradient of [`nll`]: the expected-minus-clamped coupling
/// statistic, with the neighbor mask held fixed at `theta`.
pub fn nll_gradient(problem: &LearningProblem, theta: &[f64]) -> Result<Vec<f64>> {
    let model = problem.model.with_params(theta)?;
    let nparams = theta.len();
    let t = problem.temperature;
    let alpha = problem.num_layers();
    let blocks = problem.blocks();

    let per_block = map_indices(blocks.len(), |b| -> Result<Vec<f64>> {
        let indices = &blocks[b];
        let mut grad = vec![0.0; nparams];
        let nb = indices.len();
        if nb < 2 {
            return Ok(grad);
        }
        let j = block_coupling(problem, &model, indices)?;
        let corr = pair_correlations(&j, t)?;
        for bi in 0..nb {
            for bj in (bi + 1)..nb {
                if j.get(bi, bj) == 0.0 {
                    continue;
                }
                let pi = &problem.points[indices[bi]];
                let pj = &problem.points[indices[bj]];
                let ds = model.eval_grad(pi, pj)?;
                let mut clamped_stat = 0.0;
                for target in &problem.targets {
                    clamped_stat += (target[indices[bi]] * target[indices[bj]]) as f64;
                }
                let expected = corr[bi * nb + bj];
                for (g, dsk) in grad.iter_mut().zip(&ds) {
                    *g += dsk * (alpha as f64 * expected - clamped_stat) / t;
                }
            }
        }
        Ok(grad)
    });

    let mut grad = vec![0.0; nparams];
    for block_grad in per_block {
        for (g, v) in grad.iter_mut().zip(block_grad?) {
            *g += v;
        }
    }
    Ok(grad)
}

/// Boltzmann pair expectations <s_i s_j> over one block, by the same
/// Gray-ordered enumeration as the partition function.
fn pair_correlations(j: &CouplingMatrix, t: f64) -> Result<Vec<f64>> {
    let n = j.n();
    if n > MAX_EXACT_PARTITION {
        return Err(Error::TooManyForExactPartition {
            got: n,
            limit: MAX_EXACT_PARTITION,
        });
    }
    let adj = FlatAdjacency::build(j, t);
    let mut spins = vec![-1.0f64; n];
    let mut x = adj.all_down;
    let mut max_seen = x;
    let mut weight_sum = 1.0f64;
    let mut corr = vec![0.0f64; n * n];
    for a in 0..n {
        for b in (a + 1)..n {
            corr[a * n + b] = 1.0; // all-down state: s_a s_b = +1
        }
    }
    for g in 1u64..(1u64 << n) {
        let k = g.trailing_zeros() as usize;
        x -= 2.0 * spins[k] * adj.local(k, &spins);
        spins[k] = -spins[k];
        let w = if x <= max_seen {
            (x - max_seen).exp()
        } else {
            let rescale = (max_seen - x).exp();
            weight_sum *= rescale;
            for c in corr.iter_mut() {
                *c *= rescale;
            }
            max_seen = x;
            1.0
        };
        weight_sum += w;
        for a in 0..n {
            for b in (a + 1)..n {
                corr[a * n + b] += w * spins[a] * spins[b];
            }
        }
    }
    for c in corr.iter_mut() {
        *c /= weight_sum;
    }
    Ok(corr)
}

/// Optimizer choice for [`fit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Per-parameter log-axis scan plus golden-section refinement.
    CoordinateDescent,
    /// Log-space gradient descent with backtracking, using the analytic
    /// gradient.
    GradientDescent,
}

/// Knobs for [`fit`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitOptions {
    /// Coordinate cycles (or gradient steps) before giving up.
    pub budget: usize,
    /// Stop once a full cycle improves the objective by less than this.
    pub tol: f64,
    pub optimizer: Optimizer,
    /// Search domain for every positive parameter.
    pub param_min: f64,
    pub param_max: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            budget: 8,
            tol: 1e-8,
            optimizer: Optimizer::CoordinateDescent,
            param_min: 1e-6,
            param_max: 1e6,
        }
    }
}

/// Fit outcome: final parameters, the objective trace of accepted steps,
/// and the block layout used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub theta: Vec<f64>,
    pub nll_trace: Vec<f64>,
    pub converged: bool,
    pub cycles: usize,
    pub block_sizes: Vec<usize>,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Minimizes `f` over `[lo, hi]` (log-axis coordinates) by golden-section
/// search; returns the best point seen.
fn golden_section<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    iterations: usize,
) -> Result<(f64, f64)> {
    let mut c = hi - GOLDEN * (hi - lo);
    let mut d = lo + GOLDEN * (hi - lo);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    for _ in 0..iterations {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - GOLDEN * (hi - lo);
            fc = f(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + GOLDEN * (hi - lo);
            fd = f(d)?;
        }
        let (pt, val) = if fc <= fd { (c, fc) } else { (d, fd) };
        if val < best.1 {
            best = (pt, val);
        }
        if (hi - lo).abs() < 1e-10 {
            break;
        }
    }
    Ok(best)
}

fn fit_coordinate_descent(
    problem: &LearningProblem,
    init: &[f64],
    options: &FitOptions,
) -> Result<FitReport> {
    let mut theta = init.to_vec();
    let mut value = nll(problem, &theta)?;
    if !value.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let mut trace = vec![value];
    let mut converged = false;
    let mut cycles = 0usize;
    let log_lo = options.param_min.ln();
    let log_hi = options.param_max.ln();
    const SCAN: usize = 16;

    for _ in 0..options.budget {
        let cycle_start = value;
        for j in 0..theta.len() {
            let eval = |u: f64, theta: &mut Vec<f64>| -> Result<f64> {
                let saved = theta[j];
                theta[j] = u.exp();
                let v = nll(problem, theta);
                theta[j] = saved;
                v
            };

            // Coarse scan of the whole log domain, current point included.
            let mut best_u = theta[j].ln();
            let mut best_f = value;
            let mut grid = Vec::with_capacity(SCAN + 1);
            for g in 0..=SCAN {
                grid.push(log_lo + (log_hi - log_lo) * g as f64 / SCAN as f64);
            }
            for &u in &grid {
                let v = eval(u, &mut theta)?;
                if v < best_f {
                    best_f = v;
                    best_u = u;
                }
            }
            // Refine inside the bracketing grid cells.
            let cell = (log_hi - log_lo) / SCAN as f64;
            let (u_ref, f_ref) = golden_section(
                |u| eval(u, &mut theta),
                (best_u - cell).max(log_lo),
                (best_u + cell).min(log_hi),
                30,
            )?;
            if f_ref < best_f {
                best_f = f_ref;
                best_u = u_ref;
            }
            if best_f < value {
                theta[j] = best_u.exp();
                value = best_f;
            }
            trace.push(value);
        }
        cycles += 1;
        if cycle_start - value < options.tol {
            converged = true;
            break;
        }
    }

    Ok(FitReport {
        theta,
        nll_trace: trace,
        converged,
        cycles,
        block_sizes: problem.blocks().iter().map(Vec::len).collect(),
    })
}

fn fit_gradient_descent(
    problem: &LearningProblem,
    init: &[f64],
    options: &FitOptions,
) -> Result<FitReport> {
    let mut theta = init.to_vec();
    let mut value = nll(problem, &theta)?;
    if !value.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let mut trace = vec![value];
    let mut converged = false;
    let mut steps = 0usize;
    let log_lo = options.param_min.ln();
    let log_hi = options.param_max.ln();

    for _ in 0..options.budget {
        steps += 1;
        let grad_theta = nll_gradient(problem, &theta)?;
        // Chain rule onto the log axis keeps parameters positive.
        let grad_u: Vec<f64> = grad_theta.iter().zip(&theta).map(|(g, t)| g * t).collect();
        let norm = grad_u.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < 1e-14 {
            converged = true;
            break;
        }
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-12 {
            let candidate: Vec<f64> = theta
                .iter()
                .zip(&grad_u)
                .map(|(t, g)| (t.ln() - step * g).clamp(log_lo, log_hi).exp())
                .collect();
            let v = nll(problem, &candidate)?;
            if v < value {
                theta = candidate;
                let delta = value - v;
                value = v;
                trace.push(value);
                improved = true;
                if delta < options.tol {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !improved {
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    Ok(FitReport {
        theta,
        nll_trace: trace,
        converged,
        cycles: steps,
        block_sizes: problem.blocks().iter().map(Vec::len).collect(),
    })
}

/// Minimizes the negative log-likelihood over the model's positive
/// parameters, one coordinate at a time. Accepted steps never increase the
/// objective; the trace records the value after every coordinate pass.
pub fn fit(problem: &LearningProblem, init: &[f64], options: &FitOptions) -> Result<FitReport> {
    if options.budget == 0 {
        return Err(Error::InvalidArgument("budget must be >= 1".into()));
    }
    if init.is_empty() {
        return Err(Error::ModelMismatch(
            "model family has no learnable parameters".into(),
        ));
    }
    match options.optimizer {
        Optimizer::CoordinateDescent => fit_coordinate_descent(problem, init, options),
        Optimizer::GradientDescent => fit_gradient_descent(problem, init, options),
    }
}

/// Analytic-versus-numeric gradient comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_error: f64,
}

/// Compares the analytic gradient against central finite differences with
/// step 1e-5. Restricted to small problems where enumeration is instant.
pub fn nll_gradient_check(problem: &LearningProblem, theta: &[f64]) -> Result<GradientCheckReport> {
    if problem.num_points() > 12 {
        return Err(Error::InvalidArgument(
            "gradient check is limited to 12 labeled points".into(),
        ));
    }
    let analytic = nll_gradient(problem, theta)?;
    let mut numeric = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        let h = 1e-5f64.min(theta[j] * 0.5);
        let mut plus = theta.to_vec();
        plus[j] += h;
        let mut minus = theta.to_vec();
        minus[j] -= h;
        numeric.push((nll(problem, &plus)? - nll(problem, &minus)?) / (2.0 * h));
    }
    let max_rel_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-10))
        .fold(0.0, f64::max);
    Ok(GradientCheckReport {
        analytic,
        numeric,
        max_rel_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_blobs;
    use crate::encoding::build_codebook;
    use crate::matrix::SquareMatrix;

    fn two_point_problem(d: f64, same_label: bool) -> LearningProblem {
        let ds = crate::dataset::Dataset {
            labeled: vec![
                (DataPoint::new(vec![0.0, 0.0]), 0),
                (DataPoint::new(vec![d, 0.0]), if same_label { 0 } else { 1 }),
            ],
            unlabeled: vec![],
            hidden_truth: None,
            label_names: vec!["a".into(), "b".into()],
            dim: 2,
        };
        let cb = build_codebook(&[0, 1]).unwrap();
        LearningProblem::from_dataset(&ds, &cb, SimilarityModel::reciprocal(1.0, 1.0), 1, 7)
            .unwrap()
    }

    fn blob_problem(seed: u64, per_center: usize) -> LearningProblem {
        let centers = [
            DataPoint::new(vec![0.0, 0.0]),
            DataPoint::new(vec![4.0, 0.5]),
        ];
        let ds = generate_blobs(&centers, per_center, 0.8, seed).unwrap();
        let cb = build_codebook(&[0, 1]).unwrap();
        LearningProblem::from_dataset(&ds, &cb, SimilarityModel::reciprocal(1.0, 1.0), 3, seed)
            .unwrap()
    }

    #[test]
    fn partition_of_single_free_spin_is_two() {
        let j = CouplingMatrix::from_matrix(SquareMatrix::zeros(1)).unwrap();
        assert!((layer_partition(&j, 1.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn partition_two_spins_closed_form() {
        let mut m = SquareMatrix::zeros(2);
        m.set_sym(0, 1, 0.7);
        let j = CouplingMatrix::from_matrix(m).unwrap();
        for t in [0.5, 1.0, 2.0] {
            let expect = 2.0 * (0.7f64 / t).exp() + 2.0 * (-0.7f64 / t).exp();
            assert!((layer_partition(&j, t).unwrap() - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn partition_matches_naive_enumeration() {
        // 10 spins, pseudo-random couplings; oracle sums exponentials
        // directly without the log-space path.
        let mut m = SquareMatrix::zeros(10);
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        };
        for i in 0..10 {
            for j in (i + 1)..10 {
                if next() > 0.0 {
                    m.set_sym(i, j, next());
                }
            }
        }
        let j = CouplingMatrix::from_matrix(m).unwrap();
        let t = 1.3;
        let mut naive = 0.0f64;
        for assign in 0u32..(1 << 10) {
            let spins: Vec<f64> = (0..10)
                .map(|k| if assign >> k & 1 == 1 { 1.0 } else { -1.0 })
                .collect();
            let mut k_sum = 0.0;
            for a in 0..10 {
                for b in (a + 1)..10 {
                    k_sum += j.get(a, b) * spins[a] * spins[b];
                }
            }
            naive += (k_sum / t).exp();
        }
        let got = layer_partition(&j, t).unwrap();
        assert!((got - naive).abs() / naive < 1e-9);
    }

    #[test]
    fn partition_rejects_large_systems() {
        let j = CouplingMatrix::from_matrix(SquareMatrix::zeros(21)).unwrap();
        assert!(matches!(
            layer_partition(&j, 1.0),
            Err(Error::TooManyForExactPartition { got: 21, limit: 20 })
        ));
    }

    #[test]
    fn nll_uniform_at_zero_coupling() {
        // beta2 enormous drives every similarity (hence coupling) to ~0,
        // leaving the uniform distribution: alpha * l * ln 2.
        let problem = blob_problem(5, 4);
        let v = nll(&problem, &[1e-12, 1e6]).unwrap();
        let expect = 1.0 * 8.0 * std::f64::consts::LN_2;
        assert!((v - expect).abs() < 1e-6, "{v} vs {expect}");
    }

    #[test]
    fn nll_two_same_label_points_closed_form() {
        let problem = two_point_problem(1.0, true);
        for (b1, b2) in [(1.0f64, 1.0f64), (2.0, 0.5), (0.3, 4.0)] {
            let j = b1 / (b2 + 1.0);
            let expect = (2.0 * j.exp() + 2.0 * (-j).exp()).ln() - j;
            let got = nll(&problem, &[b1, b2]).unwrap();
            assert!((got - expect).abs() < 1e-10);
        }
        // Strictly decreasing in the coupling.
        let weak = nll(&problem, &[0.5, 1.0]).unwrap();
        let strong = nll(&problem, &[5.0, 1.0]).unwrap();
        assert!(strong < weak);
    }

    #[test]
    fn nll_matches_full_enumeration_oracle() {
        // 8 labeled points, 2 layers; oracle enumerates the Boltzmann
        // probability of the observed bits directly.
        let centers = [
            DataPoint::new(vec![0.0, 0.0]),
            DataPoint::new(vec![3.0, 0.0]),
            DataPoint::new(vec![0.0, 3.0]),
        ];
        let ds = generate_blobs(&centers, 3, 0.6, 9).unwrap();
        // Drop one point to get 8.
        let mut ds = ds;
        ds.labeled.truncate(8);
        let cb = build_codebook(&[0, 1, 2]).unwrap();
        let problem =
            LearningProblem::from_dataset(&ds, &cb, SimilarityModel::reciprocal(1.0, 1.0), 3, 1)
                .unwrap();

        for theta in [[1.0, 1.0], [0.7, 2.0]] {
            let got = nll(&problem, &theta).unwrap();

            // Oracle: build J the same way, then enumerate each layer's
            // 2^8 states from scratch (no log-space, no Gray deltas).
            let model = problem.model.with_params(&theta).unwrap();
            let s = similarity_matrix_points(&problem.points, &model).unwrap();
            let mask = knn_mask(&s, 3).unwrap();
            let j = coupling(&s, &mask).unwrap();
            let l = 8;
            let mut z = 0.0f64;
            for assign in 0u32..(1 << l) {
                let spins: Vec<f64> = (0..l)
                    .map(|k| if assign >> k & 1 == 1 { 1.0 } else { -1.0 })
                    .collect();
                let mut k_sum = 0.0;
                for a in 0..l {
                    for b in (a + 1)..l {
                        k_sum += j.get(a, b) * spins[a] * spins[b];
                    }
                }
                z += k_sum.exp();
            }
            let mut oracle = 0.0;
            for target in &problem.targets {
                let mut k_obs = 0.0;
                for a in 0..l {
                    for b in (a + 1)..l {
                        k_obs += j.get(a, b) * (target[a] * target[b]) as f64;
                    }
                }
                oracle += z.ln() - k_obs;
            }
            assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
        }
    }

    #[test]
    fn fit_same_label_pair_pushes_coupling_up() {
        let problem = two_point_problem(1.0, true);
        let report = fit(&problem, &[1.0, 1.0], &FitOptions::default()).unwrap();
        // The likelihood increases with J = beta1/(beta2 + 1), so the fit
        // drives the ratio to the top of the search domain.
        let j = report.theta[0] / (report.theta[1] + 1.0);
        assert!(j > 1e5, "fitted coupling {j}");
        assert!(report.theta[0] > 1e5);
        for w in report.nll_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn refit_from_minimum_converges_immediately() {
        let problem = blob_problem(3, 6);
        let first = fit(&problem, &[1.0, 1.0], &FitOptions::default()).unwrap();
        let second = fit(&problem, &first.theta, &FitOptions::default()).unwrap();
        assert!(second.converged);
        assert_eq!(second.cycles, 1);
        let drop = second.nll_trace.first().unwrap() - second.nll_trace.last().unwrap();
        assert!(drop < 1e-8, "refit still improved by {drop}");
    }

    #[test]
    fn fit_beats_grid_search_oracle() {
        // 12-point two-blob synthetic versus a 50x50 log grid.
        let problem = blob_problem(11, 6);
        let report = fit(&problem, &[1.0, 1.0], &FitOptions::default()).unwrap();
        let mut grid_best = f64::INFINITY;
        for gi in 0..50 {
            for gj in 0..50 {
                let b1 = 10f64.powf(-3.0 + 6.0 * gi as f64 / 49.0);
                let b2 = 10f64.powf(-3.0 + 6.0 * gj as f64 / 49.0);
                grid_best = grid_best.min(nll(&problem, &[b1, b2]).unwrap());
            }
        }
        let fitted = nll(&problem, &report.theta).unwrap();
        assert!(
            fitted <= grid_best + 1e-4,
            "fit {fitted} vs grid {grid_best}"
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let problem = blob_problem(21, 4);
        for theta in [[1.0, 1.0], [0.4, 2.5], [3.0, 0.2]] {
            let report = nll_gradient_check(&problem, &theta).unwrap();
            assert!(
                report.max_rel_error < 1e-4,
                "relative error {} at {theta:?}",
                report.max_rel_error
            );
        }
    }

    #[test]
    fn gradient_check_diagonal_gaussian_family() {
        let centers = [
            DataPoint::new(vec![0.0, 0.0]),
            DataPoint::new(vec![2.0, 0.0]),
        ];
        let ds = generate_blobs(&centers, 3, 0.5, 2).unwrap();
        let cb = build_codebook(&[0, 1]).unwrap();
        let model = SimilarityModel::diagonal_gaussian_init(&ds, 1.0).unwrap();
        let problem = LearningProblem::from_dataset(&ds, &cb, model, 2, 3).unwrap();
        let theta = problem.initial_params();
        assert_eq!(theta.len(), 4);
        let report = nll_gradient_check(&problem, &theta).unwrap();
        assert!(report.max_rel_error < 1e-4, "{}", report.max_rel_error);
    }

    #[test]
    fn block_scheme_partitions_deterministically() {
        let problem = blob_problem(31, 24); // 48 points -> 3 blocks
        let blocks_a = problem.blocks();
        let blocks_b = problem.blocks();
        assert_eq!(blocks_a, blocks_b);
        assert_eq!(blocks_a.len(), 3);
        let mut all: Vec<usize> = blocks_a.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..48).collect::<Vec<_>>());
        for block in &blocks_a {
            assert!(block.len() <= DEFAULT_BLOCK_MAX);
            // Stratification: both labels appear in every block.
            let labs: std::collections::BTreeSet<usize> =
                block.iter().map(|&i| problem.labels[i]).collect();
            assert_eq!(labs.len(), 2);
        }
        // The composite objective still evaluates.
        let v = nll(&problem, &[1.0, 1.0]).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn nll_invariant_under_index_permutation() {
        let problem = blob_problem(8, 5);
        let mut permuted = problem.clone();
        let perm: Vec<usize> = vec![3, 1, 4, 0, 9, 2, 7, 5, 8, 6];
        permuted.points = perm.iter().map(|&i| problem.points[i].clone()).collect();
        permuted.labels = perm.iter().map(|&i| problem.labels[i]).collect();
        permuted.targets = problem
            .targets
            .iter()
            .map(|row| perm.iter().map(|&i| row[i]).collect())
            .collect();
        let a = nll(&problem, &[1.2, 0.8]).unwrap();
        let b = nll(&permuted, &[1.2, 0.8]).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn gradient_descent_variant_decreases_objective() {
        let problem = blob_problem(17, 5);
        let options = FitOptions {
            budget: 60,
            optimizer: Optimizer::GradientDescent,
            ..FitOptions::default()
        };
        let report = fit(&problem, &[1.0, 1.0], &options).unwrap();
        assert!(report.nll_trace.last().unwrap() < report.nll_trace.first().unwrap());
        for w in report.nll_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn fit_rejects_bad_inputs() {
        let problem = blob_problem(2, 4);
        assert!(fit(&problem, &[], &FitOptions::default()).is_err());
        let options = FitOptions {
            budget: 0,
            ..FitOptions::default()
        };
        assert!(fit(&problem, &[1.0, 1.0], &options).is_err());
        assert!(nll(&problem, &[-1.0, 1.0]).is_err());
    }
}
