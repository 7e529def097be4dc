//! Parametric similarity matrices, nearest-neighbor masks, and coupling
//! matrices.
//!
//! Similarity S_ij is a monotonically decreasing function of the distance
//! between points i and j (zero on the diagonal). The mask keeps, for every
//! row, the xi largest similarities, symmetrized by OR so an edge survives
//! if either endpoint wants it. Couplings are the elementwise product: the
//! shared ferromagnetic bond strengths of every label layer.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataPoint, Dataset};
use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::par::map_indices;

const TWO_PI: f64 = std::f64::consts::TAU;

/// One component of a Gaussian mixture similarity: a label's weight and
/// full covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub covariance: SquareMatrix,
}

/// Per-label parameters of the 2-D Gaussian similarity: axis scales and a
/// correlation coefficient (zero after PCA decorrelates the axes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalComponent {
    pub weight: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub rho: f64,
}

/// Families of pairwise similarity functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SimilarityModel {
    /// beta1 / (beta2 + ||x_i - x_j||_p).
    ReciprocalDistance { beta1: f64, beta2: f64, p: f64 },
    /// Mixture of full-covariance Gaussian densities evaluated at x_i - x_j.
    GaussianMixture { components: Vec<GaussianComponent> },
    /// Mixture of bivariate Gaussians with per-label axis scales; the 2-D
    /// specialization used after projecting data to two components.
    DiagonalGaussian { components: Vec<DiagonalComponent> },
}

impl SimilarityModel {
    pub fn reciprocal(beta1: f64, beta2: f64) -> Self {
        SimilarityModel::ReciprocalDistance {
            beta1,
            beta2,
            p: 2.0,
        }
    }

    /// DiagonalGaussian with uniform initial scales and weights taken from
    /// the dataset's label proportions.
    pub fn diagonal_gaussian_init(dataset: &Dataset, beta_init: f64) -> Result<Self> {
        if dataset.dim != 2 {
            return Err(Error::DimensionMismatch(format!(
                "diagonal Gaussian similarity is 2-D; dataset has dim {}",
                dataset.dim
            )));
        }
        let l = dataset.num_labeled();
        if l == 0 {
            return Err(Error::LabelCoverage("no labeled points".into()));
        }
        let counts = dataset.label_counts();
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::LabelCoverage("every label needs a labeled point".into()));
        }
        Ok(SimilarityModel::DiagonalGaussian {
            components: counts
                .iter()
                .map(|&n_k| DiagonalComponent {
                    weight: n_k as f64 / l as f64,
                    beta1: beta_init,
                    beta2: beta_init,
                    rho: 0.0,
                })
                .collect(),
        })
    }

    /// The norm order used for distances; also the path metric.
    pub fn norm_order(&self) -> f64 {
        match self {
            SimilarityModel::ReciprocalDistance { p, .. } => *p,
            _ => 2.0,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            SimilarityModel::ReciprocalDistance { beta1, beta2, p } => {
                if !(*beta1 > 0.0) || !(*beta2 > 0.0) {
                    return Err(Error::InvalidArgument(
                        "reciprocal-distance scales must be positive".into(),
                    ));
                }
                if !(*p >= 1.0) {
                    return Err(Error::InvalidArgument("norm order must be >= 1".into()));
                }
            }
            SimilarityModel::GaussianMixture { components } => {
                if components.is_empty() {
                    return Err(Error::InvalidArgument("empty mixture".into()));
                }
                let wsum: f64 = components.iter().map(|c| c.weight).sum();
                if (wsum - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "mixture weights sum to {wsum}, expected 1"
                    )));
                }
                for c in components {
                    if c.covariance.n() != dim {
                        return Err(Error::DimensionMismatch(format!(
                            "covariance is {}x{0} for dim {dim}",
                            c.covariance.n()
                        )));
                    }
                    c.covariance.cholesky()?;
                }
            }
            SimilarityModel::DiagonalGaussian { components } => {
                if dim != 2 {
                    return Err(Error::DimensionMismatch(
                        "diagonal Gaussian similarity needs 2-D data".into(),
                    ));
                }
                if components.is_empty() {
                    return Err(Error::InvalidArgument("empty mixture".into()));
                }
                let wsum: f64 = components.iter().map(|c| c.weight).sum();
                if (wsum - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "mixture weights sum to {wsum}, expected 1"
                    )));
                }
                for c in components {
                    if !(c.beta1 > 0.0) || !(c.beta2 > 0.0) {
                        return Err(Error::InvalidArgument("axis scales must be positive".into()));
                    }
                    if !(c.rho > -1.0 && c.rho < 1.0) {
                        return Err(Error::InvalidArgument(
                            "correlation must lie in (-1, 1)".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Learnable parameter vector. Gaussian-mixture covariances are only
    /// learnable through [`SimilarityModel::DiagonalGaussian`]; the full
    /// family is evaluate-only.
    pub fn params(&self) -> Vec<f64> {
        match self {
            SimilarityModel::ReciprocalDistance { beta1, beta2, .. } => vec![*beta1, *beta2],
            SimilarityModel::GaussianMixture { .. } => Vec::new(),
            SimilarityModel::DiagonalGaussian { components } => components
                .iter()
                .flat_map(|c| [c.beta1, c.beta2])
                .collect(),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            SimilarityModel::ReciprocalDistance { .. } => {
                vec!["beta1".into(), "beta2".into()]
            }
            SimilarityModel::GaussianMixture { .. } => Vec::new(),
            SimilarityModel::DiagonalGaussian { components } => (0..components.len())
                .flat_map(|k| [format!("beta1[{k}]"), format!("beta2[{k}]")])
                .collect(),
        }
    }

    /// Same family with a replacement parameter vector.
    pub fn with_params(&self, theta: &[f64]) -> Result<Self> {
        if theta.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidArgument(
                "similarity parameters must be positive and finite".into(),
            ));
        }
        match self {
            SimilarityModel::ReciprocalDistance { p, .. } => {
                if theta.len() != 2 {
                    return Err(Error::InvalidArgument("expected 2 parameters".into()));
                }
                Ok(SimilarityModel::ReciprocalDistance {
                    beta1: theta[0],
                    beta2: theta[1],
                    p: *p,
                })
            }
            SimilarityModel::GaussianMixture { .. } => Err(Error::ModelMismatch(
                "full-covariance mixtures are not parameter-fittable; use the diagonal family"
                    .into(),
            )),
            SimilarityModel::DiagonalGaussian { components } => {
                if theta.len() != 2 * components.len() {
                    return Err(Error::InvalidArgument(format!(
                        "expected {} parameters, got {}",
                        2 * components.len(),
                        theta.len()
                    )));
                }
                Ok(SimilarityModel::DiagonalGaussian {
                    components: components
                        .iter()
                        .enumerate()
                        .map(|(k, c)| DiagonalComponent {
                            weight: c.weight,
                            beta1: theta[2 * k],
                            beta2: theta[2 * k + 1],
                            rho: c.rho,
                        })
                        .collect(),
                })
            }
        }
    }

    /// Similarity of two distinct points.
    pub fn eval(&self, a: &DataPoint, b: &DataPoint) -> f64 {
        match self {
            SimilarityModel::ReciprocalDistance { beta1, beta2, p } => {
                beta1 / (beta2 + a.distance(b, *p))
            }
            SimilarityModel::GaussianMixture { components } => {
                let d = a.dim();
                let delta: Vec<f64> =
                    a.coords.iter().zip(&b.coords).map(|(x, y)| x - y).collect();
                components
                    .iter()
                    .map(|c| {
                        let ch = c
                            .covariance
                            .cholesky()
                            .expect("validated covariance");
                        let norm = TWO_PI.powf(d as f64 / 2.0) * ch.determinant().sqrt();
                        let q = ch.inv_quadratic_form(&delta);
                        c.weight / norm * (-0.5 * q).exp()
                    })
                    .sum()
            }
            SimilarityModel::DiagonalGaussian { components } => {
                let u = a.coords[0] - b.coords[0];
                let v = a.coords[1] - b.coords[1];
                components
                    .iter()
                    .map(|c| diagonal_component_density(c, u, v))
                    .sum()
            }
        }
    }

    /// Gradient of the similarity w.r.t. the learnable parameters, in the
    /// order of [`SimilarityModel::params`].
    pub fn eval_grad(&self, a: &DataPoint, b: &DataPoint) -> Result<Vec<f64>> {
        match self {
            SimilarityModel::ReciprocalDistance { beta1, beta2, p } => {
                let r = a.distance(b, *p);
                let denom = beta2 + r;
                Ok(vec![1.0 / denom, -beta1 / (denom * denom)])
            }
            SimilarityModel::GaussianMixture { .. } => Err(Error::ModelMismatch(
                "no analytic gradient for full-covariance mixtures".into(),
            )),
            SimilarityModel::DiagonalGaussian { components } => {
                let u = a.coords[0] - b.coords[0];
                let v = a.coords[1] - b.coords[1];
                let mut grad = Vec::with_capacity(2 * components.len());
                for c in components {
                    let dens = diagonal_component_density(c, u, v);
                    let s = 1.0 - c.rho * c.rho;
                    // d/d beta1 of the log-density, times the density.
                    let b1 = c.beta1;
                    let b2 = c.beta2;
                    let dlog_db1 = -1.0 / b1
                        + (u * u / (b1 * b1 * b1) - c.rho * u * v / (b1 * b1 * b2)) / s;
                    let dlog_db2 = -1.0 / b2
                        + (v * v / (b2 * b2 * b2) - c.rho * u * v / (b1 * b2 * b2)) / s;
                    grad.push(dens * dlog_db1);
                    grad.push(dens * dlog_db2);
                }
                Ok(grad)
            }
        }
    }
}

fn diagonal_component_density(c: &DiagonalComponent, u: f64, v: f64) -> f64 {
    let s = 1.0 - c.rho * c.rho;
    let norm = TWO_PI * c.beta1 * c.beta2 * s.sqrt();
    let q = (u * u / (c.beta1 * c.beta1) + v * v / (c.beta2 * c.beta2)
        - 2.0 * c.rho * u * v / (c.beta1 * c.beta2))
        / s;
    c.weight / norm * (-0.5 * q).exp()
}

/// Symmetric nonnegative similarity matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix(SquareMatrix);

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.0.n()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn as_matrix(&self) -> &SquareMatrix {
        &self.0
    }
}

/// Symmetric binary mask with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskMatrix {
    n: usize,
    data: Vec<bool>,
}

impl MaskMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.n + j]
    }

    fn set(&mut self, i: usize, j: usize, v: bool) {
        self.data[i * self.n + j] = v;
    }

    pub fn row_count(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.get(i, j)).count()
    }
}

/// Symmetric nonnegative coupling matrix (masked similarities), shared by
/// all label layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrix(SquareMatrix);

impl CouplingMatrix {
    pub fn n(&self) -> usize {
        self.0.n()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn as_matrix(&self) -> &SquareMatrix {
        &self.0
    }

    pub fn from_matrix(m: SquareMatrix) -> Result<Self> {
        if !m.is_symmetric(1e-12) {
            return Err(Error::InvalidArgument("couplings must be symmetric".into()));
        }
        Ok(CouplingMatrix(m))
    }

    /// Number of nonzero couplings incident to vertex i.
    pub fn degree(&self, i: usize) -> usize {
        (0..self.n()).filter(|&j| self.get(i, j) != 0.0).count()
    }

    /// All nonzero pairs with i < j.
    pub fn nonzero_pairs(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n() {
            for j in (i + 1)..self.n() {
                let v = self.get(i, j);
                if v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    /// Largest row sum of |J|; the energy scale used for schedule and bias
    /// defaults.
    pub fn max_abs_row_sum(&self) -> f64 {
        (0..self.n())
            .map(|i| (0..self.n()).map(|j| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Builds the full similarity matrix over a dataset's points, labeled block
/// first. Rows are computed independently, so this parallelizes.
pub fn similarity_matrix(dataset: &Dataset, model: &SimilarityModel) -> Result<SimilarityMatrix> {
    model.validate(dataset.dim)?;
    let n = dataset.len();
    let points: Vec<&DataPoint> = (0..n).map(|i| dataset.point(i)).collect();
    Ok(similarity_of_points(&points, model))
}

/// Similarity over an explicit point slice (used on labeled subsets during
/// learning).
pub fn similarity_matrix_points(
    points: &[DataPoint],
    model: &SimilarityModel,
) -> Result<SimilarityMatrix> {
    if let Some(p) = points.first() {
        model.validate(p.dim())?;
    }
    let refs: Vec<&DataPoint> = points.iter().collect();
    Ok(similarity_of_points(&refs, model))
}

fn similarity_of_points(points: &[&DataPoint], model: &SimilarityModel) -> SimilarityMatrix {
    let n = points.len();
    let rows = map_indices(n, |i| {
        let mut row = vec![0.0; n];
        for (j, q) in points.iter().enumerate() {
            if j != i {
                row[j] = model.eval(points[i], q);
            }
        }
        row
    });
    let mut m = SquareMatrix::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m.set(i, j, v);
        }
    }
    // Guard against an asymmetric eval (possible only through numerical
    // noise); keep the average.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m.get(i, j) + m.get(j, i));
            m.set_sym(i, j, v);
        }
    }
    SimilarityMatrix(m)
}

/// Row-wise top-xi mask, OR-symmetrized. Ties go to the smaller column
/// index.
pub fn knn_mask(s: &SimilarityMatrix, xi: usize) -> Result<MaskMatrix> {
    let n = s.n();
    if xi == 0 || xi + 1 > n {
        return Err(Error::InvalidArgument(format!(
            "xi {xi} outside 1..={}",
            n.saturating_sub(1)
        )));
    }
    let mut mask = MaskMatrix {
        n,
        data: vec![false; n * n],
    };
    let picked = map_indices(n, |i| {
        let mut cols: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        cols.sort_by(|&a, &b| {
            s.get(i, b)
                .partial_cmp(&s.get(i, a))
                .unwrap()
                .then(a.cmp(&b))
        });
        cols.truncate(xi);
        cols
    });
    for (i, cols) in picked.iter().enumerate() {
        for &j in cols {
            mask.set(i, j, true);
            mask.set(j, i, true); // OR with the transpose
        }
    }
    Ok(mask)
}

/// Elementwise product J = M .* S.
pub fn coupling(s: &SimilarityMatrix, mask: &MaskMatrix) -> Result<CouplingMatrix> {
    if s.n() != mask.n() {
        return Err(Error::DimensionMismatch(format!(
            "similarity is {0}x{0}, mask is {1}x{1}",
            s.n(),
            mask.n()
        )));
    }
    let n = s.n();
    let mut m = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if mask.get(i, j) {
                m.set(i, j, s.get(i, j));
            }
        }
    }
    Ok(CouplingMatrix(m))
}

/// Outcome of [`prune_connectivity`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PruneReport {
    pub removed_edges: usize,
    /// True when every row ended at or below the budget.
    pub within_budget: bool,
    pub warning: Option<String>,
}

/// Randomly eliminates couplings until every vertex has at most `xi`
/// neighbors, never cutting the last path from an unlabeled vertex (index
/// >= `labeled_count`) to the labeled set. Edges whose removal would break
/// reachability are kept even above budget; the report says so.
pub fn prune_connectivity(
    j: &CouplingMatrix,
    xi: usize,
    labeled_count: usize,
    seed: u64,
) -> Result<(CouplingMatrix, PruneReport)> {
    if xi == 0 {
        return Err(Error::InvalidArgument("xi must be >= 1".into()));
    }
    let n = j.n();
    let mut m = j.as_matrix().clone();
    let mut degree: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&k| m.get(i, k) != 0.0).count())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut protected: std::collections::BTreeSet<(usize, usize)> = Default::default();
    let mut removed = 0usize;

    let reachable_without = |m: &SquareMatrix, skip: (usize, usize)| -> bool {
        if labeled_count == 0 || labeled_count >= n {
            return true;
        }
        // BFS from the labeled block over remaining edges.
        let mut seen = vec![false; n];
        let mut queue: Vec<usize> = (0..labeled_count).collect();
        for &q in &queue {
            seen[q] = true;
        }
        while let Some(v) = queue.pop() {
            for w in 0..n {
                if seen[w] || m.get(v, w) == 0.0 {
                    continue;
                }
                if (v.min(w), v.max(w)) == skip {
                    continue;
                }
                seen[w] = true;
                queue.push(w);
            }
        }
        seen.iter().all(|&s| s)
    };

    loop {
        // Worst row above budget with at least one unprotected edge.
        let candidate_row = (0..n)
            .filter(|&i| degree[i] > xi)
            .filter(|&i| {
                (0..n).any(|k| {
                    m.get(i, k) != 0.0 && !protected.contains(&(i.min(k), i.max(k)))
                })
            })
            .max_by(|&a, &b| degree[a].cmp(&degree[b]).then(b.cmp(&a)));
        let Some(row) = candidate_row else { break };

        let options: Vec<usize> = (0..n)
            .filter(|&k| m.get(row, k) != 0.0 && !protected.contains(&(row.min(k), row.max(k))))
            .collect();
        let pick = options[rng.random_range(0..options.len())];
        let key = (row.min(pick), row.max(pick));
        if reachable_without(&m, key) {
            m.set_sym(key.0, key.1, 0.0);
            degree[key.0] -= 1;
            degree[key.1] -= 1;
            removed += 1;
        } else {
            protected.insert(key);
        }
    }

    let within_budget = (0..n).all(|i| degree[i] <= xi);
    let report = PruneReport {
        removed_edges: removed,
        within_budget,
        warning: (!within_budget).then(|| {
            "connectivity budget not reachable without disconnecting unlabeled vertices"
                .to_string()
        }),
    };
    Ok((CouplingMatrix(m), report))
}
