//! Label encoding: per-label barycenters, the shortest barycenter path, and
//! the ordered Gray codebook assigning alpha-bit codes along that path.
//!
//! Labels adjacent on the manifold get codes at Hamming distance 1, so a
//! single wrong bit in a readout lands on a geometric neighbor. When K is
//! not a power of two, the leftover codes are folded back as second codes
//! of the earliest labels on the path, keeping every code owned.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{DataPoint, Dataset, LabelId};
use crate::error::{Error, Result};

/// Exact path search is factorial in K; beyond this we demand the heuristic.
pub const MAX_EXACT_PATH_LABELS: usize = 10;

/// Per-label arithmetic means of labeled points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarycenterSet {
    pub by_label: BTreeMap<LabelId, DataPoint>,
}

impl BarycenterSet {
    pub fn num_labels(&self) -> usize {
        self.by_label.len()
    }
}

/// Computes the barycenter of every label present in the labeled set.
pub fn compute_barycenters(dataset: &Dataset) -> Result<BarycenterSet> {
    let counts = dataset.label_counts();
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::LabelCoverage(format!(
            "label {:?} has no labeled points",
            dataset.label_names[missing]
        )));
    }
    let mut sums: BTreeMap<LabelId, Vec<f64>> = BTreeMap::new();
    for (p, lab) in &dataset.labeled {
        let s = sums.entry(*lab).or_insert_with(|| vec![0.0; dataset.dim]);
        for (acc, c) in s.iter_mut().zip(&p.coords) {
            *acc += c;
        }
    }
    let by_label = sums
        .into_iter()
        .map(|(lab, mut s)| {
            for v in &mut s {
                *v /= counts[lab] as f64;
            }
            (lab, DataPoint::new(s))
        })
        .collect();
    Ok(BarycenterSet { by_label })
}

fn path_length(order: &[LabelId], dist: &BTreeMap<(LabelId, LabelId), f64>) -> f64 {
    order
        .windows(2)
        .map(|w| dist[&(w[0].min(w[1]), w[0].max(w[1]))])
        .sum()
}

fn distance_table(barys: &BarycenterSet, p: f64) -> BTreeMap<(LabelId, LabelId), f64> {
    let ids: Vec<LabelId> = barys.by_label.keys().copied().collect();
    let mut dist = BTreeMap::new();
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            dist.insert((a, b), barys.by_label[&a].distance(&barys.by_label[&b], p));
        }
    }
    dist
}

/// Advances `seq` to the next lexicographic permutation; false at the last.
fn next_permutation(seq: &mut [LabelId]) -> bool {
    if seq.len() < 2 {
        return false;
    }
    let mut i = seq.len() - 1;
    while i > 0 && seq[i - 1] >= seq[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = seq.len() - 1;
    while seq[j] <= seq[i - 1] {
        j -= 1;
    }
    seq.swap(i - 1, j);
    seq[i..].reverse();
    true
}

/// Shortest open path through all barycenters under the p-norm, found by
/// exhaustive permutation search. Of the two traversal directions the one
/// starting at the smaller label id is returned; exact ties in length go to
/// the lexicographically smallest id sequence.
pub fn shortest_label_path(barys: &BarycenterSet, p: f64) -> Result<Vec<LabelId>> {
    let k = barys.num_labels();
    if k < 2 {
        return Err(Error::InvalidArgument(
            "need at least two labels to build a path".into(),
        ));
    }
    if k > MAX_EXACT_PATH_LABELS {
        return Err(Error::TooManyLabels {
            got: k,
            limit: MAX_EXACT_PATH_LABELS,
        });
    }
    let dist = distance_table(barys, p);
    let mut perm: Vec<LabelId> = barys.by_label.keys().copied().collect();
    let mut best: Option<(f64, Vec<LabelId>)> = None;
    loop {
        // Each undirected path appears twice; keep the direction that
        // starts at the smaller label id and skip the mirror.
        if perm[0] < perm[k - 1] {
            let len = path_length(&perm, &dist);
            let better = match &best {
                None => true,
                Some((best_len, _)) => len + 1e-12 < *best_len,
            };
            if better {
                best = Some((len, perm.clone()));
            }
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(best.expect("k >= 2 guarantees at least one path").1)
}

/// Greedy nearest-neighbor path for label counts beyond the exact-search
/// limit. Not optimal; tries every start and keeps the shortest chain.
pub fn greedy_label_path(barys: &BarycenterSet, p: f64) -> Result<Vec<LabelId>> {
    let k = barys.num_labels();
    if k < 2 {
        return Err(Error::InvalidArgument(
            "need at least two labels to build a path".into(),
        ));
    }
    let dist = distance_table(barys, p);
    let ids: Vec<LabelId> = barys.by_label.keys().copied().collect();
    let mut best: Option<(f64, Vec<LabelId>)> = None;
    for &start in &ids {
        let mut path = vec![start];
        let mut remaining: Vec<LabelId> = ids.iter().copied().filter(|&x| x != start).collect();
        while !remaining.is_empty() {
            let cur = *path.last().unwrap();
            let (pos, _) = remaining
                .iter()
                .enumerate()
                .min_by(|(_, &a), (_, &b)| {
                    let da = dist[&(cur.min(a), cur.max(a))];
                    let db = dist[&(cur.min(b), cur.max(b))];
                    da.partial_cmp(&db).unwrap().then(a.cmp(&b))
                })
                .unwrap();
            path.push(remaining.remove(pos));
        }
        let len = path_length(&path, &dist);
        if best.as_ref().map_or(true, |(bl, _)| len + 1e-12 < *bl) {
            best = Some((len, path));
        }
    }
    let (_, mut path) = best.unwrap();
    if path[0] > path[path.len() - 1] {
        path.reverse();
    }
    Ok(path)
}

/// Ordered Gray codebook: every alpha-bit code owned by exactly one label,
/// labels along the path owning one or two consecutive codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CodebookRepr", into = "CodebookRepr")]
pub struct LabelCodebook {
    alpha: usize,
    order: Vec<LabelId>,
    label_codes: BTreeMap<LabelId, Vec<u32>>,
    code_owner: Vec<LabelId>,
}

impl LabelCodebook {
    /// Bits per label.
    pub fn alpha(&self) -> usize {
        self.alpha
    }

    /// Labels in path order.
    pub fn order(&self) -> &[LabelId] {
        &self.order
    }

    pub fn num_labels(&self) -> usize {
        self.order.len()
    }

    /// All codes owned by a label (one or two).
    pub fn codes(&self, label: LabelId) -> &[u32] {
        &self.label_codes[&label]
    }

    /// The label's first code in Gray order; the learning target and clamp
    /// source for doubled labels.
    pub fn primary_code(&self, label: LabelId) -> u32 {
        self.label_codes[&label][0]
    }

    /// Owning label of a code; total over all 2^alpha codes.
    pub fn decode(&self, code: u32) -> LabelId {
        self.code_owner[code as usize]
    }

    /// Bit of `code` at `layer` (0-based, leftmost bit first) as a spin.
    pub fn code_bit(&self, code: u32, layer: usize) -> i8 {
        debug_assert!(layer < self.alpha);
        if (code >> (self.alpha - 1 - layer)) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    /// Packs per-layer spins back into a code.
    pub fn code_from_bits(&self, bits: &[i8]) -> u32 {
        debug_assert_eq!(bits.len(), self.alpha);
        let mut code = 0u32;
        for (layer, &b) in bits.iter().enumerate() {
            if b > 0 {
                code |= 1 << (self.alpha - 1 - layer);
            }
        }
        code
    }

    pub fn code_string(&self, code: u32) -> String {
        format!("{code:0width$b}", width = self.alpha)
    }

    /// The full assigned Gray sequence, for invariant checks.
    pub fn assigned_sequence(&self) -> Vec<u32> {
        (0..(1u32 << self.alpha)).map(|g| g ^ (g >> 1)).collect()
    }
}

/// Builds the codebook for labels in path order: alpha = ceil(log2 K), the
/// standard reflected Gray sequence from 0..0, two consecutive codes each
/// for the first 2^alpha - K labels and one for the rest.
pub fn build_codebook(order: &[LabelId]) -> Result<LabelCodebook> {
    let k = order.len();
    if k < 2 {
        return Err(Error::InvalidArgument("codebook needs at least 2 labels".into()));
    }
    {
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != k {
            return Err(Error::InvalidArgument("duplicate label in path order".into()));
        }
    }
    let alpha = (usize::BITS - (k - 1).leading_zeros()) as usize; // ceil(log2 k)
    let total = 1usize << alpha;
    let doubled = total - k;

    let mut label_codes: BTreeMap<LabelId, Vec<u32>> = BTreeMap::new();
    let mut code_owner = vec![0usize; total];
    let mut g = 0u32;
    for (pos, &label) in order.iter().enumerate() {
        let take = if pos < doubled { 2 } else { 1 };
        let mut codes = Vec::with_capacity(take);
        for _ in 0..take {
            let code = g ^ (g >> 1);
            codes.push(code);
            code_owner[code as usize] = label;
            g += 1;
        }
        label_codes.insert(label, codes);
    }
    debug_assert_eq!(g as usize, total);

    Ok(LabelCodebook {
        alpha,
        order: order.to_vec(),
        label_codes,
        code_owner,
    })
}

/// Serialized form: codes as binary strings for auditability.
#[derive(Serialize, Deserialize)]
struct CodebookRepr {
    alpha: usize,
    order: Vec<LabelId>,
    codes: Vec<(LabelId, Vec<String>)>,
}

impl From<LabelCodebook> for CodebookRepr {
    fn from(cb: LabelCodebook) -> Self {
        let codes = cb
            .order
            .iter()
            .map(|&lab| {
                (
                    lab,
                    cb.label_codes[&lab]
                        .iter()
                        .map(|&c| cb.code_string(c))
                        .collect(),
                )
            })
            .collect();
        CodebookRepr {
            alpha: cb.alpha,
            order: cb.order,
            codes,
        }
    }
}

impl TryFrom<CodebookRepr> for LabelCodebook {
    type Error = Error;

    fn try_from(repr: CodebookRepr) -> Result<Self> {
        let total = 1usize << repr.alpha;
        let mut label_codes = BTreeMap::new();
        let mut code_owner = vec![usize::MAX; total];
        for (lab, strings) in &repr.codes {
            let mut codes = Vec::new();
            for s in strings {
                if s.len() != repr.alpha {
                    return Err(Error::InvalidArgument(format!(
                        "code {s:?} is not {} bits",
                        repr.alpha
                    )));
                }
                let code = u32::from_str_radix(s, 2)
                    .map_err(|_| Error::InvalidArgument(format!("bad code {s:?}")))?;
                code_owner[code as usize] = *lab;
                codes.push(code);
            }
            label_codes.insert(*lab, codes);
        }
        if code_owner.iter().any(|&o| o == usize::MAX) {
            return Err(Error::InvalidArgument("codebook does not cover all codes".into()));
        }
        Ok(LabelCodebook {
            alpha: repr.alpha,
            order: repr.order,
            label_codes,
            code_owner,
        })
    }
}
