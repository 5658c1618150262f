//! Basis-label bookkeeping: blocks, their diameters and distances, the
//! pairwise block decomposition of a matrix, and basis relabelling.

use std::collections::VecDeque;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::numerics::{check_hermitian, CMatrix};

/// Position of a level in the ordered representation basis.
pub type Label = usize;

/// Entries with magnitude below this are structural zeros.
pub const STRUCTURAL_ZERO: f64 = 1e-14;

const DECOMPOSE_HERMITIAN_TOL: f64 = 1e-12;

/// A nonempty set of basis labels, kept sorted and duplicate free.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Block {
    labels: Vec<Label>,
}

impl Block {
    pub fn new(labels: impl IntoIterator<Item = Label>) -> Result<Self> {
        let mut labels: Vec<Label> = labels.into_iter().collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.is_empty() {
            return Err(LabError::Domain("a block needs at least one label".into()));
        }
        Ok(Block { labels })
    }

    pub fn singleton(label: Label) -> Self {
        Block {
            labels: vec![label],
        }
    }

    /// The contiguous interval `lo..=hi`.
    pub fn interval(lo: Label, hi: Label) -> Result<Self> {
        if hi < lo {
            return Err(LabError::Domain(format!("empty interval {lo}..={hi}")));
        }
        Ok(Block {
            labels: (lo..=hi).collect(),
        })
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn min(&self) -> Label {
        self.labels[0]
    }

    pub fn max(&self) -> Label {
        self.labels[self.labels.len() - 1]
    }

    pub fn diameter(&self) -> usize {
        self.max() - self.min()
    }

    pub fn contains(&self, label: Label) -> bool {
        self.labels.binary_search(&label).is_ok()
    }

    pub fn intersects(&self, other: &Block) -> bool {
        block_distance(self, other) == 0
    }

    /// Validates every label against a Hilbert-space dimension.
    pub fn check_dimension(&self, dimension: usize) -> Result<()> {
        if self.max() >= dimension {
            return Err(LabError::Validation(format!(
                "label {} out of range for dimension {dimension}",
                self.max()
            )));
        }
        Ok(())
    }
}

/// `max(Z) − min(Z)`.
pub fn diameter(block: &Block) -> usize {
    block.diameter()
}

/// `min_{i∈A, j∈B} |j − i|`, by a merge over the two sorted label lists.
pub fn block_distance(a: &Block, b: &Block) -> usize {
    let (x, y) = (a.labels(), b.labels());
    let (mut i, mut j) = (0, 0);
    let mut best = usize::MAX;
    while i < x.len() && j < y.len() {
        let d = x[i].abs_diff(y[j]);
        best = best.min(d);
        if best == 0 {
            break;
        }
        if x[i] < y[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    best
}

/// One term `H_Z` of a block decomposition, stored as its `|Z|×|Z|`
/// submatrix on the block's labels.
#[derive(Debug, Clone)]
pub struct BlockTerm {
    pub block: Block,
    pub submatrix: CMatrix,
    /// Operator norm of the term.
    pub norm: f64,
}

impl BlockTerm {
    /// The term embedded in the full `dimension × dimension` space.
    pub fn embedded(&self, dimension: usize) -> CMatrix {
        let mut full = CMatrix::zeros(dimension, dimension);
        for (a, &i) in self.block.labels().iter().enumerate() {
            for (b, &j) in self.block.labels().iter().enumerate() {
                full[(i, j)] = self.submatrix[(a, b)];
            }
        }
        full
    }
}

/// `H = Σ_Z H_Z` with every term supported on its block.
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    pub dimension: usize,
    pub terms: Vec<BlockTerm>,
}

impl BlockDecomposition {
    pub fn reconstruct(&self) -> CMatrix {
        let mut full = CMatrix::zeros(self.dimension, self.dimension);
        for term in &self.terms {
            for (a, &i) in term.block.labels().iter().enumerate() {
                for (b, &j) in term.block.labels().iter().enumerate() {
                    full[(i, j)] += term.submatrix[(a, b)];
                }
            }
        }
        full
    }

    pub fn singleton_count(&self) -> usize {
        self.terms.iter().filter(|t| t.block.size() == 1).count()
    }

    pub fn pair_count(&self) -> usize {
        self.terms.iter().filter(|t| t.block.size() == 2).count()
    }
}

/// Splits a Hermitian matrix into singleton blocks `{i}` carrying `H_ii` and
/// pair blocks `{i, j}` carrying `H_ij|i⟩⟨j| + H_ji|j⟩⟨i|`, whose operator
/// norm is `|H_ij|`. Structural zeros produce no term.
pub fn pairwise_decompose(h: &CMatrix) -> Result<BlockDecomposition> {
    check_hermitian(h, DECOMPOSE_HERMITIAN_TOL, "Hamiltonian")?;
    Ok(pairwise_decompose_unchecked(h))
}

pub(crate) fn pairwise_decompose_unchecked(h: &CMatrix) -> BlockDecomposition {
    let n = h.nrows();
    let mut terms = Vec::new();
    for i in 0..n {
        let d = h[(i, i)];
        if d.norm() >= STRUCTURAL_ZERO {
            terms.push(BlockTerm {
                block: Block::singleton(i),
                submatrix: CMatrix::from_element(1, 1, d),
                norm: d.norm(),
            });
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let hij = h[(i, j)];
            if hij.norm() < STRUCTURAL_ZERO {
                continue;
            }
            let zero = Complex64::new(0.0, 0.0);
            terms.push(BlockTerm {
                block: Block { labels: vec![i, j] },
                submatrix: CMatrix::from_row_slice(2, 2, &[zero, hij, h[(j, i)], zero]),
                norm: hij.norm(),
            });
        }
    }
    BlockDecomposition {
        dimension: n,
        terms,
    }
}

/// Relabelling strategies for the representation basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReorderStrategy {
    #[default]
    Identity,
    BandwidthGreedy,
}

/// A relabelling `old label → new label`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Permutation {
    new_of_old: Vec<Label>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation {
            new_of_old: (0..n).collect(),
        }
    }

    pub fn from_new_of_old(new_of_old: Vec<Label>) -> Result<Self> {
        let p = Permutation { new_of_old };
        if !p.is_valid() {
            return Err(LabError::Validation("not a permutation".into()));
        }
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.new_of_old.len()
    }

    pub fn is_empty(&self) -> bool {
        self.new_of_old.is_empty()
    }

    pub fn apply(&self, old: Label) -> Label {
        self.new_of_old[old]
    }

    pub fn as_slice(&self) -> &[Label] {
        &self.new_of_old
    }

    pub fn is_identity(&self) -> bool {
        self.new_of_old.iter().enumerate().all(|(i, &p)| i == p)
    }

    /// Bijection check.
    pub fn is_valid(&self) -> bool {
        let mut seen = vec![false; self.new_of_old.len()];
        for &p in &self.new_of_old {
            if p >= seen.len() || seen[p] {
                return false;
            }
            seen[p] = true;
        }
        true
    }

    pub fn inverse(&self) -> Permutation {
        let mut old_of_new = vec![0; self.new_of_old.len()];
        for (old, &new) in self.new_of_old.iter().enumerate() {
            old_of_new[new] = old;
        }
        Permutation {
            new_of_old: old_of_new,
        }
    }

    /// The matrix in relabelled coordinates: `M'[π(i), π(j)] = M[i, j]`.
    pub fn apply_to_matrix(&self, m: &CMatrix) -> CMatrix {
        let inv = self.inverse();
        CMatrix::from_fn(m.nrows(), m.ncols(), |a, b| m[(inv.apply(a), inv.apply(b))])
    }
}

/// Largest `|i − j|` over structurally nonzero entries.
pub fn bandwidth(m: &CMatrix) -> usize {
    let mut band = 0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)].norm() >= STRUCTURAL_ZERO {
                band = band.max(i.abs_diff(j));
            }
        }
    }
    band
}

/// Chooses a basis ordering.
///
/// `BandwidthGreedy` is a Cuthill–McKee breadth-first relabelling of the
/// coupling graph: each component starts from its lowest-degree vertex and
/// neighbours are enqueued by decreasing `|H_ij|`, ties by ascending label.
/// When the result does not narrow the band the input order is kept.
pub fn reorder_basis(h: &CMatrix, strategy: ReorderStrategy) -> Result<Permutation> {
    let n = h.nrows();
    match strategy {
        ReorderStrategy::Identity => Ok(Permutation::identity(n)),
        ReorderStrategy::BandwidthGreedy => {
            check_hermitian(h, DECOMPOSE_HERMITIAN_TOL, "Hamiltonian")?;
            let perm = cuthill_mckee_weighted(h);
            if bandwidth(&perm.apply_to_matrix(h)) <= bandwidth(h) {
                Ok(perm)
            } else {
                Ok(Permutation::identity(n))
            }
        }
    }
}

fn cuthill_mckee_weighted(h: &CMatrix) -> Permutation {
    let n = h.nrows();
    let neighbours: Vec<Vec<(Label, f64)>> = (0..n)
        .map(|i| {
            let mut adj: Vec<(Label, f64)> = (0..n)
                .filter(|&j| j != i && h[(i, j)].norm() >= STRUCTURAL_ZERO)
                .map(|j| (j, h[(i, j)].norm()))
                .collect();
            adj.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            adj
        })
        .collect();

    let mut visited = vec![false; n];
    let mut order: Vec<Label> = Vec::with_capacity(n);
    while order.len() < n {
        let start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (neighbours[i].len(), i))
            .expect("an unvisited vertex remains");
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &(w, _) in &neighbours[v] {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }

    let mut new_of_old = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        new_of_old[old] = new;
    }
    Permutation { new_of_old }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::operator_norm;

    fn block(labels: &[usize]) -> Block {
        Block::new(labels.iter().copied()).unwrap()
    }

    fn real(n: usize, entries: &[(usize, usize, f64)]) -> CMatrix {
        let mut m = CMatrix::zeros(n, n);
        for &(i, j, v) in entries {
            m[(i, j)] = Complex64::new(v, 0.0);
            m[(j, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    #[test]
    fn diameters() {
        assert_eq!(diameter(&block(&[5])), 0);
        assert_eq!(diameter(&block(&[0, 3, 7])), 7);
        assert_eq!(diameter(&block(&[2, 4])), 2);
    }

    #[test]
    fn distances() {
        assert_eq!(block_distance(&block(&[0, 1]), &block(&[4, 7])), 3);
        assert_eq!(block_distance(&block(&[2]), &block(&[2, 5])), 0);
        assert_eq!(block_distance(&block(&[0]), &block(&[10])), 10);
        assert_eq!(block_distance(&block(&[1, 9]), &block(&[4, 6])), 3);
    }

    #[test]
    fn empty_block_is_a_domain_error() {
        assert!(matches!(Block::new(Vec::new()), Err(LabError::Domain(_))));
    }

    #[test]
    fn diagonal_decomposition() {
        let d = real(2, &[(0, 0, 1.0), (1, 1, 2.0)]);
        let dec = pairwise_decompose(&d).unwrap();
        assert_eq!(dec.terms.len(), 2);
        assert_eq!(dec.terms[0].block, block(&[0]));
        assert_eq!(dec.terms[0].submatrix[(0, 0)].re, 1.0);
        assert_eq!(dec.terms[1].block, block(&[1]));
        assert_eq!(dec.terms[1].submatrix[(0, 0)].re, 2.0);
    }

    #[test]
    fn pair_term_norm_is_entry_modulus() {
        let mut h = CMatrix::zeros(2, 2);
        h[(0, 1)] = Complex64::new(0.3, 0.4);
        h[(1, 0)] = Complex64::new(0.3, -0.4);
        let dec = pairwise_decompose(&h).unwrap();
        assert_eq!(dec.terms.len(), 1);
        let term = &dec.terms[0];
        assert!((term.norm - 0.5).abs() < 1e-15);
        assert!((operator_norm(&term.embedded(2)).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn decompose_rejects_non_hermitian() {
        let mut h = CMatrix::zeros(2, 2);
        h[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(matches!(
            pairwise_decompose(&h),
            Err(LabError::Validation(_))
        ));
    }

    #[test]
    fn noise_below_threshold_is_structural_zero() {
        let h = real(3, &[(0, 0, 1.0), (0, 2, 1e-16)]);
        let dec = pairwise_decompose(&h).unwrap();
        assert_eq!(dec.terms.len(), 1);
    }

    #[test]
    fn identity_strategy() {
        let h = real(4, &[(0, 3, 1.0)]);
        assert!(reorder_basis(&h, ReorderStrategy::Identity)
            .unwrap()
            .is_identity());
    }

    #[test]
    fn arrow_matrix_bandwidth_not_increased() {
        let n = 9;
        let entries: Vec<_> = (1..n).map(|j| (0, j, 1.0 / j as f64)).collect();
        let h = real(n, &entries);
        let p = reorder_basis(&h, ReorderStrategy::BandwidthGreedy).unwrap();
        assert!(p.is_valid());
        // Direct recount of max |π(i) − π(j)| over nonzero entries.
        let mut before = 0;
        let mut after = 0;
        for i in 0..n {
            for j in 0..n {
                if i != j && h[(i, j)].norm() > 0.0 {
                    before = before.max(i.abs_diff(j));
                    after = after.max(p.apply(i).abs_diff(p.apply(j)));
                }
            }
        }
        assert!(after <= before, "{after} > {before}");
        assert_eq!(after, n - 2);
    }

    #[test]
    fn tridiagonal_keeps_bandwidth_one() {
        let entries: Vec<_> = (0..7).map(|k| (k, k + 1, 0.5)).collect();
        let h = real(8, &entries);
        let p = reorder_basis(&h, ReorderStrategy::BandwidthGreedy).unwrap();
        assert_eq!(bandwidth(&p.apply_to_matrix(&h)), 1);
    }

    #[test]
    fn scrambled_chain_is_recovered() {
        // A chain visiting labels in a scrambled order: bandwidth is large,
        // Cuthill-McKee puts it back on the first off-diagonal.
        let path = [3, 7, 0, 5, 1, 6, 2, 4];
        let entries: Vec<_> = path.windows(2).map(|w| (w[0], w[1], 1.0)).collect();
        let h = real(8, &entries);
        let p = reorder_basis(&h, ReorderStrategy::BandwidthGreedy).unwrap();
        assert_eq!(bandwidth(&p.apply_to_matrix(&h)), 1);
    }

    #[test]
    fn permutation_matrix_roundtrip() {
        let h = real(3, &[(0, 1, 1.0), (1, 2, 2.0), (0, 0, 5.0)]);
        let p = Permutation::from_new_of_old(vec![2, 0, 1]).unwrap();
        let moved = p.apply_to_matrix(&h);
        assert_eq!(moved[(2, 2)].re, 5.0);
        assert_eq!(moved[(2, 0)].re, 1.0);
        assert_eq!(p.inverse().apply_to_matrix(&moved), h);
        assert!(Permutation::from_new_of_old(vec![0, 0]).is_err());
    }
}
