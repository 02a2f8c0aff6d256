//! Simplicial sparse block-Cholesky (LL^T over 3x3 blocks) with separated
//! symbolic and numeric phases, plus a geometric nested-dissection ordering
//! for the tensor-grid control point layouts this crate produces.
//!
//! The up-looking factorization computes one block row of L per step from
//! the elimination-tree reach of that row. The symbolic phase records the
//! reach lists and the full structure of L so numeric refactorizations
//! touch only values; symbolic analysis is reused whenever the matrix
//! pattern is unchanged.

use crate::assembly::BlockSparseMatrix;
use crate::error::{Result, SimError};

// 3x3 kernels on row-major [f64; 9] blocks.

/// Dense Cholesky of a symmetric 3x3 block; returns the lower factor.
fn chol3(d: &[f64; 9]) -> Option<[f64; 9]> {
    let l00s = d[0];
    if l00s <= 0.0 || !l00s.is_finite() {
        return None;
    }
    let l00 = l00s.sqrt();
    let l10 = d[3] / l00;
    let l20 = d[6] / l00;
    let l11s = d[4] - l10 * l10;
    if l11s <= 0.0 || !l11s.is_finite() {
        return None;
    }
    let l11 = l11s.sqrt();
    let l21 = (d[7] - l20 * l10) / l11;
    let l22s = d[8] - l20 * l20 - l21 * l21;
    if l22s <= 0.0 || !l22s.is_finite() {
        return None;
    }
    let l22 = l22s.sqrt();
    Some([l00, 0.0, 0.0, l10, l11, 0.0, l20, l21, l22])
}

/// X = B * L^{-T} for a lower-triangular L (per-row forward substitution).
fn solve_rt(l: &[f64; 9], b: &[f64; 9]) -> [f64; 9] {
    let mut x = [0.0; 9];
    for r in 0..3 {
        let b0 = b[3 * r];
        let b1 = b[3 * r + 1];
        let b2 = b[3 * r + 2];
        let x0 = b0 / l[0];
        let x1 = (b1 - l[3] * x0) / l[4];
        let x2 = (b2 - l[6] * x0 - l[7] * x1) / l[8];
        x[3 * r] = x0;
        x[3 * r + 1] = x1;
        x[3 * r + 2] = x2;
    }
    x
}

/// C -= A * B^T.
#[inline]
fn sub_mul_nt(c: &mut [f64; 9], a: &[f64; 9], b: &[f64; 9]) {
    for r in 0..3 {
        for s in 0..3 {
            c[3 * r + s] -=
                a[3 * r] * b[3 * s] + a[3 * r + 1] * b[3 * s + 1] + a[3 * r + 2] * b[3 * s + 2];
        }
    }
}

/// y -= A * x for 3-vectors.
#[inline]
fn sub_mul_vec(y: &mut [f64; 3], a: &[f64; 9], x: &[f64; 3]) {
    for r in 0..3 {
        y[r] -= a[3 * r] * x[0] + a[3 * r + 1] * x[1] + a[3 * r + 2] * x[2];
    }
}

/// y -= A^T * x for 3-vectors.
#[inline]
fn sub_mul_tvec(y: &mut [f64; 3], a: &[f64; 9], x: &[f64; 3]) {
    for r in 0..3 {
        y[r] -= a[r] * x[0] + a[3 + r] * x[1] + a[6 + r] * x[2];
    }
}

/// Forward substitution L x = b for one 3x3 lower block.
#[inline]
fn fwd3(l: &[f64; 9], b: &[f64; 3]) -> [f64; 3] {
    let x0 = b[0] / l[0];
    let x1 = (b[1] - l[3] * x0) / l[4];
    let x2 = (b[2] - l[6] * x0 - l[7] * x1) / l[8];
    [x0, x1, x2]
}

/// Backward substitution L^T x = b for one 3x3 lower block.
#[inline]
fn bwd3(l: &[f64; 9], b: &[f64; 3]) -> [f64; 3] {
    let x2 = b[2] / l[8];
    let x1 = (b[1] - l[7] * x2) / l[4];
    let x0 = (b[0] - l[3] * x1 - l[6] * x2) / l[0];
    [x0, x1, x2]
}

/// Block pattern of a permuted matrix, cached for value re-permutation.
#[derive(Debug, Clone, PartialEq)]
struct PermutedBlocks {
    dims: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    /// Source block index in the unpermuted matrix for each entry.
    src: Vec<usize>,
}

impl PermutedBlocks {
    fn build(m: &BlockSparseMatrix, perm: &[u32], iperm: &[u32]) -> Self {
        let dims = m.dims();
        let mut col_ptr = vec![0usize; dims + 1];
        for new_c in 0..dims {
            let old_c = perm[new_c] as usize;
            col_ptr[new_c + 1] = m.col_ptr()[old_c + 1] - m.col_ptr()[old_c];
        }
        for i in 0..dims {
            col_ptr[i + 1] += col_ptr[i];
        }
        let nnz = col_ptr[dims];
        let mut row_idx = vec![0u32; nnz];
        let mut src = vec![0usize; nnz];
        let mut scratch: Vec<(u32, usize)> = Vec::new();
        for new_c in 0..dims {
            let old_c = perm[new_c] as usize;
            scratch.clear();
            for p in m.col_ptr()[old_c]..m.col_ptr()[old_c + 1] {
                scratch.push((iperm[m.row_idx()[p] as usize], p));
            }
            scratch.sort_unstable_by_key(|(r, _)| *r);
            let base = col_ptr[new_c];
            for (k, &(r, p)) in scratch.iter().enumerate() {
                row_idx[base + k] = r;
                src[base + k] = p;
            }
        }
        Self {
            dims,
            col_ptr,
            row_idx,
            src,
        }
    }
}

/// Fill-reducing permutation over control point (block) indices;
/// `perm[new] = old`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ordering {
    pub perm: Vec<u32>,
    pub iperm: Vec<u32>,
}

impl Ordering {
    pub fn identity(dims: usize) -> Self {
        let perm: Vec<u32> = (0..dims as u32).collect();
        Self {
            iperm: perm.clone(),
            perm,
        }
    }

    /// Geometric nested dissection over one or more control grids laid out
    /// consecutively. `grids[k] = (nu, nv)` in the same order as the global
    /// control point numbering.
    pub fn nested_dissection(grids: &[(usize, usize)]) -> Self {
        // Quadratic B-spline stencils couple control points up to two grid
        // steps apart, so separators must be two cells wide to decouple the
        // halves.
        const SEP: usize = 2;
        fn recurse(
            out: &mut Vec<u32>,
            offset: u32,
            nv: usize,
            u: (usize, usize),
            v: (usize, usize),
        ) {
            let du = u.1 - u.0;
            let dv = v.1 - v.0;
            if du * dv <= 48 || du.min(dv) <= SEP + 1 {
                for iu in u.0..u.1 {
                    for iv in v.0..v.1 {
                        out.push(offset + (iu * nv + iv) as u32);
                    }
                }
                return;
            }
            if du >= dv {
                let mid = u.0 + du / 2;
                recurse(out, offset, nv, (u.0, mid), v);
                recurse(out, offset, nv, (mid + SEP, u.1), v);
                for iu in mid..mid + SEP {
                    for iv in v.0..v.1 {
                        out.push(offset + (iu * nv + iv) as u32);
                    }
                }
            } else {
                let mid = v.0 + dv / 2;
                recurse(out, offset, nv, u, (v.0, mid));
                recurse(out, offset, nv, u, (mid + SEP, v.1));
                for iu in u.0..u.1 {
                    for iv in mid..mid + SEP {
                        out.push(offset + (iu * nv + iv) as u32);
                    }
                }
            }
        }
        let mut perm = Vec::new();
        let mut offset = 0u32;
        for &(nu, nv) in grids {
            recurse(&mut perm, offset, nv, (0, nu), (0, nv));
            offset += (nu * nv) as u32;
        }
        let mut iperm = vec![0u32; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old as usize] = new as u32;
        }
        Self { perm, iperm }
    }
}

/// Elimination tree, reach lists, and the full block structure of L.
#[derive(Debug, Clone)]
pub struct CholeskySymbolic {
    dims: usize,
    /// Column pointers of L; the diagonal block is first per column.
    l_col_ptr: Vec<usize>,
    l_row_idx: Vec<u32>,
    /// Concatenated per-row reach lists in elimination order.
    reach_ptr: Vec<usize>,
    reach: Vec<u32>,
    /// Pattern of the analyzed (permuted) matrix, for reuse checks.
    a_col_ptr: Vec<usize>,
    a_row_idx: Vec<u32>,
}

impl CholeskySymbolic {
    pub fn block_nnz(&self) -> usize {
        self.l_row_idx.len()
    }

    fn matches(&self, p: &PermutedBlocks) -> bool {
        self.dims == p.dims && self.a_col_ptr == p.col_ptr && self.a_row_idx == p.row_idx
    }

    fn analyze(a: &PermutedBlocks) -> Self {
        let n = a.dims;
        let mut parent = vec![-1i64; n];
        let mut ancestor = vec![-1i64; n];
        for k in 0..n {
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                let mut i = a.row_idx[p] as i64;
                if i as usize >= k {
                    continue;
                }
                while i != -1 && (i as usize) < k {
                    let next = ancestor[i as usize];
                    ancestor[i as usize] = k as i64;
                    if next == -1 {
                        parent[i as usize] = k as i64;
                        break;
                    }
                    i = next;
                }
            }
        }

        // Reach of each block row k in an order where etree descendants
        // precede ancestors.
        let mut mark = vec![u32::MAX; n];
        let mut path: Vec<u32> = Vec::with_capacity(64);
        let mut reach_ptr = Vec::with_capacity(n + 1);
        let mut reach: Vec<u32> = Vec::new();
        let mut col_count = vec![1usize; n];
        for k in 0..n {
            reach_ptr.push(reach.len());
            let epoch = k as u32;
            mark[k] = epoch;
            let start = reach.len();
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                let mut i = a.row_idx[p] as usize;
                if i >= k {
                    continue;
                }
                path.clear();
                while mark[i] != epoch {
                    path.push(i as u32);
                    mark[i] = epoch;
                    let pa = parent[i];
                    if pa == -1 {
                        break;
                    }
                    i = pa as usize;
                }
                // Prepend this path so descendants stay before ancestors.
                for (off, &x) in path.iter().enumerate() {
                    reach.insert(start + off, x);
                }
            }
            for &j in &reach[start..] {
                col_count[j as usize] += 1;
            }
        }
        reach_ptr.push(reach.len());

        let mut l_col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            l_col_ptr[j + 1] = l_col_ptr[j] + col_count[j];
        }
        let mut l_row_idx = vec![0u32; l_col_ptr[n]];
        let mut cursor: Vec<usize> = l_col_ptr[..n].to_vec();
        for (j, cur) in cursor.iter_mut().enumerate() {
            l_row_idx[*cur] = j as u32;
            *cur += 1;
        }
        for k in 0..n {
            for p in reach_ptr[k]..reach_ptr[k + 1] {
                let j = reach[p] as usize;
                l_row_idx[cursor[j]] = k as u32;
                cursor[j] += 1;
            }
        }

        Self {
            dims: n,
            l_col_ptr,
            l_row_idx,
            reach_ptr,
            reach,
            a_col_ptr: a.col_ptr.clone(),
            a_row_idx: a.row_idx.clone(),
        }
    }
}

/// Numeric block-Cholesky factor aligned with a `CholeskySymbolic`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    values: Vec<[f64; 9]>,
}

impl CholeskyFactor {
    fn factor(
        values: &[[f64; 9]],
        pat: &PermutedBlocks,
        sym: &CholeskySymbolic,
        boost: f64,
    ) -> Result<Self> {
        let n = sym.dims;
        let mut lx = vec![[0.0f64; 9]; sym.l_row_idx.len()];
        let mut x = vec![[0.0f64; 9]; n];
        let mut cursor: Vec<usize> = (0..n).map(|j| sym.l_col_ptr[j] + 1).collect();
        for k in 0..n {
            for p in pat.col_ptr[k]..pat.col_ptr[k + 1] {
                let i = pat.row_idx[p] as usize;
                // Row k of A from column k: A(k, i) = A(i, k)^T.
                if i < k {
                    let b = &values[pat.src[p]];
                    let mut bt = [0.0; 9];
                    for r in 0..3 {
                        for c in 0..3 {
                            bt[3 * c + r] = b[3 * r + c];
                        }
                    }
                    x[i] = bt;
                } else if i == k {
                    x[i] = values[pat.src[p]];
                }
            }
            let mut d = x[k];
            if boost != 0.0 {
                d[0] += boost;
                d[4] += boost;
                d[8] += boost;
            }
            x[k] = [0.0; 9];
            for p in sym.reach_ptr[k]..sym.reach_ptr[k + 1] {
                let j = sym.reach[p] as usize;
                let ljj = &lx[sym.l_col_ptr[j]];
                let lkj = solve_rt(ljj, &x[j]);
                x[j] = [0.0; 9];
                for q in sym.l_col_ptr[j] + 1..cursor[j] {
                    let i = sym.l_row_idx[q] as usize;
                    let lij = lx[q];
                    sub_mul_nt(&mut x[i], &lkj, &lij);
                }
                sub_mul_nt(&mut d, &lkj, &lkj);
                debug_assert_eq!(sym.l_row_idx[cursor[j]], k as u32);
                lx[cursor[j]] = lkj;
                cursor[j] += 1;
            }
            match chol3(&d) {
                Some(l) => lx[sym.l_col_ptr[k]] = l,
                None => {
                    return Err(SimError::Factorization(format!(
                        "non-positive pivot in block row {k}"
                    )))
                }
            }
        }
        Ok(Self { values: lx })
    }

    /// Solve `L L^T x = b` in place over per-block 3-vectors.
    fn solve_in_place(&self, sym: &CholeskySymbolic, b: &mut [[f64; 3]]) {
        let n = sym.dims;
        for j in 0..n {
            let zj = fwd3(&self.values[sym.l_col_ptr[j]], &b[j]);
            b[j] = zj;
            for p in sym.l_col_ptr[j] + 1..sym.l_col_ptr[j + 1] {
                let i = sym.l_row_idx[p] as usize;
                sub_mul_vec(&mut b[i], &self.values[p], &zj);
            }
        }
        for j in (0..n).rev() {
            let mut acc = b[j];
            for p in sym.l_col_ptr[j] + 1..sym.l_col_ptr[j + 1] {
                let i = sym.l_row_idx[p] as usize;
                sub_mul_tvec(&mut acc, &self.values[p], &b[i]);
            }
            b[j] = bwd3(&self.values[sym.l_col_ptr[j]], &acc);
        }
    }
}

/// Permuted analyze/factor/solve with symbolic reuse and a single
/// diagonal-boost retry on breakdown.
#[derive(Debug, Default)]
pub struct SpdSolver {
    ordering: Option<Ordering>,
    symbolic: Option<CholeskySymbolic>,
    factor: Option<CholeskyFactor>,
    pattern: Option<PermutedBlocks>,
    /// Numeric factorizations that reused cached symbolic analysis.
    pub symbolic_reuses: usize,
}

impl SpdSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_ordering(&mut self, ordering: Ordering) {
        self.ordering = Some(ordering);
        self.symbolic = None;
        self.factor = None;
        self.pattern = None;
    }

    /// Factor `m`, reusing cached symbolic analysis when the pattern is
    /// unchanged. On breakdown retries once with `1e-8`-scaled diagonal
    /// boosting before giving up.
    pub fn factor(&mut self, m: &BlockSparseMatrix) -> Result<()> {
        let ordering = self
            .ordering
            .get_or_insert_with(|| Ordering::identity(m.dims()));
        if ordering.perm.len() != m.dims() {
            return Err(SimError::Factorization(format!(
                "ordering dimension {} does not match matrix {}",
                ordering.perm.len(),
                m.dims()
            )));
        }
        let pat = PermutedBlocks::build(m, &ordering.perm, &ordering.iperm);
        let reuse = self
            .symbolic
            .as_ref()
            .map(|s| s.matches(&pat))
            .unwrap_or(false);
        if !reuse {
            self.symbolic = Some(CholeskySymbolic::analyze(&pat));
        } else {
            self.symbolic_reuses += 1;
        }
        let sym = self.symbolic.as_ref().unwrap();
        match CholeskyFactor::factor(m.data(), &pat, sym, 0.0) {
            Ok(f) => {
                self.factor = Some(f);
                self.pattern = Some(pat);
                Ok(())
            }
            Err(first) => {
                log::warn!("factorization breakdown ({first}); retrying with diagonal boost");
                let mut max_diag = 0.0f64;
                for c in 0..m.dims() {
                    if let Some(b) = m.block(c as u32, c as u32) {
                        max_diag = max_diag.max(b[0].abs().max(b[4].abs()).max(b[8].abs()));
                    }
                }
                let boost = 1e-8 * max_diag.max(1.0);
                let f = CholeskyFactor::factor(m.data(), &pat, sym, boost).map_err(|second| {
                    SimError::Factorization(format!(
                        "factorization failed after diagonal boost: {second} (initial: {first})"
                    ))
                })?;
                self.factor = Some(f);
                self.pattern = Some(pat);
                Ok(())
            }
        }
    }

    /// Solve with the last factorization; `b` is the stacked scalar
    /// right-hand side.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let (sym, factor, ordering) = match (&self.symbolic, &self.factor, &self.ordering) {
            (Some(s), Some(f), Some(o)) => (s, f, o),
            _ => {
                return Err(SimError::Factorization(
                    "solve called before factor".into(),
                ))
            }
        };
        let n = sym.dims;
        debug_assert_eq!(b.len(), 3 * n);
        let mut pb = vec![[0.0f64; 3]; n];
        for new in 0..n {
            let old = ordering.perm[new] as usize;
            pb[new] = [b[3 * old], b[3 * old + 1], b[3 * old + 2]];
        }
        factor.solve_in_place(sym, &mut pb);
        let mut out = vec![0.0; 3 * n];
        for new in 0..n {
            let old = ordering.perm[new] as usize;
            out[3 * old] = pb[new][0];
            out[3 * old + 1] = pb[new][1];
            out[3 * old + 2] = pb[new][2];
        }
        Ok(out)
    }

    pub fn factor_nnz(&self) -> usize {
        self.symbolic.as_ref().map(|s| 9 * s.block_nnz()).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    fn random_spd_blocks(dims: usize, density: f64, seed: u64) -> BlockSparseMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut triplets = Vec::new();
        for r in 0..dims as u32 {
            for c in 0..=r {
                if r == c || rng.random_bool(density) {
                    let mut b = [0.0; 9];
                    for v in b.iter_mut() {
                        *v = rng.random_range(-0.4..0.4);
                    }
                    if r == c {
                        for k in 0..3 {
                            b[4 * k] += 4.0 + dims as f64;
                        }
                        for i in 0..3 {
                            for j in 0..i {
                                let m = 0.5 * (b[3 * i + j] + b[3 * j + i]);
                                b[3 * i + j] = m;
                                b[3 * j + i] = m;
                            }
                        }
                        triplets.push((r, c, b));
                    } else {
                        triplets.push((r, c, b));
                        let mut bt = [0.0; 9];
                        for i in 0..3 {
                            for j in 0..3 {
                                bt[3 * j + i] = b[3 * i + j];
                            }
                        }
                        triplets.push((c, r, bt));
                    }
                }
            }
        }
        BlockSparseMatrix::from_triplets(dims, &triplets)
    }

    #[test]
    fn identity_solve() {
        let mut t = Vec::new();
        for i in 0..4u32 {
            t.push((i, i, [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
        }
        let m = BlockSparseMatrix::from_triplets(4, &t);
        let mut solver = SpdSolver::new();
        solver.factor(&m).unwrap();
        let b: Vec<f64> = (0..12).map(|i| i as f64 - 3.0).collect();
        let x = solver.solve(&b).unwrap();
        for i in 0..12 {
            assert_abs_diff_eq!(x[i], b[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn matches_dense_oracle() {
        // Random SPD 30x30 scalar (10 blocks) against nalgebra's dense
        // Cholesky.
        let m = random_spd_blocks(10, 0.4, 3);
        let dense = m.to_dense();
        let chol = dense.clone().cholesky().expect("dense SPD");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let b: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xd = chol.solve(&DMatrix::from_column_slice(30, 1, &b));

        let mut solver = SpdSolver::new();
        solver.factor(&m).unwrap();
        let x = solver.solve(&b).unwrap();
        for i in 0..30 {
            assert_abs_diff_eq!(x[i], xd[(i, 0)], epsilon = 1e-10);
        }
    }

    #[test]
    fn residual_contract_with_nested_dissection() {
        let m = random_spd_blocks(25, 0.15, 9);
        let mut solver = SpdSolver::new();
        solver.set_ordering(Ordering::nested_dissection(&[(5, 5)]));
        solver.factor(&m).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let b: Vec<f64> = (0..75).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = solver.solve(&b).unwrap();
        let xv: Vec<nalgebra::Vector3<f64>> = (0..25)
            .map(|i| nalgebra::Vector3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2]))
            .collect();
        let ax = m.matvec(&xv);
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for i in 0..25 {
            for r in 0..3 {
                num += (ax[i][r] - b[3 * i + r]).powi(2);
                den += b[3 * i + r].powi(2);
            }
        }
        assert!((num / den).sqrt() < 1e-10);
    }

    #[test]
    fn symbolic_reuse_and_pattern_change() {
        let m1 = random_spd_blocks(12, 0.3, 21);
        let mut m2 = m1.clone();
        for b in m2.data_mut().iter_mut() {
            for v in b.iter_mut() {
                *v *= 1.5;
            }
        }
        let mut solver = SpdSolver::new();
        solver.factor(&m1).unwrap();
        assert_eq!(solver.symbolic_reuses, 0);
        solver.factor(&m2).unwrap();
        assert_eq!(solver.symbolic_reuses, 1);
        let m3 = random_spd_blocks(12, 0.5, 22);
        solver.factor(&m3).unwrap();
        assert_eq!(solver.symbolic_reuses, 1); // different pattern, no reuse
    }

    #[test]
    fn indefinite_matrix_reports_failure() {
        let t = vec![(0u32, 0u32, {
            let mut b = [0.0; 9];
            b[0] = -1.0;
            b[4] = 1.0;
            b[8] = 1.0;
            b
        })];
        let m = BlockSparseMatrix::from_triplets(1, &t);
        let mut solver = SpdSolver::new();
        assert!(solver.factor(&m).is_err());
    }

    #[test]
    fn diagonal_boost_recovers_semidefinite() {
        // Positive semidefinite with an exactly zero pivot: boost rescues.
        let t = vec![(0u32, 0u32, {
            let mut b = [0.0; 9];
            b[0] = 1.0;
            b[4] = 1.0;
            b
        })];
        let m = BlockSparseMatrix::from_triplets(1, &t);
        let mut solver = SpdSolver::new();
        solver.factor(&m).unwrap();
    }

    #[test]
    fn nested_dissection_is_a_permutation() {
        let ord = Ordering::nested_dissection(&[(9, 7), (4, 5)]);
        let n = 9 * 7 + 4 * 5;
        assert_eq!(ord.perm.len(), n);
        let mut seen = vec![false; n];
        for &p in &ord.perm {
            assert!(!seen[p as usize]);
            seen[p as usize] = true;
        }
        for (new, &old) in ord.perm.iter().enumerate() {
            assert_eq!(ord.iperm[old as usize] as usize, new);
        }
    }
}
