//! Block-CSC matrix construction: precomputed elasticity sparsity, parallel
//! per-block accumulation from quadrature points, and the two-stage contact
//! Hessian conversion with spatial-block partitioning.
//!
//! Elasticity assembly writes each 3x3 block from exactly one worker, in
//! quadrature-point order, so the result is bit-identical across worker
//! counts. Contact conversion buckets work by spatial cell; per-cell
//! accumulation is sequential in sorted key order and cells merge in index
//! order, which keeps the output bit-identical whenever the cell layout is
//! fixed.

use std::collections::HashMap;

use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;

use crate::elasticity::LocalSystem;
use crate::error::{Result, SimError};

/// Symmetric 3x3-block compressed-sparse-column matrix. Blocks are stored
/// row-major; indices are sorted within each column and the pattern is
/// structurally symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparseMatrix {
    dims: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    data: Vec<[f64; 9]>,
}

impl BlockSparseMatrix {
    /// Empty square matrix over `dims` control points.
    pub fn empty(dims: usize) -> Self {
        Self {
            dims,
            col_ptr: vec![0; dims + 1],
            row_idx: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Build a zeroed skeleton from per-column sorted, deduplicated row
    /// index lists.
    pub fn from_pattern(dims: usize, columns: Vec<Vec<u32>>) -> Self {
        assert_eq!(columns.len(), dims);
        let mut col_ptr = Vec::with_capacity(dims + 1);
        col_ptr.push(0usize);
        let mut row_idx = Vec::new();
        for col in &columns {
            debug_assert!(col.windows(2).all(|w| w[0] < w[1]));
            row_idx.extend_from_slice(col);
            col_ptr.push(row_idx.len());
        }
        let data = vec![[0.0; 9]; row_idx.len()];
        Self {
            dims,
            col_ptr,
            row_idx,
            data,
        }
    }

    /// Build from block triplets, summing duplicates.
    pub fn from_triplets(dims: usize, triplets: &[(u32, u32, [f64; 9])]) -> Self {
        let mut map: HashMap<u64, [f64; 9]> = HashMap::new();
        for &(r, c, b) in triplets {
            let key = ((c as u64) << 32) | r as u64;
            let e = map.entry(key).or_insert([0.0; 9]);
            for k in 0..9 {
                e[k] += b[k];
            }
        }
        let mut entries: Vec<(u64, [f64; 9])> = map.into_iter().collect();
        entries.sort_unstable_by_key(|(k, _)| *k);
        let mut col_ptr = vec![0usize; dims + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len());
        for (key, b) in entries {
            let c = (key >> 32) as usize;
            col_ptr[c + 1] += 1;
            row_idx.push((key & 0xffff_ffff) as u32);
            data.push(b);
        }
        for c in 0..dims {
            col_ptr[c + 1] += col_ptr[c];
        }
        Self {
            dims,
            col_ptr,
            row_idx,
            data,
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn scalar_dim(&self) -> usize {
        3 * self.dims
    }

    pub fn block_count(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[u32] {
        &self.row_idx
    }

    pub fn data(&self) -> &[[f64; 9]] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [[f64; 9]] {
        &mut self.data
    }

    /// Storage index of block `(row, col)` if present.
    pub fn block_index(&self, row: u32, col: u32) -> Option<usize> {
        let lo = self.col_ptr[col as usize];
        let hi = self.col_ptr[col as usize + 1];
        self.row_idx[lo..hi]
            .binary_search(&row)
            .ok()
            .map(|k| lo + k)
    }

    pub fn block(&self, row: u32, col: u32) -> Option<&[f64; 9]> {
        self.block_index(row, col).map(|i| &self.data[i])
    }

    pub fn zero_data(&mut self) {
        for b in self.data.iter_mut() {
            *b = [0.0; 9];
        }
    }

    /// Same sparsity pattern (used to decide symbolic factorization reuse).
    pub fn same_pattern(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.col_ptr == other.col_ptr
            && self.row_idx == other.row_idx
    }

    /// y = A x with x, y as per-control-point 3-vectors.
    pub fn matvec(&self, x: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        assert_eq!(x.len(), self.dims);
        let mut y = vec![Vector3::zeros(); self.dims];
        for c in 0..self.dims {
            let xc = x[c];
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[p] as usize;
                let b = &self.data[p];
                y[r].x += b[0] * xc.x + b[1] * xc.y + b[2] * xc.z;
                y[r].y += b[3] * xc.x + b[4] * xc.y + b[5] * xc.z;
                y[r].z += b[6] * xc.x + b[7] * xc.y + b[8] * xc.z;
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.scalar_dim();
        let mut m = DMatrix::zeros(n, n);
        for c in 0..self.dims {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[p] as usize;
                let b = &self.data[p];
                for i in 0..3 {
                    for j in 0..3 {
                        m[(3 * r + i, 3 * c + j)] = b[3 * i + j];
                    }
                }
            }
        }
        m
    }

    /// Sum of two matrices over the union pattern.
    pub fn merged(&self, other: &Self) -> Self {
        assert_eq!(self.dims, other.dims);
        let mut columns: Vec<Vec<u32>> = Vec::with_capacity(self.dims);
        for c in 0..self.dims {
            let a = &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]];
            let b = &other.row_idx[other.col_ptr[c]..other.col_ptr[c + 1]];
            let mut merged = Vec::with_capacity(a.len() + b.len());
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < b.len() {
                let next = match (a.get(i), b.get(j)) {
                    (Some(&x), Some(&y)) if x == y => {
                        i += 1;
                        j += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        i += 1;
                        x
                    }
                    (Some(_), Some(&y)) => {
                        j += 1;
                        y
                    }
                    (Some(&x), None) => {
                        i += 1;
                        x
                    }
                    (None, Some(&y)) => {
                        j += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                merged.push(next);
            }
            columns.push(merged);
        }
        let mut out = Self::from_pattern(self.dims, columns);
        for src in [self, other] {
            for c in 0..self.dims {
                for p in src.col_ptr[c]..src.col_ptr[c + 1] {
                    let idx = out
                        .block_index(src.row_idx[p], c as u32)
                        .expect("union pattern contains both operands");
                    for k in 0..9 {
                        out.data[idx][k] += src.data[p][k];
                    }
                }
            }
        }
        out
    }

    /// Split into (diagonal blocks, off-diagonal blocks) keeping patterns.
    pub fn split_diagonal(&self) -> (Self, Self) {
        let mut diag_cols: Vec<Vec<u32>> = Vec::with_capacity(self.dims);
        let mut off_cols: Vec<Vec<u32>> = Vec::with_capacity(self.dims);
        for c in 0..self.dims {
            let mut d = Vec::new();
            let mut o = Vec::new();
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                if self.row_idx[p] as usize == c {
                    d.push(self.row_idx[p]);
                } else {
                    o.push(self.row_idx[p]);
                }
            }
            diag_cols.push(d);
            off_cols.push(o);
        }
        let mut diag = Self::from_pattern(self.dims, diag_cols);
        let mut off = Self::from_pattern(self.dims, off_cols);
        for c in 0..self.dims {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[p];
                let tgt = if r as usize == c { &mut diag } else { &mut off };
                let idx = tgt.block_index(r, c as u32).unwrap();
                tgt.data[idx] = self.data[p];
            }
        }
        (diag, off)
    }

    /// Gershgorin data per scalar row: `(diagonal, radius)` where the
    /// radius is the absolute off-diagonal row sum. Uses value symmetry to
    /// read rows as columns.
    pub fn gershgorin_rows(&self) -> Vec<(f64, f64)> {
        let n = self.scalar_dim();
        let mut out = vec![(0.0, 0.0); n];
        for c in 0..self.dims {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[p] as usize;
                let b = &self.data[p];
                for j in 0..3 {
                    let col = 3 * c + j;
                    for i in 0..3 {
                        let v = b[3 * i + j];
                        if 3 * r + i == col {
                            out[col].0 += v;
                        } else {
                            out[col].1 += v.abs();
                        }
                    }
                }
            }
        }
        out
    }

    /// Matrix Market coordinate output of the scalar expansion.
    pub fn write_matrix_market<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        let mut nnz = 0usize;
        for b in &self.data {
            nnz += b.iter().filter(|v| **v != 0.0).count();
        }
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.scalar_dim(), self.scalar_dim(), nnz)?;
        for c in 0..self.dims {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[p] as usize;
                for i in 0..3 {
                    for j in 0..3 {
                        let v = self.data[p][3 * i + j];
                        if v != 0.0 {
                            writeln!(w, "{} {} {:.17e}", 3 * r + i + 1, 3 * c + j + 1, v)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Inverted index from the sparsity skeleton: for every control point the
/// quadrature points in its support, and for every stored block the shared
/// quadrature points with stencil slots.
#[derive(Debug, Clone)]
pub struct StencilMap {
    /// Per control point: `(quad point id, stencil slot)`.
    pub per_point: Vec<Vec<(u32, u16)>>,
    /// Aligned with the skeleton's block storage: shared quadrature points
    /// as `(quad point id, row slot, col slot)`.
    pub per_block: Vec<Vec<(u32, u16, u16)>>,
}

/// Elasticity sparsity skeleton plus inverted stencil index. The pattern
/// contains a block for every control-point pair sharing at least one
/// quadrature point, plus all diagonal blocks, and never changes during a
/// simulation.
pub fn precompute_sparsity(
    point_count: usize,
    stencils: &[&[u32]],
) -> (BlockSparseMatrix, StencilMap) {
    let mut per_point: Vec<Vec<(u32, u16)>> = vec![Vec::new(); point_count];
    for (q, stencil) in stencils.iter().enumerate() {
        for (slot, &a) in stencil.iter().enumerate() {
            per_point[a as usize].push((q as u32, slot as u16));
        }
    }

    // Pattern: union of stencil outer products plus the diagonal.
    let mut columns: Vec<Vec<u32>> = vec![Vec::new(); point_count];
    for stencil in stencils {
        for &col in stencil.iter() {
            columns[col as usize].extend_from_slice(stencil);
        }
    }
    for (c, col) in columns.iter_mut().enumerate() {
        col.push(c as u32);
        col.sort_unstable();
        col.dedup();
    }
    let skeleton = BlockSparseMatrix::from_pattern(point_count, columns);

    // Invert: for each stored block, the quadrature points shared by its
    // row and column control points.
    let mut per_block: Vec<Vec<(u32, u16, u16)>> = vec![Vec::new(); skeleton.block_count()];
    for c in 0..point_count {
        for p in skeleton.col_ptr[c]..skeleton.col_ptr[c + 1] {
            let r = skeleton.row_idx[p] as usize;
            // Merge the sorted per-point lists on quad point id.
            let (la, lb) = (&per_point[r], &per_point[c]);
            let (mut i, mut j) = (0, 0);
            while i < la.len() && j < lb.len() {
                match la[i].0.cmp(&lb[j].0) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        per_block[p].push((la[i].0, la[i].1, lb[j].1));
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
    }
    (
        skeleton,
        StencilMap {
            per_point,
            per_block,
        },
    )
}

/// Accumulate local systems into the skeleton pattern. Each block is
/// written by exactly one worker, summing shared quadrature points in id
/// order; rows and columns of pinned control points stay zero.
pub fn assemble_elasticity(
    skeleton: &BlockSparseMatrix,
    map: &StencilMap,
    locals: &[LocalSystem],
    pinned: &[bool],
) -> Result<BlockSparseMatrix> {
    for ls in locals {
        for &a in &ls.stencil {
            if a as usize >= skeleton.dims {
                return Err(SimError::Indexing(format!(
                    "local system references control point {a} outside skeleton"
                )));
            }
        }
    }
    let mut out = skeleton.clone();
    out.zero_data();
    let col_of: Vec<u32> = {
        let mut v = vec![0u32; skeleton.block_count()];
        for c in 0..skeleton.dims {
            for p in skeleton.col_ptr[c]..skeleton.col_ptr[c + 1] {
                v[p] = c as u32;
            }
        }
        v
    };
    out.data
        .par_iter_mut()
        .enumerate()
        .for_each(|(p, block)| {
            let r = skeleton.row_idx[p] as usize;
            let c = col_of[p] as usize;
            if pinned[r] || pinned[c] {
                return;
            }
            let mut acc = [0.0f64; 9];
            for &(q, sr, sc) in &map.per_block[p] {
                let h = &locals[q as usize].hess;
                let (br, bc) = (3 * sr as usize, 3 * sc as usize);
                for i in 0..3 {
                    for j in 0..3 {
                        acc[3 * i + j] += h[(br + i, bc + j)];
                    }
                }
            }
            *block = acc;
        });
    Ok(out)
}

/// Accumulate local gradients into a global gradient, skipping pinned
/// control points. Sequential in quadrature-point order.
pub fn accumulate_gradient(
    locals: &[LocalSystem],
    pinned: &[bool],
    grad: &mut [Vector3<f64>],
) {
    for ls in locals {
        for (s, &a) in ls.stencil.iter().enumerate() {
            if !pinned[a as usize] {
                grad[a as usize] += ls.grad[s];
            }
        }
    }
}

/// Local contact energy derivatives on embedded-mesh vertices, ready for
/// conversion to control-point space.
#[derive(Debug, Clone)]
pub struct VertexLocal {
    /// Global vertex ids; `hess` is `(3 * verts.len())^2`, vertex-major.
    pub verts: Vec<u32>,
    pub hess: DMatrix<f64>,
}

/// Uniform spatial cells over the AABB of the current geometry, spanning
/// the two longest axes.
#[derive(Debug, Clone)]
pub struct SpatialBlocks {
    origin: Vector3<f64>,
    inv_cell: [f64; 2],
    axes: [usize; 2],
    cells: [usize; 2],
}

impl SpatialBlocks {
    /// Partition the bounding box of `positions` into roughly `cell_count`
    /// cells along its two longest axes.
    pub fn from_points(positions: &[Vector3<f64>], cell_count: usize) -> Self {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if positions.is_empty() {
            lo = Vector3::zeros();
            hi = Vector3::repeat(1.0);
        }
        let extent = hi - lo;
        // Two longest axes.
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| extent[b].partial_cmp(&extent[a]).unwrap());
        let axes = [order[0].min(order[1]), order[0].max(order[1])];
        let per_axis = (cell_count as f64).sqrt().round().max(1.0) as usize;
        let cells = [per_axis, per_axis];
        let inv_cell = [
            cells[0] as f64 / extent[axes[0]].max(1e-12),
            cells[1] as f64 / extent[axes[1]].max(1e-12),
        ];
        Self {
            origin: lo,
            inv_cell,
            axes,
            cells,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn cell_of(&self, p: &Vector3<f64>) -> usize {
        let mut idx = [0usize; 2];
        for k in 0..2 {
            let rel = (p[self.axes[k]] - self.origin[self.axes[k]]) * self.inv_cell[k];
            idx[k] = (rel.floor().max(0.0) as usize).min(self.cells[k] - 1);
        }
        idx[0] * self.cells[1] + idx[1]
    }
}

/// Counters from the contact conversion; cross-cell merges happen only for
/// keys spanning cell boundaries.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConversionStats {
    pub vertex_stage_merges: usize,
    pub control_stage_merges: usize,
}

type BlockMap = HashMap<u64, [f64; 9]>;

fn pack(a: u32, b: u32) -> u64 {
    ((a as u64) << 32) | b as u64
}

fn add_block(map: &mut BlockMap, key: u64, b: &[f64; 9]) {
    let e = map.entry(key).or_insert([0.0; 9]);
    for k in 0..9 {
        e[k] += b[k];
    }
}

/// Merge per-cell maps in cell order, counting keys seen in more than one
/// cell.
fn merge_cell_maps(cell_maps: Vec<BlockMap>, merges: &mut usize) -> Vec<(u64, [f64; 9])> {
    let mut merged: BlockMap = HashMap::new();
    for map in cell_maps {
        let mut entries: Vec<(u64, [f64; 9])> = map.into_iter().collect();
        entries.sort_unstable_by_key(|(k, _)| *k);
        for (key, b) in entries {
            if let Some(e) = merged.get_mut(&key) {
                *merges += 1;
                for k in 0..9 {
                    e[k] += b[k];
                }
            } else {
                merged.insert(key, b);
            }
        }
    }
    let mut out: Vec<(u64, [f64; 9])> = merged.into_iter().collect();
    out.sort_unstable_by_key(|(k, _)| *k);
    out
}

/// Two-stage conversion of vertex-space contact Hessians to a control-point
/// block-CSC matrix.
///
/// Stage one buckets contact locals into spatial cells by their lowest
/// vertex id and accumulates vertex-pair blocks per cell; stage two buckets
/// the vertex-pair blocks the same way and distributes each through the
/// interpolation weights `w = c_i^a * c_j^b`, skipping zero weights and
/// pinned control points. The final CSC emission sorts indices.
pub fn convert_contact_hessian(
    locals: &[VertexLocal],
    vertex_positions: &[Vector3<f64>],
    weights: &[Vec<(u32, f64)>],
    blocks: &SpatialBlocks,
    point_count: usize,
    pinned: &[bool],
) -> Result<(BlockSparseMatrix, ConversionStats)> {
    let mut stats = ConversionStats::default();
    if locals.is_empty() {
        return Ok((BlockSparseMatrix::empty(point_count), stats));
    }

    // Stage one: vertex-pair blocks per spatial cell.
    let cell_of_local: Vec<usize> = locals
        .par_iter()
        .map(|l| {
            let v = *l.verts.iter().min().expect("contact local has vertices");
            blocks.cell_of(&vertex_positions[v as usize])
        })
        .collect();
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); blocks.cell_count()];
    for (i, &cell) in cell_of_local.iter().enumerate() {
        buckets[cell].push(i as u32);
    }
    let cell_maps: Vec<BlockMap> = buckets
        .par_iter()
        .map(|bucket| {
            let mut map = BlockMap::new();
            for &li in bucket {
                let l = &locals[li as usize];
                let k = l.verts.len();
                for (sa, &va) in l.verts.iter().enumerate() {
                    for (sb, &vb) in l.verts.iter().enumerate() {
                        let mut b = [0.0f64; 9];
                        for i in 0..3 {
                            for j in 0..3 {
                                b[3 * i + j] = l.hess[(3 * sa + i, 3 * sb + j)];
                            }
                        }
                        debug_assert!(sa < k && sb < k);
                        add_block(&mut map, pack(va, vb), &b);
                    }
                }
            }
            map
        })
        .collect();
    let vertex_blocks = merge_cell_maps(cell_maps, &mut stats.vertex_stage_merges);

    // Stage two: bucket vertex-pair blocks by the row vertex's cell and
    // distribute through the interpolation weights.
    let mut pair_buckets: Vec<Vec<u32>> = vec![Vec::new(); blocks.cell_count()];
    for (i, (key, _)) in vertex_blocks.iter().enumerate() {
        let va = (key >> 32) as u32;
        pair_buckets[blocks.cell_of(&vertex_positions[va as usize])].push(i as u32);
    }
    let cp_maps: Vec<BlockMap> = pair_buckets
        .par_iter()
        .map(|bucket| {
            let mut map = BlockMap::new();
            for &bi in bucket {
                let (key, vb_block) = &vertex_blocks[bi as usize];
                let va = (key >> 32) as u32;
                let vb = (key & 0xffff_ffff) as u32;
                for &(ci, wi) in &weights[va as usize] {
                    if wi == 0.0 || pinned[ci as usize] {
                        continue;
                    }
                    for &(cj, wj) in &weights[vb as usize] {
                        if wj == 0.0 || pinned[cj as usize] {
                            continue;
                        }
                        let w = wi * wj;
                        let mut b = [0.0f64; 9];
                        for k in 0..9 {
                            b[k] = w * vb_block[k];
                        }
                        add_block(&mut map, pack(ci, cj), &b);
                    }
                }
            }
            map
        })
        .collect();
    let cp_blocks = merge_cell_maps(cp_maps, &mut stats.control_stage_merges);

    // Emit CSC with sorted indices. Keys sort as (row, col); regroup by
    // column.
    let mut triplets: Vec<(u32, u32, [f64; 9])> = Vec::with_capacity(cp_blocks.len());
    for (key, b) in cp_blocks {
        let r = (key >> 32) as u32;
        let c = (key & 0xffff_ffff) as u32;
        if r as usize >= point_count || c as usize >= point_count {
            return Err(SimError::Indexing(format!(
                "contact weight references control point ({r}, {c}) outside 0..{point_count}"
            )));
        }
        triplets.push((r, c, b));
    }
    Ok((
        BlockSparseMatrix::from_triplets(point_count, &triplets),
        stats,
    ))
}

/// Add `m / dt^2` to the diagonal of every diagonal block; pinned control
/// points become identity rows/columns (their off-diagonal blocks are
/// already zero by assembly).
pub fn add_diagonal(
    matrix: &BlockSparseMatrix,
    lumped: &[f64],
    dt: f64,
    pinned: &[bool],
) -> BlockSparseMatrix {
    // Ensure the diagonal exists even for empty columns.
    let mut columns: Vec<Vec<u32>> = Vec::with_capacity(matrix.dims);
    for c in 0..matrix.dims {
        let mut col: Vec<u32> =
            matrix.row_idx[matrix.col_ptr[c]..matrix.col_ptr[c + 1]].to_vec();
        if col.binary_search(&(c as u32)).is_err() {
            col.push(c as u32);
            col.sort_unstable();
        }
        columns.push(col);
    }
    let mut out = BlockSparseMatrix::from_pattern(matrix.dims, columns);
    for c in 0..matrix.dims {
        for p in matrix.col_ptr[c]..matrix.col_ptr[c + 1] {
            let idx = out.block_index(matrix.row_idx[p], c as u32).unwrap();
            out.data[idx] = matrix.data[p];
        }
    }
    for c in 0..matrix.dims {
        let idx = out.block_index(c as u32, c as u32).unwrap();
        if pinned[c] {
            out.data[idx] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        } else {
            let add = lumped[c] / (dt * dt);
            out.data[idx][0] += add;
            out.data[idx][4] += add;
            out.data[idx][8] += add;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn random_local(stencil: Vec<u32>, rng: &mut impl Rng) -> LocalSystem {
        let k = stencil.len();
        let mut h = DMatrix::<f64>::zeros(3 * k, 3 * k);
        for i in 0..3 * k {
            for j in 0..=i {
                let v = rng.random_range(-1.0..1.0);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let grad = (0..k)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        LocalSystem {
            stencil,
            grad,
            hess: h,
        }
    }

    fn dense_oracle(dims: usize, locals: &[LocalSystem], pinned: &[bool]) -> DMatrix<f64> {
        let mut d = DMatrix::<f64>::zeros(3 * dims, 3 * dims);
        for ls in locals {
            for (s, &a) in ls.stencil.iter().enumerate() {
                for (t, &b) in ls.stencil.iter().enumerate() {
                    if pinned[a as usize] || pinned[b as usize] {
                        continue;
                    }
                    for i in 0..3 {
                        for j in 0..3 {
                            d[(3 * a as usize + i, 3 * b as usize + j)] +=
                                ls.hess[(3 * s + i, 3 * t + j)];
                        }
                    }
                }
            }
        }
        d
    }

    #[test]
    fn sparsity_pattern_is_stencil_union_and_symmetric() {
        let stencils: Vec<Vec<u32>> = vec![vec![0, 1, 4], vec![1, 2], vec![4, 5, 6, 7]];
        let refs: Vec<&[u32]> = stencils.iter().map(|s| s.as_slice()).collect();
        let (skel, map) = precompute_sparsity(8, &refs);
        // Brute-force union of outer products plus diagonal.
        let mut expect = std::collections::HashSet::new();
        for s in &stencils {
            for &a in s {
                for &b in s {
                    expect.insert((a, b));
                }
            }
        }
        for d in 0..8u32 {
            expect.insert((d, d));
        }
        let mut got = std::collections::HashSet::new();
        for c in 0..8usize {
            for p in skel.col_ptr[c]..skel.col_ptr[c + 1] {
                got.insert((skel.row_idx[p], c as u32));
            }
        }
        assert_eq!(got, expect);
        for &(a, b) in &got {
            assert!(got.contains(&(b, a)));
        }
        assert_eq!(map.per_point[1], vec![(0, 1), (1, 0)]);
        assert_eq!(map.per_block.len(), skel.block_count());
    }

    #[test]
    fn single_interior_bending_point_pattern() {
        // One quadrature point's pattern is exactly the outer product of
        // its stencil (plus untouched diagonals).
        let stencil: Vec<u32> = vec![3, 4, 5, 8, 9, 10, 13, 14];
        let refs: Vec<&[u32]> = vec![&stencil];
        let (skel, _) = precompute_sparsity(16, &refs);
        let k = stencil.len();
        let diag_outside = 16 - k;
        assert_eq!(skel.block_count(), k * k + diag_outside);
    }

    #[test]
    fn assemble_matches_triplet_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let dims = 12;
        let stencils: Vec<Vec<u32>> = (0..20)
            .map(|_| {
                let mut s: Vec<u32> = (0..dims as u32).collect();
                for i in (1..s.len()).rev() {
                    s.swap(i, rng.random_range(0..=i));
                }
                let k = rng.random_range(2..6);
                let mut s = s[..k].to_vec();
                s.sort_unstable();
                s
            })
            .collect();
        let refs: Vec<&[u32]> = stencils.iter().map(|s| s.as_slice()).collect();
        let (skel, map) = precompute_sparsity(dims, &refs);
        let locals: Vec<LocalSystem> = stencils
            .iter()
            .map(|s| random_local(s.clone(), &mut rng))
            .collect();
        let mut pinned = vec![false; dims];
        pinned[3] = true;
        let m = assemble_elasticity(&skel, &map, &locals, &pinned).unwrap();
        let oracle = dense_oracle(dims, &locals, &pinned);
        assert_abs_diff_eq!((m.to_dense() - &oracle).amax(), 0.0, epsilon = 1e-12);

        // Zero locals keep the pattern with zero data.
        let zero_locals: Vec<LocalSystem> = stencils
            .iter()
            .map(|s| LocalSystem {
                stencil: s.clone(),
                grad: vec![Vector3::zeros(); s.len()],
                hess: DMatrix::zeros(3 * s.len(), 3 * s.len()),
            })
            .collect();
        let z = assemble_elasticity(&skel, &map, &zero_locals, &pinned).unwrap();
        assert!(z.same_pattern(&skel));
        assert_abs_diff_eq!(z.to_dense().amax(), 0.0, epsilon = 0.0);

        // Mat-vec against the dense reconstruction.
        let x: Vec<Vector3<f64>> = (0..dims)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let y = m.matvec(&x);
        let mut xs = nalgebra::DVector::zeros(3 * dims);
        for i in 0..dims {
            for r in 0..3 {
                xs[3 * i + r] = x[i][r];
            }
        }
        let ys = oracle * xs;
        for i in 0..dims {
            for r in 0..3 {
                assert_abs_diff_eq!(y[i][r], ys[3 * i + r], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn local_outside_skeleton_is_an_error() {
        let stencils: Vec<Vec<u32>> = vec![vec![0, 1]];
        let refs: Vec<&[u32]> = stencils.iter().map(|s| s.as_slice()).collect();
        let (skel, map) = precompute_sparsity(2, &refs);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let bad = random_local(vec![0, 5], &mut rng);
        assert!(assemble_elasticity(&skel, &map, &[bad], &[false, false]).is_err());
    }

    fn vertex_oracle(
        locals: &[VertexLocal],
        weights: &[Vec<(u32, f64)>],
        dims: usize,
        pinned: &[bool],
    ) -> DMatrix<f64> {
        let mut d = DMatrix::<f64>::zeros(3 * dims, 3 * dims);
        for l in locals {
            for (sa, &va) in l.verts.iter().enumerate() {
                for (sb, &vb) in l.verts.iter().enumerate() {
                    for &(ci, wi) in &weights[va as usize] {
                        for &(cj, wj) in &weights[vb as usize] {
                            if pinned[ci as usize] || pinned[cj as usize] {
                                continue;
                            }
                            for i in 0..3 {
                                for j in 0..3 {
                                    d[(3 * ci as usize + i, 3 * cj as usize + j)] +=
                                        wi * wj * l.hess[(3 * sa + i, 3 * sb + j)];
                                }
                            }
                        }
                    }
                }
            }
        }
        d
    }

    #[test]
    fn contact_conversion_empty_and_single_pair() {
        let positions = vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)];
        let blocks = SpatialBlocks::from_points(&positions, 16);
        let weights = vec![vec![(0u32, 0.5), (1u32, 0.5)], vec![(1u32, 1.0)]];
        let pinned = vec![false; 3];
        let (m, _) =
            convert_contact_hessian(&[], &positions, &weights, &blocks, 3, &pinned).unwrap();
        assert_eq!(m.block_count(), 0);

        // Single vertex-plane style local on one vertex.
        let mut h = DMatrix::<f64>::zeros(3, 3);
        h[(2, 2)] = 2.0;
        let local = VertexLocal {
            verts: vec![0],
            hess: h,
        };
        let (m, _) = convert_contact_hessian(
            &[local.clone()],
            &positions,
            &weights,
            &blocks,
            3,
            &pinned,
        )
        .unwrap();
        // Outer-product weights: (0.5, 0.5) over control points {0, 1}.
        assert_eq!(m.block_count(), 4);
        assert_abs_diff_eq!(m.block(0, 0).unwrap()[8], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.block(0, 1).unwrap()[8], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.block(1, 1).unwrap()[8], 0.5, epsilon = 1e-15);
        let oracle = vertex_oracle(&[local], &weights, 3, &pinned);
        assert_abs_diff_eq!((m.to_dense() - oracle).amax(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn contact_conversion_matches_triplet_oracle_across_worker_counts() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let n_verts = 120usize;
        let dims = 40usize;
        let positions: Vec<Vector3<f64>> = (0..n_verts)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.2..0.2),
                )
            })
            .collect();
        let weights: Vec<Vec<(u32, f64)>> = (0..n_verts)
            .map(|_| {
                let k = rng.random_range(1..5);
                let mut ids: Vec<u32> = (0..dims as u32).collect();
                for i in (1..ids.len()).rev() {
                    ids.swap(i, rng.random_range(0..=i));
                }
                ids[..k]
                    .iter()
                    .map(|&c| (c, rng.random_range(0.05..1.0)))
                    .collect()
            })
            .collect();
        let locals: Vec<VertexLocal> = (0..600)
            .map(|_| {
                let k = rng.random_range(2..5);
                let mut verts = Vec::with_capacity(k);
                while verts.len() < k {
                    let v = rng.random_range(0..n_verts as u32);
                    if !verts.contains(&v) {
                        verts.push(v);
                    }
                }
                let mut h = DMatrix::<f64>::zeros(3 * k, 3 * k);
                for i in 0..3 * k {
                    for j in 0..=i {
                        let v = rng.random_range(-1.0..1.0);
                        h[(i, j)] = v;
                        h[(j, i)] = v;
                    }
                }
                VertexLocal { verts, hess: h }
            })
            .collect();
        let mut pinned = vec![false; dims];
        pinned[7] = true;
        let blocks = SpatialBlocks::from_points(&positions, 16);
        let oracle = vertex_oracle(&locals, &weights, dims, &pinned);

        let mut reference: Option<BlockSparseMatrix> = None;
        for workers in [1usize, 4, 8] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .unwrap();
            let (m, stats) = pool.install(|| {
                convert_contact_hessian(&locals, &positions, &weights, &blocks, dims, &pinned)
                    .unwrap()
            });
            assert_abs_diff_eq!((m.to_dense() - &oracle).amax(), 0.0, epsilon = 1e-12);
            let _ = stats;
            match &reference {
                None => reference = Some(m),
                Some(r) => assert_eq!(r, &m), // bit-identical across worker counts
            }
        }
    }

    #[test]
    fn pullback_block_symmetry() {
        // Symmetric vertex Hessian stays block-symmetric after conversion.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let positions: Vec<Vector3<f64>> = (0..10)
            .map(|i| Vector3::new(i as f64 * 0.1, 0.0, 0.0))
            .collect();
        let weights: Vec<Vec<(u32, f64)>> = (0..10)
            .map(|i| vec![((i % 5) as u32, 0.6), (((i + 1) % 5) as u32, 0.4)])
            .collect();
        let k = 4;
        let mut h = DMatrix::<f64>::zeros(3 * k, 3 * k);
        for i in 0..3 * k {
            for j in 0..=i {
                let v = rng.random_range(-1.0..1.0);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let locals = vec![VertexLocal {
            verts: vec![0, 2, 5, 7],
            hess: h,
        }];
        let blocks = SpatialBlocks::from_points(&positions, 4);
        let pinned = vec![false; 5];
        let (m, _) =
            convert_contact_hessian(&locals, &positions, &weights, &blocks, 5, &pinned).unwrap();
        let d = m.to_dense();
        assert_abs_diff_eq!((&d - d.transpose()).amax(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn add_diagonal_examples() {
        let dims = 4;
        let skel = BlockSparseMatrix::empty(dims);
        let lumped = vec![2.0, 3.0, 4.0, 5.0];
        let pinned = vec![false, false, true, false];
        let dt = 0.5;
        let m = add_diagonal(&skel, &lumped, dt, &pinned);
        // Pure diagonal matrix.
        assert_eq!(m.block_count(), dims);
        assert_abs_diff_eq!(m.block(0, 0).unwrap()[0], 2.0 / 0.25, epsilon = 1e-13);
        assert_abs_diff_eq!(m.block(2, 2).unwrap()[0], 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(m.block(2, 2).unwrap()[4], 1.0, epsilon = 0.0);
        let d = m.to_dense();
        assert_abs_diff_eq!((&d - d.transpose()).amax(), 0.0, epsilon = 0.0);
    }

    #[test]
    fn gershgorin_and_split() {
        let t = [
            (0u32, 0u32, {
                let mut b = [0.0; 9];
                b[0] = 4.0;
                b[4] = 4.0;
                b[8] = 4.0;
                b
            }),
            (1, 1, {
                let mut b = [0.0; 9];
                b[0] = 3.0;
                b[4] = 3.0;
                b[8] = 3.0;
                b
            }),
            (0, 1, {
                let mut b = [0.0; 9];
                b[1] = -1.0;
                b
            }),
            (1, 0, {
                let mut b = [0.0; 9];
                b[3] = -1.0;
                b
            }),
        ];
        let m = BlockSparseMatrix::from_triplets(2, &t);
        let rows = m.gershgorin_rows();
        assert_abs_diff_eq!(rows[0].0, 4.0, epsilon = 0.0);
        assert_abs_diff_eq!(rows[4].1, 1.0, epsilon = 0.0); // column 4 sees |-1|
        let (diag, off) = m.split_diagonal();
        assert_eq!(diag.block_count(), 2);
        assert_eq!(off.block_count(), 2);
        let merged = diag.merged(&off);
        assert_abs_diff_eq!((merged.to_dense() - m.to_dense()).amax(), 0.0, epsilon = 0.0);
    }
}
