//! Local feature aggregation: every point averages a linear projection of
//! `[f_j, p_center − p_j]` over the neighbors `j` with `‖p_j − p_center‖ < r`
//! (the point itself included).
//!
//! Three implementations with identical output:
//!
//! * [`lfa_traversal`] loops over centers and scans every point for each one.
//! * [`lfa_broadcast_mask`] materializes the dense `N×N` mask and the
//!   `N×N×(c_raw+3)` broadcast input tensor, then takes a masked mean.
//! * [`lfa_index_scatter`] enumerates the `(center, neighbor)` pairs once,
//!   gathers and projects them, and mean-reduces by center index.
//!
//! All three visit neighbors in ascending index order and share the distance
//! and projection kernels, so their outputs agree bit-for-bit.

use std::fmt;
use std::ops::Range;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::dist3;
use crate::nn::{BatchedLinear, LinearLayer, Matrix};
use crate::par;

/// Default cap on the broadcast tensor, 1 GiB.
pub const DEFAULT_MEM_CAP: u64 = 1 << 30;

/// Neighborhood radius used by the detector, meters.
pub const DEFAULT_RADIUS: f64 = 0.32;

/// Centers reduced per parallel task.
const ROW_BLOCK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LfaMethod {
    Traversal,
    BroadcastMask,
    IndexScatter,
}

impl LfaMethod {
    pub const ALL: [LfaMethod; 3] = [LfaMethod::Traversal, LfaMethod::BroadcastMask, LfaMethod::IndexScatter];

    pub fn name(&self) -> &'static str {
        match self {
            LfaMethod::Traversal => "traversal",
            LfaMethod::BroadcastMask => "broadcast_mask",
            LfaMethod::IndexScatter => "index_scatter",
        }
    }
}

impl fmt::Display for LfaMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `(center, neighbor)` pairs sorted by center then neighbor, with CSR offsets
/// into the pair arrays per center.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborIndex {
    pub row_idx: Vec<usize>,
    pub col_idx: Vec<usize>,
    offsets: Vec<usize>,
}

impl NeighborIndex {
    pub fn len(&self) -> usize {
        self.row_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_idx.is_empty()
    }

    pub fn n_centers(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Pair range belonging to center `i`.
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_idx.iter().copied().zip(self.col_idx.iter().copied())
    }
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidConfig(format!("radius {r} must be positive and finite")));
    }
    Ok(())
}

fn check_layer(cloud: &PointCloud, layer: &LinearLayer) -> Result<()> {
    if layer.in_dim() != cloud.c_raw() + 3 {
        return Err(Error::ShapeMismatch(format!(
            "LFA layer takes {} inputs, cloud needs c_raw + 3 = {}",
            layer.in_dim(),
            cloud.c_raw() + 3
        )));
    }
    Ok(())
}

/// Pairs with distance strictly below `r`. Points are bucketed into a 2D
/// grid over the cloud's x/y extent with cells at least `r` wide, so every
/// neighbor lies in the 3×3 block of cells around its center. Cells grow
/// beyond `r` when needed to keep the grid at about `16N` cells.
pub fn build_neighbor_index(cloud: &PointCloud, r: f64) -> Result<NeighborIndex> {
    check_radius(r)?;
    let n = cloud.len();
    if u32::try_from(n).is_err() {
        return Err(Error::ShapeMismatch(format!(
            "{n} points exceed the neighbor index limit of 2^32 − 1"
        )));
    }
    let grid = CellGrid::build(cloud, r);
    // squared distances outside this band are decided without a square root
    let (accept, reject) = (r * r * (1.0 - 1e-6), r * r * (1.0 + 1e-6));
    let blocks: Vec<(Vec<usize>, Vec<usize>)> = par::map_range(n.div_ceil(ROW_BLOCK), |b| {
        let mut cols = Vec::new();
        let mut counts = Vec::with_capacity(ROW_BLOCK);
        for i in b * ROW_BLOCK..((b + 1) * ROW_BLOCK).min(n) {
            let pi = cloud.position(i);
            let start = cols.len();
            let (cx, cy) = grid.cell_xy[i];
            for gy in cy.saturating_sub(1)..(cy + 2).min(grid.ny) {
                let lo = grid.starts[gy * grid.nx + cx.saturating_sub(1)] as usize;
                let hi = grid.starts[gy * grid.nx + (cx + 2).min(grid.nx)] as usize;
                for (pj, &j) in grid.positions[lo..hi].iter().zip(&grid.ids[lo..hi]) {
                    let (dx, dy, dz) = (pi[0] - pj[0], pi[1] - pj[1], pi[2] - pj[2]);
                    let d2 = dx * dx + dy * dy + dz * dz;
                    if d2 < accept || (d2 <= reject && dist3(pi, pj) < r) {
                        cols.push(j);
                    }
                }
            }
            if cols.len() - start > 1 {
                cols[start..].sort_unstable();
            }
            counts.push(cols.len() - start);
        }
        (cols, counts)
    });
    let total: usize = blocks.iter().map(|b| b.0.len()).sum();
    let mut row_idx = Vec::with_capacity(total);
    let mut col_idx = Vec::with_capacity(total);
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    for (cols, counts) in blocks {
        col_idx.extend(cols);
        for count in counts {
            row_idx.extend(std::iter::repeat_n(offsets.len() - 1, count));
            offsets.push(row_idx.len());
        }
    }
    Ok(NeighborIndex {
        row_idx,
        col_idx,
        offsets,
    })
}

/// Points in row-major cell order (counting sort), with `starts[c]` the
/// first slot of cell `c` and `starts[nx·ny]` the point count.
struct CellGrid {
    x0: f64,
    y0: f64,
    inv_cell: f64,
    nx: usize,
    ny: usize,
    cell_xy: Vec<(usize, usize)>,
    starts: Vec<u32>,
    ids: Vec<usize>,
    positions: Vec<[f64; 3]>,
}

impl CellGrid {
    fn build(cloud: &PointCloud, r: f64) -> CellGrid {
        let n = cloud.len();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in cloud.points() {
            x0 = x0.min(p.position[0]);
            x1 = x1.max(p.position[0]);
            y0 = y0.min(p.position[1]);
            y1 = y1.max(p.position[1]);
        }
        if n == 0 {
            (x0, x1, y0, y1) = (0.0, 0.0, 0.0, 0.0);
        }
        // slightly oversized cells so rounding in (p − origin) · 1/cell never
        // splits a true neighbor pair across non-adjacent cells
        let min_cell = r * (1.0 + 1e-9);
        let (w, h) = ((x1 - x0).max(min_cell), (y1 - y0).max(min_cell));
        let max_cells = (16 * n + 64) as f64;
        let cell = min_cell.max((w * h / max_cells).sqrt());
        let nx = ((w / cell).floor() as usize + 1).min(16 * n + 64);
        let ny = ((h / cell).floor() as usize + 1).min(16 * n + 64);
        let mut grid = CellGrid {
            x0,
            y0,
            inv_cell: 1.0 / cell,
            nx,
            ny,
            cell_xy: Vec::new(),
            starts: vec![0; nx * ny + 1],
            ids: vec![0; n],
            positions: vec![[0.0; 3]; n],
        };
        grid.cell_xy = cloud.points().iter().map(|p| grid.cell_of(&p.position)).collect();
        let keys: Vec<usize> = grid.cell_xy.iter().map(|&(cx, cy)| cy * nx + cx).collect();
        for &k in &keys {
            grid.starts[k] += 1;
        }
        let mut running = 0;
        for s in grid.starts.iter_mut() {
            running += *s;
            *s = running;
        }
        // starts[k] is now the end of cell k; filling back to front walks it
        // down to the first slot and keeps each cell ascending
        for (i, &k) in keys.iter().enumerate().rev() {
            grid.starts[k] -= 1;
            let slot = grid.starts[k] as usize;
            grid.ids[slot] = i;
            grid.positions[slot] = *cloud.position(i);
        }
        grid
    }

    fn cell_of(&self, p: &[f64; 3]) -> (usize, usize) {
        // offsets are non-negative, so truncation is floor
        let cx = ((p[0] - self.x0) * self.inv_cell) as usize;
        let cy = ((p[1] - self.y0) * self.inv_cell) as usize;
        (cx.min(self.nx - 1), cy.min(self.ny - 1))
    }
}

/// Writes `[f_neighbor, p_center − p_neighbor]` into `out`.
#[inline]
fn pair_input(cloud: &PointCloud, center: usize, neighbor: usize, out: &mut [f64]) {
    let c_raw = cloud.c_raw();
    out[..c_raw].copy_from_slice(cloud.features(neighbor));
    let pc = cloud.position(center);
    let pn = cloud.position(neighbor);
    out[c_raw] = pc[0] - pn[0];
    out[c_raw + 1] = pc[1] - pn[1];
    out[c_raw + 2] = pc[2] - pn[2];
}

#[inline]
fn finish_mean(acc: &[f64], count: usize, out: &mut [f64]) {
    let inv = 1.0 / count as f64;
    for (o, a) in out.iter_mut().zip(acc) {
        *o = a * inv;
    }
}

/// Reference implementation: scan all points for every center.
pub fn lfa_traversal(cloud: &PointCloud, layer: &LinearLayer, r: f64) -> Result<Matrix> {
    check_layer(cloud, layer)?;
    check_radius(r)?;
    let n = cloud.len();
    let c = layer.out_dim();
    let mut out = Matrix::zeros(n, c);
    let mut input = vec![0.0; layer.in_dim()];
    let mut proj = vec![0.0; c];
    let mut acc = vec![0.0; c];
    for i in 0..n {
        acc.fill(0.0);
        let mut count = 0;
        let pi = cloud.position(i);
        for j in 0..n {
            if dist3(pi, cloud.position(j)) < r {
                pair_input(cloud, i, j, &mut input);
                layer.apply_into(&input, &mut proj);
                acc.iter_mut().zip(&proj).for_each(|(a, p)| *a += p);
                count += 1;
            }
        }
        finish_mean(&acc, count, out.row_mut(i));
    }
    Ok(out)
}

/// Dense masked mean over an explicitly broadcast `N×N×(c_raw+3)` input tensor.
/// Fails with `AllocationLimit` when that tensor would exceed `mem_cap` bytes.
pub fn lfa_broadcast_mask(cloud: &PointCloud, layer: &LinearLayer, r: f64, mem_cap: u64) -> Result<Matrix> {
    check_layer(cloud, layer)?;
    check_radius(r)?;
    let n = cloud.len();
    let d = layer.in_dim();
    let c = layer.out_dim();
    let requested = transient_bytes(LfaMethod::BroadcastMask, n, cloud.c_raw(), c, 0);
    if requested > mem_cap {
        return Err(Error::AllocationLimit {
            requested,
            cap: mem_cap,
        });
    }
    let mut mask = vec![false; n * n];
    for i in 0..n {
        let pi = cloud.position(i);
        for j in 0..n {
            mask[i * n + j] = dist3(pi, cloud.position(j)) < r;
        }
    }
    let mut tensor = vec![0.0; n * n * d];
    for i in 0..n {
        for j in 0..n {
            let at = (i * n + j) * d;
            pair_input(cloud, i, j, &mut tensor[at..at + d]);
        }
    }
    let mut out = Matrix::zeros(n, c);
    let mut proj = vec![0.0; c];
    let mut acc = vec![0.0; c];
    for i in 0..n {
        acc.fill(0.0);
        let mut count = 0;
        for j in 0..n {
            if mask[i * n + j] {
                let at = (i * n + j) * d;
                layer.apply_into(&tensor[at..at + d], &mut proj);
                acc.iter_mut().zip(&proj).for_each(|(a, p)| *a += p);
                count += 1;
            }
        }
        finish_mean(&acc, count, out.row_mut(i));
    }
    Ok(out)
}

/// Gather, project and segment-mean over an explicit pair list.
pub fn lfa_index_scatter(cloud: &PointCloud, layer: &LinearLayer, r: f64) -> Result<Matrix> {
    check_layer(cloud, layer)?;
    let index = build_neighbor_index(cloud, r)?;
    lfa_index_scatter_with(cloud, layer, &index)
}

/// Index-and-scatter given a prebuilt neighbor index.
pub fn lfa_index_scatter_with(cloud: &PointCloud, layer: &LinearLayer, index: &NeighborIndex) -> Result<Matrix> {
    check_layer(cloud, layer)?;
    if index.n_centers() != cloud.len() {
        return Err(Error::ShapeMismatch(format!(
            "neighbor index covers {} centers, cloud has {} points",
            index.n_centers(),
            cloud.len()
        )));
    }
    let (n, c) = (cloud.len(), layer.out_dim());
    if c == 0 {
        return Ok(Matrix::zeros(n, 0));
    }
    let batched = layer.batched();
    let mut out = Vec::with_capacity(n * c);
    par::extend_blocks(n.div_ceil(ROW_BLOCK), &mut out, |b, rows| {
        let centers = b * ROW_BLOCK..((b + 1) * ROW_BLOCK).min(n);
        aggregate_block(cloud, &batched, index, centers, rows);
    });
    Matrix::from_vec(n, c, out)
}

/// Gathers the pair inputs of `centers`, then sums each center's projected
/// rows in pair order and appends the means to `out`.
fn aggregate_block(
    cloud: &PointCloud,
    batched: &BatchedLinear,
    index: &NeighborIndex,
    centers: Range<usize>,
    out: &mut Vec<f64>,
) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            unsafe { aggregate_block_avx2(cloud, batched, index, centers, out) };
            return;
        }
    }
    aggregate_block_generic(cloud, batched, index, centers, out);
}

// Wider vectors only; no FMA, so rounding is unchanged.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn aggregate_block_avx2(
    cloud: &PointCloud,
    batched: &BatchedLinear,
    index: &NeighborIndex,
    centers: Range<usize>,
    out: &mut Vec<f64>,
) {
    aggregate_block_generic(cloud, batched, index, centers, out);
}

#[inline(always)]
fn aggregate_block_generic(
    cloud: &PointCloud,
    batched: &BatchedLinear,
    index: &NeighborIndex,
    centers: Range<usize>,
    out: &mut Vec<f64>,
) {
    let (d, c) = (batched.in_dim(), batched.out_dim());
    let lo = index.offsets[centers.start];
    let hi = index.offsets[centers.end];
    let mut gathered = Vec::with_capacity((hi - lo) * d);
    for (&i, &j) in index.row_idx[lo..hi].iter().zip(&index.col_idx[lo..hi]) {
        let (pc, pn) = (cloud.position(i), cloud.position(j));
        gathered.extend_from_slice(cloud.features(j));
        gathered.extend_from_slice(&[pc[0] - pn[0], pc[1] - pn[1], pc[2] - pn[2]]);
    }
    let mut acc = vec![0.0; c];
    for i in centers {
        let rows = index.row_range(i);
        let count = rows.len();
        acc.fill(0.0);
        batched.sum_rows_into(&gathered[(rows.start - lo) * d..(rows.end - lo) * d], &mut acc);
        let inv = 1.0 / count as f64;
        out.extend(acc.iter().map(|a| a * inv));
    }
}

/// Runs one implementation by name.
pub fn run_lfa(method: LfaMethod, cloud: &PointCloud, layer: &LinearLayer, r: f64, mem_cap: u64) -> Result<Matrix> {
    match method {
        LfaMethod::Traversal => lfa_traversal(cloud, layer, r),
        LfaMethod::BroadcastMask => lfa_broadcast_mask(cloud, layer, r, mem_cap),
        LfaMethod::IndexScatter => lfa_index_scatter(cloud, layer, r),
    }
}

/// Analytic size in bytes of the dominant transient buffers of one LFA call
/// (output excluded). `pairs` is the neighbor pair count and only matters for
/// index-and-scatter.
pub fn transient_bytes(method: LfaMethod, n: usize, c_raw: usize, c: usize, pairs: usize) -> u64 {
    let (n, d, c, pairs) = (n as u64, (c_raw + 3) as u64, c as u64, pairs as u64);
    match method {
        // one scratch input and projection row per visited pair
        LfaMethod::Traversal => (d + 2 * c) * 8,
        // f64 broadcast tensor plus the boolean mask
        LfaMethod::BroadcastMask => n * n * d * 8 + n * n,
        // index arrays, cell grid (cell coords, keys, ids, positions,
        // starts), gather scratch bounded by the pair count and one
        // accumulator row
        LfaMethod::IndexScatter => {
            pairs * (2 * 8 + d * 8) + c * 8 + (n + 1) * 8 + n * (16 + 8 + 8 + 24) + (16 * n + 65) * 4
        }
    }
}
