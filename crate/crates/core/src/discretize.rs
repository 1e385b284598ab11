//! Uniform grids, sampled fields and the nonlocal double integral.
//!
//! Fields are piecewise constant on the cells of a uniform lattice and
//! implicitly zero outside the grid. The double integral
//! `int int K(x,y) |u(x) - u(y)|^p dx dy` has two backends: midpoint grid
//! quadrature over the kernel's active pairs (including the pairs that
//! reach exterior lattice points, where `u = 0`), and a seeded Monte Carlo
//! estimate over a bounding box of the kernel's reach.

use crate::fp;
use crate::kernel::{KernelSpec, KernelTable};
use crate::mc;
use crate::reduce::{tree_sum_by, tree_sum_range};
use crate::rng::CounterRng;
use crate::{Error, Result};
use alloc::format;
use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

/// Default cap on grid point counts.
pub const DEFAULT_POINT_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridShape {
    /// Full box `[-L, L]^d`.
    Box,
    /// Lattice points of the box with `|x| <= L`.
    Ball,
}

impl GridShape {
    pub fn name(&self) -> &'static str {
        match self {
            GridShape::Box => "box",
            GridShape::Ball => "ball",
        }
    }
}

/// Uniform lattice `{ -L, -L+h, ..., L }^d` restricted to the shape.
/// Coordinates are computed as `index * h` with integer indices, so points
/// are exactly symmetric under sign flips.
#[derive(Debug, Clone)]
pub struct Grid {
    dim: usize,
    steps: i64,
    spacing: f64,
    shape: GridShape,
    indices: Vec<i64>,
    coords: Vec<f64>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.steps == other.steps
            && self.spacing.to_bits() == other.spacing.to_bits()
            && self.shape == other.shape
    }
}

/// Iterates over all integer tuples in the per-axis ranges `[lo, hi]`.
pub(crate) fn for_each_lattice<F: FnMut(&[i64])>(ranges: &[(i64, i64)], mut f: F) {
    let d = ranges.len();
    let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    if ranges.iter().any(|r| r.0 > r.1) {
        return;
    }
    loop {
        f(&idx);
        // last axis fastest, so enumeration is lexicographic in the tuples
        let mut carry = true;
        for k in (0..d).rev() {
            if idx[k] < ranges[k].1 {
                idx[k] += 1;
                carry = false;
                break;
            }
            idx[k] = ranges[k].0;
        }
        if carry {
            break;
        }
    }
}

impl Grid {
    pub fn new(dim: usize, half_width: f64, spacing: f64, shape: GridShape) -> Result<Self> {
        Self::with_budget(dim, half_width, spacing, shape, DEFAULT_POINT_BUDGET)
    }

    pub fn with_budget(
        dim: usize,
        half_width: f64,
        spacing: f64,
        shape: GridShape,
        budget: usize,
    ) -> Result<Self> {
        if dim == 0 || dim > 8 {
            return Err(Error::InvalidGrid(format!(
                "grid dimension must lie in 1..=8, got {dim}"
            )));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "spacing must be positive, got {spacing}"
            )));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        let ratio = half_width / spacing;
        let steps = fp::round(ratio) as i64;
        if steps < 1 || fp::abs(ratio - steps as f64) > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "half width {half_width} must be a positive integer multiple of spacing {spacing}"
            )));
        }
        let per_axis = 2 * steps as u128 + 1;
        let mut total: u128 = 1;
        for _ in 0..dim {
            total = total.saturating_mul(per_axis);
        }
        if total > budget as u128 {
            return Err(Error::InvalidGrid(format!(
                "lattice would have {total} points, budget is {budget}"
            )));
        }
        let half = steps as f64 * spacing;
        let limit2 = half * half * (1.0 + 1e-12);
        let mut indices = Vec::new();
        let mut coords = Vec::new();
        let ranges = vec![(-steps, steps); dim];
        for_each_lattice(&ranges, |idx| {
            if shape == GridShape::Ball {
                let r2: f64 = idx
                    .iter()
                    .map(|&k| {
                        let x = k as f64 * spacing;
                        x * x
                    })
                    .sum();
                if r2 > limit2 {
                    return;
                }
            }
            indices.extend_from_slice(idx);
            coords.extend(idx.iter().map(|&k| k as f64 * spacing));
        });
        Ok(Grid {
            dim,
            steps,
            spacing,
            shape,
            indices,
            coords,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn half_width(&self) -> f64 {
        self.steps as f64 * self.spacing
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn index_units(&self, i: usize) -> &[i64] {
        &self.indices[i * self.dim..(i + 1) * self.dim]
    }

    /// Measure of one lattice cell, `h^d`.
    pub fn cell_measure(&self) -> f64 {
        fp::powi(self.spacing, self.dim as i32)
    }

    fn in_shape_units(&self, idx: &[i64]) -> bool {
        if idx.iter().any(|&k| k.abs() > self.steps) {
            return false;
        }
        match self.shape {
            GridShape::Box => true,
            GridShape::Ball => {
                let half = self.steps as f64 * self.spacing;
                let r2: f64 = idx
                    .iter()
                    .map(|&k| {
                        let x = k as f64 * self.spacing;
                        x * x
                    })
                    .sum();
                r2 <= half * half * (1.0 + 1e-12)
            }
        }
    }

    /// Flat index of the lattice point with the given integer coordinates,
    /// if it belongs to the grid.
    pub fn flat_index(&self, idx: &[i64]) -> Option<usize> {
        if !self.in_shape_units(idx) {
            return None;
        }
        match self.shape {
            GridShape::Box => {
                let per = 2 * self.steps + 1;
                let mut off: usize = 0;
                for &k in idx {
                    off = off * per as usize + (k + self.steps) as usize;
                }
                Some(off)
            }
            GridShape::Ball => {
                // lattice enumeration is lexicographic in index units
                let n = self.len();
                let d = self.dim;
                let (mut lo, mut hi) = (0usize, n);
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    let them = &self.indices[mid * d..(mid + 1) * d];
                    if them < idx {
                        lo = mid + 1;
                    } else {
                        hi = mid;
                    }
                }
                if lo < n && &self.indices[lo * d..(lo + 1) * d] == idx {
                    Some(lo)
                } else {
                    None
                }
            }
        }
    }

    /// Value lookup for arbitrary positions: the value of the cell whose
    /// center is nearest to `x`, zero outside the grid.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut idx = [0i64; 8];
        debug_assert!(self.dim <= 8);
        for k in 0..self.dim {
            idx[k] = fp::round(x[k] / self.spacing) as i64;
        }
        self.flat_index(&idx[..self.dim])
    }

    /// Per-axis bound of the region within kernel reach of the grid box:
    /// the union of the box, its forward images shifted by the unit ball
    /// and its backward images of the shifted box.
    pub(crate) fn reach_bounds(&self, map: &crate::kernel::LinearMapSpec) -> Vec<f64> {
        let d = self.dim;
        let l = self.half_width();
        let mut out = vec![0.0; d];
        for a in 0..d {
            let fwd: f64 = (0..d).map(|j| fp::abs(map.matrix().get(a, j))).sum::<f64>() * l + 1.0;
            let bwd: f64 = (0..d)
                .map(|j| fp::abs(map.inverse().get(a, j)))
                .sum::<f64>()
                * (l + 1.0);
            out[a] = l.max(fwd).max(bwd);
        }
        out
    }

    /// Lattice points (same spacing, same origin) outside the grid but
    /// within kernel reach of it, as a flat coordinate vector.
    pub(crate) fn exterior_lattice(&self, map: &crate::kernel::LinearMapSpec) -> Result<Vec<f64>> {
        let bounds = self.reach_bounds(map);
        let ranges: Vec<(i64, i64)> = bounds
            .iter()
            .map(|&b| {
                let k = fp::ceil(b / self.spacing) as i64;
                (-k, k)
            })
            .collect();
        let mut total: u128 = 1;
        for r in &ranges {
            total = total.saturating_mul((r.1 - r.0 + 1) as u128);
        }
        if total > 4 * DEFAULT_POINT_BUDGET as u128 {
            return Err(Error::InvalidGrid(format!(
                "kernel reach lattice would have {total} points"
            )));
        }
        let mut coords = Vec::new();
        for_each_lattice(&ranges, |idx| {
            if self.in_shape_units(idx) {
                return;
            }
            coords.extend(idx.iter().map(|&k| k as f64 * self.spacing));
        });
        Ok(coords)
    }
}

/// A scalar function sampled on a grid, zero outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Field {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(
                "field values must be finite".to_string(),
            ));
        }
        Ok(Field { grid, values })
    }

    pub fn from_fn<F: FnMut(&[f64]) -> f64>(grid: Arc<Grid>, mut f: F) -> Result<Self> {
        let values: Vec<f64> = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self::from_values(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Value at an arbitrary position (piecewise constant on cells, zero
    /// outside the grid).
    pub fn value_at(&self, x: &[f64]) -> f64 {
        match self.grid.cell_of(x) {
            Some(i) => self.values[i],
            None => 0.0,
        }
    }

    /// Discrete `L^r` norm: `(sum |u_i|^r h^d)^{1/r}` for finite `r >= 1`,
    /// `max |u_i|` for `r = infinity`.
    pub fn lr_norm(&self, r: f64) -> Result<f64> {
        if r.is_nan() || r < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "norm exponent must be >= 1, got {r}"
            )));
        }
        if r.is_infinite() {
            return Ok(self.values.iter().fold(0.0, |m, v| m.max(fp::abs(*v))));
        }
        let hd = self.grid.cell_measure();
        let sum = if r == 1.0 {
            tree_sum_by(self.values.len(), |i| fp::abs(self.values[i]))
        } else if r == 2.0 {
            tree_sum_by(self.values.len(), |i| self.values[i] * self.values[i])
        } else {
            tree_sum_by(self.values.len(), |i| fp::powf(fp::abs(self.values[i]), r))
        };
        Ok(fp::powf(sum * hd, 1.0 / r))
    }

    /// `sum u_i h^d` (signed mass).
    pub fn mass(&self) -> f64 {
        self.grid.cell_measure() * tree_sum_by(self.values.len(), |i| self.values[i])
    }
}

/// Quadrature backend for the nonlocal double integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    Grid,
    MonteCarlo { samples: u64, seed: u64 },
}

/// Double-integral value; `std_err` is zero for the grid backend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralEstimate {
    pub value: f64,
    pub std_err: f64,
}

/// `int int K(x,y) |u(x) - u(y)|^p dx dy` with `u` extended by zero.
pub fn double_integral_p(
    field: &Field,
    spec: &KernelSpec,
    p: f64,
    backend: Backend,
) -> Result<IntegralEstimate> {
    if field.grid().dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: field.grid().dim(),
        });
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    match backend {
        Backend::Grid => {
            let table = KernelTable::build(spec, field.grid())?;
            Ok(IntegralEstimate {
                value: double_integral_with_table(field, &table, p),
                std_err: 0.0,
            })
        }
        Backend::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::InvalidArgument(
                    "monte carlo needs samples > 0".to_string(),
                ));
            }
            let shards: Vec<mc::ShardSum> = (0..mc::shard_count(samples))
                .map(|s| double_integral_mc_shard(field, spec, p, samples, seed, s))
                .collect();
            let est = mc::combine(&shards);
            Ok(IntegralEstimate {
                value: est.value,
                std_err: est.std_err,
            })
        }
    }
}

/// Grid-backend quadrature reusing a prebuilt kernel table. Ordered pairs
/// contribute twice the unordered sum; the diagonal vanishes; exterior
/// lattice partners see `u = 0`.
pub fn double_integral_with_table(field: &Field, table: &KernelTable, p: f64) -> f64 {
    let u = field.values();
    let h2d = field.grid().cell_measure() * field.grid().cell_measure();
    let pow = |s: f64| -> f64 {
        if p == 2.0 {
            s * s
        } else if p == 1.0 {
            fp::abs(s)
        } else {
            fp::powf(fp::abs(s), p)
        }
    };
    let pair_part = tree_sum_by(table.pairs.len(), |k| {
        let e = &table.pairs[k];
        e.k * pow(u[e.i as usize] - u[e.j as usize])
    });
    let halo_part = tree_sum_by(u.len(), |i| {
        if table.halo[i] == 0.0 || u[i] == 0.0 {
            0.0
        } else {
            table.halo[i] * pow(u[i])
        }
    });
    2.0 * h2d * (pair_part + halo_part)
}

/// One Monte Carlo shard of the double integral; combine shard sums with
/// [`mc::combine`]. The sampling box covers the kernel reach of the grid,
/// so every pair with a nonzero integrand can be drawn.
pub fn double_integral_mc_shard(
    field: &Field,
    spec: &KernelSpec,
    p: f64,
    samples: u64,
    seed: u64,
    shard: u64,
) -> mc::ShardSum {
    let d = spec.dim();
    let bounds = field.grid().reach_bounds(&spec.map);
    let mut vol = 1.0;
    for &b in &bounds {
        vol *= 2.0 * b;
    }
    let weight = vol * vol;
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut ax = vec![0.0; d];
    let mut z = vec![0.0; d];
    mc::run_shard(seed, samples, shard, |rng: &mut CounterRng| {
        for k in 0..d {
            x[k] = rng.uniform(-bounds[k], bounds[k]);
        }
        for k in 0..d {
            y[k] = rng.uniform(-bounds[k], bounds[k]);
        }
        let kval = spec.eval_scratch(&x, &y, &mut ax, &mut z);
        if kval == 0.0 {
            return 0.0;
        }
        let du = field.value_at(&x) - field.value_at(&y);
        if du == 0.0 {
            return 0.0;
        }
        let term = if p == 2.0 {
            du * du
        } else {
            fp::powf(fp::abs(du), p)
        };
        weight * kval * term
    })
}

/// Deterministic split of an index range for data-parallel consumers: the
/// fixed-tree sum over `[0, n)` equals the sum of the per-chunk tree sums.
pub fn tree_chunks(n: usize, pieces: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut stack = vec![(0usize, n)];
    while let Some((lo, hi)) = stack.pop() {
        if out.len() + stack.len() + 1 >= pieces || hi - lo <= 64 {
            out.push((lo, hi));
            continue;
        }
        let mid = lo + (hi - lo) / 2;
        stack.push((mid, hi));
        stack.push((lo, mid));
    }
    out.sort_unstable();
    out
}

/// Tree sum over an explicit index range (re-exported for drivers that
/// parallelize over [`tree_chunks`]).
pub fn tree_sum_over<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
    tree_sum_range(lo, hi, f)
}
