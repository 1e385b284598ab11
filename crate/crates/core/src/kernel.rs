//! Structured kernels `K(x,y) = psi(y - Ax) + psi(x - Ay)`.
//!
//! `psi` is a nonnegative bounded bump supported in the closed unit ball
//! (so `K(x,y)` vanishes unless `|y - Ax| <= 1` or `|x - Ay| <= 1`), and
//! `A` is an invertible matrix, optionally carrying its real Jordan block
//! structure supplied by the caller. Pair enumeration over a grid prunes
//! the dense double loop with a cell list over the images `A x_i`.

use crate::discretize::Grid;
use crate::fp;
use crate::linalg::Matrix;
use crate::{Error, Result};
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Tolerance for "modulus equals one" when classifying Jordan blocks.
const UNIT_MODULUS_TOL: f64 = 1e-12;

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    // omega_d = omega_{d-2} * 2 pi / d, omega_0 = 1, omega_1 = 2
    let mut vol = if dim % 2 == 0 { 1.0 } else { 2.0 };
    let mut d = if dim % 2 == 0 { 2 } else { 3 };
    while d <= dim {
        vol *= 2.0 * core::f64::consts::PI / d as f64;
        d += 2;
    }
    vol
}

/// Shape of the bump profile. All shapes are radial, bounded by the
/// amplitude and supported in the closed unit ball, with closed-form
/// integrals so eigenvalue formulas carry no quadrature error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiShape {
    /// `c` on the unit ball.
    Box,
    /// `c (1 - |z|)` on the unit ball.
    Cone,
    /// `c (1 - |z|^2)^2` on the unit ball.
    SmoothBump,
}

impl PsiShape {
    pub fn name(&self) -> &'static str {
        match self {
            PsiShape::Box => "box",
            PsiShape::Cone => "cone",
            PsiShape::SmoothBump => "smooth-bump",
        }
    }
}

/// The bump `psi`: shape, amplitude and ambient dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiProfile {
    shape: PsiShape,
    amplitude: f64,
    dim: usize,
}

impl PsiProfile {
    pub fn new(shape: PsiShape, amplitude: f64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidProfile("dimension must be positive".into()));
        }
        if !amplitude.is_finite() || amplitude <= 0.0 {
            return Err(Error::InvalidProfile(format!(
                "amplitude must be positive and finite for the integral to be positive, got {amplitude}"
            )));
        }
        Ok(PsiProfile {
            shape,
            amplitude,
            dim,
        })
    }

    pub fn shape(&self) -> PsiShape {
        self.shape
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `psi(z)`; exactly zero outside the closed unit ball.
    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        Ok(self.eval_unchecked(z))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, z: &[f64]) -> f64 {
        let r2: f64 = z.iter().map(|v| v * v).sum();
        if r2 > 1.0 {
            return 0.0;
        }
        match self.shape {
            PsiShape::Box => self.amplitude,
            PsiShape::Cone => self.amplitude * (1.0 - fp::sqrt(r2)),
            PsiShape::SmoothBump => {
                let t = 1.0 - r2;
                self.amplitude * t * t
            }
        }
    }

    /// Closed-form `integral of psi over R^d`.
    ///
    /// Radially, `int = s_{d-1} * int_0^1 profile(r) r^{d-1} dr` with
    /// `s_{d-1} = d * omega_d`; the radial moments are elementary for the
    /// three shapes.
    pub fn integral(&self) -> f64 {
        let d = self.dim as f64;
        let omega = unit_ball_volume(self.dim);
        let radial = match self.shape {
            PsiShape::Box => 1.0,
            // d * int (1-r) r^{d-1} dr = d (1/d - 1/(d+1)) = 1/(d+1)
            PsiShape::Cone => 1.0 / (d + 1.0),
            // d * int (1-r^2)^2 r^{d-1} dr = 1 - 2d/(d+2) + d/(d+4)
            PsiShape::SmoothBump => 1.0 - 2.0 * d / (d + 2.0) + d / (d + 4.0),
        };
        self.amplitude * omega * radial
    }
}

/// One real Jordan block: either a real eigenvalue with `size` rows, or a
/// complex pair `alpha +/- i beta` repeated in `size` rotation-scale
/// sub-blocks (total dimension `2 * size`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockKind {
    Real { lambda: f64, size: usize },
    Complex { alpha: f64, beta: f64, size: usize },
}

/// Derived classification of a block by the modulus of its eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockClass {
    Expansive,
    Contractive,
    UnitaryDiagonalizable,
    UnitaryShearReal,
    UnitaryShearComplex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JordanBlockSpec {
    kind: BlockKind,
}

impl JordanBlockSpec {
    pub fn real(lambda: f64, size: usize) -> Result<Self> {
        if lambda == 0.0 || !lambda.is_finite() {
            return Err(Error::InvalidBlocks(format!(
                "real block eigenvalue must be nonzero and finite, got {lambda}"
            )));
        }
        if size == 0 {
            return Err(Error::InvalidBlocks(
                "real block size must be positive".into(),
            ));
        }
        Ok(JordanBlockSpec {
            kind: BlockKind::Real { lambda, size },
        })
    }

    pub fn complex(alpha: f64, beta: f64, size: usize) -> Result<Self> {
        if alpha * alpha + beta * beta == 0.0 || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidBlocks(
                "complex block needs alpha^2 + beta^2 != 0".into(),
            ));
        }
        if size == 0 {
            return Err(Error::InvalidBlocks(
                "complex block size must be positive".into(),
            ));
        }
        Ok(JordanBlockSpec {
            kind: BlockKind::Complex { alpha, beta, size },
        })
    }

    pub fn kind(&self) -> BlockKind {
        self.kind
    }

    /// Spatial dimension the block acts on.
    pub fn dim(&self) -> usize {
        match self.kind {
            BlockKind::Real { size, .. } => size,
            BlockKind::Complex { size, .. } => 2 * size,
        }
    }

    /// Modulus of the block's eigenvalue(s).
    pub fn modulus(&self) -> f64 {
        match self.kind {
            BlockKind::Real { lambda, .. } => fp::abs(lambda),
            BlockKind::Complex { alpha, beta, .. } => fp::sqrt(alpha * alpha + beta * beta),
        }
    }

    pub fn classification(&self) -> BlockClass {
        let m = self.modulus();
        if fp::abs(m - 1.0) <= UNIT_MODULUS_TOL {
            match self.kind {
                BlockKind::Real { size, .. } => {
                    if size == 1 {
                        BlockClass::UnitaryDiagonalizable
                    } else {
                        BlockClass::UnitaryShearReal
                    }
                }
                BlockKind::Complex { size, .. } => {
                    if size == 1 {
                        BlockClass::UnitaryDiagonalizable
                    } else {
                        BlockClass::UnitaryShearComplex
                    }
                }
            }
        } else if m > 1.0 {
            BlockClass::Expansive
        } else {
            BlockClass::Contractive
        }
    }

    /// The block's matrix in the canonical layout: eigenvalue (or the 2x2
    /// rotation-scale matrix) on the diagonal, identity on the
    /// superdiagonal.
    pub fn matrix(&self) -> Matrix {
        match self.kind {
            BlockKind::Real { lambda, size } => {
                let mut m = Matrix::zeros(size);
                for i in 0..size {
                    m.set(i, i, lambda);
                    if i + 1 < size {
                        m.set(i, i + 1, 1.0);
                    }
                }
                m
            }
            BlockKind::Complex { alpha, beta, size } => {
                let d = 2 * size;
                let mut m = Matrix::zeros(d);
                for b in 0..size {
                    let o = 2 * b;
                    m.set(o, o, alpha);
                    m.set(o, o + 1, beta);
                    m.set(o + 1, o, -beta);
                    m.set(o + 1, o + 1, alpha);
                    if b + 1 < size {
                        m.set(o, o + 2, 1.0);
                        m.set(o + 1, o + 3, 1.0);
                    }
                }
                m
            }
        }
    }
}

/// User-supplied Jordan structure `A = C J C^{-1}`. The block data is never
/// computed numerically from `A`; it is validated against it.
#[derive(Debug, Clone, PartialEq)]
pub struct JordanStructure {
    pub blocks: Vec<JordanBlockSpec>,
    pub conjugation: Matrix,
}

impl JordanStructure {
    /// Assembles the block-diagonal `J`.
    pub fn assemble(&self) -> Matrix {
        let d: usize = self.blocks.iter().map(|b| b.dim()).sum();
        let mut j = Matrix::zeros(d);
        let mut off = 0;
        for b in &self.blocks {
            let m = b.matrix();
            for r in 0..b.dim() {
                for c in 0..b.dim() {
                    j.set(off + r, off + c, m.get(r, c));
                }
            }
            off += b.dim();
        }
        j
    }
}

/// Invertible linear map with cached determinant, inverse and operator
/// norms, plus optional Jordan structure.
#[derive(Debug, Clone)]
pub struct LinearMapSpec {
    matrix: Matrix,
    det: f64,
    inverse: Matrix,
    op_norm: f64,
    inv_op_norm: f64,
    blocks: Option<JordanStructure>,
}

impl LinearMapSpec {
    pub fn new(matrix: Matrix) -> Result<Self> {
        let det = matrix.det();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::InvalidMap(format!(
                "matrix must be invertible, det = {det}"
            )));
        }
        let inverse = matrix.inverse()?;
        let resid = inverse
            .matmul(&matrix)
            .max_abs_diff(&Matrix::identity(matrix.dim()));
        if resid > 1e-12 {
            return Err(Error::InvalidMap(format!(
                "matrix too ill-conditioned: |A^-1 A - I| = {resid:.3e}"
            )));
        }
        let op_norm = matrix.op_norm();
        let inv_op_norm = inverse.op_norm();
        Ok(LinearMapSpec {
            matrix,
            det,
            inverse,
            op_norm,
            inv_op_norm,
            blocks: None,
        })
    }

    /// Attaches Jordan structure; `C J C^{-1}` must reproduce the matrix to
    /// `1e-10` in the max norm.
    pub fn with_blocks(
        matrix: Matrix,
        blocks: Vec<JordanBlockSpec>,
        conjugation: Matrix,
    ) -> Result<Self> {
        let mut spec = Self::new(matrix)?;
        let d: usize = blocks.iter().map(|b| b.dim()).sum();
        if d != spec.matrix.dim() {
            return Err(Error::InvalidBlocks(format!(
                "block dimensions sum to {d}, map has dimension {}",
                spec.matrix.dim()
            )));
        }
        if conjugation.dim() != spec.matrix.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.matrix.dim(),
                got: conjugation.dim(),
            });
        }
        let structure = JordanStructure {
            blocks,
            conjugation,
        };
        let c_inv = structure.conjugation.inverse()?;
        let recon = structure
            .conjugation
            .matmul(&structure.assemble())
            .matmul(&c_inv);
        let resid = recon.max_abs_diff(&spec.matrix);
        if resid > 1e-10 {
            return Err(Error::InvalidBlocks(format!(
                "C J C^-1 does not reproduce the matrix: max deviation {resid:.3e}"
            )));
        }
        spec.blocks = Some(structure);
        Ok(spec)
    }

    /// Convenience for `a(x) = c x` in dimension one.
    pub fn scalar(c: f64) -> Result<Self> {
        let m = Matrix::from_rows(1, vec![c])?;
        let blocks = vec![JordanBlockSpec::real(c, 1)?];
        Self::with_blocks(m, blocks, Matrix::identity(1))
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn inverse(&self) -> &Matrix {
        &self.inverse
    }

    pub fn op_norm(&self) -> f64 {
        self.op_norm
    }

    pub fn inv_op_norm(&self) -> f64 {
        self.inv_op_norm
    }

    pub fn blocks(&self) -> Option<&JordanStructure> {
        self.blocks.as_ref()
    }

    #[inline]
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.matrix.matvec(x, out);
    }

    #[inline]
    pub fn apply_inverse(&self, x: &[f64], out: &mut [f64]) {
        self.inverse.matvec(x, out);
    }
}

/// The full kernel specification.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub psi: PsiProfile,
    pub map: LinearMapSpec,
}

impl KernelSpec {
    pub fn new(psi: PsiProfile, map: LinearMapSpec) -> Result<Self> {
        if psi.dim() != map.dim() {
            return Err(Error::DimensionMismatch {
                expected: map.dim(),
                got: psi.dim(),
            });
        }
        Ok(KernelSpec { psi, map })
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    /// `K(x,y) = psi(y - Ax) + psi(x - Ay)`. Symmetric in `(x,y)` because
    /// swapping the arguments swaps the two summands.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        if y.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: y.len(),
            });
        }
        let mut ax = vec![0.0; d];
        let mut ay = vec![0.0; d];
        Ok(self.eval_scratch(x, y, &mut ax, &mut ay))
    }

    #[inline]
    pub(crate) fn eval_scratch(&self, x: &[f64], y: &[f64], ax: &mut [f64], z: &mut [f64]) -> f64 {
        let d = self.dim();
        self.map.apply(x, ax);
        for k in 0..d {
            z[k] = y[k] - ax[k];
        }
        let first = self.psi.eval_unchecked(z);
        self.map.apply(y, ax);
        for k in 0..d {
            z[k] = x[k] - ax[k];
        }
        first + self.psi.eval_unchecked(z)
    }

    /// Exact index pairs `(i, j)`, `i < j`, with `K(x_i, x_j) > 0`, in
    /// ascending order. Together with their transposes these cover every
    /// nonzero off-diagonal kernel entry on the grid.
    pub fn active_pairs(&self, grid: &Grid) -> Result<Vec<(u32, u32)>> {
        let table = KernelTable::build(self, grid)?;
        Ok(table.pairs.iter().map(|p| (p.i, p.j)).collect())
    }
}

/// Cell list with unit cell size over a point set; queries visit every
/// point within Euclidean distance 1 of the probe (plus some slack).
struct CellList {
    dim: usize,
    cells: BTreeMap<Vec<i64>, Vec<u32>>,
}

impl CellList {
    fn build<'a>(dim: usize, points: impl Iterator<Item = &'a [f64]>) -> Self {
        let mut cells: BTreeMap<Vec<i64>, Vec<u32>> = BTreeMap::new();
        let mut key = vec![0i64; dim];
        for (idx, p) in points.enumerate() {
            for (k, v) in key.iter_mut().zip(p.iter()) {
                *k = fp::floor(*v) as i64;
            }
            cells.entry(key.clone()).or_default().push(idx as u32);
        }
        CellList { dim, cells }
    }

    /// Visits candidate indices in deterministic order.
    fn visit_near<F: FnMut(u32)>(&self, z: &[f64], mut f: F) {
        let mut base = vec![0i64; self.dim];
        for (b, v) in base.iter_mut().zip(z.iter()) {
            *b = fp::floor(*v) as i64;
        }
        let mut offset = vec![-1i64; self.dim];
        let mut key = vec![0i64; self.dim];
        loop {
            for k in 0..self.dim {
                key[k] = base[k] + offset[k];
            }
            if let Some(v) = self.cells.get(&key) {
                for &idx in v {
                    f(idx);
                }
            }
            // odometer over {-1,0,1}^d
            let mut carry = true;
            for o in offset.iter_mut() {
                if *o < 1 {
                    *o += 1;
                    carry = false;
                    break;
                }
                *o = -1;
            }
            if carry {
                break;
            }
        }
    }
}

/// One active grid pair with its kernel value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEntry {
    pub i: u32,
    pub j: u32,
    pub k: f64,
}

/// Kernel data pinned to a grid: active pairs with kernel values, per-point
/// kernel row sums, and the coupling to the exterior lattice (points of the
/// same lattice outside the grid, where fields are zero by convention).
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub pairs: Vec<PairEntry>,
    /// `sum_j K(x_i, x_j)` over grid partners.
    pub row_sum: Vec<f64>,
    /// `sum_y K(x_i, y)` over exterior lattice points `y`.
    pub halo: Vec<f64>,
}

impl KernelTable {
    pub fn build(spec: &KernelSpec, grid: &Grid) -> Result<Self> {
        let d = spec.dim();
        if grid.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: grid.dim(),
            });
        }
        let n = grid.len();

        // Images A x_i of all grid points.
        let mut images = vec![0.0; n * d];
        for i in 0..n {
            let (lo, hi) = (i * d, (i + 1) * d);
            spec.map.apply(grid.point(i), &mut images[lo..hi]);
        }

        let grid_cells = CellList::build(d, (0..n).map(|i| grid.point(i)));

        // psi(x_j - A x_i) accumulated per unordered pair; the transpose
        // term psi(x_i - A x_j) arrives when the outer loop reaches j, so
        // each pair receives exactly the two summands of K.
        let mut acc: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        let mut z = vec![0.0; d];
        for i in 0..n {
            let ax = &images[i * d..(i + 1) * d];
            grid_cells.visit_near(ax, |j| {
                let ju = j as usize;
                if ju == i {
                    return;
                }
                let y = grid.point(ju);
                for k in 0..d {
                    z[k] = y[k] - ax[k];
                }
                let v = spec.psi.eval_unchecked(&z);
                if v > 0.0 {
                    let key = if (i as u32) < j {
                        (i as u32, j)
                    } else {
                        (j, i as u32)
                    };
                    *acc.entry(key).or_insert(0.0) += v;
                }
            });
        }
        let pairs: Vec<PairEntry> = acc
            .into_iter()
            .map(|((i, j), k)| PairEntry { i, j, k })
            .collect();

        let mut row_sum = vec![0.0; n];
        for p in &pairs {
            row_sum[p.i as usize] += p.k;
            row_sum[p.j as usize] += p.k;
        }

        // Exterior lattice points within kernel reach of the grid.
        let ext = grid.exterior_lattice(&spec.map)?;
        let m = ext.len() / d.max(1);
        let mut halo = vec![0.0; n];
        if m > 0 {
            let ext_pt = |j: usize| &ext[j * d..(j + 1) * d];
            let ext_cells = CellList::build(d, (0..m).map(ext_pt));
            let mut ext_images = vec![0.0; m * d];
            for j in 0..m {
                let (lo, hi) = (j * d, (j + 1) * d);
                spec.map.apply(ext_pt(j), &mut ext_images[lo..hi]);
            }
            let ext_img_cells = CellList::build(d, (0..m).map(|j| &ext_images[j * d..(j + 1) * d]));
            for i in 0..n {
                let x = grid.point(i);
                let ax = &images[i * d..(i + 1) * d];
                let mut sum = 0.0;
                // psi(y - A x_i) for exterior y near A x_i
                ext_cells.visit_near(ax, |j| {
                    let y = ext_pt(j as usize);
                    for k in 0..d {
                        z[k] = y[k] - ax[k];
                    }
                    sum += spec.psi.eval_unchecked(&z);
                });
                // psi(x_i - A y) for exterior y with A y near x_i
                ext_img_cells.visit_near(x, |j| {
                    let ay = &ext_images[j as usize * d..(j as usize + 1) * d];
                    for k in 0..d {
                        z[k] = x[k] - ay[k];
                    }
                    sum += spec.psi.eval_unchecked(&z);
                });
                halo[i] = sum;
            }
        }

        Ok(KernelTable {
            pairs,
            row_sum,
            halo,
        })
    }
}

/// Human-readable classification name, used in diagnostics.
pub fn class_name(class: BlockClass) -> &'static str {
    match class {
        BlockClass::Expansive => "expansive",
        BlockClass::Contractive => "contractive",
        BlockClass::UnitaryDiagonalizable => "unitary-diagonalizable",
        BlockClass::UnitaryShearReal => "unitary-shear-real",
        BlockClass::UnitaryShearComplex => "unitary-shear-complex",
    }
}

/// Formats a block for error messages.
pub fn block_desc(b: &JordanBlockSpec) -> String {
    match b.kind() {
        BlockKind::Real { lambda, size } => format!("real(lambda={lambda}, size={size})"),
        BlockKind::Complex { alpha, beta, size } => {
            format!("complex(alpha={alpha}, beta={beta}, size={size})")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{Grid, GridShape};
    use crate::rng::CounterRng;
    use alloc::sync::Arc;

    fn box_psi(amplitude: f64, dim: usize) -> PsiProfile {
        PsiProfile::new(PsiShape::Box, amplitude, dim).unwrap()
    }

    fn spec_1d_a2() -> KernelSpec {
        KernelSpec::new(box_psi(0.5, 1), LinearMapSpec::scalar(2.0).unwrap()).unwrap()
    }

    #[test]
    fn psi_eval_examples() {
        let b = box_psi(0.5, 1);
        assert_eq!(b.eval(&[0.0]).unwrap(), 0.5);
        assert_eq!(b.eval(&[1.5]).unwrap(), 0.0);
        let cone = PsiProfile::new(PsiShape::Cone, 1.0, 1).unwrap();
        assert!((cone.eval(&[0.25]).unwrap() - 0.75).abs() < 1e-15);
        assert!(b.eval(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn psi_integral_closed_forms_1d() {
        assert!((box_psi(0.5, 1).integral() - 1.0).abs() < 1e-15);
        let cone = PsiProfile::new(PsiShape::Cone, 1.0, 1).unwrap();
        assert!((cone.integral() - 1.0).abs() < 1e-15);
        assert!(PsiProfile::new(PsiShape::Box, 0.0, 1).is_err());
    }

    #[test]
    fn psi_integral_matches_quadrature() {
        // Independent oracle: midpoint quadrature of the profile.
        for dim in 1..=2usize {
            for shape in [PsiShape::Box, PsiShape::Cone, PsiShape::SmoothBump] {
                let psi = PsiProfile::new(shape, 0.7, dim).unwrap();
                let n = if dim == 1 { 40_000 } else { 1200 };
                let h = 2.2 / n as f64;
                let mut sum = 0.0;
                let mut idx = vec![0usize; dim];
                loop {
                    let z: Vec<f64> = idx.iter().map(|&k| -1.1 + (k as f64 + 0.5) * h).collect();
                    sum += psi.eval(&z).unwrap();
                    let mut carry = true;
                    for v in idx.iter_mut() {
                        if *v + 1 < n {
                            *v += 1;
                            carry = false;
                            break;
                        }
                        *v = 0;
                    }
                    if carry {
                        break;
                    }
                }
                let quad = sum * fp::powi(h, dim as i32);
                let exact = psi.integral();
                let tol = if shape == PsiShape::Box { 5e-3 } else { 1e-3 };
                assert!(
                    (quad - exact).abs() < tol * exact.max(1.0),
                    "{shape:?} d={dim}: quad {quad} vs closed {exact}"
                );
            }
        }
    }

    #[test]
    fn kernel_eval_examples() {
        let spec = spec_1d_a2();
        assert_eq!(spec.eval(&[0.0], &[0.0]).unwrap(), 1.0);
        assert_eq!(spec.eval(&[0.0], &[3.0]).unwrap(), 0.0);
        assert_eq!(spec.eval(&[1.0], &[2.0]).unwrap(), 0.5);
    }

    #[test]
    fn kernel_symmetry_and_support_fuzz() {
        let rot = Matrix::from_rows(2, vec![0.6, 0.8, -0.8, 0.6]).unwrap();
        let scaled =
            Matrix::from_rows(2, vec![1.2 * 0.6, 1.2 * 0.8, -1.2 * 0.8, 1.2 * 0.6]).unwrap();
        let specs = [
            spec_1d_a2(),
            KernelSpec::new(
                PsiProfile::new(PsiShape::Cone, 1.0, 2).unwrap(),
                LinearMapSpec::new(rot).unwrap(),
            )
            .unwrap(),
            KernelSpec::new(
                PsiProfile::new(PsiShape::SmoothBump, 2.0, 2).unwrap(),
                LinearMapSpec::new(scaled).unwrap(),
            )
            .unwrap(),
        ];
        let mut rng = CounterRng::new(77);
        for spec in &specs {
            let d = spec.dim();
            for _ in 0..10_000 {
                let x: Vec<f64> = (0..d).map(|_| rng.uniform(-3.0, 3.0)).collect();
                let y: Vec<f64> = (0..d).map(|_| rng.uniform(-3.0, 3.0)).collect();
                let kxy = spec.eval(&x, &y).unwrap();
                let kyx = spec.eval(&y, &x).unwrap();
                // Bitwise: the two summands commute under argument swap.
                assert_eq!(kxy.to_bits(), kyx.to_bits());
                let ax = spec.map.matrix().apply(&x);
                let ay = spec.map.matrix().apply(&y);
                let d1: f64 = y.iter().zip(&ax).map(|(a, b)| (a - b) * (a - b)).sum();
                let d2: f64 = x.iter().zip(&ay).map(|(a, b)| (a - b) * (a - b)).sum();
                if d1 > 1.0 && d2 > 1.0 {
                    assert_eq!(kxy, 0.0);
                }
                assert!(kxy >= 0.0);
            }
        }
    }

    #[test]
    fn active_pairs_hand_examples() {
        let spec = spec_1d_a2();
        let coarse = Arc::new(Grid::new(1, 1.0, 1.0, GridShape::Box).unwrap());
        let pairs = spec.active_pairs(&coarse).unwrap();
        // points {-1, 0, 1}: K(-1, 1) = psi(3) + psi(-3) = 0 must be absent
        assert!(!pairs.contains(&(0, 2)));
        let fine = Arc::new(Grid::new(1, 1.0, 0.5, GridShape::Box).unwrap());
        let pairs = spec.active_pairs(&fine).unwrap();
        // points {-1,-0.5,0,0.5,1}: K(0, 0.5) = 1.0 > 0, indices (2, 3)
        assert!(pairs.contains(&(2, 3)));
    }

    #[test]
    fn pruning_matches_dense_loop() {
        let maps: Vec<(usize, LinearMapSpec)> = vec![
            (1, LinearMapSpec::scalar(2.0).unwrap()),
            (1, LinearMapSpec::scalar(1.0).unwrap()),
            (
                2,
                LinearMapSpec::new(
                    Matrix::from_rows(2, vec![1.3 * 0.6, 1.3 * 0.8, -1.3 * 0.8, 1.3 * 0.6])
                        .unwrap(),
                )
                .unwrap(),
            ),
            (
                2,
                LinearMapSpec::new(Matrix::from_rows(2, vec![1.0, 1.0, 0.0, 1.0]).unwrap())
                    .unwrap(),
            ),
        ];
        for (dim, map) in maps {
            for shape in [PsiShape::Box, PsiShape::Cone] {
                let spec = KernelSpec::new(PsiProfile::new(shape, 0.5, dim).unwrap(), map.clone())
                    .unwrap();
                let grid = if dim == 1 {
                    Grid::new(1, 4.0, 1.0 / 64.0, GridShape::Box).unwrap()
                } else {
                    Grid::new(2, 2.0, 0.25, GridShape::Box).unwrap()
                };
                let table = KernelTable::build(&spec, &grid).unwrap();
                let mut dense = Vec::new();
                for i in 0..grid.len() {
                    for j in i + 1..grid.len() {
                        let k = spec.eval(grid.point(i), grid.point(j)).unwrap();
                        if k > 0.0 {
                            dense.push(PairEntry {
                                i: i as u32,
                                j: j as u32,
                                k,
                            });
                        }
                    }
                }
                assert_eq!(table.pairs.len(), dense.len(), "{shape:?} d={dim}");
                for (a, b) in table.pairs.iter().zip(dense.iter()) {
                    assert_eq!((a.i, a.j), (b.i, b.j));
                    assert_eq!(a.k.to_bits(), b.k.to_bits());
                }
            }
        }
    }

    #[test]
    fn jordan_reconstruction_and_classification() {
        let blocks = vec![
            JordanBlockSpec::real(2.0, 1).unwrap(),
            JordanBlockSpec::complex(0.6, 0.8, 1).unwrap(),
        ];
        assert_eq!(blocks[0].classification(), BlockClass::Expansive);
        assert_eq!(
            blocks[1].classification(),
            BlockClass::UnitaryDiagonalizable
        );
        assert_eq!(
            JordanBlockSpec::real(1.0, 3).unwrap().classification(),
            BlockClass::UnitaryShearReal
        );
        assert_eq!(
            JordanBlockSpec::complex(0.6, 0.8, 2)
                .unwrap()
                .classification(),
            BlockClass::UnitaryShearComplex
        );
        assert_eq!(
            JordanBlockSpec::real(0.3, 2).unwrap().classification(),
            BlockClass::Contractive
        );

        // A = C J C^-1 with a nontrivial C must validate; a wrong matrix must not.
        let c = Matrix::from_rows(3, vec![1.0, 0.5, 0.0, 0.0, 1.0, 0.25, 0.5, 0.0, 1.0]).unwrap();
        let j = JordanStructure {
            blocks: blocks.clone(),
            conjugation: c.clone(),
        }
        .assemble();
        let a = c.matmul(&j).matmul(&c.inverse().unwrap());
        let spec = LinearMapSpec::with_blocks(a.clone(), blocks.clone(), c.clone()).unwrap();
        assert!(spec.blocks().is_some());
        let wrong = Matrix::identity(3);
        assert!(LinearMapSpec::with_blocks(wrong, blocks, c).is_err());
    }

    #[test]
    fn jordan_block_layouts() {
        let r = JordanBlockSpec::real(-1.0, 3).unwrap().matrix();
        assert_eq!(r.rows(), &[-1.0, 1.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, -1.0]);
        let c = JordanBlockSpec::complex(0.0, 1.0, 2).unwrap().matrix();
        #[rustfmt::skip]
        let expect = [
            0.0, 1.0, 1.0, 0.0,
            -1.0, 0.0, 0.0, 1.0,
            0.0, 0.0, 0.0, 1.0,
            0.0, 0.0, -1.0, 0.0,
        ];
        assert_eq!(c.rows(), &expect);
    }

    #[test]
    fn singular_map_rejected() {
        let m = Matrix::from_rows(2, vec![1.0, 2.0, 0.5, 1.0]).unwrap();
        assert!(LinearMapSpec::new(m).is_err());
    }

    #[test]
    fn unit_ball_volumes() {
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-15);
        assert!((unit_ball_volume(2) - core::f64::consts::PI).abs() < 1e-14);
        assert!((unit_ball_volume(3) - 4.0 * core::f64::consts::PI / 3.0).abs() < 1e-14);
    }
}
