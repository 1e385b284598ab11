//! Explicit minimizing families per Jordan block class.
//!
//! For each block class there is a countable family of disjoint sets and a
//! piecewise-constant function on it whose normalized displacement
//! `int |phi(x) - phi(a x)|^p dx / ||phi||_p^p` has a closed form:
//!
//! - expansive blocks: difference sets of the backward images of a ball
//!   whose whole backward orbit stays in the unit ball, with geometric
//!   coefficients `sigma_n^j`, `sigma_n = |det a|^{1/p} - 1/n`;
//! - contractive blocks: the same construction for `a^{-1}`, coefficients
//!   `gamma_n^j` with `gamma_n = |det a|^{-1/p} - 1/n`;
//! - unitary diagonalizable blocks: the normalized unit-ball indicator is
//!   exactly invariant, displacement zero;
//! - real/complex shear blocks (eigenvalue modulus one, nontrivial
//!   nilpotent part): scaled translates of a small ball along the orbit of
//!   an explicit point, displacement quotient exactly `2/n`.
//!
//! Tensor assembly multiplies per-block functions, conjugates by `C` and
//! rescales so the product is supported in the unit ball with unit `L^p`
//! norm. The displacement quotient of the product is evaluated exactly by
//! enumerating per-block level cells (a convergent product series), which
//! gives an independent check against seeded Monte Carlo sampling.

use crate::fp;
use crate::kernel::{
    unit_ball_volume, BlockClass, BlockKind, JordanBlockSpec, KernelSpec, LinearMapSpec,
};
use crate::linalg::Matrix;
use crate::mc;
use crate::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Iteration cap for membership oracles.
pub const DEFAULT_MEMBERSHIP_BUDGET: u32 = 200;

/// Seed for the one-time base-measure estimate of families whose generating
/// region has no closed-form volume (non-normal expansive maps).
const BASE_MEASURE_SEED: u64 = 0x5EED_BA11;
const BASE_MEASURE_SAMPLES: u64 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Expansive,
    Contractive,
    ShearReal,
    ShearComplex,
    /// Unit-ball indicator for unitary diagonalizable blocks.
    UnitaryBall,
}

/// A family of disjoint level sets for one block map.
#[derive(Debug, Clone)]
pub struct SetFamily {
    kind: FamilyKind,
    dim: usize,
    /// The block map `a`.
    map: Matrix,
    map_inv: Matrix,
    /// `|det a|`.
    det_abs: f64,
    /// Membership iterates this matrix (`a` for expansive, `a^{-1}` for
    /// contractive families).
    iter: Matrix,
    base_center: Vec<f64>,
    base_radius: f64,
    /// Once an orbit leaves this radius it can never return to the base
    /// ball; only meaningful for expansive/contractive kinds.
    escape_radius: f64,
    budget: u32,
    /// Measure of the level-zero set.
    base_measure: f64,
    base_measure_exact: bool,
}

fn sup_inverse_power_norm(map: &Matrix) -> Result<f64> {
    // sup_j ||a^{-j}||_F, certified once the powers decay below 1e-6: any
    // later power factors through one below 1e-6 times one already seen.
    let inv = map.inverse()?;
    let mut m = Matrix::identity(map.dim());
    let mut sup = m.frobenius_norm();
    for _ in 0..20_000 {
        m = m.matmul(&inv);
        let norm = m.frobenius_norm();
        if norm > sup {
            sup = norm;
        }
        if norm < 1e-6 {
            return Ok(sup);
        }
    }
    Err(Error::InvalidBlocks(
        "inverse powers did not decay; map is not expansive (or is too close to unitary)".into(),
    ))
}

impl SetFamily {
    /// Family for an expansive `a`: base ball at the origin with every
    /// backward iterate inside the unit ball.
    pub fn expansive(map: Matrix, budget: u32) -> Result<Self> {
        let dim = map.dim();
        let map_inv = map.inverse()?;
        let det_abs = fp::abs(map.det());
        if det_abs <= 1.0 {
            return Err(Error::InvalidBlocks(format!(
                "expansive family needs |det a| > 1, got {det_abs}"
            )));
        }
        let sup = sup_inverse_power_norm(&map)?;
        // With ||a^{-1}|| <= 1 the backward iterates are nested, the union
        // of iterates is the ball itself and the level-zero measure is
        // exact; otherwise fall back to radius 1/sup and a sampled measure.
        let nested = map_inv.op_norm() <= 1.0 + 1e-12;
        let base_radius = if nested { 1.0 } else { 1.0 / sup };
        let escape_radius = base_radius * sup * (1.0 + 1e-9);
        let mut fam = SetFamily {
            kind: FamilyKind::Expansive,
            dim,
            iter: map.clone(),
            map,
            map_inv,
            det_abs,
            base_center: vec![0.0; dim],
            base_radius,
            escape_radius,
            budget,
            base_measure: 0.0,
            base_measure_exact: nested,
        };
        if nested {
            fam.base_measure =
                unit_ball_volume(dim) * fp::powi(base_radius, dim as i32) * (1.0 - 1.0 / det_abs);
        } else {
            fam.base_measure = fam.sample_base_measure()?;
        }
        Ok(fam)
    }

    /// Family for a contractive `a` (i.e. `a^{-1}` expansive).
    pub fn contractive(map: Matrix, budget: u32) -> Result<Self> {
        let dim = map.dim();
        let map_inv = map.inverse()?;
        let det_abs = fp::abs(map.det());
        if det_abs >= 1.0 {
            return Err(Error::InvalidBlocks(format!(
                "contractive family needs |det a| < 1, got {det_abs}"
            )));
        }
        let sup = sup_inverse_power_norm(&map_inv)?;
        let nested = map.op_norm() <= 1.0 + 1e-12;
        let base_radius = if nested { 1.0 } else { 1.0 / sup };
        let escape_radius = base_radius * sup * (1.0 + 1e-9);
        let mut fam = SetFamily {
            kind: FamilyKind::Contractive,
            dim,
            iter: map_inv.clone(),
            map,
            map_inv,
            det_abs,
            base_center: vec![0.0; dim],
            base_radius,
            escape_radius,
            budget,
            base_measure: 0.0,
            base_measure_exact: nested,
        };
        if nested {
            // level sets of the inverse map, whose determinant is 1/det
            fam.base_measure =
                unit_ball_volume(dim) * fp::powi(base_radius, dim as i32) * (1.0 - det_abs);
        } else {
            fam.base_measure = fam.sample_base_measure()?;
        }
        Ok(fam)
    }

    /// Shear family for a real Jordan block with eigenvalue `+-1` and size
    /// at least two: images of a small ball along the orbit of
    /// `p = (1,1,0,...,0)` scaled by `2^{-3}`.
    pub fn shear_real(block: &JordanBlockSpec, budget: u32) -> Result<Self> {
        if block.classification() != BlockClass::UnitaryShearReal {
            return Err(Error::InvalidBlocks(format!(
                "shear_real needs a non-diagonalizable real block with |lambda| = 1, got {}",
                crate::kernel::block_desc(block)
            )));
        }
        let map = block.matrix();
        let dim = map.dim();
        let map_inv = map.inverse()?;
        let mut center = vec![0.0; dim];
        center[0] = 0.125;
        center[1] = 0.125;
        let base_radius = 1.0 / 32.0;
        Ok(SetFamily {
            kind: FamilyKind::ShearReal,
            dim,
            iter: map_inv.clone(),
            map,
            map_inv,
            det_abs: 1.0,
            base_center: center,
            base_radius,
            escape_radius: f64::INFINITY,
            budget,
            base_measure: unit_ball_volume(dim) * fp::powi(base_radius, dim as i32),
            base_measure_exact: true,
        })
    }

    /// Shear family for a complex Jordan block with eigenvalue modulus one
    /// and at least two rotation sub-blocks (block dimension at least 4):
    /// images of a ball around `2^{-4} q`, `q = (1,1,1,1,0,...,0)`, whose
    /// radius is chosen from the orbit separation so the first `n` images
    /// are pairwise disjoint.
    pub fn shear_complex(block: &JordanBlockSpec, n: u32, budget: u32) -> Result<Self> {
        if block.classification() != BlockClass::UnitaryShearComplex {
            return Err(Error::InvalidBlocks(format!(
                "shear_complex needs a non-diagonalizable complex block with modulus 1 \
                 (at least two rotation sub-blocks, so dimension >= 4), got {}",
                crate::kernel::block_desc(block)
            )));
        }
        let map = block.matrix();
        let dim = map.dim();
        let map_inv = map.inverse()?;
        let mut q = vec![0.0; dim];
        for v in q.iter_mut().take(4) {
            *v = 1.0;
        }
        // orbit points a^j q and the stretch factors ||a^j||_F
        let mut orbit: Vec<Vec<f64>> = Vec::with_capacity(n as usize + 1);
        orbit.push(q.clone());
        let mut pw = Matrix::identity(dim);
        let mut stretch = vec![pw.frobenius_norm()];
        for _ in 0..n {
            pw = map.matmul(&pw);
            orbit.push(pw.apply(&q));
            stretch.push(pw.frobenius_norm());
        }
        let mut min_ratio = f64::INFINITY;
        for j in 0..orbit.len() {
            for l in j + 1..orbit.len() {
                let dist2: f64 = orbit[j]
                    .iter()
                    .zip(orbit[l].iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let ratio = fp::sqrt(dist2) / (stretch[j] + stretch[l]);
                if ratio < min_ratio {
                    min_ratio = ratio;
                }
            }
        }
        let r = (0.99 * min_ratio).min(0.99);
        if !(r > 1e-9) {
            return Err(Error::BudgetExceeded(format!(
                "orbit of the complex shear block does not separate (r = {r:.3e})"
            )));
        }
        let base_radius = r / 16.0;
        let center: Vec<f64> = q.iter().map(|v| v / 16.0).collect();
        Ok(SetFamily {
            kind: FamilyKind::ShearComplex,
            dim,
            iter: map_inv.clone(),
            map,
            map_inv,
            det_abs: 1.0,
            base_center: center,
            base_radius,
            escape_radius: f64::INFINITY,
            budget,
            base_measure: unit_ball_volume(dim) * fp::powi(base_radius, dim as i32),
            base_measure_exact: true,
        })
    }

    /// Unit-ball "family" for unitary diagonalizable blocks.
    pub fn unitary_ball(map: Matrix) -> Result<Self> {
        let dim = map.dim();
        let map_inv = map.inverse()?;
        if map.op_norm() > 1.0 + 1e-12 || map_inv.op_norm() > 1.0 + 1e-12 {
            return Err(Error::InvalidBlocks(
                "unitary construction needs an isometry (operator norm 1 both ways)".into(),
            ));
        }
        Ok(SetFamily {
            kind: FamilyKind::UnitaryBall,
            dim,
            iter: map.clone(),
            map,
            map_inv,
            det_abs: 1.0,
            base_center: vec![0.0; dim],
            base_radius: 1.0,
            escape_radius: f64::INFINITY,
            budget: 1,
            base_measure: unit_ball_volume(dim),
            base_measure_exact: true,
        })
    }

    /// Overrides the generating ball radius (must keep every backward
    /// iterate inside the unit ball, i.e. `radius <= default radius`).
    pub fn with_base_radius(mut self, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || radius > self.base_radius {
            return Err(Error::InvalidArgument(format!(
                "base radius must lie in (0, {}]",
                self.base_radius
            )));
        }
        let scale = radius / self.base_radius;
        self.escape_radius *= scale;
        if self.base_measure_exact {
            self.base_measure *= fp::powi(scale, self.dim as i32);
        } else {
            self.base_radius = radius;
            self.base_measure = self.sample_base_measure()?;
            return Ok(self);
        }
        self.base_radius = radius;
        Ok(self)
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn map(&self) -> &Matrix {
        &self.map
    }

    pub fn map_inverse(&self) -> &Matrix {
        &self.map_inv
    }

    pub fn det_abs(&self) -> f64 {
        self.det_abs
    }

    pub fn base_radius(&self) -> f64 {
        self.base_radius
    }

    pub fn base_center(&self) -> &[f64] {
        &self.base_center
    }

    /// Measure of the level-zero set and whether it is a closed form.
    pub fn base_measure(&self) -> (f64, bool) {
        (self.base_measure, self.base_measure_exact)
    }

    #[inline]
    fn in_base(&self, y: &[f64]) -> bool {
        let r2: f64 = y
            .iter()
            .zip(self.base_center.iter())
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        r2 < self.base_radius * self.base_radius
    }

    /// Level index of `x`, or `None` when `x` lies in no family member.
    ///
    /// Expansive kinds iterate `x, ax, a^2 x, ...` and return the largest
    /// iterate count that lands in the base ball; the orbit is abandoned
    /// once it passes the escape radius. Contractive kinds do the same with
    /// `a^{-1}`. Shear kinds scan the finite orbit of the generating ball.
    pub fn membership(&self, x: &[f64]) -> Result<Option<u32>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        match self.kind {
            FamilyKind::UnitaryBall => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                Ok(if r2 <= 1.0 { Some(0) } else { None })
            }
            FamilyKind::ShearReal | FamilyKind::ShearComplex => {
                let mut y = x.to_vec();
                let mut buf = vec![0.0; self.dim];
                for j in 0..=self.budget {
                    if self.in_base(&y) {
                        return Ok(Some(j));
                    }
                    self.iter.matvec(&y, &mut buf);
                    core::mem::swap(&mut y, &mut buf);
                }
                Ok(None)
            }
            FamilyKind::Expansive | FamilyKind::Contractive => {
                let norm2: f64 = x.iter().map(|v| v * v).sum();
                if norm2 == 0.0 {
                    // the origin lies in every backward image of the base
                    // ball, hence in no difference set
                    return Ok(None);
                }
                let mut y = x.to_vec();
                let mut buf = vec![0.0; self.dim];
                let mut last_hit: Option<u32> = None;
                let esc2 = self.escape_radius * self.escape_radius;
                for j in 0..=self.budget {
                    if self.in_base(&y) {
                        last_hit = Some(j);
                    }
                    let r2: f64 = y.iter().map(|v| v * v).sum();
                    if r2 > esc2 {
                        return Ok(last_hit);
                    }
                    self.iter.matvec(&y, &mut buf);
                    core::mem::swap(&mut y, &mut buf);
                }
                Err(Error::BudgetExceeded(format!(
                    "orbit did not escape within {} iterations; block may be misclassified",
                    self.budget
                )))
            }
        }
    }

    /// Number of family members containing `x` among the first
    /// `max_level + 1`; `membership` itself reports at most one level, this
    /// verifies disjointness of the underlying sets by direct set tests.
    pub fn membership_multiplicity(&self, x: &[f64], max_level: u32) -> Result<u32> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        match self.kind {
            FamilyKind::UnitaryBall => Ok(self.membership(x)?.is_some() as u32),
            FamilyKind::ShearReal | FamilyKind::ShearComplex => {
                let mut y = x.to_vec();
                let mut buf = vec![0.0; self.dim];
                let mut count = 0;
                for _ in 0..=max_level {
                    if self.in_base(&y) {
                        count += 1;
                    }
                    self.iter.matvec(&y, &mut buf);
                    core::mem::swap(&mut y, &mut buf);
                }
                Ok(count)
            }
            FamilyKind::Expansive | FamilyKind::Contractive => {
                let mut count = 0;
                for l in 0..=max_level {
                    if self.in_level_set(x, l)? {
                        count += 1;
                    }
                }
                Ok(count)
            }
        }
    }

    fn in_level_set(&self, x: &[f64], level: u32) -> Result<bool> {
        // x lies in the level-l difference set iff some iterate count >= l
        // hits the base ball but none >= l + 1 does
        let hits_from = |start: u32| -> bool {
            let mut y = x.to_vec();
            let mut buf = vec![0.0; self.dim];
            for _ in 0..start {
                self.iter.matvec(&y, &mut buf);
                core::mem::swap(&mut y, &mut buf);
            }
            let esc2 = self.escape_radius * self.escape_radius;
            for _ in 0..=self.budget {
                if self.in_base(&y) {
                    return true;
                }
                let r2: f64 = y.iter().map(|v| v * v).sum();
                if r2 > esc2 {
                    return false;
                }
                self.iter.matvec(&y, &mut buf);
                core::mem::swap(&mut y, &mut buf);
            }
            false
        };
        Ok(hits_from(level) && !hits_from(level + 1))
    }

    fn sample_base_measure(&self) -> Result<f64> {
        // every family member sits inside the escape ball (and the unit
        // ball); sample the enclosing box
        let b = self.escape_radius.min(1.0);
        let vol = fp::powi(2.0 * b, self.dim as i32);
        let mut x = vec![0.0; self.dim];
        let est = mc::estimate(BASE_MEASURE_SEED, BASE_MEASURE_SAMPLES, |rng| {
            for v in x.iter_mut() {
                *v = rng.uniform(-b, b);
            }
            match self.membership(&x) {
                Ok(Some(0)) => vol,
                _ => 0.0,
            }
        })?;
        if est.value <= 0.0 {
            return Err(Error::InvalidBlocks(
                "sampled level-zero measure is zero; family is degenerate".into(),
            ));
        }
        Ok(est.value)
    }
}

/// One level cell of a piecewise-constant function, stored in a
/// measure-weighted form: `a = m^{1/p} * value`, `b = m^{1/p} * (value
/// after the map)` with `m` the cell measure relative to the level-zero
/// set. The cell's displacement contribution is `|a - b|^p`, and the
/// weighting distributes over tensor products, so products of cells stay
/// in a numerically safe range even deep in the geometric tails.
#[derive(Debug, Clone, Copy)]
pub struct DisplacementCell {
    pub a: f64,
    pub b: f64,
}

/// Piecewise-constant function built on a set family.
#[derive(Debug, Clone)]
pub struct PiecewiseConstFn {
    family: SetFamily,
    p: f64,
    n: u32,
    /// Geometric coefficient ratio; 1 for indicator-type functions.
    ratio: f64,
    /// Spatial prescale applied before membership (shear functions use the
    /// sets `2^{-n} E_j`).
    arg_scale: f64,
    /// `||phi_n||_p^p` relative to the level-zero measure.
    norm_pow_rel: f64,
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "p must satisfy 1 <= p < infinity, got {p}"
        )));
    }
    Ok(())
}

/// `sigma_n = |det a|^{1/p} - 1/n` for an expansive block map.
pub fn expansive_coefficient(det_abs: f64, p: f64, n: u32) -> f64 {
    fp::powf(det_abs, 1.0 / p) - 1.0 / n as f64
}

/// `gamma_n = |det a|^{-1/p} - 1/n` for a contractive block map.
pub fn contractive_coefficient(det_abs: f64, p: f64, n: u32) -> f64 {
    fp::powf(det_abs, -1.0 / p) - 1.0 / n as f64
}

/// Builds the expansive-block function `phi_n = sum_j sigma_n^j chi_{E_j}`
/// with `||phi_n||_p^p = |E_0| / (1 - sigma_n^p / |det a|)`.
pub fn build_expansive(map: &Matrix, p: f64, n: u32) -> Result<PiecewiseConstFn> {
    let family = SetFamily::expansive(map.clone(), DEFAULT_MEMBERSHIP_BUDGET)?;
    build_expansive_on(family, p, n)
}

/// Same, on an explicitly constructed family (custom base ball or budget).
pub fn build_expansive_on(family: SetFamily, p: f64, n: u32) -> Result<PiecewiseConstFn> {
    check_p(p)?;
    if family.kind != FamilyKind::Expansive {
        return Err(Error::InvalidBlocks("family is not expansive".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sequence index n must be >= 1".into(),
        ));
    }
    let d = family.det_abs;
    let sigma = expansive_coefficient(d, p, n);
    if sigma <= 0.0 {
        let min_n = fp::floor(fp::powf(d, -1.0 / p)) as u32 + 1;
        return Err(Error::InvalidArgument(format!(
            "sigma_n = {sigma} <= 0; smallest admissible n is {min_n}"
        )));
    }
    let norm_pow_rel = 1.0 / (1.0 - fp::powf(sigma, p) / d);
    Ok(PiecewiseConstFn {
        family,
        p,
        n,
        ratio: sigma,
        arg_scale: 1.0,
        norm_pow_rel,
    })
}

/// Builds the contractive-block function `phi_n = sum_j gamma_n^j chi_{G_j}`
/// with `||phi_n||_p^p = |G_0| / (1 - gamma_n^p |det a|)`.
pub fn build_contractive(map: &Matrix, p: f64, n: u32) -> Result<PiecewiseConstFn> {
    check_p(p)?;
    let family = SetFamily::contractive(map.clone(), DEFAULT_MEMBERSHIP_BUDGET)?;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sequence index n must be >= 1".into(),
        ));
    }
    let d = family.det_abs;
    let gamma = contractive_coefficient(d, p, n);
    if gamma <= 0.0 {
        let min_n = fp::floor(fp::powf(d, 1.0 / p)) as u32 + 1;
        return Err(Error::InvalidArgument(format!(
            "gamma_n = {gamma} <= 0; smallest admissible n is {min_n}"
        )));
    }
    let norm_pow_rel = 1.0 / (1.0 - fp::powf(gamma, p) * d);
    Ok(PiecewiseConstFn {
        family,
        p,
        n,
        ratio: gamma,
        arg_scale: 1.0,
        norm_pow_rel,
    })
}

/// The normalized unit-ball indicator for unitary diagonalizable blocks;
/// exactly invariant under the block map, displacement zero.
pub fn build_unitary_diag(map: &Matrix, p: f64) -> Result<PiecewiseConstFn> {
    check_p(p)?;
    let family = SetFamily::unitary_ball(map.clone())?;
    Ok(PiecewiseConstFn {
        family,
        p,
        n: 1,
        ratio: 1.0,
        arg_scale: 1.0,
        norm_pow_rel: 1.0,
    })
}

/// Shear-block function `phi_n = sum_{j=1}^n chi_{2^{-n} E_j}` with norm
/// `2^{-n d} n |E_0|` and displacement quotient exactly `2/n`.
pub fn build_shear(block: &JordanBlockSpec, p: f64, n: u32) -> Result<PiecewiseConstFn> {
    check_p(p)?;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sequence index n must be >= 1".into(),
        ));
    }
    let family = match block.classification() {
        BlockClass::UnitaryShearReal => SetFamily::shear_real(block, n)?,
        BlockClass::UnitaryShearComplex => SetFamily::shear_complex(block, n, n)?,
        BlockClass::UnitaryDiagonalizable if matches!(block.kind(), BlockKind::Complex { .. }) => {
            return Err(Error::InvalidBlocks(format!(
                "a lone rotation sub-block is diagonalizable; the complex shear construction \
                 needs at least two rotation sub-blocks, so block dimension >= 4 (got {})",
                crate::kernel::block_desc(block)
            )))
        }
        other => {
            return Err(Error::InvalidBlocks(format!(
                "build_shear needs a unitary shear block, got a {} block ({})",
                crate::kernel::class_name(other),
                crate::kernel::block_desc(block)
            )))
        }
    };
    let dim = family.dim;
    let norm_pow_rel = fp::powi(0.5, (n as i32) * (dim as i32)) * n as f64;
    let arg_scale = fp::powi(2.0, n as i32);
    Ok(PiecewiseConstFn {
        family,
        p,
        n,
        ratio: 1.0,
        arg_scale,
        norm_pow_rel,
    })
}

/// Dispatches on the block classification.
pub fn build_for_block(block: &JordanBlockSpec, p: f64, n: u32) -> Result<PiecewiseConstFn> {
    match block.classification() {
        BlockClass::Expansive => build_expansive(&block.matrix(), p, n),
        BlockClass::Contractive => build_contractive(&block.matrix(), p, n),
        BlockClass::UnitaryDiagonalizable => build_unitary_diag(&block.matrix(), p),
        BlockClass::UnitaryShearReal | BlockClass::UnitaryShearComplex => build_shear(block, p, n),
    }
}

impl PiecewiseConstFn {
    pub fn family(&self) -> &SetFamily {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.family.dim
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// The coefficient ratio (`sigma_n`, `gamma_n`, or 1).
    pub fn coefficient(&self) -> f64 {
        self.ratio
    }

    /// `||phi_n||_p^p` (absolute).
    pub fn norm_pow(&self) -> f64 {
        self.norm_pow_rel * self.family.base_measure
    }

    /// `||phi_n||_p^p` in units of the level-zero measure.
    pub fn norm_pow_relative(&self) -> f64 {
        self.norm_pow_rel
    }

    /// Raw (unnormalized) value `phi_n(x)`.
    pub fn eval_raw(&self, x: &[f64]) -> Result<f64> {
        let level = if self.arg_scale != 1.0 {
            let scaled: Vec<f64> = x.iter().map(|v| v * self.arg_scale).collect();
            self.family.membership(&scaled)?
        } else {
            self.family.membership(x)?
        };
        Ok(match level {
            None => 0.0,
            Some(j) => match self.family.kind {
                FamilyKind::ShearReal | FamilyKind::ShearComplex => {
                    if j >= 1 && j <= self.n {
                        1.0
                    } else {
                        0.0
                    }
                }
                FamilyKind::UnitaryBall => 1.0,
                _ => fp::powi(self.ratio, j as i32),
            },
        })
    }

    /// Normalized value `phi_n(x) / ||phi_n||_p`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.eval_raw(x)? / fp::powf(self.norm_pow(), 1.0 / self.p))
    }

    /// Closed-form displacement quotient
    /// `int |phi_n - phi_n o a|^p dx / ||phi_n||_p^p`.
    pub fn closed_quotient(&self) -> f64 {
        quotient_closed_form(self.family.kind, self.family.det_abs, self.p, self.n).unwrap_or(0.0)
    }

    /// Measure-weighted level cells; the geometric families are truncated
    /// once the tail is below `tail_tol` relative to the accumulated norm.
    pub fn displacement_cells(
        &self,
        tail_tol: f64,
        max_cells: usize,
    ) -> Result<Vec<DisplacementCell>> {
        let mut cells = Vec::new();
        let p = self.p;
        match self.family.kind {
            FamilyKind::UnitaryBall => {
                cells.push(DisplacementCell { a: 1.0, b: 1.0 });
            }
            FamilyKind::ShearReal | FamilyKind::ShearComplex => {
                let m = fp::powi(0.5, (self.n as i32) * (self.family.dim as i32));
                let w = fp::powf(m, 1.0 / p);
                cells.push(DisplacementCell { a: 0.0, b: w });
                if self.n > 1 {
                    // n - 1 interior translates carry (1, 1) each; they can
                    // be merged because a = b contributes nothing alone,
                    // but products with other blocks need the full weight
                    let wm = fp::powf(m * (self.n - 1) as f64, 1.0 / p);
                    cells.push(DisplacementCell { a: wm, b: wm });
                }
                cells.push(DisplacementCell { a: w, b: 0.0 });
            }
            FamilyKind::Expansive => {
                let d = self.family.det_abs;
                let s = self.ratio;
                // a_j = sigma^j det^{-j/p}, b_j = a_j / sigma; both decay
                // geometrically with ratio sigma / det^{1/p} < 1
                let ratio = s / fp::powf(d, 1.0 / p);
                cells.push(DisplacementCell { a: 1.0, b: 0.0 });
                let step = fp::powf(s, p) / d;
                let mut weight = step;
                let mut a = ratio;
                while weight >= tail_tol * self.norm_pow_rel && cells.len() < max_cells {
                    cells.push(DisplacementCell { a, b: a / s });
                    a *= ratio;
                    weight *= step;
                }
            }
            FamilyKind::Contractive => {
                let d = self.family.det_abs;
                let g = self.ratio;
                // G_{-1} = a^{-1} G_0 carries values (0, 1), measure |G_0|/det
                cells.push(DisplacementCell {
                    a: 0.0,
                    b: fp::powf(1.0 / d, 1.0 / p),
                });
                let ratio = g * fp::powf(d, 1.0 / p);
                let step = fp::powf(g, p) * d;
                let mut weight = 1.0;
                let mut a = 1.0;
                while weight >= tail_tol * self.norm_pow_rel && cells.len() < max_cells {
                    cells.push(DisplacementCell { a, b: a * g });
                    a *= ratio;
                    weight *= step;
                }
            }
        }
        Ok(cells)
    }

    /// Monte Carlo estimate of `||phi_n||_p^p` over the unit-ball bounding
    /// box (every function here is supported in the unit ball).
    pub fn norm_pow_mc(&self, samples: u64, seed: u64) -> Result<mc::McEstimate> {
        let d = self.family.dim;
        let vol = fp::powi(2.0, d as i32);
        let mut x = vec![0.0; d];
        mc::estimate(seed, samples, |rng| {
            for v in x.iter_mut() {
                *v = rng.uniform(-1.0, 1.0);
            }
            let raw = self.eval_raw(&x).unwrap_or(0.0);
            if raw == 0.0 {
                0.0
            } else {
                vol * fp::powf(raw, self.p)
            }
        })
    }
}

/// Closed-form displacement quotient per family kind:
///
/// - expansive: `(1 - sigma_n^p / D) + |sigma_n - 1|^p / D`, `D = |det a|`;
/// - contractive: `|1 - gamma_n|^p + (1 - gamma_n^p D) / D`;
/// - shear: `2 / n`;
/// - unitary ball: `0`.
pub fn quotient_closed_form(kind: FamilyKind, det_abs: f64, p: f64, n: u32) -> Result<f64> {
    check_p(p)?;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sequence index n must be >= 1".into(),
        ));
    }
    match kind {
        FamilyKind::Expansive => {
            let s = expansive_coefficient(det_abs, p, n);
            if s <= 0.0 {
                return Err(Error::InvalidArgument("sigma_n <= 0".into()));
            }
            Ok((1.0 - fp::powf(s, p) / det_abs) + fp::powf(fp::abs(s - 1.0), p) / det_abs)
        }
        FamilyKind::Contractive => {
            let g = contractive_coefficient(det_abs, p, n);
            if g <= 0.0 {
                return Err(Error::InvalidArgument("gamma_n <= 0".into()));
            }
            Ok(fp::powf(fp::abs(1.0 - g), p) + (1.0 - fp::powf(g, p) * det_abs) / det_abs)
        }
        FamilyKind::ShearReal | FamilyKind::ShearComplex => Ok(2.0 / n as f64),
        FamilyKind::UnitaryBall => Ok(0.0),
    }
}

/// Limit of the displacement quotient as `n` grows:
/// `|1 - |det A|^{-1/p}|^p`.
pub fn quotient_limit(det_abs: f64, p: f64) -> f64 {
    fp::powf(fp::abs(1.0 - fp::powf(det_abs, -1.0 / p)), p)
}

/// Tensor product of per-block functions, conjugated and rescaled to a
/// normalized function supported in the unit ball.
#[derive(Debug, Clone)]
pub struct TensorMinimizer {
    blocks: Vec<PiecewiseConstFn>,
    offsets: Vec<usize>,
    conj_inv: Matrix,
    /// `Phi(x) = norm_scale * prod_i phi_i(arg_scale * (C^{-1} x)_i)`.
    arg_scale: f64,
    norm_scale: f64,
    p: f64,
    dim: usize,
}

/// Assembles the tensor minimizer from per-block functions and the
/// conjugating matrix `C` (`A = C J C^{-1}`).
///
/// The argument scale `sqrt(B) ||C||` (with `B` the number of blocks) maps
/// the support of the product into the unit ball; the normalization keeps
/// the `L^p` norm at one after the change of variables.
pub fn tensor_assemble(
    blocks: Vec<PiecewiseConstFn>,
    conjugation: &Matrix,
    p: f64,
) -> Result<TensorMinimizer> {
    check_p(p)?;
    if blocks.is_empty() {
        return Err(Error::InvalidBlocks(
            "tensor needs at least one block".into(),
        ));
    }
    let dim: usize = blocks.iter().map(|b| b.dim()).sum();
    if conjugation.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: conjugation.dim(),
        });
    }
    for b in &blocks {
        if b.p() != p {
            return Err(Error::InvalidArgument(
                "all block functions must be built for the same p".into(),
            ));
        }
    }
    let conj_inv = conjugation.inverse()?;
    let mut offsets = Vec::with_capacity(blocks.len());
    let mut off = 0;
    for b in &blocks {
        offsets.push(off);
        off += b.dim();
    }
    let s = fp::sqrt(blocks.len() as f64) * conjugation.op_norm();
    // ||Phi||_p^p = norm_scale^p |det C| s^{-d} for normalized blocks
    let norm_scale = fp::powf(
        fp::powi(s, dim as i32) / fp::abs(conjugation.det()),
        1.0 / p,
    );
    Ok(TensorMinimizer {
        blocks,
        offsets,
        conj_inv,
        arg_scale: s,
        norm_scale,
        p,
        dim,
    })
}

impl TensorMinimizer {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn blocks(&self) -> &[PiecewiseConstFn] {
        &self.blocks
    }

    /// `Phi_n(x)`; supported in the unit ball with unit `L^p` norm.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let y = self.conj_inv.apply(x);
        let mut prod = self.norm_scale;
        let mut z = Vec::with_capacity(self.dim);
        for (b, &off) in self.blocks.iter().zip(self.offsets.iter()) {
            z.clear();
            for k in 0..b.dim() {
                z.push(self.arg_scale * y[off + k]);
            }
            let v = b.eval(&z)?;
            if v == 0.0 {
                return Ok(0.0);
            }
            prod *= v;
        }
        Ok(prod)
    }

    /// Exact displacement quotient `int |Phi - Phi o a|^p / ||Phi||_p^p`,
    /// evaluated by enumerating the product of per-block level cells (the
    /// conjugation and rescaling cancel in the quotient). Single blocks use
    /// their closed form directly.
    pub fn displacement_quotient(&self) -> Result<f64> {
        if self.blocks.len() == 1 {
            return Ok(self.blocks[0].closed_quotient());
        }
        let tail_tol = 1e-15;
        let cells: Vec<Vec<DisplacementCell>> = self
            .blocks
            .iter()
            .map(|b| b.displacement_cells(tail_tol, 50_000))
            .collect::<Result<_>>()?;
        let mut tuples: u128 = 1;
        for c in &cells {
            tuples = tuples.saturating_mul(c.len() as u128);
        }
        if tuples > 50_000_000 {
            return Err(Error::InvalidArgument(format!(
                "cell product too large ({tuples} tuples); reduce n"
            )));
        }
        let norm: f64 = self.blocks.iter().map(|b| b.norm_pow_relative()).product();
        let p = self.p;
        let mut displacement = 0.0;
        // depth-first product over per-block cells
        let mut cursor: Vec<usize> = vec![0; cells.len()];
        let mut partial: Vec<(f64, f64)> = vec![(1.0, 1.0); cells.len() + 1];
        let mut depth = 0usize;
        loop {
            if depth == cells.len() {
                let (v, w) = partial[depth];
                let diff = v - w;
                displacement += if p == 2.0 {
                    diff * diff
                } else {
                    fp::powf(fp::abs(diff), p)
                };
                depth -= 1;
                cursor[depth] += 1;
                continue;
            }
            if cursor[depth] >= cells[depth].len() {
                if depth == 0 {
                    break;
                }
                cursor[depth] = 0;
                depth -= 1;
                cursor[depth] += 1;
                continue;
            }
            let c = &cells[depth][cursor[depth]];
            let (v, w) = partial[depth];
            partial[depth + 1] = (v * c.a, w * c.b);
            depth += 1;
        }
        Ok(displacement / norm)
    }

    /// Monte Carlo displacement quotient
    /// `mean |Psi(y) - Psi(Jy)|^p / mean |Psi(y)|^p` in block coordinates
    /// (the conjugation and rescaling cancel in the quotient), with a
    /// delta-method standard error.
    ///
    /// Sampling is stratified per block level: geometric families draw the
    /// level index from the matched geometric law and map a uniform sample
    /// of the level-zero set, shear families draw one of their `n + 1`
    /// translates uniformly. Values are still produced by the membership
    /// oracles, so the coefficient structure and the mapping law are
    /// exercised; only the measure scaling law enters the weights (it is
    /// verified separately by direct sampling). The reported standard error
    /// includes a bound for the unsampled geometric tail, which matters
    /// once a single double-precision sample can no longer reach the
    /// deepest levels (very large `n`).
    pub fn displacement_quotient_mc(&self, samples: u64, seed: u64) -> Result<mc::McRatio> {
        if samples == 0 {
            return Err(Error::InvalidArgument(
                "monte carlo needs samples > 0".into(),
            ));
        }
        let shards = self.displacement_mc_shards(samples, seed, 0, mc::shard_count(samples))?;
        self.displacement_mc_finalize(&shards)
    }

    /// Evaluates a contiguous range of Monte Carlo shards; drivers may run
    /// disjoint ranges on separate workers and concatenate the results in
    /// shard order for a bit-identical estimate.
    pub fn displacement_mc_shards(
        &self,
        samples: u64,
        seed: u64,
        shard_lo: u64,
        shard_hi: u64,
    ) -> Result<Vec<mc::ShardSum2>> {
        let samplers: Vec<BlockSampler> = self
            .blocks
            .iter()
            .map(BlockSampler::build)
            .collect::<Result<_>>()?;
        let norm_abs: f64 = self.blocks.iter().map(|b| b.norm_pow()).product();
        let p = self.p;
        let mut z: Vec<Vec<f64>> = self.blocks.iter().map(|b| vec![0.0; b.dim()]).collect();
        let mut jz: Vec<f64> = Vec::new();
        let mut out = Vec::with_capacity((shard_hi - shard_lo) as usize);
        for shard in shard_lo..shard_hi {
            out.push(mc::run_shard2(seed, samples, shard, |rng| {
                let mut inv_density = 1.0;
                let mut vx = 1.0;
                let mut vjx = 1.0;
                for (k, s) in samplers.iter().enumerate() {
                    inv_density *= s.sample(rng, &mut z[k]);
                    let b = &s.deep;
                    vx *= b.eval_raw(&z[k]).unwrap_or(0.0);
                    jz.clear();
                    jz.resize(b.dim(), 0.0);
                    // phi(a z) evaluated at the mapped point via the oracle
                    b.family().map().matvec(&z[k], &mut jz);
                    vjx *= b.eval_raw(&jz).unwrap_or(0.0);
                }
                let diff = vx - vjx;
                let num = if diff == 0.0 {
                    0.0
                } else {
                    inv_density * fp::powf(fp::abs(diff), p)
                };
                let den = if vx == 0.0 {
                    0.0
                } else {
                    inv_density * fp::powf(fp::abs(vx), p)
                };
                (num / norm_abs, den / norm_abs)
            }));
        }
        Ok(out)
    }

    /// Combines shard sums (in shard order) and widens the standard error
    /// by the unsampled geometric tail bound.
    pub fn displacement_mc_finalize(&self, shards: &[mc::ShardSum2]) -> Result<mc::McRatio> {
        let samplers: Vec<BlockSampler> = self
            .blocks
            .iter()
            .map(BlockSampler::build)
            .collect::<Result<_>>()?;
        let tail: f64 = samplers.iter().map(|s| s.tail_fraction).sum();
        let mut ratio = mc::combine2(shards);
        // both integrals lose at most `tail` relative mass to truncation
        ratio.ratio_std_err += 2.0 * tail * fp::abs(ratio.ratio);
        Ok(ratio)
    }
}

/// Importance sampler for one block's support (union of its level sets and
/// their preimages under the block map).
struct BlockSampler {
    /// Block function with a membership budget deep enough for every level
    /// the sampler can draw.
    deep: PiecewiseConstFn,
    kind: SamplerKind,
    /// Relative norm mass beyond the deepest sampled level.
    tail_fraction: f64,
}

enum SamplerKind {
    /// Uniform on `[-1, 1]^d` (unitary blocks).
    UnitBox { inv_density: f64 },
    /// Geometric level index, uniform within the mapped level-zero set.
    Stratified {
        /// geometric ratio of the per-level norm mass
        step: f64,
        /// deepest sampled level
        j_max: i32,
        /// include the extra preimage level `-1` (contractive kind)
        with_minus_one: bool,
        /// total unnormalized weight of the sampled levels
        w_total: f64,
        /// measure of level `j` is `base_measure * measure_ratio^j`
        measure_ratio: f64,
        base_measure: f64,
    },
    /// One of the `n + 1` equal-measure shear translates, uniform inside.
    ShearOrbit {
        powers: Vec<Matrix>,
        scale: f64,
        set_measure: f64,
    },
}

impl BlockSampler {
    fn build(block: &PiecewiseConstFn) -> Result<Self> {
        let fam = block.family();
        let (base_measure, _) = fam.base_measure();
        match fam.kind() {
            FamilyKind::UnitaryBall => Ok(BlockSampler {
                deep: block.clone(),
                kind: SamplerKind::UnitBox {
                    inv_density: fp::powi(2.0, fam.dim() as i32),
                },
                tail_fraction: 0.0,
            }),
            FamilyKind::ShearReal | FamilyKind::ShearComplex => {
                let n = block.n();
                let mut powers = Vec::with_capacity(n as usize + 1);
                let mut m = Matrix::identity(fam.dim());
                powers.push(m.clone());
                for _ in 0..n {
                    m = fam.map().matmul(&m);
                    powers.push(m.clone());
                }
                let scale = fp::powi(0.5, n as i32);
                let set_measure = unit_ball_volume(fam.dim())
                    * fp::powi(fam.base_radius() * scale, fam.dim() as i32);
                Ok(BlockSampler {
                    deep: block.clone(),
                    kind: SamplerKind::ShearOrbit {
                        powers,
                        scale,
                        set_measure,
                    },
                    tail_fraction: 0.0,
                })
            }
            FamilyKind::Expansive | FamilyKind::Contractive => {
                let contractive = fam.kind() == FamilyKind::Contractive;
                let d = fam.det_abs();
                let step = if contractive {
                    fp::powf(block.coefficient(), block.p()) * d
                } else {
                    fp::powf(block.coefficient(), block.p()) / d
                };
                // deepest level: enough for a 1e-12 relative tail, but never
                // past what double precision can represent spatially
                let j_tail = fp::ceil(fp::ln(1e-12) / fp::ln(step)) as i32;
                let j_max = j_tail.clamp(1, 1000);
                let tail_fraction =
                    fp::powf(step, (j_max + 1) as f64) / (1.0 - step) / block.norm_pow_relative();
                let w_total = (1.0 - fp::powf(step, (j_max + 1) as f64)) / (1.0 - step)
                    + if contractive { 1.0 } else { 0.0 };
                let mut deep = block.clone();
                deep.family.budget = j_max as u32 + 64;
                Ok(BlockSampler {
                    deep,
                    kind: SamplerKind::Stratified {
                        step,
                        j_max,
                        with_minus_one: contractive,
                        w_total,
                        measure_ratio: if contractive { d } else { 1.0 / d },
                        base_measure,
                    },
                    tail_fraction,
                })
            }
        }
    }

    /// Draws a point into `out`; returns `1 / density`.
    fn sample(&self, rng: &mut crate::rng::CounterRng, out: &mut [f64]) -> f64 {
        match &self.kind {
            SamplerKind::UnitBox { inv_density } => {
                rng.fill_uniform(out, -1.0, 1.0);
                *inv_density
            }
            SamplerKind::ShearOrbit {
                powers,
                scale,
                set_measure,
            } => {
                let n_sets = powers.len() as u64;
                let j = (rng.next_u64() % n_sets) as usize;
                let fam = self.deep.family();
                sample_ball(rng, out, fam.base_center(), fam.base_radius());
                let mapped = powers[j].apply(out);
                for (o, v) in out.iter_mut().zip(mapped.iter()) {
                    *o = scale * v;
                }
                set_measure * n_sets as f64
            }
            SamplerKind::Stratified {
                step,
                j_max,
                with_minus_one,
                w_total,
                measure_ratio,
                base_measure,
            } => {
                let fam = self.deep.family();
                let u = rng.next_f64() * w_total;
                let j: i32 = if *with_minus_one && u < 1.0 {
                    -1
                } else {
                    let t = if *with_minus_one { u - 1.0 } else { u } * (1.0 - step);
                    let j = fp::floor(fp::ln(1.0 - t.min(1.0 - 1e-16)) / fp::ln(*step)) as i32;
                    j.clamp(0, *j_max)
                };
                // uniform point of the level-zero set by rejection
                loop {
                    rng.fill_uniform(out, -1.0, 1.0);
                    if matches!(fam.membership(out), Ok(Some(0))) {
                        break;
                    }
                }
                // map it to level j
                let mut buf = vec![0.0; out.len()];
                if j >= 0 {
                    // expansive iterates map^{-1}, contractive iterates map
                    let step_map = match fam.kind() {
                        FamilyKind::Expansive => fam.map_inverse(),
                        _ => fam.map(),
                    };
                    for _ in 0..j {
                        step_map.matvec(out, &mut buf);
                        out.copy_from_slice(&buf);
                    }
                } else {
                    fam.map_inverse().matvec(out, &mut buf);
                    out.copy_from_slice(&buf);
                }
                let w_j = if j < 0 {
                    1.0
                } else {
                    fp::powf(*step, j as f64)
                };
                let measure = base_measure * fp::powf(*measure_ratio, j as f64);
                measure * w_total / w_j
            }
        }
    }
}

fn sample_ball(rng: &mut crate::rng::CounterRng, out: &mut [f64], center: &[f64], radius: f64) {
    loop {
        rng.fill_uniform(out, -1.0, 1.0);
        let r2: f64 = out.iter().map(|v| v * v).sum();
        if r2 < 1.0 {
            for (o, c) in out.iter_mut().zip(center.iter()) {
                *o = c + radius * *o;
            }
            return;
        }
    }
}

/// Builds the tensor minimizer for a map that carries block structure.
pub fn tensor_for_map(map: &LinearMapSpec, p: f64, n: u32) -> Result<TensorMinimizer> {
    let structure = map
        .blocks()
        .ok_or_else(|| Error::InvalidBlocks("map carries no Jordan block structure".into()))?;
    let fns: Vec<PiecewiseConstFn> = structure
        .blocks
        .iter()
        .map(|b| build_for_block(b, p, n))
        .collect::<Result<_>>()?;
    tensor_assemble(fns, &structure.conjugation, p)
}

/// One row of the upper-bound convergence table.
#[derive(Debug, Clone, Copy)]
pub struct BoundRow {
    pub n: u32,
    pub quotient_closed: f64,
    pub quotient_mc: f64,
    pub mc_stderr: f64,
    /// `2 (int psi) * quotient_closed`; an upper bound for the first
    /// eigenvalue that converges to it as `n` grows.
    pub upper_bound: f64,
}

/// Convergence table of the variational upper bound along the minimizing
/// sequence: exact quotient, Monte Carlo quotient with standard error, and
/// the implied eigenvalue bound `2 (int psi) * quotient`.
pub fn verify_upper_bound(
    spec: &KernelSpec,
    p: f64,
    n_list: &[u32],
    samples: u64,
    seed: u64,
) -> Result<Vec<BoundRow>> {
    check_p(p)?;
    let two_int_psi = 2.0 * spec.psi.integral();
    let mut rows = Vec::with_capacity(n_list.len());
    for (k, &n) in n_list.iter().enumerate() {
        let tensor = tensor_for_map(&spec.map, p, n)?;
        let closed = tensor.displacement_quotient()?;
        let mc = tensor.displacement_quotient_mc(samples, seed ^ ((k as u64) << 32))?;
        rows.push(BoundRow {
            n,
            quotient_closed: closed,
            quotient_mc: mc.ratio,
            mc_stderr: mc.ratio_std_err,
            upper_bound: two_int_psi * closed,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{PsiProfile, PsiShape};
    use crate::rng::CounterRng;

    fn scalar_matrix(c: f64) -> Matrix {
        Matrix::from_rows(1, vec![c]).unwrap()
    }

    #[test]
    fn membership_hand_example() {
        // a(x) = 2x with base ball (-1/2, 1/2): x = 0.4 sits in the level-0
        // difference set, x = 0.2 in level 1 (since 2 * 0.2 is level 0).
        let fam = SetFamily::expansive(scalar_matrix(2.0), 200)
            .unwrap()
            .with_base_radius(0.5)
            .unwrap();
        assert_eq!(fam.membership(&[0.4]).unwrap(), Some(0));
        assert_eq!(fam.membership(&[0.2]).unwrap(), Some(1));
        assert_eq!(fam.membership(&[2.0]).unwrap(), None);
        assert_eq!(fam.membership(&[0.0]).unwrap(), None);
    }

    #[test]
    fn membership_outside_unit_ball_is_none() {
        let fam = SetFamily::expansive(scalar_matrix(2.0), 200).unwrap();
        let mut rng = CounterRng::new(404);
        for _ in 0..1000 {
            let sign = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
            let x = [sign * rng.uniform(1.0, 10.0)];
            assert_eq!(fam.membership(&x).unwrap(), None);
        }
    }

    #[test]
    fn mapping_law_fuzz() {
        // expansive: a^{-1}(E_j) = E_{j+1}; contractive: a(G_j) = G_{j+1}
        let exp = SetFamily::expansive(scalar_matrix(2.0), 200).unwrap();
        let con = SetFamily::contractive(scalar_matrix(0.5), 200).unwrap();
        let mut rng = CounterRng::new(8);
        let mut checked = 0;
        for _ in 0..10_000 {
            let x = [rng.uniform(-1.0, 1.0)];
            if let Some(j) = exp.membership(&x).unwrap() {
                let pre = exp.map_inverse().apply(&x);
                assert_eq!(exp.membership(&pre).unwrap(), Some(j + 1));
                checked += 1;
            }
            if let Some(j) = con.membership(&x).unwrap() {
                let img = con.map().apply(&x);
                assert_eq!(con.membership(&img).unwrap(), Some(j + 1));
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn expansive_jordan_block_measure_law() {
        // Strongly non-normal expansive block (||A^{-1}|| > 1): the base
        // measure is sampled, and the measure law |E_j| = |det|^{-j} |E_0|
        // must hold by Monte Carlo.
        let block = Matrix::from_rows(2, vec![1.1, 2.0, 0.0, 1.1]).unwrap();
        let fam = SetFamily::expansive(block, 400).unwrap();
        let (m0, exact) = fam.base_measure();
        assert!(!exact);
        assert!(m0 > 0.0);
        let mut x = [0.0; 2];
        let est = mc::estimate(99, 4_000_000, |rng| {
            x[0] = rng.uniform(-1.0, 1.0);
            x[1] = rng.uniform(-1.0, 1.0);
            match fam.membership(&x) {
                Ok(Some(1)) => 4.0,
                _ => 0.0,
            }
        })
        .unwrap();
        let expect = m0 / (1.1 * 1.1);
        assert!(
            (est.value - expect).abs() < 4.0 * est.std_err + 1e-4,
            "sampled |E_1| = {} vs |E_0|/det = {}",
            est.value,
            expect
        );
    }

    #[test]
    fn disjointness_sampled() {
        let fams = [
            SetFamily::expansive(scalar_matrix(2.0), 200).unwrap(),
            SetFamily::contractive(scalar_matrix(0.5), 200).unwrap(),
        ];
        let mut rng = CounterRng::new(1234);
        for fam in &fams {
            for _ in 0..20_000 {
                let x = [rng.uniform(-1.5, 1.5)];
                assert!(fam.membership_multiplicity(&x, 24).unwrap() <= 1);
            }
        }
        let shear = SetFamily::shear_real(&JordanBlockSpec::real(1.0, 2).unwrap(), 40).unwrap();
        for _ in 0..20_000 {
            let x = [rng.uniform(-1.0, 45.0), rng.uniform(-1.0, 2.0)];
            assert!(shear.membership_multiplicity(&x, 40).unwrap() <= 1);
        }
    }

    #[test]
    fn expansive_coefficients_and_norm() {
        let phi = build_expansive(&scalar_matrix(2.0), 2.0, 1).unwrap();
        assert!((phi.coefficient() - (2.0f64.sqrt() - 1.0)).abs() < 1e-14);
        let phi_big = build_expansive(&scalar_matrix(2.0), 2.0, 1_000_000).unwrap();
        assert!((phi_big.coefficient() - 2.0f64.sqrt()).abs() < 1e-5);

        // closed-form norm vs Monte Carlo at n = 5
        let phi5 = build_expansive(&scalar_matrix(2.0), 2.0, 5).unwrap();
        let mc_norm = phi5.norm_pow_mc(1_000_000, 71).unwrap();
        assert!(
            (mc_norm.value - phi5.norm_pow()).abs() < 3.0 * mc_norm.std_err,
            "MC {} +- {} vs closed {}",
            mc_norm.value,
            mc_norm.std_err,
            phi5.norm_pow()
        );
    }

    #[test]
    fn contractive_mirror() {
        let phi = build_contractive(&scalar_matrix(0.5), 2.0, 1).unwrap();
        assert!((phi.coefficient() - (2.0f64.sqrt() - 1.0)).abs() < 1e-14);
        let phi5 = build_contractive(&scalar_matrix(0.5), 2.0, 5).unwrap();
        let mc_norm = phi5.norm_pow_mc(1_000_000, 72).unwrap();
        assert!((mc_norm.value - phi5.norm_pow()).abs() < 3.0 * mc_norm.std_err);
    }

    #[test]
    fn unitary_diag_invariance() {
        let rot = Matrix::from_rows(2, vec![0.6, 0.8, -0.8, 0.6]).unwrap();
        let phi = build_unitary_diag(&rot, 3.0).unwrap();
        let mut rng = CounterRng::new(3);
        let mut x = [0.0; 2];
        for _ in 0..100_000 {
            x[0] = rng.uniform(-1.5, 1.5);
            x[1] = rng.uniform(-1.5, 1.5);
            let ax = rot.apply(&x);
            assert_eq!(phi.eval_raw(&x).unwrap(), phi.eval_raw(&ax).unwrap());
        }
        // reflection in d = 1
        let refl = build_unitary_diag(&scalar_matrix(-1.0), 2.0).unwrap();
        assert_eq!(
            refl.eval_raw(&[0.3]).unwrap(),
            refl.eval_raw(&[-0.3]).unwrap()
        );
        assert_eq!(
            quotient_closed_form(FamilyKind::UnitaryBall, 1.0, 2.0, 1).unwrap(),
            0.0
        );
    }

    #[test]
    fn shear_quotient_exact_and_sampled() {
        for n in [1u32, 10, 100] {
            let q = quotient_closed_form(FamilyKind::ShearReal, 1.0, 2.0, n).unwrap();
            assert!((q - 2.0 / n as f64).abs() < 1e-15);
        }
        // MC displacement vs 2/n at n = 10, d = 2, lambda = 1
        let block = JordanBlockSpec::real(1.0, 2).unwrap();
        let phi = build_shear(&block, 2.0, 10).unwrap();
        let tensor = tensor_assemble(vec![phi], &Matrix::identity(2), 2.0).unwrap();
        let mc = tensor.displacement_quotient_mc(2_000_000, 55).unwrap();
        assert!(
            (mc.ratio - 0.2).abs() < 3.0 * mc.ratio_std_err,
            "MC quotient {} +- {}",
            mc.ratio,
            mc.ratio_std_err
        );
    }

    #[test]
    fn complex_shear_block() {
        let (c, s) = (1.0f64.cos(), 1.0f64.sin());
        let block = JordanBlockSpec::complex(c, s, 2).unwrap();
        let phi = build_shear(&block, 2.0, 8).unwrap();
        assert!(phi.family().base_radius() > 0.0);
        // support in the unit ball
        let mut rng = CounterRng::new(10);
        let mut x = [0.0; 4];
        for _ in 0..50_000 {
            for v in x.iter_mut() {
                *v = rng.uniform(-2.0, 2.0);
            }
            let r2: f64 = x.iter().map(|v| v * v).sum();
            if r2 > 1.0 {
                assert_eq!(phi.eval_raw(&x).unwrap(), 0.0);
            }
        }
        // norm closed form vs MC; the support is tiny, so use a generous
        // sample count and accept the absolute floor
        let mc_norm = phi.norm_pow_mc(2_000_000, 31).unwrap();
        assert!(
            (mc_norm.value - phi.norm_pow()).abs() < 3.0 * mc_norm.std_err + 1e-12,
            "MC {} +- {} vs closed {:e}",
            mc_norm.value,
            mc_norm.std_err,
            phi.norm_pow()
        );
    }

    #[test]
    fn complex_shear_needs_dimension_four() {
        // A single rotation sub-block is diagonalizable (no nilpotent
        // part); the shear construction needs dimension >= 4 and refuses.
        let block = JordanBlockSpec::complex(0.6, 0.8, 1).unwrap();
        let err = build_shear(&block, 2.0, 4).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("dimension >= 4"), "unexpected message: {msg}");
    }

    #[test]
    fn quotient_closed_form_examples() {
        // expansive, D = 2, p = 2: R(1) = 1.085787..., limit 0.0857864...
        let r1 = quotient_closed_form(FamilyKind::Expansive, 2.0, 2.0, 1).unwrap();
        assert!((r1 - 1.085787).abs() < 1e-6);
        let limit = quotient_limit(2.0, 2.0);
        assert!((limit - 0.0857864).abs() < 1e-7);
        let r_big = quotient_closed_form(FamilyKind::Expansive, 2.0, 2.0, 100_000).unwrap();
        assert!((r_big - limit).abs() < 1e-4);
        // shear at n = 100
        let q = quotient_closed_form(FamilyKind::ShearReal, 1.0, 3.0, 100).unwrap();
        assert!((q - 0.02).abs() < 1e-15);
    }

    #[test]
    fn quotient_gap_monotone_under_doubling() {
        // |R(n) - limit| shrinks when n doubles, from n = 4 on
        for (kind, det) in [(FamilyKind::Expansive, 2.0), (FamilyKind::Contractive, 0.4)] {
            for p in [1.0, 2.0, 3.0] {
                let limit = quotient_limit(det, p);
                let mut n = 4u32;
                let mut prev = (quotient_closed_form(kind, det, p, n).unwrap() - limit).abs();
                while n <= 512 {
                    n *= 2;
                    let gap = (quotient_closed_form(kind, det, p, n).unwrap() - limit).abs();
                    // p = 1 contractive hits the limit exactly for every n
                    assert!(
                        gap <= prev + 1e-14 * (1.0 + limit),
                        "{kind:?} p={p}: gap grew {prev} -> {gap} at n={n}"
                    );
                    prev = gap;
                }
            }
        }
    }

    #[test]
    fn closed_quotient_matches_cell_series() {
        for n in [1u32, 5, 40] {
            for p in [1.0, 2.0, 3.5] {
                for phi in [
                    build_expansive(&scalar_matrix(2.0), p, n).unwrap(),
                    build_contractive(&scalar_matrix(0.5), p, n).unwrap(),
                ] {
                    let cells = phi.displacement_cells(1e-16, 1_000_000).unwrap();
                    let series: f64 = cells
                        .iter()
                        .map(|c| fp::powf(fp::abs(c.a - c.b), p))
                        .sum::<f64>()
                        / phi.norm_pow_relative();
                    let closed = phi.closed_quotient();
                    assert!(
                        (series - closed).abs() < 1e-10 * closed.max(1.0),
                        "n={n} p={p}: series {series} vs closed {closed}"
                    );
                }
            }
        }
    }

    #[test]
    fn tensor_single_block_is_rescaled_block() {
        let phi = build_expansive(&scalar_matrix(2.0), 2.0, 4).unwrap();
        let tensor = tensor_assemble(vec![phi.clone()], &Matrix::identity(1), 2.0).unwrap();
        // C = I in d = 1: the tensor equals the normalized block function
        let mut rng = CounterRng::new(21);
        for _ in 0..2000 {
            let x = [rng.uniform(-1.2, 1.2)];
            let a = tensor.eval(&x).unwrap();
            let b = phi.eval(&x).unwrap();
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
        let dq = tensor.displacement_quotient().unwrap();
        assert!((dq - phi.closed_quotient()).abs() < 1e-12);
    }

    #[test]
    fn tensor_det_one_product_vanishes() {
        // expansive(2) x contractive(1/2) in d = 2: |det A| = 1 and the
        // displacement quotient must sink toward |1 - 1|^p = 0.
        let build = |n: u32| {
            let e = build_expansive(&scalar_matrix(2.0), 2.0, n).unwrap();
            let c = build_contractive(&scalar_matrix(0.5), 2.0, n).unwrap();
            tensor_assemble(vec![e, c], &Matrix::identity(2), 2.0)
                .unwrap()
                .displacement_quotient()
                .unwrap()
        };
        let q8 = build(8);
        let q64 = build(64);
        assert!(q64 < q8, "quotient must decrease with n: {q8} -> {q64}");
        assert!(q64 < 0.1, "quotient at n=64 should be small, got {q64}");
    }

    #[test]
    fn tensor_expansive_plus_rotation_limit() {
        // expansive(2) x rotation in d = 3: the unitary factor drops out
        // and the quotient tends to |1 - 2^{-1/p}|^p.
        let p = 2.0;
        let e = build_expansive(&scalar_matrix(2.0), p, 400).unwrap();
        let rot = Matrix::from_rows(2, vec![0.6, 0.8, -0.8, 0.6]).unwrap();
        let u = build_unitary_diag(&rot, p).unwrap();
        let tensor = tensor_assemble(vec![e.clone(), u], &Matrix::identity(3), p).unwrap();
        let q = tensor.displacement_quotient().unwrap();
        assert!(
            (q - e.closed_quotient()).abs() < 1e-12,
            "unitary factor must drop out exactly"
        );
        assert!((q - quotient_limit(2.0, p)).abs() < 0.01);
    }

    #[test]
    fn tensor_respects_conjugation_and_support() {
        let p = 2.0;
        let e = build_expansive(&scalar_matrix(2.0), p, 6).unwrap();
        let c6 = build_contractive(&scalar_matrix(0.5), p, 6).unwrap();
        let conj = Matrix::from_rows(2, vec![1.0, 0.7, -0.3, 1.1]).unwrap();
        let tensor = tensor_assemble(vec![e, c6], &conj, p).unwrap();

        let mut rng = CounterRng::new(77);
        let mut x = [0.0; 2];
        for _ in 0..50_000 {
            x[0] = rng.uniform(-3.0, 3.0);
            x[1] = rng.uniform(-3.0, 3.0);
            if x[0] * x[0] + x[1] * x[1] > 1.0 {
                assert_eq!(tensor.eval(&x).unwrap(), 0.0);
            }
        }

        let series = tensor.displacement_quotient().unwrap();
        let mc = tensor
            .displacement_quotient_mc(2_000_000, 0xC0FFEE)
            .unwrap();
        assert!(
            (mc.ratio - series).abs() < 3.0 * mc.ratio_std_err + 2e-3,
            "series {series} vs MC {} +- {}",
            mc.ratio,
            mc.ratio_std_err
        );
        // the block-coordinate integrals are normalized
        let den = mc.denominator;
        assert!((den.value - 1.0).abs() < 4.0 * den.std_err + 1e-3);
    }

    #[test]
    fn upper_bound_table_converges() {
        let psi = PsiProfile::new(PsiShape::Box, 0.5, 1).unwrap();
        let map = LinearMapSpec::scalar(2.0).unwrap();
        let spec = KernelSpec::new(psi, map).unwrap();
        let rows = verify_upper_bound(&spec, 2.0, &[1, 10, 100, 2000], 300_000, 2024).unwrap();
        let lambda = 2.0 * (1.0 - 0.5f64.sqrt()) * (1.0 - 0.5f64.sqrt());
        for w in rows.windows(2) {
            assert!(w[1].upper_bound <= w[0].upper_bound + 1e-12);
        }
        for r in &rows {
            assert!(
                r.upper_bound >= lambda - 1e-12,
                "bound {r:?} below the eigenvalue"
            );
            assert!(
                (r.quotient_mc - r.quotient_closed).abs() < 3.0 * r.mc_stderr,
                "row {r:?} disagrees with MC"
            );
        }
        // the gap closes like 2/n for this kernel
        let last = rows.last().unwrap();
        assert!((last.upper_bound - lambda) / lambda < 0.01);
    }

    #[test]
    fn builder_domain_checks() {
        assert!(build_expansive(&scalar_matrix(2.0), 2.0, 0).is_err());
        assert!(build_expansive(&scalar_matrix(0.5), 2.0, 1).is_err());
        assert!(build_contractive(&scalar_matrix(2.0), 2.0, 1).is_err());
        assert!(SetFamily::expansive(Matrix::identity(2), 100).is_err());
    }
}
