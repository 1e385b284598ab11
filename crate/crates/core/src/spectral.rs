//! First-eigenvalue machinery.
//!
//! The first eigenvalue of the nonlocal operator on the whole space has the
//! closed form `2 (int psi) | |det A|^{-1/p} - 1 |^p`. On balls `B_R` (with
//! zero extension outside) the discrete Rayleigh quotient is minimized
//! directly: a shifted power iteration on the symmetric operator for
//! `p = 2`, normalized subgradient descent with restarts for general `p`.
//! Expanding-domain sweeps approach the whole-space value from above.
//!
//! The `p -> infinity` diagnostics live here too: the closed-form table of
//! `lambda_{1,p}^{1/p}` and the staircase witnesses with small kernel-pair
//! oscillation `Q_inf`.

use crate::discretize::{double_integral_with_table, Field, Grid, GridShape};
use crate::fp;
use crate::kernel::{KernelSpec, KernelTable, LinearMapSpec, PsiProfile};
use crate::minimizers;
use crate::reduce::tree_sum_by;
use crate::rng::CounterRng;
use crate::{Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

/// How an eigenvalue estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMethod {
    ClosedForm,
    P2Eigensolve,
    Descent,
}

impl EigenMethod {
    pub fn name(&self) -> &'static str {
        match self {
            EigenMethod::ClosedForm => "closed_form",
            EigenMethod::P2Eigensolve => "p2_eigensolve",
            EigenMethod::Descent => "descent",
        }
    }
}

/// A numerical value of the first eigenvalue with its provenance.
#[derive(Debug, Clone, Copy)]
pub struct EigenEstimate {
    pub value: f64,
    pub p: f64,
    /// Ball radius of the domain; infinite for the closed form.
    pub domain_radius: f64,
    /// Grid spacing; zero for the closed form.
    pub spacing: f64,
    pub method: EigenMethod,
    pub iterations: u64,
    pub residual: f64,
}

/// Closed-form first eigenvalue on the whole space:
/// `2 (int psi) | |det A|^{-1/p} - 1 |^p`; zero exactly when `|det A| = 1`.
pub fn lambda_closed_form(p: f64, map: &LinearMapSpec, psi: &PsiProfile) -> Result<EigenEstimate> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "p must be >= 1 and finite, got {p}"
        )));
    }
    let det = fp::abs(map.det());
    let factor = fp::abs(fp::powf(det, -1.0 / p) - 1.0);
    let value = 2.0 * psi.integral() * fp::powf(factor, p);
    Ok(EigenEstimate {
        value,
        p,
        domain_radius: f64::INFINITY,
        spacing: 0.0,
        method: EigenMethod::ClosedForm,
        iterations: 0,
        residual: 0.0,
    })
}

/// The optimal constant in `|a - b|^p >= eta |a|^p + theta |b|^p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaConstant {
    pub eta: f64,
    pub p: f64,
    pub theta: f64,
}

/// `theta(eta, p) = -eta / (1 - eta^{1/(p-1)})^{p-1}` for `p > 1`, `-eta`
/// for `p = 1`. The inequality holds for all real `a, b` and the constant
/// cannot be improved.
pub fn theta_constant(eta: f64, p: f64) -> Result<ThetaConstant> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "eta must lie in (0,1), got {eta}"
        )));
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "p must be >= 1 and finite, got {p}"
        )));
    }
    let theta = if p == 1.0 {
        -eta
    } else {
        -eta / fp::powf(1.0 - fp::powf(eta, 1.0 / (p - 1.0)), p - 1.0)
    };
    Ok(ThetaConstant { eta, p, theta })
}

/// Discrete Rayleigh quotient of a field: kernel energy over `||u||_p^p`.
pub fn rayleigh_quotient(
    field: &Field,
    spec: &KernelSpec,
    p: f64,
    backend: crate::discretize::Backend,
) -> Result<f64> {
    if field.is_zero() {
        return Err(Error::InvalidArgument(
            "Rayleigh quotient of the zero field is undefined".into(),
        ));
    }
    let numerator = crate::discretize::double_integral_p(field, spec, p, backend)?.value;
    let denom = fp::powf(field.lr_norm(p)?, p);
    Ok(numerator / denom)
}

/// Same with a prebuilt kernel table.
pub fn rayleigh_quotient_with_table(field: &Field, table: &KernelTable, p: f64) -> Result<f64> {
    if field.is_zero() {
        return Err(Error::InvalidArgument(
            "Rayleigh quotient of the zero field is undefined".into(),
        ));
    }
    let numerator = double_integral_with_table(field, table, p);
    Ok(numerator / fp::powf(field.lr_norm(p)?, p))
}

/// Options for the Rayleigh minimizers.
#[derive(Debug, Clone, Copy)]
pub struct MinimizeOpts {
    /// Extra random starting fields for the descent path.
    pub restarts: u32,
    pub max_iters: u64,
    /// Convergence threshold on the relative quotient change over a
    /// 50-iteration window.
    pub tol: f64,
    pub seed: u64,
}

impl Default for MinimizeOpts {
    fn default() -> Self {
        MinimizeOpts {
            restarts: 4,
            max_iters: 200_000,
            tol: 1e-9,
            seed: 1,
        }
    }
}

struct QuotientWorkspace<'a> {
    table: &'a KernelTable,
    h_d: f64,
    h_2d: f64,
    p: f64,
}

impl<'a> QuotientWorkspace<'a> {
    fn new(table: &'a KernelTable, grid: &Grid, p: f64) -> Self {
        let h_d = grid.cell_measure();
        QuotientWorkspace {
            table,
            h_d,
            h_2d: h_d * h_d,
            p,
        }
    }

    fn energy(&self, u: &[f64]) -> f64 {
        let p = self.p;
        let pow = |s: f64| {
            if p == 2.0 {
                s * s
            } else {
                fp::powf(fp::abs(s), p)
            }
        };
        let pairs = tree_sum_by(self.table.pairs.len(), |k| {
            let e = &self.table.pairs[k];
            e.k * pow(u[e.i as usize] - u[e.j as usize])
        });
        let halo = tree_sum_by(u.len(), |i| {
            if self.table.halo[i] == 0.0 || u[i] == 0.0 {
                0.0
            } else {
                self.table.halo[i] * pow(u[i])
            }
        });
        2.0 * self.h_2d * (pairs + halo)
    }

    fn mass_pow(&self, u: &[f64]) -> f64 {
        let p = self.p;
        let pow = |s: f64| {
            if p == 2.0 {
                s * s
            } else {
                fp::powf(fp::abs(s), p)
            }
        };
        self.h_d * tree_sum_by(u.len(), |i| pow(u[i]))
    }

    fn quotient(&self, u: &[f64]) -> f64 {
        self.energy(u) / self.mass_pow(u)
    }

    /// Gradient of the quotient (a subgradient at kinks for small `p`).
    fn quotient_gradient(&self, u: &[f64], q: f64, out: &mut [f64]) {
        let p = self.p;
        let flux = |s: f64| {
            if p == 2.0 {
                s
            } else {
                fp::signed_pow(s, p - 1.0)
            }
        };
        let n_pow = self.mass_pow(u);
        for o in out.iter_mut() {
            *o = 0.0;
        }
        for e in self.table.pairs.iter() {
            let (i, j) = (e.i as usize, e.j as usize);
            let t = e.k * flux(u[i] - u[j]);
            out[i] += t;
            out[j] -= t;
        }
        for (i, &ui) in u.iter().enumerate() {
            if self.table.halo[i] != 0.0 {
                out[i] += self.table.halo[i] * flux(ui);
            }
        }
        // d/du_i [E/N] = (E' - q N') / N
        let ce = 2.0 * self.h_2d * p;
        let cn = self.h_d * p;
        for (o, &ui) in out.iter_mut().zip(u.iter()) {
            *o = (ce * *o - q * cn * flux(ui)) / n_pow;
        }
    }
}

fn normalize_p(u: &mut [f64], h_d: f64, p: f64) {
    let pow = |s: f64| {
        if p == 2.0 {
            s * s
        } else {
            fp::powf(fp::abs(s), p)
        }
    };
    let norm = fp::powf(h_d * tree_sum_by(u.len(), |i| pow(u[i])), 1.0 / p);
    if norm > 0.0 {
        for v in u.iter_mut() {
            *v /= norm;
        }
    }
}

/// Warm-start field on a ball grid: the sampled tensor minimizer rescaled
/// to fill the ball when block structure is available, otherwise (or when
/// the sampling resolves to zero) a radial tent.
fn warm_start_field(spec: &KernelSpec, p: f64, grid: &Arc<Grid>) -> Field {
    let radius = grid.half_width();
    if let Ok(tensor) = minimizers::tensor_for_map(&spec.map, p, 16) {
        let mut ok = true;
        let values: Vec<f64> = (0..grid.len())
            .map(|i| {
                let x: Vec<f64> = grid.point(i).iter().map(|c| c / radius).collect();
                match tensor.eval(&x) {
                    Ok(v) => v,
                    Err(_) => {
                        ok = false;
                        0.0
                    }
                }
            })
            .collect();
        if ok && values.iter().any(|&v| v != 0.0) {
            if let Ok(f) = Field::from_values(Arc::clone(grid), values) {
                return f;
            }
        }
    }
    let mut tent = Field::zeros(Arc::clone(grid));
    for i in 0..grid.len() {
        let r: f64 = fp::sqrt(grid.point(i).iter().map(|c| c * c).sum());
        tent.values_mut()[i] = (1.0 - r / radius).max(0.0);
    }
    tent
}

/// Upper bound for the discrete infimum of the Rayleigh quotient over
/// fields supported in the ball `B_R` (zero extension outside).
///
/// `p = 2` uses a shifted power iteration on the symmetric operator (the
/// shift is a Gershgorin bound of the spectrum); general `p` runs
/// normalized subgradient descent with backtracking from the warm start, a
/// radial tent, and `opts.restarts` seeded random fields, returning the
/// best value found. Non-convergence is reported through
/// `residual > opts.tol`, not as an error.
pub fn minimize_rayleigh_on_ball(
    spec: &KernelSpec,
    p: f64,
    radius: f64,
    spacing: f64,
    opts: &MinimizeOpts,
) -> Result<EigenEstimate> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "p must be >= 1 and finite, got {p}"
        )));
    }
    if !(radius >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ball radius must be >= 1, got {radius}"
        )));
    }
    let grid = Arc::new(Grid::new(spec.dim(), radius, spacing, GridShape::Ball)?);
    let table = KernelTable::build(spec, &grid)?;
    if p == 2.0 {
        p2_eigensolve(spec, &grid, &table, opts)
    } else {
        descent_minimize(spec, p, &grid, &table, opts)
    }
}

/// The general-`p` descent path on its own, so the `p = 2` eigensolve can
/// be cross-checked against an independent minimizer.
pub fn minimize_rayleigh_descent(
    spec: &KernelSpec,
    p: f64,
    radius: f64,
    spacing: f64,
    opts: &MinimizeOpts,
) -> Result<EigenEstimate> {
    let grid = Arc::new(Grid::new(spec.dim(), radius, spacing, GridShape::Ball)?);
    let table = KernelTable::build(spec, &grid)?;
    descent_minimize(spec, p, &grid, &table, opts)
}

fn p2_eigensolve(
    spec: &KernelSpec,
    grid: &Arc<Grid>,
    table: &KernelTable,
    opts: &MinimizeOpts,
) -> Result<EigenEstimate> {
    let n = grid.len();
    let two_hd = 2.0 * grid.cell_measure();
    // B u|_i = 2 h^d [sum_j K_ij (u_i - u_j) + halo_i u_i];
    // quotient(u) = u^T B u / u^T u
    let matvec = |u: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = two_hd * table.halo[i] * u[i];
        }
        for e in table.pairs.iter() {
            let (i, j) = (e.i as usize, e.j as usize);
            let t = two_hd * e.k * (u[i] - u[j]);
            out[i] += t;
            out[j] -= t;
        }
    };
    // Gershgorin upper bound of the spectrum
    let mut shift = 0.0f64;
    for i in 0..n {
        let s = two_hd * (2.0 * table.row_sum[i] + table.halo[i]);
        if s > shift {
            shift = s;
        }
    }
    shift = shift * (1.0 + 1e-12) + 1e-300;

    let warm = warm_start_field(spec, 2.0, grid);
    let mut v = warm.values().to_vec();
    let norm0 = fp::sqrt(v.iter().map(|x| x * x).sum());
    if norm0 == 0.0 {
        return Err(Error::InvalidArgument("warm start field is zero".into()));
    }
    for x in v.iter_mut() {
        *x /= norm0;
    }

    let mut bv = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut q_window = f64::INFINITY;
    let mut q;
    let mut iterations = 0u64;
    loop {
        matvec(&v, &mut bv);
        q = v.iter().zip(bv.iter()).map(|(a, b)| a * b).sum();
        if iterations >= opts.max_iters {
            break;
        }
        // power step on (shift I - B)
        let mut norm = 0.0;
        for i in 0..n {
            next[i] = shift * v[i] - bv[i];
            norm += next[i] * next[i];
        }
        let norm = fp::sqrt(norm);
        if norm == 0.0 {
            break;
        }
        for i in 0..n {
            v[i] = next[i] / norm;
        }
        iterations += 1;
        if iterations % 50 == 0 {
            let change = fp::abs(q_window - q) / fp::abs(q).max(1e-300);
            if change < opts.tol {
                matvec(&v, &mut bv);
                q = v.iter().zip(bv.iter()).map(|(a, b)| a * b).sum();
                break;
            }
            q_window = q;
        }
    }
    let residual = fp::sqrt(
        v.iter()
            .zip(bv.iter())
            .map(|(&vi, &bi)| (bi - q * vi) * (bi - q * vi))
            .sum::<f64>(),
    );
    Ok(EigenEstimate {
        value: q,
        p: 2.0,
        domain_radius: grid.half_width(),
        spacing: grid.spacing(),
        method: EigenMethod::P2Eigensolve,
        iterations,
        residual,
    })
}

fn descent_minimize(
    spec: &KernelSpec,
    p: f64,
    grid: &Arc<Grid>,
    table: &KernelTable,
    opts: &MinimizeOpts,
) -> Result<EigenEstimate> {
    let ws = QuotientWorkspace::new(table, grid, p);
    let n = grid.len();
    let h_d = grid.cell_measure();

    let mut starts: Vec<Vec<f64>> = Vec::new();
    starts.push(warm_start_field(spec, p, grid).values().to_vec());
    {
        let radius = grid.half_width();
        let tent: Vec<f64> = (0..n)
            .map(|i| {
                let r: f64 = fp::sqrt(grid.point(i).iter().map(|c| c * c).sum());
                (1.0 - r / radius).max(0.0)
            })
            .collect();
        starts.push(tent);
    }
    for k in 0..opts.restarts {
        let mut rng = CounterRng::substream(opts.seed, k as u64 + 1);
        starts.push((0..n).map(|_| rng.uniform(-1.0, 1.0)).collect());
    }

    let mut best: Option<(f64, f64)> = None; // (value, residual)
    let mut total_iters = 0u64;
    let budget_per_start = (opts.max_iters / starts.len() as u64).max(100);
    for mut u in starts {
        if u.iter().all(|&x| x == 0.0) {
            continue;
        }
        normalize_p(&mut u, h_d, p);
        let mut q = ws.quotient(&u);
        let mut g = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut step = 1.0f64;
        let mut q_window = q;
        let mut residual = f64::INFINITY;
        let mut iters = 0u64;
        while iters < budget_per_start {
            ws.quotient_gradient(&u, q, &mut g);
            let gnorm2: f64 = g.iter().map(|x| x * x).sum();
            if gnorm2 == 0.0 {
                residual = 0.0;
                break;
            }
            let mut accepted = false;
            let mut t = step;
            for _ in 0..40 {
                for ((tr, &ui), &gi) in trial.iter_mut().zip(u.iter()).zip(g.iter()) {
                    *tr = ui - t * gi;
                }
                normalize_p(&mut trial, h_d, p);
                let q_new = ws.quotient(&trial);
                if q_new < q {
                    u.copy_from_slice(&trial);
                    q = q_new;
                    step = t * 1.5;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            iters += 1;
            if !accepted {
                // line search exhausted: first-order stationary to rounding
                residual = 0.0;
                break;
            }
            if iters % 50 == 0 {
                let change = fp::abs(q_window - q) / fp::abs(q).max(1e-300);
                if change < opts.tol {
                    residual = change;
                    break;
                }
                q_window = q;
            }
        }
        if residual.is_infinite() {
            residual = fp::abs(q_window - q) / fp::abs(q).max(1e-300);
        }
        total_iters += iters;
        best = match best {
            None => Some((q, residual)),
            Some((bq, br)) => {
                if q < bq {
                    Some((q, residual))
                } else {
                    Some((bq, br))
                }
            }
        };
    }
    let (value, residual) = best
        .ok_or_else(|| Error::InvalidArgument("no usable starting field for the descent".into()))?;
    Ok(EigenEstimate {
        value,
        p,
        domain_radius: grid.half_width(),
        spacing: grid.spacing(),
        method: EigenMethod::Descent,
        iterations: total_iters,
        residual,
    })
}

/// Eigenvalue estimates over strictly increasing ball radii on nested
/// grids; within solver tolerance the estimates are nonincreasing because
/// the feasible sets grow under zero extension.
pub fn expanding_domain_sweep(
    spec: &KernelSpec,
    p: f64,
    radii: &[f64],
    spacing: f64,
    opts: &MinimizeOpts,
) -> Result<Vec<EigenEstimate>> {
    if radii.is_empty() {
        return Err(Error::InvalidArgument("radii list is empty".into()));
    }
    for w in radii.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidArgument(format!(
                "radii must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    for &r in radii {
        let ratio = r / spacing;
        if fp::abs(ratio - fp::round(ratio)) > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "radius {r} is not a lattice multiple of spacing {spacing}; grids would not nest"
            )));
        }
    }
    radii
        .iter()
        .map(|&r| minimize_rayleigh_on_ball(spec, p, r, spacing, opts))
        .collect()
}

/// Which pairs the `Q_inf` scan ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QInfSupport {
    /// Pairs with at least one endpoint in the support of the field (the
    /// other value is zero by extension), so a compactly supported field
    /// sees its jump to the exterior.
    Either,
    /// The literal reading: both endpoints inside the support.
    Both,
}

/// Largest oscillation `|u(x) - u(y)|` over kernel-positive pairs meeting
/// the support, divided by `max |u|`. The scan is exhaustive over grid
/// pairs and, in the `Either` reading, pairs reaching the exterior lattice.
pub fn q_infinity(field: &Field, spec: &KernelSpec, support: QInfSupport) -> Result<f64> {
    if field.is_zero() {
        return Err(Error::InvalidArgument(
            "Q_inf of the zero field is undefined".into(),
        ));
    }
    let table = KernelTable::build(spec, field.grid())?;
    let u = field.values();
    let mut max_jump = 0.0f64;
    for e in table.pairs.iter() {
        let (ui, uj) = (u[e.i as usize], u[e.j as usize]);
        let relevant = match support {
            QInfSupport::Either => ui != 0.0 || uj != 0.0,
            QInfSupport::Both => ui != 0.0 && uj != 0.0,
        };
        if relevant {
            max_jump = max_jump.max(fp::abs(ui - uj));
        }
    }
    if support == QInfSupport::Either {
        for (i, &hi) in table.halo.iter().enumerate() {
            if hi > 0.0 && u[i] != 0.0 {
                max_jump = max_jump.max(fp::abs(u[i]));
            }
        }
    }
    let max_abs = u.iter().fold(0.0f64, |m, v| m.max(fp::abs(*v)));
    Ok(max_jump / max_abs)
}

/// A staircase witness: the sampled field plus its construction data.
#[derive(Debug, Clone)]
pub struct Staircase {
    pub field: Field,
    /// `R^0 = 1 < R^1 < ...`, one entry past the last positive level.
    pub shell_radii: Vec<f64>,
    /// Distinct values `1, 1 - eps, ..., 0` (including the zero level).
    pub level_values: Vec<f64>,
    pub support_radius: f64,
    pub required_half_width: f64,
}

/// Half-width a grid must have to hold the staircase for `epsilon`
/// together with every kernel partner of its support.
pub fn staircase_required_half_width(spec: &KernelSpec, epsilon: f64) -> Result<f64> {
    let radii = staircase_radii(spec, epsilon)?;
    Ok(*radii.last().expect("at least two radii"))
}

fn staircase_radii(spec: &KernelSpec, epsilon: f64) -> Result<Vec<f64>> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in (0,1): the construction needs at least two levels, got {epsilon}"
        )));
    }
    // positive level values are 1 - k eps for k = 0..=k_max
    let mut k_max = 0u32;
    while 1.0 - (k_max + 1) as f64 * epsilon > 0.0 {
        k_max += 1;
        if k_max > 10_000 {
            return Err(Error::InvalidArgument(format!(
                "epsilon = {epsilon} needs more than 10^4 staircase shells"
            )));
        }
    }
    let norm_a = spec.map.op_norm();
    let norm_inv = spec.map.inv_op_norm();
    let safety = 1.01;
    let mut radii = vec![1.0];
    // one radius past the last positive level, so the region holding all
    // kernel partners of the support is known
    for _ in 0..=k_max {
        let r = *radii.last().unwrap();
        let next = safety * (norm_a * r + 1.0).max(norm_inv * (r + 1.0));
        radii.push(next);
    }
    Ok(radii)
}

/// Builds the piecewise-constant staircase: value `1` on `|x| <= 1`, value
/// `1 - k eps` on the shell `R^{k-1} < |x| <= R^k`, zero beyond the last
/// positive shell. The radius recursion
/// `R^{k+1} = 1.01 max(||A|| R^k + 1, ||A^{-1}|| (R^k + 1))` guarantees
/// `K(x,y) = 0` whenever `|x| <= R^k` and `|y| >= R^{k+1}`, so every
/// kernel-positive pair joins adjacent levels and the oscillation stays at
/// `eps`.
pub fn staircase_witness(spec: &KernelSpec, epsilon: f64, grid: &Arc<Grid>) -> Result<Staircase> {
    if grid.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: grid.dim(),
        });
    }
    let radii = staircase_radii(spec, epsilon)?;
    let required = *radii.last().unwrap();
    if grid.half_width() < required * (1.0 - 1e-12) {
        return Err(Error::InvalidGrid(format!(
            "grid half width {} too small for the staircase; needs at least {required}",
            grid.half_width()
        )));
    }
    let support_radius = radii[radii.len() - 2];
    let mut level_values: Vec<f64> = (0..radii.len() - 1)
        .map(|k| (1.0 - k as f64 * epsilon).max(0.0))
        .collect();
    level_values.push(0.0);
    level_values.dedup();
    let field = Field::from_fn(Arc::clone(grid), |x| {
        let r: f64 = fp::sqrt(x.iter().map(|c| c * c).sum());
        if r <= 1.0 {
            return 1.0;
        }
        for (k, rad) in radii.iter().enumerate().skip(1) {
            if r <= *rad {
                return (1.0 - k as f64 * epsilon).max(0.0);
            }
        }
        0.0
    })?;
    Ok(Staircase {
        field,
        shell_radii: radii,
        level_values,
        support_radius,
        required_half_width: required,
    })
}

/// One row of the `p -> infinity` table.
#[derive(Debug, Clone, Copy)]
pub struct PinfRow {
    pub p: f64,
    pub lambda: f64,
    pub lambda_root: f64,
}

/// Closed-form table of `(p, lambda_{1,p}, lambda_{1,p}^{1/p})` for an
/// increasing list of exponents. Both columns sink to zero for large `p`
/// whenever `|det A| != 1`, and vanish identically when `|det A| = 1`.
pub fn pinf_limit_table(
    map: &LinearMapSpec,
    psi: &PsiProfile,
    p_list: &[f64],
) -> Result<Vec<PinfRow>> {
    if p_list.is_empty() {
        return Err(Error::InvalidArgument("p list is empty".into()));
    }
    for w in p_list.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidArgument(
                "p list must be strictly increasing".into(),
            ));
        }
    }
    p_list
        .iter()
        .map(|&p| {
            let lambda = lambda_closed_form(p, map, psi)?.value;
            let root = if lambda == 0.0 {
                0.0
            } else {
                fp::powf(lambda, 1.0 / p)
            };
            Ok(PinfRow {
                p,
                lambda,
                lambda_root: root,
            })
        })
        .collect()
}

/// Formats an estimate for diagnostics.
pub fn describe_estimate(e: &EigenEstimate) -> String {
    format!(
        "lambda ~ {:.9} (p = {}, R = {}, h = {}, {}, {} iters, residual {:.3e})",
        e.value,
        e.p,
        e.domain_radius,
        e.spacing,
        e.method.name(),
        e.iterations,
        e.residual
    )
}
