//! Explicit time integration of the nonlocal evolution equation
//! `u_t(x) = int K(x,y) |u(y)-u(x)|^{p-2} (u(y)-u(x)) dy` on a truncated
//! grid, with norm tracking and decay-law fitting.
//!
//! Truncation offers two couplings to the exterior, where fields are zero:
//!
//! - [`BoundaryMode::Conserving`] sums fluxes over grid pairs only. The
//!   pairwise-antisymmetric update conserves the discrete mass to roundoff
//!   and is the natural closed system on the box.
//! - [`BoundaryMode::Absorbing`] also integrates the flux into the exterior
//!   lattice (the zero extension of the whole-space equation), so mass
//!   leaves through the boundary; the absorbed mass is tracked and the
//!   total is conserved to roundoff. Long-time decay experiments need this
//!   mode: a mass-conserving box relaxes to a positive constant and its
//!   norms plateau instead of decaying.
//!
//! Both modes enforce, per accepted step: finite state, conservation of
//! (box + absorbed) mass, a nonincreasing maximum norm and, for nonnegative
//! data, a nonincreasing `L^1` norm. For `p < 2` a violated step is retried
//! with half the step size; for `p >= 2` under the stability bound a
//! violation aborts with diagnostics.

use crate::discretize::Field;
use crate::fp;
use crate::kernel::{KernelSpec, KernelTable};
use crate::reduce::tree_sum_by;
use crate::{Error, Result};
use alloc::format;
use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ExplicitEuler,
    Heun,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::ExplicitEuler => "explicit_euler",
            Scheme::Heun => "heun",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    Conserving,
    Absorbing,
}

impl BoundaryMode {
    pub fn name(&self) -> &'static str {
        match self {
            BoundaryMode::Conserving => "conserving",
            BoundaryMode::Absorbing => "absorbing",
        }
    }
}

/// Time-stepping configuration.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Flux exponent; must exceed 1 so the flux `|s|^{p-2} s` is continuous.
    pub p: f64,
    /// Fixed step size; `None` selects the stability bound each step
    /// (available for `p >= 2` only).
    pub dt: Option<f64>,
    pub t_final: f64,
    pub scheme: Scheme,
    /// Multiplies the stability bound, in `(0, 1]`.
    pub safety: f64,
    /// Warn once the boundary-band `L^1` mass exceeds this fraction of the
    /// initial mass (truncation no longer faithful).
    pub boundary_mass_threshold: f64,
    /// Record norms every this many accepted steps.
    pub record_every: usize,
    pub boundary: BoundaryMode,
    /// Floor inside the local Lipschitz factor of the stability bound.
    pub m_floor: f64,
    /// Keep a field snapshot every this many accepted steps (0 = never).
    pub snapshot_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            p: 2.0,
            dt: None,
            t_final: 1.0,
            scheme: Scheme::ExplicitEuler,
            safety: 0.5,
            boundary_mass_threshold: 1e-6,
            record_every: 1,
            boundary: BoundaryMode::Conserving,
            m_floor: 0.0,
            snapshot_every: 0,
        }
    }
}

/// Norm histories of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    /// The configured extra norm exponent.
    pub r: f64,
    pub lr: Vec<f64>,
    pub linf: Vec<f64>,
    /// Signed box mass `sum u_i h^d`.
    pub mass: Vec<f64>,
    /// `L^1` mass of the points coupled to the exterior lattice.
    pub boundary_mass: Vec<f64>,
    /// Cumulative mass handed to the exterior (absorbing mode; zero
    /// otherwise).
    pub absorbed: Vec<f64>,
    pub snapshots: Vec<(f64, Field)>,
    /// First time the boundary mass exceeded the configured threshold.
    pub boundary_warning: Option<f64>,
    pub steps: u64,
    pub retries: u64,
}

impl Trajectory {
    pub fn norms(&self, r: f64) -> Result<&[f64]> {
        if r == 1.0 {
            Ok(&self.l1)
        } else if r == 2.0 {
            Ok(&self.l2)
        } else if r == self.r {
            Ok(&self.lr)
        } else if r.is_infinite() {
            Ok(&self.linf)
        } else {
            Err(Error::InvalidArgument(format!(
                "norm exponent {r} was not tracked (have 1, 2, {}, inf)",
                self.r
            )))
        }
    }
}

/// `sign(s) |s|^{p-1}`, the flux of the evolution.
#[inline]
fn flux(s: f64, p: f64) -> f64 {
    if p == 2.0 {
        s
    } else {
        fp::signed_pow(s, p - 1.0)
    }
}

fn check_solver_p(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "evolution needs p > 1 (the flux is discontinuous at p = 1), got {p}"
        )));
    }
    Ok(())
}

/// Right-hand side with interior pairs only (the conserving coupling):
/// `rhs_i = sum_j h^d K(x_i, x_j) flux(u_j - u_i)`; each pair contributes
/// antisymmetrically, so `sum_i rhs_i = 0` up to roundoff.
pub fn nonlocal_rhs(field: &Field, spec: &KernelSpec, p: f64) -> Result<Field> {
    check_solver_p(p)?;
    let table = KernelTable::build(spec, field.grid())?;
    let (rhs, _) = rhs_with_table(field, &table, p, BoundaryMode::Conserving);
    Field::from_values(Arc::clone(field.grid_arc()), rhs)
}

pub(crate) fn rhs_with_table(
    field: &Field,
    table: &KernelTable,
    p: f64,
    mode: BoundaryMode,
) -> (Vec<f64>, f64) {
    rhs_values(field.values(), field.grid().cell_measure(), table, p, mode)
}

fn rhs_values(
    u: &[f64],
    h_d: f64,
    table: &KernelTable,
    p: f64,
    mode: BoundaryMode,
) -> (Vec<f64>, f64) {
    let mut rhs = vec![0.0; u.len()];
    for e in table.pairs.iter() {
        let (i, j) = (e.i as usize, e.j as usize);
        let w = h_d * e.k * flux(u[j] - u[i], p);
        rhs[i] += w;
        rhs[j] -= w;
    }
    let mut outflux = 0.0;
    if mode == BoundaryMode::Absorbing {
        for (i, &hi) in table.halo.iter().enumerate() {
            if hi != 0.0 && u[i] != 0.0 {
                // exterior partners hold u = 0: flux(0 - u_i) = -flux(u_i)
                let w = h_d * hi * flux(u[i], p);
                rhs[i] -= w;
                outflux += w;
            }
        }
    }
    // rate at which box mass crosses the boundary
    (rhs, outflux * h_d)
}

/// Largest stable explicit step from a local Lipschitz bound of the flux:
/// `safety / max_i sum_j h^d K(x_i,x_j) (p-1) M_ij^{p-2}` with
/// `M_ij = max(|u_i|, |u_j|, floor)`. Only meaningful for `p >= 2`; the
/// bound is infinite for a field with no active differences.
pub fn stability_dt(field: &Field, spec: &KernelSpec, p: f64, safety: f64) -> Result<f64> {
    if !(p >= 2.0) {
        return Err(Error::InvalidArgument(format!(
            "the stability bound needs p >= 2 (no a-priori Lipschitz bound below), got {p}"
        )));
    }
    let table = KernelTable::build(spec, field.grid())?;
    Ok(stability_dt_with_table(
        field,
        &table,
        p,
        safety,
        0.0,
        BoundaryMode::Conserving,
    ))
}

fn stability_dt_with_table(
    field: &Field,
    table: &KernelTable,
    p: f64,
    safety: f64,
    m_floor: f64,
    mode: BoundaryMode,
) -> f64 {
    let u = field.values();
    let h_d = field.grid().cell_measure();
    let lip = |m: f64| -> f64 {
        if p == 2.0 {
            1.0
        } else {
            fp::powf(m, p - 2.0)
        }
    };
    let mut row = vec![0.0; u.len()];
    for e in table.pairs.iter() {
        let (i, j) = (e.i as usize, e.j as usize);
        let m = fp::abs(u[i]).max(fp::abs(u[j])).max(m_floor);
        let t = h_d * e.k * (p - 1.0) * lip(m);
        row[i] += t;
        row[j] += t;
    }
    if mode == BoundaryMode::Absorbing {
        for (i, &hi) in table.halo.iter().enumerate() {
            if hi != 0.0 {
                row[i] += h_d * hi * (p - 1.0) * lip(fp::abs(u[i]).max(m_floor));
            }
        }
    }
    let max_row = row.iter().fold(0.0f64, |m, v| m.max(*v));
    if max_row == 0.0 {
        f64::INFINITY
    } else {
        safety / max_row
    }
}

struct StepOutcome {
    values: Vec<f64>,
    absorbed_delta: f64,
}

fn take_step(
    u: &[f64],
    h_d: f64,
    table: &KernelTable,
    p: f64,
    dt: f64,
    scheme: Scheme,
    mode: BoundaryMode,
) -> StepOutcome {
    match scheme {
        Scheme::ExplicitEuler => {
            let (rhs, out_rate) = rhs_values(u, h_d, table, p, mode);
            let values: Vec<f64> = u
                .iter()
                .zip(rhs.iter())
                .map(|(&v, &r)| v + dt * r)
                .collect();
            StepOutcome {
                values,
                absorbed_delta: dt * out_rate,
            }
        }
        Scheme::Heun => {
            let (k1, rate1) = rhs_values(u, h_d, table, p, mode);
            let mid: Vec<f64> = u.iter().zip(k1.iter()).map(|(&v, &r)| v + dt * r).collect();
            if !mid.iter().all(|v| v.is_finite()) {
                // hand the diverged predictor to the caller's finite check,
                // which owns the retry policy
                return StepOutcome {
                    values: mid,
                    absorbed_delta: 0.0,
                };
            }
            let (k2, rate2) = rhs_values(&mid, h_d, table, p, mode);
            let values: Vec<f64> = u
                .iter()
                .zip(k1.iter().zip(k2.iter()))
                .map(|(&v, (&a, &b))| v + 0.5 * dt * (a + b))
                .collect();
            StepOutcome {
                values,
                absorbed_delta: 0.5 * dt * (rate1 + rate2),
            }
        }
    }
}

/// Steps the scheme to `t_final`, recording `L^1`, `L^2`, `L^r`, max norm,
/// box mass and the boundary-band mass.
///
/// Every accepted step asserts: finite state, conservation of the total
/// (box + absorbed) mass to `1e-10` relative, nonincreasing max norm, and
/// for nonnegative data a nonincreasing `L^1` norm. With `p < 2` a
/// violating step is retried with `dt/2` up to 10 times; persistent
/// violation (or any violation under the `p >= 2` stability bound) aborts
/// with diagnostics carrying the last valid time.
pub fn evolve(u0: &Field, spec: &KernelSpec, cfg: &SolverConfig, r: f64) -> Result<Trajectory> {
    check_solver_p(cfg.p)?;
    if !(cfg.safety > 0.0 && cfg.safety <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "safety factor must lie in (0, 1], got {}",
            cfg.safety
        )));
    }
    if !(cfg.t_final > 0.0) {
        return Err(Error::InvalidArgument(
            "final time must be positive".to_string(),
        ));
    }
    if r < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "norm exponent r must be >= 1, got {r}"
        )));
    }
    if cfg.dt.is_none() && cfg.p < 2.0 {
        return Err(Error::InvalidArgument(
            "automatic step control needs p >= 2; supply dt for 1 < p < 2".to_string(),
        ));
    }
    if let Some(dt) = cfg.dt {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive, got {dt}"
            )));
        }
    }
    let table = KernelTable::build(spec, u0.grid())?;
    let h_d = u0.grid().cell_measure();
    let record_every = cfg.record_every.max(1) as u64;

    let nonnegative = u0.values().iter().all(|&v| v >= 0.0);
    let mass0 = u0.mass();
    let mass_tol = 1e-10 * fp::abs(mass0) + 1e-14;
    let band: Vec<usize> = (0..u0.grid().len())
        .filter(|&i| table.halo[i] > 0.0)
        .collect();
    let band_mass = |f: &Field| h_d * tree_sum_by(band.len(), |k| fp::abs(f.values()[band[k]]));

    let mut traj = Trajectory {
        times: Vec::new(),
        l1: Vec::new(),
        l2: Vec::new(),
        r,
        lr: Vec::new(),
        linf: Vec::new(),
        mass: Vec::new(),
        boundary_mass: Vec::new(),
        absorbed: Vec::new(),
        snapshots: Vec::new(),
        boundary_warning: None,
        steps: 0,
        retries: 0,
    };

    let mut state = u0.clone();
    let mut t = 0.0f64;
    let mut absorbed = 0.0f64;

    fn record(
        traj: &mut Trajectory,
        state: &Field,
        t: f64,
        absorbed: f64,
        bm: f64,
        r: f64,
    ) -> Result<()> {
        traj.times.push(t);
        traj.l1.push(state.lr_norm(1.0)?);
        traj.l2.push(state.lr_norm(2.0)?);
        traj.lr.push(state.lr_norm(r)?);
        traj.linf.push(state.lr_norm(f64::INFINITY)?);
        traj.mass.push(state.mass());
        traj.boundary_mass.push(bm);
        traj.absorbed.push(absorbed);
        Ok(())
    }
    record(&mut traj, &state, t, absorbed, band_mass(&state), r)?;

    let warn_level = cfg.boundary_mass_threshold * fp::abs(mass0).max(1e-300);

    while t < cfg.t_final * (1.0 - 1e-12) {
        let mut dt = match cfg.dt {
            Some(fixed) => fixed,
            None => stability_dt_with_table(
                &state,
                &table,
                cfg.p,
                cfg.safety,
                cfg.m_floor,
                cfg.boundary,
            ),
        };
        if !(dt > 0.0) {
            return Err(Error::SolverFailure {
                time: t,
                reason: "step size collapsed to zero".to_string(),
            });
        }
        dt = dt.min(cfg.t_final - t);

        let linf_before = state.lr_norm(f64::INFINITY)?;
        let l1_before = state.lr_norm(1.0)?;
        let mut halvings = 0u32;
        loop {
            let out = take_step(
                state.values(),
                h_d,
                &table,
                cfg.p,
                dt,
                cfg.scheme,
                cfg.boundary,
            );
            let finite = out.values.iter().all(|v| v.is_finite());
            let mut reason = "non-finite state";
            let mut accepted = false;
            if finite {
                let trial = Field::from_values(Arc::clone(state.grid_arc()), out.values)?;
                let linf_after = trial.lr_norm(f64::INFINITY)?;
                let l1_ok = if nonnegative {
                    let l1_after = trial.lr_norm(1.0)?;
                    l1_after <= l1_before * (1.0 + 1e-12) + 1e-14
                } else {
                    true
                };
                let mass_ok = {
                    let total = trial.mass() + absorbed + out.absorbed_delta;
                    fp::abs(total - mass0) <= mass_tol
                };
                if linf_after > linf_before * (1.0 + 1e-12) + 1e-14 {
                    reason = "maximum norm increased";
                } else if !l1_ok {
                    reason = "L1 norm increased for nonnegative data";
                } else if !mass_ok {
                    reason = "mass accounting drifted";
                } else {
                    state = trial;
                    absorbed += out.absorbed_delta;
                    t += dt;
                    accepted = true;
                }
            }
            if accepted {
                break;
            }
            if cfg.p < 2.0 && halvings < 10 && finite {
                dt *= 0.5;
                halvings += 1;
                traj.retries += 1;
                continue;
            }
            return Err(Error::SolverFailure {
                time: t,
                reason: format!("{reason} (dt = {dt:.3e}, after {halvings} halvings)"),
            });
        }

        traj.steps += 1;
        let bm = band_mass(&state);
        if traj.boundary_warning.is_none() && bm > warn_level {
            traj.boundary_warning = Some(t);
        }
        let done = t >= cfg.t_final * (1.0 - 1e-12);
        if traj.steps % record_every == 0 || done {
            record(&mut traj, &state, t, absorbed, bm, r)?;
        }
        if cfg.snapshot_every > 0 && (traj.steps % cfg.snapshot_every as u64 == 0 || done) {
            traj.snapshots.push((t, state.clone()));
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayRegime {
    Polynomial,
    Exponential,
}

impl DecayRegime {
    pub fn name(&self) -> &'static str {
        match self {
            DecayRegime::Polynomial => "polynomial",
            DecayRegime::Exponential => "exponential",
        }
    }
}

/// Fitted decay law over a window.
#[derive(Debug, Clone, Copy)]
pub struct DecayLaw {
    pub regime: DecayRegime,
    /// Polynomial: the log-log slope (negative for decay). Exponential:
    /// the rate `gamma` in `C e^{-gamma t}` (positive for decay).
    pub exponent_or_rate: f64,
    pub constant: f64,
    pub window: (f64, f64),
    /// Root-mean-square residual of the linear fit in log space.
    pub residual: f64,
}

/// Default fit window: the last half of the trajectory on a log-time axis,
/// `[sqrt(t_first_positive * t_final), t_final]`.
pub fn default_fit_window(traj: &Trajectory) -> Result<(f64, f64)> {
    let t_end = *traj
        .times
        .last()
        .ok_or_else(|| Error::InvalidArgument("empty trajectory".to_string()))?;
    let t_first = traj
        .times
        .iter()
        .copied()
        .find(|&t| t > 0.0)
        .ok_or_else(|| Error::InvalidArgument("no positive times recorded".to_string()))?;
    Ok((fp::sqrt(t_first * t_end), t_end))
}

/// Least-squares decay fit of `ln ||u||_r` against `ln t` (polynomial
/// regime) or against `t` (exponential regime) over the window.
pub fn fit_decay(
    traj: &Trajectory,
    r: f64,
    regime: DecayRegime,
    window: (f64, f64),
) -> Result<DecayLaw> {
    let norms = traj.norms(r)?;
    let (t0, t1) = window;
    if !(t0 < t1) {
        return Err(Error::InvalidArgument(format!(
            "bad fit window [{t0}, {t1}]"
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in traj.times.iter().zip(norms.iter()) {
        if t < t0 || t > t1 {
            continue;
        }
        if v <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "nonpositive norms in the fit window (norm = {v} at t = {t})"
            )));
        }
        match regime {
            DecayRegime::Polynomial => {
                if t <= 0.0 {
                    return Err(Error::InvalidArgument(
                        "polynomial fit needs strictly positive times".to_string(),
                    ));
                }
                xs.push(fp::ln(t));
            }
            DecayRegime::Exponential => xs.push(t),
        }
        ys.push(fp::ln(v));
    }
    if xs.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "fit window holds only {} samples; need at least 10",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys.iter())
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let residual = fp::sqrt(
        xs.iter()
            .zip(ys.iter())
            .map(|(x, y)| {
                let e = y - (intercept + slope * x);
                e * e
            })
            .sum::<f64>()
            / n,
    );
    let exponent_or_rate = match regime {
        DecayRegime::Polynomial => slope,
        DecayRegime::Exponential => -slope,
    };
    Ok(DecayLaw {
        regime,
        exponent_or_rate,
        constant: fp::exp(intercept),
        window,
        residual,
    })
}
