//! The four experiment commands. Each writes its CSV/JSON products plus an
//! echo of the effective configuration into the output directory.

use crate::config::ExperimentConfig;
use crate::formats::{self, StaircaseRow};
use crate::{CliError, CliResult};
use nlplab_core::discretize::{Field, Grid, GridShape};
use nlplab_core::evolution::{self, BoundaryMode, DecayRegime, Scheme, SolverConfig};
use nlplab_core::minimizers::{self, BoundRow};
use nlplab_core::spectral::{self, MinimizeOpts, QInfSupport};
use std::fs;
use std::path::Path;
use std::sync::Arc;

fn numeric(e: nlplab_core::Error) -> CliError {
    CliError::Numeric(e.to_string())
}

fn prepare_out(cfg: &ExperimentConfig) -> CliResult<std::path::PathBuf> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("effective.cfg"), cfg.echo_text())?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, text: &str) -> CliResult<()> {
    fs::write(dir.join(name), text)?;
    Ok(())
}

/// Closed-form eigenvalue plus the expanding-domain sweep.
pub fn cmd_eigen(cfg: &ExperimentConfig) -> CliResult<()> {
    let spec = cfg.kernel()?;
    let p = cfg.f64_req("spectral", "p")?;
    let radii = cfg.list_f64_req("spectral", "radii")?;
    let h = cfg.f64_req("spectral", "h")?;
    let opts = MinimizeOpts {
        restarts: cfg.usize_opt("spectral", "restarts", 4)? as u32,
        max_iters: cfg.u64_opt("spectral", "max_iters", 200_000)?,
        tol: cfg.f64_opt("spectral", "tol", 1e-9)?,
        // random restarts only exist on the descent path (p != 2)
        seed: if p == 2.0 {
            cfg.seed()?.unwrap_or(0)
        } else {
            cfg.require_seed()?
        },
    };
    let dir = prepare_out(cfg)?;
    let closed = spectral::lambda_closed_form(p, &spec.map, &spec.psi).map_err(numeric)?;
    let sweep = spectral::expanding_domain_sweep(&spec, p, &radii, h, &opts).map_err(numeric)?;
    write(&dir, "sweep.csv", &formats::sweep_csv(&sweep))?;
    let final_estimate = sweep.last().map(|e| e.value).unwrap_or(f64::NAN);
    write(
        &dir,
        "summary.json",
        &formats::eigen_summary_json(closed.value, final_estimate),
    )?;
    println!(
        "eigen: closed form {:.9}, final estimate {:.9} (R = {})",
        closed.value,
        final_estimate,
        radii.last().unwrap()
    );
    Ok(())
}

/// Convergence table of the minimizing-sequence upper bound.
pub fn cmd_minimizers(cfg: &ExperimentConfig) -> CliResult<()> {
    let spec = cfg.kernel()?;
    let p = cfg.f64_req("minimizers", "p")?;
    let n_list = cfg.list_u32_req("minimizers", "n_list")?;
    let samples = cfg.u64_opt("minimizers", "samples", 1_000_000)?;
    let seed = cfg.require_seed()?;
    let threads = cfg.threads()?;
    let dir = prepare_out(cfg)?;
    let two_int_psi = 2.0 * spec.psi.integral();
    let mut rows: Vec<BoundRow> = Vec::with_capacity(n_list.len());
    for (k, &n) in n_list.iter().enumerate() {
        let tensor = minimizers::tensor_for_map(&spec.map, p, n).map_err(numeric)?;
        let closed = tensor.displacement_quotient().map_err(numeric)?;
        let mc =
            crate::parallel::tensor_mc_ratio(&tensor, samples, seed ^ ((k as u64) << 32), threads)?;
        rows.push(BoundRow {
            n,
            quotient_closed: closed,
            quotient_mc: mc.ratio,
            mc_stderr: mc.ratio_std_err,
            upper_bound: two_int_psi * closed,
        });
    }
    write(&dir, "upper_bound.csv", &formats::bound_csv(&rows))?;
    if let Some(last) = rows.last() {
        println!(
            "minimizers: upper bound {:.9} at n = {}",
            last.upper_bound, last.n
        );
    }
    Ok(())
}

fn initial_field(cfg: &ExperimentConfig, grid: &Arc<Grid>) -> CliResult<Field> {
    let kind = cfg.word_opt("evolve", "u0.kind", "indicator")?;
    let radius = cfg.f64_opt("evolve", "u0.radius", 1.0)?;
    let amplitude = cfg.f64_opt("evolve", "u0.amplitude", 1.0)?;
    let field = match kind.as_str() {
        "zero" => Field::zeros(Arc::clone(grid)),
        "indicator" => Field::from_fn(Arc::clone(grid), |x| {
            let r2: f64 = x.iter().map(|c| c * c).sum();
            if r2 <= radius * radius {
                amplitude
            } else {
                0.0
            }
        })
        .map_err(numeric)?,
        "bump" => Field::from_fn(Arc::clone(grid), |x| {
            let r2: f64 = x.iter().map(|c| c * c).sum::<f64>() / (radius * radius);
            if r2 < 1.0 {
                amplitude * (1.0 - r2) * (1.0 - r2)
            } else {
                0.0
            }
        })
        .map_err(numeric)?,
        other => {
            return Err(CliError::Config(format!(
                "[evolve] u0.kind must be indicator | bump | zero, got {other}"
            )))
        }
    };
    Ok(field)
}

/// Time integration plus decay fit.
pub fn cmd_evolve(cfg: &ExperimentConfig) -> CliResult<()> {
    let spec = cfg.kernel()?;
    let p = cfg.f64_req("evolve", "p")?;
    let r = cfg.f64_opt("evolve", "r", 2.0)?;
    let half_width = cfg.f64_req("evolve", "half_width")?;
    let h = cfg.f64_req("evolve", "h")?;
    let scheme = match cfg.word_opt("evolve", "scheme", "explicit_euler")?.as_str() {
        "explicit_euler" => Scheme::ExplicitEuler,
        "heun" => Scheme::Heun,
        other => {
            return Err(CliError::Config(format!(
                "[evolve] scheme must be explicit_euler | heun, got {other}"
            )))
        }
    };
    let boundary = match cfg.word_opt("evolve", "boundary", "absorbing")?.as_str() {
        "absorbing" => BoundaryMode::Absorbing,
        "conserving" => BoundaryMode::Conserving,
        other => {
            return Err(CliError::Config(format!(
                "[evolve] boundary must be absorbing | conserving, got {other}"
            )))
        }
    };
    let solver = SolverConfig {
        p,
        dt: cfg.dt_opt("evolve", "dt")?,
        t_final: cfg.f64_req("evolve", "t_final")?,
        scheme,
        safety: cfg.f64_opt("evolve", "safety", 0.5)?,
        boundary_mass_threshold: cfg.f64_opt("evolve", "boundary_mass_threshold", 1e-6)?,
        record_every: cfg.usize_opt("evolve", "record_every", 1)?,
        boundary,
        m_floor: 0.0,
        snapshot_every: cfg.usize_opt("evolve", "snapshot_every", 0)?,
    };
    let grid = Arc::new(
        Grid::new(spec.dim(), half_width, h, GridShape::Box)
            .map_err(|e| CliError::Config(e.to_string()))?,
    );
    let u0 = initial_field(cfg, &grid)?;
    let regime = match cfg.word_opt("evolve", "fit.regime", "auto")?.as_str() {
        "polynomial" => DecayRegime::Polynomial,
        "exponential" => DecayRegime::Exponential,
        "auto" => {
            if p > 2.0 {
                DecayRegime::Polynomial
            } else {
                DecayRegime::Exponential
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "[evolve] fit.regime must be polynomial | exponential | auto, got {other}"
            )))
        }
    };
    let explicit_window = cfg.window_opt("evolve", "fit.window")?;

    let dir = prepare_out(cfg)?;
    let traj = evolution::evolve(&u0, &spec, &solver, r).map_err(numeric)?;
    write(&dir, "trajectory.csv", &formats::trajectory_csv(&traj))?;
    for (k, (_, f)) in traj.snapshots.iter().enumerate() {
        write(
            &dir,
            &format!("snapshot_{k:04}.csv"),
            &formats::field_csv(f),
        )?;
    }
    if let Some(t) = traj.boundary_warning {
        eprintln!(
            "warning: boundary mass exceeded the threshold at t = {t:.6}; \
             the truncated run no longer tracks the whole-space problem"
        );
    }
    let window = match explicit_window {
        Some(w) => w,
        None => evolution::default_fit_window(&traj).map_err(numeric)?,
    };
    let law = evolution::fit_decay(&traj, r, regime, window).map_err(numeric)?;
    write(&dir, "decay.json", &formats::decay_json(&law))?;
    println!(
        "evolve: fitted {} {} over [{:.3}, {:.3}] (residual {:.3e})",
        law.regime.name(),
        law.exponent_or_rate,
        law.window.0,
        law.window.1,
        law.residual
    );
    Ok(())
}

/// Large-exponent table plus staircase witnesses.
pub fn cmd_pinf(cfg: &ExperimentConfig) -> CliResult<()> {
    let spec = cfg.kernel()?;
    let p_list = cfg.list_f64_req("pinf", "p_list")?;
    let epsilons = if cfg.has_key("pinf", "epsilons") {
        cfg.list_f64_req("pinf", "epsilons")?
    } else {
        Vec::new()
    };
    let mode = match cfg.word_opt("pinf", "q_mode", "either")?.as_str() {
        "either" => QInfSupport::Either,
        "both" => QInfSupport::Both,
        other => {
            return Err(CliError::Config(format!(
                "[pinf] q_mode must be either | both, got {other}"
            )))
        }
    };
    let dir = prepare_out(cfg)?;
    let rows = spectral::pinf_limit_table(&spec.map, &spec.psi, &p_list).map_err(numeric)?;
    write(&dir, "pinf.csv", &formats::pinf_csv(&rows))?;

    if !epsilons.is_empty() {
        let h = cfg.f64_req("pinf", "h")?;
        let mut stair_rows = Vec::new();
        for &eps in &epsilons {
            let required = spectral::staircase_required_half_width(&spec, eps).map_err(numeric)?;
            let half = (required / h).ceil() * h;
            let grid = Arc::new(Grid::new(spec.dim(), half, h, GridShape::Box).map_err(numeric)?);
            let st = spectral::staircase_witness(&spec, eps, &grid).map_err(numeric)?;
            let q = spectral::q_infinity(&st.field, &spec, mode).map_err(numeric)?;
            stair_rows.push(StaircaseRow {
                epsilon: eps,
                q_infinity: q,
                levels: st.level_values.len(),
                support_radius: st.support_radius,
                required_half_width: st.required_half_width,
            });
        }
        write(&dir, "staircase.csv", &formats::staircase_csv(&stair_rows))?;
        for row in &stair_rows {
            println!(
                "pinf: staircase eps = {} has Q_inf = {:.6} over {} levels",
                row.epsilon, row.q_infinity, row.levels
            );
        }
    }
    println!("pinf: table written for {} exponents", rows.len());
    Ok(())
}
