//! Test-side oracles, deliberately independent of the production solvers:
//! the operator matrices are assembled by brute force from the kernel
//! definition, eigenproblems use a cyclic Jacobi sweep, and time evolution
//! uses the spectral matrix exponential instead of time stepping.
#![allow(clippy::needless_range_loop)]

use nlplab_core::discretize::{Field, Grid, GridShape};
use nlplab_core::kernel::KernelSpec;

/// Cyclic Jacobi diagonalization of a symmetric matrix. Returns the
/// eigenvalues and the orthonormal eigenvectors (as columns).
pub fn jacobi_eigh(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..200 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let evals: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    (evals, v)
}

/// Dense operator of the quotient on a ball grid, assembled by brute force
/// over all point pairs and a generous exterior lattice:
/// `B u|_i = 2 h^d [sum_j K_ij (u_i - u_j) + halo_i u_i]`.
fn dense_operator(spec: &KernelSpec, grid: &Grid) -> Vec<Vec<f64>> {
    let n = grid.len();
    let d = grid.dim();
    let h = grid.spacing();
    let h_d = grid.cell_measure();
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[i][j] = spec.eval(grid.point(i), grid.point(j)).unwrap();
            }
        }
    }
    // exterior lattice out to a generous reach bound
    let l = grid.half_width();
    let norm_a = spec.map.op_norm();
    let norm_inv = spec.map.inv_op_norm();
    let bound = (norm_a * l + 1.0).max(norm_inv * (l + 1.0)).max(l) + h;
    let m = (bound / h).ceil() as i64;
    let mut halo = vec![0.0; n];
    assert_eq!(d, 1, "the dense oracle covers the one-dimensional runs");
    for k in -m..=m {
        let y = [k as f64 * h];
        // skip lattice points belonging to the grid itself
        if grid.cell_of(&y).is_some() {
            continue;
        }
        for i in 0..n {
            halo[i] += spec.eval(grid.point(i), &y).unwrap();
        }
    }
    let mut b = vec![vec![0.0; n]; n];
    for i in 0..n {
        let row_sum: f64 = w[i].iter().sum();
        b[i][i] = 2.0 * h_d * (row_sum + halo[i]);
        for j in 0..n {
            if i != j {
                b[i][j] = -2.0 * h_d * w[i][j];
            }
        }
    }
    b
}

/// Smallest eigenvalue of the dense operator on the ball `B_R`.
pub fn dense_lambda_min(spec: &KernelSpec, radius: f64, h: f64) -> f64 {
    let grid = Grid::new(spec.dim(), radius, h, GridShape::Ball).unwrap();
    let b = dense_operator(spec, &grid);
    let (evals, _) = jacobi_eigh(b);
    evals.into_iter().fold(f64::INFINITY, f64::min)
}

/// Applies the exact flow of the linear (`p = 2`) absorbing evolution via
/// the spectral decomposition: `u(t) = V exp(-diag(mu) t / 2) V^T u0`,
/// where `B = V diag(mu) V^T` is the dense quotient operator (the flow
/// generator is `-B/2`).
pub fn expm_apply(spec: &KernelSpec, u0: &Field, t: f64) -> Vec<f64> {
    let grid = u0.grid();
    let b = dense_operator(spec, grid);
    let n = b.len();
    let (evals, v) = jacobi_eigh(b);
    // coefficients c = V^T u0
    let mut c = vec![0.0; n];
    for (k, ck) in c.iter_mut().enumerate() {
        *ck = (0..n).map(|i| v[i][k] * u0.values()[i]).sum();
    }
    let mut out = vec![0.0; n];
    for (k, &ck) in c.iter().enumerate() {
        let decay = (-0.5 * evals[k] * t).exp();
        for i in 0..n {
            out[i] += v[i][k] * decay * ck;
        }
    }
    out
}

/// Refining grid search for the minimum of `|x-1|^p - eta x^p` over
/// `x >= 0`; returns `min_found - theta`.
pub fn theta_grid_search_gap(eta: f64, p: f64, theta: f64) -> f64 {
    let f = |x: f64| (x - 1.0).abs().powf(p) - eta * x.powf(p);
    let mut hi = 4.0;
    for _ in 0..60 {
        let (argmin, _) = (0..=400)
            .map(|k| hi * k as f64 / 400.0)
            .map(|x| (x, f(x)))
            .fold(
                (0.0, f64::INFINITY),
                |acc, c| if c.1 < acc.1 { c } else { acc },
            );
        if argmin < hi * 0.95 {
            break;
        }
        hi *= 2.0;
    }
    let mut lo = 0.0f64;
    let mut span = hi;
    let mut best = (0.0, f64::INFINITY);
    for _ in 0..8 {
        best = (0..=1000)
            .map(|k| lo + span * k as f64 / 1000.0)
            .map(|x| (x, f(x)))
            .fold(best, |acc, c| if c.1 < acc.1 { c } else { acc });
        span = span * 4.0 / 1000.0;
        lo = (best.0 - span / 2.0).max(0.0);
    }
    best.1 - theta
}
