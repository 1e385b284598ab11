//! CSV and JSON emission. Floats are printed with 17 significant digits
//! (`.` decimal, no locale) so every value round-trips exactly and two runs
//! with the same config and seed produce byte-identical files.

use nlplab_core::discretize::Field;
use nlplab_core::evolution::{DecayLaw, Trajectory};
use nlplab_core::minimizers::BoundRow;
use nlplab_core::spectral::{EigenEstimate, PinfRow};

/// 17 significant digits, scientific.
pub fn f17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sweep_csv(rows: &[EigenEstimate]) -> String {
    let mut out = String::from("R,h,p,lambda_est,iterations,residual\n");
    for e in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            f17(e.domain_radius),
            f17(e.spacing),
            f17(e.p),
            f17(e.value),
            e.iterations,
            f17(e.residual)
        ));
    }
    out
}

pub fn eigen_summary_json(closed_form: f64, final_estimate: f64) -> String {
    format!(
        "{{\n  \"closed_form\": {},\n  \"final_estimate\": {},\n  \"gap\": {}\n}}\n",
        f17(closed_form),
        f17(final_estimate),
        f17(final_estimate - closed_form)
    )
}

pub fn bound_csv(rows: &[BoundRow]) -> String {
    let mut out = String::from("n,quotient_closed,quotient_mc,mc_stderr,upper_bound\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.n,
            f17(r.quotient_closed),
            f17(r.quotient_mc),
            f17(r.mc_stderr),
            f17(r.upper_bound)
        ));
    }
    out
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,l1,l2,lr,linf,mass,boundary_mass\n");
    for k in 0..traj.times.len() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            f17(traj.times[k]),
            f17(traj.l1[k]),
            f17(traj.l2[k]),
            f17(traj.lr[k]),
            f17(traj.linf[k]),
            f17(traj.mass[k]),
            f17(traj.boundary_mass[k])
        ));
    }
    out
}

pub fn decay_json(law: &DecayLaw) -> String {
    format!(
        "{{\n  \"regime\": \"{}\",\n  \"value\": {},\n  \"constant\": {},\n  \"window\": [{}, {}],\n  \"residual\": {}\n}}\n",
        law.regime.name(),
        f17(law.exponent_or_rate),
        f17(law.constant),
        f17(law.window.0),
        f17(law.window.1),
        f17(law.residual)
    )
}

pub fn pinf_csv(rows: &[PinfRow]) -> String {
    let mut out = String::from("p,lambda,lambda_root\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            f17(r.p),
            f17(r.lambda),
            f17(r.lambda_root)
        ));
    }
    out
}

/// One staircase result row.
pub struct StaircaseRow {
    pub epsilon: f64,
    pub q_infinity: f64,
    pub levels: usize,
    pub support_radius: f64,
    pub required_half_width: f64,
}

pub fn staircase_csv(rows: &[StaircaseRow]) -> String {
    let mut out = String::from("epsilon,q_infinity,levels,support_radius,required_half_width\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            f17(r.epsilon),
            f17(r.q_infinity),
            r.levels,
            f17(r.support_radius),
            f17(r.required_half_width)
        ));
    }
    out
}

/// Field CSV: a JSON-like grid header comment, then `x_1,...,x_d,value`.
pub fn field_csv(field: &Field) -> String {
    let g = field.grid();
    let mut out = format!(
        "# {{\"d\": {}, \"L\": {}, \"h\": {}, \"shape\": \"{}\"}}\n",
        g.dim(),
        f17(g.half_width()),
        f17(g.spacing()),
        g.shape().name()
    );
    for k in 1..=g.dim() {
        out.push_str(&format!("x_{k},"));
    }
    out.push_str("value\n");
    for i in 0..g.len() {
        for c in g.point(i) {
            out.push_str(&f17(*c));
            out.push(',');
        }
        out.push_str(&f17(field.values()[i]));
        out.push('\n');
    }
    out
}
