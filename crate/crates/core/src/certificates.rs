//! Closed-form primal and dual certificates.
//!
//! `eta` turns any atom `h in V_c` into an exact primal upper bound on
//! `C^(1/p)`, and `extract_dual` turns a primal solution into the optimal
//! dual vector. Together they give a checkable duality gap.

use nalgebra::DVector;

use crate::error::{check_dim, LipError, Result};
use crate::gauge::dual_gauge_raw;
use crate::problem::{
    classify_feasibility, DualCertificate, ExtendedReal, Feasibility, PrimalSolution,
    ProblemInstance, VectorN, DEFAULT_FEASIBILITY_TOL,
};

/// Relative size below which a negative discriminant is read as zero, so that
/// solutions of instances without interior (tangent balls, `epsilon = delta = 0`)
/// are not rejected over rounding.
const DISCRIMINANT_TOL: f64 = 1e-11;

/// Membership tolerance for atoms handed to `eta`.
const ATOM_MEMBERSHIP_TOL: f64 = 1e-9;

/// Smallest `theta >= 0` with `||x - theta v|| <= epsilon + delta theta`,
/// given `||x|| > epsilon`.
///
/// The discriminant is assembled from the component of `x` orthogonal to `v`,
/// so that it stays accurate when `x` is (nearly) parallel to `v`.
pub(crate) fn first_crossing(x: &DVector<f64>, v: &DVector<f64>, epsilon: f64, delta: f64) -> Option<f64> {
    let xx = x.norm_squared();
    let vv = v.norm_squared();
    let xv = x.dot(v);
    let c0 = xx - epsilon * epsilon;
    let a = vv - delta * delta;
    let b = xv + epsilon * delta;
    let perp = if vv > 0.0 { (x - v * (xv / vv)).norm_squared() } else { xx };
    let disc = vv * (epsilon * epsilon - perp) + delta * delta * xx + 2.0 * epsilon * delta * xv;
    feasible_root(a, b, c0, disc)
}

/// Smallest `theta >= 0` with `a theta^2 - 2 b theta + c0 <= 0`, given `c0 > 0`
/// and the discriminant `disc = b^2 - a c0`.
fn feasible_root(a: f64, b: f64, c0: f64, mut disc: f64) -> Option<f64> {
    if disc < 0.0 {
        if disc < -DISCRIMINANT_TOL * (b * b + (a * c0).abs()) {
            return None;
        }
        disc = 0.0;
    }
    let root = disc.sqrt();
    if a > 0.0 {
        // Opens upward: feasible between the roots, both of the sign of b.
        if b <= 0.0 {
            return None;
        }
        Some(c0 / (b + root))
    } else if a < 0.0 {
        // Opens downward: roots of opposite sign, feasible beyond the positive one.
        Some(c0 / (b + root))
    } else if b > 0.0 {
        // Linear: -2 b theta + c0 <= 0.
        Some(c0 / (2.0 * b))
    } else {
        None
    }
}

/// `eta_h` for a precomputed `v = phi h`.
pub(crate) fn eta_for_image(inst: &ProblemInstance, v: &DVector<f64>) -> ExtendedReal {
    let x = inst.x.as_dvector();
    let (eps, delta) = (inst.epsilon, inst.delta);
    let xx = x.norm_squared();
    let c0 = xx - eps * eps;
    if inst.is_trivial() || c0 <= 0.0 {
        return ExtendedReal::Finite(0.0);
    }
    match first_crossing(x, v, eps, delta) {
        Some(theta) => ExtendedReal::Finite(theta),
        None => ExtendedReal::Infinite,
    }
}

/// Smallest `theta >= 0` with `||x - theta phi(h)|| <= epsilon + theta delta`.
///
/// Infinite when the moving ball never meets `B[x, epsilon]`.
pub fn eta(h: &VectorN, inst: &ProblemInstance) -> Result<ExtendedReal> {
    check_dim("eta atom", inst.k(), h.dim())?;
    if !inst.cost.membership(h, ATOM_MEMBERSHIP_TOL) {
        return Err(LipError::InvalidInput(
            "eta requires an atom inside the unit sublevel set".into(),
        ));
    }
    Ok(eta_for_image(inst, &inst.phi.apply_raw(h)))
}

/// The point where `B[x, epsilon]` and the optimally scaled atom ball touch.
pub fn intersection_point(inst: &ProblemInstance, sol: &PrimalSolution) -> Result<VectorN> {
    check_dim("intersection solution", inst.k(), sol.f.dim())?;
    if classify_feasibility(inst, DEFAULT_FEASIBILITY_TOL) == Feasibility::Infeasible {
        return Err(LipError::Infeasible {
            residual: inst.phi.projection_residual(&inst.x),
            epsilon: inst.epsilon,
        });
    }
    if inst.epsilon == 0.0 {
        return Ok(inst.x.clone());
    }
    let s = sol.scale;
    let phi_f = inst.phi.apply_raw(&sol.f);
    let denom = inst.epsilon + inst.delta * s;
    let y = (phi_f * inst.epsilon + inst.x.as_dvector() * (inst.delta * s)) / denom;
    Ok(VectorN::from_raw(y))
}

/// Cutoff below which the dual gauge of the residual counts as zero.
pub(crate) fn degeneracy_threshold(w: &DVector<f64>) -> f64 {
    1e-9 * (1.0 + w.norm())
}

/// Relative band within which `dist(x, image(phi))` counts as equal to `epsilon`.
const TANGENT_TOL: f64 = 1e-9;

/// `true` when `delta = 0`, `epsilon > 0` and `B[x, epsilon]` touches
/// `image(phi)` without crossing it. The dual supremum is then not attained.
pub fn tangent_to_image(inst: &ProblemInstance) -> bool {
    if inst.delta > 0.0 || inst.epsilon == 0.0 || inst.is_trivial() {
        return false;
    }
    let x = inst.x.as_dvector();
    let rho = inst.phi.projection_residual(x);
    (rho - inst.epsilon).abs() <= TANGENT_TOL * (1.0 + x.norm())
}

/// Normalized residual `lambda* = w / ||w||'` with `w = x - phi(f*)`.
///
/// When `||w||'` vanishes the optimal dual set is empty and the result is
/// flagged `degenerate`. With `epsilon = delta = 0` the residual is zero at
/// every optimum and carries no dual information; the solver supplies its own
/// dual iterate in that case.
pub fn extract_dual(inst: &ProblemInstance, f_star: &VectorN) -> Result<DualCertificate> {
    check_dim("extract_dual f", inst.k(), f_star.dim())?;
    if inst.is_trivial() {
        return Ok(DualCertificate::zero(inst.n()));
    }
    let mut w = inst.x.as_dvector() - inst.phi.apply_raw(f_star);
    if tangent_to_image(inst) {
        // The residual of any feasible point is the normal to the image.
        let x = inst.x.as_dvector();
        w = x - inst.phi.project_onto_image(x);
    }
    let dg = dual_gauge_raw(&w, &inst.phi, inst.delta, inst.cost.as_ref());
    if dg <= degeneracy_threshold(&w) {
        return Ok(DualCertificate {
            lambda: VectorN::from_raw(w.clone()),
            dual_gauge_norm: dg,
            margin: inst.margin(&w),
            in_lambda: false,
            degenerate: true,
        });
    }
    let lambda = w / dg;
    Ok(DualCertificate {
        dual_gauge_norm: dual_gauge_raw(&lambda, &inst.phi, inst.delta, inst.cost.as_ref()),
        margin: inst.margin(&lambda),
        lambda: VectorN::from_raw(lambda),
        in_lambda: true,
        degenerate: false,
    })
}

/// Checks both defining conditions of the optimal dual set:
/// unit dual gauge and margin equal to `C^(1/p)`.
pub fn check_lambda_membership(
    lambda: &VectorN,
    inst: &ProblemInstance,
    c_onepth: f64,
    tol: f64,
) -> Result<DualCertificate> {
    check_dim("lambda", inst.n(), lambda.dim())?;
    let dg = dual_gauge_raw(lambda, &inst.phi, inst.delta, inst.cost.as_ref());
    let margin = inst.margin(lambda);
    Ok(DualCertificate {
        lambda: lambda.clone(),
        dual_gauge_norm: dg,
        margin,
        in_lambda: (dg - 1.0).abs() <= tol && (margin - c_onepth).abs() <= tol,
        degenerate: false,
    })
}

/// `(rq)^(1/(1-q)) C^(q/(p(1-q)))`, the norm ratio between a saddle-point
/// dual and its normalized counterpart.
pub fn saddle_lambda_scale(c: f64, p: f64, r: f64, q: f64) -> Result<f64> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(LipError::InvalidInput(format!("C must be finite and >= 0, got {c}")));
    }
    if !(p > 0.0 && r > 0.0 && q > 0.0 && q < 1.0) {
        return Err(LipError::InvalidInput(format!(
            "need p > 0, r > 0, 0 < q < 1; got p={p}, r={r}, q={q}"
        )));
    }
    Ok((r * q).powf(1.0 / (1.0 - q)) * c.powf(q / (p * (1.0 - q))))
}

/// Primal and dual bounds for a candidate solution and dual vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    /// `eta(h)^p`; infinite when the atom cannot reach the ball.
    pub primal_upper: ExtendedReal,
    /// `max(0, margin / ||lambda||')^p`.
    pub dual_lower: f64,
    pub gap: ExtendedReal,
    /// `| ||x - phi f|| - (epsilon + delta C^(1/p)) |`.
    pub active_constraint_residual: f64,
    pub lambda_report: DualCertificate,
    /// Gap within `1e-6 (1 + dual_lower)`.
    pub optimal: bool,
}

impl CertificateReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "primal_upper": self.primal_upper.to_json(),
            "dual_lower": self.dual_lower,
            "gap": self.gap.to_json(),
            "active_constraint_residual": self.active_constraint_residual,
            "lambda_report": self.lambda_report.to_json(),
            "optimal": self.optimal,
        })
    }
}

pub fn duality_report(
    inst: &ProblemInstance,
    sol: &PrimalSolution,
    cert: &DualCertificate,
) -> Result<CertificateReport> {
    check_dim("report h", inst.k(), sol.h.dim())?;
    check_dim("report lambda", inst.n(), cert.lambda.dim())?;
    let p = inst.cost.order();
    let primal_upper = if inst.is_trivial() {
        ExtendedReal::Finite(0.0)
    } else {
        eta(&sol.h, inst)?.powf(p)
    };
    let lambda = cert.lambda.as_dvector();
    let dg = dual_gauge_raw(lambda, &inst.phi, inst.delta, inst.cost.as_ref());
    let dual_lower = if dg > 0.0 {
        (inst.margin(lambda) / dg).max(0.0).powf(p)
    } else {
        0.0
    };
    let gap = match primal_upper {
        ExtendedReal::Finite(u) => ExtendedReal::Finite(u - dual_lower),
        ExtendedReal::Infinite => ExtendedReal::Infinite,
    };
    let residual = (inst.x.as_dvector() - inst.phi.apply_raw(&sol.f)).norm();
    let active_constraint_residual = if inst.is_trivial() {
        0.0
    } else {
        (residual - (inst.epsilon + inst.delta * sol.scale)).abs()
    };
    let optimal = match gap {
        ExtendedReal::Finite(g) => g <= 1e-6 * (1.0 + dual_lower),
        ExtendedReal::Infinite => false,
    };
    Ok(CertificateReport {
        primal_upper,
        dual_lower,
        gap,
        active_constraint_residual,
        lambda_report: cert.clone(),
        optimal,
    })
}
