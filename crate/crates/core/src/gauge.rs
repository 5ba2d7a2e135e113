//! The gauge of the inflated atomic set `S_delta(phi, 1)` and its dual.
//!
//! `S_delta(phi, r)` collects every `z` within `r delta` of `r phi(V_c)`. Its
//! gauge is the least such `r`, and the dual gauge has the closed form
//! `delta ||lambda|| + support(phi^T lambda)`.

use std::sync::Arc;

use nalgebra::DVector;

use crate::costs::Cost;
use crate::error::{check_dim, LipError, Result};
use crate::minmax::{solve, SolverConfig};
use crate::problem::{ExtendedReal, LinearOperator, ProblemInstance, VectorN};

/// A gauge value and, when finite and positive, an atom `h` with
/// `||z - value phi(h)|| <= value delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugePair {
    pub value: ExtendedReal,
    pub attained_atom: Option<VectorN>,
}

pub(crate) fn dual_gauge_raw(
    lambda: &DVector<f64>,
    phi: &LinearOperator,
    delta: f64,
    cost: &dyn Cost,
) -> f64 {
    delta * lambda.norm() + cost.support(&phi.adjoint_raw(lambda))
}

pub fn dual_gauge(lambda: &VectorN, phi: &LinearOperator, delta: f64, cost: &dyn Cost) -> Result<f64> {
    check_dim("dual gauge lambda", phi.output_dim(), lambda.dim())?;
    check_dim("dual gauge cost", phi.input_dim(), cost.dim())?;
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(LipError::InvalidInput(format!("delta must be >= 0, got {delta}")));
    }
    Ok(dual_gauge_raw(lambda, phi, delta, cost))
}

/// Residual above which `z` counts as off `image(phi)`.
fn off_image_threshold(z: &DVector<f64>) -> f64 {
    1e-8 * (1.0 + z.norm())
}

/// `||z||_phi`, computed as the `1/p`-th power of the optimal cost for target
/// `z` with `epsilon = 0`.
pub fn gauge(
    z: &VectorN,
    phi: &LinearOperator,
    delta: f64,
    cost: Arc<dyn Cost>,
    tol: f64,
) -> Result<GaugePair> {
    check_dim("gauge z", phi.output_dim(), z.dim())?;
    check_dim("gauge cost", phi.input_dim(), cost.dim())?;
    if z.iter().all(|&v| v == 0.0) {
        return Ok(GaugePair {
            value: ExtendedReal::Finite(0.0),
            attained_atom: Some(VectorN::zeros(phi.input_dim())),
        });
    }
    let target = if delta == 0.0 {
        if phi.projection_residual(z) > off_image_threshold(z) {
            return Ok(GaugePair {
                value: ExtendedReal::Infinite,
                attained_atom: None,
            });
        }
        VectorN::from_raw(phi.project_onto_image(z))
    } else {
        z.clone()
    };
    let p = cost.order();
    let inst = ProblemInstance::new(target, phi.clone(), 0.0, delta, cost)?;
    let cfg = SolverConfig {
        tol,
        ..SolverConfig::for_order(p)?
    };
    let out = solve(&inst, &cfg)?;
    Ok(GaugePair {
        value: ExtendedReal::Finite(out.solution.scale),
        attained_atom: Some(out.solution.h),
    })
}

/// `||y||_phi ||lambda||'_phi - <lambda, y>`, non-negative up to solver tolerance.
pub fn holder_gap(
    lambda: &VectorN,
    y: &VectorN,
    phi: &LinearOperator,
    delta: f64,
    cost: Arc<dyn Cost>,
    tol: f64,
) -> Result<f64> {
    check_dim("holder lambda", y.dim(), lambda.dim())?;
    let dg = dual_gauge(lambda, phi, delta, cost.as_ref())?;
    let g = gauge(y, phi, delta, cost, tol)?;
    let gv = g.value.finite().ok_or_else(|| {
        LipError::InvalidInput("holder gap needs a target with finite gauge".into())
    })?;
    Ok(gv * dg - lambda.dot(y))
}
