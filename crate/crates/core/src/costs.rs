//! Cost models and their oracles.
//!
//! Every cost is positively homogeneous of some order `p > 0` and has a
//! convex compact unit sublevel set `V_c = {f : c(f) <= 1}`. The rest of the
//! crate only talks to a cost through the oracles on [`Cost`].

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, LipError, Result};
use crate::problem::{ExtendedReal, VectorN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    L1,
    L2,
    /// `l1` restricted to the nonnegative orthant: `V_c = {f >= 0, sum f <= 1}`.
    L1Nonneg,
}

impl CostKind {
    pub const ALL: [CostKind; 3] = [CostKind::L1, CostKind::L2, CostKind::L1Nonneg];

    pub fn name(self) -> &'static str {
        match self {
            CostKind::L1 => "l1",
            CostKind::L2 => "l2",
            CostKind::L1Nonneg => "l1_nonneg",
        }
    }
}

/// The oracle contract for a cost `c` on `R^K`.
///
/// Methods take raw vectors of length [`Cost::dim`]; callers are expected
/// to have checked dimensions (the free functions in this module do).
pub trait Cost: Send + Sync {
    fn dim(&self) -> usize;

    /// Order of positive homogeneity `p`.
    fn order(&self) -> f64;

    /// Built-in kind, if any. Used for serialization.
    fn kind(&self) -> Option<CostKind> {
        None
    }

    fn describe(&self) -> String;

    fn evaluate(&self, f: &DVector<f64>) -> ExtendedReal;

    /// `max_{h in V_c} <g, h>`. Never negative since `0 in V_c`.
    fn support(&self, g: &DVector<f64>) -> f64;

    /// An element of `V_c` attaining [`Cost::support`].
    fn lmo(&self, g: &DVector<f64>) -> DVector<f64>;

    fn membership(&self, f: &DVector<f64>, tol: f64) -> bool {
        self.evaluate(f).le(ExtendedReal::Finite(1.0 + tol))
    }

    /// Lipschitz constant of `f -> c(f)^(1/p)` with respect to the Euclidean norm.
    fn gauge_lipschitz(&self) -> f64 {
        (self.dim() as f64).sqrt()
    }

    /// Euclidean projection onto `V_c`.
    ///
    /// The default runs Frank-Wolfe with exact line search on
    /// `0.5 ||h - y||^2`, so it is approximate; built-ins override it.
    fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut h = DVector::zeros(y.len());
        for _ in 0..2000 {
            let grad = &h - y;
            let s = self.lmo(&(-&grad));
            let d = s - &h;
            let dd = d.norm_squared();
            let gap = -grad.dot(&d);
            if dd == 0.0 || gap <= 1e-15 {
                break;
            }
            let t = (gap / dd).clamp(0.0, 1.0);
            h += d * t;
        }
        h
    }
}

/// One of the three built-in costs on `R^K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostModel {
    kind: CostKind,
    dim: usize,
}

impl CostModel {
    pub fn new(kind: CostKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(LipError::InvalidInput("cost dimension must be positive".into()));
        }
        Ok(CostModel { kind, dim })
    }

    pub fn cost_kind(&self) -> CostKind {
        self.kind
    }
}

/// First index attaining the maximum of `key`; ties go to the lowest index.
fn first_argmax(values: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best
}

fn project_simplex(y: &DVector<f64>) -> DVector<f64> {
    // Projection onto {f >= 0, sum f = 1}.
    let mut sorted: Vec<f64> = y.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - 1.0) / (i as f64 + 1.0);
        if v - t > 0.0 {
            tau = t;
        }
    }
    y.map(|v| (v - tau).max(0.0))
}

fn project_l1_ball(y: &DVector<f64>) -> DVector<f64> {
    if y.lp_norm(1) <= 1.0 {
        return y.clone();
    }
    let w = project_simplex(&y.abs());
    DVector::from_fn(y.len(), |i, _| w[i].copysign(y[i]))
}

impl Cost for CostModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn order(&self) -> f64 {
        1.0
    }

    fn kind(&self) -> Option<CostKind> {
        Some(self.kind)
    }

    fn describe(&self) -> String {
        format!("{}(K={})", self.kind.name(), self.dim)
    }

    fn evaluate(&self, f: &DVector<f64>) -> ExtendedReal {
        match self.kind {
            CostKind::L1 => ExtendedReal::Finite(f.lp_norm(1)),
            CostKind::L2 => ExtendedReal::Finite(f.norm()),
            CostKind::L1Nonneg => {
                if f.iter().any(|&v| v < 0.0) {
                    ExtendedReal::Infinite
                } else {
                    ExtendedReal::Finite(f.sum())
                }
            }
        }
    }

    fn support(&self, g: &DVector<f64>) -> f64 {
        match self.kind {
            CostKind::L1 => g.amax(),
            CostKind::L2 => g.norm(),
            CostKind::L1Nonneg => g.iter().copied().fold(0.0, f64::max),
        }
    }

    fn lmo(&self, g: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(g.len());
        match self.kind {
            CostKind::L1 => {
                if let Some((i, m)) = first_argmax(g.iter().map(|v| v.abs())) {
                    if m > 0.0 {
                        out[i] = g[i].signum();
                    }
                }
            }
            CostKind::L2 => {
                let n = g.norm();
                if n > 0.0 {
                    out = g / n;
                }
            }
            CostKind::L1Nonneg => {
                if let Some((i, m)) = first_argmax(g.iter().copied()) {
                    if m > 0.0 {
                        out[i] = 1.0;
                    }
                }
            }
        }
        out
    }

    fn gauge_lipschitz(&self) -> f64 {
        match self.kind {
            CostKind::L2 => 1.0,
            CostKind::L1 | CostKind::L1Nonneg => (self.dim as f64).sqrt(),
        }
    }

    fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            CostKind::L1 => project_l1_ball(y),
            CostKind::L2 => {
                let n = y.norm();
                if n > 1.0 {
                    y / n
                } else {
                    y.clone()
                }
            }
            CostKind::L1Nonneg => {
                let clipped = y.map(|v| v.max(0.0));
                if clipped.sum() <= 1.0 {
                    clipped
                } else {
                    project_simplex(y)
                }
            }
        }
    }
}

pub fn evaluate(cost: &dyn Cost, f: &VectorN) -> Result<ExtendedReal> {
    check_dim("cost evaluate", cost.dim(), f.dim())?;
    Ok(cost.evaluate(f))
}

pub fn support(cost: &dyn Cost, g: &VectorN) -> Result<f64> {
    check_dim("cost support", cost.dim(), g.dim())?;
    Ok(cost.support(g))
}

pub fn lmo(cost: &dyn Cost, g: &VectorN) -> Result<VectorN> {
    check_dim("cost lmo", cost.dim(), g.dim())?;
    Ok(VectorN::from_raw(cost.lmo(g)))
}

pub fn membership(cost: &dyn Cost, f: &VectorN, tol: f64) -> Result<bool> {
    check_dim("cost membership", cost.dim(), f.dim())?;
    Ok(cost.membership(f, tol))
}
