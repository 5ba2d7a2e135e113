//! Brute-force ground truth for instances with at most three coefficients.
//!
//! Every point of a uniform grid on `[-B, B]^K` is scored with the inner
//! variable `c` eliminated exactly, and the smallest score wins.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::costs::{Cost, CostKind};
use crate::error::{LipError, Result};
use crate::problem::{ExtendedReal, LinearOperator, ProblemInstance, VectorN};

pub const MAX_GRID_DIM: usize = 3;
pub const MAX_STEPS_PER_AXIS: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub bound: f64,
    pub step: f64,
    /// Residual slack granted when `delta = 0`; `None` means `step ||phi||_op`.
    pub slack: Option<f64>,
}

impl GridSpec {
    pub fn new(bound: f64, step: f64) -> Result<Self> {
        let g = GridSpec {
            bound,
            step,
            slack: None,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_slack(mut self, slack: f64) -> Result<Self> {
        if !(slack.is_finite() && slack >= 0.0) {
            return Err(LipError::InvalidInput(format!("slack must be >= 0, got {slack}")));
        }
        self.slack = Some(slack);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bound > 0.0 && self.bound.is_finite() && self.step > 0.0 && self.step.is_finite()) {
            return Err(LipError::InvalidInput(format!(
                "grid needs bound > 0 and step > 0, got bound={} step={}",
                self.bound, self.step
            )));
        }
        if self.bound / self.step > MAX_STEPS_PER_AXIS {
            return Err(LipError::InvalidInput(format!(
                "grid too fine: bound/step = {} exceeds {MAX_STEPS_PER_AXIS}",
                self.bound / self.step
            )));
        }
        Ok(())
    }

    fn points_per_axis(&self) -> usize {
        (2.0 * self.bound / self.step).round() as usize + 1
    }

    fn coordinate(&self, i: usize) -> f64 {
        -self.bound + i as f64 * self.step
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub cost: ExtendedReal,
    pub f: Option<VectorN>,
}

type CostFn<'a> = Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>;

fn cost_fn(cost: &dyn Cost) -> CostFn<'_> {
    match cost.kind() {
        Some(CostKind::L1) => Box::new(|f| f.iter().map(|v| v.abs()).sum()),
        Some(CostKind::L2) => Box::new(|f| f.iter().map(|v| v * v).sum::<f64>().sqrt()),
        Some(CostKind::L1Nonneg) => Box::new(|f| {
            if f.iter().any(|&v| v < 0.0) {
                f64::INFINITY
            } else {
                f.iter().sum()
            }
        }),
        None => Box::new(move |f| {
            cost.evaluate(&DVector::from_column_slice(f))
                .finite()
                .unwrap_or(f64::INFINITY)
        }),
    }
}

/// Minimizes the exactly-eliminated objective over the grid.
pub fn brute_force_solve(inst: &ProblemInstance, grid: &GridSpec) -> Result<OracleResult> {
    grid.validate()?;
    let k = inst.k();
    if k > MAX_GRID_DIM {
        return Err(LipError::InvalidInput(format!(
            "brute force supports at most {MAX_GRID_DIM} coefficients, got {k}"
        )));
    }
    if inst.is_trivial() {
        return Ok(OracleResult {
            cost: ExtendedReal::Finite(0.0),
            f: Some(VectorN::zeros(k)),
        });
    }
    let p = inst.cost.order();
    let eps = inst.epsilon;
    let delta = inst.delta;
    let slack = grid.slack.unwrap_or(grid.step * inst.phi.op_norm());
    let cols: Vec<DVector<f64>> = (0..k).map(|j| inst.phi.matrix().column(j).into_owned()).collect();
    let eval_cost = cost_fn(inst.cost.as_ref());
    let m = grid.points_per_axis();
    let x = inst.x.as_dvector();

    // Score on the C^(1/p) scale.
    let score = |f: &[f64], res: &DVector<f64>| -> f64 {
        let c = eval_cost(f);
        if !c.is_finite() {
            return f64::INFINITY;
        }
        let c1 = c.powf(1.0 / p);
        let rn = res.norm();
        if delta > 0.0 {
            c1.max((rn - eps) / delta)
        } else if rn <= eps + slack {
            c1
        } else {
            f64::INFINITY
        }
    };

    let best = (0..m)
        .into_par_iter()
        .map(|i0| {
            let mut idx = [i0, 0, 0];
            let mut f = [0.0; MAX_GRID_DIM];
            let mut res: Vec<DVector<f64>> = Vec::with_capacity(k);
            f[0] = grid.coordinate(i0);
            res.push(x - &cols[0] * f[0]);
            for level in 1..k {
                f[level] = grid.coordinate(0);
                let prev = res[level - 1].clone();
                res.push(prev - &cols[level] * f[level]);
            }
            let mut best = (f64::INFINITY, idx);
            loop {
                let s = score(&f[..k], &res[k - 1]);
                if s < best.0 {
                    best = (s, idx);
                }
                // Advance the odometer over the trailing coordinates.
                let mut level = k - 1;
                loop {
                    if level == 0 {
                        return best;
                    }
                    idx[level] += 1;
                    if idx[level] < m {
                        break;
                    }
                    idx[level] = 0;
                    level -= 1;
                }
                for l in level..k {
                    f[l] = grid.coordinate(idx[l]);
                    let prev = if l == 0 { x.clone() } else { res[l - 1].clone() };
                    res[l] = prev - &cols[l] * f[l];
                }
            }
        })
        .reduce(
            || (f64::INFINITY, [usize::MAX; 3]),
            |a, b| {
                if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            },
        );

    if !best.0.is_finite() {
        return Ok(OracleResult {
            cost: ExtendedReal::Infinite,
            f: None,
        });
    }
    let f: Vec<f64> = (0..k).map(|j| grid.coordinate(best.1[j])).collect();
    Ok(OracleResult {
        cost: ExtendedReal::Finite(best.0.powf(p)),
        f: Some(VectorN::new(f)?),
    })
}

/// Gauge of `z` by brute force: the oracle cost for target `z` with `epsilon = 0`, to the power `1/p`.
pub fn oracle_gauge(
    z: &VectorN,
    phi: &LinearOperator,
    delta: f64,
    cost: std::sync::Arc<dyn Cost>,
    grid: &GridSpec,
) -> Result<ExtendedReal> {
    let p = cost.order();
    let inst = ProblemInstance::new(z.clone(), phi.clone(), 0.0, delta, cost)?;
    Ok(brute_force_solve(&inst, grid)?.cost.powf(1.0 / p))
}

/// Lipschitz constant bounding how far the grid minimum can sit from the
/// true optimum per unit of step, on the `C^(1/p)` scale.
pub fn lipschitz_allowance(inst: &ProblemInstance) -> f64 {
    let k = inst.k() as f64;
    let lc = inst.cost.gauge_lipschitz();
    let op = inst.phi.op_norm();
    if inst.delta > 0.0 {
        k.sqrt() * lc.max(op / inst.delta)
    } else {
        let sigma = inst.phi.min_nonzero_singular_value();
        lc * (k.sqrt() + 2.0 * op / sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::CostModel;
    use std::sync::Arc;

    fn inst(x: &[f64], eps: f64, delta: f64) -> ProblemInstance {
        ProblemInstance::with_kind(
            x.to_vec(),
            LinearOperator::identity(x.len()),
            eps,
            delta,
            CostKind::L1,
        )
        .unwrap()
    }

    #[test]
    fn ball_example() {
        let r = brute_force_solve(&inst(&[2.0, 0.0], 0.5, 0.0), &GridSpec::new(3.0, 1e-3).unwrap())
            .unwrap();
        let c = r.cost.finite().unwrap();
        // Slack step * ||phi|| lets the grid reach one step below 1.5.
        assert!((c - 1.5).abs() <= 1.1e-3);
        let f = r.f.unwrap();
        assert!((f[0] - c).abs() < 1e-9 && f[1].abs() < 1e-9);
    }

    #[test]
    fn ball_example_without_slack() {
        let g = GridSpec::new(3.0, 1e-3).unwrap().with_slack(1e-12).unwrap();
        let r = brute_force_solve(&inst(&[2.0, 0.0], 0.5, 0.0), &g).unwrap();
        assert!((r.cost.finite().unwrap() - 1.5).abs() < 1e-9);
    }

    #[test]
    fn trivial_and_infeasible() {
        let g = GridSpec::new(1.0, 1e-2).unwrap();
        let r = brute_force_solve(&inst(&[0.3, 0.0], 0.5, 0.0), &g).unwrap();
        assert_eq!(r.cost, ExtendedReal::Finite(0.0));
        let phi = LinearOperator::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let i = ProblemInstance::with_kind(vec![1.0, 2.0], phi, 0.5, 0.0, CostKind::L1).unwrap();
        let r = brute_force_solve(&i, &g).unwrap();
        assert_eq!(r.cost, ExtendedReal::Infinite);
        assert!(r.f.is_none());
    }

    #[test]
    fn delta_rule_example() {
        let g = GridSpec::new(3.0, 1e-3).unwrap();
        let r = brute_force_solve(&inst(&[2.0, 0.0], 0.0, 0.5), &g).unwrap();
        assert!((r.cost.finite().unwrap() - 4.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn guards() {
        assert!(GridSpec::new(10.0, 1e-4).is_err());
        assert!(GridSpec::new(0.0, 1e-4).is_err());
        let phi = LinearOperator::identity(4);
        let i = ProblemInstance::with_kind(vec![1.0; 4], phi, 0.0, 0.0, CostKind::L1).unwrap();
        assert!(brute_force_solve(&i, &GridSpec::new(1.0, 0.1).unwrap()).is_err());
    }

    #[test]
    fn gauge_examples() {
        let id = LinearOperator::identity(2);
        let c: Arc<dyn Cost> = Arc::new(CostModel::new(CostKind::L1, 2).unwrap());
        let g = GridSpec::new(3.0, 1e-3).unwrap().with_slack(1e-12).unwrap();
        let z = VectorN::new(vec![1.0, 1.0]).unwrap();
        assert!((oracle_gauge(&z, &id, 0.0, c.clone(), &g).unwrap().finite().unwrap() - 2.0).abs() < 1e-9);
        let z = VectorN::zeros(2);
        assert_eq!(oracle_gauge(&z, &id, 0.0, c.clone(), &g).unwrap(), ExtendedReal::Finite(0.0));
        let z = VectorN::new(vec![2.0, 0.0]).unwrap();
        let v = oracle_gauge(&z, &id, 1.0, c, &g).unwrap().finite().unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }
}
