//! Exact solver for the problem restricted to the convex hull of a finite
//! set of atoms (together with the origin):
//!
//! ```text
//! minimize theta  s.t.  ||x - B u|| <= epsilon + delta theta,  u >= 0,  sum(u) <= theta
//! ```
//!
//! where the columns of `B` are the images `phi(a_j)` of the atoms. It follows
//! the piecewise-linear path of `u(theta) = argmin {||x - B u|| : u >= 0, sum(u) <= theta}`
//! from `theta = 0` and stops where the residual first enters the allowed radius.

use nalgebra::{DMatrix, DVector};

use crate::certificates::first_crossing;
use crate::problem::DEFAULT_FEASIBILITY_TOL;

#[derive(Debug, Clone)]
pub(crate) struct RestrictedSolution {
    /// Optimal restricted scale; infinite when the hull never reaches the ball.
    pub theta: f64,
    pub weights: Vec<f64>,
    /// Candidate dual directions, best first. Each is a valid lower-bound
    /// witness for the restricted problem; the caller scores them against the
    /// full dual gauge.
    pub duals: Vec<DVector<f64>>,
}

struct PathState<'a> {
    x: &'a DVector<f64>,
    cols: &'a [DVector<f64>],
    active: Vec<usize>,
    u: Vec<f64>,
    theta: f64,
    gamma: f64,
    r: DVector<f64>,
    corr: Vec<f64>,
}

impl<'a> PathState<'a> {
    fn refresh(&mut self) {
        let mut r = self.x.clone();
        for &j in &self.active {
            r.axpy(-self.u[j], &self.cols[j], 1.0);
        }
        self.corr = self.cols.iter().map(|b| b.dot(&r)).collect();
        self.r = r;
    }

    fn gram(&self) -> DMatrix<f64> {
        let m = self.active.len();
        DMatrix::from_fn(m, m, |i, j| {
            self.cols[self.active[i]].dot(&self.cols[self.active[j]])
        })
    }

    /// `true` when `b` is numerically independent of the active columns.
    fn independent(&self, b: &DVector<f64>) -> bool {
        let bb = b.norm_squared();
        if bb == 0.0 {
            return false;
        }
        if self.active.is_empty() {
            return true;
        }
        let g = self.gram();
        let Some(chol) = g.cholesky() else {
            return false;
        };
        let rhs = DVector::from_iterator(
            self.active.len(),
            self.active.iter().map(|&i| self.cols[i].dot(b)),
        );
        let coef = chol.solve(&rhs);
        let mut resid = b.clone();
        for (k, &i) in self.active.iter().enumerate() {
            resid.axpy(-coef[k], &self.cols[i], 1.0);
        }
        resid.norm_squared() > 1e-10 * bb
    }
}

pub(crate) fn solve_restricted(
    x: &DVector<f64>,
    cols: &[DVector<f64>],
    epsilon: f64,
    delta: f64,
) -> RestrictedSolution {
    let path = follow_path(x, cols, epsilon, delta);
    // Nearly parallel columns are blocked on the path, so a single column
    // can still beat it. This matters for curved unit balls, whose atoms
    // cluster around the optimum.
    match best_single_column(x, cols, epsilon, delta) {
        Some((j, theta)) if theta < path.theta => {
            let mut weights = vec![0.0; cols.len()];
            weights[j] = theta;
            let r = x - &cols[j] * theta;
            let d = &cols[j] / cols[j].norm_squared();
            RestrictedSolution {
                theta,
                weights,
                duals: dual_candidates(&r, Some(&d)),
            }
        }
        _ => path,
    }
}

/// Smallest scale at which some single column reaches the allowed radius.
fn best_single_column(
    x: &DVector<f64>,
    cols: &[DVector<f64>],
    epsilon: f64,
    delta: f64,
) -> Option<(usize, f64)> {
    if x.norm() <= epsilon {
        return None;
    }
    let tol = DEFAULT_FEASIBILITY_TOL * (1.0 + x.norm());
    let mut best: Option<(usize, f64)> = None;
    for (j, b) in cols.iter().enumerate() {
        if let Some(theta) = first_crossing(x, b, epsilon, delta) {
            let fits = (x - b * theta).norm() <= epsilon + delta * theta + tol;
            if fits && best.is_none_or(|(_, t)| theta < t) {
                best = Some((j, theta));
            }
        }
    }
    best
}

fn follow_path(
    x: &DVector<f64>,
    cols: &[DVector<f64>],
    epsilon: f64,
    delta: f64,
) -> RestrictedSolution {
    let m = cols.len();
    let xnorm = x.norm();
    let feas_tol = 1e-12 * (1.0 + xnorm);
    let fit_tol = DEFAULT_FEASIBILITY_TOL * (1.0 + xnorm);
    if xnorm <= epsilon {
        return RestrictedSolution {
            theta: 0.0,
            weights: vec![0.0; m],
            duals: Vec::new(),
        };
    }
    let mut st = PathState {
        x,
        cols,
        active: Vec::new(),
        u: vec![0.0; m],
        theta: 0.0,
        gamma: 0.0,
        r: x.clone(),
        corr: Vec::new(),
    };
    st.refresh();
    let mut blocked = vec![false; m];
    let mut last_dir: Option<DVector<f64>> = None;

    // Enter the first column.
    let mut first: Option<(usize, f64)> = None;
    for (j, &c) in st.corr.iter().enumerate() {
        if c > 0.0 && cols[j].norm_squared() > 0.0 && first.is_none_or(|(_, b)| c > b) {
            first = Some((j, c));
        }
    }
    if let Some((j, c)) = first {
        st.active.push(j);
        st.gamma = c;
    }
    // Below this correlation level the path has numerically reached its end.
    let gamma_floor = 1e-12 * st.gamma;

    let max_events = 20 * m + 200;
    let mut events = 0;
    while !st.active.is_empty() && st.gamma > gamma_floor && events < max_events {
        events += 1;
        let g = st.gram();
        let Some(chol) = g.clone().cholesky() else {
            // Lost independence through rounding; drop the newest column.
            let j = st.active.pop().unwrap();
            st.u[j] = 0.0;
            blocked[j] = true;
            st.refresh();
            continue;
        };
        let a = chol.solve(&DVector::from_element(st.active.len(), 1.0));
        let tau = a.sum();
        let mut d = DVector::zeros(x.len());
        for (k, &i) in st.active.iter().enumerate() {
            d.axpy(a[k], &cols[i], 1.0);
        }

        // Next breakpoint.
        let mut s_event = st.gamma;
        let mut event: Option<(bool, usize)> = None;
        for j in 0..m {
            if blocked[j] || st.active.contains(&j) {
                continue;
            }
            let denom = 1.0 - cols[j].dot(&d);
            if denom > 1e-14 {
                let s = ((st.gamma - st.corr[j]) / denom).max(0.0);
                if s < s_event {
                    s_event = s;
                    event = Some((true, j));
                }
            }
        }
        for (k, &i) in st.active.iter().enumerate() {
            if a[k] < 0.0 {
                let s = -st.u[i] / a[k];
                if s < s_event {
                    s_event = s;
                    event = Some((false, i));
                }
            }
        }

        // Does the residual enter the allowed radius on this segment?
        let radius = epsilon + delta * st.theta;
        let c0 = st.r.norm_squared() - radius * radius;
        let crossing = if c0 <= 0.0 {
            Some(0.0)
        } else {
            first_crossing(&st.r, &d, radius, delta * tau).filter(|&s| {
                (&st.r - &d * s).norm() <= radius + delta * tau * s + fit_tol
            })
        };
        if let Some(s) = crossing {
            if s <= s_event {
                for (k, &i) in st.active.iter().enumerate() {
                    st.u[i] = (st.u[i] + s * a[k]).max(0.0);
                }
                st.theta += s * tau;
                st.gamma -= s;
                st.refresh();
                let duals = dual_candidates(&st.r, Some(&d));
                return RestrictedSolution {
                    theta: st.theta,
                    weights: st.u,
                    duals,
                };
            }
        }

        for (k, &i) in st.active.iter().enumerate() {
            st.u[i] += s_event * a[k];
        }
        st.theta += s_event * tau;
        st.gamma -= s_event;
        last_dir = Some(d);
        match event {
            Some((true, j)) => {
                if st.independent(&cols[j]) {
                    st.active.push(j);
                } else {
                    blocked[j] = true;
                }
            }
            Some((false, i)) => {
                st.u[i] = 0.0;
                st.active.retain(|&k| k != i);
                blocked.iter_mut().for_each(|b| *b = false);
            }
            None => {
                st.gamma = 0.0;
            }
        }
        st.refresh();
        if st.gamma <= gamma_floor {
            break;
        }
    }

    // End of the path: the residual no longer shrinks with theta.
    let rnorm = st.r.norm();
    let sum_u: f64 = st.u.iter().sum();
    st.theta = st.theta.max(sum_u);
    let theta = if rnorm <= epsilon + delta * st.theta + feas_tol {
        st.theta
    } else if delta > 0.0 {
        ((rnorm - epsilon) / delta).max(st.theta)
    } else {
        f64::INFINITY
    };
    RestrictedSolution {
        theta,
        weights: st.u,
        duals: dual_candidates(&st.r, last_dir.as_ref()),
    }
}

/// The residual, the last path direction, and the direction plus growing
/// multiples of the residual. The last family approaches the dual supremum
/// when the ball only touches the hull, where no single dual attains it.
fn dual_candidates(r: &DVector<f64>, dir: Option<&DVector<f64>>) -> Vec<DVector<f64>> {
    let mut out = vec![r.clone()];
    if let Some(d) = dir {
        out.push(d.clone());
        for t in [1e2, 1e3, 1e4, 1e5, 1e6, 1e7] {
            out.push(d + r * t);
        }
    }
    out
}
