//! Saddle-point solver for
//!
//! ```text
//! min_{h in V_c} sup_{lambda : m(lambda) > 0}  r m(lambda)^q - (delta ||lambda|| + <lambda, phi(h)>)
//! ```
//!
//! with `m(lambda) = <lambda, x> - epsilon ||lambda||`. Each iteration takes a
//! backtracked ascent step in `lambda`, averages the LMO best response into
//! `h`, and (optionally) re-solves the problem exactly over the convex hull of
//! all atoms seen so far. Primal progress is measured with `eta`, dual
//! progress with `m(lambda) / ||lambda||'`; the run stops when the two meet.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::certificates::{
    check_lambda_membership, eta_for_image, extract_dual, saddle_lambda_scale, tangent_to_image,
};
use crate::error::{check_dim, LipError, Result};
use crate::gauge::dual_gauge_raw;
use crate::homotopy::solve_restricted;
use crate::problem::{
    classify_feasibility, DualCertificate, ExtendedReal, Feasibility, PrimalSolution,
    ProblemInstance, VectorN, DEFAULT_FEASIBILITY_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Averaging {
    /// `gamma_k = 2 / (k + 2)`.
    HarmonicWeights,
    FixedWeight(f64),
}

impl Averaging {
    fn weight(self, k: usize) -> f64 {
        match self {
            Averaging::HarmonicWeights => 2.0 / (k as f64 + 2.0),
            Averaging::FixedWeight(g) => g,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub r: f64,
    pub q: f64,
    pub max_iter: usize,
    /// Target for `primal_upper - dual_lower` on the `C^(1/p)` scale.
    pub tol: f64,
    pub lambda_step: f64,
    pub averaging: Averaging,
    pub seed: u64,
    /// Re-solve exactly over the hull of collected atoms every iteration.
    pub fully_corrective: bool,
}

impl SolverConfig {
    /// Defaults with `(r, q)` from [`default_params`].
    pub fn for_order(p: f64) -> Result<Self> {
        let (r, q, _) = default_params(p)?;
        Ok(SolverConfig {
            r,
            q,
            max_iter: 1000,
            tol: 1e-6,
            lambda_step: 0.1,
            averaging: Averaging::HarmonicWeights,
            seed: 0,
            fully_corrective: true,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LipError::InvalidInput(msg));
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad(format!("r must be > 0, got {}", self.r));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad(format!("q must lie in (0, 1), got {}", self.q));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        if !(self.lambda_step > 0.0 && self.lambda_step.is_finite()) {
            return bad(format!("lambda_step must be > 0, got {}", self.lambda_step));
        }
        if let Averaging::FixedWeight(g) = self.averaging {
            if !(g > 0.0 && g <= 1.0) {
                return bad(format!("fixed averaging weight must lie in (0, 1], got {g}"));
            }
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::for_order(1.0).expect("p = 1 is valid")
    }
}

/// `(r, q, s)` for which the saddle value equals the optimal cost `C`.
pub fn default_params(p: f64) -> Result<(f64, f64, f64)> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(LipError::InvalidInput(format!("order p must be > 0, got {p}")));
    }
    let r = (1.0 + p) * p.powf(-p / (1.0 + p));
    let q = p / (1.0 + p);
    Ok((r, q, saddle_value_factor(r, q)))
}

/// `s(r, q) = (1 - q) (q^q r)^(1/(1-q))`.
pub fn saddle_value_factor(r: f64, q: f64) -> f64 {
    (1.0 - q) * (q.powf(q) * r).powf(1.0 / (1.0 - q))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleState {
    pub lambda: VectorN,
    pub h: VectorN,
    pub best_eta: f64,
    pub best_h: VectorN,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub margin: f64,
    pub objective: f64,
    pub primal_upper: f64,
    pub dual_lower: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub const HEADER: &'static str = "iteration,margin,objective,primal_upper,dual_lower,gap";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.iteration, r.margin, r.objective, r.primal_upper, r.dual_lower, r.gap
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub solution: PrimalSolution,
    pub certificate: DualCertificate,
    pub trace: Trace,
    /// Final iterate; `state.lambda` is the unnormalized dual variable.
    pub state: SaddleState,
    pub iterations: usize,
    /// Bracket on `C^(1/p)` at exit.
    pub primal_upper: f64,
    pub dual_lower: f64,
}

fn objective_raw(
    inst: &ProblemInstance,
    lambda: &DVector<f64>,
    phi_h: &DVector<f64>,
    r: f64,
    q: f64,
) -> Option<f64> {
    let m = inst.margin(lambda);
    if m <= 0.0 {
        return None;
    }
    Some(r * m.powf(q) - (inst.delta * lambda.norm() + lambda.dot(phi_h)))
}

fn grad_raw(
    inst: &ProblemInstance,
    lambda: &DVector<f64>,
    phi_h: &DVector<f64>,
    r: f64,
    q: f64,
) -> Option<DVector<f64>> {
    let m = inst.margin(lambda);
    if m <= 0.0 {
        return None;
    }
    let norm = lambda.norm();
    let unit = if norm > 0.0 {
        lambda / norm
    } else {
        DVector::zeros(lambda.len())
    };
    let mut g = (inst.x.as_dvector() - &unit * inst.epsilon) * (r * q * m.powf(q - 1.0));
    g -= unit * inst.delta + phi_h;
    Some(g)
}

fn check_pair(inst: &ProblemInstance, lambda: &VectorN, h: &VectorN) -> Result<()> {
    check_dim("lambda", inst.n(), lambda.dim())?;
    check_dim("h", inst.k(), h.dim())?;
    if inst.margin(lambda) <= 0.0 {
        return Err(LipError::InvalidInput(
            "lambda must satisfy <lambda, x> - epsilon ||lambda|| > 0".into(),
        ));
    }
    Ok(())
}

/// `r m(lambda)^q - (delta ||lambda|| + <lambda, phi(h)>)`.
pub fn objective(lambda: &VectorN, h: &VectorN, inst: &ProblemInstance, r: f64, q: f64) -> Result<f64> {
    check_pair(inst, lambda, h)?;
    if !inst.cost.membership(h, 1e-9) {
        return Err(LipError::InvalidInput("h must lie in the unit sublevel set".into()));
    }
    let phi_h = inst.phi.apply_raw(h);
    Ok(objective_raw(inst, lambda, &phi_h, r, q).expect("margin checked"))
}

/// Supergradient of [`objective`] in `lambda`.
pub fn grad_lambda(lambda: &VectorN, h: &VectorN, inst: &ProblemInstance, r: f64, q: f64) -> Result<VectorN> {
    check_pair(inst, lambda, h)?;
    let phi_h = inst.phi.apply_raw(h);
    Ok(VectorN::from_raw(
        grad_raw(inst, lambda, &phi_h, r, q).expect("margin checked"),
    ))
}

/// Maximizer of the objective in `lambda` for a fixed atom `h`, when one exists
/// (`eta_h` finite and `epsilon + delta > 0`).
pub fn best_response(h: &VectorN, inst: &ProblemInstance, r: f64, q: f64) -> Result<Option<VectorN>> {
    check_dim("h", inst.k(), h.dim())?;
    let phi_h = inst.phi.apply_raw(h);
    Ok(best_response_raw(inst, &phi_h, r, q).map(VectorN::from_raw))
}

pub(crate) fn best_response_raw(
    inst: &ProblemInstance,
    phi_h: &DVector<f64>,
    r: f64,
    q: f64,
) -> Option<DVector<f64>> {
    let eta = eta_for_image(inst, phi_h).finite()?;
    if eta <= 0.0 {
        return None;
    }
    let w = inst.x.as_dvector() - phi_h * eta;
    let denom = w.dot(phi_h) + inst.delta * w.norm();
    if denom <= 0.0 {
        return None;
    }
    let scale = (r * q).powf(1.0 / (1.0 - q)) * eta.powf(q / (1.0 - q));
    Some(w * (scale / denom))
}

/// `m(lambda) / ||lambda||'`, a lower bound on `C^(1/p)` whenever positive.
fn dual_ratio(inst: &ProblemInstance, lambda: &DVector<f64>) -> Option<(f64, f64)> {
    let dg = dual_gauge_raw(lambda, &inst.phi, inst.delta, inst.cost.as_ref());
    if !(dg > 0.0) {
        return None;
    }
    let ratio = inst.margin(lambda) / dg;
    ratio.is_finite().then_some((ratio, dg))
}

struct AtomPool {
    atoms: Vec<DVector<f64>>,
    images: Vec<DVector<f64>>,
}

impl AtomPool {
    fn insert(&mut self, inst: &ProblemInstance, a: DVector<f64>) -> bool {
        if a.iter().all(|&v| v == 0.0) {
            return false;
        }
        if self.atoms.iter().any(|b| (b - &a).amax() <= 1e-13) {
            return false;
        }
        self.images.push(inst.phi.apply_raw(&a));
        self.atoms.push(a);
        true
    }

    /// Keeps atoms carrying weight plus the most recent ones.
    fn prune(&mut self, weights: &[f64], cap: usize) {
        if self.atoms.len() <= cap {
            return;
        }
        let len = self.atoms.len();
        let keep: Vec<bool> = (0..len)
            .map(|i| weights.get(i).is_some_and(|&w| w > 0.0) || i + cap / 2 >= len)
            .collect();
        let mut i = 0;
        self.atoms.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        let mut i = 0;
        self.images.retain(|_| {
            i += 1;
            keep[i - 1]
        });
    }
}

struct Tracker<'a> {
    inst: &'a ProblemInstance,
    best_eta: f64,
    best_h: DVector<f64>,
    dual_lower: f64,
    best_dual: Option<DVector<f64>>,
    /// Orthonormal basis of a proper `image(phi)` when `epsilon = delta = 0`.
    /// Dual candidates are projected onto it: the target lies in the image,
    /// and normal components only add rounding noise to the dual bound.
    image_basis: Option<DMatrix<f64>>,
}

impl<'a> Tracker<'a> {
    fn offer_atom(&mut self, h: &DVector<f64>) {
        let phi_h = self.inst.phi.apply_raw(h);
        if let ExtendedReal::Finite(e) = eta_for_image(self.inst, &phi_h) {
            // A clamped discriminant can return a scale whose residual misses
            // the radius by far more than rounding; such values are not bounds.
            let x = self.inst.x.as_dvector();
            let res = (x - &phi_h * e).norm();
            let radius = self.inst.epsilon + self.inst.delta * e;
            if e < self.best_eta && res <= radius + DEFAULT_FEASIBILITY_TOL * (1.0 + x.norm()) {
                self.best_eta = e;
                self.best_h = h.clone();
            }
        }
    }

    /// Accepts `scale` as a primal value for `h` when the residual check holds
    /// directly, which avoids the square-root sensitivity of `eta` at double roots.
    fn offer_scaled(&mut self, h: &DVector<f64>, scale: f64) {
        if !(scale < self.best_eta) {
            return;
        }
        let x = self.inst.x.as_dvector();
        let res = (x - self.inst.phi.apply_raw(h) * scale).norm();
        let radius = self.inst.epsilon + self.inst.delta * scale;
        if res <= radius + 1e-11 * (1.0 + x.norm()) {
            self.best_eta = scale;
            self.best_h = h.clone();
        }
    }

    fn offer_dual(&mut self, lambda: &DVector<f64>) {
        let projected;
        let lambda = match &self.image_basis {
            Some(b) => {
                projected = b * b.tr_mul(lambda);
                &projected
            }
            None => lambda,
        };
        if let Some((ratio, dg)) = dual_ratio(self.inst, lambda) {
            if ratio > self.dual_lower {
                self.dual_lower = ratio;
                self.best_dual = Some(lambda / dg);
            }
        }
    }

    /// Backtracked ascent on `margin / dual_gauge` from the best dual so far,
    /// along `x - epsilon u - ratio (delta u + phi(lmo(phi^T lambda)))`.
    fn ascend_ratio(&mut self, step: &mut f64, iters: usize) {
        let Some(mut lam) = self.best_dual.clone() else {
            return;
        };
        let inst = self.inst;
        let x = inst.x.as_dvector();
        let mut val = self.dual_lower;
        for _ in 0..iters {
            let norm = lam.norm();
            if norm == 0.0 {
                return;
            }
            let u = &lam / norm;
            let atom = inst.cost.lmo(&inst.phi.adjoint_raw(&lam));
            let g = x - &u * inst.epsilon - (&u * inst.delta + inst.phi.apply_raw(&atom)) * val;
            if !(g.norm() > 0.0) {
                return;
            }
            let mut accepted = false;
            for _ in 0..40 {
                let cand = &lam + &g * *step;
                if let Some((ratio, dg)) = dual_ratio(inst, &cand) {
                    if ratio > val {
                        lam = cand / dg;
                        val = ratio;
                        *step *= 2.0;
                        accepted = true;
                        break;
                    }
                }
                *step *= 0.5;
            }
            if !accepted {
                *step = 1.0;
                break;
            }
        }
        self.offer_dual(&lam);
    }

    fn gap(&self) -> f64 {
        self.best_eta - self.dual_lower
    }
}

fn dual_image_basis(inst: &ProblemInstance) -> Option<DMatrix<f64>> {
    if inst.epsilon > 0.0 || inst.delta > 0.0 {
        return None;
    }
    let basis = inst.phi.image_basis();
    (basis.ncols() < inst.n()).then_some(basis)
}

fn initial_lambda(inst: &ProblemInstance, seed: u64) -> DVector<f64> {
    let x = inst.x.as_dvector();
    let xn = x.norm();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DVector::from_fn(x.len(), |_, _| StandardNormal.sample(&mut rng));
    let base = x / xn;
    let gn: f64 = g.norm();
    if gn == 0.0 {
        return base;
    }
    // Keeps the margin above half of ||x|| - epsilon.
    let rho = 0.25 * (xn - inst.epsilon) / (xn + inst.epsilon);
    base + g * (rho / gn)
}

fn short_circuit(inst: &ProblemInstance) -> Result<Option<SolveOutput>> {
    if inst.is_trivial() {
        let sol = PrimalSolution::zero(inst);
        return Ok(Some(SolveOutput {
            state: SaddleState {
                lambda: VectorN::zeros(inst.n()),
                h: sol.h.clone(),
                best_eta: 0.0,
                best_h: sol.h.clone(),
                iteration: 0,
            },
            solution: sol,
            certificate: DualCertificate::zero(inst.n()),
            trace: Trace::default(),
            iterations: 0,
            primal_upper: 0.0,
            dual_lower: 0.0,
        }));
    }
    if classify_feasibility(inst, DEFAULT_FEASIBILITY_TOL) == Feasibility::Infeasible {
        return Err(LipError::Infeasible {
            residual: inst.phi.projection_residual(&inst.x),
            epsilon: inst.epsilon,
        });
    }
    Ok(None)
}

/// Certificate for the final primal point. With `epsilon = delta = 0` the
/// residual is zero, so the best dual iterate is checked directly instead.
fn final_certificate(
    inst: &ProblemInstance,
    sol: &PrimalSolution,
    best_dual: Option<&DVector<f64>>,
    fallback: &DVector<f64>,
    tol: f64,
) -> Result<DualCertificate> {
    if inst.epsilon + inst.delta > 0.0 {
        return extract_dual(inst, &sol.f);
    }
    let lambda = match best_dual {
        Some(l) => l.clone(),
        None => {
            let dg = dual_gauge_raw(fallback, &inst.phi, 0.0, inst.cost.as_ref());
            if dg > 0.0 {
                fallback / dg
            } else {
                fallback.clone()
            }
        }
    };
    let cert_tol = (10.0 * tol).max(1e-6) * (1.0 + sol.scale);
    check_lambda_membership(&VectorN::from_raw(lambda), inst, sol.scale, cert_tol)
}

/// With the ball tangent to `image(phi)` the feasible images collapse to the
/// projection of `x`. Returns the equivalent instance with target `P x` and
/// `epsilon = 0`.
fn tangent_reduction(inst: &ProblemInstance) -> Result<Option<ProblemInstance>> {
    if !tangent_to_image(inst) {
        return Ok(None);
    }
    let px = inst.phi.project_onto_image(inst.x.as_dvector());
    ProblemInstance::new(
        VectorN::from_raw(px),
        inst.phi.clone(),
        0.0,
        0.0,
        inst.cost.clone(),
    )
    .map(Some)
}

/// Lifts a solution of the reduced tangent instance back to `inst`. The
/// certificate is the unit normal direction, whose dual gauge vanishes.
fn lift_tangent(inst: &ProblemInstance, out: SolveOutput) -> SolveOutput {
    let x = inst.x.as_dvector();
    let w = x - inst.phi.project_onto_image(x);
    let wn = w.norm();
    let lambda = if wn > 0.0 { w / wn } else { w };
    let certificate = DualCertificate {
        dual_gauge_norm: dual_gauge_raw(&lambda, &inst.phi, 0.0, inst.cost.as_ref()),
        margin: inst.margin(&lambda),
        lambda: VectorN::from_raw(lambda),
        in_lambda: false,
        degenerate: true,
    };
    let solution = PrimalSolution::from_atom(inst, out.solution.scale, out.solution.h.clone());
    SolveOutput {
        solution,
        certificate,
        ..out
    }
}

/// Solves the instance and returns the primal solution, a dual certificate and the trace.
pub fn solve(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<SolveOutput> {
    let (out, converged) = solve_unchecked(inst, cfg, None)?;
    if !converged {
        return Err(LipError::BudgetExceeded {
            iterations: out.iterations,
            primal_upper: out.primal_upper,
            dual_lower: out.dual_lower,
        });
    }
    Ok(out)
}

/// Like [`solve`] but returns the best iterate with a convergence flag instead
/// of failing on an exhausted budget. `warm` seeds the dual iterate.
pub(crate) fn solve_unchecked(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    warm: Option<&DVector<f64>>,
) -> Result<(SolveOutput, bool)> {
    cfg.validate()?;
    if let Some(out) = short_circuit(inst)? {
        return Ok((out, true));
    }
    if let Some(reduced) = tangent_reduction(inst)? {
        let (out, converged) = solve_saddle(&reduced, cfg, None)?;
        return Ok((lift_tangent(inst, out), converged));
    }
    solve_saddle(inst, cfg, warm)
}

fn solve_saddle(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    warm: Option<&DVector<f64>>,
) -> Result<(SolveOutput, bool)> {
    let p = inst.cost.order();
    let (n, k) = (inst.n(), inst.k());
    let x = inst.x.as_dvector();
    let cost = inst.cost.as_ref();

    let mut lambda = match warm {
        Some(w) if w.len() == n && inst.margin(w) > 0.0 => w.clone(),
        _ => initial_lambda(inst, cfg.seed),
    };
    let mut h = cost.lmo(&inst.phi.adjoint_raw(&lambda));
    let mut pool = AtomPool {
        atoms: Vec::new(),
        images: Vec::new(),
    };
    pool.insert(inst, h.clone());
    let mut tr = Tracker {
        inst,
        best_eta: f64::INFINITY,
        best_h: h.clone(),
        dual_lower: 0.0,
        best_dual: None,
        image_basis: dual_image_basis(inst),
    };
    tr.offer_atom(&h);
    tr.offer_dual(&lambda);

    let mut step = cfg.lambda_step;
    let mut ratio_step = 1.0;
    let mut trace = Trace::default();
    let mut converged = false;
    let mut last_theta = f64::INFINITY;
    let mut iterations = 0;
    let cap = 4 * (n + k) + 40;

    for it in 0..cfg.max_iter {
        iterations = it + 1;
        let phi_h = inst.phi.apply_raw(&h);

        // Backtracked ascent in lambda.
        if let (Some(obj), Some(g)) = (
            objective_raw(inst, &lambda, &phi_h, cfg.r, cfg.q),
            grad_raw(inst, &lambda, &phi_h, cfg.r, cfg.q),
        ) {
            let mut t = step;
            let mut accepted = false;
            for attempt in 0..60 {
                let cand = &lambda + &g * t;
                if let Some(o) = objective_raw(inst, &cand, &phi_h, cfg.r, cfg.q) {
                    if o >= obj {
                        lambda = cand;
                        accepted = true;
                        step = if attempt == 0 { t * 2.0 } else { t };
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                step = cfg.lambda_step;
            }
        }
        tr.offer_dual(&lambda);

        // Averaged best response in h.
        let atom = cost.lmo(&inst.phi.adjoint_raw(&lambda));
        let mut added = pool.insert(inst, atom.clone());
        let gamma = cfg.averaging.weight(it);
        h = &h * (1.0 - gamma) + atom * gamma;
        tr.offer_atom(&h);

        if cfg.fully_corrective {
            let rs = solve_restricted(x, &pool.images, inst.epsilon, inst.delta);
            if rs.theta.is_finite() && rs.theta > 0.0 {
                let mut f = DVector::zeros(k);
                for (a, &u) in pool.atoms.iter().zip(&rs.weights) {
                    f.axpy(u, a, 1.0);
                }
                h = f / rs.theta;
                tr.offer_atom(&h);
                tr.offer_scaled(&h, rs.theta);
                // On a curved unit ball the hull point sits strictly inside;
                // its radial lift is a better atom in the same direction.
                if let ExtendedReal::Finite(c) = cost.evaluate(&h) {
                    if c > 0.0 && c < 1.0 - 1e-12 {
                        let lifted = &h / c.powf(1.0 / p);
                        tr.offer_atom(&lifted);
                        added |= pool.insert(inst, lifted);
                    }
                }
            }
            // Price every restricted dual against the full atom set.
            for d in &rs.duals {
                tr.offer_dual(d);
                added |= pool.insert(inst, cost.lmo(&inst.phi.adjoint_raw(d)));
            }
            tr.ascend_ratio(&mut ratio_step, 20);
            if let Some(bd) = tr.best_dual.clone() {
                // Without a primal value yet, the dual lower bound stands in for C^(1/p).
                let c_est = if tr.best_eta.is_finite() { tr.best_eta } else { tr.dual_lower };
                let scale = saddle_lambda_scale(c_est.powf(p), p, cfg.r, cfg.q).unwrap_or(1.0);
                if scale > 0.0 && scale.is_finite() && inst.margin(&bd) > 0.0 {
                    lambda = bd * scale;
                }
                added |= pool.insert(inst, cost.lmo(&inst.phi.adjoint_raw(&lambda)));
            }
            let stalled = !added && rs.theta >= last_theta;
            last_theta = last_theta.min(rs.theta);
            pool.prune(&rs.weights, cap);
            if stalled && tr.gap() > cfg.tol {
                let phi_h = inst.phi.apply_raw(&h);
                push_row(&mut trace, inst, it, &lambda, &phi_h, cfg, &tr);
                break;
            }
        }

        let phi_h = inst.phi.apply_raw(&h);
        push_row(&mut trace, inst, it, &lambda, &phi_h, cfg, &tr);
        if tr.gap() <= cfg.tol {
            converged = true;
            break;
        }
    }

    if !tr.best_eta.is_finite() {
        return Err(LipError::BudgetExceeded {
            iterations,
            primal_upper: f64::INFINITY,
            dual_lower: tr.dual_lower,
        });
    }
    let best_h = VectorN::from_raw(tr.best_h.clone());
    let sol = PrimalSolution::from_atom(inst, tr.best_eta, best_h.clone());
    let cert = final_certificate(inst, &sol, tr.best_dual.as_ref(), &lambda, cfg.tol)?;
    let converged = converged || cert.degenerate;
    let out = SolveOutput {
        solution: sol,
        certificate: cert,
        trace,
        state: SaddleState {
            lambda: VectorN::from_raw(lambda),
            h: VectorN::from_raw(h),
            best_eta: tr.best_eta,
            best_h,
            iteration: iterations,
        },
        iterations,
        primal_upper: tr.best_eta,
        dual_lower: tr.dual_lower,
    };
    Ok((out, converged))
}

fn push_row(
    trace: &mut Trace,
    inst: &ProblemInstance,
    it: usize,
    lambda: &DVector<f64>,
    phi_h: &DVector<f64>,
    cfg: &SolverConfig,
    tr: &Tracker<'_>,
) {
    trace.rows.push(TraceRow {
        iteration: it,
        margin: inst.margin(lambda),
        objective: objective_raw(inst, lambda, phi_h, cfg.r, cfg.q).unwrap_or(f64::NAN),
        primal_upper: tr.best_eta,
        dual_lower: tr.dual_lower,
        gap: tr.gap(),
    });
}

enum Verdict {
    /// `||x - eta phi(h)|| <= epsilon + eta delta`.
    Reachable(DVector<f64>),
    /// A dual witness proving `C^(1/p) > eta`.
    Unreachable(DVector<f64>),
}

/// Decides whether `eta phi(V_c)` comes within `epsilon + eta delta` of `x`
/// by projected accelerated gradient on `0.5 ||x - eta phi(h)||^2`.
fn probe_scale(inst: &ProblemInstance, eta: f64, warm: &DVector<f64>, lip: f64) -> Verdict {
    let x = inst.x.as_dvector();
    let cost = inst.cost.as_ref();
    let radius = inst.epsilon + eta * inst.delta;
    let feas_tol = DEFAULT_FEASIBILITY_TOL * (1.0 + x.norm());
    let l = (eta * eta * lip * lip).max(1e-300);
    let mut h = cost.project(warm);
    let mut y = h.clone();
    let mut t: f64 = 1.0;
    let mut prev_obj = f64::INFINITY;
    let mut last_w = x.clone();
    for it in 0..20_000 {
        let w_y = x - inst.phi.apply_raw(&y) * eta;
        let grad = inst.phi.adjoint_raw(&w_y) * (-eta);
        let h_next = cost.project(&(&y - grad / l));
        let w = x - inst.phi.apply_raw(&h_next) * eta;
        let obj = 0.5 * w.norm_squared();
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if obj > prev_obj {
            // Restart momentum.
            y = h_next.clone();
            t = 1.0;
        } else {
            y = &h_next + (&h_next - &h) * ((t - 1.0) / t_next);
            t = t_next;
        }
        prev_obj = obj;
        h = h_next;
        let wn = w.norm();
        if wn <= radius + feas_tol {
            return Verdict::Reachable(h);
        }
        if it % 5 == 0 {
            let m = inst.margin(&w);
            let dg = dual_gauge_raw(&w, &inst.phi, inst.delta, cost);
            if m - eta * dg > 1e-14 * (1.0 + m.abs()) {
                return Verdict::Unreachable(w);
            }
        }
        last_w = w;
    }
    if last_w.norm() <= radius + 1e3 * feas_tol {
        Verdict::Reachable(h)
    } else {
        Verdict::Unreachable(last_w)
    }
}

/// Same contract as [`solve`], computed through the form with the margin
/// constraint eliminated by an auxiliary scale: bisection on the scale, with
/// each probe settled by a primal or dual witness.
pub fn solve_eliminated_form(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<SolveOutput> {
    cfg.validate()?;
    let p = inst.cost.order();
    if p != 1.0 {
        return Err(LipError::InvalidInput(format!(
            "eliminated form needs a cost of order 1, got {p}"
        )));
    }
    if let Some(out) = short_circuit(inst)? {
        return Ok(out);
    }
    if let Some(reduced) = tangent_reduction(inst)? {
        return Ok(lift_tangent(inst, eliminated_bisection(&reduced, cfg)?));
    }
    eliminated_bisection(inst, cfg)
}

fn eliminated_bisection(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<SolveOutput> {
    let k = inst.k();
    let lip = inst.phi.op_norm();
    let mut tr = Tracker {
        inst,
        best_eta: f64::INFINITY,
        best_h: DVector::zeros(k),
        dual_lower: 0.0,
        best_dual: None,
        image_basis: dual_image_basis(inst),
    };
    let mut trace = Trace::default();
    let mut warm = DVector::zeros(k);
    let mut hi = 1.0;
    let mut iterations = 0;
    let mut hi_found = false;
    for _ in 0..80 {
        iterations += 1;
        match probe_scale(inst, hi, &warm, lip) {
            Verdict::Reachable(h) => {
                tr.offer_atom(&h);
                warm = h;
                hi_found = true;
                break;
            }
            Verdict::Unreachable(w) => {
                tr.offer_dual(&w);
                hi *= 2.0;
            }
        }
    }
    if !hi_found {
        return Err(LipError::BudgetExceeded {
            iterations,
            primal_upper: f64::INFINITY,
            dual_lower: tr.dual_lower,
        });
    }
    let mut lo = tr.dual_lower.min(hi);
    let mut upper = tr.best_eta.min(hi);
    let mut converged = upper - lo <= cfg.tol;
    while !converged && iterations < cfg.max_iter {
        iterations += 1;
        let mid = 0.5 * (lo + upper);
        match probe_scale(inst, mid, &warm, lip) {
            Verdict::Reachable(h) => {
                tr.offer_atom(&h);
                upper = tr.best_eta.min(mid);
                warm = h;
            }
            Verdict::Unreachable(w) => {
                tr.offer_dual(&w);
                lo = mid.max(tr.dual_lower);
            }
        }
        let (margin, objective) = match &tr.best_dual {
            Some(l) => {
                let lam = l * saddle_lambda_scale(upper, 1.0, cfg.r, cfg.q).unwrap_or(1.0);
                let phi_h = inst.phi.apply_raw(&tr.best_h);
                (
                    inst.margin(&lam),
                    objective_raw(inst, &lam, &phi_h, cfg.r, cfg.q).unwrap_or(f64::NAN),
                )
            }
            None => (f64::NAN, f64::NAN),
        };
        trace.rows.push(TraceRow {
            iteration: iterations,
            margin,
            objective,
            primal_upper: tr.best_eta,
            dual_lower: lo,
            gap: tr.best_eta - lo,
        });
        converged = tr.best_eta - lo <= cfg.tol;
    }
    let best_h = VectorN::from_raw(tr.best_h.clone());
    let sol = PrimalSolution::from_atom(inst, tr.best_eta, best_h.clone());
    let fallback = inst.x.as_dvector().clone();
    let cert = final_certificate(inst, &sol, tr.best_dual.as_ref(), &fallback, cfg.tol)?;
    if !converged && !cert.degenerate {
        return Err(LipError::BudgetExceeded {
            iterations,
            primal_upper: tr.best_eta,
            dual_lower: lo,
        });
    }
    let lambda = match &tr.best_dual {
        Some(l) => l * saddle_lambda_scale(tr.best_eta, 1.0, cfg.r, cfg.q)?,
        None => DVector::zeros(inst.n()),
    };
    Ok(SolveOutput {
        solution: sol,
        certificate: cert,
        trace,
        state: SaddleState {
            lambda: VectorN::from_raw(lambda),
            h: best_h.clone(),
            best_eta: tr.best_eta,
            best_h,
            iteration: iterations,
        },
        iterations,
        primal_upper: tr.best_eta,
        dual_lower: lo,
    })
}
