//! Shared data model: vectors, linear operators, problem instances,
//! primal solutions and dual certificates, plus feasibility classification.
//!
//! The signal space is plain `R^n` with the Euclidean inner product. The
//! operator `phi` maps coefficient vectors in `R^K` to signals in `R^n`.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::costs::{Cost, CostKind, CostModel};
use crate::error::{check_dim, LipError, Result};

/// Default additive slack used when comparing a residual against epsilon.
pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-9;

/// Relative rank cutoff for the pivoted QR of `phi`.
const RANK_TOL: f64 = 1e-10;

/// A real value that may be `+inf`, kept out of floating-point arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    Infinite,
}

impl ExtendedReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::Infinite => None,
        }
    }

    /// Raises a finite value to `p`; infinity stays infinite.
    pub fn powf(self, p: f64) -> ExtendedReal {
        match self {
            ExtendedReal::Finite(v) => ExtendedReal::Finite(v.powf(p)),
            ExtendedReal::Infinite => ExtendedReal::Infinite,
        }
    }

    /// `true` when `self <= other`, treating infinity as larger than every finite value.
    pub fn le(self, other: ExtendedReal) -> bool {
        match (self, other) {
            (_, ExtendedReal::Infinite) => true,
            (ExtendedReal::Infinite, ExtendedReal::Finite(_)) => false,
            (ExtendedReal::Finite(a), ExtendedReal::Finite(b)) => a <= b,
        }
    }

    pub fn to_json(self) -> serde_json::Value {
        match self {
            ExtendedReal::Finite(v) => serde_json::json!(v),
            ExtendedReal::Infinite => serde_json::json!("infinite"),
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::Infinite => write!(f, "inf"),
        }
    }
}

/// A vector with finite coordinates and fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorN(DVector<f64>);

impl VectorN {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        Self::from_dvector(DVector::from_vec(coords))
    }

    pub fn from_dvector(v: DVector<f64>) -> Result<Self> {
        if let Some(i) = v.iter().position(|c| !c.is_finite()) {
            return Err(LipError::InvalidInput(format!(
                "coordinate {i} is not finite"
            )));
        }
        Ok(VectorN(v))
    }

    /// Wraps the result of arithmetic on already-validated vectors.
    pub(crate) fn from_raw(v: DVector<f64>) -> Self {
        debug_assert!(v.iter().all(|c| c.is_finite()), "non-finite coordinate");
        VectorN(v)
    }

    pub fn zeros(n: usize) -> Self {
        VectorN(DVector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_dvector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.iter().copied().collect()
    }
}

impl Deref for VectorN {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Dense linear map `phi : R^K -> R^n`, stored as an `n x K` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    matrix: DMatrix<f64>,
}

impl LinearOperator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(LipError::InvalidInput("operator has a non-finite entry".into()));
        }
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(LipError::InvalidInput("operator must be non-empty".into()));
        }
        Ok(LinearOperator { matrix })
    }

    /// Builds the operator from row-major nested vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(LipError::InvalidInput("operator has no rows".into()));
        }
        let k = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(LipError::InvalidInput(format!(
                    "row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
        }
        Self::new(DMatrix::from_fn(n, k, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        LinearOperator {
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.output_dim())
            .map(|i| self.matrix.row(i).iter().copied().collect())
            .collect()
    }

    pub fn apply(&self, f: &VectorN) -> Result<VectorN> {
        check_dim("apply", self.input_dim(), f.dim())?;
        Ok(VectorN::from_raw(&self.matrix * f.as_dvector()))
    }

    pub fn adjoint_apply(&self, y: &VectorN) -> Result<VectorN> {
        check_dim("adjoint_apply", self.output_dim(), y.dim())?;
        Ok(VectorN::from_raw(self.matrix.tr_mul(y.as_dvector())))
    }

    pub(crate) fn apply_raw(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.matrix * f
    }

    pub(crate) fn adjoint_raw(&self, y: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(y)
    }

    /// Largest singular value.
    pub fn op_norm(&self) -> f64 {
        self.matrix
            .singular_values()
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }

    /// Smallest nonzero singular value (zero for the zero operator).
    pub fn min_nonzero_singular_value(&self) -> f64 {
        let sv = self.matrix.singular_values();
        let top = sv.iter().copied().fold(0.0, f64::max);
        sv.iter()
            .copied()
            .filter(|&s| s > RANK_TOL * top.max(f64::MIN_POSITIVE))
            .fold(f64::INFINITY, f64::min)
            .min(top)
    }

    /// Orthonormal basis of `image(phi)` from a column-pivoted QR.
    ///
    /// Columns of `R` whose diagonal falls below `1e-10 * max column norm`
    /// are treated as dependent.
    pub fn image_basis(&self) -> DMatrix<f64> {
        let n = self.output_dim();
        let max_col = self
            .matrix
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if max_col == 0.0 {
            return DMatrix::zeros(n, 0);
        }
        let qr = self.matrix.clone().col_piv_qr();
        let r = qr.r();
        let cutoff = RANK_TOL * max_col;
        let rank = (0..r.nrows().min(r.ncols()))
            .take_while(|&i| r[(i, i)].abs() > cutoff)
            .count();
        let q = qr.q();
        q.columns(0, rank).into_owned()
    }

    /// Orthogonal projection of `y` onto `image(phi)`.
    pub fn project_onto_image(&self, y: &DVector<f64>) -> DVector<f64> {
        let basis = self.image_basis();
        if basis.ncols() == 0 {
            return DVector::zeros(y.len());
        }
        &basis * basis.tr_mul(y)
    }

    /// `||y - pi_phi(y)||`.
    pub fn projection_residual(&self, y: &DVector<f64>) -> f64 {
        (y - self.project_onto_image(y)).norm()
    }

    /// Minimum-norm least-squares solution of `phi f = y`.
    pub fn least_squares(&self, y: &DVector<f64>) -> DVector<f64> {
        let svd = self.matrix.clone().svd(true, true);
        let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
        svd.solve(y, RANK_TOL * top.max(f64::MIN_POSITIVE))
            .unwrap_or_else(|_| DVector::zeros(self.input_dim()))
    }
}

/// One linear inverse problem: minimize `c^p` over `(c, f)` subject to
/// `c(f)^(1/p) <= c` and `||x - phi f|| <= epsilon + delta c`.
#[derive(Clone)]
pub struct ProblemInstance {
    pub x: VectorN,
    pub phi: LinearOperator,
    pub epsilon: f64,
    pub delta: f64,
    pub cost: Arc<dyn Cost>,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("x", &self.x.to_vec())
            .field("phi", &self.phi.rows())
            .field("epsilon", &self.epsilon)
            .field("delta", &self.delta)
            .field("cost", &self.cost.describe())
            .finish()
    }
}

impl ProblemInstance {
    pub fn new(
        x: VectorN,
        phi: LinearOperator,
        epsilon: f64,
        delta: f64,
        cost: Arc<dyn Cost>,
    ) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(LipError::InvalidInput(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(LipError::InvalidInput(format!(
                "delta must be finite and >= 0, got {delta}"
            )));
        }
        check_dim("instance x vs phi output", phi.output_dim(), x.dim())?;
        check_dim("instance cost vs phi input", phi.input_dim(), cost.dim())?;
        Ok(ProblemInstance {
            x,
            phi,
            epsilon,
            delta,
            cost,
        })
    }

    /// Convenience constructor for the built-in costs.
    pub fn with_kind(
        x: Vec<f64>,
        phi: LinearOperator,
        epsilon: f64,
        delta: f64,
        kind: CostKind,
    ) -> Result<Self> {
        let cost = Arc::new(CostModel::new(kind, phi.input_dim())?);
        Self::new(VectorN::new(x)?, phi, epsilon, delta, cost)
    }

    /// Same operator and cost, different target and tolerances.
    pub fn with_target(&self, x: VectorN, epsilon: f64) -> Result<Self> {
        Self::new(x, self.phi.clone(), epsilon, self.delta, self.cost.clone())
    }

    pub fn n(&self) -> usize {
        self.x.dim()
    }

    pub fn k(&self) -> usize {
        self.phi.input_dim()
    }

    pub fn x_norm(&self) -> f64 {
        self.x.norm()
    }

    /// `<lambda, x> - epsilon ||lambda||`, the minimum of `lambda` over `B[x, epsilon]`.
    pub fn margin(&self, lambda: &DVector<f64>) -> f64 {
        lambda.dot(&self.x) - self.epsilon * lambda.norm()
    }

    /// `true` when `||x|| <= epsilon`, where the optimal cost is zero.
    pub fn is_trivial(&self) -> bool {
        self.x_norm() <= self.epsilon
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(s)?;
        file.into_instance()
    }

    pub fn to_json_value(&self) -> Result<serde_json::Value> {
        let kind = self.cost.kind().ok_or_else(|| {
            LipError::InvalidInput("only built-in costs can be serialized".into())
        })?;
        let file = InstanceFile {
            x: self.x.to_vec(),
            phi: self.phi.rows(),
            epsilon: self.epsilon,
            delta: self.delta,
            cost: CostSpec { kind },
        };
        Ok(serde_json::to_value(file)?)
    }
}

/// On-disk instance layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub x: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub delta: f64,
    pub cost: CostSpec,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub kind: CostKind,
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<ProblemInstance> {
        let phi = LinearOperator::from_rows(&self.phi)?;
        ProblemInstance::with_kind(self.x, phi, self.epsilon, self.delta, self.cost.kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Infeasible,
}

/// Feasible when `delta > 0`, or when the distance from `x` to `image(phi)`
/// is at most `epsilon + tol`.
pub fn classify_feasibility(inst: &ProblemInstance, tol: f64) -> Feasibility {
    if inst.delta > 0.0 {
        return Feasibility::Feasible;
    }
    if inst.phi.projection_residual(&inst.x) <= inst.epsilon + tol {
        Feasibility::Feasible
    } else {
        Feasibility::Infeasible
    }
}

/// Optimal cost, its `1/p`-th power, representation and normalized atom.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalSolution {
    pub cost_value: f64,
    pub scale: f64,
    pub f: VectorN,
    pub h: VectorN,
    pub residual_norm: f64,
}

impl PrimalSolution {
    /// `f = scale * h`, `cost_value = scale^p`.
    pub fn from_atom(inst: &ProblemInstance, scale: f64, h: VectorN) -> Self {
        let f = VectorN::from_raw(h.as_dvector() * scale);
        let residual_norm = (inst.x.as_dvector() - inst.phi.apply_raw(&f)).norm();
        let h = if scale == 0.0 { VectorN::zeros(h.dim()) } else { h };
        PrimalSolution {
            cost_value: scale.powf(inst.cost.order()),
            scale,
            f,
            h,
            residual_norm,
        }
    }

    pub fn zero(inst: &ProblemInstance) -> Self {
        PrimalSolution {
            cost_value: 0.0,
            scale: 0.0,
            f: VectorN::zeros(inst.k()),
            h: VectorN::zeros(inst.k()),
            residual_norm: inst.x_norm(),
        }
    }

    /// Builds a solution from a representation `f` and a scale `C^(1/p)`.
    pub fn from_representation(inst: &ProblemInstance, scale: f64, f: VectorN) -> Result<Self> {
        check_dim("solution f", inst.k(), f.dim())?;
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(LipError::InvalidInput(format!("invalid scale {scale}")));
        }
        let h = if scale > 0.0 {
            VectorN::from_raw(f.as_dvector() / scale)
        } else {
            VectorN::zeros(f.dim())
        };
        let residual_norm = (inst.x.as_dvector() - inst.phi.apply_raw(&f)).norm();
        Ok(PrimalSolution {
            cost_value: scale.powf(inst.cost.order()),
            scale,
            f,
            h,
            residual_norm,
        })
    }
}

/// A dual vector together with its membership verdict for the optimal dual set.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate {
    pub lambda: VectorN,
    pub dual_gauge_norm: f64,
    pub margin: f64,
    pub in_lambda: bool,
    /// Set when the optimal dual set was detected to be empty (delta = 0 only).
    pub degenerate: bool,
}

impl DualCertificate {
    pub fn zero(n: usize) -> Self {
        DualCertificate {
            lambda: VectorN::zeros(n),
            dual_gauge_norm: 0.0,
            margin: 0.0,
            in_lambda: false,
            degenerate: false,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "lambda": self.lambda.to_vec(),
            "dual_gauge_norm": self.dual_gauge_norm,
            "margin": self.margin,
            "in_lambda": self.in_lambda,
            "degenerate": self.degenerate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn op(rows: &[&[f64]]) -> LinearOperator {
        LinearOperator::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn apply_examples() {
        let id = LinearOperator::identity(2);
        let f = VectorN::new(vec![3.0, -1.0]).unwrap();
        assert_eq!(id.apply(&f).unwrap().to_vec(), vec![3.0, -1.0]);

        let zero = op(&[&[0.0, 0.0], &[0.0, 0.0]]);
        assert_eq!(zero.apply(&f).unwrap().to_vec(), vec![0.0, 0.0]);

        let a = op(&[&[1.0, 2.0], &[0.0, 1.0]]);
        let ones = VectorN::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(a.apply(&ones).unwrap().to_vec(), vec![3.0, 1.0]);
    }

    #[test]
    fn adjoint_examples() {
        let id = LinearOperator::identity(2);
        let y = VectorN::new(vec![3.0, -1.0]).unwrap();
        assert_eq!(id.adjoint_apply(&y).unwrap().to_vec(), vec![3.0, -1.0]);

        let a = op(&[&[1.0, 2.0], &[0.0, 1.0]]);
        let e1 = VectorN::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(a.adjoint_apply(&e1).unwrap().to_vec(), vec![1.0, 2.0]);

        let zero = op(&[&[0.0, 0.0], &[0.0, 0.0]]);
        assert_eq!(zero.adjoint_apply(&y).unwrap().to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = op(&[&[1.0, 2.0, 3.0], &[0.0, 1.0, 0.0]]);
        let f = VectorN::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            a.apply(&f),
            Err(LipError::DimensionMismatch { expected: 3, found: 2, .. })
        ));
        let y = VectorN::new(vec![1.0, 1.0, 1.0]).unwrap();
        assert!(a.adjoint_apply(&y).is_err());
    }

    #[test]
    fn non_finite_coordinates_rejected() {
        assert!(VectorN::new(vec![1.0, f64::NAN]).is_err());
        assert!(VectorN::new(vec![f64::INFINITY]).is_err());
        assert!(LinearOperator::from_rows(&[vec![1.0, f64::NEG_INFINITY]]).is_err());
    }

    #[test]
    fn adjointness_on_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = DMatrix::from_fn(4, 3, |_, _| rng.random_range(-2.0..2.0));
        let phi = LinearOperator::new(m).unwrap();
        for _ in 0..100 {
            let f = VectorN::new((0..3).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
            let y = VectorN::new((0..4).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
            let lhs = phi.apply(&f).unwrap().dot(&y);
            let rhs = f.dot(&phi.adjoint_apply(&y).unwrap());
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn projection_handles_rank_deficiency() {
        // Second column duplicates the first: image is the line spanned by (1, 1, 0).
        let a = op(&[&[1.0, 2.0], &[1.0, 2.0], &[0.0, 0.0]]);
        assert_eq!(a.image_basis().ncols(), 1);
        let y = DVector::from_vec(vec![1.0, 0.0, 3.0]);
        let p = a.project_onto_image(&y);
        assert!((p - DVector::from_vec(vec![0.5, 0.5, 0.0])).norm() < 1e-12);
    }

    #[test]
    fn feasibility_examples() {
        let phi = op(&[&[1.0], &[0.0]]);
        let l1 = CostKind::L1;
        let i = ProblemInstance::with_kind(vec![3.0, 7.0], phi.clone(), 0.0, 0.1, l1).unwrap();
        assert_eq!(classify_feasibility(&i, DEFAULT_FEASIBILITY_TOL), Feasibility::Feasible);

        let i = ProblemInstance::with_kind(vec![0.0, 2.0], phi.clone(), 1.0, 0.0, l1).unwrap();
        assert_eq!(classify_feasibility(&i, DEFAULT_FEASIBILITY_TOL), Feasibility::Infeasible);

        let i = ProblemInstance::with_kind(vec![5.0, 0.5], phi, 1.0, 0.0, l1).unwrap();
        assert_eq!(classify_feasibility(&i, DEFAULT_FEASIBILITY_TOL), Feasibility::Feasible);
    }

    #[test]
    fn feasibility_is_monotone_in_epsilon() {
        let phi = op(&[&[1.0], &[0.0], &[1.0]]);
        let x = vec![0.3, 1.2, -0.4];
        let mut was_feasible = false;
        for step in 0..40 {
            let eps = step as f64 * 0.05;
            let inst = ProblemInstance::with_kind(x.clone(), phi.clone(), eps, 0.0, CostKind::L2)
                .unwrap();
            let feasible =
                classify_feasibility(&inst, DEFAULT_FEASIBILITY_TOL) == Feasibility::Feasible;
            assert!(!was_feasible || feasible, "lost feasibility at eps={eps}");
            was_feasible = feasible;
        }
        assert!(was_feasible);
    }

    #[test]
    fn instance_validation() {
        let phi = LinearOperator::identity(2);
        assert!(ProblemInstance::with_kind(vec![1.0, 0.0], phi.clone(), -0.1, 0.0, CostKind::L1).is_err());
        assert!(ProblemInstance::with_kind(vec![1.0, 0.0], phi.clone(), 0.0, -1.0, CostKind::L1).is_err());
        assert!(ProblemInstance::with_kind(vec![1.0], phi, 0.0, 0.0, CostKind::L1).is_err());
    }

    #[test]
    fn instance_json_rejects_bad_numbers() {
        let ok = r#"{"x":[2,0],"phi":[[1,0],[0,1]],"epsilon":0.5,"delta":0,"cost":{"kind":"l1"}}"#;
        let inst = ProblemInstance::from_json_str(ok).unwrap();
        assert_eq!(inst.k(), 2);
        let nan = r#"{"x":[NaN,0],"phi":[[1,0],[0,1]],"epsilon":0.5,"delta":0,"cost":{"kind":"l1"}}"#;
        assert!(ProblemInstance::from_json_str(nan).is_err());
        let inf = r#"{"x":[Infinity,0],"phi":[[1,0],[0,1]],"epsilon":0.5,"delta":0,"cost":{"kind":"l1"}}"#;
        assert!(ProblemInstance::from_json_str(inf).is_err());
        let neg = r#"{"x":[2,0],"phi":[[1,0],[0,1]],"epsilon":-0.5,"delta":0,"cost":{"kind":"l1"}}"#;
        assert!(ProblemInstance::from_json_str(neg).is_err());
        let kind = r#"{"x":[2,0],"phi":[[1,0],[0,1]],"epsilon":0.5,"delta":0,"cost":{"kind":"nuclear"}}"#;
        assert!(ProblemInstance::from_json_str(kind).is_err());
    }

    #[test]
    fn primal_solution_invariants() {
        let inst = ProblemInstance::with_kind(
            vec![2.0, 0.0],
            LinearOperator::identity(2),
            0.5,
            0.0,
            CostKind::L1,
        )
        .unwrap();
        let sol = PrimalSolution::from_atom(&inst, 1.5, VectorN::new(vec![1.0, 0.0]).unwrap());
        assert!((sol.cost_value - 1.5).abs() < 1e-12);
        assert_eq!(sol.f.to_vec(), vec![1.5, 0.0]);
        assert!((sol.residual_norm - 0.5).abs() < 1e-12);
    }
}
