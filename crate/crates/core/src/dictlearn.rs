//! Alternating dictionary learning over the sampled objective
//! `(1/T) sum_t C_delta(D, x_t, epsilon_t)`.
//!
//! Each round encodes every sample with the dictionary fixed, then improves
//! the dictionary with the encoding atoms fixed. Dictionaries live in the
//! product of unit Euclidean column balls.

use std::io::Read;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::eta_for_image;
use crate::costs::{Cost, CostKind, CostModel};
use crate::error::{LipError, Result};
use crate::minmax::{best_response_raw, solve_unchecked, SolverConfig};
use crate::problem::{LinearOperator, ProblemInstance, VectorN};

const COLUMN_NORM_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<VectorN>,
    epsilons: Vec<f64>,
}

impl Dataset {
    pub fn new(samples: Vec<VectorN>, epsilons: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(LipError::InvalidInput("dataset has no samples".into()));
        }
        if samples.len() != epsilons.len() {
            return Err(LipError::InvalidInput(format!(
                "{} samples but {} epsilons",
                samples.len(),
                epsilons.len()
            )));
        }
        let n = samples[0].dim();
        if let Some(t) = samples.iter().position(|s| s.dim() != n) {
            return Err(LipError::DimensionMismatch {
                context: "sample dimension",
                expected: n,
                found: samples[t].dim(),
            });
        }
        if let Some(e) = epsilons.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(LipError::InvalidInput(format!("epsilon must be finite and >= 0, got {e}")));
        }
        Ok(Dataset { samples, epsilons })
    }

    /// Every sample with the same threshold.
    pub fn uniform(samples: Vec<VectorN>, epsilon: f64) -> Result<Self> {
        let eps = vec![epsilon; samples.len()];
        Dataset::new(samples, eps)
    }

    /// One sample per row; a final column headed `epsilon` holds the
    /// per-sample threshold. Without a header every column is a coordinate.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        let mut eps_column = false;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| LipError::Parse(format!("dataset row {}: {e}", i + 1)))?;
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            if i == 0 && rec.iter().any(|f| f.parse::<f64>().is_err()) {
                eps_column = rec.iter().next_back() == Some("epsilon");
                continue;
            }
            let vals = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| LipError::Parse(format!("dataset row {}: bad number {f:?}", i + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(vals);
        }
        let mut samples = Vec::with_capacity(rows.len());
        let mut epsilons = Vec::with_capacity(rows.len());
        for mut row in rows {
            let eps = if eps_column { row.pop().unwrap_or(0.0) } else { 0.0 };
            samples.push(VectorN::new(row)?);
            epsilons.push(eps);
        }
        Dataset::new(samples, epsilons)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].dim()
    }

    pub fn samples(&self) -> &[VectorN] {
        &self.samples
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }
}

/// An `n x K` matrix whose columns have Euclidean norm at most one.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    columns: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct DictionaryFile {
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    columns: Vec<Vec<f64>>,
}

impl Dictionary {
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        if columns.iter().any(|v| !v.is_finite()) {
            return Err(LipError::InvalidInput("dictionary entries must be finite".into()));
        }
        for (j, c) in columns.column_iter().enumerate() {
            if c.norm() > 1.0 + COLUMN_NORM_SLACK {
                return Err(LipError::InvalidInput(format!(
                    "dictionary column {j} has norm {} > 1",
                    c.norm()
                )));
            }
        }
        Ok(Dictionary { columns })
    }

    pub fn n(&self) -> usize {
        self.columns.nrows()
    }

    pub fn k(&self) -> usize {
        self.columns.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn operator(&self) -> Result<LinearOperator> {
        LinearOperator::new(self.columns.clone())
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let file = DictionaryFile {
            n: self.n(),
            k: self.k(),
            columns: self.columns.column_iter().map(|c| c.iter().copied().collect()).collect(),
        };
        serde_json::to_value(file).expect("plain data serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: DictionaryFile =
            serde_json::from_str(s).map_err(|e| LipError::Parse(format!("dictionary: {e}")))?;
        if file.columns.len() != file.k {
            return Err(LipError::DimensionMismatch {
                context: "dictionary columns",
                expected: file.k,
                found: file.columns.len(),
            });
        }
        if let Some(c) = file.columns.iter().find(|c| c.len() != file.n) {
            return Err(LipError::DimensionMismatch {
                context: "dictionary column length",
                expected: file.n,
                found: c.len(),
            });
        }
        let m = DMatrix::from_fn(file.n, file.k, |i, j| file.columns[j][i]);
        Dictionary::new(m)
    }
}

/// Euclidean projection onto the unit column balls: columns longer than one
/// are rescaled to unit length.
pub fn project_dictionary(m: &DMatrix<f64>) -> Result<Dictionary> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(LipError::InvalidInput("dictionary entries must be finite".into()));
    }
    let mut out = m.clone();
    for mut c in out.column_iter_mut() {
        let norm = c.norm();
        if norm > 1.0 {
            c /= norm;
        }
    }
    Ok(Dictionary { columns: out })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    pub cost: CostKind,
    pub outer_iters: usize,
    /// Dictionary steps per round.
    pub inner_iters: usize,
    pub seed: u64,
    /// Largest multiple of the last dictionary step tried as an
    /// extrapolation after each round; kept only if re-encoding lowers the
    /// average cost. Zero disables it.
    pub extrapolation: f64,
    pub solver: SolverConfig,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            cost: CostKind::L1,
            outer_iters: 30,
            inner_iters: 20,
            seed: 0,
            extrapolation: 3.0,
            solver: SolverConfig::default(),
        }
    }
}

impl LearnConfig {
    fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 {
            return Err(LipError::InvalidInput("outer_iters must be positive".into()));
        }
        if self.inner_iters == 0 {
            return Err(LipError::InvalidInput("inner_iters must be positive".into()));
        }
        if !(self.extrapolation.is_finite() && self.extrapolation >= 0.0) {
            return Err(LipError::InvalidInput(format!(
                "extrapolation must be >= 0, got {}",
                self.extrapolation
            )));
        }
        self.solver.validate()
    }
}

pub const DEFAULT_DELTA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFlag {
    Solved,
    /// `||x_t|| <= epsilon_t`; encoded by the zero vector.
    Zero,
    /// The solver ran out of iterations; the best iterate is kept.
    BudgetExceeded,
    /// The dual supremum is not attained for this sample.
    Degenerate,
    /// `delta = 0` and the sample's ball misses the image of the dictionary.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub atoms: Vec<VectorN>,
    pub duals: Vec<VectorN>,
    /// Per-sample optimal cost `C_t`.
    pub costs: Vec<f64>,
    pub flags: Vec<SampleFlag>,
}

impl Encoding {
    pub fn average_cost(&self) -> f64 {
        self.costs.iter().sum::<f64>() / self.costs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnState {
    pub dictionary: Dictionary,
    pub atoms: Vec<VectorN>,
    pub duals: Vec<VectorN>,
    pub cost_trace: Vec<f64>,
}

fn cost_model(kind: CostKind, k: usize) -> Result<Arc<dyn Cost>> {
    Ok(Arc::new(CostModel::new(kind, k)?))
}

fn check_data(d: &Dictionary, data: &Dataset, delta: f64) -> Result<()> {
    if d.n() != data.dim() {
        return Err(LipError::DimensionMismatch {
            context: "dictionary rows vs sample dimension",
            expected: data.dim(),
            found: d.n(),
        });
    }
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(LipError::InvalidInput(format!("delta must be >= 0, got {delta}")));
    }
    Ok(())
}

fn encode_one(
    x: &VectorN,
    eps: f64,
    phi: &LinearOperator,
    delta: f64,
    cost: &Arc<dyn Cost>,
    solver: &SolverConfig,
    warm: Option<&VectorN>,
) -> Result<(VectorN, VectorN, f64, SampleFlag)> {
    let (n, k) = (phi.output_dim(), phi.input_dim());
    let inst = ProblemInstance::new(x.clone(), phi.clone(), eps, delta, cost.clone())?;
    if inst.is_trivial() {
        return Ok((VectorN::zeros(k), VectorN::zeros(n), 0.0, SampleFlag::Zero));
    }
    match solve_unchecked(&inst, solver, warm.map(|w| w.as_dvector())) {
        Ok((out, converged)) => {
            let flag = if out.certificate.degenerate {
                SampleFlag::Degenerate
            } else if converged {
                SampleFlag::Solved
            } else {
                SampleFlag::BudgetExceeded
            };
            Ok((out.state.best_h, out.state.lambda, out.solution.cost_value, flag))
        }
        Err(LipError::Infeasible { .. }) => Ok((
            VectorN::zeros(k),
            VectorN::zeros(n),
            f64::INFINITY,
            SampleFlag::Infeasible,
        )),
        Err(LipError::BudgetExceeded { .. }) => Ok((
            VectorN::zeros(k),
            VectorN::zeros(n),
            f64::INFINITY,
            SampleFlag::BudgetExceeded,
        )),
        Err(e) => Err(e),
    }
}

fn encode_with(
    d: &Dictionary,
    data: &Dataset,
    delta: f64,
    cfg: &LearnConfig,
    warm: Option<&[VectorN]>,
) -> Result<Encoding> {
    check_data(d, data, delta)?;
    let phi = d.operator()?;
    let cost = cost_model(cfg.cost, d.k())?;
    let results = (0..data.len())
        .into_par_iter()
        .map(|t| {
            encode_one(
                &data.samples[t],
                data.epsilons[t],
                &phi,
                delta,
                &cost,
                &cfg.solver,
                warm.and_then(|w| w.get(t)),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut enc = Encoding {
        atoms: Vec::with_capacity(results.len()),
        duals: Vec::with_capacity(results.len()),
        costs: Vec::with_capacity(results.len()),
        flags: Vec::with_capacity(results.len()),
    };
    for (h, l, c, f) in results {
        enc.atoms.push(h);
        enc.duals.push(l);
        enc.costs.push(c);
        enc.flags.push(f);
    }
    Ok(enc)
}

/// Encodes every sample with the dictionary fixed. Output order follows the
/// sample order.
pub fn encode_all(d: &Dictionary, data: &Dataset, delta: f64, cfg: &LearnConfig) -> Result<Encoding> {
    cfg.validate()?;
    encode_with(d, data, delta, cfg, None)
}

/// Average of `eta_t(D)^p` over the samples, the encoding cost each fixed
/// atom `h_t` certifies under `D`. Equals the average optimal cost when the
/// atoms are optimal for `D`, and bounds it from above otherwise.
fn atom_objective(
    d: &Dictionary,
    data: &Dataset,
    atoms: &[VectorN],
    delta: f64,
    cost: &Arc<dyn Cost>,
) -> Result<f64> {
    let phi = d.operator()?;
    let p = cost.order();
    let mut total = 0.0;
    for ((x, &eps), h) in data.samples.iter().zip(&data.epsilons).zip(atoms) {
        let inst = ProblemInstance::new(x.clone(), phi.clone(), eps, delta, cost.clone())?;
        if inst.is_trivial() {
            continue;
        }
        let v = phi.apply_raw(h.as_dvector());
        match eta_for_image(&inst, &v).finite() {
            Some(eta) => total += eta.powf(p),
            None => return Ok(f64::INFINITY),
        }
    }
    Ok(total / data.len() as f64)
}

/// Dual iterates for the fixed atoms: each `lambda_t` maximizes the saddle
/// objective for `(D, h_t)`.
fn best_duals(
    d: &Dictionary,
    data: &Dataset,
    atoms: &[VectorN],
    delta: f64,
    cost: &Arc<dyn Cost>,
    solver: &SolverConfig,
) -> Result<Vec<DVector<f64>>> {
    let phi = d.operator()?;
    (0..data.len())
        .map(|t| {
            let inst = ProblemInstance::new(
                data.samples[t].clone(),
                phi.clone(),
                data.epsilons[t],
                delta,
                cost.clone(),
            )?;
            let v = phi.apply_raw(atoms[t].as_dvector());
            Ok(if inst.is_trivial() {
                DVector::zeros(d.n())
            } else {
                best_response_raw(&inst, &v, solver.r, solver.q).unwrap_or_else(|| DVector::zeros(d.n()))
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryUpdate {
    pub dictionary: Dictionary,
    /// `false` when the step budget ran out while steps were still being accepted.
    pub converged: bool,
}

/// Projected ascent-descent on the dictionary with the atoms fixed. The
/// dual variables are set to their exact maximizers, the dictionary moves
/// along `(1/T) sum_t lambda_t h_t^T` and is projected back; a step is kept
/// only when it lowers the averaged certified cost.
pub fn update_dictionary(
    state: &LearnState,
    data: &Dataset,
    delta: f64,
    cfg: &LearnConfig,
) -> Result<DictionaryUpdate> {
    cfg.validate()?;
    let d0 = &state.dictionary;
    check_data(d0, data, delta)?;
    if state.atoms.len() != data.len() {
        return Err(LipError::DimensionMismatch {
            context: "atoms per sample",
            expected: data.len(),
            found: state.atoms.len(),
        });
    }
    let cost = cost_model(cfg.cost, d0.k())?;
    let tmass = data.len() as f64;
    let mut d = d0.clone();
    let mut value = atom_objective(&d, data, &state.atoms, delta, &cost)?;
    let mut step = 1.0;
    let mut converged = false;
    for _ in 0..cfg.inner_iters {
        let lambdas = best_duals(&d, data, &state.atoms, delta, &cost, &cfg.solver)?;
        let mut g = DMatrix::zeros(d.n(), d.k());
        for (l, h) in lambdas.iter().zip(&state.atoms) {
            g += l * h.as_dvector().transpose();
        }
        g /= tmass;
        let gn = g.norm();
        if gn == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        while step * gn > 1e-12 {
            let trial = project_dictionary(&(d.matrix() + &g * step))?;
            let v = atom_objective(&trial, data, &state.atoms, delta, &cost)?;
            if v < value {
                d = trial;
                value = v;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            converged = true;
            break;
        }
    }
    Ok(DictionaryUpdate {
        dictionary: d,
        converged,
    })
}

/// Seeded standard-normal columns, projected onto the unit balls.
pub fn initial_dictionary(n: usize, k: usize, seed: u64) -> Result<Dictionary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
    project_dictionary(&m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnOutput {
    pub dictionary: Dictionary,
    /// Average encoding cost after each round, starting with the initial dictionary.
    pub cost_trace: Vec<f64>,
    /// Flags from the last encoding.
    pub flags: Vec<SampleFlag>,
    /// Rounds in which the dictionary step budget ran out.
    pub unconverged_updates: usize,
    pub rounds: usize,
}

/// Rounds whose relative change must stay below `FLAT_TOL` before stopping.
const MIN_EXTRAPOLATION: f64 = 0.25;

const FLAT_WINDOW: usize = 3;
const FLAT_TOL: f64 = 1e-5;

fn flattened(trace: &[f64]) -> bool {
    if trace.len() <= FLAT_WINDOW {
        return false;
    }
    trace[trace.len() - FLAT_WINDOW - 1..].windows(2).all(|w| {
        let scale = w[0].abs().max(1e-300);
        ((w[0] - w[1]) / scale).abs() < FLAT_TOL
    })
}

/// Alternates [`encode_all`] and [`update_dictionary`] from a seeded start,
/// with a safeguarded extrapolation step after each dictionary update.
pub fn learn(data: &Dataset, k: usize, delta: f64, cfg: &LearnConfig) -> Result<LearnOutput> {
    learn_from(data, initial_dictionary(data.dim(), k.max(1), cfg.seed)?, k, delta, cfg)
}

/// [`learn`] from a given starting dictionary.
pub fn learn_from(
    data: &Dataset,
    start: Dictionary,
    k: usize,
    delta: f64,
    cfg: &LearnConfig,
) -> Result<LearnOutput> {
    cfg.validate()?;
    if k == 0 {
        return Err(LipError::InvalidInput("K must be at least 1".into()));
    }
    if start.k() != k {
        return Err(LipError::DimensionMismatch {
            context: "starting dictionary columns",
            expected: k,
            found: start.k(),
        });
    }
    let context = |round: usize| move |e: LipError| LipError::InvalidInput(format!("round {round}: {e}"));
    let enc = encode_with(&start, data, delta, cfg, None).map_err(context(0))?;
    let mut state = LearnState {
        dictionary: start,
        cost_trace: vec![enc.average_cost()],
        atoms: enc.atoms,
        duals: enc.duals,
    };
    let mut flags = enc.flags;
    let mut unconverged = 0;
    let mut rounds = 0;
    for round in 1..=cfg.outer_iters {
        let upd = update_dictionary(&state, data, delta, cfg).map_err(context(round))?;
        if !upd.converged {
            unconverged += 1;
        }
        let mut enc = encode_with(&upd.dictionary, data, delta, cfg, Some(&state.duals)).map_err(context(round))?;
        let mut next = upd.dictionary;
        let step = next.matrix() - state.dictionary.matrix();
        let mut beta = cfg.extrapolation;
        while beta >= MIN_EXTRAPOLATION {
            let trial = project_dictionary(&(next.matrix() + &step * beta))?;
            let trial_enc = encode_with(&trial, data, delta, cfg, Some(&state.duals)).map_err(context(round))?;
            if trial_enc.average_cost() < enc.average_cost() {
                enc = trial_enc;
                next = trial;
                break;
            }
            beta *= 0.5;
        }
        state.dictionary = next;
        state.cost_trace.push(enc.average_cost());
        state.atoms = enc.atoms;
        state.duals = enc.duals;
        flags = enc.flags;
        rounds = round;
        if flattened(&state.cost_trace) {
            break;
        }
    }
    Ok(LearnOutput {
        dictionary: state.dictionary,
        cost_trace: state.cost_trace,
        flags,
        unconverged_updates: unconverged,
        rounds,
    })
}

/// Synthetic data `x_t = D0 f_t` with unit-norm generating columns and
/// `sparsity`-sparse codes with entries of magnitude in `[0.5, 1.5]`.
pub fn synthetic_data(
    n: usize,
    k: usize,
    t: usize,
    sparsity: usize,
    seed: u64,
) -> Result<(Dataset, Dictionary)> {
    if sparsity > k {
        return Err(LipError::InvalidInput(format!("sparsity {sparsity} exceeds K = {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
    for mut c in m.column_iter_mut() {
        let norm = c.norm();
        c /= norm;
    }
    let d0 = Dictionary::new(m)?;
    let mut samples = Vec::with_capacity(t);
    for _ in 0..t {
        let mut f = DVector::zeros(k);
        for i in rand::seq::index::sample(&mut rng, k, sparsity) {
            let mag: f64 = rand::Rng::random_range(&mut rng, 0.5..1.5);
            f[i] = if rand::Rng::random_bool(&mut rng, 0.5) { mag } else { -mag };
        }
        samples.push(VectorN::new((d0.matrix() * f).iter().copied().collect())?);
    }
    Ok((Dataset::uniform(samples, 0.0)?, d0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> VectorN {
        VectorN::new(c.to_vec()).unwrap()
    }

    #[test]
    fn projection_examples() {
        let m = DMatrix::from_column_slice(2, 3, &[3.0, 4.0, 0.1, 0.2, 0.0, 0.0]);
        let d = project_dictionary(&m).unwrap();
        assert!((d.matrix()[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((d.matrix()[(1, 0)] - 0.8).abs() < 1e-15);
        assert_eq!(d.matrix()[(0, 1)], 0.1);
        assert_eq!(d.matrix()[(1, 1)], 0.2);
        assert_eq!(d.matrix().column(2).norm(), 0.0);
        let bad = DMatrix::from_column_slice(1, 1, &[f64::NAN]);
        assert!(project_dictionary(&bad).is_err());
    }

    #[test]
    fn encode_identity() {
        let data = Dataset::uniform(vec![v(&[1.0, 0.0])], 0.0).unwrap();
        let d = Dictionary::new(DMatrix::identity(2, 2)).unwrap();
        let enc = encode_all(&d, &data, 0.0, &LearnConfig::default()).unwrap();
        assert!((enc.costs[0] - 1.0).abs() < 1e-6);
        assert!((enc.atoms[0].as_dvector() - v(&[1.0, 0.0]).as_dvector()).norm() < 1e-6);
    }

    #[test]
    fn small_samples_cost_nothing() {
        let data = Dataset::new(vec![v(&[0.1, 0.1]), v(&[1.0, 0.0])], vec![0.5, 0.0]).unwrap();
        let d = Dictionary::new(DMatrix::identity(2, 2)).unwrap();
        let enc = encode_all(&d, &data, 0.1, &LearnConfig::default()).unwrap();
        assert_eq!(enc.costs[0], 0.0);
        assert_eq!(enc.flags[0], SampleFlag::Zero);
        assert!(enc.atoms[0].iter().all(|&a| a == 0.0));
    }

    #[test]
    fn update_fixed_points() {
        let data = Dataset::uniform(vec![v(&[1.0, 0.0])], 0.0).unwrap();
        let d = Dictionary::new(DMatrix::identity(2, 2)).unwrap();
        let state = LearnState {
            dictionary: d.clone(),
            atoms: vec![v(&[1.0, 0.0])],
            duals: vec![v(&[1.0, 0.0])],
            cost_trace: vec![1.0],
        };
        let upd = update_dictionary(&state, &data, 0.1, &LearnConfig::default()).unwrap();
        let c0 = upd.dictionary.matrix().column(0).into_owned();
        assert!((c0 - DVector::from_vec(vec![1.0, 0.0])).norm() < 1e-9);

        let state = LearnState {
            atoms: vec![v(&[0.0, 0.0])],
            ..state
        };
        let upd = update_dictionary(&state, &data, 0.1, &LearnConfig::default()).unwrap();
        assert_eq!(upd.dictionary, d);
    }

    #[test]
    fn update_does_not_increase_cost() {
        let data = Dataset::uniform(vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])], 0.0).unwrap();
        let d = initial_dictionary(2, 2, 3).unwrap();
        let cfg = LearnConfig::default();
        let enc = encode_all(&d, &data, 0.1, &cfg).unwrap();
        let state = LearnState {
            dictionary: d,
            atoms: enc.atoms.clone(),
            duals: enc.duals.clone(),
            cost_trace: vec![enc.average_cost()],
        };
        let upd = update_dictionary(&state, &data, 0.1, &cfg).unwrap();
        let after = encode_all(&upd.dictionary, &data, 0.1, &cfg).unwrap();
        assert!(after.average_cost() <= enc.average_cost() + 1e-5);
    }

    #[test]
    fn rejects_empty_and_zero_k() {
        assert!(Dataset::uniform(Vec::new(), 0.0).is_err());
        let data = Dataset::uniform(vec![v(&[1.0, 0.0])], 0.0).unwrap();
        assert!(learn(&data, 0, 0.1, &LearnConfig::default()).is_err());
    }

    #[test]
    fn csv_with_and_without_epsilon() {
        let d = Dataset::from_csv("x1,x2,epsilon\n1,2,0.5\n3,4,0\n".as_bytes()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.epsilons(), &[0.5, 0.0]);
        let d = Dataset::from_csv("1,2,3\n4,5,6\n".as_bytes()).unwrap();
        assert_eq!(d.dim(), 3);
        assert_eq!(d.epsilons(), &[0.0, 0.0]);
        assert!(Dataset::from_csv("1,2\n3\n".as_bytes()).is_err());
    }

    #[test]
    fn dictionary_json_round_trip() {
        let d = initial_dictionary(3, 2, 1).unwrap();
        let s = d.to_json_value().to_string();
        assert_eq!(Dictionary::from_json_str(&s).unwrap(), d);
        assert!(Dictionary::from_json_str(r#"{"n":1,"K":1,"columns":[[2.0]]}"#).is_err());
    }
}
