//! Seeded instance generators used by the benchmark command and the test suites.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::costs::CostKind;
use crate::error::Result;
use crate::oracle::GridSpec;
use crate::problem::{LinearOperator, ProblemInstance, VectorN};

/// An instance together with a known feasible representation and a grid
/// whose box contains every optimal representation.
#[derive(Debug, Clone)]
pub struct SuiteInstance {
    pub id: String,
    pub instance: ProblemInstance,
    pub reference_f: VectorN,
    pub grid: GridSpec,
}

const EPSILONS: [f64; 2] = [0.0, 0.3];
const DELTAS: [f64; 2] = [0.0, 0.5];

fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(rng))
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// A representation with cost drawn from `[lo, hi]`, admissible for `kind`.
fn random_code(rng: &mut ChaCha8Rng, k: usize, kind: CostKind, lo: f64, hi: f64) -> DVector<f64> {
    let mut f = gaussian_vector(rng, k);
    if kind == CostKind::L1Nonneg {
        f = f.abs();
    }
    let c = match kind {
        CostKind::L2 => f.norm(),
        _ => f.lp_norm(1),
    };
    let target = rng.random_range(lo..hi);
    if c == 0.0 {
        f[0] = target;
        return f;
    }
    f * (target / c)
}

/// Unit vector orthogonal to `image(phi)`, if the image is a proper subspace.
fn unit_normal(rng: &mut ChaCha8Rng, phi: &LinearOperator) -> Option<DVector<f64>> {
    for _ in 0..8 {
        let g = gaussian_vector(rng, phi.output_dim());
        let r = &g - phi.project_onto_image(&g);
        let rn = r.norm();
        if rn > 1e-3 * g.norm() {
            return Some(r / rn);
        }
    }
    None
}

fn step_for(k: usize, bound: f64) -> f64 {
    let base: f64 = match k {
        1 => 1e-4,
        2 => 1e-3,
        _ => 1e-2,
    };
    base.max(bound / crate::oracle::MAX_STEPS_PER_AXIS * 1.0001)
}

/// Upper bound on `C^(1/p)` witnessed by `f`, for a built-in order-1 cost.
fn witnessed_bound(inst: &ProblemInstance, f: &DVector<f64>) -> f64 {
    let c = inst.cost.evaluate(f).finite().unwrap_or(f64::INFINITY);
    let res = (inst.x.as_dvector() - inst.phi.apply_raw(f)).norm();
    if inst.delta > 0.0 {
        c.max((res - inst.epsilon) / inst.delta)
    } else {
        c
    }
}

/// One member of the oracle-equivalence suite. The seed picks every
/// discrete parameter, so any run of consecutive seeds covers all
/// combinations of cost kind, epsilon and delta.
pub fn oracle_instance(seed: u64, sizes: &[usize]) -> Result<SuiteInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + seed);
    let s = seed as usize;
    let k = sizes[s % sizes.len()];
    let kind = CostKind::ALL[(s / sizes.len()) % 3];
    let eps = EPSILONS[(s / (3 * sizes.len())) % 2];
    let delta = DELTAS[(s / (6 * sizes.len())) % 2];
    let n = rng.random_range(2..=4usize);
    let phi = LinearOperator::new(gaussian_matrix(&mut rng, n, k))?;
    let f0 = random_code(&mut rng, k, kind, 0.5, 1.5);
    let mut x = phi.apply_raw(&f0);
    if delta > 0.0 {
        x += gaussian_vector(&mut rng, n) * 0.3;
    } else if eps > 0.0 {
        if let Some(nu) = unit_normal(&mut rng, &phi) {
            x += nu * (eps * rng.random_range(0.1..0.5));
        }
    }
    if x.norm() <= eps {
        x *= 2.0 * eps / x.norm().max(1e-12);
    }
    let instance = ProblemInstance::with_kind(x.iter().copied().collect(), phi, eps, delta, kind)?;
    let bound_c = witnessed_bound(&instance, &f0);
    let bound = 1.05 * bound_c + 0.01;
    let grid = GridSpec::new(bound, step_for(k, bound))?;
    Ok(SuiteInstance {
        id: format!("s{seed:03}-k{k}-n{n}-{}-e{eps}-d{delta}", kind.name()),
        instance,
        reference_f: VectorN::new(f0.iter().copied().collect())?,
        grid,
    })
}

pub fn oracle_suite(seeds: impl IntoIterator<Item = u64>, sizes: &[usize]) -> Result<Vec<SuiteInstance>> {
    if sizes.is_empty() {
        return Ok(Vec::new());
    }
    seeds.into_iter().map(|s| oracle_instance(s, sizes)).collect()
}

/// `delta = 0` and `B[x, epsilon]` touching `image(phi)` at exactly one point:
/// `x = phi(f0) + epsilon nu` with `nu` a unit normal to the image. `f0` sits on
/// the returned grid, which has (almost) no feasibility slack.
pub fn tangent_instance(seed: u64) -> Result<SuiteInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a9e_0000 + seed);
    let k = 1 + (seed as usize % 2);
    let n = k + 1 + (seed as usize / 2) % 2;
    let kind = CostKind::ALL[seed as usize % 3];
    let eps = rng.random_range(0.2..0.8);
    let phi = loop {
        let m = gaussian_matrix(&mut rng, n, k);
        let cand = LinearOperator::new(m)?;
        if cand.min_nonzero_singular_value() > 0.3 && cand.image_basis().ncols() == k {
            break cand;
        }
    };
    let step = if k == 1 { 5e-5 } else { 1e-4 };
    let bound = 0.5;
    let grid = GridSpec::new(bound, step)?.with_slack(1e-12)?;
    // Snap the representation to grid nodes.
    let raw = random_code(&mut rng, k, kind, 0.2, 0.4);
    let f0 = raw.map(|v| {
        let i = ((v + bound) / step).round();
        -bound + i * step
    });
    let nu = unit_normal(&mut rng, &phi).expect("k < n leaves a normal direction");
    let x = phi.apply_raw(&f0) + nu * eps;
    let instance = ProblemInstance::with_kind(x.iter().copied().collect(), phi, eps, 0.0, kind)?;
    Ok(SuiteInstance {
        id: format!("tangent{seed:02}-k{k}-n{n}-{}", kind.name()),
        instance,
        reference_f: VectorN::new(f0.iter().copied().collect())?,
        grid,
    })
}

/// Basis-pursuit recovery instance: Gaussian `phi` (`n x k`), a `sparsity`-sparse
/// code with entries of unit magnitude, `x = phi(f)`, `epsilon = delta = 0`.
pub fn bpdn_instance(seed: u64, n: usize, k: usize, sparsity: usize) -> Result<(ProblemInstance, VectorN)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb9d0_0000 + seed);
    let phi = LinearOperator::new(gaussian_matrix(&mut rng, n, k) / (n as f64).sqrt())?;
    let mut f = DVector::zeros(k);
    let mut placed = 0;
    while placed < sparsity {
        let i = rng.random_range(0..k);
        if f[i] == 0.0 {
            f[i] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            placed += 1;
        }
    }
    let x = phi.apply_raw(&f);
    let inst = ProblemInstance::with_kind(x.iter().copied().collect(), phi, 0.0, 0.0, CostKind::L1)?;
    Ok((inst, VectorN::new(f.iter().copied().collect())?))
}
