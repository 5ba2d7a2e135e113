use nalgebra::{DMatrix, DVector};

use lipdual::costs::CostKind;
use lipdual::dictlearn::{
    encode_all, learn, learn_from, synthetic_data, update_dictionary, Dataset, Dictionary, LearnConfig, LearnState,
    SampleFlag,
};
use lipdual::minmax::SolverConfig;
use lipdual::problem::VectorN;

fn v(c: &[f64]) -> VectorN {
    VectorN::new(c.to_vec()).unwrap()
}

fn cfg(outer_iters: usize) -> LearnConfig {
    LearnConfig {
        outer_iters,
        ..LearnConfig::default()
    }
}

fn column_norms_ok(d: &Dictionary) -> bool {
    d.matrix().column_iter().all(|c| c.norm() <= 1.0 + 1e-12)
}

#[test]
fn one_sparse_codes_cost_their_magnitude() {
    for (seed, k) in [(1, 1), (2, 2), (3, 3), (4, 3)] {
        let (data, d0) = synthetic_data(4, k, 12, 1, seed).unwrap();
        let enc = encode_all(&d0, &data, 0.0, &cfg(1)).unwrap();
        // With K <= n the generating columns are independent, so the code
        // is the unique least-squares solution.
        let pinv = d0.matrix().clone().pseudo_inverse(1e-12).unwrap();
        for (t, x) in data.samples().iter().enumerate() {
            let code = &pinv * x.as_dvector();
            let expected = code.lp_norm(1);
            assert!(
                (enc.costs[t] - expected).abs() <= 1e-4,
                "seed {seed} sample {t}: {} vs {expected}",
                enc.costs[t]
            );
            assert_eq!(enc.flags[t], SampleFlag::Solved);
        }
    }
}

#[test]
fn update_on_two_axes_does_not_raise_cost() {
    let data = Dataset::uniform(vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])], 0.0).unwrap();
    let start = Dictionary::new(DMatrix::from_column_slice(2, 2, &[0.8, 0.6, -0.6, 0.8]) * 0.9).unwrap();
    let c = cfg(1);
    let delta = 0.1;
    let before = encode_all(&start, &data, delta, &c).unwrap();
    let state = LearnState {
        dictionary: start,
        atoms: before.atoms.clone(),
        duals: before.duals.clone(),
        cost_trace: vec![before.average_cost()],
    };
    let upd = update_dictionary(&state, &data, delta, &c).unwrap();
    let after = encode_all(&upd.dictionary, &data, delta, &c).unwrap();
    assert!(column_norms_ok(&upd.dictionary));
    assert!(
        after.average_cost() <= before.average_cost() + 1e-9,
        "{} > {}",
        after.average_cost(),
        before.average_cost()
    );
}

#[test]
fn learning_on_one_sparse_data_reaches_the_generator() {
    let (data, d0) = synthetic_data(4, 3, 20, 1, 7).unwrap();
    let delta = 0.1;
    let c = cfg(30);
    let reference = encode_all(&d0, &data, delta, &c).unwrap().average_cost();
    let out = learn(&data, 3, delta, &c).unwrap();
    let last = *out.cost_trace.last().unwrap();
    assert!(last <= reference + 1e-2, "final {last} vs generator {reference}");
    assert!(column_norms_ok(&out.dictionary));
}

#[test]
fn single_column_aligns_with_colinear_data() {
    let dir = DVector::from_vec(vec![0.6, 0.0, -0.8]);
    let samples = [1.0, -0.5, 2.0, 0.7, -1.3]
        .iter()
        .map(|&s| VectorN::from_dvector(&dir * s).unwrap())
        .collect();
    let data = Dataset::uniform(samples, 0.0).unwrap();
    for seed in 0..3 {
        let c = LearnConfig { seed, ..cfg(30) };
        let out = learn(&data, 1, 0.1, &c).unwrap();
        let col = out.dictionary.matrix().column(0).into_owned();
        let cos = col.dot(&dir).abs();
        assert!((cos - 1.0).abs() <= 1e-2, "seed {seed}: |<d, v>| = {cos}");
        assert!((col.norm() - 1.0).abs() <= 1e-2, "seed {seed}: norm {}", col.norm());
    }
}

#[test]
fn inflation_never_reports_infeasible() {
    // A rank-one dictionary misses most samples; without inflation they
    // would be infeasible.
    let d = Dictionary::new(DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.5, 0.0, 0.0])).unwrap();
    let (data, _) = synthetic_data(3, 4, 10, 2, 11).unwrap();
    let enc = encode_all(&d, &data, 0.2, &cfg(1)).unwrap();
    assert!(enc.flags.iter().all(|&f| f != SampleFlag::Infeasible));
    assert!(enc.costs.iter().all(|c| c.is_finite()));
    let strict = encode_all(&d, &data, 0.0, &cfg(1)).unwrap();
    assert!(strict.flags.contains(&SampleFlag::Infeasible));
}

#[test]
fn small_samples_contribute_nothing_to_the_trace() {
    let (base, _) = synthetic_data(3, 3, 6, 1, 5).unwrap();
    let mut samples = base.samples().to_vec();
    let mut eps = base.epsilons().to_vec();
    samples.push(v(&[0.1, 0.0, -0.1]));
    eps.push(0.5);
    samples.push(v(&[0.0, 0.0, 0.0]));
    eps.push(0.0);
    let with_small = Dataset::new(samples, eps).unwrap();
    let c = cfg(4);
    let out = learn(&with_small, 3, 0.1, &c).unwrap();
    let enc = encode_all(&out.dictionary, &with_small, 0.1, &c).unwrap();
    let t = with_small.len();
    assert_eq!(enc.costs[t - 2], 0.0);
    assert_eq!(enc.costs[t - 1], 0.0);
    assert_eq!(enc.flags[t - 2], SampleFlag::Zero);
    assert!(enc.atoms[t - 2].iter().all(|&a| a == 0.0));
    let sum: f64 = enc.costs[..t - 2].iter().sum();
    assert!((enc.average_cost() - sum / t as f64).abs() <= 1e-15);
}

#[test]
fn traces_are_monotone_and_columns_stay_bounded() {
    let solver = SolverConfig::default();
    for (seed, kind) in [(1, CostKind::L1), (2, CostKind::L1), (3, CostKind::L2), (4, CostKind::L1Nonneg)] {
        let (data, _) = synthetic_data(4, 5, 12, 2, seed).unwrap();
        let c = LearnConfig {
            cost: kind,
            seed,
            ..cfg(8)
        };
        let out = learn(&data, 5, 0.1, &c).unwrap();
        assert!(column_norms_ok(&out.dictionary));
        for w in out.cost_trace.windows(2) {
            assert!(w[1] <= w[0] + 10.0 * solver.tol, "{kind:?} seed {seed}: {:?}", out.cost_trace);
        }
        // Restarting from the result keeps the cost where it was.
        let again = learn_from(&data, out.dictionary.clone(), 5, 0.1, &LearnConfig { outer_iters: 1, ..c }).unwrap();
        assert!(again.cost_trace[0] <= out.cost_trace.last().unwrap() + 10.0 * solver.tol);
    }
}

#[test]
fn empty_data_and_zero_columns_are_rejected() {
    assert!(Dataset::uniform(Vec::new(), 0.0).is_err());
    let (data, _) = synthetic_data(3, 2, 4, 1, 0).unwrap();
    assert!(learn(&data, 0, 0.1, &cfg(2)).is_err());
}
