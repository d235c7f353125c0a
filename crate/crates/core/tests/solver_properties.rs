//! Property tests for the conditional-mode solvers: KKT conditions at
//! convergence and penalty monotonicity on randomly generated problems, and
//! the exact round trip of chain serialization through arbitrary float
//! payloads.

use balasso::chain::{ChainDraw, ChainKind, ChainMeta, ChainStore};
use balasso::dist::RngHandle;
use balasso::persistence::{load_chain, save_chain};
use balasso::solver::{GramLasso, SolverConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn problem_strategy() -> impl Strategy<Value = (usize, usize, u64, Vec<f64>)> {
    (2usize..6, 10usize..40, any::<u64>()).prop_flat_map(|(p, n, seed)| {
        (
            Just(p),
            Just(n),
            Just(seed),
            proptest::collection::vec(0.0f64..20.0, p),
        )
    })
}

fn random_problem(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = RngHandle::new(seed, 0).rng();
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * 2.0);
    (x, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kkt_residual_satisfied_at_convergence((p, n, seed, lambda) in problem_strategy()) {
        let (x, y) = random_problem(n, p, seed);
        let lam = DVector::from_vec(lambda);
        let cfg = SolverConfig::default();
        let gram = GramLasso::from_design(&x, &y);
        let (beta, _) = gram.solve(&lam, None, &cfg).unwrap();
        prop_assert!(gram.kkt_violation(&beta, &lam) < 10.0 * cfg.tolerance);
    }

    #[test]
    fn common_scaling_never_grows_weighted_norm((p, n, seed, lambda) in problem_strategy()) {
        // raising every penalty by a common factor cannot increase the
        // weighted l1 norm of the solution
        let (x, y) = random_problem(n, p, seed);
        let base = DVector::from_vec(lambda).add_scalar(0.05);
        let cfg = SolverConfig::default();
        let gram = GramLasso::from_design(&x, &y);
        let mut last = f64::INFINITY;
        for scale in [0.5f64, 1.0, 2.0, 4.0] {
            let lam = &base * scale;
            let (beta, _) = gram.solve(&lam, None, &cfg).unwrap();
            let weighted: f64 = (0..p).map(|j| base[j] * beta[j].abs()).sum();
            prop_assert!(weighted <= last + 1e-9);
            last = weighted;
        }
    }

    #[test]
    fn chain_round_trip_is_exact(
        values in proptest::collection::vec(
            prop_oneof![
                any::<f64>().prop_filter("finite", |v| v.is_finite()),
                (-1.0f64..1.0),
                Just(0.0f64),
                Just(1e-300f64),
                Just(1e300f64),
            ],
            8,
        ),
        kept in 1usize..4,
    ) {
        let meta = ChainMeta {
            kind: ChainKind::Linear,
            p: 2,
            n_tau: 2,
            n_lambda: 2,
            burn_in: 0,
            kept,
            thin: 1,
            seed: RngHandle::new(5, 5),
            mode: "fixed[1e0,1e0]".to_string(),
            delta: 0.0,
            dataset_fingerprint: "prop".to_string(),
            eb_lambda: None,
            group_sizes: None,
            ancestry: None,
        };
        let mut store = ChainStore::new(meta);
        for k in 0..kept {
            let off = k as f64;
            store.record(ChainDraw {
                beta: vec![values[0] + off, values[1]],
                sigma2: values[2].abs().max(1e-12),
                tau2: vec![values[3].abs().max(1e-12), values[4].abs().max(1e-12)],
                lambda2: vec![values[5].abs().max(1e-12), values[6].abs().max(1e-12)],
            });
        }
        let dir = tempfile::tempdir().unwrap();
        save_chain(&store, dir.path()).unwrap();
        let loaded = load_chain(dir.path()).unwrap();
        prop_assert_eq!(store.content_hash(), loaded.content_hash());
        prop_assert_eq!(store, loaded);
    }
}
