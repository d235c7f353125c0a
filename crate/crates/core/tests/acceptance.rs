//! Acceptance suite: one test per acceptance criterion, each printing a
//! PASS line with the measured numbers (run with `--nocapture` to see them).
//!
//! Criteria 1-8 reproduce the reference simulation results at fixed seeds
//! and bounded runtimes; criterion 9 bundles the dataset-independent
//! property checks that form the minimum merge gate. The two real-data
//! checks run only when the public CSV files are present (they are not
//! distributed with the repository) and report SKIP otherwise.

use std::time::{Duration, Instant};

use balasso::data::StandardizeMode;
use balasso::dist::{
    cholesky, sample_gamma, sample_inverse_gaussian, sample_mvn_with_chol, InverseGaussianParams,
    RngHandle,
};
use balasso::harness::{
    generate_dataset, load_csv, run_experiment, CsvSchema, ExperimentOptions, Method, ScenarioId,
    ScenarioSpec,
};
use balasso::inference::{
    compute_pse, conditional_modes, estimate_pmp, pmp_from_modes, predict_bma_from_modes,
    ModeObjective, ModeProblem,
};
use balasso::linear::run_chain_linear;
use balasso::penalty::PenaltyMode;
use balasso::persistence::{load_chain, save_chain};
use balasso::solver::{GramLasso, SolverConfig};
use balasso::{ChainConfig, Dataset};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn correct(table: &balasso::harness::ReportTable, m: Method) -> usize {
    table.row(m).unwrap().correct.unwrap()
}

fn zeros(table: &balasso::harness::ReportTable, m: Method) -> f64 {
    table.row(m).unwrap().mean_zeros.unwrap()
}

fn pse(table: &balasso::harness::ReportTable, m: Method) -> f64 {
    table.row(m).unwrap().mean_pse.unwrap()
}

#[test]
fn criterion_1_adaptive_shrinkage_separation() {
    let start = Instant::now();
    let spec = ScenarioSpec {
        id: ScenarioId::Fig2,
        n: 50,
        sigma: 1.0,
        reps: 1,
        seed: 11,
    };
    let mut rng = RngHandle::new(spec.seed, 0).rng();
    let g = generate_dataset(&spec, 0, &mut rng).unwrap();
    let store = run_chain_linear(
        &g.data,
        &PenaltyMode::hierarchical_default(),
        &ChainConfig::reference(RngHandle::new(spec.seed, 1)),
    )
    .unwrap();
    let med = store.lambda_median().unwrap();
    let elapsed = start.elapsed();

    assert!(
        med[0] >= 0.2 && med[0] <= 0.8,
        "lambda_1 median {} outside [0.2, 0.8]",
        med[0]
    );
    assert!(med[1] >= 10.0, "lambda_2 median {} below 10", med[1]);
    assert!(
        med[1] / med[0] >= 10.0,
        "separation ratio {} below 10",
        med[1] / med[0]
    );
    assert!(
        elapsed < Duration::from_secs(30),
        "runtime {elapsed:?} exceeds 30 s"
    );
    println!(
        "ACCEPTANCE 1 PASS: lambda medians ({:.3}, {:.2}), ratio {:.1}, {elapsed:?}",
        med[0],
        med[1],
        med[1] / med[0]
    );
}

#[test]
fn criterion_2_table1_trend() {
    let start = Instant::now();
    let spec = ScenarioSpec {
        id: ScenarioId::Ex1,
        n: 120,
        sigma: 1.0,
        reps: 100,
        seed: 2026,
    };
    let table = run_experiment(
        &spec,
        &[Method::Freq, Method::Median, Method::Mean, Method::Lasso],
        &ExperimentOptions::for_scenario(spec.id),
        None,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let (freq, median, mean, lasso) = (
        correct(&table, Method::Freq),
        correct(&table, Method::Median),
        correct(&table, Method::Mean),
        correct(&table, Method::Lasso),
    );
    assert!(freq >= 75, "freq correct-fit {freq} below 75");
    assert!(median >= 75, "median correct-fit {median} below 75");
    assert!(mean >= 90, "mean correct-fit {mean} below 90");
    assert!(
        freq > lasso && median > lasso && mean > lasso,
        "a strategy failed to beat the plain lasso ({freq}, {median}, {mean} vs {lasso})"
    );
    // reference value for the frequency strategy is 87 of 100, ten counts
    // of slack either way
    assert!(
        (77..=97).contains(&freq),
        "freq correct-fit {freq} outside the reference band [77, 97]"
    );
    assert!(
        elapsed < Duration::from_secs(30 * 60),
        "runtime {elapsed:?} exceeds 30 min"
    );
    println!(
        "ACCEPTANCE 2 PASS: freq {freq}, median {median}, mean {mean}, lasso {lasso} (of 100), {elapsed:?}"
    );
}

#[test]
fn criterion_3_table2_consistency() {
    let start = Instant::now();
    let spec = ScenarioSpec {
        id: ScenarioId::Ex2,
        n: 300,
        sigma: 1.0,
        reps: 100,
        seed: 2026,
    };
    let table = run_experiment(
        &spec,
        &[
            Method::Freq,
            Method::Median,
            Method::Mean,
            Method::Eb,
            Method::Lasso,
        ],
        &ExperimentOptions::for_scenario(spec.id),
        None,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let (freq, median, mean, eb, lasso) = (
        correct(&table, Method::Freq),
        correct(&table, Method::Median),
        correct(&table, Method::Mean),
        correct(&table, Method::Eb),
        correct(&table, Method::Lasso),
    );
    // the three posterior-summary strategies must be exact; the
    // marginal-likelihood point estimate is reported alongside (its finite
    // optimum genuinely keeps the spurious variable on some datasets)
    assert_eq!(freq, 100, "freq correct-fit {freq} not 100");
    assert_eq!(median, 100, "median correct-fit {median} not 100");
    assert_eq!(mean, 100, "mean correct-fit {mean} not 100");
    assert!(lasso <= 30, "plain lasso correct-fit {lasso} above 30");
    assert!(
        elapsed < Duration::from_secs(20 * 60),
        "runtime {elapsed:?} exceeds 20 min"
    );
    println!(
        "ACCEPTANCE 3 PASS: freq {freq}, median {median}, mean {mean} (eb {eb}), lasso {lasso} (of 100), {elapsed:?}"
    );
}

#[test]
fn criterion_4_table3_large_p() {
    let start = Instant::now();
    let spec = ScenarioSpec {
        id: ScenarioId::Ex3,
        n: 100,
        sigma: 1.0,
        reps: 100,
        seed: 2026,
    };
    let table = run_experiment(
        &spec,
        &[Method::Mean],
        &ExperimentOptions::for_scenario(spec.id),
        None,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let mean = correct(&table, Method::Mean);
    assert!(mean >= 90, "mean correct-fit {mean} below 90");
    assert!(
        elapsed < Duration::from_secs(60 * 60),
        "runtime {elapsed:?} exceeds 60 min"
    );
    println!("ACCEPTANCE 4 PASS: mean {mean}/100 at p = 100, {elapsed:?}");
}

#[test]
fn criterion_4_smoke_variant() {
    let start = Instant::now();
    let spec = ScenarioSpec {
        id: ScenarioId::Ex3,
        n: 100,
        sigma: 1.0,
        reps: 25,
        seed: 2027,
    };
    let table = run_experiment(
        &spec,
        &[Method::Mean],
        &ExperimentOptions::for_scenario(spec.id),
        None,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let mean = correct(&table, Method::Mean);
    assert!(mean >= 22, "smoke correct-fit {mean} below 22/25");
    assert!(
        elapsed < Duration::from_secs(15 * 60),
        "runtime {elapsed:?} exceeds 15 min"
    );
    println!("ACCEPTANCE 4 (smoke) PASS: mean {mean}/25, {elapsed:?}");
}

#[test]
fn criterion_5_table4_small_p_prediction() {
    let start = Instant::now();
    let spec = ScenarioSpec {
        id: ScenarioId::Ex4Small,
        n: 200,
        sigma: 1.0,
        reps: 100,
        seed: 2026,
    };
    let table = run_experiment(
        &spec,
        &[Method::Bma, Method::Mean],
        &ExperimentOptions::for_scenario(spec.id),
        None,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let (bma, mean) = (pse(&table, Method::Bma), pse(&table, Method::Mean));
    assert!(
        (0.95..=1.15).contains(&bma),
        "model-averaged PSE {bma} outside [0.95, 1.15]"
    );
    assert!(
        bma <= mean,
        "model averaging ({bma}) did not beat the point plug-in ({mean})"
    );
    println!("ACCEPTANCE 5 PASS: BMA PSE {bma:.4} <= mean-plug-in PSE {mean:.4}, {elapsed:?}");
}

#[test]
fn criterion_6_table5_large_p_prediction() {
    let start = Instant::now();
    let spec = ScenarioSpec {
        id: ScenarioId::Ex4Large,
        n: 200,
        sigma: 3.0,
        reps: 100,
        seed: 2026,
    };
    let table = run_experiment(
        &spec,
        &[Method::Bma, Method::Blasso],
        &ExperimentOptions::for_scenario(spec.id),
        None,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let (bma, blasso) = (pse(&table, Method::Bma), pse(&table, Method::Blasso));
    assert!(
        (9.5..=11.0).contains(&bma),
        "model-averaged PSE {bma} outside [9.5, 11.0]"
    );
    assert!(
        bma < blasso,
        "adaptive averaging ({bma}) not strictly below the single-penalty baseline ({blasso})"
    );
    println!("ACCEPTANCE 6 PASS: BMA PSE {bma:.3} < single-penalty PSE {blasso:.3}, {elapsed:?}");
}

#[test]
fn criterion_7_table8_logistic() {
    let start = Instant::now();
    let spec = ScenarioSpec {
        id: ScenarioId::Ex7,
        n: 500,
        sigma: 1.0,
        reps: 100,
        seed: 2026,
    };
    let table = run_experiment(
        &spec,
        &[Method::Mean],
        &ExperimentOptions::for_scenario(spec.id),
        None,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let mean = correct(&table, Method::Mean);
    let z = zeros(&table, Method::Mean);
    assert!(mean >= 90, "correct-fit {mean} below 90");
    assert!(
        (4.8..=5.2).contains(&z),
        "mean zero-count {z} outside [4.8, 5.2]"
    );
    println!("ACCEPTANCE 7 PASS: logistic correct-fit {mean}/100, zero-count {z:.2}, {elapsed:?}");
}

#[test]
fn criterion_8_table9_group_selection() {
    let start = Instant::now();
    let spec = ScenarioSpec {
        id: ScenarioId::Ex8,
        n: 500,
        sigma: 1.0,
        reps: 100,
        seed: 2026,
    };
    let table = run_experiment(
        &spec,
        &[Method::Mean],
        &ExperimentOptions::for_scenario(spec.id),
        None,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let mean = correct(&table, Method::Mean);
    let z = zeros(&table, Method::Mean);
    assert!(mean >= 90, "group correct-fit {mean} below 90");
    assert!(
        (11.8..=12.2).contains(&z),
        "mean not-selected factors {z} outside [11.8, 12.2]"
    );
    println!("ACCEPTANCE 8 PASS: group correct-fit {mean}/100, not-selected {z:.2}, {elapsed:?}");
}

/// Not a numbered criterion: the composite-penalty scenario's reported cell,
/// under the documented selection rule (posterior-mean group penalties into
/// the plain group solver).
#[test]
fn composite_ordering_reported_cell() {
    let start = Instant::now();
    let spec = ScenarioSpec {
        id: ScenarioId::Ex9,
        n: 200,
        sigma: 1.0,
        reps: 100,
        seed: 2026,
    };
    let table = run_experiment(
        &spec,
        &[Method::Mean],
        &ExperimentOptions::for_scenario(spec.id),
        None,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let z = zeros(&table, Method::Mean);
    let mean = correct(&table, Method::Mean);
    assert!(
        (6.7..=7.0).contains(&z),
        "mean not-selected effects {z} outside [6.7, 7.0]"
    );
    println!(
        "SUPPLEMENTARY (composite ordering) PASS: not-selected {z:.2}, correct-fit {mean}/100, {elapsed:?}"
    );
}

#[test]
fn criterion_9_property_suites() {
    let start = Instant::now();
    let cfg = SolverConfig::default();

    // solver: KKT at convergence plus brute-force grid agreement (p = 2)
    {
        let mut rng = RngHandle::new(0xacce_97, 1).rng();
        let x = DMatrix::from_fn(25, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(25, |i, _| {
            0.8 * x[(i, 0)] - 0.4 * x[(i, 1)] + 0.1 * rng.sample::<f64, _>(StandardNormal)
        });
        let lam = DVector::from_vec(vec![4.0, 9.0]);
        let gram = GramLasso::from_design(&x, &y);
        let (beta, _) = gram.solve(&lam, None, &cfg).unwrap();
        assert!(gram.kkt_violation(&beta, &lam) < 10.0 * cfg.tolerance);
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let (lo, hi, step) = (-1.5f64, 1.5f64, 1e-3f64);
        let npts = ((hi - lo) / step).round() as usize + 1;
        for i in 0..npts {
            let b0 = lo + i as f64 * step;
            for k in 0..npts {
                let b1 = lo + k as f64 * step;
                let obj = gram.objective(&DVector::from_vec(vec![b0, b1]), &lam);
                if obj < best.0 {
                    best = (obj, b0, b1);
                }
            }
        }
        assert!((beta[0] - best.1).abs() < 2e-3 && (beta[1] - best.2).abs() < 2e-3);
    }

    // distributions: moment checks at reduced draw counts
    {
        let mut rng = RngHandle::new(0xacce_97, 2).rng();
        let n = 200_000;
        let ig = InverseGaussianParams::new(2.0, 4.0).unwrap();
        let mean_ig: f64 = (0..n)
            .map(|_| sample_inverse_gaussian(ig, &mut rng))
            .sum::<f64>()
            / n as f64;
        assert!((mean_ig - 2.0).abs() < 0.02, "IG mean {mean_ig}");
        let mean_g: f64 = (0..n)
            .map(|_| sample_gamma(3.0, 2.0, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean_g - 1.5).abs() < 0.02, "gamma mean {mean_g}");
        let precision = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let chol = cholesky(&precision, "acceptance").unwrap();
        let zero = DVector::zeros(2);
        let mut c01 = 0.0;
        for _ in 0..n {
            let v = sample_mvn_with_chol(&zero, &chol, &mut rng);
            c01 += v[0] * v[1];
        }
        c01 /= n as f64;
        assert!((c01 + 1.0 / 3.0).abs() < 0.02, "mvn covariance {c01}");
    }

    // frozen-parameter conjugate oracle: lambda2 | tau2 is gamma(r+1, delta + tau2/2)
    {
        let mut rng = RngHandle::new(0xacce_97, 3).rng();
        let (r, delta, tau2) = (0.1, 0.7, 0.8);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_gamma(r + 1.0, delta + tau2 / 2.0, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        let expect = (r + 1.0) / (delta + tau2 / 2.0);
        assert!(
            (mean - expect).abs() < 0.01,
            "conjugate mean {mean} vs {expect}"
        );
    }

    // inference: PMP normalization and the averaging identity on a real chain
    {
        let mut rng = RngHandle::new(0xacce_97, 4).rng();
        let x = DMatrix::from_fn(50, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(50, |i, _| {
            3.0 * x[(i, 0)] + rng.sample::<f64, _>(StandardNormal)
        });
        let data = Dataset::new(y, x)
            .unwrap()
            .standardize(StandardizeMode::Center)
            .unwrap();
        let store = run_chain_linear(
            &data,
            &PenaltyMode::hierarchical_default(),
            &ChainConfig::new(500, 1000, 1, RngHandle::new(0xacce_97, 5)),
        )
        .unwrap();
        let problem = ModeProblem::Linear { data: &data };
        let pmp = estimate_pmp(&store, &problem, ModeObjective::default(), &cfg).unwrap();
        let total: f64 = pmp.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12, "PMP total {total}");

        let modes = conditional_modes(&store, &problem, ModeObjective::default(), &cfg).unwrap();
        let x_new = DMatrix::from_fn(4, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let direct = predict_bma_from_modes(&modes, &x_new).unwrap();
        let grouped = pmp_from_modes(&modes);
        let mut weighted = DVector::zeros(4);
        for (pattern, prob) in &grouped {
            let members: Vec<usize> = (0..modes.patterns.len())
                .filter(|&i| &modes.patterns[i] == pattern)
                .collect();
            let mut mp = DVector::zeros(4);
            for &i in &members {
                mp += &x_new * &modes.betas[i];
            }
            weighted += mp / members.len() as f64 * *prob;
        }
        assert!(
            (direct - weighted).amax() < 1e-10,
            "averaging identity failed"
        );

        // determinism and round trip
        let again = run_chain_linear(
            &data,
            &PenaltyMode::hierarchical_default(),
            &ChainConfig::new(500, 1000, 1, RngHandle::new(0xacce_97, 5)),
        )
        .unwrap();
        assert_eq!(store.content_hash(), again.content_hash());
        let dir = tempfile::tempdir().unwrap();
        save_chain(&store, dir.path()).unwrap();
        let loaded = load_chain(dir.path()).unwrap();
        assert_eq!(store.content_hash(), loaded.content_hash());
    }

    println!(
        "ACCEPTANCE 9 PASS: solver KKT + grid, sampler moments, conjugate oracle, \
         PMP/averaging identity, determinism + round trip ({:?})",
        start.elapsed()
    );
}

fn find_real_dataset(name: &str) -> Option<std::path::PathBuf> {
    if let Ok(dir) = std::env::var("BALASSO_DATA_DIR") {
        let p = std::path::Path::new(&dir).join(name);
        if p.exists() {
            return Some(p);
        }
    }
    for base in ["data", "../data", "../../data"] {
        let p = std::path::Path::new(base).join(name);
        if p.exists() {
            return Some(p);
        }
    }
    None
}

/// Conditional real-data check: the body-composition dataset is not
/// distributed with the repository. When present, the loader must match the
/// published summaries and model-averaged prediction must land within 10% of
/// the reference error.
#[test]
fn real_data_body_fat_conditional() {
    let Some(path) = find_real_dataset("bodyfat.csv") else {
        println!(
            "REAL-DATA body fat: SKIP (place bodyfat.csv under ./data or set BALASSO_DATA_DIR)"
        );
        return;
    };
    let mut schema = CsvSchema::new("siri");
    schema.drop_rows = vec![42];
    let raw = load_csv(&path, &schema).unwrap();
    assert_eq!(raw.n(), 251);
    assert_eq!(raw.p(), 13);
    // abdomen circumference is the sixth predictor
    let abdomen_mean = raw.x.column(5).iter().sum::<f64>() / raw.n() as f64;
    assert!(
        (abdomen_mean - 92.51).abs() < 0.5,
        "abdomen mean {abdomen_mean}"
    );

    // first 150 observations train, the rest predict
    let train = Dataset::new(
        raw.y.rows(0, 150).into_owned(),
        raw.x.rows(0, 150).into_owned(),
    )
    .unwrap()
    .standardize(StandardizeMode::Center)
    .unwrap();
    let x_test = raw.x.rows(150, raw.n() - 150).into_owned();
    let y_test = raw.y.rows(150, raw.n() - 150).into_owned();
    let store = run_chain_linear(
        &train,
        &PenaltyMode::hierarchical_default(),
        &ChainConfig::reference(RngHandle::new(7, 0)),
    )
    .unwrap();
    let problem = ModeProblem::Linear { data: &train };
    let modes = conditional_modes(
        &store,
        &problem,
        ModeObjective::default(),
        &SolverConfig::default(),
    )
    .unwrap();
    let mut mean_beta = DVector::zeros(train.p());
    for b in &modes.betas {
        mean_beta += b;
    }
    mean_beta /= modes.betas.len() as f64;
    let preds = train.predict_raw(&x_test, &mean_beta).unwrap();
    let pse = compute_pse(&preds, &y_test).unwrap();
    assert!(
        (pse - 18.13).abs() <= 1.813,
        "body fat BMA PSE {pse} not within 10% of 18.13"
    );
    println!("REAL-DATA body fat PASS: BMA PSE {pse:.2}");
}

/// Conditional real-data check for the prostate dataset.
#[test]
fn real_data_prostate_conditional() {
    let Some(path) = find_real_dataset("prostate.csv") else {
        println!(
            "REAL-DATA prostate: SKIP (place prostate.csv under ./data or set BALASSO_DATA_DIR)"
        );
        return;
    };
    let schema = CsvSchema::new("lpsa");
    let raw = load_csv(&path, &schema).unwrap();
    assert_eq!(raw.n(), 97);
    let train = Dataset::new(
        raw.y.rows(0, 50).into_owned(),
        raw.x.rows(0, 50).into_owned(),
    )
    .unwrap()
    .standardize(StandardizeMode::Center)
    .unwrap();
    let x_test = raw.x.rows(50, raw.n() - 50).into_owned();
    let y_test = raw.y.rows(50, raw.n() - 50).into_owned();
    let store = run_chain_linear(
        &train,
        &PenaltyMode::hierarchical_default(),
        &ChainConfig::reference(RngHandle::new(7, 1)),
    )
    .unwrap();
    let problem = ModeProblem::Linear { data: &train };
    let modes = conditional_modes(
        &store,
        &problem,
        ModeObjective::default(),
        &SolverConfig::default(),
    )
    .unwrap();
    let mut mean_beta = DVector::zeros(train.p());
    for b in &modes.betas {
        mean_beta += b;
    }
    mean_beta /= modes.betas.len() as f64;
    let preds = train.predict_raw(&x_test, &mean_beta).unwrap();
    let pse = compute_pse(&preds, &y_test).unwrap();
    assert!(
        (pse - 1.86).abs() <= 0.186,
        "prostate BMA PSE {pse} not within 10% of 1.86"
    );
    println!("REAL-DATA prostate PASS: BMA PSE {pse:.3}");
}
