//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured values (run with `--nocapture` to see them). Every
//! tolerance is pinned in the assertions.

use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use tscast_cli::ingest;
use tscast_cli::synth::{synth_dataset, SynthParams};
use tscast_core::arima::{self, ArimaOrder, SeasonalOrder};
use tscast_core::eval::{self};
use tscast_core::hybrid::{self, batch_loss, gradients, HybridConfig, TrainSample};
use tscast_core::reference;
use tscast_core::series::{difference, undifference, MonthStamp, TimeSeries};
use tscast_core::svr::{self, kernel_eval, solve_dual, KernelSpec};

fn ts(values: Vec<f64>) -> TimeSeries {
    TimeSeries::new(MonthStamp::new(2010, 1).unwrap(), values, "acc").unwrap()
}

/// Criterion 1: AR(3) coefficient recovery against closed-form OLS.
#[test]
fn criterion_01_arima_coefficient_recovery() {
    let start = Instant::now();
    let truth = [0.5, -0.2, 0.1];
    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut y: Vec<f64> = vec![0.0; 3];
    for _ in 0..n + 300 {
        let noise: f64 = StandardNormal.sample(&mut rng);
        let m = y.len();
        y.push(noise + truth[0] * y[m - 1] + truth[1] * y[m - 2] + truth[2] * y[m - 3]);
    }
    let data = y.split_off(y.len() - n);

    let model = arima::fit(
        &ts(data.clone()),
        ArimaOrder::new(3, 0, 0),
        SeasonalOrder::none(),
        &[],
    )
    .unwrap();
    for (i, phi_true) in truth.iter().enumerate() {
        assert!(
            (model.phi[i] - phi_true).abs() <= 0.08,
            "phi_{} = {} vs {}",
            i + 1,
            model.phi[i],
            phi_true
        );
    }

    // Oracle: OLS by normal equations on the lag-3 frame. The CSS
    // objective for a pure AR model is this least-squares problem, so
    // the two solutions must agree tightly.
    let rows: Vec<Vec<f64>> = (3..data.len())
        .map(|t| vec![1.0, data[t - 1], data[t - 2], data[t - 3]])
        .collect();
    let targets: Vec<f64> = data[3..].to_vec();
    let (beta, _) = reference::ols_normal_equations(&rows, &targets);
    for i in 0..3 {
        assert!(
            (model.phi[i] - beta[i + 1]).abs() < 1e-4,
            "css {} vs ols {}",
            model.phi[i],
            beta[i + 1]
        );
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "criterion 01 PASS: phi = {:?} (truth {truth:?}), ols gap < 1e-4, {elapsed:?}",
        model.phi
    );
}

/// Criterion 2: double differencing annihilates 12-periodic + trend data.
#[test]
fn criterion_02_seasonal_annihilation() {
    let start = Instant::now();
    let profile = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 26.0, 20.0, 5.0, 3.0, 2.0, 1.0];
    let data: Vec<f64> = (0..168)
        .map(|t| 500.0 + 7.25 * t as f64 + 100.0 * profile[t % 12])
        .collect();
    let series = ts(data);
    let model = arima::fit(
        &series,
        ArimaOrder::new(3, 1, 0),
        SeasonalOrder::new(1, 1, 0, 12),
        &[],
    )
    .unwrap();
    let resid = arima::residuals(&model, &series, &[]).unwrap();
    let max_abs = resid.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(max_abs < 1e-6, "max |residual| = {max_abs}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("criterion 02 PASS: max |residual| = {max_abs:.2e}, {elapsed:?}");
}

fn random_qp_set(seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(6..=20);
    let dim = rng.gen_range(1..=3);
    let inputs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let targets: Vec<f64> = inputs
        .iter()
        .map(|row| {
            let s: f64 = row.iter().enumerate().map(|(j, v)| v * 0.4 * (j as f64 + 1.0)).sum();
            s + rng.gen_range(-0.4..0.4)
        })
        .collect();
    (inputs, targets)
}

#[allow(clippy::needless_range_loop)] // symmetric matrix fill
fn gram(kernel: &KernelSpec, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let k = kernel_eval(kernel, &rows[i], &rows[j]).unwrap();
            g[i][j] = k;
            g[j][i] = k;
        }
    }
    g
}

/// Criterion 3: SMO dual solutions match the dense projected-gradient
/// solve on 50 seeded sets for each kernel kind.
#[test]
fn criterion_03_svr_oracle_equivalence() {
    let start = Instant::now();
    let kernels = [
        KernelSpec::Linear,
        KernelSpec::Polynomial { degree: 2 },
        KernelSpec::Gaussian { width: Some(1.5) },
    ];
    let (c, eps) = (10.0, 0.05);
    let mut worst_obj: f64 = 0.0;
    let mut worst_pred: f64 = 0.0;
    for kernel in kernels {
        for case in 0..50u64 {
            let (inputs, targets) = random_qp_set(1000 + case);
            let g = gram(&kernel, &inputs);
            let smo = solve_dual(&g, &targets, c, eps, 1e-6, 500_000);
            assert!(smo.converged, "{kernel:?} case {case} hit the update cap");
            let pg = reference::solve_svr_dual_pg(&g, &targets, c, eps, 1e-9, 400_000);

            let obj_smo = reference::svr_dual_objective(&g, &targets, eps, &smo.deltas);
            let obj_pg = reference::svr_dual_objective(&g, &targets, eps, &pg.deltas);
            let rel = (obj_smo - obj_pg).abs() / obj_pg.abs().max(1.0);
            worst_obj = worst_obj.max(rel);
            assert!(rel < 1e-6, "{kernel:?} case {case}: rel objective gap {rel}");

            for (i, row) in g.iter().enumerate() {
                let f_smo: f64 =
                    row.iter().zip(&smo.deltas).map(|(k, d)| k * d).sum::<f64>() + smo.bias;
                let f_pg: f64 =
                    row.iter().zip(&pg.deltas).map(|(k, d)| k * d).sum::<f64>() + pg.bias;
                worst_pred = worst_pred.max((f_smo - f_pg).abs());
                assert!(
                    (f_smo - f_pg).abs() < 1e-3,
                    "{kernel:?} case {case} sample {i}: {f_smo} vs {f_pg}"
                );
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "criterion 03 PASS: 150 solves, worst objective gap {worst_obj:.2e}, \
         worst prediction gap {worst_pred:.2e}, {elapsed:?}"
    );
}

/// Criterion 4: every fitted model satisfies the dual constraints and
/// the epsilon-tube KKT conditions within tol.
#[test]
fn criterion_04_svr_kkt_suite() {
    let kernels = [
        KernelSpec::Linear,
        KernelSpec::Polynomial { degree: 2 },
        KernelSpec::Gaussian { width: Some(1.5) },
    ];
    let (c, eps, tol) = (10.0, 0.05, 1e-6);
    let mut checked = 0;
    for kernel in kernels {
        for case in 0..50u64 {
            let (inputs, targets) = random_qp_set(2000 + case);
            let g = gram(&kernel, &inputs);
            let solution = solve_dual(&g, &targets, c, eps, tol, 500_000);
            let deltas = &solution.deltas;

            let sum: f64 = deltas.iter().sum();
            assert!(sum.abs() <= tol, "{kernel:?} case {case}: sum {sum}");
            assert!(deltas.iter().all(|d| d.abs() <= c + 1e-12));

            // Per-sample epsilon-KKT conditions with the solved bias.
            for (i, &delta) in deltas.iter().enumerate() {
                let f: f64 = (0..targets.len()).map(|j| deltas[j] * g[i][j]).sum::<f64>()
                    + solution.bias;
                let err = targets[i] - f;
                let at_upper = (delta - c).abs() < 1e-9;
                let at_lower = (delta + c).abs() < 1e-9;
                if delta.abs() < 1e-12 {
                    assert!(err.abs() <= eps + tol, "case {case} sample {i}: free but err {err}");
                } else if delta > 0.0 && !at_upper {
                    assert!((err - eps).abs() <= tol, "case {case} sample {i}: err {err}");
                } else if delta < 0.0 && !at_lower {
                    assert!((err + eps).abs() <= tol, "case {case} sample {i}: err {err}");
                } else if at_upper {
                    assert!(err >= eps - tol, "case {case} sample {i}: bound err {err}");
                } else {
                    assert!(err <= -(eps - tol), "case {case} sample {i}: bound err {err}");
                }
                checked += 1;
            }
        }
    }
    println!("criterion 04 PASS: KKT conditions verified on {checked} samples across 150 fits");
}

/// Criterion 5: analytic gradients of the full hybrid model match
/// central finite differences on 20 seeded snapshots.
#[test]
fn criterion_05_hybrid_gradient_check() {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        // Full model: trend + seasonality + deep AR [4,2] + lagged
        // regressor + future weight, with randomized parameters.
        let n = 48;
        let series = ts((0..n).map(|t| 500.0 + 10.0 * t as f64).collect());
        let reg = TimeSeries::new(
            series.start(),
            (0..n).map(|t| 40.0 + (t as f64 * 0.7).sin() * 9.0).collect(),
            "x",
        )
        .unwrap();
        let fut = TimeSeries::new(
            series.start(),
            (0..n).map(|t| f64::from(t % 12 == 6)).collect(),
            "event",
        )
        .unwrap();
        let config = HybridConfig {
            n_changepoints: 4,
            season_terms: 3,
            ar_lags: 3,
            reg_lags: 2,
            hidden_layers: vec![4, 2],
            epochs: 0,
            seed,
            ..HybridConfig::default()
        };
        let mut model = hybrid::fit(
            &config,
            &series,
            std::slice::from_ref(&reg),
            std::slice::from_ref(&fut),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
        let params: Vec<f64> = model
            .param_vector()
            .iter()
            .map(|_| rng.gen_range(-0.8..0.8))
            .collect();
        model.set_param_vector(&params);
        let batch: Vec<TrainSample> = (0..10)
            .map(|_| TrainSample {
                t: rng.gen_range(3.0..47.0f64).round(),
                target_norm: rng.gen_range(0.0..1.0),
                ar_inputs: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                reg_inputs: vec![(0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()],
                future_inputs: vec![rng.gen_range(0.0..1.0)],
            })
            .collect();

        let analytic = gradients(&model, &batch).to_vector();
        let theta = model.param_vector();
        let h = 1e-5;
        for i in 0..theta.len() {
            let mut plus = model.clone();
            let mut tp = theta.clone();
            tp[i] += h;
            plus.set_param_vector(&tp);
            let mut minus = model.clone();
            let mut tm = theta.clone();
            tm[i] -= h;
            minus.set_param_vector(&tm);
            let fd = (batch_loss(&plus, &batch) - batch_loss(&minus, &batch)) / (2.0 * h);
            // Scale floor guards against FD cancellation noise on
            // gradients that are genuinely zero.
            let scale = analytic[i].abs().max(fd.abs()).max(1e-4);
            let rel = (analytic[i] - fd).abs() / scale;
            worst = worst.max(rel);
            assert!(rel < 1e-4, "seed {seed} param {i}: {} vs {fd}", analytic[i]);
        }
    }
    println!("criterion 05 PASS: max relative gradient error {worst:.2e} over 20 snapshots");
}

/// Criterion 6: trend and seasonality recovery on synthetic data with a
/// known decomposition.
#[test]
fn criterion_06_hybrid_component_recovery() {
    let n = 168;
    let trend_truth: Vec<f64> = (0..n).map(|t| 2000.0 + 14.0 * t as f64).collect();
    let season_truth: Vec<f64> = (0..n)
        .map(|t| 900.0 * (t as f64 / 12.0 * std::f64::consts::TAU + 0.4).sin())
        .collect();
    let series = ts(trend_truth.iter().zip(&season_truth).map(|(a, b)| a + b).collect());

    let config = HybridConfig {
        season_terms: 3,
        ar_lags: 0,
        reg_lags: 0,
        hidden_layers: vec![],
        learning_rate: 0.003,
        epochs: 2000,
        batch_size: 200, // full batch: no minibatch noise at the optimum
        seed: 1,
        ..HybridConfig::default()
    };
    let model = hybrid::fit(&config, &series, &[], &[]).unwrap();
    let report = hybrid::components(&model, &series, &[], &[]).unwrap();

    let trend_corr = reference::pearson(report.trend.values(), &trend_truth);
    let season_corr =
        reference::pearson(report.seasonality.as_ref().unwrap().values(), &season_truth);
    assert!(trend_corr > 0.99, "trend correlation {trend_corr}");
    assert!(season_corr > 0.99, "seasonality correlation {season_corr}");
    println!(
        "criterion 06 PASS: trend correlation {trend_corr:.5}, seasonality correlation {season_corr:.5}"
    );
}

/// Criterion 7: `compare --n-test 12` performs exactly 12 ARIMA refits
/// per ARIMA-family model and yields 12 prediction rows per model.
#[test]
fn criterion_07_rolling_protocol_fidelity() {
    let bundle = synth_dataset(7, 168, &SynthParams::default()).unwrap();
    let suite = eval::default_suite(42);
    let reports = eval::compare(&bundle.target, &bundle.regressors, 12, &suite).unwrap();
    assert_eq!(reports.len(), 5);
    for report in &reports {
        assert_eq!(report.predictions.len(), 12, "{}", report.model_label);
        assert_eq!(report.actuals.len(), 12);
        if ["arima", "sarima", "sarimax"].contains(&report.model_label.as_str()) {
            assert_eq!(
                report.fits_performed, 12,
                "{} performed {} fits",
                report.model_label, report.fits_performed
            );
        }
        assert_eq!(report.split_fingerprint, reports[0].split_fingerprint);
    }

    // Through the binary: every forecast CSV carries 12 rows.
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("run");
    run_tscast(&["synth", "--seed", "7", "--months", "168", "--out", data.to_str().unwrap()]);
    run_tscast(&[
        "compare",
        "--target",
        data.join("visitors.csv").to_str().unwrap(),
        "--regressor",
        data.join("google_trend.csv").to_str().unwrap(),
        "--n-test",
        "12",
        "--out",
        out.to_str().unwrap(),
    ]);
    for model in ["arima", "sarima", "sarimax", "svr", "hybrid"] {
        let text = std::fs::read_to_string(out.join(format!("forecast_{model}.csv"))).unwrap();
        assert_eq!(text.lines().count() - 1, 12, "{model}");
    }
    println!("criterion 07 PASS: 12 refits per ARIMA-family model, 12 rows per forecast CSV");
}

fn run_tscast(args: &[&str]) -> std::process::Output {
    let output = Command::new(env!("CARGO_BIN_EXE_tscast"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "tscast {args:?} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

/// Criterion 8: directional ordering of the ARIMA family on the pinned
/// seed-7 synthetic bundle (seed-specific by design).
#[test]
fn criterion_08_qualitative_ordering() {
    let bundle = synth_dataset(7, 168, &SynthParams::default()).unwrap();
    let suite = eval::default_suite(42);
    let reports = eval::compare(&bundle.target, &bundle.regressors, 12, &suite).unwrap();
    let rmse_of = |label: &str| {
        reports
            .iter()
            .find(|r| r.model_label == label)
            .unwrap_or_else(|| panic!("missing {label}"))
            .rmse
    };
    let (arima, sarima, sarimax) = (rmse_of("arima"), rmse_of("sarima"), rmse_of("sarimax"));
    assert!(
        sarima < 0.85 * arima,
        "sarima {sarima} not below 0.85 * arima {arima}"
    );
    assert!(sarimax <= sarima, "sarimax {sarimax} above sarima {sarima}");
    println!(
        "criterion 08 PASS: arima {arima:.2} -> sarima {sarima:.2} -> sarimax {sarimax:.2} (seed 7)"
    );
}

/// Criterion 9: two identical `compare` invocations produce byte-equal
/// metrics and forecast files.
#[test]
fn criterion_09_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    run_tscast(&["synth", "--seed", "7", "--months", "168", "--out", data.to_str().unwrap()]);

    let mut blobs = Vec::new();
    for run in ["first", "second"] {
        let out = dir.path().join(run);
        run_tscast(&[
            "compare",
            "--target",
            data.join("visitors.csv").to_str().unwrap(),
            "--regressor",
            data.join("google_trend.csv").to_str().unwrap(),
            "--n-test",
            "12",
            "--out",
            out.to_str().unwrap(),
        ]);
        let mut blob = std::fs::read(out.join("metrics.csv")).unwrap();
        for model in ["arima", "sarima", "sarimax", "svr", "hybrid"] {
            blob.extend(std::fs::read(out.join(format!("forecast_{model}.csv"))).unwrap());
        }
        blobs.push(blob);
    }
    assert_eq!(blobs[0], blobs[1]);
    println!("criterion 09 PASS: metrics.csv and all forecast CSVs byte-identical across runs");
}

/// Criterion 10: exact difference/undifference and CSV round trips.
#[test]
fn criterion_10_round_trips() {
    // 1000 random difference/undifference cases on count-valued series
    // (integers stay exactly representable through diff/cumsum).
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    for case in 0..1000 {
        let d = rng.gen_range(0..=2usize);
        let seasonal_d = rng.gen_range(0..=2usize);
        let period = [2usize, 4, 12][rng.gen_range(0..3)];
        let len = d + seasonal_d * period + rng.gen_range(1..=40usize);
        let values: Vec<f64> = (0..len).map(|_| rng.gen_range(0..2_000_000_000i64) as f64).collect();
        let series = ts(values);
        let (diffed, pivots) = difference(&series, d, seasonal_d, period).unwrap();
        let rebuilt = undifference(&diffed, &pivots, d, seasonal_d, period).unwrap();
        assert_eq!(rebuilt.values(), series.values(), "case {case}");
        assert_eq!(rebuilt.start(), series.start(), "case {case}");
    }

    // 100 random CSV emit/ingest round trips, exact to the bit.
    let dir = tempfile::tempdir().unwrap();
    for case in 0..100 {
        let len = rng.gen_range(1..=60usize);
        let values: Vec<f64> = (0..len)
            .map(|_| {
                let magnitude = 10f64.powi(rng.gen_range(-6..8));
                rng.gen_range(0.0..1.0) * magnitude
            })
            .collect();
        let start = MonthStamp::new(rng.gen_range(1990..2030), rng.gen_range(1..=12)).unwrap();
        let series = TimeSeries::new(start, values, format!("s{case}")).unwrap();
        let path = dir.path().join(format!("s{case}.csv"));
        ingest::write_csv(&series, &path).unwrap();
        let back = ingest::ingest_csv(&path).unwrap();
        assert_eq!(back.values(), series.values(), "case {case}");
        assert_eq!(back.start(), series.start(), "case {case}");
    }
    println!("criterion 10 PASS: 1000 differencing and 100 CSV round trips exact");
}

/// The svr module's public fit path also satisfies the dual-feasibility
/// contract on the synthetic series (companion to criterion 4, through
/// the full normalization pipeline).
#[test]
fn criterion_04b_fit_level_feasibility() {
    let bundle = synth_dataset(7, 168, &SynthParams::default()).unwrap();
    let frame = tscast_core::series::make_supervised(&bundle.target, 3).unwrap();
    let config = svr::SvrConfig::new(10.0, 0.05, KernelSpec::Gaussian { width: None });
    let model = svr::fit(&frame, &config).unwrap();
    let sum: f64 = model.dual_deltas.iter().sum();
    assert!(sum.abs() <= config.tol, "sum {sum}");
    assert!(model
        .dual_deltas
        .iter()
        .all(|d| d.abs() > 0.0 && d.abs() <= config.c + 1e-12));
    println!(
        "criterion 04b PASS: fitted model keeps {} support vectors, |sum deltas| = {:.2e}",
        model.n_support(),
        sum.abs()
    );
}
