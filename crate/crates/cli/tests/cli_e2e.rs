//! End-to-end runs of the binary: exit codes, emitted files and
//! cross-file consistency.

use std::path::Path;
use std::process::{Command, Output};

fn tscast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tscast"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn synth_then_compare_emits_the_full_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("run");

    assert_exit(
        &tscast(&["synth", "--seed", "7", "--months", "168", "--out", data.to_str().unwrap()]),
        0,
    );
    assert!(data.join("visitors.csv").exists());
    assert!(data.join("google_trend.csv").exists());
    assert!(data.join("run_config.txt").exists());

    assert_exit(
        &tscast(&[
            "compare",
            "--target",
            data.join("visitors.csv").to_str().unwrap(),
            "--regressor",
            data.join("google_trend.csv").to_str().unwrap(),
            "--n-test",
            "12",
            "--out",
            out.to_str().unwrap(),
        ]),
        0,
    );

    let metrics = read(&out.join("metrics.csv"));
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("model,rmse"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5, "metrics:\n{metrics}");

    // Rows are sorted ascending and each rmse value reproduces, at its
    // two-decimal precision, the rmse recomputed from the forecast CSV.
    let mut last = f64::NEG_INFINITY;
    for row in rows {
        let (model, rmse_text) = row.split_once(',').unwrap();
        let reported: f64 = rmse_text.parse().unwrap();
        assert!(reported >= last);
        last = reported;

        let forecast = read(&out.join(format!("forecast_{model}.csv")));
        let mut sum = 0.0;
        let mut count = 0;
        for line in forecast.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 3);
            let actual: f64 = fields[1].parse().unwrap();
            let predicted: f64 = fields[2].parse().unwrap();
            sum += (actual - predicted) * (actual - predicted);
            count += 1;
        }
        assert_eq!(count, 12, "forecast rows for {model}");
        let recomputed = (sum / count as f64).sqrt();
        assert_eq!(format!("{recomputed:.2}"), rmse_text, "model {model}");
        assert!((recomputed - reported).abs() <= 0.005 + 1e-9);

        let overlay = read(&out.join(format!("overlay_{model}.svg")));
        assert_eq!(overlay.matches("<polyline").count(), 2, "model {model}");
        assert!(overlay.contains(">month</text>"));
    }
}

#[test]
fn compare_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_exit(
        &tscast(&["synth", "--seed", "3", "--months", "120", "--out", data.to_str().unwrap()]),
        0,
    );

    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        assert_exit(
            &tscast(&[
                "compare",
                "--target",
                data.join("visitors.csv").to_str().unwrap(),
                "--regressor",
                data.join("google_trend.csv").to_str().unwrap(),
                "--n-test",
                "12",
                "--seed",
                "11",
                "--out",
                out.to_str().unwrap(),
            ]),
            0,
        );
        let mut blob = read(&out.join("metrics.csv"));
        for model in ["arima", "sarima", "sarimax", "svr", "hybrid"] {
            blob.push_str(&read(&out.join(format!("forecast_{model}.csv"))));
        }
        outputs.push(blob);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn evaluate_reports_split_errors_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_exit(
        &tscast(&["synth", "--seed", "1", "--months", "48", "--out", data.to_str().unwrap()]),
        0,
    );
    let output = tscast(&[
        "evaluate",
        "--target",
        data.join("visitors.csv").to_str().unwrap(),
        "--model",
        "arima",
        "--n-test",
        "48",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_exit(&output, 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("48"), "stderr: {stderr}");
}

#[test]
fn usage_problems_exit_with_1() {
    // Unknown model name.
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_exit(
        &tscast(&["synth", "--seed", "1", "--months", "48", "--out", data.to_str().unwrap()]),
        0,
    );
    let output = tscast(&[
        "evaluate",
        "--target",
        data.join("visitors.csv").to_str().unwrap(),
        "--model",
        "quadratic9000",
    ]);
    assert_exit(&output, 1);

    // Unknown flag is a clap-level usage error.
    assert_exit(&tscast(&["compare", "--bogus-flag"]), 1);

    // Missing target.
    assert_exit(&tscast(&["compare", "--n-test", "12"]), 1);

    // Help is not an error.
    assert_exit(&tscast(&["--help"]), 0);
}

#[test]
fn data_problems_exit_with_2_and_name_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let gap_csv = dir.path().join("gappy.csv");
    std::fs::write(&gap_csv, "month,value\n2010-01,5\n2010-03,6\n").unwrap();
    let output = tscast(&[
        "fit",
        "--target",
        gap_csv.to_str().unwrap(),
        "--model",
        "arima",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_exit(&output, 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("2010-02"), "stderr: {stderr}");
    assert!(stderr.contains("gappy.csv"), "stderr: {stderr}");
}

#[test]
fn forecast_extends_beyond_the_series() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_exit(
        &tscast(&["synth", "--seed", "5", "--months", "96", "--out", data.to_str().unwrap()]),
        0,
    );
    let out = dir.path().join("out");
    assert_exit(
        &tscast(&[
            "forecast",
            "--target",
            data.join("visitors.csv").to_str().unwrap(),
            "--model",
            "sarima",
            "--horizon",
            "12",
            "--out",
            out.to_str().unwrap(),
        ]),
        0,
    );
    let forecast = read(&out.join("forecast_sarima.csv"));
    let rows: Vec<&str> = forecast.lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    // 96 months from 2010-01 end at 2017-12; the forecast starts next month.
    assert!(rows[0].starts_with("2018-01,"));
    assert!(rows[11].starts_with("2018-12,"));

    // Exogenous and lag-based models refuse multi-step extrapolation.
    let refused = tscast(&[
        "forecast",
        "--target",
        data.join("visitors.csv").to_str().unwrap(),
        "--model",
        "svr",
    ]);
    assert_exit(&refused, 1);
}

#[test]
fn components_emits_decomposition_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_exit(
        &tscast(&["synth", "--seed", "9", "--months", "120", "--out", data.to_str().unwrap()]),
        0,
    );
    let out = dir.path().join("out");
    assert_exit(
        &tscast(&[
            "components",
            "--target",
            data.join("visitors.csv").to_str().unwrap(),
            "--regressor",
            data.join("google_trend.csv").to_str().unwrap(),
            "--hybrid-epochs",
            "100",
            "--out",
            out.to_str().unwrap(),
        ]),
        0,
    );

    let csv = read(&out.join("components.csv"));
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "month,observed,trend,seasonality,autoregression,lagged_regressors,future_regressors,fitted"
    );
    // 120 months minus 3 lags of warm-up.
    assert_eq!(csv.lines().count() - 1, 117);

    // Component columns sum to the fitted column.
    for line in csv.lines().skip(1) {
        let f: Vec<f64> = line.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        let sum = f[1] + f[2] + f[3] + f[4] + f[5];
        assert!((sum - f[6]).abs() < 1e-6, "line {line}");
    }

    let relevance = read(&out.join("relevance.csv"));
    assert!(relevance.lines().count() >= 6); // 3 ar lags + 2 regressor lags + header
    assert!(relevance.contains("ar,lag_1,"));
    assert!(relevance.contains("google_trend,lag_2,"));

    let svg = read(&out.join("components.svg"));
    assert_eq!(svg.matches("<polyline").count(), 4);
}

#[test]
fn config_file_drives_a_run_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_exit(
        &tscast(&["synth", "--seed", "2", "--months", "60", "--out", data.to_str().unwrap()]),
        0,
    );
    let config_path = dir.path().join("run.conf");
    let out = dir.path().join("out");
    std::fs::write(
        &config_path,
        format!(
            "# evaluation settings\ntarget = {}\nmodel = arima\nn_test = 6\nout = {}\n",
            data.join("visitors.csv").display(),
            out.display()
        ),
    )
    .unwrap();

    assert_exit(
        &tscast(&["evaluate", "--config", config_path.to_str().unwrap(), "--n-test", "4"]),
        0,
    );
    let echoed = read(&out.join("run_config.txt"));
    assert!(echoed.contains("n_test = 4"), "flag override lost:\n{echoed}");
    assert!(echoed.contains("model = arima"));
    // The forecast file reflects the overridden split.
    let forecast = read(&out.join("forecast_arima.csv"));
    assert_eq!(forecast.lines().count() - 1, 4);
}
