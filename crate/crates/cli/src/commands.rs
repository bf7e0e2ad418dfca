//! Command implementations. Every run writes its resolved configuration
//! next to its outputs; usage problems exit with code 1 and data
//! problems with code 2.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use tscast_core::arima::{self, ArimaOrder, SeasonalOrder};
use tscast_core::eval::{self, EvalReport, ModelSpec};
use tscast_core::hybrid::{self, HybridConfig};
use tscast_core::series::{split_train_test, TimeSeries};
use tscast_core::svr::{self, KernelSpec, SvrConfig};

use crate::config::RunConfig;
use crate::ingest::{self, DatasetBundle};
use crate::svg;
use crate::synth::{synth_dataset, SynthParams};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

macro_rules! data_error_from {
    ($($ty:ty),+) => {$(
        impl From<$ty> for CliError {
            fn from(err: $ty) -> Self {
                CliError::Data(err.to_string())
            }
        }
    )+};
}
data_error_from!(
    ingest::IngestError,
    crate::synth::SynthError,
    tscast_core::series::SeriesError,
    tscast_core::arima::ArimaError,
    tscast_core::svr::SvrError,
    tscast_core::hybrid::HybridError,
    tscast_core::eval::EvalError
);

fn io_data(path: &Path, err: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {err}", path.display()))
}

fn prepare_out_dir(config: &RunConfig) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&config.out_dir).map_err(|e| io_data(&config.out_dir, e))?;
    std::fs::write(config.out_dir.join("run_config.txt"), config.echo())
        .map_err(|e| io_data(&config.out_dir, e))?;
    Ok(config.out_dir.clone())
}

fn load_bundle(config: &RunConfig) -> Result<DatasetBundle, CliError> {
    let target_path = config
        .target
        .as_ref()
        .ok_or_else(|| CliError::Usage("--target CSV (or a `target` config entry) is required".into()))?;
    let target = ingest::ingest_csv(target_path)?;
    let regressors = config
        .regressors
        .iter()
        .map(|p| ingest::ingest_csv(p))
        .collect::<Result<Vec<_>, _>>()?;
    let provenance = std::iter::once(target_path)
        .chain(config.regressors.iter())
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ");
    Ok(DatasetBundle::new(target, regressors, provenance)?)
}

fn hybrid_config(config: &RunConfig) -> HybridConfig {
    HybridConfig {
        season_period: 12.0,
        season_terms: 3,
        ar_lags: 3,
        reg_lags: 2,
        hidden_layers: config.hybrid_hidden.clone(),
        learning_rate: config.hybrid_learning_rate,
        epochs: config.hybrid_epochs,
        seed: config.seed,
        ..HybridConfig::default()
    }
}

fn svr_config(config: &RunConfig) -> SvrConfig {
    SvrConfig::new(
        config.svr_c,
        config.svr_epsilon,
        KernelSpec::Gaussian { width: None },
    )
}

const ARIMA_ORDER: ArimaOrder = ArimaOrder { p: 3, d: 1, q: 0 };
const SEASONAL_ORDER: SeasonalOrder = SeasonalOrder { p: 1, d: 1, q: 0, period: 12 };

fn model_spec(config: &RunConfig, name: &str) -> Result<ModelSpec, CliError> {
    let spec = match name {
        "arima" => ModelSpec::Arima {
            label: "arima".into(),
            order: ARIMA_ORDER,
            seasonal: SeasonalOrder::none(),
            use_exog: false,
            refit: config.refit,
        },
        "sarima" => ModelSpec::Arima {
            label: "sarima".into(),
            order: ARIMA_ORDER,
            seasonal: SEASONAL_ORDER,
            use_exog: false,
            refit: config.refit,
        },
        "sarimax" => {
            if config.regressors.is_empty() {
                return Err(CliError::Usage(
                    "model sarimax requires at least one --regressor CSV".into(),
                ));
            }
            ModelSpec::Arima {
                label: "sarimax".into(),
                order: ARIMA_ORDER,
                seasonal: SEASONAL_ORDER,
                use_exog: true,
                refit: config.refit,
            }
        }
        "svr" => ModelSpec::Svr {
            label: "svr".into(),
            config: svr_config(config),
            lags: config.svr_lags,
            refit: false,
        },
        "hybrid" => ModelSpec::Hybrid {
            label: "hybrid".into(),
            config: hybrid_config(config),
            refit: false,
        },
        other => {
            return Err(CliError::Usage(format!(
                "unknown model {other:?}; expected arima, sarima, sarimax, svr or hybrid"
            )))
        }
    };
    Ok(spec)
}

fn required_model(config: &RunConfig) -> Result<&str, CliError> {
    config
        .model
        .as_deref()
        .ok_or_else(|| CliError::Usage("--model is required (arima|sarima|sarimax|svr|hybrid)".into()))
}

fn suite_from_config(config: &RunConfig) -> Vec<ModelSpec> {
    let mut suite = eval::default_suite(config.seed);
    for spec in &mut suite {
        match spec {
            ModelSpec::Svr { config: c, lags, .. } => {
                *c = svr_config(config);
                *lags = config.svr_lags;
            }
            ModelSpec::Hybrid { config: c, .. } => *c = hybrid_config(config),
            ModelSpec::Arima { refit, .. } => *refit = config.refit,
        }
    }
    suite
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content).map_err(|e| io_data(path, e))
}

fn forecast_csv(report: &EvalReport, test_stamps: &[String]) -> String {
    let mut out = String::from("month,actual,predicted\n");
    for ((month, actual), predicted) in test_stamps
        .iter()
        .zip(&report.actuals)
        .zip(&report.predictions)
    {
        let _ = writeln!(out, "{month},{actual},{predicted}");
    }
    out
}

fn write_report_files(
    dir: &Path,
    report: &EvalReport,
    test_stamps: &[String],
) -> Result<(), CliError> {
    let label = &report.model_label;
    write_file(
        &dir.join(format!("forecast_{label}.csv")),
        &forecast_csv(report, test_stamps),
    )?;
    let chart = svg::line_chart(
        &format!("{label}: actual vs predicted"),
        "visitors",
        test_stamps,
        &[
            ("actual".to_string(), report.actuals.clone()),
            ("predicted".to_string(), report.predictions.clone()),
        ],
    );
    write_file(&dir.join(format!("overlay_{label}.svg")), &chart)
}

fn test_stamps(series: &TimeSeries, n_test: usize) -> Vec<String> {
    let split = series.len() - n_test;
    (split..series.len())
        .map(|i| series.stamp_at(i).to_string())
        .collect()
}

pub fn cmd_synth(config: &RunConfig) -> Result<(), CliError> {
    let dir = prepare_out_dir(config)?;
    let params = SynthParams {
        noise_sd: config.noise_sd,
        ..SynthParams::default()
    };
    let bundle = synth_dataset(config.seed, config.months, &params)?;
    let target_path = dir.join("visitors.csv");
    ingest::write_csv(&bundle.target, &target_path)?;
    for regressor in &bundle.regressors {
        ingest::write_csv(regressor, &dir.join(format!("{}.csv", regressor.name())))?;
    }
    println!(
        "wrote {} months ({}) to {}",
        bundle.target.len(),
        bundle.provenance,
        dir.display()
    );
    Ok(())
}

pub fn cmd_fit(config: &RunConfig) -> Result<(), CliError> {
    let name = required_model(config)?.to_string();
    let spec = model_spec(config, &name)?;
    let bundle = load_bundle(config)?;
    let dir = prepare_out_dir(config)?;

    let mut summary = format!("model: {name}\ndata: {}\n", bundle.provenance);
    match &spec {
        ModelSpec::Arima {
            order,
            seasonal,
            use_exog,
            ..
        } => {
            let exog: &[TimeSeries] = if *use_exog { &bundle.regressors } else { &[] };
            let model = arima::fit(&bundle.target, *order, *seasonal, exog)?;
            let _ = writeln!(
                summary,
                "order: ({},{},{})  seasonal: ({},{},{},{})",
                order.p, order.d, order.q, seasonal.p, seasonal.d, seasonal.q, seasonal.period
            );
            let _ = writeln!(summary, "phi: {:?}", model.phi);
            let _ = writeln!(summary, "seasonal_phi: {:?}", model.seasonal_phi);
            if !model.exog_beta.is_empty() {
                let _ = writeln!(summary, "exog_beta: {:?}", model.exog_beta);
            }
            let _ = writeln!(summary, "intercept: {}", model.intercept);
            let _ = writeln!(summary, "sigma2: {:.4}", model.sigma2);
            let _ = writeln!(summary, "css: {:.4}", model.css);
            let _ = writeln!(summary, "converged: {}", model.converged);
            let _ = writeln!(summary, "ar_root_warning: {}", model.ar_root_warning);
        }
        ModelSpec::Svr { config: svr_cfg, lags, .. } => {
            let frame = tscast_core::series::make_supervised(&bundle.target, *lags)?;
            let model = svr::fit(&frame, svr_cfg)?;
            let _ = writeln!(summary, "kernel: {:?}", model.kernel);
            let _ = writeln!(summary, "c: {}  epsilon: {}  lags: {lags}", svr_cfg.c, svr_cfg.epsilon);
            let _ = writeln!(summary, "support_vectors: {}", model.n_support());
            let _ = writeln!(summary, "bias: {:.6}", model.bias);
            let _ = writeln!(summary, "converged: {}", model.converged);
        }
        ModelSpec::Hybrid { config: hy_cfg, .. } => {
            let model = hybrid::fit(hy_cfg, &bundle.target, &bundle.regressors, &[])?;
            let _ = writeln!(summary, "changepoints: {}", model.changepoint_times.len());
            let _ = writeln!(summary, "fourier_terms: {}", model.fourier_a.len());
            let _ = writeln!(summary, "ar_lags: {}  reg_lags: {}", model.ar_lags, model.reg_lags);
            let _ = writeln!(summary, "hidden_layers: {:?}", hy_cfg.hidden_layers);
            let _ = writeln!(summary, "epochs: {}", hy_cfg.epochs);
            if let Some(last) = model.train_loss.last() {
                let _ = writeln!(summary, "final_train_loss: {last:.6}");
            }
        }
    }

    write_file(&dir.join(format!("model_{name}.txt")), &summary)?;
    print!("{summary}");
    Ok(())
}

pub fn cmd_forecast(config: &RunConfig) -> Result<(), CliError> {
    let name = required_model(config)?;
    let (order, seasonal) = match name {
        "arima" => (ARIMA_ORDER, SeasonalOrder::none()),
        "sarima" => (ARIMA_ORDER, SEASONAL_ORDER),
        "sarimax" | "svr" | "hybrid" => {
            return Err(CliError::Usage(format!(
                "model {name:?} needs future regressor or lag values; multi-step forecasting \
                 supports arima and sarima (use `evaluate` or `compare` for the others)"
            )))
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown model {other:?}; expected arima or sarima"
            )))
        }
    };
    let bundle = load_bundle(config)?;
    let dir = prepare_out_dir(config)?;

    let model = arima::fit(&bundle.target, order, seasonal, &[])?;
    let path = arima::forecast_path(&model, &bundle.target, &[], config.horizon, &[])?;

    let mut out = String::from("month,predicted\n");
    let mut stdout = format!("{name} forecast for {} months:\n", config.horizon);
    for (step, value) in path.iter().enumerate() {
        let stamp = bundle.target.end().plus_months(step as i64 + 1);
        let _ = writeln!(out, "{stamp},{value}");
        let _ = writeln!(stdout, "  {stamp}  {value:.1}");
    }
    write_file(&dir.join(format!("forecast_{name}.csv")), &out)?;
    print!("{stdout}");
    Ok(())
}

pub fn cmd_evaluate(config: &RunConfig) -> Result<(), CliError> {
    let name = required_model(config)?.to_string();
    let spec = model_spec(config, &name)?;
    let bundle = load_bundle(config)?;
    // Surface split problems before fitting anything.
    split_train_test(&bundle.target, config.n_test)?;
    let dir = prepare_out_dir(config)?;

    let report = eval::evaluate_spec(&spec, &bundle.target, &bundle.regressors, config.n_test)?;
    let stamps = test_stamps(&bundle.target, config.n_test);
    write_report_files(&dir, &report, &stamps)?;
    println!(
        "{}: rmse {:.2} over {} months ({} fits)",
        report.model_label,
        report.rmse,
        config.n_test,
        report.fits_performed
    );
    Ok(())
}

pub fn cmd_compare(config: &RunConfig) -> Result<(), CliError> {
    let bundle = load_bundle(config)?;
    if bundle.regressors.is_empty() {
        return Err(CliError::Usage(
            "compare needs at least one --regressor CSV for the sarimax and hybrid rows".into(),
        ));
    }
    split_train_test(&bundle.target, config.n_test)?;
    let dir = prepare_out_dir(config)?;

    let suite = suite_from_config(config);
    let reports = eval::compare(&bundle.target, &bundle.regressors, config.n_test, &suite)?;
    let stamps = test_stamps(&bundle.target, config.n_test);

    let mut metrics = String::from("model,rmse\n");
    let mut stdout = format!(
        "comparison over the last {} months of {}:\n",
        config.n_test, bundle.provenance
    );
    for report in &reports {
        let _ = writeln!(metrics, "{},{:.2}", report.model_label, report.rmse);
        let _ = writeln!(stdout, "  {:<8} rmse {:>12.2}", report.model_label, report.rmse);
        write_report_files(&dir, report, &stamps)?;
    }
    write_file(&dir.join("metrics.csv"), &metrics)?;
    print!("{stdout}");
    Ok(())
}

pub fn cmd_components(config: &RunConfig) -> Result<(), CliError> {
    let bundle = load_bundle(config)?;
    let dir = prepare_out_dir(config)?;

    let hy_cfg = hybrid_config(config);
    let model = hybrid::fit(&hy_cfg, &bundle.target, &bundle.regressors, &[])?;
    let report = hybrid::components(&model, &bundle.target, &bundle.regressors, &[])?;

    let n = report.fitted.len();
    let offset = bundle.target.len() - n;
    let mut csv = String::from(
        "month,observed,trend,seasonality,autoregression,lagged_regressors,future_regressors,fitted\n",
    );
    for i in 0..n {
        let stamp = report.fitted.stamp_at(i);
        let observed = bundle.target.values()[offset + i];
        let season = report.seasonality.as_ref().map_or(0.0, |s| s.values()[i]);
        let ar = report.autoregression.as_ref().map_or(0.0, |s| s.values()[i]);
        let lagged: f64 = report.lagged.iter().map(|(_, s)| s.values()[i]).sum();
        let future = report.future.as_ref().map_or(0.0, |s| s.values()[i]);
        let _ = writeln!(
            csv,
            "{stamp},{observed},{},{season},{ar},{lagged},{future},{}",
            report.trend.values()[i],
            report.fitted.values()[i]
        );
    }
    write_file(&dir.join("components.csv"), &csv)?;

    let mut relevance = String::from("block,input,weight\n");
    for (i, w) in report.ar_relevance.iter().enumerate() {
        let _ = writeln!(relevance, "ar,lag_{},{w}", i + 1);
    }
    for (name, weights) in &report.lagged_relevance {
        for (i, w) in weights.iter().enumerate() {
            let _ = writeln!(relevance, "{name},lag_{},{w}", i + 1);
        }
    }
    write_file(&dir.join("relevance.csv"), &relevance)?;

    let stamps: Vec<String> = (0..n).map(|i| report.fitted.stamp_at(i).to_string()).collect();
    let mut lines = vec![
        (
            "observed".to_string(),
            bundle.target.values()[offset..].to_vec(),
        ),
        ("fitted".to_string(), report.fitted.values().to_vec()),
        ("trend".to_string(), report.trend.values().to_vec()),
    ];
    if let Some(season) = &report.seasonality {
        lines.push(("seasonality".to_string(), season.values().to_vec()));
    }
    let chart = svg::line_chart("hybrid model components", "visitors", &stamps, &lines);
    write_file(&dir.join("components.svg"), &chart)?;

    println!(
        "components written to {} ({} fitted months)",
        dir.display(),
        n
    );
    Ok(())
}
