//! RMSE metric, the rolling one-step evaluation protocol and the
//! multi-model comparison harness.
//!
//! ARIMA-family specs are refit for every test month on an expanding
//! window by default; SVR and hybrid specs train once on the initial
//! training slice and forecast each test month from its actual observed
//! lags. Exogenous test-month values are the realized ones, which leaks
//! information relative to true ex-ante forecasting but matches the
//! evaluation protocol being reproduced.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use thiserror::Error;

use crate::arima::{self, ArimaError, ArimaOrder, SeasonalOrder};
use crate::hybrid::{self, HybridConfig, HybridError};
use crate::series::{split_train_test, SeriesError, TimeSeries};
use crate::svr::{self, KernelSpec, SvrConfig, SvrError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("actual and predicted lengths differ: {actual} vs {predicted}")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("cannot compute a metric on empty vectors")]
    EmptyInput,
    #[error("empty model suite")]
    EmptySuite,
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Arima(#[from] ArimaError),
    #[error(transparent)]
    Svr(#[from] SvrError),
    #[error(transparent)]
    Hybrid(#[from] HybridError),
}

/// Root mean squared error over paired vectors.
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64, EvalError> {
    if actual.is_empty() || predicted.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if actual.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p) * (a - p))
        .sum();
    Ok((sum / actual.len() as f64).sqrt())
}

/// Result of one rolling evaluation: forecasts against actuals over the
/// test window plus bookkeeping for protocol checks.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model_label: String,
    pub actuals: Vec<f64>,
    pub predictions: Vec<f64>,
    pub rmse: f64,
    pub per_step_error: Vec<f64>,
    /// Number of model estimations performed while producing the report.
    pub fits_performed: usize,
    /// Hash of the train/test split this report was computed on; equal
    /// fingerprints mean byte-identical splits.
    pub split_fingerprint: u64,
}

impl EvalReport {
    fn build(
        model_label: String,
        actuals: Vec<f64>,
        predictions: Vec<f64>,
        fits_performed: usize,
        split_fingerprint: u64,
    ) -> Result<Self, EvalError> {
        let rmse = rmse(&actuals, &predictions)?;
        let per_step_error = actuals
            .iter()
            .zip(&predictions)
            .map(|(a, p)| p - a)
            .collect();
        Ok(Self {
            model_label,
            actuals,
            predictions,
            rmse,
            per_step_error,
            fits_performed,
            split_fingerprint,
        })
    }
}

fn split_fingerprint(series: &TimeSeries, n_test: usize) -> u64 {
    let mut hasher = DefaultHasher::new();
    series.start().to_string().hash(&mut hasher);
    n_test.hash(&mut hasher);
    for v in series.values() {
        v.to_bits().hash(&mut hasher);
    }
    hasher.finish()
}

/// Rolling one-step evaluation of an ARIMA-family model: every test month
/// is predicted from all data strictly before it (expanding window) with
/// the realized exogenous values for that month. `refit = false` reuses
/// the first fit for all steps.
pub fn rolling_eval_arima(
    series: &TimeSeries,
    order: ArimaOrder,
    seasonal: SeasonalOrder,
    exog: &[TimeSeries],
    n_test: usize,
    refit: bool,
) -> Result<EvalReport, EvalError> {
    rolling_eval_arima_labeled("arima", series, order, seasonal, exog, n_test, refit)
}

fn rolling_eval_arima_labeled(
    label: &str,
    series: &TimeSeries,
    order: ArimaOrder,
    seasonal: SeasonalOrder,
    exog: &[TimeSeries],
    n_test: usize,
    refit: bool,
) -> Result<EvalReport, EvalError> {
    let (_, test) = split_train_test(series, n_test)?;
    let split = series.len() - n_test;
    let fingerprint = split_fingerprint(series, n_test);

    let mut fits = 0usize;
    let mut model = None;
    let mut predictions = Vec::with_capacity(n_test);
    for step in 0..n_test {
        let history = series.prefix(split + step)?;
        let exog_history: Vec<TimeSeries> = exog
            .iter()
            .map(|e| e.prefix(split + step))
            .collect::<Result<_, _>>()?;
        if refit || model.is_none() {
            model = Some(arima::fit(&history, order, seasonal, &exog_history)?);
            fits += 1;
        }
        let exog_next: Vec<f64> = exog.iter().map(|e| e.values()[split + step]).collect();
        let pred = arima::forecast_one_step(
            model.as_ref().unwrap(),
            &history,
            &exog_history,
            &exog_next,
        )?;
        predictions.push(pred);
    }

    EvalReport::build(
        label.to_string(),
        test.values().to_vec(),
        predictions,
        fits,
        fingerprint,
    )
}

/// One entry of a comparison suite.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Arima {
        label: String,
        order: ArimaOrder,
        seasonal: SeasonalOrder,
        use_exog: bool,
        refit: bool,
    },
    Svr {
        label: String,
        config: SvrConfig,
        lags: usize,
        /// Refit for every test month instead of once on the training
        /// slice (the single-fit protocol is the default).
        refit: bool,
    },
    Hybrid {
        label: String,
        config: HybridConfig,
        /// As for `Svr`; defaults to a single fit.
        refit: bool,
    },
}

impl ModelSpec {
    pub fn label(&self) -> &str {
        match self {
            ModelSpec::Arima { label, .. } => label,
            ModelSpec::Svr { label, .. } => label,
            ModelSpec::Hybrid { label, .. } => label,
        }
    }
}

/// The five-model comparison suite: ARIMA(3,1,0), SARIMA and SARIMAX with
/// the (1,1,0,12) seasonal part, an RBF SVR with c = 10 / epsilon = 0.05
/// on 3 lags, and the hybrid model with yearly seasonality, 3 target
/// lags, 2 regressor lags and [4, 2] hidden layers at learning rate
/// 0.003. `seed` drives the hybrid initialization and shuffling.
pub fn default_suite(seed: u64) -> Vec<ModelSpec> {
    let order = ArimaOrder::new(3, 1, 0);
    let seasonal = SeasonalOrder::new(1, 1, 0, 12);
    vec![
        ModelSpec::Arima {
            label: "arima".into(),
            order,
            seasonal: SeasonalOrder::none(),
            use_exog: false,
            refit: true,
        },
        ModelSpec::Arima {
            label: "sarima".into(),
            order,
            seasonal,
            use_exog: false,
            refit: true,
        },
        ModelSpec::Arima {
            label: "sarimax".into(),
            order,
            seasonal,
            use_exog: true,
            refit: true,
        },
        ModelSpec::Svr {
            label: "svr".into(),
            config: SvrConfig::new(10.0, 0.05, KernelSpec::Gaussian { width: None }),
            lags: 3,
            refit: false,
        },
        ModelSpec::Hybrid {
            label: "hybrid".into(),
            config: HybridConfig {
                season_period: 12.0,
                season_terms: 3,
                ar_lags: 3,
                reg_lags: 2,
                hidden_layers: vec![4, 2],
                learning_rate: 0.003,
                seed,
                ..HybridConfig::default()
            },
            refit: false,
        },
    ]
}

/// Evaluate one spec on the shared split.
pub fn evaluate_spec(
    spec: &ModelSpec,
    series: &TimeSeries,
    exog: &[TimeSeries],
    n_test: usize,
) -> Result<EvalReport, EvalError> {
    let (train, test) = split_train_test(series, n_test)?;
    let fingerprint = split_fingerprint(series, n_test);
    match spec {
        ModelSpec::Arima {
            label,
            order,
            seasonal,
            use_exog,
            refit,
        } => {
            let exog_used: &[TimeSeries] = if *use_exog { exog } else { &[] };
            rolling_eval_arima_labeled(label, series, *order, *seasonal, exog_used, n_test, *refit)
        }
        ModelSpec::Svr { label, config, lags, refit } => {
            let (predictions, fits) = if *refit {
                let split = series.len() - n_test;
                let values = series.values();
                let mut predictions = Vec::with_capacity(n_test);
                for step in 0..n_test {
                    let window = series.prefix(split + step)?;
                    let frame = crate::series::make_supervised(&window, *lags)?;
                    let model = svr::fit(&frame, config)?;
                    let row = &values[split + step - lags..split + step];
                    predictions.push(svr::predict(&model, row)?);
                }
                (predictions, n_test)
            } else {
                (svr::forecast_rolling(config, series, *lags, n_test)?, 1)
            };
            EvalReport::build(
                label.clone(),
                test.values().to_vec(),
                predictions,
                fits,
                fingerprint,
            )
        }
        ModelSpec::Hybrid { label, config, refit } => {
            let split = series.len() - n_test;
            let (predictions, fits) = if *refit {
                let mut predictions = Vec::with_capacity(n_test);
                for step in 0..n_test {
                    let window = series.prefix(split + step)?;
                    let exog_window: Vec<TimeSeries> = exog
                        .iter()
                        .map(|e| e.prefix(split + step))
                        .collect::<Result<_, _>>()?;
                    let model = hybrid::fit(config, &window, &exog_window, &[])?;
                    // One-step forecast off the end of the window.
                    let step_series = series.prefix(split + step + 1)?;
                    let step_exog: Vec<TimeSeries> = exog
                        .iter()
                        .map(|e| e.prefix(split + step + 1))
                        .collect::<Result<_, _>>()?;
                    let pred = hybrid::forecast_rolling(&model, &step_series, &step_exog, &[], 1)?;
                    predictions.push(pred[0]);
                }
                (predictions, n_test)
            } else {
                let exog_train: Vec<TimeSeries> = exog
                    .iter()
                    .map(|e| e.prefix(train.len()))
                    .collect::<Result<_, _>>()?;
                let model = hybrid::fit(config, &train, &exog_train, &[])?;
                (
                    hybrid::forecast_rolling(&model, series, exog, &[], n_test)?,
                    1,
                )
            };
            EvalReport::build(
                label.clone(),
                test.values().to_vec(),
                predictions,
                fits,
                fingerprint,
            )
        }
    }
}

/// Run every spec of the suite on the identical train/test split and
/// return the reports sorted by RMSE ascending (ties keep suite order).
pub fn compare(
    series: &TimeSeries,
    exog: &[TimeSeries],
    n_test: usize,
    suite: &[ModelSpec],
) -> Result<Vec<EvalReport>, EvalError> {
    if suite.is_empty() {
        return Err(EvalError::EmptySuite);
    }
    let mut reports = suite
        .iter()
        .map(|spec| evaluate_spec(spec, series, exog, n_test))
        .collect::<Result<Vec<_>, _>>()?;
    reports.sort_by(|a, b| a.rmse.total_cmp(&b.rmse));
    Ok(reports)
}
