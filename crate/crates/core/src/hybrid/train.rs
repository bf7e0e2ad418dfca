//! Seeded minibatch training with per-parameter adaptive moments and
//! decoupled weight decay, plus rolling one-step forecasting and the
//! component/relevance decomposition of a fitted model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::series::{Affine, TimeSeries};

use super::net::Mlp;
use super::{
    gradients_with_loss, FutureBlock, HybridConfig, HybridError, HybridGradients, HybridModel,
    RegressorBlock, TrainSample,
};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn check_aligned(series: &TimeSeries, regressors: &[TimeSeries]) -> Result<(), HybridError> {
    for r in regressors {
        if !r.same_span(series) {
            return Err(HybridError::MisalignedRegressor {
                name: r.name().to_string(),
            });
        }
    }
    Ok(())
}

fn max_lag(config_ar: usize, reg_lags: usize, n_regressors: usize) -> usize {
    config_ar.max(if n_regressors > 0 { reg_lags } else { 0 })
}

/// Build normalized samples for indexes `from..n`; lag windows read the
/// raw sequences and apply the model's scalers.
fn build_samples(
    model: &HybridModel,
    target: &[f64],
    regressors: &[&[f64]],
    futures: &[&[f64]],
    from: usize,
    to: usize,
) -> Vec<TrainSample> {
    (from..to)
        .map(|t| {
            let ar_inputs = if model.ar_net.is_some() {
                target[t - model.ar_lags..t]
                    .iter()
                    .map(|v| model.target_norm.apply(*v))
                    .collect()
            } else {
                vec![]
            };
            let reg_inputs = model
                .lagged_regressors
                .iter()
                .zip(regressors)
                .map(|(block, values)| {
                    values[t - model.reg_lags..t]
                        .iter()
                        .map(|v| block.norm.apply(*v))
                        .collect()
                })
                .collect();
            let future_inputs = model
                .future_regressors
                .iter()
                .zip(futures)
                .map(|(block, values)| block.norm.apply(values[t]))
                .collect();
            TrainSample {
                t: t as f64,
                target_norm: model.target_norm.apply(target[t]),
                ar_inputs,
                reg_inputs,
                future_inputs,
            }
        })
        .collect()
}

/// Fit the additive model on `series`. Same seed, same data, same
/// configuration produce bit-identical parameters.
pub fn fit(
    config: &HybridConfig,
    series: &TimeSeries,
    lagged_regressors: &[TimeSeries],
    future_regressors: &[TimeSeries],
) -> Result<HybridModel, HybridError> {
    config.validate()?;
    check_aligned(series, lagged_regressors)?;
    check_aligned(series, future_regressors)?;
    if !lagged_regressors.is_empty() && config.reg_lags == 0 {
        return Err(HybridError::InvalidConfig(
            "reg_lags must be positive when lagged regressors are provided".into(),
        ));
    }

    let n = series.len();
    let lag = max_lag(config.ar_lags, config.reg_lags, lagged_regressors.len());
    if n <= lag + 1 {
        return Err(HybridError::SeriesTooShort {
            needed: lag + 1,
            actual: n,
        });
    }

    let target_norm = Affine::min_max(series.values());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let span = (n - 1) as f64;
    let changepoint_times: Vec<f64> = (0..config.n_changepoints)
        .map(|j| config.changepoint_range * span * (j + 1) as f64 / config.n_changepoints as f64)
        .collect();

    let net_for = |lags: usize, rng: &mut ChaCha8Rng| {
        let mut sizes = vec![lags];
        sizes.extend_from_slice(&config.hidden_layers);
        sizes.push(1);
        if config.hidden_layers.is_empty() {
            Mlp::zeroed(&sizes)
        } else {
            Mlp::glorot(&sizes, rng)
        }
    };
    let ar_net = (config.ar_lags > 0).then(|| net_for(config.ar_lags, &mut rng));
    let blocks: Vec<RegressorBlock> = lagged_regressors
        .iter()
        .map(|r| RegressorBlock {
            name: r.name().to_string(),
            net: net_for(config.reg_lags, &mut rng),
            norm: Affine::min_max(r.values()),
        })
        .collect();
    let future_blocks: Vec<FutureBlock> = future_regressors
        .iter()
        .map(|r| FutureBlock {
            name: r.name().to_string(),
            weight: 0.0,
            norm: Affine::min_max(r.values()),
        })
        .collect();

    let norm_mean = series
        .values()
        .iter()
        .map(|v| target_norm.apply(*v))
        .sum::<f64>()
        / n as f64;

    let mut model = HybridModel {
        base_rate: 0.0,
        offset: norm_mean, // flat mean of the normalized target
        deltas: vec![0.0; config.n_changepoints],
        changepoint_times,
        season_period: config.season_period,
        fourier_a: vec![0.0; config.season_terms],
        fourier_b: vec![0.0; config.season_terms],
        ar_net,
        ar_lags: config.ar_lags,
        reg_lags: if lagged_regressors.is_empty() { 0 } else { config.reg_lags },
        lagged_regressors: blocks,
        future_regressors: future_blocks,
        target_norm,
        huber_delta: config.huber_delta,
        train_loss: Vec::with_capacity(config.epochs),
    };

    let reg_values: Vec<&[f64]> = lagged_regressors.iter().map(|r| r.values()).collect();
    let fut_values: Vec<&[f64]> = future_regressors.iter().map(|r| r.values()).collect();
    let samples = build_samples(&model, series.values(), &reg_values, &fut_values, lag, n);

    let mut theta = model.param_vector();
    let decay = model.decay_mask();
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for _ in 0..config.epochs {
        // Fisher-Yates with the model RNG: the shuffle stream is part of
        // the determinism contract.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<TrainSample> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let (mut grads, loss) = gradients_with_loss(&model, &batch);
            epoch_loss += loss * batch.len() as f64;
            apply_sparsity(&model, &mut grads, config.ar_sparsity);
            let g = grads.to_vector();

            step += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
            let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
            for i in 0..theta.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
                if decay[i] {
                    theta[i] -= config.learning_rate * config.weight_decay * theta[i];
                }
            }
            model.set_param_vector(&theta);
        }
        model.train_loss.push(epoch_loss / samples.len() as f64);
    }

    Ok(model)
}

/// L1 subgradient on the first-layer AR weights ("sparse" mode); the
/// subgradient at zero is zero.
fn apply_sparsity(model: &HybridModel, grads: &mut HybridGradients, weight: f64) {
    if weight <= 0.0 {
        return;
    }
    if let (Some(net), Some(g)) = (&model.ar_net, grads.ar_net.as_mut()) {
        for (wrow, grow) in net.layers[0].weights.iter().zip(&mut g.weights[0]) {
            for (w, slot) in wrow.iter().zip(grow) {
                *slot += weight * w.signum();
            }
        }
    }
}

/// One-step predictions over the last `n_test` months of `series`, using
/// actual observed lags for every step; the model is not refit.
pub fn forecast_rolling(
    model: &HybridModel,
    series: &TimeSeries,
    lagged_regressors: &[TimeSeries],
    future_regressors: &[TimeSeries],
    n_test: usize,
) -> Result<Vec<f64>, HybridError> {
    check_aligned(series, lagged_regressors)?;
    check_aligned(series, future_regressors)?;
    if lagged_regressors.len() != model.lagged_regressors.len() {
        return Err(HybridError::MissingComponentInput { component: "lagged regressors" });
    }
    if future_regressors.len() != model.future_regressors.len() {
        return Err(HybridError::MissingComponentInput { component: "future regressors" });
    }
    let n = series.len();
    let lag = max_lag(model.ar_lags, model.reg_lags, model.lagged_regressors.len());
    if n_test > n || n - n_test < lag {
        return Err(HybridError::SeriesTooShort {
            needed: lag + n_test,
            actual: n,
        });
    }

    let split = n - n_test;
    let values = series.values();
    (split..n)
        .map(|t| {
            let ar_raw: Vec<f64> = if model.ar_net.is_some() {
                values[t - model.ar_lags..t].to_vec()
            } else {
                vec![]
            };
            let reg_raw: Vec<Vec<f64>> = lagged_regressors
                .iter()
                .map(|r| r.values()[t - model.reg_lags..t].to_vec())
                .collect();
            let fut_raw: Vec<f64> = future_regressors.iter().map(|r| r.values()[t]).collect();
            model.model_forward(t as f64, &ar_raw, &reg_raw, &fut_raw)
        })
        .collect()
}

/// Fitted-range decomposition: per-component series on the original
/// scale (the trend carries the target offset so the rows sum exactly to
/// the fitted values) plus per-lag relevance for the AR and regressor
/// blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentsReport {
    pub trend: TimeSeries,
    pub seasonality: Option<TimeSeries>,
    pub autoregression: Option<TimeSeries>,
    pub lagged: Vec<(String, TimeSeries)>,
    pub future: Option<TimeSeries>,
    pub fitted: TimeSeries,
    /// Entry `i` describes lag distance `i + 1`. Linear AR mode reports
    /// the weights themselves; deep mode the mean absolute gradient of
    /// the output with respect to each lag input.
    pub ar_relevance: Vec<f64>,
    pub lagged_relevance: Vec<(String, Vec<f64>)>,
}

pub fn components(
    model: &HybridModel,
    series: &TimeSeries,
    lagged_regressors: &[TimeSeries],
    future_regressors: &[TimeSeries],
) -> Result<ComponentsReport, HybridError> {
    check_aligned(series, lagged_regressors)?;
    check_aligned(series, future_regressors)?;
    if lagged_regressors.len() != model.lagged_regressors.len() {
        return Err(HybridError::MissingComponentInput { component: "lagged regressors" });
    }
    if future_regressors.len() != model.future_regressors.len() {
        return Err(HybridError::MissingComponentInput { component: "future regressors" });
    }
    let n = series.len();
    let lag = max_lag(model.ar_lags, model.reg_lags, model.lagged_regressors.len());
    if n <= lag {
        return Err(HybridError::SeriesTooShort { needed: lag, actual: n });
    }

    let reg_values: Vec<&[f64]> = lagged_regressors.iter().map(|r| r.values()).collect();
    let fut_values: Vec<&[f64]> = future_regressors.iter().map(|r| r.values()).collect();
    let samples = build_samples(model, series.values(), &reg_values, &fut_values, lag, n);
    let start = series.stamp_at(lag);
    let scale = model.target_norm.scale;
    let level = model.target_norm.offset;

    let mut trend = Vec::with_capacity(samples.len());
    let mut season = Vec::with_capacity(samples.len());
    let mut ar = Vec::with_capacity(samples.len());
    let mut lagged: Vec<Vec<f64>> = vec![Vec::with_capacity(samples.len()); model.lagged_regressors.len()];
    let mut future = Vec::with_capacity(samples.len());
    let mut fitted = Vec::with_capacity(samples.len());
    let mut ar_grad_abs = vec![0.0; model.ar_lags];
    let mut reg_grad_abs: Vec<Vec<f64>> = model
        .lagged_regressors
        .iter()
        .map(|_| vec![0.0; model.reg_lags])
        .collect();

    for sample in &samples {
        // The trend row carries the normalization offset so the emitted
        // component rows sum to the fitted value exactly.
        trend.push(model.trend_eval(sample.t) * scale + level);
        if model.seasonality_enabled() {
            season.push(model.seasonality_eval(sample.t)? * scale);
        }
        let mut total_norm = model.trend_eval(sample.t)
            + if model.seasonality_enabled() {
                model.seasonality_eval(sample.t)?
            } else {
                0.0
            };
        if let Some(net) = &model.ar_net {
            let (value, cache) = net.forward_cached(&sample.ar_inputs);
            ar.push(value * scale);
            total_norm += value;
            let mut grad = net.grad_zeroed();
            let mut input_grad = vec![0.0; model.ar_lags];
            net.backward(&cache, 1.0, &mut grad, Some(&mut input_grad));
            for (acc, g) in ar_grad_abs.iter_mut().zip(&input_grad) {
                *acc += g.abs();
            }
        }
        for (idx, block) in model.lagged_regressors.iter().enumerate() {
            let (value, cache) = block.net.forward_cached(&sample.reg_inputs[idx]);
            lagged[idx].push(value * scale);
            total_norm += value;
            let mut grad = block.net.grad_zeroed();
            let mut input_grad = vec![0.0; model.reg_lags];
            block.net.backward(&cache, 1.0, &mut grad, Some(&mut input_grad));
            for (acc, g) in reg_grad_abs[idx].iter_mut().zip(&input_grad) {
                *acc += g.abs();
            }
        }
        if !model.future_regressors.is_empty() {
            let value: f64 = model
                .future_regressors
                .iter()
                .zip(&sample.future_inputs)
                .map(|(block, v)| block.weight * v)
                .sum();
            future.push(value * scale);
            total_norm += value;
        }
        fitted.push(model.target_norm.invert(total_norm));
    }

    // Relevance per lag distance (1 = most recent). Inputs run oldest to
    // newest, so distance i maps to input index p - i.
    let relevance_from = |net: &Mlp, grad_abs: &[f64], count: usize| -> Vec<f64> {
        if net.is_linear() {
            (1..=count).map(|i| net.layers[0].weights[0][count - i]).collect()
        } else {
            (1..=count)
                .map(|i| grad_abs[count - i] / samples.len() as f64)
                .collect()
        }
    };
    let ar_relevance = model
        .ar_net
        .as_ref()
        .map(|net| relevance_from(net, &ar_grad_abs, model.ar_lags))
        .unwrap_or_default();
    let lagged_relevance = model
        .lagged_regressors
        .iter()
        .enumerate()
        .map(|(idx, block)| {
            (
                block.name.clone(),
                relevance_from(&block.net, &reg_grad_abs[idx], model.reg_lags),
            )
        })
        .collect();

    let named = |values: Vec<f64>, name: &str| {
        TimeSeries::new(start, values, format!("{}_{name}", series.name())).map_err(HybridError::Series)
    };
    Ok(ComponentsReport {
        trend: named(trend, "trend")?,
        seasonality: if model.seasonality_enabled() {
            Some(named(season, "seasonality")?)
        } else {
            None
        },
        autoregression: if model.ar_net.is_some() {
            Some(named(ar, "ar")?)
        } else {
            None
        },
        lagged: model
            .lagged_regressors
            .iter()
            .zip(lagged)
            .map(|(block, values)| Ok((block.name.clone(), named(values, "lagged")?)))
            .collect::<Result<_, HybridError>>()?,
        future: if model.future_regressors.is_empty() {
            None
        } else {
            Some(named(future, "future")?)
        },
        fitted: named(fitted, "fitted")?,
        ar_relevance,
        lagged_relevance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::MonthStamp;
    use approx::assert_relative_eq;

    fn ts(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new(MonthStamp::new(2010, 1).unwrap(), values, "y").unwrap()
    }

    fn small_config() -> HybridConfig {
        HybridConfig {
            n_changepoints: 2,
            season_terms: 2,
            ar_lags: 2,
            reg_lags: 2,
            hidden_layers: vec![3],
            learning_rate: 0.02,
            epochs: 30,
            batch_size: 16,
            seed: 5,
            ..HybridConfig::default()
        }
    }

    fn toy_data() -> (TimeSeries, TimeSeries) {
        let values: Vec<f64> = (0..60)
            .map(|t| {
                1000.0
                    + 12.0 * t as f64
                    + 200.0 * ((t % 12) as f64 / 12.0 * std::f64::consts::TAU).sin()
            })
            .collect();
        let reg: Vec<f64> = values.iter().map(|v| v / 50.0 + 3.0).collect();
        (
            ts(values),
            TimeSeries::new(MonthStamp::new(2010, 1).unwrap(), reg, "x").unwrap(),
        )
    }

    #[test]
    fn fit_is_bit_deterministic() {
        let (series, reg) = toy_data();
        let config = small_config();
        let a = fit(&config, &series, std::slice::from_ref(&reg), &[]).unwrap();
        let b = fit(&config, &series, std::slice::from_ref(&reg), &[]).unwrap();
        assert_eq!(a.param_vector(), b.param_vector());
        assert_eq!(a.train_loss, b.train_loss);
        assert_eq!(a.train_loss.len(), config.epochs);
    }

    #[test]
    fn training_reduces_the_loss() {
        let (series, _) = toy_data();
        let config = HybridConfig {
            epochs: 200,
            learning_rate: 0.05,
            ar_lags: 0,
            reg_lags: 0,
            hidden_layers: vec![],
            ..small_config()
        };
        let model = fit(&config, &series, &[], &[]).unwrap();
        let first = model.train_loss[0];
        let last = *model.train_loss.last().unwrap();
        assert!(last < first * 0.5, "loss {first} -> {last}");
    }

    #[test]
    fn production_configuration_trains() {
        let (series, reg) = toy_data();
        let config = HybridConfig {
            season_period: 12.0,
            season_terms: 3,
            ar_lags: 3,
            reg_lags: 2,
            hidden_layers: vec![4, 2],
            learning_rate: 0.003,
            epochs: 20,
            ..HybridConfig::default()
        };
        let model = fit(&config, &series, std::slice::from_ref(&reg), &[]).unwrap();
        assert_eq!(model.ar_lags, 3);
        assert_eq!(model.lagged_regressors.len(), 1);
        assert_eq!(model.lagged_regressors[0].net.input_dim(), 2);
    }

    #[test]
    fn rolling_forecast_of_trend_only_model_is_the_trend() {
        let mut model = HybridModel::trend_only(3.0, 10.0);
        model.huber_delta = 1.0;
        let series = ts((0..40).map(|t| t as f64).collect());
        let preds = forecast_rolling(&model, &series, &[], &[], 12).unwrap();
        assert_eq!(preds.len(), 12);
        for (i, p) in preds.iter().enumerate() {
            let t = (40 - 12 + i) as f64;
            assert_relative_eq!(*p, model.trend_eval(t), epsilon = 1e-12);
        }
    }

    #[test]
    fn rolling_forecast_matches_model_forward() {
        let (series, reg) = toy_data();
        let config = small_config();
        let model = fit(&config, &series, std::slice::from_ref(&reg), &[]).unwrap();
        let preds = forecast_rolling(&model, &series, std::slice::from_ref(&reg), &[], 6).unwrap();
        let n = series.len();
        for (i, p) in preds.iter().enumerate() {
            let t = n - 6 + i;
            let ar_raw = series.values()[t - 2..t].to_vec();
            let reg_raw = vec![reg.values()[t - 2..t].to_vec()];
            let direct = model.model_forward(t as f64, &ar_raw, &reg_raw, &[]).unwrap();
            assert_eq!(*p, direct);
        }
    }

    #[test]
    fn components_sum_to_fitted_values() {
        let (series, reg) = toy_data();
        let config = small_config();
        let model = fit(&config, &series, std::slice::from_ref(&reg), &[]).unwrap();
        let report = components(&model, &series, std::slice::from_ref(&reg), &[]).unwrap();
        let n = report.fitted.len();
        assert_eq!(n, series.len() - 2);
        for i in 0..n {
            let mut sum = report.trend.values()[i];
            sum += report.seasonality.as_ref().unwrap().values()[i];
            sum += report.autoregression.as_ref().unwrap().values()[i];
            sum += report.lagged[0].1.values()[i];
            assert_relative_eq!(sum, report.fitted.values()[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn linear_ar_relevance_reports_the_weights() {
        let (series, _) = toy_data();
        let config = HybridConfig {
            hidden_layers: vec![],
            ar_lags: 3,
            reg_lags: 0,
            epochs: 40,
            ..small_config()
        };
        let model = fit(&config, &series, &[], &[]).unwrap();
        let report = components(&model, &series, &[], &[]).unwrap();
        let weights = &model.ar_net.as_ref().unwrap().layers[0].weights[0];
        // Relevance index 0 is lag 1 (the newest input, last column).
        assert_eq!(report.ar_relevance[0], weights[2]);
        assert_eq!(report.ar_relevance[1], weights[1]);
        assert_eq!(report.ar_relevance[2], weights[0]);
    }

    #[test]
    fn misaligned_regressors_are_rejected() {
        let (series, _) = toy_data();
        let short = TimeSeries::new(series.start(), vec![1.0; 10], "x").unwrap();
        let err = fit(&small_config(), &series, &[short], &[]).unwrap_err();
        assert!(matches!(err, HybridError::MisalignedRegressor { .. }));
    }

    #[test]
    fn too_short_series_is_rejected() {
        let tiny = ts(vec![1.0, 2.0, 3.0]);
        let err = fit(&small_config(), &tiny, &[], &[]).unwrap_err();
        assert!(matches!(err, HybridError::SeriesTooShort { .. }));
    }
}
