//! Epsilon-insensitive support vector regression.
//!
//! The dual quadratic program is solved by SMO-style pairwise coordinate
//! ascent directly on the coefficient differences `delta_i = lambda_i -
//! lambda_i*` (complementary slackness makes the signed form lossless):
//! the first working index is the maximal KKT violator, the second
//! maximizes the second-order objective gain. Ties break toward the
//! lowest index so fits are deterministic.
//!
//! Inputs are standardized per feature and targets mapped to [0, 1]
//! before solving; the tube width and regularization weight therefore
//! live on the normalized scale. Both scalers are part of the model.

use thiserror::Error;

use crate::series::{self, Affine, SeriesError, SupervisedFrame, TimeSeries};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SvrError {
    #[error("input has {actual} features, model expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("need at least 2 training samples, got {0}")]
    DegenerateFrame(usize),
    #[error("series too short: needs more than {needed} observations, got {actual}")]
    SeriesTooShort { needed: usize, actual: usize },
    #[error("gaussian kernel width is unresolved; fit resolves it from data")]
    UnresolvedKernelWidth,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Kernel family. A `Gaussian` width of `None` is resolved at fit time by
/// the median heuristic (median pairwise distance of the normalized
/// training inputs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Linear,
    Polynomial { degree: u32 },
    Gaussian { width: Option<f64> },
}

/// Kernel value for a pair of equally sized vectors.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], z: &[f64]) -> Result<f64, SvrError> {
    if x.len() != z.len() {
        return Err(SvrError::DimensionMismatch {
            expected: x.len(),
            actual: z.len(),
        });
    }
    let dot = || x.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
    match spec {
        KernelSpec::Linear => Ok(dot()),
        KernelSpec::Polynomial { degree } => Ok(dot().powi(*degree as i32)),
        KernelSpec::Gaussian { width: None } => Err(SvrError::UnresolvedKernelWidth),
        KernelSpec::Gaussian { width: Some(sigma) } => {
            let d2 = x
                .iter()
                .zip(z)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            Ok((-d2 / (2.0 * sigma * sigma)).exp())
        }
    }
}

/// Solver configuration. `c` is the regularization weight balancing
/// flatness against tube violations; `epsilon` the tube half-width on the
/// normalized target scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrConfig {
    pub c: f64,
    pub epsilon: f64,
    pub kernel: KernelSpec,
    pub tol: f64,
    /// Sweep cap; one sweep is n pair updates. `None` means 10 * n sweeps.
    pub max_passes: Option<usize>,
}

impl SvrConfig {
    pub fn new(c: f64, epsilon: f64, kernel: KernelSpec) -> Self {
        Self {
            c,
            epsilon,
            kernel,
            tol: 1e-3,
            max_passes: None,
        }
    }

    fn validate(&self) -> Result<(), SvrError> {
        if !self.c.is_finite() || self.c <= 0.0 {
            return Err(SvrError::InvalidConfig(format!("c must be positive, got {}", self.c)));
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(SvrError::InvalidConfig(format!(
                "epsilon must be nonnegative, got {}",
                self.epsilon
            )));
        }
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(SvrError::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if let KernelSpec::Polynomial { degree } = self.kernel {
            if degree < 1 {
                return Err(SvrError::InvalidConfig("polynomial degree must be >= 1".into()));
            }
        }
        if let KernelSpec::Gaussian { width: Some(s) } = self.kernel {
            if !s.is_finite() || s <= 0.0 {
                return Err(SvrError::InvalidConfig(format!(
                    "gaussian width must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Fitted model: retained training rows, their signed dual coefficients
/// and the bias of the decision function.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    pub support_inputs: Vec<Vec<f64>>,
    pub dual_deltas: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelSpec,
    pub input_scaler: Vec<Affine>,
    pub target_scaler: Affine,
    /// False when the sweep cap was hit before KKT convergence; the model
    /// then carries the best iterate found.
    pub converged: bool,
}

impl SvrModel {
    pub fn n_support(&self) -> usize {
        self.dual_deltas.len()
    }
}

/// Raw dual solution over all training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub deltas: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
}

/// Value of the dual objective at `deltas`:
/// `sum y_i d_i - eps * sum |d_i| - 0.5 * sum_ij d_i d_j K_ij`.
pub fn dual_objective(gram: &[Vec<f64>], targets: &[f64], epsilon: f64, deltas: &[f64]) -> f64 {
    let mut obj = 0.0;
    for (i, d) in deltas.iter().enumerate() {
        obj += targets[i] * d - epsilon * d.abs();
        let mut kd = 0.0;
        for (j, dj) in deltas.iter().enumerate() {
            kd += gram[i][j] * dj;
        }
        obj -= 0.5 * d * kd;
    }
    obj
}

/// Marginal gains of moving one coordinate up or down, given the current
/// kernel expansion `kd = (K delta)_i`. `None` marks an infeasible move.
fn move_gains(delta: f64, kd: f64, y: f64, c: f64, eps: f64) -> (Option<f64>, Option<f64>) {
    let e = kd - y;
    let up = (delta < c).then(|| if delta >= 0.0 { -e - eps } else { -e + eps });
    let down = (delta > -c).then_some(if delta > 0.0 { e + eps } else { e - eps });
    (up, down)
}

/// Solve the dual QP: maximize the objective subject to
/// `sum deltas = 0` and `|delta_i| <= c`. `max_updates` caps the number of
/// pair updates.
pub fn solve_dual(
    gram: &[Vec<f64>],
    targets: &[f64],
    c: f64,
    epsilon: f64,
    tol: f64,
    max_updates: usize,
) -> DualSolution {
    const TAU: f64 = 1e-12;
    let n = targets.len();
    let mut deltas = vec![0.0; n];
    let mut kd = vec![0.0; n]; // (K delta)_i, maintained incrementally

    let mut converged = false;
    let mut updates = 0;
    loop {
        // Maximal violators in each direction, lowest index on ties.
        let mut best_up: Option<(f64, usize)> = None;
        let mut best_down: Option<(f64, usize)> = None;
        for i in 0..n {
            let (up, down) = move_gains(deltas[i], kd[i], targets[i], c, epsilon);
            if let Some(u) = up {
                if best_up.is_none_or(|(v, _)| u > v) {
                    best_up = Some((u, i));
                }
            }
            if let Some(d) = down {
                if best_down.is_none_or(|(v, _)| d > v) {
                    best_down = Some((d, i));
                }
            }
        }
        let (max_up, up_idx) = match best_up {
            Some(v) => v,
            None => break,
        };
        let (max_down, down_idx) = match best_down {
            Some(v) => v,
            None => break,
        };
        if max_up + max_down < tol {
            converged = true;
            break;
        }
        if updates >= max_updates {
            break;
        }

        // First index: the larger single violation decides the direction.
        // Second index: maximal second-order gain among opposite moves.
        let (first, first_gain, first_is_up) = if max_up >= max_down {
            (up_idx, max_up, true)
        } else {
            (down_idx, max_down, false)
        };
        let mut second: Option<(f64, usize, f64)> = None; // (gain, idx, violation)
        for j in 0..n {
            if j == first {
                continue;
            }
            let (up, down) = move_gains(deltas[j], kd[j], targets[j], c, epsilon);
            let partner = if first_is_up { down } else { up };
            if let Some(g) = partner {
                let violation = first_gain + g;
                if violation <= 0.0 {
                    continue;
                }
                let curv = (gram[first][first] + gram[j][j] - 2.0 * gram[first][j]).max(TAU);
                let gain = violation * violation / (2.0 * curv);
                if second.is_none_or(|(best, _, _)| gain > best) {
                    second = Some((gain, j, violation));
                }
            }
        }
        let Some((_, partner, violation)) = second else {
            break;
        };

        let (up_i, down_i) = if first_is_up {
            (first, partner)
        } else {
            (partner, first)
        };
        let curv = (gram[up_i][up_i] + gram[down_i][down_i] - 2.0 * gram[up_i][down_i]).max(TAU);
        let mut step = violation / curv;
        // Box limits plus the |delta| kinks at zero: stop there and let
        // the next iteration re-evaluate the epsilon slope.
        step = step.min(c - deltas[up_i]);
        step = step.min(deltas[down_i] + c);
        if deltas[up_i] < 0.0 {
            step = step.min(-deltas[up_i]);
        }
        if deltas[down_i] > 0.0 {
            step = step.min(deltas[down_i]);
        }
        if step <= 0.0 {
            break;
        }
        deltas[up_i] += step;
        deltas[down_i] -= step;
        for j in 0..n {
            kd[j] += step * (gram[up_i][j] - gram[down_i][j]);
        }
        updates += 1;
    }

    // Bias from the KKT interval [max up-gain, -max down-gain] around the
    // final iterate.
    let mut max_up = f64::NEG_INFINITY;
    let mut max_down = f64::NEG_INFINITY;
    for i in 0..n {
        let (up, down) = move_gains(deltas[i], kd[i], targets[i], c, epsilon);
        if let Some(u) = up {
            max_up = max_up.max(u);
        }
        if let Some(d) = down {
            max_down = max_down.max(d);
        }
    }
    let bias = if max_up.is_finite() && max_down.is_finite() {
        (max_up - max_down) / 2.0
    } else {
        0.0
    };

    DualSolution {
        deltas,
        bias,
        converged,
    }
}

fn median_pairwise_distance(rows: &[Vec<f64>]) -> f64 {
    let mut dists = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let d2: f64 = rows[i]
                .iter()
                .zip(&rows[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 0 {
        0.5 * (dists[mid - 1] + dists[mid])
    } else {
        dists[mid]
    };
    if median > 1e-12 {
        median
    } else {
        1.0
    }
}

/// Fit an epsilon-SVR on the frame. The returned model satisfies the dual
/// constraints to within `tol`: the deltas sum to ~0, none exceeds `c` in
/// magnitude, and every sample meets the epsilon-KKT conditions.
pub fn fit(frame: &SupervisedFrame, config: &SvrConfig) -> Result<SvrModel, SvrError> {
    config.validate()?;
    let n = frame.n_samples();
    if n < 2 {
        return Err(SvrError::DegenerateFrame(n));
    }
    let n_features = frame.n_features();
    for row in &frame.inputs {
        if row.len() != n_features {
            return Err(SvrError::DimensionMismatch {
                expected: n_features,
                actual: row.len(),
            });
        }
    }
    if frame.targets.iter().any(|t| !t.is_finite()) {
        return Err(SvrError::InvalidConfig("targets must be finite".into()));
    }

    let input_scaler: Vec<Affine> = (0..n_features)
        .map(|j| {
            let col: Vec<f64> = frame.inputs.iter().map(|r| r[j]).collect();
            Affine::standardize(&col)
        })
        .collect();
    let norm_inputs: Vec<Vec<f64>> = frame
        .inputs
        .iter()
        .map(|row| {
            row.iter()
                .zip(&input_scaler)
                .map(|(v, s)| s.apply(*v))
                .collect()
        })
        .collect();
    let target_scaler = Affine::min_max(&frame.targets);
    let norm_targets: Vec<f64> = frame.targets.iter().map(|t| target_scaler.apply(*t)).collect();

    let kernel = match config.kernel {
        KernelSpec::Gaussian { width: None } => KernelSpec::Gaussian {
            width: Some(median_pairwise_distance(&norm_inputs)),
        },
        k => k,
    };

    let mut gram = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let k = kernel_eval(&kernel, &norm_inputs[i], &norm_inputs[j])?;
            gram[i][j] = k;
            gram[j][i] = k;
        }
    }

    let max_updates = config.max_passes.unwrap_or(10 * n) * n;
    let solution = solve_dual(
        &gram,
        &norm_targets,
        config.c,
        config.epsilon,
        config.tol,
        max_updates,
    );

    let mut support_inputs = Vec::new();
    let mut dual_deltas = Vec::new();
    for (row, delta) in norm_inputs.into_iter().zip(&solution.deltas) {
        if *delta != 0.0 {
            support_inputs.push(row);
            dual_deltas.push(*delta);
        }
    }

    Ok(SvrModel {
        support_inputs,
        dual_deltas,
        bias: solution.bias,
        kernel,
        input_scaler,
        target_scaler,
        converged: solution.converged,
    })
}

/// Decision function: kernel expansion over the support set on the
/// normalized input, mapped back to the target scale.
pub fn predict(model: &SvrModel, x: &[f64]) -> Result<f64, SvrError> {
    if x.len() != model.input_scaler.len() {
        return Err(SvrError::DimensionMismatch {
            expected: model.input_scaler.len(),
            actual: x.len(),
        });
    }
    let normed: Vec<f64> = x
        .iter()
        .zip(&model.input_scaler)
        .map(|(v, s)| s.apply(*v))
        .collect();
    let mut value = model.bias;
    for (sv, delta) in model.support_inputs.iter().zip(&model.dual_deltas) {
        value += delta * kernel_eval(&model.kernel, &normed, sv)?;
    }
    Ok(model.target_scaler.invert(value))
}

/// Train once on everything before the last `n_test` observations, then
/// predict each test month from its actual observed lags (no feedback).
pub fn forecast_rolling(
    config: &SvrConfig,
    series: &TimeSeries,
    p: usize,
    n_test: usize,
) -> Result<Vec<f64>, SvrError> {
    if n_test == 0 {
        return Ok(vec![]);
    }
    if series.len() <= p + n_test {
        return Err(SvrError::SeriesTooShort {
            needed: p + n_test,
            actual: series.len(),
        });
    }
    let split = series.len() - n_test;
    let train = series.prefix(split)?;
    let frame = series::make_supervised(&train, p)?;
    let model = fit(&frame, config)?;

    let values = series.values();
    (0..n_test)
        .map(|i| predict(&model, &values[split + i - p..split + i]))
        .collect()
}
