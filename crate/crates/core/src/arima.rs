//! ARIMA(p,d,q), SARIMA(p,d,q)(P,D,Q,M) and SARIMAX estimation by
//! conditional sum of squares, with one-step and recursive forecasting on
//! the original scale.
//!
//! Estimation conditions on pre-sample values (innovations before the
//! first usable index are zero), initializes with a Hannan-Rissanen
//! long-AR regression and refines with Nelder-Mead. Exogenous regressors
//! enter linearly on the differenced scale (regression-with-ARIMA-errors
//! form). No stationarity constraint is enforced; instead a warning flag
//! is set when any AR-polynomial root modulus is at most 1.02.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::series::{self, SeriesError, TimeSeries};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArimaError {
    #[error("series too short: needs more than {needed} usable observations, got {actual}")]
    SeriesTooShort { needed: usize, actual: usize },
    #[error("exogenous regressors are collinear or degenerate")]
    SingularDesign,
    #[error("optimizer failed to reach a finite objective")]
    NonConvergence,
    #[error("history too short: needs at least {needed} observations, got {actual}")]
    HistoryTooShort { needed: usize, actual: usize },
    #[error("expected {expected} exogenous values, got {actual}")]
    MissingExogenous { expected: usize, actual: usize },
    #[error("exogenous series {name:?} does not cover the target's months")]
    MisalignedExogenous { name: String },
    #[error("model has no parameters to estimate")]
    EmptyModel,
    #[error("invalid order: {0}")]
    InvalidOrder(String),
    #[error(transparent)]
    Series(SeriesError),
}

/// Non-seasonal (p, d, q) orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Self {
        Self { p, d, q }
    }
}

/// Seasonal (P, D, Q) orders at period M (observations per season).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeasonalOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub period: usize,
}

impl SeasonalOrder {
    pub fn new(p: usize, d: usize, q: usize, period: usize) -> Self {
        Self { p, d, q, period }
    }

    pub fn none() -> Self {
        Self {
            p: 0,
            d: 0,
            q: 0,
            period: 1,
        }
    }

    fn is_active(&self) -> bool {
        self.p + self.d + self.q > 0
    }
}

/// Coefficients of the product polynomial
/// `(1 - sum a_i L^i)(1 - sum b_j L^{jM}) = 1 - sum c_k L^k`,
/// returned so that entry `k-1` multiplies `y_{t-k}` with a plus sign on
/// the right-hand side of the AR recursion.
pub fn expand_lag_polynomial(nonseasonal: &[f64], seasonal: &[f64], period: usize) -> Vec<f64> {
    if seasonal.is_empty() {
        return nonseasonal.to_vec();
    }
    assert!(period >= 1, "seasonal polynomial requires a positive period");
    let len = nonseasonal.len() + seasonal.len() * period;
    let mut combined = vec![0.0; len];
    for (i, a) in nonseasonal.iter().enumerate() {
        combined[i] += a;
    }
    for (j, b) in seasonal.iter().enumerate() {
        combined[(j + 1) * period - 1] += b;
        for (i, a) in nonseasonal.iter().enumerate() {
            combined[(j + 1) * period + i] -= a * b;
        }
    }
    combined
}

/// MA analogue with the plus-sign convention of Eq-style ARIMA notation:
/// `(1 + sum t_i L^i)(1 + sum T_j L^{jM}) = 1 + sum m_k L^k`.
fn combined_ma(theta: &[f64], seasonal_theta: &[f64], period: usize) -> Vec<f64> {
    let neg_t: Vec<f64> = theta.iter().map(|v| -v).collect();
    let neg_s: Vec<f64> = seasonal_theta.iter().map(|v| -v).collect();
    expand_lag_polynomial(&neg_t, &neg_s, period)
        .into_iter()
        .map(|v| -v)
        .collect()
}

/// A fitted (S)ARIMA(X) model. Immutable once constructed; forecasting
/// from a shared model is safe.
#[derive(Debug, Clone, PartialEq)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub seasonal: SeasonalOrder,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub seasonal_phi: Vec<f64>,
    pub seasonal_theta: Vec<f64>,
    pub exog_beta: Vec<f64>,
    /// Constant of the AR recursion on the differenced scale; zero when
    /// d + D > 0 (no drift after differencing).
    pub intercept: f64,
    /// Innovation variance, CSS divided by the effective sample size.
    pub sigma2: f64,
    /// Observations dropped while differencing the training series.
    pub pivots: Vec<f64>,
    /// Set when some AR root modulus is <= 1.02.
    pub ar_root_warning: bool,
    /// Final conditional sum of squares.
    pub css: f64,
    /// False when the simplex hit the iteration cap before collapsing.
    pub converged: bool,
}

impl ArimaModel {
    pub fn combined_ar(&self) -> Vec<f64> {
        expand_lag_polynomial(&self.phi, &self.seasonal_phi, self.seasonal.period)
    }

    pub fn combined_ma(&self) -> Vec<f64> {
        combined_ma(&self.theta, &self.seasonal_theta, self.seasonal.period)
    }

    fn check_consistent(&self) -> Result<(), ArimaError> {
        let ok = self.phi.len() == self.order.p
            && self.theta.len() == self.order.q
            && self.seasonal_phi.len() == self.seasonal.p
            && self.seasonal_theta.len() == self.seasonal.q;
        if !ok {
            return Err(ArimaError::InvalidOrder(
                "coefficient vector lengths do not match the declared orders".into(),
            ));
        }
        if self.sigma2 < 0.0 {
            return Err(ArimaError::InvalidOrder("sigma2 must be nonnegative".into()));
        }
        Ok(())
    }

    fn pack(&self) -> Vec<f64> {
        let mut v = Vec::new();
        if intercept_enabled(self.order, self.seasonal) {
            v.push(self.intercept);
        }
        v.extend_from_slice(&self.phi);
        v.extend_from_slice(&self.seasonal_phi);
        v.extend_from_slice(&self.theta);
        v.extend_from_slice(&self.seasonal_theta);
        v.extend_from_slice(&self.exog_beta);
        v
    }
}

fn intercept_enabled(order: ArimaOrder, seasonal: SeasonalOrder) -> bool {
    order.d + seasonal.d == 0
}

/// Differenced-scale estimation problem shared by fitting, residual
/// filtering and forecasting.
struct CssProblem<'a> {
    w: &'a [f64],
    exog: &'a [Vec<f64>],
    order: ArimaOrder,
    seasonal: SeasonalOrder,
    intercept: bool,
}

struct Unpacked<'a> {
    c: f64,
    phi: &'a [f64],
    seasonal_phi: &'a [f64],
    theta: &'a [f64],
    seasonal_theta: &'a [f64],
    beta: &'a [f64],
}

impl<'a> CssProblem<'a> {
    fn n_params(&self) -> usize {
        usize::from(self.intercept)
            + self.order.p
            + self.seasonal.p
            + self.order.q
            + self.seasonal.q
            + self.exog.len()
    }

    /// Highest combined AR lag; also the number of conditioned-on
    /// observations at the head of the differenced sample.
    fn max_ar_lag(&self) -> usize {
        self.order.p + self.seasonal.p * self.seasonal.period
    }

    fn max_ma_lag(&self) -> usize {
        self.order.q + self.seasonal.q * self.seasonal.period
    }

    fn unpack(&self, params: &'a [f64]) -> Unpacked<'a> {
        let mut pos = 0;
        let c = if self.intercept {
            pos += 1;
            params[0]
        } else {
            0.0
        };
        let mut take = |n: usize| {
            let s = &params[pos..pos + n];
            pos += n;
            s
        };
        Unpacked {
            c,
            phi: take(self.order.p),
            seasonal_phi: take(self.seasonal.p),
            theta: take(self.order.q),
            seasonal_theta: take(self.seasonal.q),
            beta: take(self.exog.len()),
        }
    }

    /// Innovation sequence under the CSS convention: entries before the
    /// max combined AR lag stay zero (conditioned on, not estimated).
    fn innovations(&self, params: &[f64]) -> Vec<f64> {
        let up = self.unpack(params);
        let ar = expand_lag_polynomial(up.phi, up.seasonal_phi, self.seasonal.period);
        let ma = combined_ma(up.theta, up.seasonal_theta, self.seasonal.period);
        let n = self.w.len();
        let z: Vec<f64> = (0..n)
            .map(|t| {
                let x: f64 = up
                    .beta
                    .iter()
                    .zip(self.exog)
                    .map(|(b, col)| b * col[t])
                    .sum();
                self.w[t] - x
            })
            .collect();
        let start = self.max_ar_lag();
        let mut e = vec![0.0; n];
        for t in start..n {
            let mut pred = up.c;
            for (i, a) in ar.iter().enumerate() {
                pred += a * z[t - 1 - i];
            }
            for (j, m) in ma.iter().enumerate() {
                if t > j {
                    pred += m * e[t - 1 - j];
                }
            }
            e[t] = z[t] - pred;
        }
        e
    }

    fn css(&self, params: &[f64]) -> f64 {
        let e = self.innovations(params);
        let s: f64 = e[self.max_ar_lag()..].iter().map(|v| v * v).sum();
        if s.is_finite() {
            s
        } else {
            f64::INFINITY
        }
    }
}

fn lstsq(design: &DMatrix<f64>, resp: &DVector<f64>) -> DVector<f64> {
    design
        .clone()
        .svd(true, true)
        .solve(resp, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(design.ncols()))
}

/// Hannan-Rissanen starting point: when MA terms are present, a long AR
/// fit supplies innovation proxies; the structured coefficients then come
/// from a single least-squares pass at the free lag positions.
fn hannan_rissanen(problem: &CssProblem) -> Vec<f64> {
    let n = problem.w.len();
    let ar_positions: Vec<usize> = (1..=problem.order.p)
        .chain((1..=problem.seasonal.p).map(|j| j * problem.seasonal.period))
        .collect();
    let ma_positions: Vec<usize> = (1..=problem.order.q)
        .chain((1..=problem.seasonal.q).map(|j| j * problem.seasonal.period))
        .collect();

    let mut resid_proxy = vec![0.0; n];
    let mut proxy_from = 0usize;
    if !ma_positions.is_empty() {
        let lag_span = problem.max_ar_lag() + problem.max_ma_lag();
        let h = (2 * lag_span + 5).min(n / 3).max(1);
        let rows = n - h;
        let mut design = DMatrix::zeros(rows, h + 1);
        let mut resp = DVector::zeros(rows);
        for (row, t) in (h..n).enumerate() {
            design[(row, 0)] = 1.0;
            for i in 1..=h {
                design[(row, i)] = problem.w[t - i];
            }
            resp[row] = problem.w[t];
        }
        let beta = lstsq(&design, &resp);
        for (row, t) in (h..n).enumerate() {
            let mut fitted = beta[0];
            for i in 1..=h {
                fitted += beta[i] * problem.w[t - i];
            }
            resid_proxy[t] = resp[row] - fitted;
        }
        proxy_from = h;
    }

    let t0 = problem
        .max_ar_lag()
        .max(if ma_positions.is_empty() {
            0
        } else {
            proxy_from + problem.max_ma_lag()
        })
        .min(n.saturating_sub(1));
    let rows = n - t0;
    let ncols = usize::from(problem.intercept)
        + ar_positions.len()
        + ma_positions.len()
        + problem.exog.len();
    if ncols == 0 || rows == 0 {
        return vec![0.0; problem.n_params()];
    }
    let mut design = DMatrix::zeros(rows, ncols);
    let mut resp = DVector::zeros(rows);
    for (row, t) in (t0..n).enumerate() {
        let mut col = 0;
        if problem.intercept {
            design[(row, col)] = 1.0;
            col += 1;
        }
        for &lag in &ar_positions {
            design[(row, col)] = if t >= lag { problem.w[t - lag] } else { 0.0 };
            col += 1;
        }
        for &lag in &ma_positions {
            design[(row, col)] = if t >= lag { resid_proxy[t - lag] } else { 0.0 };
            col += 1;
        }
        for ex in problem.exog {
            design[(row, col)] = ex[t];
            col += 1;
        }
        resp[row] = problem.w[t];
    }
    let sol = lstsq(&design, &resp);

    // Repack into [c?, phi, seasonal_phi, theta, seasonal_theta, beta].
    let mut params = Vec::with_capacity(problem.n_params());
    let mut col = 0;
    if problem.intercept {
        params.push(sol[col]);
        col += 1;
    }
    for _ in 0..ar_positions.len() {
        params.push(sol[col]);
        col += 1;
    }
    for _ in 0..ma_positions.len() {
        params.push(sol[col]);
        col += 1;
    }
    for _ in 0..problem.exog.len() {
        params.push(sol[col]);
        col += 1;
    }
    params
}

/// Shrink a starting point toward zero until the objective is finite;
/// the all-zero point always is.
fn make_finite(problem: &CssProblem, mut x: Vec<f64>) -> Vec<f64> {
    for _ in 0..64 {
        if problem.css(&x).is_finite() {
            return x;
        }
        for v in &mut x {
            *v *= 0.5;
        }
    }
    vec![0.0; x.len()]
}

const NM_MAX_ITER: usize = 2000;
const NM_DIAMETER_TOL: f64 = 1e-8;

/// Nelder-Mead simplex minimization; returns the best vertex, its value
/// and whether the simplex collapsed below the diameter tolerance.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    max_iter: usize,
    diameter_tol: f64,
) -> (Vec<f64>, f64, bool) {
    let dim = x0.len();
    if dim == 0 {
        return (vec![], f(x0), true);
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += (0.1 * v[i].abs()).max(0.05);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let mut converged = false;
    for _ in 0..max_iter {
        let mut idx: Vec<usize> = (0..=dim).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let ordered: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let ordered_vals: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        simplex = ordered;
        values = ordered_vals;

        let diameter = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter < diameter_tol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|v| v[j]).sum::<f64>() / dim as f64)
            .collect();
        let worst = simplex[dim].clone();
        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&worst)
            .map(|(c, w)| c + alpha * (c - w))
            .collect();
        let fr = f(&reflect);

        if fr < values[0] {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + gamma * (c - w))
                .collect();
            let fe = f(&expand);
            if fe < fr {
                simplex[dim] = expand;
                values[dim] = fe;
            } else {
                simplex[dim] = reflect;
                values[dim] = fr;
            }
        } else if fr < values[dim - 1] {
            simplex[dim] = reflect;
            values[dim] = fr;
        } else {
            let (point, base) = if fr < values[dim] {
                (&reflect, fr)
            } else {
                (&worst, values[dim])
            };
            let contract: Vec<f64> = centroid
                .iter()
                .zip(point)
                .map(|(c, p)| c + rho * (p - c))
                .collect();
            let fc = f(&contract);
            if fc < base {
                simplex[dim] = contract;
                values[dim] = fc;
            } else {
                for i in 1..=dim {
                    let shrunk: Vec<f64> = simplex[i]
                        .iter()
                        .zip(&simplex[0])
                        .map(|(v, b)| b + sigma * (v - b))
                        .collect();
                    values[i] = f(&shrunk);
                    simplex[i] = shrunk;
                }
            }
        }
    }

    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    (simplex[best].clone(), values[best], converged)
}

/// Any root of `1 - sum a_i z^i` with modulus <= 1.02? Roots come from the
/// companion matrix of the reciprocal polynomial, whose eigenvalues are
/// the root reciprocals.
fn ar_root_warning(combined_ar: &[f64]) -> bool {
    let mut coeffs = combined_ar.to_vec();
    while coeffs.last().is_some_and(|v| v.abs() < 1e-12) {
        coeffs.pop();
    }
    let l = coeffs.len();
    if l == 0 {
        return false;
    }
    let mut companion = DMatrix::zeros(l, l);
    for (j, a) in coeffs.iter().enumerate() {
        companion[(0, j)] = *a;
    }
    for i in 1..l {
        companion[(i, i - 1)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .any(|mu| mu.norm() >= 1.0 / 1.02)
}

fn check_exog_alignment(series: &TimeSeries, exog: &[TimeSeries]) -> Result<(), ArimaError> {
    for ex in exog {
        if !ex.same_span(series) {
            return Err(ArimaError::MisalignedExogenous {
                name: ex.name().to_string(),
            });
        }
    }
    Ok(())
}

/// Differenced target values, its pivots, and differenced exog columns.
type DifferencedData = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

fn difference_all(
    series: &TimeSeries,
    exog: &[TimeSeries],
    order: ArimaOrder,
    seasonal: SeasonalOrder,
) -> Result<DifferencedData, ArimaError> {
    let (w, pivots) = series::difference(series, order.d, seasonal.d, seasonal.period)
        .map_err(|e| match e {
            SeriesError::SeriesTooShort { needed, actual } => {
                ArimaError::SeriesTooShort { needed, actual }
            }
            other => ArimaError::Series(other),
        })?;
    let mut exog_diff = Vec::with_capacity(exog.len());
    for ex in exog {
        let (v, _) = series::difference(ex, order.d, seasonal.d, seasonal.period)
            .map_err(ArimaError::Series)?;
        exog_diff.push(v.values().to_vec());
    }
    Ok((w.values().to_vec(), pivots, exog_diff))
}

fn validate_seasonal(seasonal: SeasonalOrder) -> Result<(), ArimaError> {
    if seasonal.is_active() && seasonal.period < 2 {
        return Err(ArimaError::InvalidOrder(format!(
            "seasonal period must be at least 2, got {}",
            seasonal.period
        )));
    }
    Ok(())
}

/// Estimate a (S)ARIMA(X) model on `series` by conditional sum of squares.
///
/// With q = Q = 0 and no exogenous terms the objective is the ordinary
/// least-squares AR criterion, so the fit coincides with OLS up to the
/// optimizer tolerance.
pub fn fit(
    series: &TimeSeries,
    order: ArimaOrder,
    seasonal: SeasonalOrder,
    exog: &[TimeSeries],
) -> Result<ArimaModel, ArimaError> {
    validate_seasonal(seasonal)?;
    check_exog_alignment(series, exog)?;

    let (w, pivots, exog_diff) = difference_all(series, exog, order, seasonal)?;
    let intercept = intercept_enabled(order, seasonal);
    let problem = CssProblem {
        w: &w,
        exog: &exog_diff,
        order,
        seasonal,
        intercept,
    };
    if problem.n_params() == 0 {
        return Err(ArimaError::EmptyModel);
    }
    let min_len = problem.n_params() + problem.max_ar_lag().max(problem.max_ma_lag());
    if w.len() <= min_len {
        return Err(ArimaError::SeriesTooShort {
            needed: min_len,
            actual: w.len(),
        });
    }

    if !exog_diff.is_empty() {
        // Rank check over the differenced regressors (plus the constant
        // when present) so collinear inputs fail loudly.
        let rows = w.len();
        let extra = usize::from(intercept);
        let mut m = DMatrix::zeros(rows, exog_diff.len() + extra);
        for r in 0..rows {
            if intercept {
                m[(r, 0)] = 1.0;
            }
            for (c, col) in exog_diff.iter().enumerate() {
                m[(r, extra + c)] = col[r];
            }
        }
        let sv = m.singular_values();
        let max_sv = sv.iter().cloned().fold(0.0, f64::max);
        let min_sv = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if max_sv <= 0.0 || min_sv / max_sv < 1e-10 {
            return Err(ArimaError::SingularDesign);
        }
    }

    let init = make_finite(&problem, hannan_rissanen(&problem));
    let (params, css, converged) =
        nelder_mead(|x| problem.css(x), &init, NM_MAX_ITER, NM_DIAMETER_TOL);
    if !css.is_finite() {
        return Err(ArimaError::NonConvergence);
    }

    let up = problem.unpack(&params);
    let effective = w.len() - problem.max_ar_lag();
    let combined = expand_lag_polynomial(up.phi, up.seasonal_phi, seasonal.period);
    Ok(ArimaModel {
        order,
        seasonal,
        phi: up.phi.to_vec(),
        theta: up.theta.to_vec(),
        seasonal_phi: up.seasonal_phi.to_vec(),
        seasonal_theta: up.seasonal_theta.to_vec(),
        exog_beta: up.beta.to_vec(),
        intercept: up.c,
        sigma2: css / effective as f64,
        pivots,
        ar_root_warning: ar_root_warning(&combined),
        css,
        converged,
    })
}

/// Differencing stages of a value sequence: stage 0 is the input, the
/// last stage is the fully differenced sequence.
fn diff_stages(values: &[f64], d: usize, seasonal_d: usize, period: usize) -> Vec<Vec<f64>> {
    let mut stages = vec![values.to_vec()];
    for _ in 0..d {
        let prev = stages.last().unwrap();
        stages.push(prev.windows(2).map(|w| w[1] - w[0]).collect());
    }
    for _ in 0..seasonal_d {
        let prev = stages.last().unwrap();
        stages.push((period..prev.len()).map(|i| prev[i] - prev[i - period]).collect());
    }
    stages
}

fn one_step_values(
    model: &ArimaModel,
    history: &[f64],
    exog_history: &[Vec<f64>],
    exog_next: &[f64],
) -> Result<f64, ArimaError> {
    model.check_consistent()?;
    if exog_next.len() != model.exog_beta.len() || exog_history.len() != model.exog_beta.len() {
        return Err(ArimaError::MissingExogenous {
            expected: model.exog_beta.len(),
            actual: exog_next.len(),
        });
    }

    let (d, sd, period) = (model.order.d, model.seasonal.d, model.seasonal.period);
    let drop = d + sd * period;
    let ar = model.combined_ar();
    let ma = model.combined_ma();
    let needed = drop + ar.len().max(1);
    if history.len() < needed {
        return Err(ArimaError::HistoryTooShort {
            needed,
            actual: history.len(),
        });
    }

    let stages = diff_stages(history, d, sd, period);
    let w = stages.last().unwrap().clone();
    let n = w.len();
    if n < ar.len() {
        return Err(ArimaError::HistoryTooShort {
            needed: drop + ar.len(),
            actual: history.len(),
        });
    }

    // Next-month value of each differenced regressor.
    let mut exog_diff = Vec::with_capacity(exog_history.len());
    let mut exog_next_diff = Vec::with_capacity(exog_history.len());
    for (col, &next) in exog_history.iter().zip(exog_next) {
        if col.len() != history.len() {
            return Err(ArimaError::MissingExogenous {
                expected: history.len(),
                actual: col.len(),
            });
        }
        let mut extended = col.clone();
        extended.push(next);
        let ext_stages = diff_stages(&extended, d, sd, period);
        let ext_last = ext_stages.last().unwrap();
        exog_next_diff.push(*ext_last.last().unwrap());
        exog_diff.push(ext_last[..ext_last.len() - 1].to_vec());
    }

    let problem = CssProblem {
        w: &w,
        exog: &exog_diff,
        order: model.order,
        seasonal: model.seasonal,
        intercept: intercept_enabled(model.order, model.seasonal),
    };
    let params = model.pack();
    let e = problem.innovations(&params);
    let z: Vec<f64> = (0..n)
        .map(|t| {
            let x: f64 = model
                .exog_beta
                .iter()
                .zip(&exog_diff)
                .map(|(b, col)| b * col[t])
                .sum();
            w[t] - x
        })
        .collect();

    let mut pred = model.intercept;
    for (i, a) in ar.iter().enumerate() {
        pred += a * z[n - 1 - i];
    }
    for (j, m) in ma.iter().enumerate() {
        if n > j {
            pred += m * e[n - 1 - j];
        }
    }
    let x_next: f64 = model
        .exog_beta
        .iter()
        .zip(&exog_next_diff)
        .map(|(b, v)| b * v)
        .sum();

    // Walk the differencing stages back up to the original scale. Stages
    // 1..=d are regular passes, the rest seasonal.
    let mut level = pred + x_next;
    for k in (1..stages.len()).rev() {
        let above = &stages[k - 1];
        let lag = if k > d { period } else { 1 };
        level += above[above.len() - lag];
    }
    Ok(level)
}

/// Conditional-mean one-step forecast on the original scale. Residuals
/// for the MA terms are rebuilt by filtering the supplied history, and
/// exogenous series must cover the history months exactly.
pub fn forecast_one_step(
    model: &ArimaModel,
    history: &TimeSeries,
    exog_history: &[TimeSeries],
    exog_next: &[f64],
) -> Result<f64, ArimaError> {
    check_exog_alignment(history, exog_history)?;
    let cols: Vec<Vec<f64>> = exog_history.iter().map(|e| e.values().to_vec()).collect();
    one_step_values(model, history.values(), &cols, exog_next)
}

/// Recursive h-step forecast: each prediction is appended to the working
/// history and fed back as a lag. `exog_future` must provide one row per
/// step when the model uses exogenous regressors.
pub fn forecast_path(
    model: &ArimaModel,
    history: &TimeSeries,
    exog_history: &[TimeSeries],
    h: usize,
    exog_future: &[Vec<f64>],
) -> Result<Vec<f64>, ArimaError> {
    if h == 0 {
        return Ok(vec![]);
    }
    check_exog_alignment(history, exog_history)?;
    if !model.exog_beta.is_empty() && exog_future.len() != h {
        return Err(ArimaError::MissingExogenous {
            expected: h,
            actual: exog_future.len(),
        });
    }

    let mut values = history.values().to_vec();
    let mut exog_cols: Vec<Vec<f64>> =
        exog_history.iter().map(|e| e.values().to_vec()).collect();
    let mut out = Vec::with_capacity(h);
    for step in 0..h {
        let next: &[f64] = exog_future.get(step).map_or(&[], Vec::as_slice);
        let pred = one_step_values(model, &values, &exog_cols, next)?;
        out.push(pred);
        values.push(pred);
        for (col, v) in exog_cols.iter_mut().zip(next) {
            col.push(*v);
        }
    }
    Ok(out)
}

/// Innovation series recovered by filtering `series` through the model:
/// one residual per usable differenced observation, stamped accordingly.
pub fn residuals(
    model: &ArimaModel,
    series: &TimeSeries,
    exog: &[TimeSeries],
) -> Result<TimeSeries, ArimaError> {
    model.check_consistent()?;
    check_exog_alignment(series, exog)?;
    let (w, _, exog_diff) = difference_all(series, exog, model.order, model.seasonal)?;
    let problem = CssProblem {
        w: &w,
        exog: &exog_diff,
        order: model.order,
        seasonal: model.seasonal,
        intercept: intercept_enabled(model.order, model.seasonal),
    };
    let start_lag = problem.max_ar_lag();
    if w.len() <= start_lag {
        return Err(ArimaError::HistoryTooShort {
            needed: model.order.d + model.seasonal.d * model.seasonal.period + start_lag + 1,
            actual: series.len(),
        });
    }
    let e = problem.innovations(&model.pack());
    let drop = model.order.d + model.seasonal.d * model.seasonal.period + start_lag;
    TimeSeries::new(
        series.start().plus_months(drop as i64),
        e[start_lag..].to_vec(),
        format!("{}_residuals", series.name()),
    )
    .map_err(ArimaError::Series)
}
