//! Monthly time-series container plus the preprocessing shared by every
//! model: differencing/integration, correlation diagnostics, a unit-root
//! test, supervised lag framing and range scaling.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Errors from series construction and preprocessing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeriesError {
    #[error("series must contain at least one observation")]
    Empty,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("series too short: needs more than {needed} observations, got {actual}")]
    SeriesTooShort { needed: usize, actual: usize },
    #[error("pivot count mismatch: expected {expected}, got {actual}")]
    PivotMismatch { expected: usize, actual: usize },
    #[error("lag {lag} too large for series of length {len}")]
    LagTooLarge { lag: usize, len: usize },
    #[error("operation undefined on a constant series")]
    ConstantSeries,
    #[error("cannot reserve {n_test} test observations out of {len}")]
    SplitTooLarge { n_test: usize, len: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Calendar month stored as (year, month), month in 1..=12.
///
/// The data handled here is strictly monthly, so there is no day-level
/// calendar anywhere in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonthStamp {
    year: i32,
    month: u8,
}

impl MonthStamp {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(Self {
            year,
            month: month as u8,
        })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u32 {
        self.month as u32
    }

    pub fn plus_months(self, n: i64) -> Self {
        let total = self.year as i64 * 12 + (self.month as i64 - 1) + n;
        Self {
            year: total.div_euclid(12) as i32,
            month: (total.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn next(self) -> Self {
        self.plus_months(1)
    }

    /// Signed number of months from `other` to `self`.
    pub fn months_since(self, other: Self) -> i64 {
        (self.year as i64 * 12 + self.month as i64) - (other.year as i64 * 12 + other.month as i64)
    }
}

impl fmt::Display for MonthStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for MonthStamp {
    type Err = SeriesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SeriesError::InvalidArgument(format!("expected YYYY-MM month, got {s:?}"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        MonthStamp::new(year, month).ok_or_else(bad)
    }
}

/// Contiguous monthly observations. All values are finite and there is at
/// least one of them; both facts are enforced at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    start: MonthStamp,
    values: Vec<f64>,
    name: String,
}

impl TimeSeries {
    pub fn new(
        start: MonthStamp,
        values: Vec<f64>,
        name: impl Into<String>,
    ) -> Result<Self, SeriesError> {
        if values.is_empty() {
            return Err(SeriesError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SeriesError::NonFinite(i));
        }
        Ok(Self {
            start,
            values,
            name: name.into(),
        })
    }

    pub fn start(&self) -> MonthStamp {
        self.start
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 1 by construction
    }

    pub fn stamp_at(&self, index: usize) -> MonthStamp {
        self.start.plus_months(index as i64)
    }

    pub fn end(&self) -> MonthStamp {
        self.stamp_at(self.len() - 1)
    }

    pub fn stamps(&self) -> impl Iterator<Item = MonthStamp> + '_ {
        (0..self.len()).map(|i| self.stamp_at(i))
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// First `len` observations as a new series.
    pub fn prefix(&self, len: usize) -> Result<TimeSeries, SeriesError> {
        if len == 0 || len > self.len() {
            return Err(SeriesError::InvalidArgument(format!(
                "prefix length {len} out of range 1..={}",
                self.len()
            )));
        }
        TimeSeries::new(self.start, self.values[..len].to_vec(), self.name.clone())
    }

    /// True when `other` covers exactly the same month range.
    pub fn same_span(&self, other: &TimeSeries) -> bool {
        self.start == other.start && self.len() == other.len()
    }
}

/// Affine map `x -> (x - offset) / scale` with its inverse. Shared by the
/// SVR and hybrid normalization paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub offset: f64,
    pub scale: f64,
}

impl Affine {
    pub fn identity() -> Self {
        Self {
            offset: 0.0,
            scale: 1.0,
        }
    }

    /// Map the min/max of `values` to [0, 1]; constant input degrades to a
    /// pure shift so the map stays invertible.
    pub fn min_max(values: &[f64]) -> Self {
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let range = max - min;
        Self {
            offset: min,
            scale: if range > 0.0 { range } else { 1.0 },
        }
    }

    /// Zero-mean/unit-variance map; zero variance degrades to a shift.
    pub fn standardize(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        Self {
            offset: mean,
            scale: if sd > 1e-12 { sd } else { 1.0 },
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.offset) / self.scale
    }

    pub fn invert(&self, y: f64) -> f64 {
        y * self.scale + self.offset
    }
}

/// Lagged input matrix with one-step-ahead targets.
///
/// Row `i` holds `(y[i], ..., y[i+p-1])` oldest to newest, and the target
/// is `y[i+p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedFrame {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl SupervisedFrame {
    pub fn n_samples(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }
}

/// Apply `(1 - L)^d (1 - L^M)^D` to the series. Regular passes run first,
/// then seasonal ones. Returns the shortened series along with the pivot
/// values each pass dropped, in application order, which `undifference`
/// needs to invert the transform.
pub fn difference(
    series: &TimeSeries,
    d: usize,
    seasonal_d: usize,
    period: usize,
) -> Result<(TimeSeries, Vec<f64>), SeriesError> {
    if seasonal_d > 0 && period == 0 {
        return Err(SeriesError::InvalidArgument(
            "seasonal differencing requires a positive period".into(),
        ));
    }
    let needed = d + seasonal_d * period;
    if series.len() <= needed {
        return Err(SeriesError::SeriesTooShort {
            needed,
            actual: series.len(),
        });
    }

    let mut values = series.values.clone();
    let mut pivots = Vec::with_capacity(needed);
    for _ in 0..d {
        pivots.push(values[0]);
        values = values.windows(2).map(|w| w[1] - w[0]).collect();
    }
    for _ in 0..seasonal_d {
        pivots.extend_from_slice(&values[..period]);
        values = (period..values.len())
            .map(|i| values[i] - values[i - period])
            .collect();
    }

    let start = series.start.plus_months(needed as i64);
    Ok((
        TimeSeries::new(start, values, series.name.clone())?,
        pivots,
    ))
}

/// Exact inverse of [`difference`]: seasonal passes are undone first (most
/// recently applied), then the regular ones, consuming `pivots` from the
/// back.
pub fn undifference(
    diffed: &TimeSeries,
    pivots: &[f64],
    d: usize,
    seasonal_d: usize,
    period: usize,
) -> Result<TimeSeries, SeriesError> {
    if seasonal_d > 0 && period == 0 {
        return Err(SeriesError::InvalidArgument(
            "seasonal differencing requires a positive period".into(),
        ));
    }
    let expected = d + seasonal_d * period;
    if pivots.len() != expected {
        return Err(SeriesError::PivotMismatch {
            expected,
            actual: pivots.len(),
        });
    }

    let mut values = diffed.values.clone();
    let mut remaining = pivots;
    for _ in 0..seasonal_d {
        let (rest, chunk) = remaining.split_at(remaining.len() - period);
        remaining = rest;
        let mut rebuilt = Vec::with_capacity(values.len() + period);
        rebuilt.extend_from_slice(chunk);
        for (i, v) in values.iter().enumerate() {
            let prev = rebuilt[i];
            rebuilt.push(prev + v);
        }
        values = rebuilt;
    }
    for _ in 0..d {
        let (rest, pivot) = remaining.split_at(remaining.len() - 1);
        remaining = rest;
        let mut rebuilt = Vec::with_capacity(values.len() + 1);
        rebuilt.push(pivot[0]);
        for (i, v) in values.iter().enumerate() {
            let prev = rebuilt[i];
            rebuilt.push(prev + v);
        }
        values = rebuilt;
    }

    let start = diffed.start.plus_months(-(expected as i64));
    TimeSeries::new(start, values, diffed.name.clone())
}

fn autocovariances(values: &[f64], max_lag: usize) -> Vec<f64> {
    // Biased (divide-by-n) estimator: keeps the autocovariance sequence
    // positive semidefinite, which Durbin-Levinson relies on.
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    (0..=max_lag)
        .map(|k| {
            (0..n - k)
                .map(|t| (values[t] - mean) * (values[t + k] - mean))
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

/// Sample autocorrelations for lags `0..=max_lag`; entry 0 is exactly 1.
pub fn acf(series: &TimeSeries, max_lag: usize) -> Result<Vec<f64>, SeriesError> {
    if max_lag >= series.len() {
        return Err(SeriesError::LagTooLarge {
            lag: max_lag,
            len: series.len(),
        });
    }
    let cov = autocovariances(series.values(), max_lag);
    if cov[0] <= 0.0 {
        return Err(SeriesError::ConstantSeries);
    }
    let mut r: Vec<f64> = cov.iter().map(|c| c / cov[0]).collect();
    r[0] = 1.0;
    Ok(r)
}

/// Partial autocorrelations for lags `0..=max_lag` via the
/// Durbin-Levinson recursion on the sample acf; entry 0 is 1 and entry 1
/// equals `acf[1]`.
pub fn pacf(series: &TimeSeries, max_lag: usize) -> Result<Vec<f64>, SeriesError> {
    if 2 * max_lag >= series.len() {
        return Err(SeriesError::LagTooLarge {
            lag: max_lag,
            len: series.len(),
        });
    }
    let rho = acf(series, max_lag)?;

    let mut out = vec![1.0; max_lag + 1];
    if max_lag == 0 {
        return Ok(out);
    }
    let mut phi_prev = vec![rho[1]];
    out[1] = rho[1];
    for k in 2..=max_lag {
        let num = rho[k]
            - (1..k)
                .map(|j| phi_prev[j - 1] * rho[k - j])
                .sum::<f64>();
        let den = 1.0
            - (1..k)
                .map(|j| phi_prev[j - 1] * rho[j])
                .sum::<f64>();
        if den.abs() < 1e-14 {
            // Perfectly predictable series: remaining partials carry no
            // information.
            for slot in out.iter_mut().skip(k) {
                *slot = 0.0;
            }
            return Ok(out);
        }
        let phi_kk = num / den;
        let mut phi_next = vec![0.0; k];
        for j in 1..k {
            phi_next[j - 1] = phi_prev[j - 1] - phi_kk * phi_prev[k - j - 1];
        }
        phi_next[k - 1] = phi_kk;
        out[k] = phi_kk;
        phi_prev = phi_next;
    }
    Ok(out)
}

/// Outcome of the constant-only augmented Dickey-Fuller regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdfOutcome {
    /// t-statistic of the lagged-level coefficient.
    pub statistic: f64,
    /// Unit root rejected at the 5% level (statistic < -2.86).
    pub reject_unit_root: bool,
    /// Number of lagged differences included, floor(cbrt(n - 1)).
    pub lags: usize,
}

/// 5% MacKinnon asymptotic critical value for the constant-only case.
pub const ADF_CRITICAL_5PCT: f64 = -2.86;

/// Augmented Dickey-Fuller test with a constant term:
/// dy_t = c + rho*y_{t-1} + sum b_i dy_{t-i} + e_t, lag order fixed at
/// floor(cbrt(n - 1)). Informational diagnostic only.
pub fn adf_statistic(series: &TimeSeries) -> Result<AdfOutcome, SeriesError> {
    let n = series.len();
    if n < 25 {
        return Err(SeriesError::SeriesTooShort {
            needed: 24,
            actual: n,
        });
    }
    let y = series.values();
    let mean = y.iter().sum::<f64>() / n as f64;
    if y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() <= 0.0 {
        return Err(SeriesError::ConstantSeries);
    }

    let k = ((n - 1) as f64).cbrt().floor() as usize;
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();

    // Rows are indexed by the response dy[t], t = k..dy.len().
    let nobs = dy.len() - k;
    let ncols = 2 + k;
    let mut design = nalgebra::DMatrix::zeros(nobs, ncols);
    let mut resp = nalgebra::DVector::zeros(nobs);
    for (row, t) in (k..dy.len()).enumerate() {
        design[(row, 0)] = 1.0;
        design[(row, 1)] = y[t];
        for i in 1..=k {
            design[(row, 1 + i)] = dy[t - i];
        }
        resp[row] = dy[t];
    }

    let xtx = design.transpose() * &design;
    let xty = design.transpose() * &resp;
    let inv = xtx
        .try_inverse()
        .ok_or(SeriesError::ConstantSeries)?;
    let beta = &inv * &xty;
    let fitted = &design * &beta;
    let rss = (&resp - &fitted).norm_squared();
    let dof = nobs.saturating_sub(ncols).max(1);
    let sigma2 = rss / dof as f64;
    let se = (sigma2 * inv[(1, 1)]).sqrt();
    let statistic = beta[1] / se;

    Ok(AdfOutcome {
        statistic,
        reject_unit_root: statistic < ADF_CRITICAL_5PCT,
        lags: k,
    })
}

/// Affinely map the series so its minimum hits `lo` and its maximum `hi`.
pub fn scale_to_range(series: &TimeSeries, lo: f64, hi: f64) -> Result<TimeSeries, SeriesError> {
    if lo >= hi || !lo.is_finite() || !hi.is_finite() {
        return Err(SeriesError::InvalidArgument(format!(
            "target range [{lo}, {hi}] is empty"
        )));
    }
    let min = series.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = series
        .values
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if max - min <= 0.0 {
        return Err(SeriesError::ConstantSeries);
    }
    let scaled = series
        .values
        .iter()
        .map(|v| lo + (v - min) / (max - min) * (hi - lo))
        .collect();
    TimeSeries::new(series.start, scaled, series.name.clone())
}

/// Frame the series for one-step-ahead supervised learning with `p` lags.
pub fn make_supervised(series: &TimeSeries, p: usize) -> Result<SupervisedFrame, SeriesError> {
    if p == 0 {
        return Err(SeriesError::InvalidArgument(
            "lag count must be positive".into(),
        ));
    }
    if series.len() <= p {
        return Err(SeriesError::SeriesTooShort {
            needed: p,
            actual: series.len(),
        });
    }
    let v = series.values();
    let inputs = (0..v.len() - p).map(|i| v[i..i + p].to_vec()).collect();
    let targets = v[p..].to_vec();
    Ok(SupervisedFrame { inputs, targets })
}

/// Split off the last `n_test` observations; concatenating the two parts
/// restores the original series.
pub fn split_train_test(
    series: &TimeSeries,
    n_test: usize,
) -> Result<(TimeSeries, TimeSeries), SeriesError> {
    if n_test == 0 || n_test >= series.len() {
        return Err(SeriesError::SplitTooLarge {
            n_test,
            len: series.len(),
        });
    }
    let split = series.len() - n_test;
    let train = TimeSeries::new(
        series.start,
        series.values[..split].to_vec(),
        series.name.clone(),
    )?;
    let test = TimeSeries::new(
        series.stamp_at(split),
        series.values[split..].to_vec(),
        series.name.clone(),
    )?;
    Ok((train, test))
}
