//! Seeded synthetic dataset generator shaped like a seasonal tourist
//! attraction: growing trend that steepens halfway through, a summer
//! peak each July/August, one spiked summer month, and a search-interest
//! regressor tracking the target on a 0..100 integer index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use tscast_core::series::{MonthStamp, TimeSeries};

use crate::ingest::DatasetBundle;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SynthError {
    #[error("synthetic generation needs at least 36 months, got {0}")]
    TooFewMonths(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub baseline: f64,
    /// Trend slope (visitors per month) before the break point.
    pub slope_early: f64,
    /// Steeper slope after the break point.
    pub slope_late: f64,
    /// Fraction of the span at which the trend steepens.
    pub break_frac: f64,
    /// Multiplier on the seasonal profile.
    pub seasonal_scale: f64,
    /// One summer month is lifted to roughly this times the surrounding
    /// peak level.
    pub spike_factor: f64,
    pub noise_sd: f64,
    /// Noise added to the search-interest regressor (index units).
    pub regressor_noise_sd: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            baseline: 3000.0,
            slope_early: 25.0,
            slope_late: 90.0,
            break_frac: 0.5,
            seasonal_scale: 1.0,
            spike_factor: 1.4,
            noise_sd: 600.0,
            regressor_noise_sd: 3.0,
        }
    }
}

/// Visitors per month added on top of the trend; peaks in July/August.
const SEASONAL_PROFILE: [f64; 12] = [
    400.0, 500.0, 900.0, 1500.0, 2600.0, 6500.0, 18000.0, 16500.0, 6000.0, 2200.0, 900.0, 500.0,
];

/// Generate a `visitors` target and a `google_trend` regressor starting
/// at 2010-01. Identical seeds and parameters produce identical bundles.
pub fn synth_dataset(
    seed: u64,
    n_months: usize,
    params: &SynthParams,
) -> Result<DatasetBundle, SynthError> {
    if n_months < 36 {
        return Err(SynthError::TooFewMonths(n_months));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, params.noise_sd.max(1e-9)).expect("valid sd");
    let reg_noise = Normal::new(0.0, params.regressor_noise_sd.max(1e-9)).expect("valid sd");

    let break_at = (n_months as f64 * params.break_frac) as usize;
    // The spiked month sits at the July three quarters into the span.
    let years = n_months / 12;
    let spike_index = 12 * ((years * 3) / 4) + 6;

    let mut values = Vec::with_capacity(n_months);
    for t in 0..n_months {
        let trend = if t < break_at {
            params.slope_early * t as f64
        } else {
            params.slope_early * break_at as f64 + params.slope_late * (t - break_at) as f64
        };
        let mut level =
            params.baseline + trend + params.seasonal_scale * SEASONAL_PROFILE[t % 12];
        if t == spike_index {
            level *= params.spike_factor;
        }
        let value: f64 = level + noise.sample(&mut rng);
        values.push(value.max(0.0).round());
    }

    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (max - min).max(1.0);
    let trend_index: Vec<f64> = values
        .iter()
        .map(|v| {
            let scaled = 3.0 + 94.0 * (v - min) / span + reg_noise.sample(&mut rng);
            scaled.clamp(0.0, 100.0).round()
        })
        .collect();

    let start = MonthStamp::new(2010, 1).expect("valid stamp");
    let target = TimeSeries::new(start, values, "visitors").expect("generated target is valid");
    let regressor =
        TimeSeries::new(start, trend_index, "google_trend").expect("generated regressor is valid");
    Ok(DatasetBundle::new(
        target,
        vec![regressor],
        format!("synthetic(seed={seed}, months={n_months})"),
    )
    .expect("generated bundle is aligned"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tscast_core::reference::pearson;

    #[test]
    fn july_and_august_lead_every_year() {
        for seed in [0u64, 7, 42] {
            let bundle = synth_dataset(seed, 168, &SynthParams::default()).unwrap();
            let v = bundle.target.values();
            for year in 0..14 {
                let months = &v[year * 12..(year + 1) * 12];
                let mut ranked: Vec<usize> = (0..12).collect();
                ranked.sort_by(|&a, &b| months[b].total_cmp(&months[a]));
                let top2 = [ranked[0], ranked[1]];
                assert!(
                    top2.contains(&6) && top2.contains(&7),
                    "seed {seed} year {year}: top months {top2:?}"
                );
            }
        }
    }

    #[test]
    fn regressor_tracks_the_target() {
        let bundle = synth_dataset(7, 168, &SynthParams::default()).unwrap();
        let corr = pearson(bundle.target.values(), bundle.regressors[0].values());
        assert!(corr > 0.8, "correlation {corr}");
        assert!(bundle.regressors[0]
            .values()
            .iter()
            .all(|v| (0.0..=100.0).contains(v) && v.fract() == 0.0));
        assert!(bundle.target.values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn same_seed_means_identical_bundles() {
        let a = synth_dataset(9, 60, &SynthParams::default()).unwrap();
        let b = synth_dataset(9, 60, &SynthParams::default()).unwrap();
        assert_eq!(a, b);
        let c = synth_dataset(10, 60, &SynthParams::default()).unwrap();
        assert_ne!(a.target.values(), c.target.values());
    }

    #[test]
    fn short_spans_are_rejected() {
        assert_eq!(
            synth_dataset(1, 35, &SynthParams::default()).unwrap_err(),
            SynthError::TooFewMonths(35)
        );
    }

    #[test]
    fn spike_month_dominates_its_neighbors() {
        let bundle = synth_dataset(7, 168, &SynthParams::default()).unwrap();
        let v = bundle.target.values();
        let spike = v[126]; // July of year 10
        let prev_july = v[114];
        let next_july = v[138];
        assert!(spike > 1.2 * prev_july, "{spike} vs {prev_july}");
        assert!(spike > 1.15 * next_july, "{spike} vs {next_july}");
    }
}
