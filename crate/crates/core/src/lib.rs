//! Forecasting engine for monthly count series: ARIMA/SARIMA/SARIMAX
//! estimated by conditional sum of squares, epsilon-insensitive support
//! vector regression solved by SMO, an additive hybrid
//! trend/seasonality/AR-network model trained under Huber loss, and a
//! rolling one-step evaluation harness comparing them on a common split.

pub mod arima;
pub mod eval;
pub mod hybrid;
pub mod reference;
pub mod series;
pub mod svr;

pub use series::{MonthStamp, SeriesError, SupervisedFrame, TimeSeries};
