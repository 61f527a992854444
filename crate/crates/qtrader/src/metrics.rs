//! Backtest evaluation metrics computed from an equity curve.
//!
//! Conventions: daily returns are simple percent changes; arithmetic return
//! is their sum; variance is the population variance in percent squared;
//! Sharpe is daily and unannualized with zero risk-free rate; VaR is the
//! historical 95% one-day loss as a positive percent; volatility is the
//! annualized (sqrt 252) standard deviation of daily percent returns.

use thiserror::Error;

use crate::market_data::{MarketSeries, Segment};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("equity curve needs at least 2 points, got {0}")]
    TooShort(usize),
    #[error("equity curve contains a non-positive value at index {0}")]
    NonPositive(usize),
    #[error("segment is empty")]
    EmptySegment,
}

/// The full metric table for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub arithmetic_return: f64,
    pub avg_daily_return: f64,
    pub daily_return_variance: f64,
    pub time_weighted_return: f64,
    pub total_return: f64,
    pub sharpe: f64,
    pub var_95: f64,
    pub volatility: f64,
    pub initial_investment: f64,
    pub final_value: f64,
    pub equity_curve: Vec<f64>,
    pub daily_returns: Vec<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Linear-interpolation percentile of unsorted data, q in [0, 1].
fn percentile(xs: &[f64], q: f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Compute the full report from a per-day equity curve. `equity[0]` is the
/// starting value; `initial` is the cash the run began with.
pub fn compute_report(equity: &[f64], initial: f64) -> Result<BacktestReport, MetricsError> {
    if equity.len() < 2 {
        return Err(MetricsError::TooShort(equity.len()));
    }
    if let Some(i) = equity.iter().position(|&v| !(v > 0.0)) {
        return Err(MetricsError::NonPositive(i));
    }
    let daily_returns: Vec<f64> = equity
        .windows(2)
        .map(|w| 100.0 * (w[1] / w[0] - 1.0))
        .collect();
    let n = daily_returns.len() as f64;
    let avg = mean(&daily_returns);
    let variance = population_variance(&daily_returns);
    let std = variance.sqrt();
    let final_value = *equity.last().unwrap();
    let growth = final_value / equity[0];
    Ok(BacktestReport {
        arithmetic_return: daily_returns.iter().sum(),
        avg_daily_return: avg,
        daily_return_variance: variance,
        time_weighted_return: growth.powf(1.0 / n) - 1.0,
        total_return: 100.0 * (final_value / initial - 1.0),
        sharpe: if std > 0.0 { avg / std } else { 0.0 },
        var_95: -percentile(&daily_returns, 0.05),
        volatility: std * 252f64.sqrt(),
        initial_investment: initial,
        final_value,
        equity_curve: equity.to_vec(),
        daily_returns,
    })
}

/// Buy-and-hold baseline: full exposure from the first candle of the segment
/// to the last, equity proportional to the close series.
pub fn buy_and_hold_report(
    series: &MarketSeries,
    segment: Segment,
    initial: f64,
) -> Result<BacktestReport, MetricsError> {
    let candles = match segment {
        Segment::Train => series.train(),
        Segment::Test => series.test(),
    };
    if candles.is_empty() {
        return Err(MetricsError::EmptySegment);
    }
    let first_close = candles[0].close;
    let equity: Vec<f64> = candles
        .iter()
        .map(|c| initial * c.close / first_close)
        .collect();
    compute_report(&equity, initial)
}

/// `key: value` text serialization of a report (curve omitted).
pub fn report_to_text(r: &BacktestReport) -> String {
    format!(
        "arithmetic_return: {:.6}\n\
         avg_daily_return: {:.6}\n\
         daily_return_variance: {:.6}\n\
         time_weighted_return: {:.8}\n\
         total_return: {:.6}\n\
         sharpe_ratio: {:.6}\n\
         var_95: {:.6}\n\
         volatility: {:.6}\n\
         initial_investment: {:.2}\n\
         final_portfolio_value: {:.4}\n",
        r.arithmetic_return,
        r.avg_daily_return,
        r.daily_return_variance,
        r.time_weighted_return,
        r.total_return,
        r.sharpe,
        r.var_95,
        r.volatility,
        r.initial_investment,
        r.final_value,
    )
}

pub const ROW_HEADER: &str = "agent,arithmetic_return,avg_daily_return,daily_return_variance,time_weighted_return,total_return,sharpe_ratio,var_95,volatility,initial_investment,final_portfolio_value";

/// One delimited row for table aggregation across runs.
pub fn report_to_row(agent: &str, r: &BacktestReport) -> String {
    format!(
        "{agent},{:.6},{:.6},{:.6},{:.8},{:.6},{:.6},{:.6},{:.6},{:.2},{:.4}",
        r.arithmetic_return,
        r.avg_daily_return,
        r.daily_return_variance,
        r.time_weighted_return,
        r.total_return,
        r.sharpe,
        r.var_95,
        r.volatility,
        r.initial_investment,
        r.final_value,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn total_return_convention() {
        // initial 1000, final 9525.5 -> about 852.6%
        let total: f64 = 100.0 * (9525.5 / 1000.0 - 1.0);
        assert!((total - 852.55).abs() < 0.01);
        let r = compute_report(&[1000.0, 5000.0, 9525.5], 1000.0).unwrap();
        assert!((r.total_return - total).abs() < 1e-9);
    }

    #[test]
    fn constant_curve_all_zero() {
        let r = compute_report(&[1000.0; 10], 1000.0).unwrap();
        assert_eq!(r.arithmetic_return, 0.0);
        assert_eq!(r.avg_daily_return, 0.0);
        assert_eq!(r.daily_return_variance, 0.0);
        assert_eq!(r.total_return, 0.0);
        assert_eq!(r.sharpe, 0.0);
        assert_eq!(r.volatility, 0.0);
        assert_eq!(r.time_weighted_return, 0.0);
    }

    #[test]
    fn hand_curve_example() {
        // [1000, 1100, 990]: r = (10%, -10%); arithmetic 0, total -1,
        // avg 0, population variance 100.
        let r = compute_report(&[1000.0, 1100.0, 990.0], 1000.0).unwrap();
        assert!(r.arithmetic_return.abs() < 1e-9);
        assert!((r.total_return + 1.0).abs() < 1e-9);
        assert!(r.avg_daily_return.abs() < 1e-9);
        assert!((r.daily_return_variance - 100.0).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            compute_report(&[1000.0], 1000.0),
            Err(MetricsError::TooShort(1))
        ));
        assert!(matches!(
            compute_report(&[1000.0, -5.0], 1000.0),
            Err(MetricsError::NonPositive(1))
        ));
    }

    #[test]
    fn reconstruction_identity() {
        let curve = [1000.0, 1020.0, 990.5, 1130.25, 1127.0];
        let r = compute_report(&curve, 1000.0).unwrap();
        let mut v = 1000.0;
        for dr in &r.daily_returns {
            v *= 1.0 + dr / 100.0;
        }
        assert!((v - r.final_value).abs() < 1e-6 * r.final_value);
        // TWR consistency
        let n = r.daily_returns.len() as f64;
        assert!(((1.0 + r.time_weighted_return).powf(n) - r.final_value / curve[0]).abs() < 1e-9);
        // sharpe * std = mean
        let std = r.daily_return_variance.sqrt();
        assert!((r.sharpe * std - r.avg_daily_return).abs() < 1e-9);
    }

    #[test]
    fn var_is_positive_loss() {
        // 20 returns, exactly one bad day of -5%: the 5th percentile sits
        // between the worst and second-worst return.
        let mut curve = vec![1000.0];
        for i in 0..20 {
            let r = if i == 7 { -0.05 } else { 0.002 };
            let last = *curve.last().unwrap();
            curve.push(last * (1.0 + r));
        }
        let r = compute_report(&curve, 1000.0).unwrap();
        assert!(r.var_95 > 0.0);
        assert!(r.var_95 <= 5.0 + 1e-9);
    }

    proptest! {
        #[test]
        fn scale_invariance(k in 0.01..100.0f64) {
            let curve = [1000.0, 1030.0, 1010.0, 1044.3, 995.0];
            let scaled: Vec<f64> = curve.iter().map(|v| v * k).collect();
            let a = compute_report(&curve, 1000.0).unwrap();
            let b = compute_report(&scaled, 1000.0 * k).unwrap();
            for (x, y) in [
                (a.arithmetic_return, b.arithmetic_return),
                (a.avg_daily_return, b.avg_daily_return),
                (a.daily_return_variance, b.daily_return_variance),
                (a.time_weighted_return, b.time_weighted_return),
                (a.total_return, b.total_return),
                (a.sharpe, b.sharpe),
                (a.var_95, b.var_95),
                (a.volatility, b.volatility),
            ] {
                prop_assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn buy_and_hold_flat_and_doubling() {
        use crate::market_data::{Candle, MarketSeries};
        use chrono::NaiveDate;
        let mk = |closes: &[f64]| {
            let candles: Vec<Candle> = closes
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    Candle::new(
                        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
                            + chrono::Duration::days(i as i64),
                        c,
                        c * 1.001,
                        c * 0.999,
                        c,
                        None,
                    )
                    .unwrap()
                })
                .collect();
            MarketSeries::new("T", candles, 2).unwrap()
        };
        let flat = mk(&[100.0, 100.0, 100.0, 100.0, 100.0]);
        let r = buy_and_hold_report(&flat, Segment::Test, 1000.0).unwrap();
        assert_eq!(r.total_return, 0.0);

        let doubling = mk(&[50.0, 80.0, 100.0, 150.0, 200.0]);
        let r = buy_and_hold_report(&doubling, Segment::Test, 1000.0).unwrap();
        assert!((r.total_return - 100.0).abs() < 1e-9);
    }
}
