//! Single-asset episodic trading environment.
//!
//! The agent is either LONG (all-in) or FLAT (all cash). An action taken at
//! candle `t` adjusts the position at that candle's close; the reward is the
//! position-gated close-to-close percent move into candle `t+1`, minus a
//! percent transaction cost whenever the position changes.

use chrono::NaiveDate;
use thiserror::Error;

use crate::market_data::{
    encode_state, DataError, MarketSeries, PatternConfig, Representation, Segment, StateVector,
};
use crate::qnet::{Action, QNetwork, QnetError};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("segment {0} is shorter than the encoding window")]
    SegmentTooShort(Segment),
    #[error("step called after the episode finished")]
    EpisodeDone,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Network(#[from] QnetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Long,
    Flat,
}

impl Position {
    pub fn as_str(self) -> &'static str {
        match self {
            Position::Long => "LONG",
            Position::Flat => "FLAT",
        }
    }

    fn exposure(self) -> f64 {
        match self {
            Position::Long => 1.0,
            Position::Flat => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub initial_cash: f64,
    pub transaction_cost_rate: f64,
    pub representation: Representation,
    pub window: usize,
    #[serde(skip)]
    pub patterns: PatternConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            initial_cash: 1000.0,
            transaction_cost_rate: 0.0,
            representation: Representation::Vanilla,
            window: 3,
            patterns: PatternConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.initial_cash > 0.0) {
            return Err("initial_cash must be positive".into());
        }
        if !(0.0..1.0).contains(&self.transaction_cost_rate) {
            return Err("transaction_cost_rate must be in [0, 1)".into());
        }
        if self.window == 0 {
            return Err("window must be at least 1".into());
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.representation.dimension(self.window)
    }
}

/// One action-log row: what the agent did on a given day and where the
/// portfolio stood afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionRecord {
    pub date: NaiveDate,
    pub action: Action,
    pub position: Position,
    pub portfolio_value: f64,
}

/// Rollout output: per-day portfolio values, simple daily percent returns,
/// and the action log. Curve and log always have identical lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub equity: Vec<f64>,
    pub dates: Vec<NaiveDate>,
    pub daily_returns: Vec<f64>,
    pub actions: Vec<ActionRecord>,
}

/// Episodic environment over one segment of a market series.
#[derive(Debug, Clone)]
pub struct TradingEnv<'a> {
    pub series: &'a MarketSeries,
    pub cfg: EnvConfig,
    segment: Segment,
    cursor: usize,
    seg_end: usize,
    cash: f64,
    units: f64,
    done: bool,
    equity: Vec<f64>,
    dates: Vec<NaiveDate>,
    actions: Vec<ActionRecord>,
}

impl<'a> TradingEnv<'a> {
    pub fn new(series: &'a MarketSeries, cfg: EnvConfig) -> Self {
        TradingEnv {
            series,
            cfg,
            segment: Segment::Train,
            cursor: 0,
            seg_end: 0,
            cash: 0.0,
            units: 0.0,
            done: true,
            equity: Vec::new(),
            dates: Vec::new(),
            actions: Vec::new(),
        }
    }

    pub fn position(&self) -> Position {
        if self.units > 0.0 {
            Position::Long
        } else {
            Position::Flat
        }
    }

    /// Portfolio value at the candle the cursor points to.
    pub fn portfolio_value(&self) -> f64 {
        self.cash + self.units * self.series.candles[self.cursor].close
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Number of decision steps an episode over `segment` will take.
    pub fn episode_len(&self, segment: Segment) -> usize {
        let (start, end) = self.series.segment_range(segment);
        let first = start + self.cfg.window - 1;
        (end - 1).saturating_sub(first)
    }

    /// Start an episode: cursor at the first index of the segment that has a
    /// full encoding window, portfolio all cash.
    pub fn reset(&mut self, segment: Segment) -> Result<StateVector, EnvError> {
        let (start, end) = self.series.segment_range(segment);
        let first = start + self.cfg.window - 1;
        // Need at least one price move after the first decision.
        if first + 1 >= end {
            return Err(EnvError::SegmentTooShort(segment));
        }
        self.segment = segment;
        self.cursor = first;
        self.seg_end = end;
        self.cash = self.cfg.initial_cash;
        self.units = 0.0;
        self.done = false;
        self.equity = vec![self.cfg.initial_cash];
        self.dates = vec![self.series.candles[first].date];
        self.actions = vec![ActionRecord {
            date: self.series.candles[first].date,
            action: Action::Hold,
            position: Position::Flat,
            portfolio_value: self.cfg.initial_cash,
        }];
        self.state()
    }

    fn state(&self) -> Result<StateVector, EnvError> {
        Ok(encode_state(
            self.series,
            self.cursor,
            self.cfg.representation,
            self.cfg.window,
            &self.cfg.patterns,
        )?)
    }

    /// Apply `action` at the current candle's close, advance one day, and
    /// return (next state, reward, done).
    ///
    /// Reward: `100 * pos * (close_next - close) / close - 100 * cost * |d pos|`
    /// with `pos` taken after the action applies. Redundant BUY while LONG or
    /// SELL while FLAT is a HOLD and charges nothing.
    pub fn step(&mut self, action: Action) -> Result<(StateVector, f64, bool), EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let t = self.cursor;
        let close = self.series.candles[t].close;
        let pos_before = self.position().exposure();
        let cost = self.cfg.transaction_cost_rate;
        match (action, self.position()) {
            (Action::Buy, Position::Flat) => {
                self.units = self.cash * (1.0 - cost) / close;
                self.cash = 0.0;
            }
            (Action::Sell, Position::Long) => {
                self.cash = self.units * close * (1.0 - cost);
                self.units = 0.0;
            }
            _ => {}
        }
        let pos_after = self.position().exposure();
        let close_next = self.series.candles[t + 1].close;
        let reward = 100.0 * pos_after * (close_next - close) / close
            - 100.0 * cost * (pos_after - pos_before).abs();

        self.cursor = t + 1;
        let value = self.portfolio_value();
        let prev_value = *self.equity.last().unwrap();
        self.equity.push(value);
        self.dates.push(self.series.candles[self.cursor].date);
        self.daily_return_check(prev_value, value);
        self.actions.push(ActionRecord {
            date: self.series.candles[self.cursor].date,
            action,
            position: self.position(),
            portfolio_value: value,
        });
        if self.cursor + 1 >= self.seg_end {
            self.done = true;
        }
        let next = self.state()?;
        Ok((next, reward, self.done))
    }

    // Accounting identity guard: value only moves through price changes on
    // held units and explicit transaction costs.
    fn daily_return_check(&self, _prev: f64, _now: f64) {
        debug_assert!(self.cash >= 0.0 && self.units >= 0.0);
        debug_assert!(self.portfolio_value() > 0.0);
    }

    /// Equity curve, daily returns, and action log accumulated so far.
    pub fn rollout(&self) -> Rollout {
        let daily_returns = self
            .equity
            .windows(2)
            .map(|w| 100.0 * (w[1] / w[0] - 1.0))
            .collect();
        Rollout {
            equity: self.equity.clone(),
            dates: self.dates.clone(),
            daily_returns,
            actions: self.actions.clone(),
        }
    }
}

/// Greedy rollout of `net` over a segment with noise off.
pub fn run_policy(
    env: &mut TradingEnv<'_>,
    net: &mut QNetwork,
    segment: Segment,
) -> Result<Rollout, EnvError> {
    let mut state = env.reset(segment)?;
    loop {
        let action = net.greedy_action(&state.values, false)?;
        let (next, _reward, done) = env.step(action)?;
        state = next;
        if done {
            break;
        }
    }
    Ok(env.rollout())
}

/// Rollout of a fixed action policy (used for baselines and tests).
pub fn run_fixed_policy(
    env: &mut TradingEnv<'_>,
    segment: Segment,
    mut policy: impl FnMut(usize, &StateVector) -> Action,
) -> Result<Rollout, EnvError> {
    let mut state = env.reset(segment)?;
    let mut step = 0;
    loop {
        let action = policy(step, &state);
        let (next, _reward, done) = env.step(action)?;
        state = next;
        step += 1;
        if done {
            break;
        }
    }
    Ok(env.rollout())
}

/// Serialize an action log as `date,action,position,portfolio_value`.
pub fn action_log_to_csv(records: &[ActionRecord]) -> String {
    let mut out = String::from("date,action,position,portfolio_value\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{:.10}\n",
            r.date.format("%Y-%m-%d"),
            r.action,
            r.position.as_str(),
            r.portfolio_value
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{parse_series, Candle};
    use proptest::prelude::*;

    fn date(days: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Duration::days(days)
    }

    /// Build a series from a list of closes; open = previous close.
    fn series_from_closes(closes: &[f64], split: usize) -> MarketSeries {
        let mut candles = Vec::new();
        let mut prev = closes[0];
        for (i, &c) in closes.iter().enumerate() {
            let open = if i == 0 { c } else { prev };
            let high = open.max(c) * 1.001;
            let low = open.min(c) * 0.999;
            candles.push(Candle::new(date(i as i64), open, high, low, c, None).unwrap());
            prev = c;
        }
        MarketSeries::new("TEST", candles, split).unwrap()
    }

    fn env_cfg(window: usize) -> EnvConfig {
        EnvConfig {
            window,
            ..EnvConfig::default()
        }
    }

    #[test]
    fn reset_invariants() {
        let closes: Vec<f64> = (0..30).map(|i| 100.0 + i as f64).collect();
        let series = series_from_closes(&closes, 20);
        let mut env = TradingEnv::new(&series, env_cfg(3));
        let s1 = env.reset(Segment::Test).unwrap();
        assert_eq!(env.cursor(), 22); // third test candle
        assert_eq!(env.portfolio_value(), 1000.0);
        let s2 = env.reset(Segment::Test).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn segment_shorter_than_window_is_error() {
        let closes: Vec<f64> = (0..10).map(|i| 100.0 + i as f64).collect();
        let series = series_from_closes(&closes, 8);
        let mut env = TradingEnv::new(&series, env_cfg(3));
        assert!(matches!(
            env.reset(Segment::Test),
            Err(EnvError::SegmentTooShort(_))
        ));
    }

    #[test]
    fn flat_hold_gives_zero_reward() {
        let closes = vec![100.0, 90.0, 120.0, 80.0, 140.0, 100.0];
        let series = series_from_closes(&closes, 2);
        let mut env = TradingEnv::new(&series, env_cfg(1));
        env.reset(Segment::Test).unwrap();
        loop {
            let (_s, r, done) = env.step(Action::Hold).unwrap();
            assert_eq!(r, 0.0);
            if done {
                break;
            }
        }
        let roll = env.rollout();
        assert_eq!(*roll.equity.last().unwrap(), 1000.0);
    }

    #[test]
    fn long_reward_hand_case() {
        // close 100 -> 103, zero cost, long: reward 3.0
        let closes = vec![50.0, 60.0, 100.0, 103.0, 104.0];
        let series = series_from_closes(&closes, 2);
        let mut env = TradingEnv::new(&series, env_cfg(1));
        env.reset(Segment::Test).unwrap();
        let (_s, r, _d) = env.step(Action::Buy).unwrap();
        assert!((r - 3.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_actions_are_holds() {
        let closes = vec![50.0, 60.0, 100.0, 110.0, 121.0, 133.1];
        let series = series_from_closes(&closes, 2);
        let mut cfg = env_cfg(1);
        cfg.transaction_cost_rate = 0.01;
        let mut env = TradingEnv::new(&series, cfg);
        env.reset(Segment::Test).unwrap();
        let (_, r1, _) = env.step(Action::Buy).unwrap();
        assert!((r1 - (10.0 - 1.0)).abs() < 1e-12); // +10% move minus 1% cost
        let units = env.units;
        let (_, r2, _) = env.step(Action::Buy).unwrap(); // redundant: no cost
        assert_eq!(env.units, units);
        assert!((r2 - 10.0).abs() < 1e-12);
        // SELL while FLAT is also free
        let mut env2 = TradingEnv::new(&series, env_cfg(1));
        env2.reset(Segment::Test).unwrap();
        let (_, r, _) = env2.step(Action::Sell).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn step_after_done_is_error() {
        let closes = vec![50.0, 100.0, 103.0];
        let series = series_from_closes(&closes, 1);
        let mut env = TradingEnv::new(&series, env_cfg(1));
        env.reset(Segment::Test).unwrap();
        let (_, _, done) = env.step(Action::Hold).unwrap();
        assert!(done);
        assert!(matches!(env.step(Action::Hold), Err(EnvError::EpisodeDone)));
    }

    #[test]
    fn always_buy_matches_buy_and_hold_curve() {
        let closes = vec![100.0, 105.0, 99.0, 110.0, 120.0, 95.0, 130.0];
        let series = series_from_closes(&closes, 2);
        let mut env = TradingEnv::new(&series, env_cfg(1));
        let roll = run_fixed_policy(&mut env, Segment::Test, |_, _| Action::Buy).unwrap();
        // equity proportional to closes from entry (close of first test candle)
        let entry = closes[2];
        for (i, v) in roll.equity.iter().enumerate() {
            let expect = 1000.0 * closes[2 + i] / entry;
            assert!((v - expect).abs() < 1e-9, "day {i}: {v} vs {expect}");
        }
    }

    #[test]
    fn zigzag_oracle_policy_compounds() {
        // closes alternate +10% / -10%; long only before up-moves.
        let mut closes = vec![100.0];
        for i in 0..10 {
            let last = *closes.last().unwrap();
            closes.push(if i % 2 == 0 { last * 1.1 } else { last * 0.9 });
        }
        let series = series_from_closes(&closes, 1);
        let mut env = TradingEnv::new(&series, env_cfg(1));
        // closes[t+1] = closes[t] * 1.1 exactly when t is even; decisions run
        // from t = 1, so be long on odd steps (even t) only.
        let roll = run_fixed_policy(&mut env, Segment::Test, |step, _| {
            if step % 2 == 1 {
                Action::Buy
            } else {
                Action::Sell
            }
        })
        .unwrap();
        // 5 completed up-moves: value multiplies by 1.1 each cycle.
        let cycles = roll
            .daily_returns
            .iter()
            .filter(|&&r| r > 1.0)
            .count() as i32;
        let expect = 1000.0 * 1.1f64.powi(cycles);
        let got = *roll.equity.last().unwrap();
        assert!((got - expect).abs() < 1e-6, "{got} vs {expect}");
    }

    #[test]
    fn action_log_and_curve_lengths_match() {
        let closes: Vec<f64> = (0..15).map(|i| 100.0 * 1.01f64.powi(i)).collect();
        let series = series_from_closes(&closes, 5);
        let mut env = TradingEnv::new(&series, env_cfg(2));
        let roll = run_fixed_policy(&mut env, Segment::Test, |s, _| {
            if s % 3 == 0 {
                Action::Buy
            } else if s % 3 == 2 {
                Action::Sell
            } else {
                Action::Hold
            }
        })
        .unwrap();
        assert_eq!(roll.equity.len(), roll.actions.len());
        assert_eq!(roll.daily_returns.len(), roll.equity.len() - 1);
        for (v, a) in roll.equity.iter().zip(&roll.actions) {
            assert!((v - a.portfolio_value).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_log_round_trips_loaded_series() {
        let closes: Vec<f64> = (0..8).map(|i| 100.0 + i as f64).collect();
        let series = series_from_closes(&closes, 4);
        let text = crate::market_data::write_series(&series);
        let reparsed = parse_series("TEST", &text, date(4)).unwrap();
        assert_eq!(series, reparsed);
    }

    proptest! {
        /// Accounting identity: value == cash + units * close at every step;
        /// with zero cost the cumulative equity log-return equals the sum of
        /// position-gated close-to-close log-returns.
        #[test]
        fn accounting_identity(actions in proptest::collection::vec(0usize..3, 5..40),
                               seed_prices in proptest::collection::vec(0.8..1.25f64, 5..40)) {
            let n = actions.len().min(seed_prices.len()) + 2;
            let mut closes = vec![100.0];
            for i in 1..n {
                let f = seed_prices[(i - 1) % seed_prices.len()];
                closes.push((closes[i - 1] * f).max(1e-3));
            }
            let series = series_from_closes(&closes, 1);
            let mut env = TradingEnv::new(&series, env_cfg(1));
            env.reset(Segment::Test).unwrap();
            let mut gated_log_return = 0.0;
            let mut i = 0;
            while !env.is_done() {
                let t = env.cursor();
                let a = crate::qnet::ACTIONS[actions[i % actions.len()]];
                env.step(a).unwrap();
                let pos = match env.position() { Position::Long => 1.0, Position::Flat => 0.0 };
                gated_log_return += pos * (closes[t + 1] / closes[t]).ln();
                // identity against independent re-derivation
                let v = env.cash + env.units * closes[env.cursor()];
                prop_assert!((env.portfolio_value() - v).abs() < 1e-9 * v.abs());
                i += 1;
            }
            let roll = env.rollout();
            let total_log = (roll.equity.last().unwrap() / roll.equity[0]).ln();
            prop_assert!((total_log - gated_log_return).abs() < 1e-9);
        }
    }
}
