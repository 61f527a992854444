//! Noisy dueling double-DQN trading agent over daily OHLC candles, with
//! prioritized replay, a deterministic training loop, backtest metrics,
//! and a reproducible CLI.

pub mod autodiff;
pub mod cli;
pub mod market_data;
pub mod metrics;
pub mod qnet;
pub mod replay;
pub mod trading_env;
pub mod trainer;
