//! OHLC ingestion, train/test splitting, and state encodings.
//!
//! A [`MarketSeries`] is an ordered list of daily candles with a split index
//! separating the training segment from the test segment. Candles can be
//! encoded into four agent-facing representations: a binary pattern vector,
//! raw normalized OHLC, shadow/body ratios, and a sliding OHLC window.

use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    MalformedRow { line: usize, msg: String },
    #[error("line {line}: invalid candle: {msg}")]
    InvalidCandle { line: usize, msg: String },
    #[error("line {line}: timestamp {date} is not strictly increasing")]
    NonMonotonicTimestamp { line: usize, date: NaiveDate },
    #[error("split date {0} is outside the series date range")]
    SplitOutOfRange(NaiveDate),
    #[error("split produces an empty {0} segment")]
    EmptySegment(&'static str),
    #[error("state index {index} out of range for {repr:?} (window {window})")]
    IndexOutOfRange {
        index: usize,
        repr: Representation,
        window: usize,
    },
}

/// One daily OHLC bar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candle {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: Option<f64>,
}

impl Candle {
    pub fn new(
        date: NaiveDate,
        open: f64,
        high: f64,
        low: f64,
        close: f64,
        volume: Option<f64>,
    ) -> Result<Self, String> {
        let c = Candle {
            date,
            open,
            high,
            low,
            close,
            volume,
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
        ] {
            if !p.is_finite() || p <= 0.0 {
                return Err(format!("{name} price {p} must be strictly positive"));
            }
        }
        if self.high < self.low {
            return Err(format!("high {} < low {}", self.high, self.low));
        }
        if self.low > self.open.min(self.close) {
            return Err(format!(
                "low {} above min(open, close) {}",
                self.low,
                self.open.min(self.close)
            ));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!(
                "high {} below max(open, close) {}",
                self.high,
                self.open.max(self.close)
            ));
        }
        if let Some(v) = self.volume {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("volume {v} must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn is_bullish(&self) -> bool {
        self.close >= self.open
    }
}

/// Shadow/body proportions of a candle: `upper + lower + body = 1` whenever
/// the bar has any range. A flat bar (high == low) carries no shape
/// information and maps to `(0, 0, 0)`.
pub fn candle_ratios(c: &Candle) -> (f64, f64, f64) {
    let range = c.high - c.low;
    if range == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let upper = (c.high - c.close.max(c.open)) / range;
    let lower = (c.close.min(c.open) - c.low) / range;
    let body = (c.close - c.open).abs() / range;
    (upper, lower, body)
}

/// The four state representations fed to the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Pattern,
    Vanilla,
    CandleRep,
    Windowed,
}

impl Representation {
    /// State dimension for a given window length (only `Windowed` uses it).
    pub fn dimension(&self, window: usize) -> usize {
        match self {
            Representation::Pattern => PATTERN_COUNT,
            Representation::Vanilla => 4,
            Representation::CandleRep => 4,
            Representation::Windowed => 4 * window,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Pattern => "pattern",
            Representation::Vanilla => "vanilla",
            Representation::CandleRep => "candlerep",
            Representation::Windowed => "windowed",
        }
    }

    pub const ALL: [Representation; 4] = [
        Representation::Pattern,
        Representation::Vanilla,
        Representation::CandleRep,
        Representation::Windowed,
    ];
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Representation::Pattern => "pattern",
            Representation::Vanilla => "vanilla",
            Representation::CandleRep => "candlerep",
            Representation::Windowed => "windowed",
        };
        f.write_str(s)
    }
}

/// Fixed-length encoding of recent market history.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub representation: Representation,
    pub values: Vec<f64>,
}

impl StateVector {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

/// Thresholds for the eight-rule candlestick pattern catalog.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternConfig {
    /// Body ratio below which a bar counts as a doji.
    pub doji_body: f64,
    /// Dominant-shadow ratio for hammer-family patterns.
    pub long_shadow: f64,
    /// Maximum body ratio for hammer-family patterns.
    pub small_body: f64,
    /// Maximum opposite-shadow ratio for hammer-family patterns.
    pub opposite_shadow: f64,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig {
            doji_body: 0.05,
            long_shadow: 0.6,
            small_body: 0.3,
            opposite_shadow: 0.1,
        }
    }
}

pub const PATTERN_COUNT: usize = 8;

pub const PATTERN_NAMES: [&str; PATTERN_COUNT] = [
    "doji",
    "hammer",
    "inverted_hammer",
    "shooting_star",
    "bullish_engulfing",
    "bearish_engulfing",
    "bullish_harami",
    "bearish_harami",
];

/// Evaluate the 8-pattern catalog on candle `c` with predecessor `prev`.
/// Rules are independent; several bits may fire on the same bar.
pub fn match_patterns(c: &Candle, prev: &Candle, cfg: &PatternConfig) -> [bool; PATTERN_COUNT] {
    let (upper, lower, body) = candle_ratios(c);
    let small = body < cfg.small_body;

    let doji = body > 0.0 && body < cfg.doji_body;
    let hammer = lower > cfg.long_shadow && small && upper < cfg.opposite_shadow;
    let inverted_hammer = upper > cfg.long_shadow
        && small
        && lower < cfg.opposite_shadow
        && !prev.is_bullish();
    let shooting_star = upper > cfg.long_shadow
        && small
        && lower < cfg.opposite_shadow
        && prev.is_bullish();

    let body_hi = c.open.max(c.close);
    let body_lo = c.open.min(c.close);
    let prev_hi = prev.open.max(prev.close);
    let prev_lo = prev.open.min(prev.close);

    let bullish_engulfing =
        c.is_bullish() && !prev.is_bullish() && body_hi > prev_hi && body_lo < prev_lo;
    let bearish_engulfing =
        !c.is_bullish() && prev.is_bullish() && body_hi > prev_hi && body_lo < prev_lo;
    let bullish_harami =
        c.is_bullish() && !prev.is_bullish() && body_hi < prev_hi && body_lo > prev_lo;
    let bearish_harami =
        !c.is_bullish() && prev.is_bullish() && body_hi < prev_hi && body_lo > prev_lo;

    [
        doji,
        hammer,
        inverted_hammer,
        shooting_star,
        bullish_engulfing,
        bearish_engulfing,
        bullish_harami,
        bearish_harami,
    ]
}

/// A single-asset daily series with a train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSeries {
    pub symbol: String,
    pub candles: Vec<Candle>,
    /// Index of the first test candle.
    pub split_index: usize,
}

impl MarketSeries {
    pub fn new(
        symbol: impl Into<String>,
        candles: Vec<Candle>,
        split_index: usize,
    ) -> Result<Self, DataError> {
        if split_index == 0 {
            return Err(DataError::EmptySegment("train"));
        }
        if split_index >= candles.len() {
            return Err(DataError::EmptySegment("test"));
        }
        Ok(MarketSeries {
            symbol: symbol.into(),
            candles,
            split_index,
        })
    }

    pub fn len(&self) -> usize {
        self.candles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candles.is_empty()
    }

    pub fn train(&self) -> &[Candle] {
        &self.candles[..self.split_index]
    }

    pub fn test(&self) -> &[Candle] {
        &self.candles[self.split_index..]
    }

    /// Global index range `[start, end)` of a segment.
    pub fn segment_range(&self, segment: Segment) -> (usize, usize) {
        match segment {
            Segment::Train => (0, self.split_index),
            Segment::Test => (self.split_index, self.candles.len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Train,
    Test,
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Segment::Train => "train",
            Segment::Test => "test",
        })
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y/%m/%d"))
        .ok()
}

/// Load a delimited OHLC file (`date,open,high,low,close[,volume]`, header
/// optional) and split it at the first candle dated on or after `split_date`.
pub fn load_series(path: impl AsRef<Path>, split_date: NaiveDate) -> Result<MarketSeries, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let symbol = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".to_string());
    let series = parse_series(&symbol, &text, split_date)?;
    Ok(series)
}

/// Parse series text; separated from I/O so tests can feed strings directly.
pub fn parse_series(
    symbol: &str,
    text: &str,
    split_date: NaiveDate,
) -> Result<MarketSeries, DataError> {
    let mut candles = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 5 || fields.len() > 7 {
            return Err(DataError::MalformedRow {
                line: line_no,
                msg: format!("expected 5-7 comma-separated fields, got {}", fields.len()),
            });
        }
        let date = match parse_date(fields[0]) {
            Some(d) => d,
            None => {
                // Header row: only tolerated as the very first non-empty line.
                if candles.is_empty() && i == first_content_line(text) {
                    continue;
                }
                return Err(DataError::MalformedRow {
                    line: line_no,
                    msg: format!("unparseable date '{}'", fields[0]),
                });
            }
        };
        let mut nums = [0.0f64; 4];
        for (j, slot) in nums.iter_mut().enumerate() {
            *slot = fields[j + 1].parse::<f64>().map_err(|_| DataError::MalformedRow {
                line: line_no,
                msg: format!("unparseable price '{}'", fields[j + 1]),
            })?;
        }
        let volume = if fields.len() >= 6 {
            Some(fields[5].parse::<f64>().map_err(|_| DataError::MalformedRow {
                line: line_no,
                msg: format!("unparseable volume '{}'", fields[5]),
            })?)
        } else {
            None
        };
        let candle = Candle::new(date, nums[0], nums[1], nums[2], nums[3], volume)
            .map_err(|msg| DataError::InvalidCandle { line: line_no, msg })?;
        if let Some(last) = candles.last() {
            let last: &Candle = last;
            if candle.date <= last.date {
                return Err(DataError::NonMonotonicTimestamp {
                    line: line_no,
                    date: candle.date,
                });
            }
        }
        candles.push(candle);
    }
    if candles.is_empty() {
        return Err(DataError::EmptySegment("train"));
    }
    let first = candles.first().unwrap().date;
    let last = candles.last().unwrap().date;
    if split_date <= first || split_date > last {
        return Err(DataError::SplitOutOfRange(split_date));
    }
    let split_index = candles
        .iter()
        .position(|c| c.date >= split_date)
        .ok_or(DataError::SplitOutOfRange(split_date))?;
    MarketSeries::new(symbol, candles, split_index)
}

fn first_content_line(text: &str) -> usize {
    text.lines()
        .position(|l| !l.trim().is_empty())
        .unwrap_or(0)
}

/// Serialize the accepted rows back to canonical delimited text.
pub fn write_series(series: &MarketSeries) -> String {
    let mut out = String::new();
    for c in &series.candles {
        out.push_str(&c.date.format("%Y-%m-%d").to_string());
        match c.volume {
            Some(v) => out.push_str(&format!(
                ",{},{},{},{},{}\n",
                c.open, c.high, c.low, c.close, v
            )),
            None => out.push_str(&format!(",{},{},{},{}\n", c.open, c.high, c.low, c.close)),
        }
    }
    out
}

/// Normalizer for candle prices at index `t`: the previous close, or the
/// candle's own open at the start of the series.
fn price_normalizer(candles: &[Candle], t: usize) -> f64 {
    if t == 0 {
        candles[0].open
    } else {
        candles[t - 1].close
    }
}

/// Encode the state observed at global index `t` under `repr`.
///
/// All price-based encodings are scale-free: prices are divided by the close
/// of candle `t-1` (the first candle uses its own open).
pub fn encode_state(
    series: &MarketSeries,
    t: usize,
    repr: Representation,
    window: usize,
    patterns: &PatternConfig,
) -> Result<StateVector, DataError> {
    let candles = &series.candles;
    let min_t = if repr == Representation::Windowed {
        window.saturating_sub(1)
    } else {
        0
    };
    if t >= candles.len() || t < min_t {
        return Err(DataError::IndexOutOfRange {
            index: t,
            repr,
            window,
        });
    }
    let values = match repr {
        Representation::Pattern => {
            if t == 0 {
                vec![0.0; PATTERN_COUNT]
            } else {
                match_patterns(&candles[t], &candles[t - 1], patterns)
                    .iter()
                    .map(|&b| if b { 1.0 } else { 0.0 })
                    .collect()
            }
        }
        Representation::Vanilla => {
            let n = price_normalizer(candles, t);
            let c = &candles[t];
            vec![c.open / n, c.high / n, c.low / n, c.close / n]
        }
        Representation::CandleRep => {
            let (upper, lower, body) = candle_ratios(&candles[t]);
            let dir = if candles[t].is_bullish() { 1.0 } else { 0.0 };
            vec![upper, lower, body, dir]
        }
        Representation::Windowed => {
            let n = price_normalizer(candles, t);
            let mut v = Vec::with_capacity(4 * window);
            for i in (t + 1 - window)..=t {
                let c = &candles[i];
                v.extend_from_slice(&[c.open / n, c.high / n, c.low / n, c.close / n]);
            }
            v
        }
    };
    Ok(StateVector {
        representation: repr,
        values,
    })
}
