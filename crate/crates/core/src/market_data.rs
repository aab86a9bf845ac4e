//! Kline ingestion, resampling and two-leg alignment.
//!
//! Input files follow the exchange's public kline CSV dump: headerless rows of
//! `open_time_ms,open,high,low,close,volume,...` with any trailing columns
//! ignored. Prices stay exact decimals in [`Candle`]; the aligned series used
//! by the statistics is `f64`.

use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MINUTE_MS: i64 = 60_000;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed row at line {0}")]
    MalformedRow(usize),
    #[error("duplicate open_time {0}")]
    DuplicateTimestamp(i64),
    #[error("candle invariant violated at line {0}")]
    InvariantViolation(usize),
    #[error("resample factor {0} not supported (expected 3 or 5)")]
    BadFactor(usize),
    #[error("input candles are not strictly increasing in open_time")]
    UnsortedInput,
    #[error("resampling requires 1m input, got {0}")]
    NotOneMinute(Interval),
    #[error("legs have different intervals ({0} vs {1})")]
    IntervalMismatch(Interval, Interval),
    #[error("the two series share no usable timestamps")]
    EmptyIntersection,
    #[error("quantile {0} outside [0, 1)")]
    BadQuantile(f64),
    #[error("aligned series is inconsistent: {0}")]
    InconsistentSeries(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Interval {
    #[serde(rename = "1m")]
    M1,
    #[serde(rename = "3m")]
    M3,
    #[serde(rename = "5m")]
    M5,
}

impl Interval {
    pub fn minutes(self) -> i64 {
        match self {
            Interval::M1 => 1,
            Interval::M3 => 3,
            Interval::M5 => 5,
        }
    }

    pub fn millis(self) -> i64 {
        self.minutes() * MINUTE_MS
    }

    /// Bars per 365.25-day year.
    pub fn per_year(self) -> f64 {
        365.25 * 24.0 * 60.0 / self.minutes() as f64
    }

    fn from_factor(factor: usize) -> Option<Self> {
        match factor {
            3 => Some(Interval::M3),
            5 => Some(Interval::M5),
            _ => None,
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}m", self.minutes())
    }
}

impl FromStr for Interval {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1m" => Ok(Interval::M1),
            "3m" => Ok(Interval::M3),
            "5m" => Ok(Interval::M5),
            other => Err(format!("unknown interval '{other}' (expected 1m, 3m or 5m)")),
        }
    }
}

/// One OHLCV bar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candle {
    pub open_time: i64,
    pub open: Decimal,
    pub high: Decimal,
    pub low: Decimal,
    pub close: Decimal,
    pub volume: Decimal,
    pub interval: Interval,
}

impl Candle {
    pub fn is_valid(&self) -> bool {
        let zero = Decimal::ZERO;
        self.open > zero
            && self.close > zero
            && self.low > zero
            && self.low <= self.open.min(self.close)
            && self.high >= self.open.max(self.close)
            && self.volume >= zero
            && self.open_time.rem_euclid(self.interval.millis()) == 0
    }

    pub fn close_f64(&self) -> f64 {
        self.close.to_f64().unwrap_or(f64::NAN)
    }

    pub fn volume_f64(&self) -> f64 {
        self.volume.to_f64().unwrap_or(f64::NAN)
    }
}

/// Parses a kline CSV file.
pub fn parse_klines(path: impl AsRef<Path>, interval: Interval) -> Result<Vec<Candle>, DataError> {
    let file = fs::File::open(path)?;
    read_klines(BufReader::new(file), interval)
}

/// Parses kline CSV rows from any reader. Rows are sorted by `open_time`.
pub fn read_klines(reader: impl BufRead, interval: Interval) -> Result<Vec<Candle>, DataError> {
    let mut candles = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 6 {
            return Err(DataError::MalformedRow(line_no));
        }
        let open_time: i64 = fields[0].parse().map_err(|_| DataError::MalformedRow(line_no))?;
        let dec = |s: &str| Decimal::from_str(s).map_err(|_| DataError::MalformedRow(line_no));
        let candle = Candle {
            open_time,
            open: dec(fields[1])?,
            high: dec(fields[2])?,
            low: dec(fields[3])?,
            close: dec(fields[4])?,
            volume: dec(fields[5])?,
            interval,
        };
        if !candle.is_valid() {
            return Err(DataError::InvariantViolation(line_no));
        }
        candles.push(candle);
    }
    candles.sort_by_key(|c| c.open_time);
    if let Some(w) = candles.windows(2).find(|w| w[0].open_time == w[1].open_time) {
        return Err(DataError::DuplicateTimestamp(w[0].open_time));
    }
    Ok(candles)
}

/// Writes candles in the same headerless CSV layout [`read_klines`] accepts.
pub fn write_klines(mut out: impl Write, candles: &[Candle]) -> io::Result<()> {
    for c in candles {
        writeln!(out, "{},{},{},{},{},{}", c.open_time, c.open, c.high, c.low, c.close, c.volume)?;
    }
    Ok(())
}

fn check_sorted(candles: &[Candle]) -> Result<(), DataError> {
    if candles.windows(2).all(|w| w[0].open_time < w[1].open_time) {
        Ok(())
    } else {
        Err(DataError::UnsortedInput)
    }
}

/// Aggregates 1m candles into `factor`-minute bars aligned to factor-minute
/// boundaries. Groups with missing minutes are dropped, as is a partial
/// trailing group.
pub fn resample(candles: &[Candle], factor: usize) -> Result<Vec<Candle>, DataError> {
    let target = Interval::from_factor(factor).ok_or(DataError::BadFactor(factor))?;
    if let Some(c) = candles.iter().find(|c| c.interval != Interval::M1) {
        return Err(DataError::NotOneMinute(c.interval));
    }
    check_sorted(candles)?;

    let span = target.millis();
    let mut out = Vec::with_capacity(candles.len() / factor);
    for group in candles.chunk_by(|a, b| a.open_time.div_euclid(span) == b.open_time.div_euclid(span)) {
        if group.len() != factor {
            continue;
        }
        let first = &group[0];
        let last = &group[factor - 1];
        out.push(Candle {
            open_time: first.open_time.div_euclid(span) * span,
            open: first.open,
            high: group.iter().map(|c| c.high).max().unwrap_or(first.high),
            low: group.iter().map(|c| c.low).min().unwrap_or(first.low),
            close: last.close,
            volume: group.iter().map(|c| c.volume).sum(),
            interval: target,
        });
    }
    Ok(out)
}

/// Close-price series of two instruments on their common timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPairSeries {
    pub symbol_i: String,
    pub symbol_j: String,
    pub interval: Interval,
    pub timestamps: Vec<i64>,
    pub prices_i: Vec<f64>,
    pub prices_j: Vec<f64>,
}

impl AlignedPairSeries {
    pub fn new(
        symbol_i: impl Into<String>,
        symbol_j: impl Into<String>,
        interval: Interval,
        timestamps: Vec<i64>,
        prices_i: Vec<f64>,
        prices_j: Vec<f64>,
    ) -> Result<Self, DataError> {
        if timestamps.len() != prices_i.len() || timestamps.len() != prices_j.len() {
            return Err(DataError::InconsistentSeries("length mismatch"));
        }
        if !timestamps.windows(2).all(|w| w[0] < w[1]) {
            return Err(DataError::InconsistentSeries("timestamps not strictly increasing"));
        }
        if prices_i.iter().chain(&prices_j).any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(DataError::InconsistentSeries("non-positive or non-finite price"));
        }
        Ok(Self {
            symbol_i: symbol_i.into(),
            symbol_j: symbol_j.into(),
            interval,
            timestamps,
            prices_i,
            prices_j,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn pair_name(&self) -> String {
        format!("{}-{}", self.symbol_i, self.symbol_j)
    }

    /// Rows with `start_ms <= t < end_ms`.
    pub fn span(&self, start_ms: i64, end_ms: i64) -> Self {
        let lo = self.timestamps.partition_point(|&t| t < start_ms);
        let hi = self.timestamps.partition_point(|&t| t < end_ms).max(lo);
        self.slice(lo, hi)
    }

    /// Rows `lo..hi` by index.
    pub fn slice(&self, lo: usize, hi: usize) -> Self {
        Self {
            symbol_i: self.symbol_i.clone(),
            symbol_j: self.symbol_j.clone(),
            interval: self.interval,
            timestamps: self.timestamps[lo..hi].to_vec(),
            prices_i: self.prices_i[lo..hi].to_vec(),
            prices_j: self.prices_j[lo..hi].to_vec(),
        }
    }

    /// Same data with the legs exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            symbol_i: self.symbol_j.clone(),
            symbol_j: self.symbol_i.clone(),
            interval: self.interval,
            timestamps: self.timestamps.clone(),
            prices_i: self.prices_j.clone(),
            prices_j: self.prices_i.clone(),
        }
    }
}

/// Linear-interpolation empirical quantile (the common "type 7" definition).
pub fn empirical_quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Inner-joins two candle series on `open_time`, dropping rows where either
/// leg trades below its own `min_volume_quantile` volume quantile (computed
/// over that leg's full input) or has zero volume.
pub fn align_pair(
    a: (&str, &[Candle]),
    b: (&str, &[Candle]),
    min_volume_quantile: f64,
) -> Result<AlignedPairSeries, DataError> {
    if !(0.0..1.0).contains(&min_volume_quantile) {
        return Err(DataError::BadQuantile(min_volume_quantile));
    }
    let (name_a, ca) = a;
    let (name_b, cb) = b;
    check_sorted(ca)?;
    check_sorted(cb)?;
    let interval = match (ca.first(), cb.first()) {
        (Some(x), Some(y)) if x.interval != y.interval => {
            return Err(DataError::IntervalMismatch(x.interval, y.interval))
        }
        (Some(x), Some(_)) => x.interval,
        _ => return Err(DataError::EmptyIntersection),
    };

    let vols_a: Vec<f64> = ca.iter().map(Candle::volume_f64).collect();
    let vols_b: Vec<f64> = cb.iter().map(Candle::volume_f64).collect();
    let min_a = empirical_quantile(&vols_a, min_volume_quantile);
    let min_b = empirical_quantile(&vols_b, min_volume_quantile);

    let (mut ts, mut pa, mut pb) = (Vec::new(), Vec::new(), Vec::new());
    let (mut i, mut j) = (0, 0);
    while i < ca.len() && j < cb.len() {
        match ca[i].open_time.cmp(&cb[j].open_time) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let keep = vols_a[i] > 0.0 && vols_b[j] > 0.0 && vols_a[i] >= min_a && vols_b[j] >= min_b;
                if keep {
                    ts.push(ca[i].open_time);
                    pa.push(ca[i].close_f64());
                    pb.push(cb[j].close_f64());
                }
                i += 1;
                j += 1;
            }
        }
    }
    if ts.is_empty() {
        return Err(DataError::EmptyIntersection);
    }
    AlignedPairSeries::new(name_a, name_b, interval, ts, pa, pb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rust_decimal::prelude::FromPrimitive;

    fn d(x: f64) -> Decimal {
        Decimal::from_f64(x).unwrap()
    }

    fn bar(t: i64, o: f64, h: f64, l: f64, c: f64, v: f64) -> Candle {
        Candle { open_time: t, open: d(o), high: d(h), low: d(l), close: d(c), volume: d(v), interval: Interval::M1 }
    }

    #[test]
    fn empty_file_is_empty() {
        assert!(read_klines(io::Cursor::new(""), Interval::M1).unwrap().is_empty());
    }

    #[test]
    fn maps_binance_row() {
        let row = "1701388800000,39000,39100,38950,39050,12.5,1701388859999,487000.1,100,6,234000,0\n";
        let c = read_klines(io::Cursor::new(row), Interval::M1).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].open_time, 1_701_388_800_000);
        assert_eq!(c[0].close, Decimal::from(39050));
        assert_eq!(c[0].volume, Decimal::from_str("12.5").unwrap());
    }

    #[test]
    fn duplicate_and_malformed_rows() {
        let rows = "1701388800000,1,1,1,1,1\n1701388800000,1,1,1,1,2\n";
        assert!(matches!(
            read_klines(io::Cursor::new(rows), Interval::M1),
            Err(DataError::DuplicateTimestamp(1_701_388_800_000))
        ));
        let bad = "1701388800000,1,1,1,1,1\n1701388860000,abc,1,1,1,1\n";
        assert!(matches!(read_klines(io::Cursor::new(bad), Interval::M1), Err(DataError::MalformedRow(2))));
        let short = "1701388800000,1,1,1\n";
        assert!(matches!(read_klines(io::Cursor::new(short), Interval::M1), Err(DataError::MalformedRow(1))));
        // high below close
        let ohlc = "1701388800000,1,1.5,0.9,2,1\n";
        assert!(matches!(read_klines(io::Cursor::new(ohlc), Interval::M1), Err(DataError::InvariantViolation(1))));
        // open_time not on a 3m boundary
        let off = "1701388860000,1,1,1,1,1\n";
        assert!(matches!(read_klines(io::Cursor::new(off), Interval::M3), Err(DataError::InvariantViolation(1))));
    }

    #[test]
    fn resample_three_bars() {
        let t0 = 1_701_388_800_000;
        let bars = vec![
            bar(t0, 1.0, 2.0, 0.5, 1.5, 1.0),
            bar(t0 + 60_000, 1.5, 3.0, 1.0, 2.0, 2.0),
            bar(t0 + 120_000, 2.0, 2.5, 1.8, 2.2, 3.0),
        ];
        let out = resample(&bars, 3).unwrap();
        assert_eq!(out.len(), 1);
        let c = &out[0];
        assert_eq!((c.open, c.high, c.low, c.close, c.volume), (d(1.0), d(3.0), d(0.5), d(2.2), d(6.0)));
        assert_eq!(c.interval, Interval::M3);
        assert!(resample(&bars[..2], 3).unwrap().is_empty());
    }

    #[test]
    fn resample_errors() {
        let t0 = 1_701_388_800_000;
        let bars = vec![bar(t0 + 60_000, 1.0, 1.0, 1.0, 1.0, 1.0), bar(t0, 1.0, 1.0, 1.0, 1.0, 1.0)];
        assert!(matches!(resample(&bars, 4), Err(DataError::BadFactor(4))));
        assert!(matches!(resample(&bars, 3), Err(DataError::UnsortedInput)));
    }

    #[test]
    fn resample_conserves_volume() {
        let t0 = 1_701_388_800_000;
        let bars: Vec<Candle> = (0..9).map(|k| bar(t0 + k * 60_000, 1.0, 1.0, 1.0, 1.0, (k + 1) as f64)).collect();
        let out = resample(&bars, 3).unwrap();
        assert_eq!(out.len(), 3);
        let total: Decimal = out.iter().map(|c| c.volume).sum();
        assert_eq!(total, d(45.0));
    }

    #[test]
    fn resample_drops_groups_with_gaps() {
        let t0 = 1_701_388_800_000;
        let mut bars: Vec<Candle> = (0..10).map(|k| bar(t0 + k * 60_000, 1.0, 1.0, 1.0, 1.0, 1.0)).collect();
        bars.remove(6);
        let out = resample(&bars, 5).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].open_time, t0);
    }

    #[test]
    fn align_identical_and_disjoint() {
        let t0 = 1_701_388_800_000;
        let a: Vec<Candle> = (0..20).map(|k| bar(t0 + k * 60_000, 1.0, 1.0, 1.0, 1.0, 1.0 + k as f64)).collect();
        let b: Vec<Candle> = (0..20).map(|k| bar(t0 + k * 60_000, 2.0, 2.0, 2.0, 2.0, 5.0)).collect();
        let s = align_pair(("A", &a), ("B", &b), 0.0).unwrap();
        assert_eq!(s.len(), 20);
        assert_eq!(s.prices_j[3], 2.0);

        let c: Vec<Candle> = (100..120).map(|k| bar(t0 + k * 60_000, 1.0, 1.0, 1.0, 1.0, 1.0)).collect();
        assert!(matches!(align_pair(("A", &a), ("C", &c), 0.0), Err(DataError::EmptyIntersection)));
    }

    #[test]
    fn zero_volume_rows_always_dropped() {
        let t0 = 1_701_388_800_000;
        let a: Vec<Candle> = (0..5).map(|k| bar(t0 + k * 60_000, 1.0, 1.0, 1.0, 1.0, if k == 2 { 0.0 } else { 1.0 })).collect();
        let s = align_pair(("A", &a), ("B", &a), 0.0).unwrap();
        assert_eq!(s.len(), 4);
        assert!(!s.timestamps.contains(&(t0 + 120_000)));
    }

    #[test]
    fn quantile_filter_matches_brute_force() {
        let t0 = 1_701_388_800_000;
        // distinct volumes in a scrambled order
        let va: Vec<f64> = (0..100).map(|k| ((k * 37) % 100 + 1) as f64).collect();
        let vb: Vec<f64> = (0..100).map(|k| ((k * 61 + 13) % 100 + 1) as f64 * 0.5).collect();
        let a: Vec<Candle> = (0..100).map(|k| bar(t0 + k as i64 * 60_000, 1.0, 1.0, 1.0, 1.0, va[k])).collect();
        let b: Vec<Candle> = (0..100).map(|k| bar(t0 + k as i64 * 60_000, 1.0, 1.0, 1.0, 1.0, vb[k])).collect();

        // oracle from order statistics: with 100 distinct values the type-7
        // 0.25 quantile sits 0.75 of the way between the 25th and 26th.
        let rank_keep = |v: &[f64], x: f64| {
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            let q = s[24] + 0.75 * (s[25] - s[24]);
            x >= q
        };
        let expected = (0..100).filter(|&k| rank_keep(&va, va[k]) && rank_keep(&vb, vb[k])).count();
        let s = align_pair(("A", &a), ("B", &b), 0.25).unwrap();
        assert_eq!(s.len(), expected);
        assert!((50..=100).contains(&s.len()));
    }

    #[test]
    fn span_selects_half_open_range() {
        let s = AlignedPairSeries::new("A", "B", Interval::M1, vec![0, 60_000, 120_000, 180_000], vec![1.0; 4], vec![2.0; 4]).unwrap();
        let sub = s.span(60_000, 180_000);
        assert_eq!(sub.timestamps, vec![60_000, 120_000]);
    }

    proptest! {
        #[test]
        fn kline_csv_round_trip(rows in prop::collection::vec((1u32..1_000_000, 0u32..1_000, 0u32..1_000, 0u32..10_000), 0..40)) {
            let t0 = 1_701_388_800_000i64;
            let candles: Vec<Candle> = rows.iter().enumerate().map(|(k, &(o, up, down, v))| {
                let open = Decimal::new(o as i64, 2);
                let high = open + Decimal::new(up as i64, 3);
                let low = (open - Decimal::new(down as i64, 3)).max(Decimal::new(1, 8));
                let close = low.max(open - Decimal::new(down as i64 / 2, 3));
                Candle { open_time: t0 + k as i64 * 60_000, open, high, low, close, volume: Decimal::new(v as i64, 8), interval: Interval::M1 }
            }).collect();
            let mut buf = Vec::new();
            write_klines(&mut buf, &candles).unwrap();
            let back = read_klines(io::Cursor::new(buf), Interval::M1).unwrap();
            prop_assert_eq!(back, candles);
        }

        #[test]
        fn resample_count_for_gap_free_input(n in 0usize..60, factor in prop::sample::select(vec![3usize, 5])) {
            let t0 = 1_701_388_800_000i64; // multiple of 15 minutes
            let candles: Vec<Candle> = (0..n).map(|k| bar(t0 + k as i64 * 60_000, 1.0, 1.0, 1.0, 1.0, 1.0)).collect();
            prop_assert_eq!(resample(&candles, factor).unwrap().len(), n / factor);
        }
    }
}
