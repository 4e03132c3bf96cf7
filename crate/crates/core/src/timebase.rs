//! Trading calendar, bin stamps and the aligned one-minute panel.
//!
//! Bin `b` of a session covers the minute starting at `session_open + b`, so a
//! bar stamped `09:30` is bin 0 and the last bin of a default session is `15:59`.

use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_OPEN: u16 = 570;
pub const DEFAULT_CLOSE: u16 = 960;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradingCalendar {
    session_open: u16,
    session_close: u16,
    trading_days: Vec<NaiveDate>,
}

impl TradingCalendar {
    pub fn new(session_open: u16, session_close: u16, mut trading_days: Vec<NaiveDate>) -> Result<Self> {
        if session_close <= session_open || session_close > 24 * 60 {
            return Err(Error::invalid(
                "session",
                format!("close {session_close} must be after open {session_open} and within the day"),
            ));
        }
        trading_days.sort_unstable();
        trading_days.dedup();
        Ok(Self {
            session_open,
            session_close,
            trading_days,
        })
    }

    /// 9:30 to 16:00 over the given days.
    pub fn regular(trading_days: Vec<NaiveDate>) -> Self {
        Self::new(DEFAULT_OPEN, DEFAULT_CLOSE, trading_days).expect("default session is valid")
    }

    /// `n_days` consecutive weekdays starting at `start` (or the next weekday).
    pub fn weekdays_from(start: NaiveDate, n_days: usize) -> Self {
        use chrono::{Datelike, Weekday};
        let mut days = Vec::with_capacity(n_days);
        let mut d = start;
        while days.len() < n_days {
            if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                days.push(d);
            }
            d = d.succ_opt().expect("date overflow");
        }
        Self::regular(days)
    }

    pub fn session_open(&self) -> u16 {
        self.session_open
    }

    pub fn session_close(&self) -> u16 {
        self.session_close
    }

    pub fn bins_per_day(&self) -> usize {
        (self.session_close - self.session_open) as usize
    }

    pub fn n_days(&self) -> usize {
        self.trading_days.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_days() * self.bins_per_day()
    }

    pub fn trading_days(&self) -> &[NaiveDate] {
        &self.trading_days
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.trading_days[day]
    }

    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        self.trading_days.binary_search(&date).ok()
    }

    /// Session bin for a wall-clock time, ignoring seconds.
    pub fn bin_of(&self, time: NaiveTime) -> Option<u16> {
        let minute = (time.hour() * 60 + time.minute()) as u16;
        (self.session_open..self.session_close)
            .contains(&minute)
            .then(|| minute - self.session_open)
    }

    pub fn stamp_of(&self, at: NaiveDateTime) -> Option<BinStamp> {
        let day = self.day_index(at.date())?;
        let bin = self.bin_of(at.time())?;
        Some(BinStamp { day: day as u32, bin })
    }

    pub fn time_of(&self, bin: u16) -> NaiveTime {
        let minute = u32::from(self.session_open + bin);
        NaiveTime::from_hms_opt(minute / 60, minute % 60, 0).expect("bin inside a day")
    }

    pub fn datetime_of(&self, stamp: BinStamp) -> NaiveDateTime {
        self.date(stamp.day as usize).and_time(self.time_of(stamp.bin))
    }

    pub fn index(&self, stamp: BinStamp) -> usize {
        stamp.day as usize * self.bins_per_day() + stamp.bin as usize
    }

    pub fn stamp(&self, index: usize) -> BinStamp {
        let bpd = self.bins_per_day();
        BinStamp {
            day: (index / bpd) as u32,
            bin: (index % bpd) as u16,
        }
    }
}

/// A one-minute bin within the calendar, ordered by (day, bin).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BinStamp {
    pub day: u32,
    pub bin: u16,
}

impl BinStamp {
    pub fn new(day: u32, bin: u16) -> Self {
        Self { day, bin }
    }

    /// Shift by `lag` bins inside the same session; `None` when the result
    /// would leave the session.
    pub fn offset(self, lag: i64, bins_per_day: usize) -> Option<BinStamp> {
        let b = self.bin as i64 + lag;
        (0..bins_per_day as i64).contains(&b).then_some(BinStamp {
            day: self.day,
            bin: b as u16,
        })
    }
}

/// An event attached to one stock of a panel (by row index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StockStamp {
    pub stock: usize,
    pub stamp: BinStamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarRecord {
    pub date: NaiveDate,
    pub time: NaiveTime,
    pub ticker: String,
    pub close: f64,
    pub volume: u64,
}

/// Counts of bar records turned away by [`build_panel`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub unknown_date: usize,
    pub out_of_session: usize,
    pub bad_price: usize,
    pub duplicate: usize,
    /// A handful of human-readable examples, for diagnostics only.
    pub examples: Vec<String>,
}

impl IngestReport {
    const MAX_EXAMPLES: usize = 20;

    fn note(&mut self, msg: impl FnOnce() -> String) {
        if self.examples.len() < Self::MAX_EXAMPLES {
            self.examples.push(msg());
        }
    }

    pub fn rejected(&self) -> usize {
        self.unknown_date + self.out_of_session + self.bad_price + self.duplicate
    }
}

/// Aligned per-stock one-minute closes, returns and volumes.
///
/// Rows are stocks (sorted by ticker), columns are calendar bins
/// `day * bins_per_day + bin`. A bin is masked when it has no bar, when the
/// previous bin has no bar, or when it opens a session.
#[derive(Debug, Clone, PartialEq)]
pub struct BarPanel {
    calendar: TradingCalendar,
    tickers: Vec<String>,
    closes: Vec<Vec<f64>>,
    volumes: Vec<Vec<u64>>,
    returns: Vec<Vec<f64>>,
    missing: Vec<Vec<bool>>,
}

impl BarPanel {
    /// Assemble from per-stock close and volume rows (`NaN` close = no bar).
    pub fn from_closes(
        calendar: TradingCalendar,
        tickers: Vec<String>,
        closes: Vec<Vec<f64>>,
        volumes: Vec<Vec<u64>>,
    ) -> Result<Self> {
        let n_bins = calendar.n_bins();
        if closes.len() != tickers.len() || volumes.len() != tickers.len() {
            return Err(Error::invalid("panel", "row count does not match tickers"));
        }
        if closes.iter().any(|r| r.len() != n_bins)
            || volumes.iter().any(|r| r.len() != n_bins)
        {
            return Err(Error::invalid("panel", "row length does not match calendar"));
        }
        let bpd = calendar.bins_per_day();
        let mut returns = Vec::with_capacity(tickers.len());
        let mut missing = Vec::with_capacity(tickers.len());
        for row in &closes {
            let mut r = vec![f64::NAN; n_bins];
            let mut m = vec![true; n_bins];
            for i in 0..n_bins {
                if i % bpd == 0 {
                    continue;
                }
                let (prev, cur) = (row[i - 1], row[i]);
                if prev.is_finite() && cur.is_finite() {
                    r[i] = cur / prev - 1.0;
                    m[i] = false;
                }
            }
            returns.push(r);
            missing.push(m);
        }
        Ok(Self {
            calendar,
            tickers,
            closes,
            volumes,
            returns,
            missing,
        })
    }

    pub fn calendar(&self) -> &TradingCalendar {
        &self.calendar
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_bins(&self) -> usize {
        self.calendar.n_bins()
    }

    pub fn stock_index(&self, ticker: &str) -> Option<usize> {
        self.tickers.binary_search_by(|t| t.as_str().cmp(ticker)).ok()
    }

    /// Return row; masked bins hold `NaN`.
    pub fn returns(&self, stock: usize) -> &[f64] {
        &self.returns[stock]
    }

    pub fn volumes(&self, stock: usize) -> &[u64] {
        &self.volumes[stock]
    }

    pub fn closes(&self, stock: usize) -> &[f64] {
        &self.closes[stock]
    }

    pub fn missing(&self, stock: usize) -> &[bool] {
        &self.missing[stock]
    }

    pub fn abs_return(&self, stock: usize, index: usize) -> Option<f64> {
        (!self.missing[stock][index]).then(|| self.returns[stock][index].abs())
    }

    /// Mean |r| over the unmasked bins of each stock.
    pub fn mean_abs_returns(&self) -> Vec<f64> {
        (0..self.n_stocks())
            .map(|s| {
                let (sum, n) = self.returns[s]
                    .iter()
                    .zip(&self.missing[s])
                    .filter(|(_, &m)| !m)
                    .fold((0.0, 0usize), |(acc, n), (r, _)| (acc + r.abs(), n + 1));
                if n == 0 {
                    f64::NAN
                } else {
                    sum / n as f64
                }
            })
            .collect()
    }

    /// Emit one bar record per present bar, in (ticker, date, time) order.
    pub fn to_records(&self) -> Vec<BarRecord> {
        let mut out = Vec::new();
        for (s, ticker) in self.tickers.iter().enumerate() {
            for (i, &close) in self.closes[s].iter().enumerate() {
                if close.is_finite() {
                    let stamp = self.calendar.stamp(i);
                    out.push(BarRecord {
                        date: self.calendar.date(stamp.day as usize),
                        time: self.calendar.time_of(stamp.bin),
                        ticker: ticker.clone(),
                        close,
                        volume: self.volumes[s][i],
                    });
                }
            }
        }
        out
    }

    /// Keep only the listed tickers (unknown names are ignored).
    pub fn restrict(&self, universe: &[String]) -> BarPanel {
        let keep: Vec<usize> = (0..self.n_stocks())
            .filter(|&s| universe.iter().any(|u| u == &self.tickers[s]))
            .collect();
        BarPanel {
            calendar: self.calendar.clone(),
            tickers: keep.iter().map(|&s| self.tickers[s].clone()).collect(),
            closes: keep.iter().map(|&s| self.closes[s].clone()).collect(),
            volumes: keep.iter().map(|&s| self.volumes[s].clone()).collect(),
            returns: keep.iter().map(|&s| self.returns[s].clone()).collect(),
            missing: keep.iter().map(|&s| self.missing[s].clone()).collect(),
        }
    }
}

/// Align bar records onto the calendar.
///
/// Records on unknown dates, outside the session, with a non-positive or
/// non-finite close, or duplicating another record's (ticker, bin) are
/// rejected and counted. The result does not depend on record order.
pub fn build_panel<I>(records: I, calendar: TradingCalendar) -> (BarPanel, IngestReport)
where
    I: IntoIterator<Item = BarRecord>,
{
    let mut report = IngestReport::default();
    // ticker -> bin index -> (close, volume, copies)
    let mut cells: BTreeMap<String, BTreeMap<usize, (f64, u64, u32)>> = BTreeMap::new();
    for rec in records {
        let Some(day) = calendar.day_index(rec.date) else {
            report.unknown_date += 1;
            report.note(|| format!("unknown date {} for {}", rec.date, rec.ticker));
            continue;
        };
        let bin = match calendar.bin_of(rec.time) {
            Some(b) if rec.time.second() == 0 => b,
            _ => {
                report.out_of_session += 1;
                report.note(|| format!("time {} outside session for {}", rec.time, rec.ticker));
                continue;
            }
        };
        if !(rec.close.is_finite() && rec.close > 0.0) {
            report.bad_price += 1;
            report.note(|| format!("non-positive close {} for {} {} {}", rec.close, rec.ticker, rec.date, rec.time));
            continue;
        }
        let idx = calendar.index(BinStamp::new(day as u32, bin));
        cells
            .entry(rec.ticker)
            .or_default()
            .entry(idx)
            .and_modify(|c| c.2 += 1)
            .or_insert((rec.close, rec.volume, 1));
    }

    let n_bins = calendar.n_bins();
    let mut tickers = Vec::with_capacity(cells.len());
    let mut closes = Vec::with_capacity(cells.len());
    let mut volumes = Vec::with_capacity(cells.len());
    for (ticker, bars) in cells {
        let mut c = vec![f64::NAN; n_bins];
        let mut v = vec![0u64; n_bins];
        for (idx, (close, volume, copies)) in bars {
            if copies > 1 {
                report.duplicate += copies as usize;
                report.note(|| format!("{copies} bars for {ticker} at bin {idx}"));
                continue;
            }
            c[idx] = close;
            v[idx] = volume;
            report.accepted += 1;
        }
        tickers.push(ticker);
        closes.push(c);
        volumes.push(v);
    }
    let panel = BarPanel::from_closes(calendar, tickers, closes, volumes).expect("rows sized from calendar");
    (panel, report)
}

/// Mean-one intraday profile indexed by session bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalCurve {
    values: Vec<f64>,
    stderr: Vec<f64>,
}

impl SeasonalCurve {
    /// The unit curve: no seasonal correction.
    pub fn flat(bins_per_day: usize) -> Self {
        Self {
            values: vec![1.0; bins_per_day],
            stderr: vec![0.0; bins_per_day],
        }
    }

    /// Normalize an arbitrary positive shape to mean one.
    pub fn from_shape(shape: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("shape", "needs finite nonnegative values"));
        }
        let n = shape.len();
        Self::normalized(shape, vec![0.0; n])
    }

    fn normalized(mut values: Vec<f64>, mut stderr: Vec<f64>) -> Result<Self> {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        if !(mean > 0.0) {
            return Err(Error::EmptyPanel);
        }
        for (v, e) in values.iter_mut().zip(stderr.iter_mut()) {
            *v /= mean;
            *e /= mean;
        }
        Ok(Self { values, stderr })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn stderr(&self) -> &[f64] {
        &self.stderr
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, bin: u16) -> f64 {
        self.values[bin as usize]
    }

    /// Per-bin event counts divided by the number of (stock, day) cells.
    pub fn from_event_counts<'a, I>(events: I, bins_per_day: usize, n_cells: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a StockStamp>,
    {
        let mut counts = vec![0usize; bins_per_day];
        let mut total = 0usize;
        for e in events {
            counts[e.stamp.bin as usize] += 1;
            total += 1;
        }
        if total == 0 || n_cells == 0 {
            return Err(Error::NoEvents);
        }
        let n = n_cells as f64;
        let values: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        // Poisson counting error per bin
        let stderr = counts.iter().map(|&c| (c as f64).sqrt() / n).collect();
        Self::normalized(values, stderr)
    }
}

/// Which quantity [`intraday_mean_curve`] averages per bin.
#[derive(Debug, Clone, Copy)]
pub enum Quantity<'a> {
    AbsReturn,
    EventCount(&'a [StockStamp]),
}

/// Average intraday pattern of |r| or of event counts, normalized to mean one.
///
/// Bins without any unmasked observation are filled by linear interpolation
/// between the nearest populated bins.
pub fn intraday_mean_curve(panel: &BarPanel, quantity: Quantity<'_>) -> Result<SeasonalCurve> {
    let bpd = panel.calendar().bins_per_day();
    match quantity {
        Quantity::EventCount(events) => {
            SeasonalCurve::from_event_counts(events, bpd, panel.n_stocks() * panel.calendar().n_days())
        }
        Quantity::AbsReturn => {
            let mut sum = vec![0.0; bpd];
            let mut sum_sq = vec![0.0; bpd];
            let mut n = vec![0usize; bpd];
            for s in 0..panel.n_stocks() {
                let r = panel.returns(s);
                for (i, &m) in panel.missing(s).iter().enumerate() {
                    if !m {
                        let a = r[i].abs();
                        let b = i % bpd;
                        sum[b] += a;
                        sum_sq[b] += a * a;
                        n[b] += 1;
                    }
                }
            }
            if n.iter().all(|&c| c == 0) {
                return Err(Error::EmptyPanel);
            }
            let mut mean: Vec<Option<f64>> = Vec::with_capacity(bpd);
            let mut err = vec![0.0; bpd];
            for b in 0..bpd {
                if n[b] == 0 {
                    mean.push(None);
                    continue;
                }
                let k = n[b] as f64;
                let mu = sum[b] / k;
                mean.push(Some(mu));
                if n[b] > 1 {
                    let var = ((sum_sq[b] - k * mu * mu) / (k - 1.0)).max(0.0);
                    err[b] = (var / k).sqrt();
                }
            }
            SeasonalCurve::normalized(interpolate_gaps(&mean), err)
        }
    }
}

fn interpolate_gaps(values: &[Option<f64>]) -> Vec<f64> {
    let known: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|x| (i, x)))
        .collect();
    (0..values.len())
        .map(|i| {
            if let Some(v) = values[i] {
                return v;
            }
            let right = known.partition_point(|&(j, _)| j < i);
            match (right.checked_sub(1).map(|l| known[l]), known.get(right)) {
                (Some((j0, v0)), Some(&(j1, v1))) => v0 + (v1 - v0) * (i - j0) as f64 / (j1 - j0) as f64,
                (Some((_, v0)), None) => v0,
                (None, Some(&(_, v1))) => v1,
                (None, None) => 1.0,
            }
        })
        .collect()
}
