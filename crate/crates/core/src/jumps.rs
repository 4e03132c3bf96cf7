//! The s-jump detector: one-minute |r| against a trailing mean of |r|.

use std::collections::{HashSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tail::{self, CcdfPoint, TailFit, TailSelection};
use crate::timebase::{BarPanel, BinStamp, StockStamp};

pub const DEFAULT_WINDOW: usize = 120;
pub const DEFAULT_MIN_HISTORY: usize = 30;

/// Whether the trailing window may reach into the previous session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowPolicy {
    #[default]
    Span,
    PerSession,
}

#[derive(Debug, Clone)]
pub struct BaselineSeries {
    pub window: usize,
    pub min_history: usize,
    pub policy: WindowPolicy,
    /// Per stock, per bin; `NaN` where fewer than `min_history` bins are available.
    m: Vec<Vec<f64>>,
}

impl BaselineSeries {
    pub fn row(&self, stock: usize) -> &[f64] {
        &self.m[stock]
    }

    pub fn at(&self, stock: usize, index: usize) -> Option<f64> {
        let v = self.m[stock][index];
        v.is_finite().then_some(v)
    }
}

/// Trailing flat mean of |r| over the last `window` unmasked bins strictly
/// before each bin.
pub fn baseline(panel: &BarPanel, window: usize, min_history: usize, policy: WindowPolicy) -> Result<BaselineSeries> {
    if min_history == 0 || window < min_history {
        return Err(Error::invalid(
            "window",
            format!("need window ({window}) >= min_history ({min_history}) >= 1"),
        ));
    }
    let bpd = panel.calendar().bins_per_day();
    let m = (0..panel.n_stocks())
        .into_par_iter()
        .map(|s| trailing_mean(panel.returns(s), panel.missing(s), window, min_history, policy, bpd))
        .collect();
    Ok(BaselineSeries {
        window,
        min_history,
        policy,
        m,
    })
}

fn trailing_mean(
    returns: &[f64],
    missing: &[bool],
    window: usize,
    min_history: usize,
    policy: WindowPolicy,
    bpd: usize,
) -> Vec<f64> {
    let mut out = vec![f64::NAN; returns.len()];
    let mut buf: VecDeque<f64> = VecDeque::with_capacity(window + 1);
    let mut sum = 0.0;
    let mut pushes = 0usize;
    for i in 0..returns.len() {
        if policy == WindowPolicy::PerSession && i % bpd == 0 {
            buf.clear();
            sum = 0.0;
        }
        if buf.len() >= min_history {
            out[i] = sum / buf.len() as f64;
        }
        if !missing[i] {
            let a = returns[i].abs();
            buf.push_back(a);
            sum += a;
            if buf.len() > window {
                sum -= buf.pop_front().unwrap_or(0.0);
            }
            pushes += 1;
            // refresh the running sum once per window to stop drift
            if pushes.is_multiple_of(window) {
                sum = buf.iter().sum();
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub stock: usize,
    pub stamp: BinStamp,
    /// |r(t)| / m(t).
    pub score: f64,
    pub positive: bool,
}

impl JumpEvent {
    pub fn stock_stamp(&self) -> StockStamp {
        StockStamp {
            stock: self.stock,
            stamp: self.stamp,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Detection {
    /// Sorted by (stamp, stock).
    pub events: Vec<JumpEvent>,
    /// Bins with m(t) = 0 and |r(t)| > 0, where the score is undefined.
    pub degenerate: usize,
}

/// All bins with |r(t)| > s·m(t), m(t) available and positive.
pub fn detect_jumps(panel: &BarPanel, base: &BaselineSeries, s: f64) -> Result<Detection> {
    if !(s > 1.0) {
        return Err(Error::invalid("s", format!("{s} must exceed 1")));
    }
    let cal = panel.calendar();
    let per_stock: Vec<(Vec<JumpEvent>, usize)> = (0..panel.n_stocks())
        .into_par_iter()
        .map(|stock| {
            let r = panel.returns(stock);
            let missing = panel.missing(stock);
            let m = base.row(stock);
            let mut events = Vec::new();
            let mut degenerate = 0;
            for i in 0..r.len() {
                if missing[i] || !m[i].is_finite() {
                    continue;
                }
                let a = r[i].abs();
                if m[i] == 0.0 {
                    if a > 0.0 {
                        degenerate += 1;
                    }
                    continue;
                }
                if a > s * m[i] {
                    events.push(JumpEvent {
                        stock,
                        stamp: cal.stamp(i),
                        score: a / m[i],
                        positive: r[i] > 0.0,
                    });
                }
            }
            (events, degenerate)
        })
        .collect();
    let degenerate = per_stock.iter().map(|(_, d)| d).sum();
    let mut events: Vec<JumpEvent> = per_stock.into_iter().flat_map(|(e, _)| e).collect();
    events.sort_by_key(|e| (e.stamp, e.stock));
    Ok(Detection { events, degenerate })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreDistribution {
    pub ccdf: Vec<CcdfPoint>,
    pub fit: TailFit,
}

/// CCDF of scores on a log grid plus a Hill fit of its tail.
pub fn score_ccdf(scores: &[f64], selection: TailSelection) -> Result<ScoreDistribution> {
    let fit = tail::hill(scores, selection)?;
    Ok(ScoreDistribution {
        ccdf: tail::ccdf(scores, 20),
        fit,
    })
}

/// Number of events with score above each threshold.
pub fn counts_above(events: &[JumpEvent], thresholds: &[f64]) -> Vec<usize> {
    let mut scores: Vec<f64> = events.iter().map(|e| e.score).collect();
    scores.sort_unstable_by(f64::total_cmp);
    thresholds
        .iter()
        .map(|&s| scores.len() - scores.partition_point(|&x| x <= s))
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct JumpPartition {
    pub news: Vec<JumpEvent>,
    pub endogenous: Vec<JumpEvent>,
}

impl JumpPartition {
    pub fn news_fraction(&self) -> f64 {
        let n = self.news.len() + self.endogenous.len();
        self.news.len() as f64 / n as f64
    }
}

/// A jump is news-driven when the same stock had news in the same session
/// within the `assoc_window` bins up to and including the jump bin.
pub fn classify_news_jumps(
    jumps: &[JumpEvent],
    news: &[StockStamp],
    assoc_window: usize,
    bins_per_day: usize,
) -> JumpPartition {
    let news: HashSet<StockStamp> = news.iter().copied().collect();
    let mut out = JumpPartition::default();
    for j in jumps {
        let hit = (0..=assoc_window as i64).any(|back| {
            j.stamp.offset(-back, bins_per_day).is_some_and(|stamp| {
                news.contains(&StockStamp {
                    stock: j.stock,
                    stamp,
                })
            })
        });
        if hit {
            out.news.push(*j);
        } else {
            out.endogenous.push(*j);
        }
    }
    out
}
