//! Quantile tail dependence between |return| and volume.
//!
//! C(p) is computed from rank sets: the k = ⌈p·n⌉ largest |r| and the k
//! largest volumes (ties resolved by a stable sort on sample order), so both
//! exceedance sets have exactly k members and the two conditional readings
//! P(|r| > R_p | V > V_p) and P(V > V_p | |r| > R_p) coincide.

use std::collections::HashMap;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timebase::BarPanel;

pub const MIN_SAMPLE: usize = 100;
pub const MIN_EXCEEDANCES: usize = 10;
const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub at: NaiveDateTime,
    pub ticker: String,
    pub price: f64,
    pub size: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resolution {
    Trade,
    Bar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub resolution: Resolution,
}

impl PairedSample {
    pub fn new(x: Vec<f64>, v: Vec<f64>, resolution: Resolution) -> Result<Self> {
        if x.len() != v.len() {
            return Err(Error::invalid("sample", "x and v lengths differ"));
        }
        if x.iter().chain(&v).any(|a| !a.is_finite()) || v.iter().any(|&a| a < 0.0) {
            return Err(Error::invalid("sample", "values must be finite and volumes nonnegative"));
        }
        Ok(Self { x, v, resolution })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeReport {
    pub sessions: usize,
    /// Stock-sessions with fewer than two trades.
    pub skipped_sessions: usize,
    pub bad_price: usize,
}

/// Consecutive-trade |log price change| paired with the later trade's size,
/// per stock and calendar day.
pub fn trade_pairs(trades: &[Trade]) -> (PairedSample, TradeReport) {
    let mut report = TradeReport::default();
    let mut sessions: HashMap<(&str, chrono::NaiveDate), Vec<&Trade>> = HashMap::new();
    for t in trades {
        if !(t.price.is_finite() && t.price > 0.0) {
            report.bad_price += 1;
            continue;
        }
        sessions.entry((t.ticker.as_str(), t.at.date())).or_default().push(t);
    }
    let mut x = Vec::new();
    let mut v = Vec::new();
    let mut sessions: Vec<_> = sessions.into_iter().collect();
    sessions.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    for (_, mut session) in sessions {
        report.sessions += 1;
        if session.len() < 2 {
            report.skipped_sessions += 1;
            continue;
        }
        session.sort_by_key(|t| t.at);
        for w in session.windows(2) {
            x.push((w[1].price / w[0].price).ln().abs());
            v.push(w[1].size as f64);
        }
    }
    (
        PairedSample {
            x,
            v,
            resolution: Resolution::Trade,
        },
        report,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// Pool raw values across stocks.
    Raw,
    /// Divide each stock's |r| and volume by their medians before pooling.
    Standardized,
}

/// (|r|, V) over the unmasked bins of one stock.
pub fn bar_pairs_stock(panel: &BarPanel, stock: usize) -> PairedSample {
    let r = panel.returns(stock);
    let vol = panel.volumes(stock);
    let (x, v) = panel
        .missing(stock)
        .iter()
        .enumerate()
        .filter(|(_, &m)| !m)
        .map(|(i, _)| (r[i].abs(), vol[i] as f64))
        .unzip();
    PairedSample {
        x,
        v,
        resolution: Resolution::Bar,
    }
}

fn median_or_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    let mut s = values.to_vec();
    let mid = s.len() / 2;
    let (_, m, _) = s.select_nth_unstable_by(mid, f64::total_cmp);
    let m = *m;
    if m > 0.0 {
        m
    } else {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        if mean > 0.0 {
            mean
        } else {
            1.0
        }
    }
}

/// Pooled one-minute (|r|, V) pairs across all stocks.
pub fn bar_pairs(panel: &BarPanel, pooling: Pooling) -> PairedSample {
    let mut x = Vec::new();
    let mut v = Vec::new();
    for s in 0..panel.n_stocks() {
        let one = bar_pairs_stock(panel, s);
        let (sx, sv) = match pooling {
            Pooling::Raw => (1.0, 1.0),
            Pooling::Standardized => (median_or_mean(&one.x), median_or_mean(&one.v)),
        };
        x.extend(one.x.iter().map(|a| a / sx));
        v.extend(one.v.iter().map(|a| a / sv));
    }
    PairedSample {
        x,
        v,
        resolution: Resolution::Bar,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    /// Decreasing.
    pub p: Vec<f64>,
    pub c: Vec<f64>,
    pub k: Vec<usize>,
    /// 95% binomial half-width (Agresti–Coull, nonzero even at C = 0 or 1).
    pub ci: Vec<f64>,
    /// The k-th and (k+1)-th largest of x or of v are equal, so the
    /// exceedance set was cut inside a tie.
    pub tie_warning: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub p: f64,
    pub c: f64,
    pub k: usize,
    pub ci: f64,
}

impl TailCurve {
    pub fn rows(&self) -> Vec<TailRow> {
        (0..self.p.len())
            .map(|i| TailRow {
                p: self.p[i],
                c: self.c[i],
                k: self.k[i],
                ci: self.ci[i],
            })
            .collect()
    }

    /// Index of the grid point closest to `p` on a log scale.
    pub fn nearest(&self, p: f64) -> Option<usize> {
        (0..self.p.len()).min_by(|&a, &b| {
            (self.p[a] / p).ln().abs().total_cmp(&(self.p[b] / p).ln().abs())
        })
    }
}

/// Logarithmic grid from 0.5 down to 10/n, `per_decade` points per decade.
pub fn default_grid(n: usize, per_decade: usize) -> Vec<f64> {
    let lo = MIN_EXCEEDANCES as f64 / n as f64;
    let hi = 0.5;
    if lo >= hi {
        return vec![hi];
    }
    let decades = (hi / lo).log10();
    let steps = (decades * per_decade as f64).ceil() as usize;
    (0..=steps).map(|i| hi * 10f64.powf(-decades * i as f64 / steps as f64)).collect()
}

/// Descending ranks under a stable sort: equal values rank in sample order.
fn ranks_desc(values: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut keyed: Vec<(f64, usize)> = values.iter().copied().zip(0..).collect();
    keyed.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let order: Vec<usize> = keyed.into_iter().map(|(_, i)| i).collect();
    let mut rank = vec![0; values.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    (order, rank)
}

pub fn agresti_coull_halfwidth(successes: usize, trials: usize) -> f64 {
    let z2 = Z95 * Z95;
    let n = trials as f64 + z2;
    let p = (successes as f64 + z2 / 2.0) / n;
    Z95 * (p * (1.0 - p) / n).sqrt()
}

/// C(p) on a grid of decreasing p values; grid points with k < 10 are dropped.
pub fn tail_curve(sample: &PairedSample, grid: Option<&[f64]>) -> Result<TailCurve> {
    let n = sample.len();
    if n < MIN_SAMPLE {
        return Err(Error::invalid("sample", format!("{n} pairs, need at least {MIN_SAMPLE}")));
    }
    let owned;
    let grid = match grid {
        Some(g) => g,
        None => {
            owned = default_grid(n, 10);
            &owned
        }
    };
    let (order_x, rank_x) = ranks_desc(&sample.x);
    let (order_v, rank_v) = ranks_desc(&sample.v);
    // joint[k] = #{i : both ranks < k}
    let mut first_in_both = vec![0usize; n + 1];
    for i in 0..n {
        first_in_both[rank_x[i].max(rank_v[i]) + 1] += 1;
    }
    for k in 1..=n {
        first_in_both[k] += first_in_both[k - 1];
    }

    let mut curve = TailCurve {
        p: Vec::new(),
        c: Vec::new(),
        k: Vec::new(),
        ci: Vec::new(),
        tie_warning: Vec::new(),
    };
    for &p in grid {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::invalid("grid", format!("p = {p} outside (0, 1]")));
        }
        let k = ((p * n as f64).ceil() as usize).min(n);
        if k < MIN_EXCEEDANCES {
            continue;
        }
        let both = first_in_both[k];
        let tie = k < n
            && (sample.x[order_x[k - 1]] == sample.x[order_x[k]] || sample.v[order_v[k - 1]] == sample.v[order_v[k]]);
        curve.p.push(p);
        curve.c.push(both as f64 / k as f64);
        curve.k.push(k);
        curve.ci.push(agresti_coull_halfwidth(both, k));
        curve.tie_warning.push(tie);
    }
    Ok(curve)
}
