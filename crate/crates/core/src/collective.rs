//! Co-jump statistics across stocks: indicator covariance, Marcenko–Pastur
//! comparison, the market mode, and market/sector jump series.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timebase::{StockStamp, TradingCalendar};

/// Binary jump indicators θ_i^t, stored sparsely by bin.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorPanel {
    n_stocks: usize,
    bins_per_day: usize,
    offsets: Vec<usize>,
    stocks: Vec<u32>,
    counts: Vec<usize>,
}

impl IndicatorPanel {
    /// From per-bin lists of jumping stocks (duplicates within a bin collapse).
    pub fn from_bins(n_stocks: usize, bins_per_day: usize, bins: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(bins.len() + 1);
        let mut stocks = Vec::new();
        let mut counts = vec![0; n_stocks];
        offsets.push(0);
        for mut b in bins {
            b.sort_unstable();
            b.dedup();
            for &s in &b {
                counts[s as usize] += 1;
            }
            stocks.extend(b);
            offsets.push(stocks.len());
        }
        Self {
            n_stocks,
            bins_per_day,
            offsets,
            stocks,
            counts,
        }
    }

    pub fn from_events(events: &[StockStamp], n_stocks: usize, calendar: &TradingCalendar) -> Self {
        let mut bins = vec![Vec::new(); calendar.n_bins()];
        for e in events {
            bins[calendar.index(e.stamp)].push(e.stock as u32);
        }
        Self::from_bins(n_stocks, calendar.bins_per_day(), bins)
    }

    pub fn from_dense(rows: &[Vec<bool>], bins_per_day: usize) -> Self {
        let n_bins = rows.first().map_or(0, Vec::len);
        let mut bins = vec![Vec::new(); n_bins];
        for (s, row) in rows.iter().enumerate() {
            for (t, &on) in row.iter().enumerate() {
                if on {
                    bins[t].push(s as u32);
                }
            }
        }
        Self::from_bins(rows.len(), bins_per_day, bins)
    }

    pub fn n_stocks(&self) -> usize {
        self.n_stocks
    }

    pub fn n_bins(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn bins_per_day(&self) -> usize {
        self.bins_per_day
    }

    pub fn jumping(&self, bin: usize) -> &[u32] {
        &self.stocks[self.offsets[bin]..self.offsets[bin + 1]]
    }

    pub fn jump_count(&self, stock: usize) -> usize {
        self.counts[stock]
    }

    /// p_i = T⁻¹ Σ_t θ_i^t.
    pub fn probabilities(&self) -> Vec<f64> {
        let t = self.n_bins() as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    /// Every (stock, bin) with θ = 1.
    pub fn events(&self) -> Vec<StockStamp> {
        let mut out = Vec::with_capacity(self.stocks.len());
        for t in 0..self.n_bins() {
            for &s in self.jumping(t) {
                out.push(StockStamp {
                    stock: s as usize,
                    stamp: crate::timebase::BinStamp {
                        day: (t / self.bins_per_day) as u32,
                        bin: (t % self.bins_per_day) as u16,
                    },
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedStock {
    pub stock: usize,
    pub probability: f64,
}

#[derive(Debug, Clone)]
pub struct CoJumpDecomposition {
    /// Panel rows that entered the matrix, in matrix order.
    pub kept: Vec<usize>,
    pub excluded: Vec<ExcludedStock>,
    pub n_bins: usize,
    /// c_ij = T⁻¹ Σ_t θ_i θ_j − p_i p_j.
    pub c: DMatrix<f64>,
    pub corr: DMatrix<f64>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Column k pairs with `eigenvalues[k]`; each column's entries sum to ≥ 0.
    pub eigenvectors: DMatrix<f64>,
    pub mp_band: [f64; 2],
    /// False when N ≥ T and the band is meaningless.
    pub mp_reliable: bool,
}

impl CoJumpDecomposition {
    pub fn n_outside_band(&self) -> usize {
        self.eigenvalues
            .iter()
            .filter(|&&l| l < self.mp_band[0] || l > self.mp_band[1])
            .count()
    }

    pub fn leading_vector(&self) -> Vec<f64> {
        self.eigenvectors.column(0).iter().copied().collect()
    }

    pub fn summary(&self) -> DecompositionSummary {
        DecompositionSummary {
            n_stocks: self.kept.len(),
            n_bins: self.n_bins,
            eigenvalues: self.eigenvalues.clone(),
            mp_band: self.mp_band,
            mp_reliable: self.mp_reliable,
            n_outside_band: self.n_outside_band(),
            excluded: self.excluded.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub n_stocks: usize,
    pub n_bins: usize,
    pub eigenvalues: Vec<f64>,
    pub mp_band: [f64; 2],
    pub mp_reliable: bool,
    pub n_outside_band: usize,
    pub excluded: Vec<ExcludedStock>,
}

/// Marcenko–Pastur support for an N×N correlation matrix from T samples.
pub fn mp_band(n: usize, t: usize) -> [f64; 2] {
    let q = (n as f64 / t as f64).sqrt();
    [(1.0 - q).powi(2), (1.0 + q).powi(2)]
}

/// Indicator covariance, its correlation matrix and eigen-decomposition.
///
/// Stocks that never jump (or always jump) have zero variance and are
/// excluded with a report entry.
pub fn cojump_matrix(ind: &IndicatorPanel) -> Result<CoJumpDecomposition> {
    let t = ind.n_bins();
    if t == 0 {
        return Err(Error::EmptyPanel);
    }
    let p = ind.probabilities();
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    let mut slot = vec![usize::MAX; ind.n_stocks()];
    for (s, &pi) in p.iter().enumerate() {
        if pi > 0.0 && pi < 1.0 {
            slot[s] = kept.len();
            kept.push(s);
        } else {
            excluded.push(ExcludedStock {
                stock: s,
                probability: pi,
            });
        }
    }
    let n = kept.len();
    if n == 0 {
        return Err(Error::NoEvents);
    }

    let mut co = vec![0u64; n * n];
    let mut members = Vec::new();
    for bin in 0..t {
        members.clear();
        members.extend(ind.jumping(bin).iter().map(|&s| slot[s as usize]).filter(|&k| k != usize::MAX));
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a..] {
                co[i * n + j] += 1;
            }
        }
    }
    let tf = t as f64;
    let mut c = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let (lo, hi) = (i.min(j), i.max(j));
            let v = co[lo * n + hi] as f64 / tf - p[kept[i]] * p[kept[j]];
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    let sd: Vec<f64> = (0..n).map(|i| c[(i, i)].sqrt()).collect();
    let corr = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { c[(i, j)] / (sd[i] * sd[j]) });

    let eig = SymmetricEigen::new(corr.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = DMatrix::<f64>::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let sum: f64 = v.iter().sum();
        let sign = if sum.abs() > 1e-12 {
            sum.signum()
        } else {
            let (_, big) = v
                .iter()
                .enumerate()
                .fold((0.0, 0.0), |(m, b), (_, &x)| if x.abs() > m { (x.abs(), x) } else { (m, b) });
            if big < 0.0 {
                -1.0
            } else {
                1.0
            }
        };
        eigenvectors.set_column(col, &(v * sign));
    }

    Ok(CoJumpDecomposition {
        kept,
        excluded,
        n_bins: t,
        c,
        corr,
        eigenvalues,
        eigenvectors,
        mp_band: mp_band(n, t),
        mp_reliable: n < t,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketJumpSeries {
    pub chi: Vec<f64>,
    pub threshold: f64,
    /// Bin indices with chi > threshold, ascending.
    pub events: Vec<usize>,
}

impl MarketJumpSeries {
    fn from_chi(chi: Vec<f64>, threshold: f64) -> Self {
        let events = chi
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > threshold)
            .map(|(t, _)| t)
            .collect();
        Self { chi, threshold, events }
    }

    pub fn flags(&self) -> Vec<bool> {
        let mut f = vec![false; self.chi.len()];
        for &t in &self.events {
            f[t] = true;
        }
        f
    }

    /// Market jump bins per unit time.
    pub fn rate(&self) -> f64 {
        self.events.len() as f64 / self.chi.len() as f64
    }
}

/// χ^t = N^(−1/2) Σ_i θ_i^t v_i over the stocks in `kept` (matrix order).
///
/// With a uniform mode v_i = N^(−1/2) this is the fraction of stocks jumping.
pub fn chi_series(ind: &IndicatorPanel, kept: &[usize], v1: &[f64], threshold: f64) -> Result<MarketJumpSeries> {
    if kept.len() != v1.len() || kept.is_empty() {
        return Err(Error::invalid("v1", "length must match the kept stocks"));
    }
    let mut weight = vec![0.0; ind.n_stocks()];
    let sign = if v1.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    for (&s, &v) in kept.iter().zip(v1) {
        weight[s] = sign * v;
    }
    let norm = 1.0 / (kept.len() as f64).sqrt();
    let chi = (0..ind.n_bins())
        .map(|t| norm * ind.jumping(t).iter().map(|&s| weight[s as usize]).sum::<f64>())
        .collect();
    Ok(MarketJumpSeries::from_chi(chi, threshold))
}

/// χ with the uniform mode over all stocks: the jumping fraction per bin.
pub fn jumping_fraction(ind: &IndicatorPanel, threshold: f64) -> MarketJumpSeries {
    let n = ind.n_stocks() as f64;
    let chi = (0..ind.n_bins()).map(|t| ind.jumping(t).len() as f64 / n).collect();
    MarketJumpSeries::from_chi(chi, threshold)
}

pub const MIN_SECTOR_SIZE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorSeries {
    pub label: String,
    pub members: Vec<usize>,
    pub series: MarketJumpSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorJumps {
    pub sectors: Vec<SectorSeries>,
    /// Sectors below [`MIN_SECTOR_SIZE`] members, with their size.
    pub skipped: Vec<(String, usize)>,
}

/// Per-sector jumping fraction and threshold crossings.
pub fn sector_jumps(ind: &IndicatorPanel, labels: &[String], threshold: f64) -> Result<SectorJumps> {
    if labels.len() != ind.n_stocks() {
        return Err(Error::invalid("sectors", format!("{} labels for {} stocks", labels.len(), ind.n_stocks())));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (s, l) in labels.iter().enumerate() {
        if l.is_empty() {
            return Err(Error::invalid("sectors", format!("stock {s} has no sector")));
        }
        groups.entry(l.as_str()).or_default().push(s);
    }
    let mut out = SectorJumps {
        sectors: Vec::new(),
        skipped: Vec::new(),
    };
    for (label, members) in groups {
        if members.len() < MIN_SECTOR_SIZE {
            out.skipped.push((label.to_string(), members.len()));
            continue;
        }
        let mut member = vec![false; ind.n_stocks()];
        members.iter().for_each(|&s| member[s] = true);
        let n = members.len() as f64;
        let chi = (0..ind.n_bins())
            .map(|t| ind.jumping(t).iter().filter(|&&s| member[s as usize]).count() as f64 / n)
            .collect();
        out.sectors.push(SectorSeries {
            label: label.to_string(),
            members,
            series: MarketJumpSeries::from_chi(chi, threshold),
        });
    }
    Ok(out)
}

/// Collective-jump bins that may explain individual jumps: market bins apply
/// to every stock, sector bins only to that sector's members.
#[derive(Debug, Clone)]
pub struct CollectiveEvents {
    n_bins: usize,
    bins_per_day: usize,
    market: Vec<usize>,
    sectors: Vec<(Vec<bool>, Vec<usize>)>,
}

impl CollectiveEvents {
    pub fn market(series: &MarketJumpSeries, bins_per_day: usize) -> Self {
        Self {
            n_bins: series.chi.len(),
            bins_per_day,
            market: prefix(&series.flags()),
            sectors: Vec::new(),
        }
    }

    pub fn with_sectors(mut self, sectors: &SectorJumps, n_stocks: usize) -> Self {
        for s in &sectors.sectors {
            let mut member = vec![false; n_stocks];
            s.members.iter().for_each(|&m| member[m] = true);
            self.sectors.push((member, prefix(&s.series.flags())));
        }
        self
    }

    fn hit(&self, e: &StockStamp, half_window: usize) -> bool {
        let bin = e.stamp.bin as usize;
        let day0 = e.stamp.day as usize * self.bins_per_day;
        let lo = day0 + bin.saturating_sub(half_window);
        let hi = (day0 + (bin + half_window).min(self.bins_per_day - 1)).min(self.n_bins - 1);
        let any = |pre: &[usize]| pre[hi + 1] > pre[lo];
        any(&self.market)
            || self
                .sectors
                .iter()
                .any(|(member, pre)| member.get(e.stock).copied().unwrap_or(false) && any(pre))
    }
}

fn prefix(flags: &[bool]) -> Vec<usize> {
    let mut p = Vec::with_capacity(flags.len() + 1);
    p.push(0);
    for &f in flags {
        p.push(p.last().unwrap() + usize::from(f));
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Explained {
    pub fraction: f64,
    pub explained: usize,
    pub total: usize,
}

/// Fraction of individual jumps with a collective jump within
/// ±`half_window` bins of the same session.
pub fn explained_fraction(jumps: &[StockStamp], collective: &CollectiveEvents, half_window: usize) -> Result<Explained> {
    if jumps.is_empty() {
        return Err(Error::NoEvents);
    }
    let explained = jumps.iter().filter(|e| collective.hit(e, half_window)).count();
    Ok(Explained {
        fraction: explained as f64 / jumps.len() as f64,
        explained,
        total: jumps.len(),
    })
}

/// Chance that a uniformly placed jump sees at least one of the market bins
/// (occurring independently at `market_rate` per bin) in a window of
/// 2·half_window + 1 bins.
pub fn background_coincidence(market_rate: f64, half_window: usize) -> f64 {
    1.0 - (1.0 - market_rate).powi(2 * half_window as i32 + 1)
}
