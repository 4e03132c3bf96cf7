//! Lag profiles around trigger events and power-law relaxation fits.
//!
//! Profiles never leave the trigger's session: a lag whose bin falls outside
//! the session simply gets no observation from that trigger.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::timebase::{BarPanel, SeasonalCurve, StockStamp, TradingCalendar};

/// Triggers per accumulation chunk; fixed so sums are partition-independent.
const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    RateRatio,
    RawRate,
    VolRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventProfile {
    pub kind: ProfileKind,
    pub lags: Vec<i64>,
    pub value: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_obs: Vec<usize>,
}

impl EventProfile {
    pub fn max_lag(&self) -> i64 {
        *self.lags.last().unwrap_or(&0)
    }

    pub fn at(&self, lag: i64) -> Option<usize> {
        let i = lag + self.max_lag();
        (0..self.lags.len() as i64).contains(&i).then_some(i as usize)
    }

    pub fn value_at(&self, lag: i64) -> f64 {
        self.at(lag).map_or(f64::NAN, |i| self.value[i])
    }

    /// Rows of `lag,value,stderr,n_obs`.
    pub fn rows(&self) -> Vec<ProfileRow> {
        (0..self.lags.len())
            .map(|i| ProfileRow {
                lag: self.lags[i],
                value: self.value[i],
                stderr: self.stderr[i],
                n_obs: self.n_obs[i],
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub lag: i64,
    pub value: f64,
    pub stderr: f64,
    pub n_obs: usize,
}

#[derive(Clone)]
struct Accum {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    n: Vec<usize>,
}

impl Accum {
    fn new(len: usize) -> Self {
        Self {
            sum: vec![0.0; len],
            sum_sq: vec![0.0; len],
            n: vec![0; len],
        }
    }

    fn add(&mut self, i: usize, x: f64) {
        self.sum[i] += x;
        self.sum_sq[i] += x * x;
        self.n[i] += 1;
    }

    fn merge(mut self, other: Accum) -> Accum {
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
            self.n[i] += other.n[i];
        }
        self
    }

    fn finish(self, kind: ProfileKind, max_lag: i64, scale: f64) -> EventProfile {
        let len = self.n.len();
        let mut value = vec![f64::NAN; len];
        let mut stderr = vec![f64::NAN; len];
        for i in 0..len {
            let k = self.n[i] as f64;
            if self.n[i] == 0 {
                continue;
            }
            let mean = self.sum[i] / k;
            value[i] = mean * scale;
            if self.n[i] > 1 {
                let var = ((self.sum_sq[i] - k * mean * mean) / (k - 1.0)).max(0.0);
                stderr[i] = (var / k).sqrt() * scale;
            }
        }
        EventProfile {
            kind,
            lags: (-max_lag..=max_lag).collect(),
            value,
            stderr,
            n_obs: self.n,
        }
    }
}

/// Accumulate `contribution(trigger, lag_index, stamp)` over all in-session lags.
fn accumulate<F>(triggers: &[StockStamp], max_lag: i64, bins_per_day: usize, contribution: F) -> Accum
where
    F: Fn(&StockStamp, crate::timebase::BinStamp) -> Option<f64> + Sync,
{
    let len = (2 * max_lag + 1) as usize;
    // canonical order, so sums do not depend on how triggers were listed
    let mut sorted = triggers.to_vec();
    sorted.sort_unstable();
    let partials: Vec<Accum> = sorted
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Accum::new(len);
            for t in chunk {
                for (i, lag) in (-max_lag..=max_lag).enumerate() {
                    if let Some(stamp) = t.stamp.offset(lag, bins_per_day) {
                        if let Some(x) = contribution(t, stamp) {
                            acc.add(i, x);
                        }
                    }
                }
            }
            acc
        })
        .collect();
    partials.into_iter().fold(Accum::new(len), Accum::merge)
}

/// Dense per-stock occupancy of target events.
struct Occupancy {
    n_bins: usize,
    bits: Vec<u64>,
}

impl Occupancy {
    fn new(events: &[StockStamp], n_stocks: usize, calendar: &TradingCalendar) -> Self {
        let n_bins = calendar.n_bins();
        let mut bits = vec![0u64; (n_stocks * n_bins).div_ceil(64)];
        for e in events {
            let k = e.stock * n_bins + calendar.index(e.stamp);
            bits[k / 64] |= 1 << (k % 64);
        }
        Self { n_bins, bits }
    }

    fn contains(&self, stock: usize, index: usize) -> bool {
        let k = stock * self.n_bins + index;
        self.bits[k / 64] >> (k % 64) & 1 == 1
    }

    fn occupied(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }
}

/// How [`conditional_rate`] normalizes the target indicator.
#[derive(Debug, Clone, Copy)]
pub enum RateNorm<'a> {
    /// Plain conditional probability per bin.
    Raw,
    /// Each contribution divided by the target's seasonal curve, then the
    /// profile divided by the unconditional target rate: 1 means no effect.
    Deseasonalized(&'a SeasonalCurve),
}

/// Probability of a same-stock target event at each lag from a trigger.
///
/// Several targets in one (stock, bin) count once.
pub fn conditional_rate(
    triggers: &[StockStamp],
    targets: &[StockStamp],
    n_stocks: usize,
    calendar: &TradingCalendar,
    max_lag: usize,
    norm: RateNorm<'_>,
) -> Result<EventProfile> {
    if triggers.is_empty() {
        return Err(Error::NoEvents);
    }
    let bpd = calendar.bins_per_day();
    let occ = Occupancy::new(targets, n_stocks, calendar);
    let seasonal = match norm {
        RateNorm::Raw => None,
        RateNorm::Deseasonalized(c) => {
            if c.len() != bpd {
                return Err(Error::invalid("seasonal", "length differs from bins per day"));
            }
            Some(c)
        }
    };
    let acc = accumulate(triggers, max_lag as i64, bpd, |t, stamp| {
        let hit = occ.contains(t.stock, calendar.index(stamp));
        let x = if hit { 1.0 } else { 0.0 };
        Some(match seasonal {
            None => x,
            Some(c) => {
                let s = c.at(stamp.bin);
                if hit {
                    1.0 / s
                } else {
                    0.0
                }
            }
        })
    });
    Ok(match seasonal {
        None => acc.finish(ProfileKind::RawRate, max_lag as i64, 1.0),
        Some(_) => {
            let base = occ.occupied() as f64 / (n_stocks * calendar.n_bins()) as f64;
            if base == 0.0 {
                return Err(Error::NoEvents);
            }
            acc.finish(ProfileKind::RateRatio, max_lag as i64, 1.0 / base)
        }
    })
}

/// Mean deseasonalized |r| at each lag from a trigger, in units of each
/// stock's own volatility scale.
///
/// A contribution is |r(t0+τ)| / (scale[stock] · u_curve[bin]); masked bins
/// are skipped.
pub fn vol_profile(
    triggers: &[StockStamp],
    panel: &BarPanel,
    max_lag: usize,
    u_curve: &SeasonalCurve,
    scale: &[f64],
) -> Result<EventProfile> {
    if triggers.is_empty() {
        return Err(Error::NoEvents);
    }
    let cal = panel.calendar();
    if u_curve.len() != cal.bins_per_day() || scale.len() != panel.n_stocks() {
        return Err(Error::invalid("vol_profile", "curve or scale does not match panel"));
    }
    let acc = accumulate(triggers, max_lag as i64, cal.bins_per_day(), |t, stamp| {
        let a = panel.abs_return(t.stock, cal.index(stamp))?;
        let d = scale[t.stock] * u_curve.at(stamp.bin);
        (d > 0.0).then(|| a / d)
    });
    Ok(acc.finish(ProfileKind::VolRatio, max_lag as i64, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxFit {
    pub beta: f64,
    pub amplitude: f64,
    pub sigma_inf: f64,
    pub tau_range: [i64; 2],
    /// Weighted RMS residual.
    pub residual: f64,
    /// Asymptotic standard error of beta from the weighted Jacobian.
    pub beta_stderr: f64,
    pub evaluations: usize,
}

pub const BETA_MAX: f64 = 3.0;

struct RelaxData {
    tau: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

impl RelaxData {
    /// Weighted linear solve for (sigma_inf, amplitude) at fixed beta.
    fn linear(&self, beta: f64) -> (f64, f64, f64) {
        let (mut sw, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..self.tau.len() {
            let x = self.tau[i].powf(-beta);
            let w = self.w[i];
            sw += w;
            sx += w * x;
            sxx += w * x * x;
            sy += w * self.y[i];
            sxy += w * x * self.y[i];
        }
        let det = sw * sxx - sx * sx;
        let amp = (sw * sxy - sx * sy) / det;
        let c = (sy - amp * sx) / sw;
        let sse: f64 = (0..self.tau.len())
            .map(|i| self.w[i] * (self.y[i] - c - amp * self.tau[i].powf(-beta)).powi(2))
            .sum();
        (c, amp, sse)
    }

    fn objective(&self, beta: f64) -> f64 {
        if !(beta > 0.0 && beta <= BETA_MAX) {
            return f64::INFINITY;
        }
        self.linear(beta).2
    }
}

/// Fit value(τ) ≈ sigma_inf + amplitude·τ^(−beta) over τ in [1, tau_max].
///
/// The two linear parameters are solved exactly for each beta; beta itself
/// is seeded from a grid over (0, 3] and polished with Nelder–Mead. Squared
/// residuals are weighted by n_obs (residuals by √n_obs).
pub fn fit_relaxation(profile: &EventProfile, tau_max: usize) -> Result<RelaxFit> {
    if tau_max < 3 {
        return Err(Error::invalid("tau_max", "need at least three lags"));
    }
    let mut data = RelaxData {
        tau: Vec::with_capacity(tau_max),
        y: Vec::with_capacity(tau_max),
        w: Vec::with_capacity(tau_max),
    };
    for lag in 1..=tau_max as i64 {
        let i = profile
            .at(lag)
            .ok_or_else(|| Error::invalid("tau_max", format!("profile stops before lag {lag}")))?;
        let n = profile.n_obs[i];
        if n == 0 || !profile.value[i].is_finite() {
            return Err(Error::FitRefused(format!("no observations at lag {lag}")));
        }
        data.tau.push(lag as f64);
        data.y.push(profile.value[i]);
        data.w.push(n as f64);
    }

    const GRID: usize = 300;
    let (mut beta0, mut best) = (BETA_MAX, f64::INFINITY);
    for g in 1..=GRID {
        let b = BETA_MAX * g as f64 / GRID as f64;
        let v = data.objective(b);
        if v < best {
            best = v;
            beta0 = b;
        }
    }
    let opts = NelderMeadOptions {
        max_evaluations: 10_000,
        f_tolerance: 1e-12,
        x_tolerance: 1e-10,
    };
    let step = if beta0 >= BETA_MAX { -0.005 } else { 0.005 };
    let m = nelder_mead(|x| data.objective(x[0]), &[beta0], &[step], opts);
    let evaluations = m.evaluations + GRID;
    if !m.converged {
        return Err(Error::NoConvergence {
            evaluations,
            best_beta: m.x[0],
            best_objective: m.value,
        });
    }
    let beta = m.x[0];
    let (sigma_inf, amplitude, sse) = data.linear(beta);
    let wsum: f64 = data.w.iter().sum();
    let residual = (sse / wsum).sqrt();

    // Gauss-Newton covariance for (sigma_inf, amplitude, beta).
    let mut jtj = Matrix3::<f64>::zeros();
    for i in 0..data.tau.len() {
        let x = data.tau[i].powf(-beta);
        let g = Vector3::new(1.0, x, -amplitude * x * data.tau[i].ln());
        jtj += data.w[i] * g * g.transpose();
    }
    let dof = (data.tau.len() as f64 - 3.0).max(1.0);
    let beta_stderr = jtj
        .try_inverse()
        .map_or(f64::NAN, |inv| (inv[(2, 2)] * sse / dof).max(0.0).sqrt());

    Ok(RelaxFit {
        beta,
        amplitude,
        sigma_inf,
        tau_range: [1, tau_max as i64],
        residual,
        beta_stderr,
        evaluations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrePost {
    pub pre_mean: f64,
    pub pre_stderr: f64,
    pub post_mean: f64,
    pub post_stderr: f64,
    /// post_mean − pre_mean.
    pub difference: f64,
    pub difference_stderr: f64,
}

/// Mean profile level over lags [−L, −inner] and [inner, L].
pub fn pre_post_baseline(profile: &EventProfile, inner: i64) -> Result<PrePost> {
    let l = profile.max_lag();
    if l - inner + 1 < 2 || inner < 1 {
        return Err(Error::invalid("inner", format!("profile of half-width {l} too short for inner lag {inner}")));
    }
    let side = |range: std::ops::RangeInclusive<i64>| -> Vec<f64> {
        range
            .filter_map(|lag| profile.at(lag))
            .map(|i| profile.value[i])
            .filter(|v| v.is_finite())
            .collect()
    };
    let (pre_mean, pre_stderr) = crate::tail::mean_stderr(&side(-l..=-inner));
    let (post_mean, post_stderr) = crate::tail::mean_stderr(&side(inner..=l));
    Ok(PrePost {
        pre_mean,
        pre_stderr,
        post_mean,
        post_stderr,
        difference: post_mean - pre_mean,
        difference_stderr: (pre_stderr.powi(2) + post_stderr.powi(2)).sqrt(),
    })
}
