//! Seeded generators with known ground truth.
//!
//! Every generator draws from its own ChaCha stream keyed by (seed, purpose,
//! stock), so output is a pure function of [`GenConfig`] and does not depend
//! on thread scheduling.

mod sampling;

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collective::IndicatorPanel;
use crate::error::{Error, Result};
use crate::io::{create, write_bars_file, write_json, write_trades_file};
use crate::newsfeed::{write_news_file, RawNewsRecord};
use crate::taildep::Trade;
use crate::timebase::{BarPanel, BinStamp, StockStamp, TradingCalendar};

pub use sampling::{choose, hawkes, open_unit, pareto, stream, AbsReturnLaw};

pub const TRUTH_SCHEMA: &str = "jumplab.truth/1";

// stream purposes
const RETURNS: u32 = 1;
const SHOCKS: u32 = 2;
const NEWS: u32 = 3;
const MARKET: u32 = 4;
const SECTOR: u32 = 5;
const INDICATORS: u32 = 6;
const TRADES: u32 = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub seed: u64,
    pub n_stocks: usize,
    pub n_days: usize,
    pub start_date: NaiveDate,
    pub returns: ReturnsConfig,
    pub news: NewsConfig,
    pub market: MarketConfig,
    pub trades: TradesConfig,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 20051128,
            n_stocks: 100,
            n_days: 60,
            start_date: NaiveDate::from_ymd_opt(2005, 11, 28).expect("valid date"),
            returns: ReturnsConfig::default(),
            news: NewsConfig::default(),
            market: MarketConfig::default(),
            trades: TradesConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReturnsConfig {
    /// CCDF exponent of |r|.
    pub tail_exponent: f64,
    /// Probability mass in the exact Pareto part.
    pub tail_mass: f64,
    pub body_power: f64,
    /// |r| where the Pareto tail starts.
    pub scale: f64,
    /// u(b) = 1 + amplitude·cos(2πb / bins_per_day); 0 disables.
    pub intraday_amplitude: f64,
    pub missing_rate: f64,
    /// Relaxation shocks per stock-bin.
    pub shock_rate: f64,
    /// Shock |r| in units of the mean |r|.
    pub shock_size: f64,
    pub relax_amplitude: f64,
    pub relax_beta: f64,
    pub volume_exponent: f64,
    pub volume_min: f64,
}

impl Default for ReturnsConfig {
    fn default() -> Self {
        Self {
            tail_exponent: 4.0,
            tail_mass: 0.3,
            body_power: 3.0,
            scale: 0.002,
            intraday_amplitude: 0.5,
            missing_rate: 0.0,
            shock_rate: 1e-4,
            shock_size: 4.0,
            relax_amplitude: 2.0,
            relax_beta: 0.5,
            volume_exponent: 1.5,
            volume_min: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewsConfig {
    /// Stationary news per stock per day.
    pub per_day: f64,
    pub branching: f64,
    /// Hawkes kernel decay per minute.
    pub decay: f64,
    /// Fraction of news followed by a planted jump 0-2 bins later.
    pub jump_fraction: f64,
    pub jump_size: f64,
    pub relax_amplitude: f64,
    pub relax_beta: f64,
    /// Chance a story gets follow-up records under the same story id.
    pub followup_prob: f64,
    /// Automated "imbalance" records per stock per day.
    pub blocklisted_per_day: f64,
    /// Chance per stock-day of an after-hours record.
    pub after_hours_prob: f64,
    /// Chance a primary story is also carried by the secondary feed.
    pub secondary_coverage: f64,
    /// Secondary minus primary time, minutes.
    pub secondary_delay_mean: f64,
    pub secondary_delay_sd: f64,
    /// Secondary-only stories per stock per day.
    pub secondary_only_per_day: f64,
}

impl Default for NewsConfig {
    fn default() -> Self {
        Self {
            per_day: 0.33,
            branching: 0.3,
            decay: 0.05,
            jump_fraction: 0.3,
            jump_size: 4.0,
            relax_amplitude: 2.0,
            relax_beta: 1.0,
            followup_prob: 0.3,
            blocklisted_per_day: 0.05,
            after_hours_prob: 0.05,
            secondary_coverage: 0.25,
            secondary_delay_mean: 1.5,
            secondary_delay_sd: 3.48,
            secondary_only_per_day: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    /// Market co-jump bins per bin.
    pub rate: f64,
    /// Pareto exponent of the co-jumping fraction.
    pub participation_exponent: f64,
    pub min_participation: f64,
    pub jump_size: f64,
    /// Idiosyncratic jump probability per stock-bin (indicator generator only).
    pub idio_rate: f64,
    pub n_sectors: usize,
    pub sector_rate: f64,
    pub sector_participation: f64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            rate: 5e-4,
            participation_exponent: 1.5,
            min_participation: 0.05,
            jump_size: 4.0,
            idio_rate: 2e-3,
            n_sectors: 5,
            sector_rate: 2e-4,
            sector_participation: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TradesConfig {
    pub per_stock_day: usize,
    pub volume_exponent: f64,
    pub volume_min: f64,
    /// |r| = (λ·V^α + ε)·return_scale when true; λ is forced to 0 otherwise.
    pub coupled: bool,
    pub lambda: f64,
    pub alpha: f64,
    pub noise_sd: f64,
    pub return_scale: f64,
}

impl Default for TradesConfig {
    fn default() -> Self {
        Self {
            per_stock_day: 50,
            volume_exponent: 1.5,
            volume_min: 100.0,
            coupled: false,
            lambda: 1.0,
            alpha: 0.5,
            noise_sd: 5.0,
            return_scale: 1e-4,
        }
    }
}

fn check(ok: bool, name: &'static str, why: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(name, why))
    }
}

fn is_prob(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let r = &self.returns;
        let n = &self.news;
        let m = &self.market;
        let t = &self.trades;
        check(self.n_stocks > 0 && self.n_stocks < 10_000, "n_stocks", "must be in 1..10000")?;
        check(self.n_days > 0, "n_days", "must be positive")?;
        check(r.tail_exponent > 1.0, "returns.tail_exponent", "must exceed 1 so the mean exists")?;
        check(r.tail_mass > 0.0 && r.tail_mass < 1.0, "returns.tail_mass", "must be in (0, 1)")?;
        check(r.body_power > 0.0, "returns.body_power", "must be positive")?;
        check(r.scale > 0.0 && r.scale < 0.1, "returns.scale", "must be in (0, 0.1)")?;
        check((0.0..1.0).contains(&r.intraday_amplitude), "returns.intraday_amplitude", "must be in [0, 1)")?;
        check(r.missing_rate >= 0.0 && r.missing_rate < 1.0, "returns.missing_rate", "must be in [0, 1)")?;
        check(is_prob(r.shock_rate), "returns.shock_rate", "must be a probability")?;
        check(r.shock_size > 0.0 && r.relax_amplitude >= 0.0 && r.relax_beta > 0.0, "returns.shock", "size and beta must be positive")?;
        check(r.volume_exponent > 0.0 && r.volume_min >= 1.0, "returns.volume", "exponent > 0, min >= 1")?;
        check(n.per_day >= 0.0 && n.decay > 0.0, "news.rate", "rate >= 0, decay > 0")?;
        check((0.0..1.0).contains(&n.branching), "news.branching", "must be in [0, 1)")?;
        for (p, name) in [
            (n.jump_fraction, "news.jump_fraction"),
            (n.followup_prob, "news.followup_prob"),
            (n.after_hours_prob, "news.after_hours_prob"),
            (n.secondary_coverage, "news.secondary_coverage"),
        ] {
            check(is_prob(p), name, "must be a probability")?;
        }
        check(n.blocklisted_per_day >= 0.0 && n.secondary_only_per_day >= 0.0, "news.per_day", "rates must be >= 0")?;
        check(n.secondary_delay_sd >= 0.0, "news.secondary_delay_sd", "must be >= 0")?;
        check(is_prob(m.rate) && is_prob(m.idio_rate) && is_prob(m.sector_rate), "market.rate", "rates must be probabilities")?;
        check(m.participation_exponent > 1.0, "market.participation_exponent", "must exceed 1")?;
        check(m.min_participation > 0.0 && m.min_participation <= 1.0, "market.min_participation", "must be in (0, 1]")?;
        check(is_prob(m.sector_participation), "market.sector_participation", "must be a probability")?;
        check(t.volume_exponent > 0.0 && t.volume_min >= 1.0, "trades.volume", "exponent > 0, min >= 1")?;
        check(t.lambda >= 0.0 && t.noise_sd >= 0.0 && t.return_scale > 0.0, "trades.coupling", "lambda, noise >= 0; scale > 0")?;
        Ok(())
    }

    pub fn calendar(&self) -> TradingCalendar {
        TradingCalendar::weekdays_from(self.start_date, self.n_days)
    }

    pub fn tickers(&self) -> Vec<String> {
        (0..self.n_stocks).map(ticker).collect()
    }

    pub fn law(&self) -> AbsReturnLaw {
        AbsReturnLaw {
            tail_exponent: self.returns.tail_exponent,
            tail_mass: self.returns.tail_mass,
            body_power: self.returns.body_power,
            scale: self.returns.scale,
        }
    }

    /// Imposed intraday |r| modulation (mean one over a session).
    pub fn intraday_shape(&self, bins_per_day: usize) -> Vec<f64> {
        (0..bins_per_day)
            .map(|b| 1.0 + self.returns.intraday_amplitude * (2.0 * PI * b as f64 / bins_per_day as f64).cos())
            .collect()
    }

    pub fn sector_labels(&self) -> Vec<String> {
        let k = self.market.n_sectors.max(1);
        (0..self.n_stocks).map(|s| format!("SEC{}", s % k)).collect()
    }
}

pub fn ticker(stock: usize) -> String {
    format!("S{stock:04}")
}

/// Company name carried in headlines and the alias file.
pub fn company(stock: usize) -> String {
    format!("Stock{stock:04} Corp")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relax {
    pub amplitude: f64,
    pub beta: f64,
}

/// A forced |r| = size · mean|r| · u(bin) · P with P Pareto(tail_exponent)
/// above 1, so planted spikes share the return tail; optionally followed by excess
/// volatility mean|r|·u·amplitude·τ^(−beta) for τ ≥ 1 in the same session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub stock: usize,
    pub stamp: BinStamp,
    pub size: f64,
    pub relax: Option<Relax>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnsTruth {
    pub tail_exponent: f64,
    /// E|r| of the base law before intraday modulation.
    pub abs_return_mean: f64,
    /// Imposed mean-one intraday shape.
    pub intraday_shape: Vec<f64>,
    pub shocks: Vec<StockStamp>,
    pub shock_relax: Relax,
}

/// Generate the bar panel: i.i.d. |r| from [`AbsReturnLaw`] with random
/// signs, intraday modulation, relaxation shocks, and the given extra spikes.
pub fn gen_returns(cfg: &GenConfig, extra: &[Spike]) -> Result<(BarPanel, ReturnsTruth)> {
    cfg.validate()?;
    let cal = cfg.calendar();
    let bpd = cal.bins_per_day();
    let n_bins = cal.n_bins();
    let law = cfg.law();
    let mean = law.mean();
    let shape = cfg.intraday_shape(bpd);
    let rc = &cfg.returns;
    let shock_relax = Relax {
        amplitude: rc.relax_amplitude,
        beta: rc.relax_beta,
    };

    let mut spikes: Vec<Vec<Spike>> = vec![Vec::new(); cfg.n_stocks];
    let mut shocks = Vec::new();
    for stock in 0..cfg.n_stocks {
        let mut rng = stream(cfg.seed, SHOCKS, stock as u32);
        for i in bernoulli_hits(&mut rng, rc.shock_rate, n_bins) {
            let stamp = cal.stamp(i);
            shocks.push(StockStamp { stock, stamp });
            spikes[stock].push(Spike {
                stock,
                stamp,
                size: rc.shock_size,
                relax: Some(shock_relax),
            });
        }
    }
    for s in extra {
        if s.stock < cfg.n_stocks && (s.stamp.day as usize) < cal.n_days() && (s.stamp.bin as usize) < bpd {
            spikes[s.stock].push(*s);
        }
    }
    spikes.iter_mut().for_each(|v| v.sort_by_key(|s| s.stamp));

    let rows: Vec<(Vec<f64>, Vec<u64>)> = (0..cfg.n_stocks)
        .into_par_iter()
        .map(|stock| {
            let mut rng = stream(cfg.seed, RETURNS, stock as u32);
            let mut closes = vec![f64::NAN; n_bins];
            let mut volumes = vec![0u64; n_bins];
            let mut price = 20.0 + (stock % 80) as f64;
            let my = &spikes[stock];
            let mut cursor = 0;
            for day in 0..cal.n_days() {
                while cursor < my.len() && (my[cursor].stamp.day as usize) < day {
                    cursor += 1;
                }
                let today_end = my[cursor..].partition_point(|s| s.stamp.day as usize == day) + cursor;
                let today = &my[cursor..today_end];
                for b in 0..bpd {
                    let i = day * bpd + b;
                    let mut excess = 0.0;
                    let mut forced: Option<f64> = None;
                    for s in today {
                        let sb = s.stamp.bin as usize;
                        if sb < b {
                            if let Some(r) = s.relax {
                                excess += r.amplitude * ((b - sb) as f64).powf(-r.beta);
                            }
                        } else if sb == b {
                            forced = Some(forced.map_or(s.size, |f: f64| f.max(s.size)));
                        }
                    }
                    let u = shape[b];
                    let base = law.sample(&mut rng);
                    let positive: bool = rng.random();
                    let absent = rng.random::<f64>() < rc.missing_rate;
                    let vol = pareto(&mut rng, rc.volume_exponent, rc.volume_min).floor();
                    let a = match forced {
                        Some(size) => size * mean * u * pareto(&mut rng, rc.tail_exponent, 1.0),
                        None => base * u * (1.0 + excess),
                    }
                    .min(0.5);
                    price *= if positive { 1.0 + a } else { 1.0 - a };
                    if !absent {
                        closes[i] = price;
                        volumes[i] = vol.min(u64::MAX as f64) as u64;
                    }
                }
            }
            (closes, volumes)
        })
        .collect();
    let (closes, volumes) = rows.into_iter().unzip();
    let panel = BarPanel::from_closes(cal, cfg.tickers(), closes, volumes)?;
    let truth = ReturnsTruth {
        tail_exponent: rc.tail_exponent,
        abs_return_mean: mean,
        intraday_shape: shape,
        shocks,
        shock_relax,
    };
    Ok((panel, truth))
}

/// Indices in 0..n hit by independent Bernoulli(p) trials (geometric skips).
pub fn bernoulli_hits<R: Rng + ?Sized>(rng: &mut R, p: f64, n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    if p <= 0.0 {
        return out;
    }
    if p >= 1.0 {
        return (0..n).collect();
    }
    let log_q = (1.0 - p).ln();
    let mut i = 0usize;
    loop {
        let skip = (open_unit(rng).ln() / log_q).floor();
        if !skip.is_finite() || skip >= (n - i.min(n)) as f64 {
            break;
        }
        i += skip as usize;
        if i >= n {
            break;
        }
        out.push(i);
        i += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsTruth {
    /// Primary-feed stories that should survive filtering (first record of
    /// each story, in session, company named).
    pub events: Vec<StockStamp>,
    /// Jump bins planted after news.
    pub news_jumps: Vec<StockStamp>,
    pub news_relax: Relax,
    pub followups: usize,
    pub blocklisted: usize,
    pub after_hours: usize,
    pub secondary_copies: usize,
    pub secondary_only: usize,
    /// Stationary rate (per stock-minute) and Hawkes parameters.
    pub stationary_rate: f64,
    pub branching: f64,
    pub decay: f64,
}

#[derive(Debug, Clone)]
pub struct NewsFeeds {
    pub primary: Vec<RawNewsRecord>,
    pub secondary: Vec<RawNewsRecord>,
    /// Spikes to plant in the returns for news-driven jumps.
    pub spikes: Vec<Spike>,
}

const PHRASES: &[&str] = &[
    "reports quarterly results",
    "announces new contract",
    "names new chief executive",
    "raises full-year outlook",
    "shares active on analyst note",
    "in talks over acquisition",
    "files regulatory update",
    "launches product line",
];

fn session_time(cal: &TradingCalendar, day: usize, minute: f64) -> NaiveDateTime {
    let open = cal.date(day).and_hms_opt(0, 0, 0).expect("midnight") + Duration::minutes(cal.session_open() as i64);
    open + Duration::seconds((minute * 60.0).floor() as i64)
}

/// Hawkes news per stock on continuous intraday time, two feeds, noise
/// records that the filter must remove, and planted news-driven jumps.
pub fn gen_news(cfg: &GenConfig) -> Result<(NewsFeeds, NewsTruth)> {
    cfg.validate()?;
    let nc = &cfg.news;
    let cal = cfg.calendar();
    let bpd = cal.bins_per_day();
    let horizon = (cal.n_days() * bpd) as f64;
    let stationary = nc.per_day / bpd as f64;
    let mu = stationary * (1.0 - nc.branching);
    let relax = Relax {
        amplitude: nc.relax_amplitude,
        beta: nc.relax_beta,
    };

    struct PerStock {
        primary: Vec<RawNewsRecord>,
        secondary: Vec<RawNewsRecord>,
        spikes: Vec<Spike>,
        events: Vec<StockStamp>,
        jumps: Vec<StockStamp>,
        counts: [usize; 5],
    }

    let per_stock: Vec<PerStock> = (0..cfg.n_stocks)
        .into_par_iter()
        .map(|stock| {
            let mut rng = stream(cfg.seed, NEWS, stock as u32);
            let tk = ticker(stock);
            let name = company(stock);
            let mut out = PerStock {
                primary: Vec::new(),
                secondary: Vec::new(),
                spikes: Vec::new(),
                events: Vec::new(),
                jumps: Vec::new(),
                counts: [0; 5],
            };
            let record = |at, source: &str, story: String, headline: String| RawNewsRecord {
                at,
                source: source.to_string(),
                story_id: story,
                tickers: vec![tk.clone()],
                headline,
            };
            let times = hawkes(&mut rng, mu, nc.branching, nc.decay, horizon);
            for (k, &t) in times.iter().enumerate() {
                let day = (t / bpd as f64).floor() as usize;
                let minute = t - (day * bpd) as f64;
                let bin = minute.floor() as u16;
                let at = session_time(&cal, day, minute);
                let phrase = PHRASES[rng.random_range(0..PHRASES.len())];
                let story = format!("DJ-{tk}-{k}");
                out.primary.push(record(at, "DJ", story.clone(), format!("{name} {phrase}")));
                let stamp = BinStamp::new(day as u32, bin);
                out.events.push(StockStamp { stock, stamp });

                if rng.random::<f64>() < nc.followup_prob {
                    let n_follow = rng.random_range(1..=3);
                    for f in 0..n_follow {
                        let later = at + Duration::seconds(rng.random_range(60..600));
                        out.primary.push(record(later, "DJ", story.clone(), format!("{name} update {}", f + 2)));
                        out.counts[0] += 1;
                    }
                }
                if rng.random::<f64>() < nc.jump_fraction {
                    let d: u16 = rng.random_range(0..=2);
                    if (bin + d) as usize >= bpd {
                        continue;
                    }
                    let js = BinStamp::new(day as u32, bin + d);
                    out.jumps.push(StockStamp { stock, stamp: js });
                    out.spikes.push(Spike {
                        stock,
                        stamp: js,
                        size: nc.jump_size,
                        relax: Some(relax),
                    });
                }
                if rng.random::<f64>() < nc.secondary_coverage {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let delay = nc.secondary_delay_mean + nc.secondary_delay_sd * z;
                    let m2 = minute + delay;
                    if m2 >= 0.0 && m2 < bpd as f64 {
                        let at2 = session_time(&cal, day, m2);
                        out.secondary
                            .push(record(at2, "RT", format!("RT-{tk}-{k}"), format!("{name}: {phrase}")));
                        out.counts[3] += 1;
                    }
                }
            }

            // noise the filter must remove, and secondary-only stories
            for day in 0..cal.n_days() {
                let n_block = poisson(&mut rng, nc.blocklisted_per_day);
                for j in 0..n_block {
                    let m = rng.random::<f64>() * bpd as f64;
                    out.primary.push(record(
                        session_time(&cal, day, m),
                        "DJ",
                        format!("DJ-{tk}-imb-{day}-{j}"),
                        format!("NYSE Order Imbalance: {name}"),
                    ));
                    out.counts[1] += 1;
                }
                if rng.random::<f64>() < nc.after_hours_prob {
                    let m = bpd as f64 + 60.0 + rng.random::<f64>() * 120.0;
                    out.primary.push(record(
                        session_time(&cal, day, m),
                        "DJ",
                        format!("DJ-{tk}-ah-{day}"),
                        format!("{name} after-hours filing"),
                    ));
                    out.counts[2] += 1;
                }
                let n_only = poisson(&mut rng, nc.secondary_only_per_day);
                for j in 0..n_only {
                    let m = rng.random::<f64>() * bpd as f64;
                    out.secondary.push(record(
                        session_time(&cal, day, m),
                        "RT",
                        format!("RT-{tk}-only-{day}-{j}"),
                        format!("{name} mentioned in sector wrap"),
                    ));
                    out.counts[4] += 1;
                }
            }
            out
        })
        .collect();

    let mut feeds = NewsFeeds {
        primary: Vec::new(),
        secondary: Vec::new(),
        spikes: Vec::new(),
    };
    let mut truth = NewsTruth {
        events: Vec::new(),
        news_jumps: Vec::new(),
        news_relax: relax,
        followups: 0,
        blocklisted: 0,
        after_hours: 0,
        secondary_copies: 0,
        secondary_only: 0,
        stationary_rate: stationary,
        branching: nc.branching,
        decay: nc.decay,
    };
    for p in per_stock {
        feeds.primary.extend(p.primary);
        feeds.secondary.extend(p.secondary);
        feeds.spikes.extend(p.spikes);
        truth.events.extend(p.events);
        truth.news_jumps.extend(p.jumps);
        truth.followups += p.counts[0];
        truth.blocklisted += p.counts[1];
        truth.after_hours += p.counts[2];
        truth.secondary_copies += p.counts[3];
        truth.secondary_only += p.counts[4];
    }
    let key = |r: &RawNewsRecord| (r.at, r.story_id.clone(), r.headline.clone());
    feeds.primary.sort_by_key(key);
    feeds.secondary.sort_by_key(key);
    truth.events.sort();
    truth.news_jumps.sort();
    Ok((feeds, truth))
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    // Knuth; means here are small
    let limit = (-mean).exp();
    let mut k = 0;
    let mut prod = rng.random::<f64>();
    while prod > limit {
        k += 1;
        prod *= rng.random::<f64>();
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectiveTruth {
    pub label: String,
    pub stamp: BinStamp,
    pub participation: f64,
    pub stocks: Vec<u32>,
}

fn market_participants<R: Rng + ?Sized>(rng: &mut R, m: &MarketConfig, n_stocks: usize) -> (f64, Vec<u32>) {
    let f = pareto(rng, m.participation_exponent, m.min_participation).min(1.0);
    let k = ((f * n_stocks as f64).round() as usize).max(1);
    (f, choose(rng, n_stocks, k))
}

/// Market and sector co-jump bins as spikes for [`gen_returns`].
pub fn gen_collective_spikes(cfg: &GenConfig) -> Result<(Vec<Spike>, Vec<CollectiveTruth>)> {
    cfg.validate()?;
    let m = &cfg.market;
    let cal = cfg.calendar();
    let mut truth = Vec::new();
    let mut spikes = Vec::new();
    let mut rng = stream(cfg.seed, MARKET, 0);
    for i in bernoulli_hits(&mut rng, m.rate, cal.n_bins()) {
        let (f, stocks) = market_participants(&mut rng, m, cfg.n_stocks);
        truth.push(CollectiveTruth {
            label: "market".into(),
            stamp: cal.stamp(i),
            participation: f,
            stocks,
        });
    }
    let labels = cfg.sector_labels();
    let n_sectors = m.n_sectors.max(1);
    for g in 0..n_sectors {
        let members: Vec<u32> = (0..cfg.n_stocks as u32).filter(|&s| s as usize % n_sectors == g).collect();
        if members.is_empty() {
            continue;
        }
        let mut rng = stream(cfg.seed, SECTOR, g as u32);
        let k = ((m.sector_participation * members.len() as f64).round() as usize).max(1);
        for i in bernoulli_hits(&mut rng, m.sector_rate, cal.n_bins()) {
            let picked: Vec<u32> = choose(&mut rng, members.len(), k).into_iter().map(|j| members[j as usize]).collect();
            truth.push(CollectiveTruth {
                label: labels[members[0] as usize].clone(),
                stamp: cal.stamp(i),
                participation: k as f64 / members.len() as f64,
                stocks: picked,
            });
        }
    }
    for t in &truth {
        for &s in &t.stocks {
            spikes.push(Spike {
                stock: s as usize,
                stamp: t.stamp,
                size: m.jump_size,
                relax: None,
            });
        }
    }
    Ok((spikes, truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketTruth {
    /// Bin index and planted participants per market jump.
    pub market_bins: Vec<(usize, usize)>,
    pub participation: Vec<f64>,
    /// Stock-bins switched on by the market mechanism.
    pub planted: usize,
    /// Stock-bins switched on only by idiosyncratic draws.
    pub idiosyncratic: usize,
    pub idio_rates: Vec<f64>,
}

/// Jump indicators directly: heterogeneous idiosyncratic Bernoulli jumps plus
/// market bins where a Pareto-distributed fraction of random stocks co-jump.
pub fn gen_market(cfg: &GenConfig) -> Result<(IndicatorPanel, MarketTruth)> {
    cfg.validate()?;
    let m = &cfg.market;
    let cal = cfg.calendar();
    let n_bins = cal.n_bins();
    let n = cfg.n_stocks;
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); n_bins];
    let mut idio_rates = Vec::with_capacity(n);
    for stock in 0..n {
        let mut rng = stream(cfg.seed, INDICATORS, stock as u32 + 1);
        let p = m.idio_rate * (0.5 + rng.random::<f64>());
        idio_rates.push(p);
        for i in bernoulli_hits(&mut rng, p, n_bins) {
            bins[i].push(stock as u32);
        }
    }
    let mut rng = stream(cfg.seed, INDICATORS, 0);
    let mut market_bins = Vec::new();
    let mut participation = Vec::new();
    let mut planted = 0;
    for i in bernoulli_hits(&mut rng, m.rate, n_bins) {
        let (f, stocks) = market_participants(&mut rng, m, n);
        market_bins.push((i, stocks.len()));
        participation.push(f);
        planted += stocks.len();
        bins[i].extend(stocks);
    }
    let ind = IndicatorPanel::from_bins(n, cal.bins_per_day(), bins);
    let total: usize = (0..n).map(|s| ind.jump_count(s)).sum();
    Ok((
        ind,
        MarketTruth {
            market_bins,
            participation,
            planted,
            idiosyncratic: total - planted,
            idio_rates,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradesTruth {
    pub coupled: bool,
    /// Effective λ (0 in independent mode).
    pub lambda: f64,
    pub alpha: f64,
    pub noise_sd: f64,
    pub volume_exponent: f64,
    pub volume_min: f64,
    pub n_trades: usize,
}

/// Trade tape: Pareto sizes, |log return| = |λ·size^α + σ·Z|·scale.
pub fn gen_trades(cfg: &GenConfig) -> Result<(Vec<Trade>, TradesTruth)> {
    cfg.validate()?;
    let tc = &cfg.trades;
    let cal = cfg.calendar();
    let session_secs = cal.bins_per_day() as u32 * 60;
    let lambda = if tc.coupled { tc.lambda } else { 0.0 };
    let per_stock: Vec<Vec<Trade>> = (0..cfg.n_stocks)
        .into_par_iter()
        .map(|stock| {
            let mut rng = stream(cfg.seed, TRADES, stock as u32);
            let tk = ticker(stock);
            let mut price = 20.0 + (stock % 80) as f64;
            let mut out = Vec::with_capacity(cal.n_days() * tc.per_stock_day);
            for day in 0..cal.n_days() {
                let mut secs: Vec<u32> = (0..tc.per_stock_day).map(|_| rng.random_range(0..session_secs)).collect();
                secs.sort_unstable();
                let open = session_time(&cal, day, 0.0);
                for s in secs {
                    let size = pareto(&mut rng, tc.volume_exponent, tc.volume_min).ceil();
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let x = (lambda * size.powf(tc.alpha) + tc.noise_sd * z).abs() * tc.return_scale;
                    let up: bool = rng.random();
                    price *= if up { x.exp() } else { (-x).exp() };
                    out.push(Trade {
                        at: open + Duration::seconds(s as i64),
                        ticker: tk.clone(),
                        price,
                        size: size.min(u64::MAX as f64) as u64,
                    });
                }
            }
            out
        })
        .collect();
    let mut trades: Vec<Trade> = per_stock.into_iter().flatten().collect();
    trades.sort_by(|a, b| a.at.cmp(&b.at).then_with(|| a.ticker.cmp(&b.ticker)));
    let n_trades = trades.len();
    Ok((
        trades,
        TradesTruth {
            coupled: tc.coupled,
            lambda,
            alpha: tc.alpha,
            noise_sd: tc.noise_sd,
            volume_exponent: tc.volume_exponent,
            volume_min: tc.volume_min,
            n_trades,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub schema: String,
    pub config: GenConfig,
    pub returns: ReturnsTruth,
    pub news: NewsTruth,
    pub collective: Vec<CollectiveTruth>,
    pub trades: TradesTruth,
}

/// Everything one seed produces, in memory.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub panel: BarPanel,
    pub news: NewsFeeds,
    pub trades: Vec<Trade>,
    pub truth: GroundTruth,
}

pub fn generate(cfg: &GenConfig) -> Result<Scenario> {
    cfg.validate()?;
    let (news, news_truth) = gen_news(cfg)?;
    let (mut spikes, collective) = gen_collective_spikes(cfg)?;
    spikes.extend(news.spikes.iter().copied());
    let (panel, returns) = gen_returns(cfg, &spikes)?;
    let (trades, trades_truth) = gen_trades(cfg)?;
    Ok(Scenario {
        panel,
        news,
        trades,
        truth: GroundTruth {
            schema: TRUTH_SCHEMA.into(),
            config: cfg.clone(),
            returns,
            news: news_truth,
            collective,
            trades: trades_truth,
        },
    })
}

/// File names written by [`Scenario::write`].
pub mod files {
    pub const BARS: &str = "bars.csv";
    pub const NEWS_PRIMARY: &str = "news_primary.csv";
    pub const NEWS_SECONDARY: &str = "news_secondary.csv";
    pub const TRADES: &str = "trades.csv";
    pub const ALIASES: &str = "aliases.txt";
    pub const BLOCKLIST: &str = "blocklist.txt";
    pub const SECTORS: &str = "sectors.csv";
    pub const TRUTH: &str = "truth.json";
}

impl Scenario {
    /// Write all inputs in the formats the readers accept, plus the truth sidecar.
    pub fn write(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        let cfg = &self.truth.config;
        let path = |f: &str| dir.join(f);
        write_bars_file(&self.panel, &path(files::BARS))?;
        write_news_file(&self.news.primary, &path(files::NEWS_PRIMARY))?;
        write_news_file(&self.news.secondary, &path(files::NEWS_SECONDARY))?;
        write_trades_file(&self.trades, &path(files::TRADES))?;

        let p = path(files::ALIASES);
        let mut w = create(&p)?;
        (|| -> std::io::Result<()> {
            for s in 0..cfg.n_stocks {
                writeln!(w, "{}={}", ticker(s), company(s))?;
            }
            w.flush()
        })()
        .map_err(|e| Error::io(&p, e))?;

        let p = path(files::BLOCKLIST);
        let mut w = create(&p)?;
        (|| -> std::io::Result<()> {
            writeln!(w, "# automated or generic headlines")?;
            for b in crate::newsfeed::DEFAULT_BLOCKLIST {
                writeln!(w, "{b}")?;
            }
            w.flush()
        })()
        .map_err(|e| Error::io(&p, e))?;

        let p = path(files::SECTORS);
        let mut w = create(&p)?;
        (|| -> std::io::Result<()> {
            writeln!(w, "ticker,sector")?;
            for (s, label) in cfg.sector_labels().iter().enumerate() {
                writeln!(w, "{},{label}", ticker(s))?;
            }
            w.flush()
        })()
        .map_err(|e| Error::io(&p, e))?;

        write_json(&path(files::TRUTH), &self.truth)?;
        Ok([
            files::BARS,
            files::NEWS_PRIMARY,
            files::NEWS_SECONDARY,
            files::TRADES,
            files::ALIASES,
            files::BLOCKLIST,
            files::SECTORS,
            files::TRUTH,
        ]
        .iter()
        .map(|f| path(f))
        .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GenConfig {
        GenConfig {
            n_stocks: 6,
            n_days: 3,
            ..Default::default()
        }
    }

    #[test]
    fn validation_rejects_bad_exponent() {
        let mut c = small();
        c.returns.tail_exponent = 0.9;
        assert!(matches!(gen_returns(&c, &[]), Err(Error::InvalidParameter { .. })));
        let mut c = small();
        c.market.participation_exponent = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn returns_are_deterministic() {
        let (a, _) = gen_returns(&small(), &[]).unwrap();
        let (b, _) = gen_returns(&small(), &[]).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        let mut other = small();
        other.seed += 1;
        let (c, _) = gen_returns(&other, &[]).unwrap();
        assert_ne!(a.closes(0)[5], c.closes(0)[5]);
    }

    #[test]
    fn forced_spike_size() {
        let mut c = small();
        c.returns.intraday_amplitude = 0.0;
        c.returns.shock_rate = 0.0;
        let spike = Spike {
            stock: 2,
            stamp: BinStamp::new(1, 100),
            size: 10.0,
            relax: None,
        };
        let (p, t) = gen_returns(&c, &[spike]).unwrap();
        let i = p.calendar().index(spike.stamp);
        let a = p.abs_return(2, i).unwrap();
        assert!(a >= 10.0 * t.abs_return_mean * (1.0 - 1e-9));
    }

    #[test]
    fn bernoulli_hit_rate() {
        let mut rng = stream(5, 0, 0);
        let hits = bernoulli_hits(&mut rng, 0.01, 1_000_000);
        assert!((hits.len() as f64 / 1e4 - 1.0).abs() < 0.05);
        assert!(hits.windows(2).all(|w| w[0] < w[1]));
        assert!(bernoulli_hits(&mut rng, 0.0, 10).is_empty());
        assert_eq!(bernoulli_hits(&mut rng, 1.0, 4), vec![0, 1, 2, 3]);
    }

    #[test]
    fn full_participation_means_every_stock() {
        let mut c = small();
        c.market.min_participation = 1.0;
        c.market.rate = 0.01;
        let (ind, truth) = gen_market(&c).unwrap();
        assert!(!truth.market_bins.is_empty());
        for &(bin, k) in &truth.market_bins {
            assert_eq!(k, c.n_stocks);
            assert_eq!(ind.jumping(bin).len(), c.n_stocks);
        }
    }

    #[test]
    fn zero_lambda_equals_independent() {
        let mut a = small();
        a.trades.coupled = true;
        a.trades.lambda = 0.0;
        let b = small();
        assert_eq!(gen_trades(&a).unwrap().0, gen_trades(&b).unwrap().0);
    }
}
