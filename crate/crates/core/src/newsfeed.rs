//! News ingestion: avalanche collapse, blocklist, company-name attribution,
//! and two-feed merging.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{create, open, parse_timestamp};
use crate::timebase::{BarPanel, BinStamp, StockStamp, TradingCalendar};

pub const NEWS_HEADER: &str = "timestamp,source,story_id,tickers,headline";

/// Shipped default for automated or generic headlines. Only closing
/// imbalances are known to belong here; the rest are common wire boilerplate.
pub const DEFAULT_BLOCKLIST: &[&str] = &[
    "imbalance",
    "market on close",
    "moc order",
    "52-week high",
    "52-week low",
    "most active",
    "trading halt",
    "halted",
    "options activity",
    "stocks to watch",
    "market snapshot",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawNewsRecord {
    pub at: NaiveDateTime,
    pub source: String,
    pub story_id: String,
    pub tickers: Vec<String>,
    pub headline: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NewsEvent {
    pub at: NaiveDateTime,
    pub ticker: String,
    pub source: String,
    pub story_id: String,
    pub stamp: BinStamp,
    pub headline: String,
}

/// Company aliases and blocklisted headline patterns, matched
/// case-insensitively as substrings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NewsRules {
    aliases: BTreeMap<String, Vec<String>>,
    blocklist: Vec<String>,
}

impl NewsRules {
    pub fn new<I, J>(aliases: I, blocklist: J) -> Self
    where
        I: IntoIterator<Item = (String, Vec<String>)>,
        J: IntoIterator<Item = String>,
    {
        Self {
            aliases: aliases
                .into_iter()
                .map(|(t, names)| (t, names.into_iter().map(|n| n.to_lowercase()).filter(|n| !n.is_empty()).collect()))
                .collect(),
            blocklist: blocklist
                .into_iter()
                .map(|p| p.to_lowercase())
                .filter(|p| !p.is_empty())
                .collect(),
        }
    }

    pub fn with_default_blocklist<I>(aliases: I) -> Self
    where
        I: IntoIterator<Item = (String, Vec<String>)>,
    {
        Self::new(aliases, DEFAULT_BLOCKLIST.iter().map(|s| s.to_string()))
    }

    /// `TICKER=Name one|Name two` per line; `#` starts a comment.
    pub fn parse_aliases(text: &str) -> Result<Vec<(String, Vec<String>)>> {
        let mut out = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (ticker, names) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("alias line {}: expected TICKER=names", n + 1)))?;
            out.push((
                ticker.trim().to_string(),
                names.split('|').map(|s| s.trim().to_string()).collect(),
            ));
        }
        Ok(out)
    }

    pub fn universe(&self) -> impl Iterator<Item = &str> {
        self.aliases.keys().map(String::as_str)
    }

    pub fn aliases(&self, ticker: &str) -> &[String] {
        self.aliases.get(ticker).map_or(&[], Vec::as_slice)
    }

    pub fn blocklist(&self) -> &[String] {
        &self.blocklist
    }

    fn blocked(&self, headline_lc: &str) -> bool {
        self.blocklist.iter().any(|p| headline_lc.contains(p.as_str()))
    }

    fn names_company(&self, ticker: &str, headline_lc: &str) -> bool {
        self.aliases(ticker).iter().any(|a| headline_lc.contains(a.as_str()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub duplicate_story: usize,
    pub blocklisted: usize,
    pub out_of_session: usize,
    /// Record tickers that are outside the universe or not named in the headline.
    pub no_name_match: usize,
    pub emitted: usize,
}

/// Keep the first record of each story, drop blocklisted headlines and
/// out-of-session records, then emit one event per universe ticker whose
/// company name appears in the headline.
pub fn filter_news(
    records: &[RawNewsRecord],
    universe: &[String],
    rules: &NewsRules,
    calendar: &TradingCalendar,
) -> (Vec<NewsEvent>, FilterReport) {
    let mut report = FilterReport {
        input: records.len(),
        ..Default::default()
    };
    let mut sorted: Vec<&RawNewsRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (a.at, &a.source, &a.story_id, &a.headline, &a.tickers).cmp(&(b.at, &b.source, &b.story_id, &b.headline, &b.tickers))
    });

    let mut seen_story: HashMap<&str, ()> = HashMap::new();
    let mut events = Vec::new();
    for rec in sorted {
        if seen_story.insert(rec.story_id.as_str(), ()).is_some() {
            report.duplicate_story += 1;
            continue;
        }
        let headline_lc = rec.headline.to_lowercase();
        if rules.blocked(&headline_lc) {
            report.blocklisted += 1;
            continue;
        }
        let Some(stamp) = calendar.stamp_of(rec.at) else {
            report.out_of_session += 1;
            continue;
        };
        for ticker in &rec.tickers {
            if universe.iter().any(|u| u == ticker) && rules.names_company(ticker, &headline_lc) {
                events.push(NewsEvent {
                    at: rec.at,
                    ticker: ticker.clone(),
                    source: rec.source.clone(),
                    story_id: rec.story_id.clone(),
                    stamp,
                    headline: rec.headline.clone(),
                });
            } else {
                report.no_name_match += 1;
            }
        }
    }
    events.sort();
    report.emitted = events.len();
    (events, report)
}

/// Fold events back into raw records, one per story, tickers joined.
pub fn events_to_records(events: &[NewsEvent]) -> Vec<RawNewsRecord> {
    let mut grouped: BTreeMap<(NaiveDateTime, &str, &str, &str), Vec<String>> = BTreeMap::new();
    for e in events {
        grouped
            .entry((e.at, &e.source, &e.story_id, &e.headline))
            .or_default()
            .push(e.ticker.clone());
    }
    grouped
        .into_iter()
        .map(|((at, source, story_id, headline), tickers)| RawNewsRecord {
            at,
            source: source.to_string(),
            story_id: story_id.to_string(),
            tickers,
            headline: headline.to_string(),
        })
        .collect()
}

/// Map events onto panel rows; events for tickers outside the panel are dropped.
pub fn to_stock_stamps(events: &[NewsEvent], panel: &BarPanel) -> Vec<StockStamp> {
    events
        .iter()
        .filter_map(|e| {
            panel.stock_index(&e.ticker).map(|stock| StockStamp {
                stock,
                stamp: e.stamp,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayHistogram {
    /// Lower edge of the first bin, minutes.
    pub lower: f64,
    pub bin_width: f64,
    pub counts: Vec<usize>,
    /// Raw delays t(secondary) - t(primary), minutes.
    pub delays: Vec<f64>,
}

impl DelayHistogram {
    fn new(delays: Vec<f64>, half_range: f64, bin_width: f64) -> Self {
        let n_bins = ((2.0 * half_range) / bin_width).ceil() as usize;
        let mut counts = vec![0; n_bins.max(1)];
        for &d in &delays {
            let b = ((d + half_range) / bin_width).floor();
            let b = (b.max(0.0) as usize).min(counts.len() - 1);
            counts[b] += 1;
        }
        Self {
            lower: -half_range,
            bin_width,
            counts,
            delays,
        }
    }

    pub fn mean(&self) -> f64 {
        self.delays.iter().sum::<f64>() / self.delays.len() as f64
    }

    /// Fraction of pairs where the primary feed was strictly first.
    pub fn primary_first_fraction(&self) -> f64 {
        self.delays.iter().filter(|&&d| d > 0.0).count() as f64 / self.delays.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct MergeResult {
    pub events: Vec<NewsEvent>,
    pub histogram: DelayHistogram,
    /// Pairs merged into one event.
    pub matched: usize,
    /// Matched pairs where both sides were preceded by the silence period.
    pub matched_isolated: usize,
    pub appended: usize,
}

fn minutes_between(a: NaiveDateTime, b: NaiveDateTime) -> f64 {
    (b - a).num_seconds() as f64 / 60.0
}

fn isolation(events: &[&NewsEvent], silence: f64) -> Vec<bool> {
    (0..events.len())
        .map(|i| i == 0 || minutes_between(events[i - 1].at, events[i].at) >= silence)
        .collect()
}

fn by_ticker(events: &[NewsEvent]) -> BTreeMap<&str, Vec<&NewsEvent>> {
    let mut m: BTreeMap<&str, Vec<&NewsEvent>> = BTreeMap::new();
    for e in events {
        m.entry(e.ticker.as_str()).or_default().push(e);
    }
    for v in m.values_mut() {
        v.sort();
    }
    m
}

/// Merge a secondary feed into a primary one.
///
/// Per ticker, events of the two feeds pair up one-to-one, nearest first,
/// when they are at most `match_window` minutes apart. A pair becomes one
/// event at the earlier time; unpaired secondary events are appended. Only
/// pairs where each side is preceded by `silence` minutes without news in its
/// own feed contribute to the delay histogram.
pub fn merge_feeds(primary: &[NewsEvent], secondary: &[NewsEvent], match_window: f64, silence: f64) -> MergeResult {
    let prim = by_ticker(primary);
    let sec = by_ticker(secondary);

    let mut out = Vec::with_capacity(primary.len() + secondary.len());
    let mut delays = Vec::new();
    let (mut matched, mut matched_isolated, mut appended) = (0, 0, 0);

    let empty = Vec::new();
    let tickers: std::collections::BTreeSet<&str> = prim.keys().chain(sec.keys()).copied().collect();
    for ticker in tickers {
        let p = prim.get(ticker).unwrap_or(&empty);
        let s = sec.get(ticker).unwrap_or(&empty);
        let p_iso = isolation(p, silence);
        let s_iso = isolation(s, silence);

        let mut candidates: Vec<(i64, usize, usize)> = Vec::new();
        let mut lo = 0;
        for (i, pe) in p.iter().enumerate() {
            while lo < s.len() && minutes_between(s[lo].at, pe.at) > match_window {
                lo += 1;
            }
            for (j, se) in s.iter().enumerate().skip(lo) {
                let d = minutes_between(pe.at, se.at);
                if d > match_window {
                    break;
                }
                candidates.push(((se.at - pe.at).num_seconds().abs(), i, j));
            }
        }
        candidates.sort_unstable();
        let mut p_pair: Vec<Option<usize>> = vec![None; p.len()];
        let mut s_used = vec![false; s.len()];
        for (_, i, j) in candidates {
            if p_pair[i].is_none() && !s_used[j] {
                p_pair[i] = Some(j);
                s_used[j] = true;
            }
        }

        for (i, pe) in p.iter().enumerate() {
            let mut ev = (*pe).clone();
            if let Some(j) = p_pair[i] {
                matched += 1;
                let se = s[j];
                if p_iso[i] && s_iso[j] {
                    matched_isolated += 1;
                    delays.push(minutes_between(pe.at, se.at));
                }
                if se.at < pe.at {
                    ev.at = se.at;
                    ev.stamp = se.stamp;
                }
            }
            out.push(ev);
        }
        for (j, se) in s.iter().enumerate() {
            if !s_used[j] {
                appended += 1;
                out.push((*se).clone());
            }
        }
    }
    out.sort();
    MergeResult {
        events: out,
        histogram: DelayHistogram::new(delays, match_window, 1.0),
        matched,
        matched_isolated,
        appended,
    }
}

pub fn read_news<R: Read>(r: R) -> Result<Vec<RawNewsRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != NEWS_HEADER {
        return Err(Error::Parse(format!("expected header `{NEWS_HEADER}`, found `{}`", header.join(","))));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let get = |i: usize| row.get(i).ok_or_else(|| Error::Parse(format!("line {line}: missing column {i}")));
        let story_id = get(2)?.to_string();
        if story_id.is_empty() {
            return Err(Error::Parse(format!("line {line}: empty story_id")));
        }
        out.push(RawNewsRecord {
            at: parse_timestamp(get(0)?)?,
            source: get(1)?.to_string(),
            story_id,
            tickers: get(3)?
                .split('|')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect(),
            headline: get(4)?.to_string(),
        });
    }
    Ok(out)
}

pub fn read_news_file(path: &Path) -> Result<Vec<RawNewsRecord>> {
    read_news(open(path)?)
}

pub fn write_news<W: Write>(records: &[RawNewsRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(NEWS_HEADER.split(','))?;
    for r in records {
        let ts = if r.at.and_utc().timestamp() % 60 == 0 {
            r.at.format("%Y-%m-%dT%H:%M").to_string()
        } else {
            r.at.format("%Y-%m-%dT%H:%M:%S").to_string()
        };
        wr.write_record([ts.as_str(), &r.source, &r.story_id, &r.tickers.join("|"), &r.headline])?;
    }
    wr.flush().map_err(|e| Error::Parse(format!("write news: {e}")))
}

pub fn write_news_file(records: &[RawNewsRecord], path: &Path) -> Result<()> {
    write_news(records, create(path)?)
}
