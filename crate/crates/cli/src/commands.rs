//! The analysis subcommands. Each reads its inputs, writes its artifacts under
//! `out_dir/<command>` and records a manifest there.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use jumplab::collective::{
    background_coincidence, chi_series, cojump_matrix, explained_fraction, sector_jumps, CollectiveEvents,
    DecompositionSummary, Explained, IndicatorPanel,
};
use jumplab::eventstudy::{conditional_rate, fit_relaxation, pre_post_baseline, vol_profile, PrePost, RateNorm, RelaxFit};
use jumplab::io::{read_bars_file, read_json, read_jumps_file, read_lines, read_trades_file, write_json, write_jumps_file, write_rows};
use jumplab::jumps::{baseline, classify_news_jumps, counts_above, detect_jumps as detect, JumpEvent};
use jumplab::newsfeed::{filter_news, merge_feeds, read_news_file, to_stock_stamps, FilterReport, NewsEvent, NewsRules};
use jumplab::synth::{files, generate};
use jumplab::tail::{ccdf, hill, TailFit, TailSelection, MIN_TAIL};
use jumplab::taildep::{bar_pairs, default_grid, tail_curve, trade_pairs, TailCurve, TradeReport};
use jumplab::timebase::{
    build_panel, intraday_mean_curve, BarPanel, IngestReport, Quantity, SeasonalCurve, StockStamp, TradingCalendar,
};
use jumplab::Error;
use serde::{Deserialize, Serialize};

use crate::config::{session_minute, RunConfig};
use crate::manifest::Recorder;
use crate::CliError;

pub const PANEL: &str = "panel.csv";
pub const CALENDAR: &str = "calendar.json";
pub const SUMMARY: &str = "summary.json";
pub const JUMPS: &str = "jumps.csv";
pub const SCORE_CCDF: &str = "score_ccdf.csv";
pub const NEWS_EVENTS: &str = "news_events.csv";
pub const NEWS_INTRADAY: &str = "news_intraday.csv";
pub const DELAY_HISTOGRAM: &str = "delay_histogram.csv";
pub const NEWS_JUMP_CCDF: &str = "news_jump_ccdf.csv";
pub const RATE_JUMP_JUMP: &str = "rate_jump_jump.csv";
pub const RATE_NEWS_NEWS: &str = "rate_news_news.csv";
pub const RATE_JUMP_NEWS: &str = "rate_jump_news.csv";
pub const VOL_NEWS: &str = "vol_news.csv";
pub const CHI: &str = "chi.csv";
pub const CHI_CCDF: &str = "chi_ccdf.csv";
pub const EIGENVALUES: &str = "eigenvalues.csv";
pub const EXPLAINED: &str = "explained.csv";
pub const TAIL_TRADES: &str = "trades.csv";
pub const TAIL_BARS: &str = "bars.csv";

/// Top `fraction` of `n` values, but never fewer than the Hill minimum.
fn top_fraction(fraction: f64, n: usize) -> TailSelection {
    TailSelection::Count(((fraction * n as f64) as usize).max(MIN_TAIL))
}

pub fn s_tag(s: f64) -> String {
    format!("s{s}")
}

pub fn vol_news_jumps(s: f64) -> String {
    format!("vol_news_jumps_{}.csv", s_tag(s))
}

pub fn vol_endogenous(s: f64) -> String {
    format!("vol_endogenous_{}.csv", s_tag(s))
}

/// Writes artifacts into one directory and remembers them for the manifest.
struct Out<'a> {
    dir: PathBuf,
    rec: &'a mut Recorder,
}

impl Out<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn rows<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), Error> {
        let p = self.path(name);
        write_rows(&p, rows)?;
        self.rec.output(&p);
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), Error> {
        let p = self.path(name);
        write_json(&p, value)?;
        self.rec.output(&p);
        Ok(())
    }
}

/// Write the manifest, then report any refusals.
fn finish<P: Serialize>(rec: Recorder, dir: &Path, params: &P) -> Result<(), CliError> {
    let m = rec.finish(dir, params)?;
    println!("{}: {} outputs in {}", m.command, m.outputs.len(), dir.display());
    if m.refusals.is_empty() {
        Ok(())
    } else {
        Err(CliError::Refused(m.refusals))
    }
}

/// Existence check up front so a missing file is reported by path before any work.
fn require(path: &Path) -> Result<(), Error> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveRow {
    pub bin: usize,
    pub time: String,
    pub value: f64,
    pub stderr: f64,
}

fn curve_rows(curve: &SeasonalCurve, cal: &TradingCalendar) -> Vec<CurveRow> {
    (0..curve.len())
        .map(|b| CurveRow {
            bin: b,
            time: cal.time_of(b as u16).format("%H:%M").to_string(),
            value: curve.values()[b],
            stderr: curve.stderr()[b],
        })
        .collect()
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let mut rec = Recorder::new("synth");
    let dir = cfg.dir("synth");
    let sc = generate(&cfg.synth)?;
    for p in sc.write(&dir)? {
        rec.output(&p);
    }
    finish(rec, &dir, &Params { out_dir: &cfg.out_dir, section: &cfg.synth })
}

#[derive(Serialize)]
struct Params<'a, T: Serialize> {
    out_dir: &'a Path,
    #[serde(flatten)]
    section: &'a T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSummary {
    pub bars: PathBuf,
    pub n_stocks: usize,
    pub n_days: usize,
    pub n_bins: usize,
    pub report: IngestReport,
}

pub fn ingest(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate_ingest()?;
    let mut rec = Recorder::new("ingest");
    let bars = cfg.bars_path();
    require(&bars)?;
    rec.input(&bars);
    let mut universe = cfg.ingest.universe.clone();
    if let Some(u) = &cfg.ingest.universe_file {
        rec.input(u);
        universe.extend(read_lines(u)?);
    }

    let records = read_bars_file(&bars)?;
    let days: BTreeSet<_> = records.iter().map(|r| r.date).collect();
    let cal = TradingCalendar::new(
        session_minute(&cfg.ingest.session_open, "ingest.session_open")?,
        session_minute(&cfg.ingest.session_close, "ingest.session_close")?,
        days.into_iter().collect(),
    )?;
    let (mut panel, report) = build_panel(records, cal);
    if !universe.is_empty() {
        panel = panel.restrict(&universe);
    }
    if panel.n_stocks() == 0 || panel.n_bins() == 0 {
        return Err(Error::EmptyPanel.into());
    }

    let dir = cfg.dir("ingest");
    let mut out = Out { dir: dir.clone(), rec: &mut rec };
    let p = out.path(PANEL);
    jumplab::io::write_bars_file(&panel, &p)?;
    out.rec.output(&p);
    out.json(CALENDAR, panel.calendar())?;
    let curve = out.rec.attempt("intraday |r| curve", intraday_mean_curve(&panel, Quantity::AbsReturn))?;
    if let Some(curve) = curve {
        out.rows("intraday_abs_return.csv", &curve_rows(&curve, panel.calendar()))?;
    }
    out.json(
        SUMMARY,
        &IngestSummary {
            bars: bars.clone(),
            n_stocks: panel.n_stocks(),
            n_days: panel.calendar().n_days(),
            n_bins: panel.n_bins(),
            report,
        },
    )?;
    finish(rec, &dir, &Params { out_dir: &cfg.out_dir, section: &cfg.ingest })
}

fn load_panel(cfg: &RunConfig, rec: &mut Recorder) -> Result<BarPanel, Error> {
    let dir = cfg.dir("ingest");
    let cal_path = dir.join(CALENDAR);
    let bars = dir.join(PANEL);
    require(&cal_path)?;
    require(&bars)?;
    rec.input(&cal_path);
    rec.input(&bars);
    let cal: TradingCalendar = read_json(&cal_path)?;
    let (panel, _) = build_panel(read_bars_file(&bars)?, cal);
    if panel.n_stocks() == 0 {
        return Err(Error::EmptyPanel);
    }
    Ok(panel)
}

fn load_jumps(cfg: &RunConfig, panel: &BarPanel, rec: &mut Recorder) -> Result<Vec<JumpEvent>, Error> {
    let p = cfg.dir("detect-jumps").join(JUMPS);
    require(&p)?;
    rec.input(&p);
    read_jumps_file(&p, panel)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountRow {
    pub s: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Doubling {
    /// jumps(2s) / jumps(s).
    pub ratio: f64,
    /// 2^(−exponent) from the score tail fit.
    pub predicted: f64,
    pub predicted_stderr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectSummary {
    pub s: f64,
    pub n_jumps: usize,
    pub degenerate: usize,
    pub fit: Option<TailFit>,
    pub counts: Vec<CountRow>,
    pub doubling: Option<Doubling>,
}

pub fn detect_jumps(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate_detect()?;
    let d = &cfg.detect_jumps;
    let mut rec = Recorder::new("detect-jumps");
    let panel = load_panel(cfg, &mut rec)?;
    let base = baseline(&panel, d.window, d.min_history, d.window_policy)?;
    let det = detect(&panel, &base, d.s)?;

    let dir = cfg.dir("detect-jumps");
    let mut out = Out { dir: dir.clone(), rec: &mut rec };
    let p = out.path(JUMPS);
    write_jumps_file(&det.events, &panel, &p)?;
    out.rec.output(&p);

    let scores: Vec<f64> = det.events.iter().map(|e| e.score).collect();
    out.rows(SCORE_CCDF, &ccdf(&scores, 20))?;
    let fit = out.rec.attempt("score tail fit", hill(&scores, top_fraction(d.tail_fraction, scores.len())))?;
    let counts: Vec<CountRow> = d
        .count_thresholds
        .iter()
        .zip(counts_above(&det.events, &d.count_thresholds))
        .map(|(&s, count)| CountRow { s, count })
        .collect();
    let pair = counts_above(&det.events, &[d.s, 2.0 * d.s]);
    let doubling = fit.filter(|_| pair[0] > 0).map(|f| {
        let predicted = 2f64.powf(-f.exponent);
        Doubling {
            ratio: pair[1] as f64 / pair[0] as f64,
            predicted,
            predicted_stderr: predicted * std::f64::consts::LN_2 * f.stderr,
        }
    });
    out.json(
        SUMMARY,
        &DetectSummary {
            s: d.s,
            n_jumps: det.events.len(),
            degenerate: det.degenerate,
            fit,
            counts,
            doubling,
        },
    )?;
    finish(rec, &dir, &Params { out_dir: &cfg.out_dir, section: d })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewsRow {
    pub timestamp: String,
    pub ticker: String,
    pub source: String,
    pub story_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelayRow {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergeSummary {
    pub matched: usize,
    pub matched_isolated: usize,
    pub appended: usize,
    pub delay_mean: f64,
    pub primary_first_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionRow {
    pub s: f64,
    pub n_news: usize,
    pub n_endogenous: usize,
    pub news_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxEntry {
    pub s: f64,
    /// `news` or `endogenous`.
    pub class: String,
    pub n_triggers: usize,
    pub profile: Option<String>,
    pub fit: Option<RelaxFit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventStudySummary {
    pub s_values: Vec<f64>,
    pub n_news_events: usize,
    pub primary: FilterReport,
    pub secondary: Option<FilterReport>,
    pub merge: Option<MergeSummary>,
    pub partition: Vec<PartitionRow>,
    pub news_jump_fit: Option<TailFit>,
    /// Volatility level before vs after all news.
    pub pre_post: Option<PrePost>,
    pub relaxation: Vec<RelaxEntry>,
}

fn news_rules(cfg: &RunConfig, rec: &mut Recorder) -> Result<NewsRules, Error> {
    let e = &cfg.event_study;
    let aliases = cfg.input(&e.aliases, files::ALIASES);
    require(&aliases)?;
    rec.input(&aliases);
    let text = std::fs::read_to_string(&aliases).map_err(|err| Error::io(&aliases, err))?;
    let aliases = NewsRules::parse_aliases(&text)?;
    let block = cfg.input(&e.blocklist, files::BLOCKLIST);
    require(&block)?;
    rec.input(&block);
    Ok(NewsRules::new(aliases, read_lines(&block)?))
}

fn read_feed(path: &Path, rec: &mut Recorder) -> Result<Vec<jumplab::newsfeed::RawNewsRecord>, Error> {
    require(path)?;
    rec.input(path);
    read_news_file(path)
}

fn stamps_above(jumps: &[JumpEvent], s: f64) -> Vec<JumpEvent> {
    jumps.iter().filter(|j| j.score > s).copied().collect()
}

pub fn event_study(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate_detect()?;
    cfg.validate_event_study()?;
    let e = &cfg.event_study;
    let mut rec = Recorder::new("event-study");
    let panel = load_panel(cfg, &mut rec)?;
    let jumps = load_jumps(cfg, &panel, &mut rec)?;
    let rules = news_rules(cfg, &mut rec)?;
    let primary_raw = read_feed(&cfg.input(&e.news_primary, files::NEWS_PRIMARY), &mut rec)?;
    let secondary_raw = if e.use_secondary {
        Some(read_feed(&cfg.input(&e.news_secondary, files::NEWS_SECONDARY), &mut rec)?)
    } else {
        None
    };

    let cal = panel.calendar();
    let bpd = cal.bins_per_day();
    let n_cells = panel.n_stocks() * cal.n_days();
    let universe = panel.tickers().to_vec();
    let (primary, primary_report) = filter_news(&primary_raw, &universe, &rules, cal);
    let mut secondary_report = None;
    let mut merge = None;
    let mut histogram = None;
    let events: Vec<NewsEvent> = match &secondary_raw {
        Some(raw) => {
            let (secondary, report) = filter_news(raw, &universe, &rules, cal);
            secondary_report = Some(report);
            let m = merge_feeds(&primary, &secondary, e.match_window, e.silence);
            merge = Some(MergeSummary {
                matched: m.matched,
                matched_isolated: m.matched_isolated,
                appended: m.appended,
                delay_mean: m.histogram.mean(),
                primary_first_fraction: m.histogram.primary_first_fraction(),
            });
            histogram = Some(m.histogram);
            m.events
        }
        None => primary,
    };
    let news = to_stock_stamps(&events, &panel);

    let dir = cfg.dir("event-study");
    let mut out = Out { dir: dir.clone(), rec: &mut rec };
    let rows: Vec<NewsRow> = events
        .iter()
        .map(|ev| NewsRow {
            timestamp: ev.at.format("%Y-%m-%dT%H:%M:%S").to_string(),
            ticker: ev.ticker.clone(),
            source: ev.source.clone(),
            story_id: ev.story_id.clone(),
        })
        .collect();
    out.rows(NEWS_EVENTS, &rows)?;
    if let Some(h) = &histogram {
        let rows: Vec<DelayRow> = h
            .counts
            .iter()
            .enumerate()
            .map(|(i, &count)| DelayRow {
                lower: h.lower + i as f64 * h.bin_width,
                upper: h.lower + (i + 1) as f64 * h.bin_width,
                count,
            })
            .collect();
        out.rows(DELAY_HISTOGRAM, &rows)?;
    }
    let news_curve = out.rec.attempt("news intraday curve", SeasonalCurve::from_event_counts(&news, bpd, n_cells))?;
    if let Some(c) = &news_curve {
        out.rows(NEWS_INTRADAY, &curve_rows(c, cal))?;
    }

    let mut partition = Vec::new();
    let mut parts = Vec::new();
    for &s in &e.s_values {
        let p = classify_news_jumps(&stamps_above(&jumps, s), &news, e.assoc_window, bpd);
        partition.push(PartitionRow {
            s,
            n_news: p.news.len(),
            n_endogenous: p.endogenous.len(),
            news_fraction: p.news_fraction(),
        });
        parts.push((s, p));
    }

    let base_part = classify_news_jumps(&jumps, &news, e.assoc_window, bpd);
    let news_scores: Vec<f64> = base_part.news.iter().map(|j| j.score).collect();
    out.rows(NEWS_JUMP_CCDF, &ccdf(&news_scores, 20))?;
    let news_jump_fit = out.rec.attempt("news-jump tail fit", hill(&news_scores, top_fraction(e.tail_fraction, news_scores.len())))?;

    // clustering at the first s value
    let s0 = e.s_values[0];
    let jump_stamps: Vec<StockStamp> = stamps_above(&jumps, s0).iter().map(JumpEvent::stock_stamp).collect();
    let rates: [(&str, &[StockStamp], &[StockStamp]); 3] = [
        (RATE_JUMP_JUMP, &jump_stamps, &jump_stamps),
        (RATE_NEWS_NEWS, &news, &news),
        (RATE_JUMP_NEWS, &news, &jump_stamps),
    ];
    for (name, triggers, targets) in rates {
        let curve = out.rec.attempt(name, SeasonalCurve::from_event_counts(targets, bpd, n_cells))?;
        let Some(curve) = curve else { continue };
        let prof = conditional_rate(triggers, targets, panel.n_stocks(), cal, e.max_lag, RateNorm::Deseasonalized(&curve));
        if let Some(prof) = out.rec.attempt(name, prof)? {
            out.rows(name, &prof.rows())?;
        }
    }

    let u = out.rec.attempt("intraday |r| curve", intraday_mean_curve(&panel, Quantity::AbsReturn))?;
    let scale = panel.mean_abs_returns();
    let mut pre_post = None;
    let mut relaxation = Vec::new();
    if let Some(u) = &u {
        if let Some(prof) = out.rec.attempt("volatility after news", vol_profile(&news, &panel, e.max_lag, u, &scale))? {
            out.rows(VOL_NEWS, &prof.rows())?;
            pre_post = out.rec.attempt("pre/post baseline", pre_post_baseline(&prof, e.inner))?;
        }
        for (s, p) in &parts {
            for (class, set, name) in [("news", &p.news, vol_news_jumps(*s)), ("endogenous", &p.endogenous, vol_endogenous(*s))] {
                let triggers: Vec<StockStamp> = set.iter().map(JumpEvent::stock_stamp).collect();
                let what = format!("{class} jumps at {}", s_tag(*s));
                let prof = out.rec.attempt(&what, vol_profile(&triggers, &panel, e.max_lag, u, &scale))?;
                let mut entry = RelaxEntry {
                    s: *s,
                    class: class.to_string(),
                    n_triggers: triggers.len(),
                    profile: None,
                    fit: None,
                };
                if let Some(prof) = prof {
                    out.rows(&name, &prof.rows())?;
                    entry.profile = Some(name);
                    entry.fit = out.rec.attempt(&format!("relaxation fit, {what}"), fit_relaxation(&prof, e.tau_max))?;
                }
                relaxation.push(entry);
            }
        }
    }

    out.json(
        SUMMARY,
        &EventStudySummary {
            s_values: e.s_values.clone(),
            n_news_events: events.len(),
            primary: primary_report,
            secondary: secondary_report,
            merge,
            partition,
            news_jump_fit,
            pre_post,
            relaxation,
        },
    )?;
    finish(rec, &dir, &Params { out_dir: &cfg.out_dir, section: e })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChiRow {
    pub date: String,
    pub time: String,
    pub chi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenRow {
    pub rank: usize,
    pub eigenvalue: f64,
    pub outside_band: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Loading {
    pub ticker: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectorRow {
    pub label: String,
    pub members: usize,
    pub n_events: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainedRow {
    pub half_window: usize,
    pub market: f64,
    pub market_and_sectors: Option<f64>,
    pub background: f64,
    pub total: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollectiveSummary {
    pub s: f64,
    pub s_prime: f64,
    pub n_jumps: usize,
    pub spectrum: Option<DecompositionSummary>,
    pub leading_vector: Vec<Loading>,
    pub n_market_events: usize,
    pub market_rate: f64,
    pub chi_fit: Option<TailFit>,
    pub sectors: Vec<SectorRow>,
    pub skipped_sectors: Vec<(String, usize)>,
    pub explained: Vec<ExplainedRow>,
}

fn read_sector_labels(path: &Path, panel: &BarPanel) -> Result<Vec<String>, Error> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for row in rdr.deserialize::<(String, String)>() {
        let (ticker, sector) = row.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        map.insert(ticker, sector);
    }
    panel
        .tickers()
        .iter()
        .map(|t| {
            map.get(t)
                .cloned()
                .ok_or_else(|| Error::Parse(format!("{}: no sector for {t}", path.display())))
        })
        .collect()
}

pub fn collective(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate_detect()?;
    cfg.validate_collective()?;
    let c = &cfg.collective;
    let mut rec = Recorder::new("collective");
    let panel = load_panel(cfg, &mut rec)?;
    let jumps = load_jumps(cfg, &panel, &mut rec)?;
    let labels = if c.use_sectors {
        let p = cfg.input(&c.sectors, files::SECTORS);
        require(&p)?;
        rec.input(&p);
        Some(read_sector_labels(&p, &panel)?)
    } else {
        None
    };
    let cal = panel.calendar();
    let stamps: Vec<StockStamp> = stamps_above(&jumps, c.s).iter().map(JumpEvent::stock_stamp).collect();
    let ind = IndicatorPanel::from_events(&stamps, panel.n_stocks(), cal);

    let dir = cfg.dir("collective");
    let mut out = Out { dir: dir.clone(), rec: &mut rec };
    let dec = out.rec.attempt("co-jump matrix", cojump_matrix(&ind))?;
    let mut summary = CollectiveSummary {
        s: c.s,
        s_prime: c.s_prime,
        n_jumps: stamps.len(),
        spectrum: dec.as_ref().map(|d| d.summary()),
        leading_vector: Vec::new(),
        n_market_events: 0,
        market_rate: 0.0,
        chi_fit: None,
        sectors: Vec::new(),
        skipped_sectors: Vec::new(),
        explained: Vec::new(),
    };
    let sj = match &labels {
        Some(l) => out.rec.attempt("sector jumps", sector_jumps(&ind, l, c.s_prime))?,
        None => None,
    };
    if let Some(sj) = &sj {
        summary.sectors = sj
            .sectors
            .iter()
            .map(|s| SectorRow {
                label: s.label.clone(),
                members: s.members.len(),
                n_events: s.series.events.len(),
            })
            .collect();
        summary.skipped_sectors = sj.skipped.clone();
    }

    if let Some(dec) = &dec {
        let rows: Vec<EigenRow> = dec
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(rank, &l)| EigenRow {
                rank,
                eigenvalue: l,
                outside_band: l < dec.mp_band[0] || l > dec.mp_band[1],
            })
            .collect();
        out.rows(EIGENVALUES, &rows)?;
        let v1 = dec.leading_vector();
        summary.leading_vector = dec
            .kept
            .iter()
            .zip(&v1)
            .map(|(&s, &w)| Loading {
                ticker: panel.tickers()[s].clone(),
                weight: w,
            })
            .collect();
        if let Some(chi) = out.rec.attempt("market jump series", chi_series(&ind, &dec.kept, &v1, c.s_prime))? {
            let rows: Vec<ChiRow> = chi
                .chi
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let at = cal.datetime_of(cal.stamp(i));
                    ChiRow {
                        date: at.format("%Y-%m-%d").to_string(),
                        time: at.format("%H:%M").to_string(),
                        chi: x,
                    }
                })
                .collect();
            out.rows(CHI, &rows)?;
            out.rows(CHI_CCDF, &ccdf(&chi.chi, 20))?;
            summary.chi_fit = out.rec.attempt("chi tail fit", hill(&chi.chi, TailSelection::Threshold(c.chi_fit_min)))?;
            summary.n_market_events = chi.events.len();
            summary.market_rate = chi.rate();

            let market = CollectiveEvents::market(&chi, cal.bins_per_day());
            let both = sj.as_ref().map(|sj| market.clone().with_sectors(sj, panel.n_stocks()));
            let mut rows = Vec::new();
            for &w in &c.half_windows {
                let Some(m) = out.rec.attempt("explained fraction", explained_fraction(&stamps, &market, w))? else {
                    break;
                };
                let b: Option<Explained> = match &both {
                    Some(b) => Some(explained_fraction(&stamps, b, w)?),
                    None => None,
                };
                rows.push(ExplainedRow {
                    half_window: w,
                    market: m.fraction,
                    market_and_sectors: b.map(|b| b.fraction),
                    background: background_coincidence(chi.rate(), w),
                    total: m.total,
                });
            }
            if !rows.is_empty() {
                out.rows(EXPLAINED, &rows)?;
            }
            summary.explained = rows;
        }
    }
    out.json(SUMMARY, &summary)?;
    finish(rec, &dir, &Params { out_dir: &cfg.out_dir, section: c })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveSummary {
    pub n_pairs: usize,
    pub n_points: usize,
    pub tie_warnings: usize,
}

impl CurveSummary {
    fn of(n_pairs: usize, c: &TailCurve) -> Self {
        Self {
            n_pairs,
            n_points: c.p.len(),
            tie_warnings: c.tie_warning.iter().filter(|&&w| w).count(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaildepSummary {
    pub trades: Option<CurveSummary>,
    pub trade_report: Option<TradeReport>,
    pub bars: Option<CurveSummary>,
}

pub fn taildep(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate_taildep()?;
    let t = &cfg.taildep;
    let mut rec = Recorder::new("taildep");
    let trades = if t.use_trades {
        let p = cfg.input(&t.trades, files::TRADES);
        require(&p)?;
        rec.input(&p);
        Some(read_trades_file(&p)?)
    } else {
        None
    };
    let panel = load_panel(cfg, &mut rec)?;

    let dir = cfg.dir("taildep");
    let mut out = Out { dir: dir.clone(), rec: &mut rec };
    let mut summary = TaildepSummary {
        trades: None,
        trade_report: None,
        bars: None,
    };
    if let Some(trades) = &trades {
        let (sample, report) = trade_pairs(trades);
        let grid = default_grid(sample.len(), t.per_decade);
        if let Some(c) = out.rec.attempt("trade tail dependence", tail_curve(&sample, Some(&grid)))? {
            out.rows(TAIL_TRADES, &c.rows())?;
            summary.trades = Some(CurveSummary::of(sample.len(), &c));
        }
        summary.trade_report = Some(report);
    }
    let sample = bar_pairs(&panel, t.pooling);
    let grid = default_grid(sample.len(), t.per_decade);
    if let Some(c) = out.rec.attempt("bar tail dependence", tail_curve(&sample, Some(&grid)))? {
        out.rows(TAIL_BARS, &c.rows())?;
        summary.bars = Some(CurveSummary::of(sample.len(), &c));
    }
    out.json(SUMMARY, &summary)?;
    finish(rec, &dir, &Params { out_dir: &cfg.out_dir, section: t })
}
