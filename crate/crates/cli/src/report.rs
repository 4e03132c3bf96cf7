//! Plot-data CSVs for each figure, rebuilt from the other commands' artifacts.

use std::path::{Path, PathBuf};

use jumplab::eventstudy::ProfileRow;
use jumplab::io::{read_json, write_json, write_rows};
use jumplab::tail::CcdfPoint;
use jumplab::taildep::TailRow;
use jumplab::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::commands::*;
use crate::config::RunConfig;
use crate::manifest::Recorder;
use crate::CliError;

fn read_csv<T: DeserializeOwned>(path: &Path, rec: &mut Recorder) -> Result<Vec<T>, Error> {
    rec.input(path);
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn read_summary<T: DeserializeOwned>(path: &Path, rec: &mut Recorder) -> Result<T, Error> {
    rec.input(path);
    read_json(path)
}

#[derive(Serialize)]
struct SeriesPoint<'a> {
    series: &'a str,
    score: f64,
    ccdf: f64,
}

#[derive(Serialize)]
struct RateRow {
    lag: i64,
    jump_given_jump: f64,
    jump_given_jump_stderr: f64,
    news_given_news: f64,
    news_given_news_stderr: f64,
    jump_given_news: f64,
    jump_given_news_stderr: f64,
}

#[derive(Serialize)]
struct VolRow {
    lag: i64,
    news: f64,
    news_stderr: f64,
    news_jumps: f64,
    news_jumps_stderr: f64,
    endogenous_jumps: f64,
    endogenous_jumps_stderr: f64,
}

#[derive(Serialize)]
struct RelaxRow<'a> {
    series: &'a str,
    tau: i64,
    measured: f64,
    stderr: f64,
    fitted: f64,
}

#[derive(Serialize)]
struct TailPoint<'a> {
    resolution: &'a str,
    p: f64,
    c: f64,
    ci: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxHeadline {
    pub series: String,
    pub beta: f64,
    pub beta_stderr: f64,
    pub n_triggers: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportSummary {
    pub n_stocks: usize,
    pub n_days: usize,
    pub n_jumps: usize,
    pub jump_tail_exponent: Option<f64>,
    pub news_jump_tail_exponent: Option<f64>,
    pub doubling: Option<Doubling>,
    pub partition: Vec<PartitionRow>,
    pub relaxation: Vec<RelaxHeadline>,
    pub n_market_events: usize,
    pub chi_tail_exponent: Option<f64>,
    pub explained: Vec<ExplainedRow>,
    /// (p, C) at the smallest grid p.
    pub bars_tail_end: Option<(f64, f64)>,
    pub trades_tail_end: Option<(f64, f64)>,
}

fn join_lags<'a>(profiles: &'a [Vec<ProfileRow>], names: &[&Path]) -> Result<&'a [ProfileRow], Error> {
    let first = &profiles[0];
    for (p, name) in profiles.iter().zip(names) {
        if p.len() != first.len() || p.iter().zip(first).any(|(a, b)| a.lag != b.lag) {
            return Err(Error::Parse(format!("{}: lag grid differs from {}", name.display(), names[0].display())));
        }
    }
    Ok(first)
}

pub fn report(cfg: &RunConfig) -> Result<(), CliError> {
    let ingest = cfg.dir("ingest");
    let jumps = cfg.dir("detect-jumps");
    let es = cfg.dir("event-study");
    let coll = cfg.dir("collective");
    let td = cfg.dir("taildep");
    let mut required: Vec<PathBuf> = vec![
        ingest.join(SUMMARY),
        jumps.join(SUMMARY),
        jumps.join(SCORE_CCDF),
        es.join(SUMMARY),
        es.join(NEWS_INTRADAY),
        es.join(DELAY_HISTOGRAM),
        es.join(NEWS_JUMP_CCDF),
        es.join(RATE_JUMP_JUMP),
        es.join(RATE_NEWS_NEWS),
        es.join(RATE_JUMP_NEWS),
        es.join(VOL_NEWS),
        coll.join(SUMMARY),
        td.join(SUMMARY),
        td.join(TAIL_BARS),
    ];
    let es_summary: Option<EventStudySummary> = es.join(SUMMARY).is_file().then(|| read_json(&es.join(SUMMARY))).transpose()?;
    if let Some(s) = &es_summary {
        let s0 = s.s_values[0];
        required.push(es.join(vol_news_jumps(s0)));
        required.push(es.join(vol_endogenous(s0)));
    }
    let missing: Vec<PathBuf> = required.iter().filter(|p| !p.is_file()).cloned().collect();
    if !missing.is_empty() {
        return Err(CliError::MissingArtifacts(missing));
    }
    let es_summary = es_summary.expect("checked above");

    let mut rec = Recorder::new("report");
    let ingest_summary: IngestSummary = read_summary(&ingest.join(SUMMARY), &mut rec)?;
    let detect: DetectSummary = read_summary(&jumps.join(SUMMARY), &mut rec)?;
    rec.input(&es.join(SUMMARY));
    let coll_summary: CollectiveSummary = read_summary(&coll.join(SUMMARY), &mut rec)?;
    let _: TaildepSummary = read_summary(&td.join(SUMMARY), &mut rec)?;
    let dir = cfg.dir("report");
    let write = |rec: &mut Recorder, name: &str, f: &dyn Fn(&Path) -> Result<(), Error>| -> Result<(), Error> {
        let p = dir.join(name);
        f(&p)?;
        rec.output(&p);
        Ok(())
    };

    // Fig 1: news timing
    let intraday: Vec<CurveRow> = read_csv(&es.join(NEWS_INTRADAY), &mut rec)?;
    write(&mut rec, "fig1_news_intraday.csv", &|p| write_rows(p, &intraday))?;
    let delays: Vec<DelayRow> = read_csv(&es.join(DELAY_HISTOGRAM), &mut rec)?;
    write(&mut rec, "fig1_news_delay.csv", &|p| write_rows(p, &delays))?;

    // Fig 2: score CCDFs
    let all: Vec<CcdfPoint> = read_csv(&jumps.join(SCORE_CCDF), &mut rec)?;
    let news: Vec<CcdfPoint> = read_csv(&es.join(NEWS_JUMP_CCDF), &mut rec)?;
    let mut points: Vec<SeriesPoint> = all
        .iter()
        .map(|c| SeriesPoint { series: "all-jumps", score: c.score, ccdf: c.ccdf })
        .collect();
    points.extend(news.iter().map(|c| SeriesPoint { series: "news-jumps", score: c.score, ccdf: c.ccdf }));
    write(&mut rec, "fig2_jump_ccdf.csv", &|p| write_rows(p, &points))?;

    // Fig 3: clustering
    let names = [es.join(RATE_JUMP_JUMP), es.join(RATE_NEWS_NEWS), es.join(RATE_JUMP_NEWS)];
    let profiles: Vec<Vec<ProfileRow>> = names.iter().map(|n| read_csv(n, &mut rec)).collect::<Result<_, _>>()?;
    let refs: Vec<&Path> = names.iter().map(PathBuf::as_path).collect();
    let grid = join_lags(&profiles, &refs)?;
    let rows: Vec<RateRow> = (0..grid.len())
        .map(|i| RateRow {
            lag: grid[i].lag,
            jump_given_jump: profiles[0][i].value,
            jump_given_jump_stderr: profiles[0][i].stderr,
            news_given_news: profiles[1][i].value,
            news_given_news_stderr: profiles[1][i].stderr,
            jump_given_news: profiles[2][i].value,
            jump_given_news_stderr: profiles[2][i].stderr,
        })
        .collect();
    write(&mut rec, "fig3_conditional_rates.csv", &|p| write_rows(p, &rows))?;

    // Fig 4: volatility around news and jumps
    let s0 = es_summary.s_values[0];
    let names = [es.join(VOL_NEWS), es.join(vol_news_jumps(s0)), es.join(vol_endogenous(s0))];
    let profiles: Vec<Vec<ProfileRow>> = names.iter().map(|n| read_csv(n, &mut rec)).collect::<Result<_, _>>()?;
    let refs: Vec<&Path> = names.iter().map(PathBuf::as_path).collect();
    let grid = join_lags(&profiles, &refs)?;
    let rows: Vec<VolRow> = (0..grid.len())
        .map(|i| VolRow {
            lag: grid[i].lag,
            news: profiles[0][i].value,
            news_stderr: profiles[0][i].stderr,
            news_jumps: profiles[1][i].value,
            news_jumps_stderr: profiles[1][i].stderr,
            endogenous_jumps: profiles[2][i].value,
            endogenous_jumps_stderr: profiles[2][i].stderr,
        })
        .collect();
    write(&mut rec, "fig4_volatility.csv", &|p| write_rows(p, &rows))?;

    // Fig 5: relaxation fits
    let mut relax_rows = Vec::new();
    let mut relax_heads = Vec::new();
    let mut labels = Vec::new();
    for e in &es_summary.relaxation {
        labels.push(format!("{}-{}", e.class, s_tag(e.s)));
    }
    for (e, label) in es_summary.relaxation.iter().zip(&labels) {
        let (Some(fit), Some(profile)) = (&e.fit, &e.profile) else { continue };
        let prof: Vec<ProfileRow> = read_csv(&es.join(profile), &mut rec)?;
        for r in prof.iter().filter(|r| r.lag >= fit.tau_range[0] && r.lag <= fit.tau_range[1]) {
            relax_rows.push(RelaxRow {
                series: label,
                tau: r.lag,
                measured: r.value,
                stderr: r.stderr,
                fitted: fit.sigma_inf + fit.amplitude * (r.lag as f64).powf(-fit.beta),
            });
        }
        relax_heads.push(RelaxHeadline {
            series: label.clone(),
            beta: fit.beta,
            beta_stderr: fit.beta_stderr,
            n_triggers: e.n_triggers,
        });
    }
    write(&mut rec, "fig5_relaxation.csv", &|p| write_rows(p, &relax_rows))?;

    // Fig 6: tail dependence
    let bars: Vec<TailRow> = read_csv(&td.join(TAIL_BARS), &mut rec)?;
    let trades: Option<Vec<TailRow>> = td
        .join(TAIL_TRADES)
        .is_file()
        .then(|| read_csv(&td.join(TAIL_TRADES), &mut rec))
        .transpose()?;
    let mut points: Vec<TailPoint> = Vec::new();
    for (resolution, rows) in [("trade", trades.as_deref()), ("bar", Some(&bars[..]))] {
        for r in rows.unwrap_or_default() {
            points.push(TailPoint { resolution, p: r.p, c: r.c, ci: r.ci });
        }
    }
    write(&mut rec, "fig6_tail_dependence.csv", &|p| write_rows(p, &points))?;

    let tail_end = |rows: &[TailRow]| rows.last().map(|r| (r.p, r.c));
    let summary = ReportSummary {
        n_stocks: ingest_summary.n_stocks,
        n_days: ingest_summary.n_days,
        n_jumps: detect.n_jumps,
        jump_tail_exponent: detect.fit.map(|f| f.exponent),
        news_jump_tail_exponent: es_summary.news_jump_fit.map(|f| f.exponent),
        doubling: detect.doubling,
        partition: es_summary.partition.clone(),
        relaxation: relax_heads,
        n_market_events: coll_summary.n_market_events,
        chi_tail_exponent: coll_summary.chi_fit.map(|f| f.exponent),
        explained: coll_summary.explained,
        bars_tail_end: tail_end(&bars),
        trades_tail_end: trades.as_deref().and_then(tail_end),
    };
    write(&mut rec, SUMMARY, &|p| write_json(p, &summary))?;
    let m = rec.finish(&dir, &cfg)?;
    println!("report: {} outputs in {}", m.outputs.len(), dir.display());
    Ok(())
}
