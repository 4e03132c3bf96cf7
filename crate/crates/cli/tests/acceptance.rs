//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the console.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use jumplab::collective::{
    background_coincidence, chi_series, cojump_matrix, explained_fraction, CollectiveEvents, IndicatorPanel,
    MarketJumpSeries,
};
use jumplab::eventstudy::{conditional_rate, fit_relaxation, EventProfile, ProfileKind, RateNorm};
use jumplab::jumps::{baseline, counts_above, detect_jumps, score_ccdf, WindowPolicy};
use jumplab::synth::{bernoulli_hits, gen_market, gen_returns, gen_trades, generate, stream, GenConfig};
use jumplab::tail::{hill, TailSelection};
use jumplab::taildep::{default_grid, tail_curve, trade_pairs, PairedSample};
use jumplab::timebase::{SeasonalCurve, StockStamp, TradingCalendar};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { pass: true, lines: Vec::new() }
    }

    /// Record one check; the criterion passes only if all its checks do.
    fn check(&mut self, ok: bool, what: String) {
        self.pass &= ok;
        self.lines.push(format!("    [{}] {what}", if ok { "ok" } else { "FAIL" }));
    }
}

fn runtime(o: &mut Outcome, start: Instant, limit: Duration) {
    let t = start.elapsed();
    o.check(t < limit, format!("runtime {:.1} s < {} s", t.as_secs_f64(), limit.as_secs()));
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut o = Outcome::new();
    for alpha in [4.0, 2.7] {
        let mut cfg = GenConfig {
            seed: 101,
            n_stocks: 100,
            n_days: 26,
            ..Default::default()
        };
        cfg.returns.tail_exponent = alpha;
        cfg.returns.shock_rate = 0.0;
        let (panel, _) = gen_returns(&cfg, &[]).unwrap();
        let base = baseline(&panel, 120, 30, WindowPolicy::Span).unwrap();
        let mut scores = Vec::new();
        for s in 0..panel.n_stocks() {
            let r = panel.returns(s);
            for i in 0..r.len() {
                if let Some(m) = base.at(s, i).filter(|m| *m > 0.0 && r[i].is_finite()) {
                    scores.push(r[i].abs() / m);
                }
            }
        }
        let fit = score_ccdf(&scores, TailSelection::default()).unwrap().fit;
        o.check(
            scores.len() >= 1_000_000 && (fit.exponent - alpha).abs() <= 0.1,
            format!("alpha {alpha}: {} scores, Hill {:.4} ± {:.4}", scores.len(), fit.exponent, fit.stderr),
        );
    }
    runtime(&mut o, start, Duration::from_secs(10));
    o
}

/// σ∞ + A·τ^(−β) on lags 1..=L with additive N(0, 0.05) noise; the noise is
/// the per-lag scatter of an average over 10⁴ events of unit-order spread 5.
fn noisy_profile(seed: u64, beta: f64) -> EventProfile {
    let (max_lag, events, noise) = (120i64, 10_000usize, 0.05);
    let mut rng = stream(seed, 0xACC2, (beta * 100.0) as u32);
    let normal = Normal::new(0.0, noise).unwrap();
    let lags: Vec<i64> = (-max_lag..=max_lag).collect();
    let value = lags
        .iter()
        .map(|&l| {
            let clean = if l > 0 { 1.0 + 2.0 * (l as f64).powf(-beta) } else { 1.0 };
            clean + normal.sample(&mut rng)
        })
        .collect();
    EventProfile {
        kind: ProfileKind::VolRatio,
        value,
        stderr: vec![noise; lags.len()],
        n_obs: vec![events; lags.len()],
        lags,
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut o = Outcome::new();
    let seeds = 100u64;
    let fits: Vec<_> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let a = fit_relaxation(&noisy_profile(seed, 0.5), 120).unwrap();
            let b = fit_relaxation(&noisy_profile(seed, 1.0), 120).unwrap();
            (a, b)
        })
        .collect();
    let half = fits.iter().filter(|(a, _)| (a.beta - 0.5).abs() <= 0.05).count();
    let one = fits.iter().filter(|(_, b)| (b.beta - 1.0).abs() <= 0.10).count();
    let sep: Vec<f64> = fits
        .iter()
        .map(|(a, b)| (b.beta - a.beta) / (a.beta_stderr.powi(2) + b.beta_stderr.powi(2)).sqrt())
        .collect();
    let min_sep = sep.iter().copied().fold(f64::INFINITY, f64::min);
    o.check(half >= 95, format!("beta 0.5 within ±0.05 on {half}/100 seeds"));
    o.check(one >= 95, format!("beta 1.0 within ±0.10 on {one}/100 seeds"));
    o.check(min_sep > 5.0, format!("separation {min_sep:.1} sigma on the worst seed"));
    runtime(&mut o, start, Duration::from_secs(60));
    o
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut o = Outcome::new();
    let cal = TradingCalendar::weekdays_from(NaiveDate::from_ymd_opt(2006, 1, 2).unwrap(), 60);
    let (n, bpd) = (100usize, cal.bins_per_day());
    let shape: Vec<f64> = (0..bpd)
        .map(|b| 1.0 + 0.8 * (2.0 * std::f64::consts::PI * b as f64 / bpd as f64).cos())
        .collect();
    let seeds = 20u64;
    let max_lag = 60;
    let per_seed: Vec<(usize, usize)> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let mut targets = Vec::new();
            let mut triggers = Vec::new();
            for s in 0..n {
                let mut rng = stream(seed, 0xACC3, s as u32);
                for i in 0..cal.n_bins() {
                    let stamp = cal.stamp(i);
                    let e = StockStamp { stock: s, stamp };
                    if rng.random::<f64>() < 0.003 * shape[stamp.bin as usize] {
                        targets.push(e);
                    }
                    if rng.random::<f64>() < 0.002 {
                        triggers.push(e);
                    }
                }
            }
            let curve = SeasonalCurve::from_event_counts(&targets, bpd, n * cal.n_days()).unwrap();
            let prof = conditional_rate(&triggers, &targets, n, &cal, max_lag, RateNorm::Deseasonalized(&curve)).unwrap();
            // binomial stderr under independence: a target sits at bin b with
            // probability q·u(b), and a hit contributes 1/u(b)
            let q = targets.len() as f64 / (n * cal.n_bins()) as f64;
            let off = prof
                .lags
                .iter()
                .enumerate()
                .filter(|&(i, &lag)| {
                    let (mut var, mut m) = (0.0, 0usize);
                    for t in &triggers {
                        if let Some(st) = t.stamp.offset(lag, bpd) {
                            let u = curve.at(st.bin);
                            var += q * (1.0 - q * u) / u;
                            m += 1;
                        }
                    }
                    assert_eq!(m, prof.n_obs[i]);
                    let se = var.sqrt() / (m as f64 * q);
                    (prof.value[i] - 1.0).abs() > 3.0 * se
                })
                .count();
            (off, prof.lags.len())
        })
        .collect();
    let off: usize = per_seed.iter().map(|x| x.0).sum();
    let total: usize = per_seed.iter().map(|x| x.1).sum();
    let frac = off as f64 / total as f64;
    o.check(frac <= 0.05, format!("{off}/{total} lags outside 3 stderr ({:.2}%) over {seeds} seeds", 100.0 * frac));
    runtime(&mut o, start, Duration::from_secs(60));
    o
}

fn market_cfg(seed: u64, n_stocks: usize, n_days: usize, rate: f64) -> GenConfig {
    let mut cfg = GenConfig {
        seed,
        n_stocks,
        n_days,
        ..Default::default()
    };
    cfg.market.rate = rate;
    cfg
}

/// Equal loadings: one factor hitting each stock with the same probability
/// on top of homogeneous idiosyncratic jumps, 100 stocks × 23,400 bins.
fn planted_factor(seed: u64) -> IndicatorPanel {
    let (n, t, bpd) = (100usize, 23_400usize, 390usize);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); t];
    for s in 0..n {
        let mut rng = stream(seed, 0xACC4, s as u32 + 1);
        for i in bernoulli_hits(&mut rng, 0.002, t) {
            bins[i].push(s as u32);
        }
    }
    let mut rng = stream(seed, 0xACC4, 0);
    for i in bernoulli_hits(&mut rng, 0.02, t) {
        for s in 0..n {
            if rng.random::<f64>() < 0.8 && !bins[i].contains(&(s as u32)) {
                bins[i].push(s as u32);
            }
        }
    }
    IndicatorPanel::from_bins(n, bpd, bins)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut o = Outcome::new();
    let seeds = 50u64;
    // 100 stocks × 60 days = 23,400 bins
    let null: Vec<(usize, usize, usize)> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let (ind, _) = gen_market(&market_cfg(seed, 100, 60, 0.0)).unwrap();
            let d = cojump_matrix(&ind).unwrap();
            (d.n_outside_band(), d.kept.len(), d.n_bins)
        })
        .collect();
    let outside: usize = null.iter().map(|x| x.0).sum();
    let total: usize = null.iter().map(|x| x.1).sum();
    let frac = outside as f64 / total as f64;
    o.check(
        frac <= 0.02 && null.iter().all(|x| x.2 == 23_400),
        format!("independent panel: {:.2}% of eigenvalues outside the band over {seeds} seeds", 100.0 * frac),
    );

    let planted: Vec<(bool, f64)> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let d = cojump_matrix(&planted_factor(1000 + seed)).unwrap();
            let target = (d.kept.len() as f64).powf(-0.5);
            let worst = d
                .leading_vector()
                .iter()
                .map(|v| (v / target - 1.0).abs())
                .fold(0.0, f64::max);
            (d.eigenvalues[0] > d.mp_band[1], worst)
        })
        .collect();
    let above = planted.iter().filter(|x| x.0).count();
    let worst = planted.iter().map(|x| x.1).fold(0.0, f64::max);
    o.check(above == seeds as usize, format!("rank-one factor: top eigenvalue above the band on {above}/{seeds} seeds"));
    o.check(worst <= 0.10, format!("leading-vector entries within {:.1}% of N^-1/2 (worst seed)", 100.0 * worst));
    runtime(&mut o, start, Duration::from_secs(60));
    o
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut o = Outcome::new();
    let cfg = market_cfg(105, 200, 100, 0.04);
    let (ind, truth) = gen_market(&cfg).unwrap();
    let d = cojump_matrix(&ind).unwrap();
    let chi = chi_series(&ind, &d.kept, &d.leading_vector(), 0.1).unwrap();
    let fit = hill(&chi.chi, TailSelection::Threshold(0.1)).unwrap();
    o.check(
        fit.n_tail >= 500,
        format!("{} market bins above chi = 0.1 ({} planted)", fit.n_tail, truth.market_bins.len()),
    );
    o.check(
        (1.3..=1.7).contains(&fit.exponent),
        format!("chi CCDF exponent {:.3} ± {:.3} for planted 1.5", fit.exponent, fit.stderr),
    );
    runtime(&mut o, start, Duration::from_secs(30));
    o
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut o = Outcome::new();
    // planted: 15% of individual jumps sit on a market jump bin, the rest uniform
    let cal = TradingCalendar::weekdays_from(NaiveDate::from_ymd_opt(2006, 1, 2).unwrap(), 250);
    let (n_bins, bpd, n) = (cal.n_bins(), cal.bins_per_day(), 100usize);
    let mut rng = stream(106, 0xACC6, 0);
    let market = bernoulli_hits(&mut rng, 2e-3, n_bins);
    let mut chi = vec![0.0; n_bins];
    for &t in &market {
        chi[t] = 0.5;
    }
    let series = MarketJumpSeries {
        chi,
        threshold: 0.1,
        events: market.clone(),
    };
    let coll = CollectiveEvents::market(&series, bpd);
    let n_jumps = 200_000;
    let jumps: Vec<StockStamp> = (0..n_jumps)
        .map(|_| {
            let i = if rng.random::<f64>() < 0.15 {
                market[rng.random_range(0..market.len())]
            } else {
                rng.random_range(0..n_bins)
            };
            StockStamp {
                stock: rng.random_range(0..n),
                stamp: cal.stamp(i),
            }
        })
        .collect();
    for hw in [0usize, 2] {
        let e = explained_fraction(&jumps, &coll, hw).unwrap();
        let b = background_coincidence(series.rate(), hw);
        let expected = 0.15 + 0.85 * b;
        o.check(
            (e.fraction - expected).abs() <= 0.01,
            format!("half_window {hw}: explained {:.4} vs 0.15 + 0.85·{b:.4} = {expected:.4}", e.fraction),
        );
    }

    // monotone in half_window and in −s' over a grid, on a real indicator panel
    let (ind, _) = gen_market(&market_cfg(206, 100, 40, 2e-3)).unwrap();
    let d = cojump_matrix(&ind).unwrap();
    let v1 = d.leading_vector();
    let events = ind.events();
    let s_grid = [0.03, 0.05, 0.1, 0.2, 0.3, 0.5];
    let hw_grid = [0usize, 1, 2, 3, 5, 10];
    let mut table = BTreeMap::new();
    for (i, &sp) in s_grid.iter().enumerate() {
        let chi = chi_series(&ind, &d.kept, &v1, sp).unwrap();
        let coll = CollectiveEvents::market(&chi, ind.bins_per_day());
        for (j, &hw) in hw_grid.iter().enumerate() {
            table.insert((i, j), explained_fraction(&events, &coll, hw).unwrap().fraction);
        }
    }
    let mut violations = 0;
    for i in 0..s_grid.len() {
        for j in 0..hw_grid.len() {
            if j + 1 < hw_grid.len() && table[&(i, j + 1)] < table[&(i, j)] {
                violations += 1;
            }
            if i + 1 < s_grid.len() && table[&(i + 1, j)] > table[&(i, j)] {
                violations += 1;
            }
        }
    }
    o.check(
        violations == 0,
        format!("monotone over {}×{} grid of s' and half_window: {violations} violations", s_grid.len(), hw_grid.len()),
    );
    runtime(&mut o, start, Duration::from_secs(60));
    o
}

/// C(1e-4) for |λ·V^0.5 + 5Z| against V = ceil(Pareto(1.5, 100)), λ = 1,
/// from 10⁷ independent draws (tests/oracle_recompute.rs regenerates it).
const COUPLED_ORACLE_C: f64 = 0.973;
const COUPLED_ORACLE_N: usize = 10_000_000;

fn trade_sample(seed: u64, coupled: bool) -> PairedSample {
    let mut cfg = GenConfig {
        seed,
        n_stocks: 100,
        n_days: 200,
        ..Default::default()
    };
    cfg.trades.coupled = coupled;
    let (trades, _) = gen_trades(&cfg).unwrap();
    trade_pairs(&trades).0
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut o = Outcome::new();
    let seeds = 20u64;
    let indep: Vec<(bool, f64, f64)> = (0..seeds)
        .map(|seed| {
            let sample = trade_sample(700 + seed, false);
            let mut grid = default_grid(sample.len(), 10);
            grid.push(1e-4);
            grid.sort_by(|a, b| b.total_cmp(a));
            grid.dedup();
            let c = tail_curve(&sample, Some(&grid)).unwrap();
            let ok = (0..c.p.len()).all(|i| (c.c[i] - c.p[i]).abs() <= 3.0 * c.ci[i]);
            let at = c.p.iter().position(|&p| p == 1e-4).unwrap();
            (ok, c.c[at], c.ci[at])
        })
        .collect();
    let ok = indep.iter().filter(|x| x.0).count();
    o.check(
        ok as f64 >= 0.95 * seeds as f64,
        format!("independent tape (n ≈ 10^6): |C(p) − p| ≤ 3·ci on the whole grid for {ok}/{seeds} seeds"),
    );

    let sample = trade_sample(799, true);
    let n = sample.len();
    let c = tail_curve(&sample, Some(&[1e-4])).unwrap();
    let k = c.k[0] as f64;
    let oc = COUPLED_ORACLE_C;
    let band = 1.96 * (oc * (1.0 - oc) / k + oc * (1.0 - oc) / (1e-4 * COUPLED_ORACLE_N as f64)).sqrt();
    o.check(
        (c.c[0] - oc).abs() <= band,
        format!("coupled tape (n = {n}): C(1e-4) = {:.4} vs oracle {oc} ± {band:.4}", c.c[0]),
    );
    let (ci_i, c_i) = (indep[0].2, indep[0].1);
    let sigma = ((c.ci[0] / 1.96).powi(2) + (ci_i / 1.96).powi(2)).sqrt();
    let sep = (c.c[0] - c_i) / sigma;
    o.check(sep > 5.0, format!("coupled vs independent at p = 1e-4: {sep:.1} sigma"));
    runtime(&mut o, start, Duration::from_secs(30));
    o
}

fn run(bin: &Path, out: &Path, cmd: &str, threads: &str) {
    let st = Command::new(bin)
        .args(["--out-dir", out.to_str().unwrap(), cmd])
        .env("JUMPLAB_THREADS", threads)
        .output()
        .unwrap();
    assert!(st.status.success(), "{cmd}: {}", String::from_utf8_lossy(&st.stderr));
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let mut bytes = std::fs::read(&p).unwrap();
                if p.file_name().unwrap() == "manifest.json" {
                    let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                    v.as_object_mut().unwrap().remove("timing");
                    bytes = serde_json::to_vec(&v).unwrap();
                }
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), bytes);
            }
        }
    }
    out
}

const PIPELINE: [&str; 7] = ["synth", "ingest", "detect-jumps", "event-study", "collective", "taildep", "report"];

fn criterion_8() -> Outcome {
    let mut o = Outcome::new();
    let bin = PathBuf::from(env!("CARGO_BIN_EXE_jumplab"));
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let start = Instant::now();
    for cmd in PIPELINE {
        run(&bin, &out, cmd, "4");
    }
    let t = start.elapsed();
    let first = snapshot(&out);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("ingest/summary.json")).unwrap()).unwrap();
    o.check(
        summary["n_stocks"] == 100 && summary["n_days"] == 60,
        format!("default scenario is {} stocks × {} days", summary["n_stocks"], summary["n_days"]),
    );
    o.check(t < Duration::from_secs(120), format!("full pipeline {:.1} s < 120 s (4 threads)", t.as_secs_f64()));
    for cmd in PIPELINE {
        run(&bin, &out, cmd, "2");
    }
    let second = snapshot(&out);
    let differing: Vec<_> = first
        .keys()
        .chain(second.keys())
        .filter(|k| first.get(*k) != second.get(*k))
        .collect();
    o.check(
        differing.is_empty() && first.len() > 40,
        format!("rerun with 2 threads: {} files, {} differ (manifest timing excluded)", first.len(), differing.len()),
    );
    o
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let mut o = Outcome::new();
    let cfg = GenConfig {
        n_stocks: 166,
        n_days: 149,
        ..Default::default()
    };
    let sc = generate(&cfg).unwrap();
    let base = baseline(&sc.panel, 120, 30, WindowPolicy::Span).unwrap();
    let det = detect_jumps(&sc.panel, &base, 4.0).unwrap();
    let counts = counts_above(&det.events, &[4.0, 8.0]);
    let ratio = counts[1] as f64 / counts[0] as f64;
    o.check(
        counts[0] as f64 >= 177_674.0 / 2.0 && counts[0] as f64 <= 177_674.0 * 2.0,
        format!("s = 4 jumps: {} ({:.2}× the reference 177,674)", counts[0], counts[0] as f64 / 177_674.0),
    );
    let scores: Vec<f64> = det.events.iter().map(|e| e.score).collect();
    let fit = hill(&scores, TailSelection::default()).unwrap();
    let predicted = 2f64.powf(-fit.exponent);
    let se = predicted * std::f64::consts::LN_2 * fit.stderr;
    o.check(
        (ratio - predicted).abs() <= 2.0 * se,
        format!(
            "jumps(8)/jumps(4) = {ratio:.4} vs 2^-{:.3} = {predicted:.4} ± {se:.4} (2 stderr {:.4})",
            fit.exponent,
            2.0 * se
        ),
    );
    runtime(&mut o, start, Duration::from_secs(120));
    o
}

fn main() {
    // libtest flags such as --nocapture or a name filter are accepted and ignored;
    // `--list` prints nothing so test discovery stays quiet.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 tail-exponent recovery", criterion_1),
        ("2 relaxation-fit power", criterion_2),
        ("3 deseasonalization neutrality", criterion_3),
        ("4 MP filtering", criterion_4),
        ("5 chi law", criterion_5),
        ("6 explained-fraction calibration", criterion_6),
        ("7 tail dependence", criterion_7),
        ("8 end-to-end determinism and scale", criterion_8),
        ("9 magnitude sanity", criterion_9),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        let out = f();
        println!("{} criterion {name} ({:.1} s)", if out.pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64());
        for l in &out.lines {
            println!("{l}");
        }
        failed += usize::from(!out.pass);
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
