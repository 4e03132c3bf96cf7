use jumplab::jumps::{baseline, classify_news_jumps, detect_jumps, score_ccdf, JumpEvent, WindowPolicy};
use jumplab::synth::{gen_returns, pareto, stream, GenConfig};
use jumplab::tail::TailSelection;
use jumplab::timebase::{BinStamp, StockStamp};
use rand::Rng;

fn plain(seed: u64, n_stocks: usize, n_days: usize) -> GenConfig {
    let mut c = GenConfig {
        seed,
        n_stocks,
        n_days,
        ..Default::default()
    };
    c.returns.intraday_amplitude = 0.0;
    c.returns.shock_rate = 0.0;
    c
}

#[test]
fn exact_pareto_scores_recover_exponent() {
    for (alpha, seed) in [(4.0, 11), (2.7, 12)] {
        let mut rng = stream(seed, 0, 0);
        let x: Vec<f64> = (0..1_000_000).map(|_| pareto(&mut rng, alpha, 1.0)).collect();
        let fit = score_ccdf(&x, TailSelection::default()).unwrap().fit;
        assert!((fit.exponent - alpha).abs() < 0.1, "{alpha}: {}", fit.exponent);
    }
}

#[test]
fn baseline_time_average_matches_generator_mean() {
    let cfg = plain(3, 40, 20);
    let (panel, truth) = gen_returns(&cfg, &[]).unwrap();
    let base = baseline(&panel, 120, 30, WindowPolicy::Span).unwrap();
    let mut m = Vec::new();
    let mut a = Vec::new();
    for s in 0..panel.n_stocks() {
        m.extend(base.row(s).iter().copied().filter(|v| v.is_finite()));
        a.extend(panel.returns(s).iter().filter(|r| r.is_finite()).map(|r| r.abs()));
    }
    let mean_m = m.iter().sum::<f64>() / m.len() as f64;
    let mean_a = a.iter().sum::<f64>() / a.len() as f64;
    let sd = (a.iter().map(|x| (x - mean_a).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
    let se = sd / (a.len() as f64).sqrt();
    let rho = truth.abs_return_mean;
    assert!((mean_m - rho).abs() < 2.0 * se, "{mean_m} vs {rho} (se {se})");
}

#[test]
fn iid_score_tail_matches_return_tail() {
    let cfg = plain(5, 100, 26);
    let (panel, truth) = gen_returns(&cfg, &[]).unwrap();
    let base = baseline(&panel, 120, 30, WindowPolicy::Span).unwrap();
    let det = detect_jumps(&panel, &base, 4.0).unwrap();
    let scores: Vec<f64> = det.events.iter().map(|e| e.score).collect();
    let fit = score_ccdf(&scores, TailSelection::default()).unwrap().fit;
    assert!(
        (fit.exponent - truth.tail_exponent).abs() < 2.0 * fit.stderr,
        "{} ± {}",
        fit.exponent,
        fit.stderr
    );
}

fn uniform_jumps<R: Rng>(rng: &mut R, n: usize, n_stocks: usize, n_days: usize, bpd: usize) -> Vec<JumpEvent> {
    (0..n)
        .map(|_| JumpEvent {
            stock: rng.random_range(0..n_stocks),
            stamp: BinStamp::new(rng.random_range(0..n_days) as u32, rng.random_range(0..bpd) as u16),
            score: 5.0,
            positive: true,
        })
        .collect()
}

/// Poisson news at rate λ per stock-bin: a uniform jump sees news in the
/// min(bin + 1, 3) bins of its window with probability 1 − (1 − λ)^width.
fn background(jumps: &[JumpEvent], lambda: f64) -> f64 {
    jumps
        .iter()
        .map(|j| 1.0 - (1.0 - lambda).powi((j.stamp.bin as i32 + 1).min(3)))
        .sum::<f64>()
        / jumps.len() as f64
}

fn poisson_news<R: Rng>(rng: &mut R, lambda: f64, n_stocks: usize, n_days: usize, bpd: usize) -> Vec<StockStamp> {
    let mut out = Vec::new();
    for stock in 0..n_stocks {
        for day in 0..n_days {
            for bin in 0..bpd {
                if rng.random::<f64>() < lambda {
                    out.push(StockStamp {
                        stock,
                        stamp: BinStamp::new(day as u32, bin as u16),
                    });
                }
            }
        }
    }
    out
}

#[test]
fn uncoupled_news_gives_background_rate() {
    let (ns, nd, bpd) = (50, 40, 390);
    let lambda = 0.01;
    let mut rng = stream(21, 0, 0);
    let news = poisson_news(&mut rng, lambda, ns, nd, bpd);
    let jumps = uniform_jumps(&mut rng, 20_000, ns, nd, bpd);
    let f = classify_news_jumps(&jumps, &news, 2, bpd).news_fraction();
    let b = background(&jumps, lambda);
    let se = (b * (1.0 - b) / jumps.len() as f64).sqrt();
    assert!((f - b).abs() < 3.0 * se, "{f} vs {b}");
}

#[test]
fn planted_news_fraction_is_recovered() {
    let (ns, nd, bpd) = (50, 40, 390);
    let lambda = 0.002;
    let mut rng = stream(22, 0, 0);
    let news = poisson_news(&mut rng, lambda, ns, nd, bpd);
    let n_jumps = 10_000;
    let n_planted = 3_000;
    let mut jumps = uniform_jumps(&mut rng, n_jumps - n_planted, ns, nd, bpd);
    let b = background(&jumps, lambda);
    let mut planted = 0;
    while planted < n_planted {
        let n = news[rng.random_range(0..news.len())];
        let d: u16 = rng.random_range(0..=2);
        if let Some(stamp) = n.stamp.offset(d as i64, bpd) {
            jumps.push(JumpEvent {
                stock: n.stock,
                stamp,
                score: 5.0,
                positive: false,
            });
            planted += 1;
        }
    }
    let f = classify_news_jumps(&jumps, &news, 2, bpd).news_fraction();
    let expected = 0.3 + 0.7 * b;
    assert!((f - 0.3).abs() < 0.02, "{f}");
    assert!((f - expected).abs() < 3.0 * (0.3 * 0.7 / n_jumps as f64).sqrt(), "{f} vs {expected}");
}
