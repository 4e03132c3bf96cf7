use chrono::NaiveDate;
use jumplab::synth::{gen_trades, pareto, stream, GenConfig};
use jumplab::taildep::{bar_pairs, bar_pairs_stock, tail_curve, trade_pairs, Pooling};
use jumplab::timebase::{BarPanel, TradingCalendar};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn tape_moments_match_generator() {
    let cfg = GenConfig {
        seed: 51,
        n_stocks: 50,
        n_days: 20,
        ..Default::default()
    };
    let (trades, truth) = gen_trades(&cfg).unwrap();
    let (sample, report) = trade_pairs(&trades);
    assert_eq!(sample.len(), truth.n_trades - cfg.n_stocks * cfg.n_days);
    assert_eq!(report.skipped_sessions, 0);
    // independent mode: x = |σ Z| · scale
    let sigma = truth.noise_sd * cfg.trades.return_scale;
    let n = sample.len() as f64;
    let m1 = sample.x.iter().sum::<f64>() / n;
    let m2 = sample.x.iter().map(|x| x * x).sum::<f64>() / n;
    let e1 = sigma * (2.0 / std::f64::consts::PI).sqrt();
    let se1 = (sigma * sigma - e1 * e1).sqrt() / n.sqrt();
    let e2 = sigma * sigma;
    let se2 = (2.0f64).sqrt() * e2 / n.sqrt();
    assert!((m1 - e1).abs() < 3.0 * se1, "{m1} vs {e1}");
    assert!((m2 - e2).abs() < 3.0 * se2, "{m2} vs {e2}");
    let v_min = sample.v.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(v_min >= truth.volume_min);
}

/// Two stocks sharing one coupling rule at different scales.
fn coupled_panel() -> BarPanel {
    let cal = TradingCalendar::weekdays_from(NaiveDate::from_ymd_opt(2006, 3, 1).unwrap(), 300);
    let n = cal.n_bins();
    let mut closes = Vec::new();
    let mut volumes = Vec::new();
    for (s, (r_scale, v_scale)) in [(1e-4, 1.0), (7e-4, 40.0)].into_iter().enumerate() {
        let mut rng = stream(52, 0, s as u32);
        let mut price = 30.0;
        let mut c = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let vol = pareto(&mut rng, 1.5, 100.0).ceil();
            let z: f64 = StandardNormal.sample(&mut rng);
            let x = (vol.sqrt() + 5.0 * z).abs() * r_scale;
            price *= if rng.random::<bool>() { 1.0 + x } else { 1.0 - x };
            c.push(price);
            v.push((vol * v_scale) as u64);
        }
        closes.push(c);
        volumes.push(v);
    }
    BarPanel::from_closes(cal, vec!["A".into(), "B".into()], closes, volumes).unwrap()
}

#[test]
fn standardized_pooling_matches_per_stock_curves() {
    let panel = coupled_panel();
    let grid = [0.1, 0.03, 0.01, 0.003, 0.001];
    let a = tail_curve(&bar_pairs_stock(&panel, 0), Some(&grid)).unwrap();
    let b = tail_curve(&bar_pairs_stock(&panel, 1), Some(&grid)).unwrap();
    let pooled = tail_curve(&bar_pairs(&panel, Pooling::Standardized), Some(&grid)).unwrap();
    for i in 0..grid.len() {
        let per_stock = 0.5 * (a.c[i] + b.c[i]);
        let tol = pooled.ci[i] + 0.5 * (a.ci[i] + b.ci[i]);
        assert!(
            (pooled.c[i] - per_stock).abs() <= tol,
            "p = {}: pooled {} vs {}",
            grid[i],
            pooled.c[i],
            per_stock
        );
    }
}
