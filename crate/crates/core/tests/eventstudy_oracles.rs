use chrono::NaiveDate;
use jumplab::eventstudy::{conditional_rate, pre_post_baseline, vol_profile, RateNorm};
use jumplab::synth::{gen_news, gen_returns, stream, AbsReturnLaw, GenConfig};
use jumplab::timebase::{BarPanel, BinStamp, SeasonalCurve, StockStamp, TradingCalendar};

/// Excess probability of a target in the bin `lag` minutes after a trigger
/// for a stationary Hawkes process with exponential kernel n·β·e^(−βt):
/// the Palm excess intensity n·β·(2−n)/(2(1−n))·e^(−β(1−n)t), averaged over
/// uniform positions of trigger and target inside their one-minute bins.
fn hawkes_bin_excess(branching: f64, decay: f64, lag: usize) -> f64 {
    let c = branching * decay * (2.0 - branching) / (2.0 * (1.0 - branching));
    let g = decay * (1.0 - branching);
    c / (g * g) * (1.0 - (-g).exp()) * (g.exp() - 1.0) * (-g * lag as f64).exp()
}

#[test]
fn hawkes_news_profile_matches_closed_form() {
    let mut cfg = GenConfig {
        seed: 31,
        n_stocks: 1000,
        n_days: 100,
        ..Default::default()
    };
    cfg.news.per_day = 2.0;
    let (_, truth) = gen_news(&cfg).unwrap();
    let cal = cfg.calendar();
    let ev = &truth.events;
    assert!(ev.len() > 150_000);
    let prof = conditional_rate(ev, ev, cfg.n_stocks, &cal, 20, RateNorm::Raw).unwrap();
    let base = truth.stationary_rate;
    for lag in 1..=20 {
        let excess = hawkes_bin_excess(truth.branching, truth.decay, lag as usize);
        let expected = 1.0 - (-(base + excess)).exp();
        let measured = prof.value_at(lag) - base;
        let oracle = expected - base;
        assert!((measured / oracle - 1.0).abs() < 0.10, "lag {lag}: {measured} vs {oracle}");
    }
}

#[test]
fn planted_relaxation_matches_generator_curve() {
    let mut cfg = GenConfig {
        seed: 32,
        n_stocks: 200,
        n_days: 64,
        ..Default::default()
    };
    cfg.returns.shock_rate = 2e-3;
    cfg.returns.relax_beta = 0.5;
    cfg.returns.relax_amplitude = 2.0;
    let (panel, truth) = gen_returns(&cfg, &[]).unwrap();
    let shocks = &truth.shocks;
    assert!(shocks.len() > 9_000, "{}", shocks.len());
    let u = SeasonalCurve::from_shape(truth.intraday_shape.clone()).unwrap();
    let scale = vec![truth.abs_return_mean; cfg.n_stocks];
    let max_lag = 120;
    let prof = vol_profile(shocks, &panel, max_lag, &u, &scale).unwrap();

    // oracle: the generator's expected |r| / (mean·u) at each lag
    let bpd = panel.calendar().bins_per_day();
    let relax = truth.shock_relax;
    let alpha = truth.tail_exponent;
    let size = cfg.returns.shock_size;
    let mut by_day: std::collections::HashMap<(usize, u32), Vec<u16>> = Default::default();
    for s in shocks {
        by_day.entry((s.stock, s.stamp.day)).or_default().push(s.stamp.bin);
    }
    for lag in 1..=max_lag as i64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for t in shocks {
            let Some(stamp) = t.stamp.offset(lag, bpd) else { continue };
            if stamp.bin == 0 {
                continue;
            }
            let same = &by_day[&(t.stock, t.stamp.day)];
            sum += if same.contains(&stamp.bin) {
                size * alpha / (alpha - 1.0)
            } else {
                1.0 + same
                    .iter()
                    .filter(|&&b| b < stamp.bin)
                    .map(|&b| relax.amplitude * ((stamp.bin - b) as f64).powf(-relax.beta))
                    .sum::<f64>()
            };
            n += 1;
        }
        assert_eq!(n, prof.n_obs[prof.at(lag).unwrap()]);
        let expected = sum / n as f64;
        let got = prof.value_at(lag);
        assert!((got / expected - 1.0).abs() < 0.05, "lag {lag}: {got} vs {expected}");
    }
}

#[test]
fn post_level_drop_is_measured() {
    let (n_stocks, n_days, trigger_bin) = (50, 40, 195u16);
    let start = NaiveDate::from_ymd_opt(2006, 1, 2).unwrap();
    let cal = TradingCalendar::weekdays_from(start, n_days);
    let bpd = cal.bins_per_day();
    let law = AbsReturnLaw {
        tail_exponent: 4.0,
        tail_mass: 0.3,
        body_power: 3.0,
        scale: 0.002,
    };
    let mut closes = Vec::new();
    let mut triggers = Vec::new();
    for s in 0..n_stocks {
        let mut rng = stream(33, 0, s as u32);
        let mut price = 50.0;
        let mut row = Vec::with_capacity(cal.n_bins());
        for i in 0..cal.n_bins() {
            let level = if (i % bpd) as u16 > trigger_bin { 0.9 } else { 1.0 };
            let a = law.sample(&mut rng) * level;
            price *= if rand::Rng::random::<bool>(&mut rng) { 1.0 + a } else { 1.0 - a };
            row.push(price);
        }
        closes.push(row);
        for d in 0..n_days {
            triggers.push(StockStamp {
                stock: s,
                stamp: BinStamp::new(d as u32, trigger_bin),
            });
        }
    }
    let volumes = vec![vec![1u64; cal.n_bins()]; n_stocks];
    let tickers = (0..n_stocks).map(|s| format!("T{s}")).collect();
    let panel = BarPanel::from_closes(cal, tickers, closes, volumes).unwrap();
    let flat = SeasonalCurve::flat(bpd);
    let prof = vol_profile(&triggers, &panel, 120, &flat, &vec![law.mean(); n_stocks]).unwrap();
    let pp = pre_post_baseline(&prof, 30).unwrap();
    let expected = -0.1 * pp.pre_mean;
    assert!(
        (pp.difference - expected).abs() < 2.0 * pp.difference_stderr,
        "{} vs {expected} ± {}",
        pp.difference,
        pp.difference_stderr
    );
    assert!(pp.difference < -5.0 * pp.difference_stderr);
}
