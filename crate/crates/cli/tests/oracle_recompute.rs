//! Regenerates the frozen Monte-Carlo oracle used by acceptance criterion 7.
//! Run with `cargo test -p jumplab-cli --test oracle_recompute -- --ignored --nocapture`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// k-th largest value (1-based).
fn kth_largest(mut v: Vec<f64>, k: usize) -> f64 {
    let n = v.len();
    *v.select_nth_unstable_by(n - k, f64::total_cmp).1
}

#[test]
#[ignore]
fn coupled_tail_dependence_oracle() {
    let (n, p) = (10_000_000usize, 1e-4);
    let (lambda, alpha, noise, v_exp, v_min) = (1.0f64, 0.5f64, 5.0f64, 1.5f64, 100.0f64);
    let mut rng = ChaCha20Rng::seed_from_u64(0x0A11_CE5E);
    let mut x = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = 1.0 - rng.random::<f64>();
        let size = (v_min * u.powf(-1.0 / v_exp)).ceil();
        let z: f64 = StandardNormal.sample(&mut rng);
        x.push((lambda * size.powf(alpha) + noise * z).abs());
        v.push(size);
    }
    let k = (p * n as f64) as usize;
    let tx = kth_largest(x.clone(), k);
    let tv = kth_largest(v.clone(), k);
    let joint = (0..n).filter(|&i| x[i] >= tx && v[i] >= tv).count();
    let c = joint as f64 / k as f64;
    let se = (c * (1.0 - c) / k as f64).sqrt();
    println!("C({p}) = {c:.4} ± {se:.4} from {n} draws ({joint} of {k})");
}
