//! Exact inverse-CDF samplers and a Hawkes simulator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent deterministic stream for (seed, purpose, index).
pub fn stream(seed: u64, purpose: u32, index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(purpose) << 32) | u64::from(index));
    rng
}

/// Uniform on (0, 1].
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Pareto with P(X > x) = (x / min)^(−exponent), x ≥ min.
pub fn pareto<R: Rng + ?Sized>(rng: &mut R, exponent: f64, min: f64) -> f64 {
    min * open_unit(rng).powf(-1.0 / exponent)
}

/// |r| with an exact Pareto tail above `scale` carrying mass `tail_mass`,
/// and a body on [0, scale] with density ∝ (1 − x/scale)^(body_power − 1).
///
/// P(|r| > x) = tail_mass · (x/scale)^(−tail_exponent) for x ≥ scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsReturnLaw {
    pub tail_exponent: f64,
    pub tail_mass: f64,
    pub body_power: f64,
    pub scale: f64,
}

impl AbsReturnLaw {
    pub fn quantile_of_survival(&self, u: f64) -> f64 {
        if u <= self.tail_mass {
            self.scale * (u / self.tail_mass).powf(-1.0 / self.tail_exponent)
        } else {
            let w = (u - self.tail_mass) / (1.0 - self.tail_mass);
            self.scale * (1.0 - w.powf(1.0 / self.body_power))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile_of_survival(open_unit(rng))
    }

    pub fn survival(&self, x: f64) -> f64 {
        if x >= self.scale {
            self.tail_mass * (x / self.scale).powf(-self.tail_exponent)
        } else if x <= 0.0 {
            1.0
        } else {
            let body = 1.0 - (1.0 - x / self.scale).powf(self.body_power);
            1.0 - (1.0 - self.tail_mass) * body
        }
    }

    pub fn mean(&self) -> f64 {
        let a = self.tail_exponent;
        self.scale * ((1.0 - self.tail_mass) / (self.body_power + 1.0) + self.tail_mass * a / (a - 1.0))
    }
}

/// Event times on [0, horizon) of a Hawkes process with intensity
/// μ + Σ branching·decay·e^(−decay (t − t_i)), by Ogata thinning.
pub fn hawkes<R: Rng + ?Sized>(rng: &mut R, mu: f64, branching: f64, decay: f64, horizon: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = 0.0;
    // excitation at time t
    let mut excite = 0.0;
    let jump = branching * decay;
    loop {
        let bound = mu + excite;
        let dt = -open_unit(rng).ln() / bound;
        t += dt;
        if t >= horizon {
            break;
        }
        excite *= (-decay * dt).exp();
        if rng.random::<f64>() * bound <= mu + excite {
            out.push(t);
            excite += jump;
        }
    }
    out
}

/// Choose `k` distinct indices from 0..n (partial Fisher–Yates), sorted.
pub fn choose<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<u32> {
    let k = k.min(n);
    let mut idx: Vec<u32> = (0..n as u32).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn law_quantile_inverts_survival() {
        let law = AbsReturnLaw {
            tail_exponent: 4.0,
            tail_mass: 0.1,
            body_power: 3.0,
            scale: 0.002,
        };
        for &u in &[0.9, 0.5, 0.1, 0.01, 1e-6] {
            let x = law.quantile_of_survival(u);
            assert!((law.survival(x) - u).abs() < 1e-12, "{u}");
        }
        // E|r| = ∫ survival: linear trapezoid on the body, log-spaced above it
        let hi = law.scale * 1e4;
        let mut m = 0.0;
        let steps = 100_000;
        for i in 0..steps {
            let a = law.scale * i as f64 / steps as f64;
            let b = law.scale * (i + 1) as f64 / steps as f64;
            m += 0.5 * (law.survival(a) + law.survival(b)) * (b - a);
        }
        let (la, lb) = (law.scale.ln(), hi.ln());
        for i in 0..steps {
            let a = (la + (lb - la) * i as f64 / steps as f64).exp();
            let b = (la + (lb - la) * (i + 1) as f64 / steps as f64).exp();
            m += 0.5 * (law.survival(a) + law.survival(b)) * (b - a);
        }
        m += law.tail_mass * law.scale * (hi / law.scale).powf(1.0 - law.tail_exponent) / (law.tail_exponent - 1.0);
        assert!((m / law.mean() - 1.0).abs() < 1e-6, "{m} vs {}", law.mean());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream(7, 1, 2).random()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let mut x = stream(7, 1, 2);
        let mut y = stream(7, 1, 3);
        assert_ne!(x.random::<u64>(), y.random::<u64>());
    }

    #[test]
    fn hawkes_mean_rate() {
        let mut rng = stream(1, 0, 0);
        let (mu, n, horizon) = (0.05, 0.4, 2.0e5);
        let ev = hawkes(&mut rng, mu, n, 0.2, horizon);
        let rate = ev.len() as f64 / horizon;
        let expected = mu / (1.0 - n);
        assert!((rate / expected - 1.0).abs() < 0.05, "{rate} vs {expected}");
        assert!(ev.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn choose_is_distinct() {
        let mut rng = stream(3, 0, 0);
        let c = choose(&mut rng, 50, 20);
        assert_eq!(c.len(), 20);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(choose(&mut rng, 5, 9).len(), 5);
    }
}
