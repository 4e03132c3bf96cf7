//! Empirical CCDFs and Hill tail-index fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest tail the Hill fit accepts.
pub const MIN_TAIL: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    /// CCDF slope magnitude.
    pub exponent: f64,
    pub fit_range: [f64; 2],
    pub n_tail: usize,
    pub stderr: f64,
}

/// How many order statistics enter the Hill estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailSelection {
    /// Largest `fraction` of the sample.
    Fraction(f64),
    /// Exactly the `k` largest values.
    Count(usize),
    /// All values strictly above a fixed threshold, which is then the scale.
    Threshold(f64),
    /// Walk a doubling grid of k from [`MIN_TAIL`] and keep the last k whose
    /// estimate stays within one standard error of the previous grid point.
    Plateau,
}

impl Default for TailSelection {
    fn default() -> Self {
        TailSelection::Fraction(0.05)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcdfPoint {
    pub score: f64,
    pub ccdf: f64,
}

fn sorted_desc(values: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite() && *x > 0.0).collect();
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    v
}

/// Hill estimate from the `k` largest of a descending sample, scaled by the
/// (k+1)-th value. Returns `(exponent, sum of log excesses)`.
fn hill_top_k(desc: &[f64], k: usize) -> (f64, f64) {
    let scale = desc[k];
    let sum: f64 = desc[..k].iter().map(|x| (x / scale).ln()).sum();
    (k as f64 / sum, sum)
}

/// Hill estimator of the CCDF exponent.
pub fn hill(values: &[f64], selection: TailSelection) -> Result<TailFit> {
    let desc = sorted_desc(values);
    let n = desc.len();
    let refuse = |why: String| Err(Error::FitRefused(why));

    if let TailSelection::Threshold(u) = selection {
        if !(u > 0.0) {
            return Err(Error::invalid("threshold", "must be positive"));
        }
        let k = desc.partition_point(|&x| x > u);
        if k < MIN_TAIL {
            return refuse(format!("only {k} values above {u}, need {MIN_TAIL}"));
        }
        let sum: f64 = desc[..k].iter().map(|x| (x / u).ln()).sum();
        if !(sum > 0.0) {
            return refuse("zero Hill spread".into());
        }
        let exponent = k as f64 / sum;
        return Ok(TailFit {
            exponent,
            fit_range: [u, desc[0]],
            n_tail: k,
            stderr: exponent / (k as f64).sqrt(),
        });
    }

    let k = match selection {
        TailSelection::Fraction(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::invalid("tail fraction", format!("{f} not in (0, 1)")));
            }
            (f * n as f64).floor() as usize
        }
        TailSelection::Count(k) => k,
        TailSelection::Plateau => plateau_k(&desc),
        TailSelection::Threshold(_) => unreachable!(),
    };
    if k < MIN_TAIL || k >= n {
        return refuse(format!("tail of {k} out of {n} values, need at least {MIN_TAIL}"));
    }
    let (exponent, sum) = hill_top_k(&desc, k);
    if !(sum > 0.0) || !exponent.is_finite() {
        return refuse("zero Hill spread".into());
    }
    Ok(TailFit {
        exponent,
        fit_range: [desc[k], desc[0]],
        n_tail: k,
        stderr: exponent / (k as f64).sqrt(),
    })
}

fn plateau_k(desc: &[f64]) -> usize {
    let n = desc.len();
    if n <= MIN_TAIL {
        return 0;
    }
    let mut k = MIN_TAIL;
    let (mut prev, _) = hill_top_k(desc, k);
    while 2 * k < n {
        let (next, _) = hill_top_k(desc, 2 * k);
        if !prev.is_finite() || (next - prev).abs() > prev / (k as f64).sqrt() {
            break;
        }
        k *= 2;
        prev = next;
    }
    k
}

/// Empirical P(X ≥ x) evaluated on `points_per_decade` logarithmic grid
/// points spanning the positive sample.
pub fn ccdf(values: &[f64], points_per_decade: usize) -> Vec<CcdfPoint> {
    let desc = sorted_desc(values);
    let (Some(&hi), Some(&lo)) = (desc.first(), desc.last()) else {
        return Vec::new();
    };
    let n = desc.len() as f64;
    let decades = (hi / lo).log10();
    let steps = ((decades * points_per_decade as f64).ceil() as usize).max(1);
    (0..=steps)
        .map(|i| {
            let x = if i == steps {
                hi
            } else {
                lo * 10f64.powf(decades * i as f64 / steps as f64)
            };
            let count = desc.partition_point(|&v| v >= x);
            CcdfPoint {
                score: x,
                ccdf: count as f64 / n,
            }
        })
        .collect()
}

/// Mean and standard error of the mean.
pub(crate) fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
