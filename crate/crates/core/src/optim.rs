//! Derivative-free minimization (Nelder–Mead simplex).

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evaluations: usize,
    /// Stop when the simplex's objective spread falls below this.
    pub f_tolerance: f64,
    /// ...and its largest vertex distance from the best point below this.
    pub x_tolerance: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 10_000,
            f_tolerance: 1e-15,
            x_tolerance: 1e-11,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimize `f` from `start`, with initial simplex edges of length `step`.
pub fn nelder_mead<F>(mut f: F, start: &[f64], step: &[f64], opts: NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let n = start.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(start, &mut evaluations);
    simplex.push((start.to_vec(), v0));
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += step[i];
        let v = eval(&x, &mut evaluations);
        simplex.push((x, v));
    }

    let mut converged = false;
    while evaluations < opts.max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = (worst - best).abs();
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= opts.f_tolerance * (1.0 + best.abs()) && size <= opts.x_tolerance {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(ALPHA);
        let fr = eval(&xr, &mut evaluations);
        if fr < simplex[0].1 {
            let xe = along(GAMMA);
            let fe = eval(&xe, &mut evaluations);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let x = along(RHO);
            let v = eval(&x, &mut evaluations);
            (x, v)
        } else {
            let x = along(-RHO);
            let v = eval(&x, &mut evaluations);
            (x, v)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink toward the best vertex
        let best_x = simplex[0].0.clone();
        for (x, v) in simplex.iter_mut().skip(1) {
            for (xi, bi) in x.iter_mut().zip(&best_x) {
                *xi = bi + SIGMA * (*xi - bi);
            }
            *v = eval(x, &mut evaluations);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        evaluations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let m = nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[0.1, 0.1],
            NelderMeadOptions::default(),
        );
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn one_dimensional_quadratic() {
        let m = nelder_mead(|x| (x[0] - 0.37).powi(2), &[2.0], &[0.05], NelderMeadOptions::default());
        assert!((m.x[0] - 0.37).abs() < 1e-9);
    }

    #[test]
    fn budget_is_respected() {
        let opts = NelderMeadOptions {
            max_evaluations: 20,
            ..Default::default()
        };
        let m = nelder_mead(|x| x[0].abs().sqrt(), &[5.0], &[1.0], opts);
        assert!(!m.converged);
        assert!(m.evaluations <= 22);
    }
}
