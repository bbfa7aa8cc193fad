//! Derivative-free simplex minimizer.
//!
//! Classic Nelder-Mead with the standard coefficients. The objective may
//! return `+inf` (or NaN, treated the same) on parts of the space; such
//! vertices simply rank worst, which makes the method robust to the hard
//! likelihood cliffs at the edge of the feasible box.

/// Simplex minimizer settings.
#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_iters: usize,
    /// Stop when the function spread over the simplex falls below
    /// `f_tol * (1 + |f_best|)` …
    pub f_tol: f64,
    /// … and every coordinate spread falls below `x_tol`.
    pub x_tol: f64,
    /// Offset used to build the initial simplex around the start point.
    pub init_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead { max_iters: 800, f_tol: 1e-9, x_tol: 1e-6, init_step: 0.25 }
    }
}

/// Result of a minimization run.
#[derive(Debug, Clone)]
pub struct OptOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

impl NelderMead {
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, x0: &[f64]) -> OptOutcome {
        let n = x0.len();
        assert!(n >= 1, "cannot optimize a zero-dimensional function");
        let mut evals = 0;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            sanitize(f(x))
        };

        // Vertices kept sorted by objective value, best first.
        let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n + 1);
        simplex.push((eval(x0, &mut evals), x0.to_vec()));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += self.init_step;
            simplex.push((eval(&x, &mut evals), x));
        }
        simplex.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut converged = false;
        for _ in 0..self.max_iters {
            let best = simplex[0].0;
            let worst = simplex[n].0;
            let f_spread = worst - best;
            let x_spread = (0..n)
                .map(|i| {
                    let lo = simplex.iter().map(|(_, x)| x[i]).fold(f64::INFINITY, f64::min);
                    let hi = simplex.iter().map(|(_, x)| x[i]).fold(f64::NEG_INFINITY, f64::max);
                    hi - lo
                })
                .fold(0.0, f64::max);
            if best.is_finite()
                && f_spread <= self.f_tol * (1.0 + best.abs())
                && x_spread <= self.x_tol
            {
                converged = true;
                break;
            }

            // Centroid of all but the worst vertex.
            let mut centroid = vec![0.0; n];
            for (_, x) in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / n as f64;
                }
            }
            let worst_x = simplex[n].1.clone();
            let second_worst = simplex[n - 1].0;

            let blend = |lambda: f64| -> Vec<f64> {
                centroid.iter().zip(&worst_x).map(|(c, w)| c + lambda * (c - w)).collect()
            };

            let reflected = blend(1.0);
            let f_r = eval(&reflected, &mut evals);

            let replacement = if f_r < best {
                let expanded = blend(2.0);
                let f_e = eval(&expanded, &mut evals);
                if f_e < f_r {
                    Some((f_e, expanded))
                } else {
                    Some((f_r, reflected))
                }
            } else if f_r < second_worst {
                Some((f_r, reflected))
            } else {
                let contracted = if f_r < worst { blend(0.5) } else { blend(-0.5) };
                let f_c = eval(&contracted, &mut evals);
                if f_c < worst.min(f_r) {
                    Some((f_c, contracted))
                } else {
                    None
                }
            };

            match replacement {
                Some(v) => {
                    simplex[n] = v;
                    simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
                }
                None => {
                    // Shrink toward the best vertex.
                    let best_x = simplex[0].1.clone();
                    for (fv, x) in simplex.iter_mut().skip(1) {
                        for (xi, bi) in x.iter_mut().zip(&best_x) {
                            *xi = bi + 0.5 * (*xi - bi);
                        }
                        *fv = eval(x, &mut evals);
                    }
                    simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
                }
            }
        }

        let (f_best, x_best) = simplex.swap_remove(0);
        OptOutcome { x: x_best, f: f_best, evals, converged }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl_converges_to_its_minimum() {
        let target = [1.0, -2.0, 3.0, 0.5, -0.25];
        let opt = NelderMead { max_iters: 4000, ..Default::default() };
        let out = opt.minimize(
            |x| {
                x.iter()
                    .zip(&target)
                    .enumerate()
                    .map(|(i, (xi, ti))| (i as f64 + 1.0) * (xi - ti).powi(2))
                    .sum()
            },
            &[0.0; 5],
        );
        assert!(out.converged);
        assert!(out.f < 1e-10, "f = {}", out.f);
        for (xi, ti) in out.x.iter().zip(&target) {
            assert!((xi - ti).abs() < 1e-4);
        }
    }

    #[test]
    fn banana_valley_is_followed_to_the_bottom() {
        let opt = NelderMead { max_iters: 5000, ..Default::default() };
        let out = opt.minimize(
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            &[-1.2, 1.0],
        );
        assert!(out.f < 1e-8, "f = {}", out.f);
        assert!((out.x[0] - 1.0).abs() < 1e-3 && (out.x[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn infinite_plateaus_are_escaped() {
        // Objective is +inf outside a box that the start point straddles.
        let opt = NelderMead::default();
        let out = opt.minimize(
            |x| {
                if x.iter().any(|&xi| !(-2.0..=2.0).contains(&xi)) {
                    f64::INFINITY
                } else {
                    (x[0] - 0.5).powi(2) + (x[1] + 0.5).powi(2)
                }
            },
            &[1.9, 1.9],
        );
        assert!(out.converged);
        assert!(out.f < 1e-8);
    }

    #[test]
    fn nan_objectives_rank_as_worst_rather_than_poisoning_the_simplex() {
        let opt = NelderMead::default();
        let out = opt.minimize(
            |x| {
                if x[0] < 0.0 {
                    f64::NAN
                } else {
                    (x[0] - 1.0).powi(2)
                }
            },
            &[0.2],
        );
        assert!(out.f < 1e-8);
        assert!((out.x[0] - 1.0).abs() < 1e-3);
    }
}
