//! Derivative-free simplex minimization (Nelder-Mead) and finite-difference
//! gradient estimates used for fit diagnostics.

/// Outcome of a simplex search.
#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: u64,
    pub converged: bool,
}

/// Nelder-Mead settings. `initial_step` gives the per-coordinate offset used
/// to build the starting simplex around `x0`.
#[derive(Debug, Clone)]
pub struct NelderMead {
    pub initial_step: Vec<f64>,
    pub rel_tol: f64,
    pub max_evals: u64,
}

impl NelderMead {
    pub fn new(initial_step: Vec<f64>) -> Self {
        NelderMead {
            initial_step,
            rel_tol: 1e-6,
            max_evals: 2000,
        }
    }

    /// Minimize `f` starting from `x0`. Standard reflection/expansion/
    /// contraction/shrink coefficients (1, 2, 1/2, 1/2).
    pub fn minimize(&self, x0: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> OptimResult {
        let dim = x0.len();
        assert_eq!(self.initial_step.len(), dim);
        assert!(dim >= 1);
        let mut evals: u64 = 0;
        let mut eval = |x: &[f64], evals: &mut u64| -> f64 {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
        simplex.push(x0.to_vec());
        for i in 0..dim {
            let mut p = x0.to_vec();
            let step = if self.initial_step[i] != 0.0 {
                self.initial_step[i]
            } else {
                0.05 * p[i].abs().max(1.0)
            };
            p[i] += step;
            simplex.push(p);
        }
        let mut values: Vec<f64> = simplex.iter().map(|p| eval(p, &mut evals)).collect();

        let mut converged = false;
        while evals < self.max_evals {
            // Order: indices sorted by value ascending.
            let mut order: Vec<usize> = (0..=dim).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            let best = order[0];
            let worst = order[dim];
            let second_worst = order[dim - 1];

            let spread = values[worst] - values[best];
            if spread.abs() <= self.rel_tol * (values[best].abs() + 1e-12) {
                converged = true;
                break;
            }

            // Centroid of all but the worst vertex.
            let mut centroid = vec![0.0; dim];
            for &i in order.iter().take(dim) {
                for (c, &xi) in centroid.iter_mut().zip(&simplex[i]) {
                    *c += xi;
                }
            }
            for c in centroid.iter_mut() {
                *c /= dim as f64;
            }

            // Points along the worst -> centroid axis: t = 1 is the centroid,
            // t = 2 the reflection, t = 3 the expansion.
            let lerp = |t: f64, from: &[f64], to: &[f64]| -> Vec<f64> {
                from.iter()
                    .zip(to)
                    .map(|(&a, &b)| a + t * (b - a))
                    .collect()
            };

            // Reflection.
            let reflected = lerp(2.0, &simplex[worst], &centroid);
            let fr = eval(&reflected, &mut evals);
            if fr < values[best] {
                // Expansion.
                let expanded = lerp(3.0, &simplex[worst], &centroid);
                let fe = eval(&expanded, &mut evals);
                if fe < fr {
                    simplex[worst] = expanded;
                    values[worst] = fe;
                } else {
                    simplex[worst] = reflected;
                    values[worst] = fr;
                }
            } else if fr < values[second_worst] {
                simplex[worst] = reflected;
                values[worst] = fr;
            } else {
                // Contraction, outside or inside of the centroid.
                let (point, fp) = if fr < values[worst] {
                    let outside = lerp(1.5, &simplex[worst], &centroid);
                    let v = eval(&outside, &mut evals);
                    (outside, v)
                } else {
                    let inside = lerp(0.5, &simplex[worst], &centroid);
                    let v = eval(&inside, &mut evals);
                    (inside, v)
                };
                if fp < values[worst].min(fr) {
                    simplex[worst] = point;
                    values[worst] = fp;
                } else {
                    // Shrink toward the best vertex.
                    let best_point = simplex[best].clone();
                    for i in 0..=dim {
                        if i == best {
                            continue;
                        }
                        simplex[i] = lerp(0.5, &simplex[i], &best_point);
                        values[i] = eval(&simplex[i], &mut evals);
                    }
                }
            }
        }

        let mut best = 0;
        for i in 1..=dim {
            if values[i] < values[best] {
                best = i;
            }
        }
        OptimResult {
            x: simplex[best].clone(),
            value: values[best],
            evaluations: evals,
            converged,
        }
    }
}

/// Central-difference gradient with explicit per-coordinate steps. Steps must
/// reflect each coordinate's natural scale or truncation error dominates.
///
/// This is the estimate the fitter reports in its diagnostics; tests compare
/// it against independently chosen step sizes.
pub fn fd_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], steps: &[f64]) -> Vec<f64> {
    assert_eq!(steps.len(), x.len());
    let mut grad = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = steps[i];
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_shifted_quadratic() {
        let nm = NelderMead::new(vec![0.5, 0.5]);
        let res = nm.minimize(&[5.0, -3.0], |x| {
            (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2) + 7.0
        });
        assert!(res.converged);
        assert!((res.x[0] - 1.0).abs() < 1e-3, "{:?}", res.x);
        assert!((res.x[1] + 2.0).abs() < 1e-3, "{:?}", res.x);
        assert!((res.value - 7.0).abs() < 1e-5);
    }

    #[test]
    fn minimizes_rosenbrock() {
        let nm = NelderMead {
            initial_step: vec![0.2, 0.2],
            rel_tol: 1e-10,
            max_evals: 5000,
        };
        let res = nm.minimize(&[-1.2, 1.0], |x| {
            100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)
        });
        assert!((res.x[0] - 1.0).abs() < 1e-3);
        assert!((res.x[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn respects_eval_budget() {
        let nm = NelderMead {
            initial_step: vec![1.0],
            rel_tol: 0.0,
            max_evals: 50,
        };
        let res = nm.minimize(&[10.0], |x| x[0].abs());
        assert!(res.evaluations <= 52); // one extra pair at most per iteration
        assert!(!res.converged);
    }

    #[test]
    fn nan_objective_is_rejected() {
        let nm = NelderMead::new(vec![0.5]);
        let res = nm.minimize(&[2.0], |x| {
            if x[0] < 0.0 {
                f64::NAN
            } else {
                (x[0] - 1.0).powi(2)
            }
        });
        assert!((res.x[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn gradient_matches_analytic() {
        let f = |x: &[f64]| x[0].powi(3) + 2.0 * x[0] * x[1] + x[1].sin();
        let x = [0.7, -0.4];
        let g = fd_gradient(f, &x, &[1e-6, 1e-6]);
        let want = [3.0 * 0.49 + 2.0 * (-0.4), 2.0 * 0.7 + (-0.4f64).cos()];
        for (got, want) in g.iter().zip(want) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
    }
}
