use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

/// Quasi-Newton settings for constant optimization.
#[derive(Debug, Clone, Copy)]
pub struct OptimConfig {
    pub max_iterations: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub restarts: usize,
    pub init_const: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            max_iterations: 100,
            grad_tol: 1e-8,
            step_tol: 1e-10,
            restarts: 2,
            init_const: 1.0,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OptimError {
    #[error("objective non-finite at every start point")]
    AllStartsNonFinite,
}

/// An objective with an analytic gradient. Value-only evaluation is used by
/// the line search, where the gradient would be wasted.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>);
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    fn value(&self, x: &[f64]) -> f64 {
        self(x).0
    }
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self(x)
    }
}

fn inf_norm(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// BFGS with an inverse-Hessian update and a backtracking line search that
/// enforces sufficient decrease. The returned value never exceeds the value
/// at the accepted start; non-finite starts are retried with standard normal
/// draws.
pub fn bfgs_minimize(
    objective: &impl Objective,
    x0: &[f64],
    cfg: &OptimConfig,
    rng: &mut ChaCha20Rng,
) -> Result<(Vec<f64>, f64), OptimError> {
    let dim = x0.len();
    if dim == 0 {
        return Ok((vec![], objective.value(&[])));
    }

    // Accept the first start with a finite value and gradient.
    let mut start: Option<(Array1<f64>, f64, Array1<f64>)> = None;
    for attempt in 0..=cfg.restarts {
        let x: Array1<f64> = if attempt == 0 {
            Array1::from(x0.to_vec())
        } else {
            Array1::from_iter((0..dim).map(|_| standard_normal(rng)))
        };
        let (f, g) = objective.value_grad(x.as_slice().unwrap());
        if f.is_finite() && g.iter().all(|v| v.is_finite()) {
            start = Some((x, f, Array1::from(g)));
            break;
        }
    }
    let (mut x, mut f, mut g) = start.ok_or(OptimError::AllStartsNonFinite)?;

    let mut h: Array2<f64> = Array2::eye(dim);
    let mut best = (x.clone(), f);
    let c1 = 1e-4;

    for _ in 0..cfg.max_iterations {
        if inf_norm(&g) <= cfg.grad_tol {
            break;
        }
        let mut d = -h.dot(&g);
        let mut slope = d.dot(&g);
        if !(slope < 0.0) || !slope.is_finite() {
            // Fallback to steepest descent when curvature went bad.
            h = Array2::eye(dim);
            d = -g.clone();
            slope = d.dot(&g);
            if !(slope < 0.0) {
                break;
            }
        }

        // Backtracking line search.
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let xt = &x + &(t * &d);
            let ft = objective.value(xt.as_slice().unwrap());
            if ft.is_finite() && ft <= f + c1 * t * slope {
                accepted = Some((xt, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            break;
        };
        let (_, g_new_vec) = objective.value_grad(x_new.as_slice().unwrap());
        if g_new_vec.iter().any(|v| !v.is_finite()) {
            if f_new < best.1 {
                best = (x_new, f_new);
            }
            break;
        }
        let g_new = Array1::from(g_new_vec);

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        let step = s.dot(&s).sqrt();

        if sy > 1e-12 * step * y.dot(&y).sqrt().max(1e-30) {
            // Sherman-Morrison form of the inverse-Hessian update.
            let rho = 1.0 / sy;
            let hy = h.dot(&y);
            let yhy = y.dot(&hy);
            let s_col = s.clone().insert_axis(ndarray::Axis(1));
            let hy_col = hy.clone().insert_axis(ndarray::Axis(1));
            let s_row = s.clone().insert_axis(ndarray::Axis(0));
            let hy_row = hy.insert_axis(ndarray::Axis(0));
            h = h - rho * (&s_col.dot(&hy_row) + &hy_col.dot(&s_row))
                + rho * rho * (sy + yhy) * s_col.dot(&s_row);
        }

        x = x_new;
        f = f_new;
        g = g_new;
        if f < best.1 {
            best = (x.clone(), f);
        }
        if step <= cfg.step_tol * (1.0 + x.dot(&x).sqrt()) {
            break;
        }
    }

    Ok((best.0.to_vec(), best.1))
}

fn standard_normal(rng: &mut ChaCha20Rng) -> f64 {
    // Box-Muller; one value per draw keeps replay simple.
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(1)
    }

    #[test]
    fn quadratic_reaches_minimum() {
        let obj = |x: &[f64]| {
            let d = x[0] - 3.0;
            (d * d, vec![2.0 * d])
        };
        let (x, f) = bfgs_minimize(&obj, &[1.0], &OptimConfig::default(), &mut rng()).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-6);
        assert!(f < 1e-12);
    }

    #[test]
    fn linear_least_squares_fit() {
        // Fit c in c*x to targets 2x over ten points.
        let xs: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let obj = move |c: &[f64]| {
            let mut f = 0.0;
            let mut g = 0.0;
            for x in &xs {
                let r = c[0] * x - 2.0 * x;
                f += r * r;
                g += 2.0 * r * x;
            }
            (f / 10.0, vec![g / 10.0])
        };
        let (c, _) = bfgs_minimize(&obj, &[1.0], &OptimConfig::default(), &mut rng()).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn rosenbrock_two_dim() {
        let obj = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            (f, g)
        };
        let cfg = OptimConfig {
            max_iterations: 400,
            ..Default::default()
        };
        let (x, f) = bfgs_minimize(&obj, &[-1.2, 1.0], &cfg, &mut rng()).unwrap();
        assert!(f < 1e-10, "f={f} at {x:?}");
    }

    #[test]
    fn never_increases_from_start() {
        let obj = |x: &[f64]| {
            let f = x[0].sin() + 0.1 * x[0] * x[0];
            (f, vec![x[0].cos() + 0.2 * x[0]])
        };
        let f0 = obj(&[2.0]).0;
        let (_, f) = bfgs_minimize(&obj, &[2.0], &OptimConfig::default(), &mut rng()).unwrap();
        assert!(f <= f0);
    }

    #[test]
    fn non_finite_everywhere_fails() {
        let obj = |_x: &[f64]| (f64::NAN, vec![f64::NAN]);
        let err = bfgs_minimize(&obj, &[1.0], &OptimConfig::default(), &mut rng()).unwrap_err();
        assert_eq!(err, OptimError::AllStartsNonFinite);
    }

    #[test]
    fn non_finite_start_recovers_via_restart() {
        // Defined only for |x| < 1; default start 2.0 is invalid, the normal
        // restarts land inside with high probability.
        let obj = |x: &[f64]| {
            if x[0].abs() >= 1.0 {
                (f64::INFINITY, vec![f64::NAN])
            } else {
                ((x[0] - 0.3) * (x[0] - 0.3), vec![2.0 * (x[0] - 0.3)])
            }
        };
        let cfg = OptimConfig {
            restarts: 20,
            ..Default::default()
        };
        let (x, _) = bfgs_minimize(&obj, &[2.0], &cfg, &mut rng()).unwrap();
        assert!((x[0] - 0.3).abs() < 1e-6);
    }
}
