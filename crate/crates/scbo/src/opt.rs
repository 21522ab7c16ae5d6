//! Limited-memory quasi-Newton minimization with box constraints.
//!
//! A projected L-BFGS: search directions come from the usual two-loop
//! recursion on the projected gradient, and the backtracking line search
//! walks the projected path `clamp(x + t·d)`. That is all the GP
//! hyperparameter fits need — a handful of bounded, smooth parameters in
//! log space.
//!
//! The objective closure takes `(x, need_grad)` and may skip the gradient
//! when `need_grad` is false; line-search trials only use values, which is
//! a real saving when the gradient costs a matrix inverse.

/// Componentwise box `[lo_i, hi_i]`.
#[derive(Debug, Clone)]
pub struct BoxBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert!(lo.iter().zip(&hi).all(|(a, b)| a <= b), "lo must not exceed hi");
        BoxBounds { lo, hi }
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for i in 0..x.len() {
            x[i] = x[i].clamp(self.lo[i], self.hi[i]);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the infinity norm of the projected gradient drops below this.
    pub grad_tol: f64,
    /// Stop on relative objective stagnation.
    pub f_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig { memory: 10, max_iters: 100, grad_tol: 1e-5, f_tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `f(x, need_grad) -> (value, Some(grad) when asked)` over a box.
pub fn minimize_box<F>(mut f: F, x0: &[f64], bounds: &BoxBounds, config: LbfgsConfig) -> LbfgsResult
where
    F: FnMut(&[f64], bool) -> (f64, Option<Vec<f64>>),
{
    let mut x = x0.to_vec();
    bounds.clamp(&mut x);
    let (mut fx, g) = f(&x, true);
    let mut gx = g.expect("gradient requested");

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    let mut stagnant = 0;

    for _ in 0..config.max_iters {
        iters += 1;
        let pg = projected_gradient(&x, &gx, bounds);
        if inf_norm(&pg) < config.grad_tol {
            converged = true;
            break;
        }

        let mut dir = two_loop(&pg, &s_hist, &y_hist);
        for d in dir.iter_mut() {
            *d = -*d;
        }
        if dot(&dir, &gx) >= 0.0 {
            // Not a descent direction; fall back to steepest descent.
            s_hist.clear();
            y_hist.clear();
            dir = pg.iter().map(|g| -g).collect();
        }

        match line_search(&mut f, &x, fx, &gx, &dir, bounds) {
            Some((x_new, f_new)) => {
                let (_, g_new) = f(&x_new, true);
                let g_new = g_new.expect("gradient requested");
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&gx).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-10 * norm(&s) * norm(&y) {
                    s_hist.push(s);
                    y_hist.push(y);
                    if s_hist.len() > config.memory {
                        s_hist.remove(0);
                        y_hist.remove(0);
                    }
                }
                let f_prev = fx;
                x = x_new;
                fx = f_new;
                gx = g_new;
                if (f_prev - fx).abs() <= config.f_tol * (1.0 + fx.abs()) {
                    stagnant += 1;
                    if stagnant >= 2 {
                        converged = true;
                        break;
                    }
                } else {
                    stagnant = 0;
                }
            }
            None => {
                if s_hist.is_empty() {
                    // Even steepest descent cannot move: numerical floor.
                    converged = true;
                    break;
                }
                s_hist.clear();
                y_hist.clear();
                iters -= 1; // retry this iterate with a fresh direction
            }
        }
    }

    LbfgsResult { x, value: fx, iterations: iters, converged }
}

fn projected_gradient(x: &[f64], g: &[f64], bounds: &BoxBounds) -> Vec<f64> {
    g.iter()
        .enumerate()
        .map(|(i, &gi)| {
            if (x[i] <= bounds.lo[i] && gi > 0.0) || (x[i] >= bounds.hi[i] && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

fn two_loop(g: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>]) -> Vec<f64> {
    let mut q = g.to_vec();
    let k = s_hist.len();
    let mut alpha = vec![0.0; k];
    let mut rho = vec![0.0; k];
    for i in (0..k).rev() {
        rho[i] = 1.0 / dot(&y_hist[i], &s_hist[i]);
        alpha[i] = rho[i] * dot(&s_hist[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    if k > 0 {
        let last = k - 1;
        let gamma = dot(&s_hist[last], &y_hist[last]) / dot(&y_hist[last], &y_hist[last]);
        for qj in q.iter_mut() {
            *qj *= gamma;
        }
    }
    for i in 0..k {
        let beta = rho[i] * dot(&y_hist[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += (alpha[i] - beta) * sj;
        }
    }
    q
}

fn line_search<F>(
    f: &mut F,
    x: &[f64],
    fx: f64,
    gx: &[f64],
    dir: &[f64],
    bounds: &BoxBounds,
) -> Option<(Vec<f64>, f64)>
where
    F: FnMut(&[f64], bool) -> (f64, Option<Vec<f64>>),
{
    const C1: f64 = 1e-4;
    let trial = |f: &mut F, t: f64| -> Option<(Vec<f64>, f64)> {
        let mut x_new: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + t * di).collect();
        bounds.clamp(&mut x_new);
        let step: Vec<f64> = x_new.iter().zip(x).map(|(a, b)| a - b).collect();
        if inf_norm(&step) < 1e-16 {
            return None;
        }
        let slope = dot(gx, &step);
        let (f_new, _) = f(&x_new, false);
        (f_new.is_finite() && f_new <= fx + C1 * slope.min(0.0) && f_new < fx)
            .then_some((x_new, f_new))
    };

    let mut t = 1.0;
    for k in 0..40 {
        if let Some((x_new, f_new)) = trial(f, t) {
            if k > 0 {
                return Some((x_new, f_new));
            }
            // The unit step was accepted outright; expand while it pays.
            // Without this, a badly scaled quasi-Newton direction locks the
            // iteration into permanently tiny steps.
            let (mut best_x, mut best_f) = (x_new, f_new);
            let mut grow = 2.0;
            for _ in 0..12 {
                match trial(f, grow) {
                    Some((xg, fg)) if fg < best_f => {
                        best_x = xg;
                        best_f = fg;
                        grow *= 2.0;
                    }
                    _ => break,
                }
            }
            return Some((best_x, best_f));
        }
        t *= 0.5;
    }
    None
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}
