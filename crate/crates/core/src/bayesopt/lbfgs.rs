//! Projected limited-memory BFGS for box-constrained minimisation with
//! central-difference gradients.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
pub struct LbfgsOptions {
    pub max_iter: usize,
    pub memory: usize,
    pub tol: f64,
    pub fd_step: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { max_iter: 100, memory: 6, tol: 1e-9, fd_step: 1e-6 }
    }
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(l, h);
    }
}

fn eval(f: &impl Fn(&[f64]) -> f64, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn gradient(f: &impl Fn(&[f64]) -> f64, x: &[f64], lo: &[f64], hi: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let up = (x[i] + h).min(hi[i]);
        let down = (x[i] - h).max(lo[i]);
        if up <= down {
            continue;
        }
        probe[i] = up;
        let fu = eval(f, &probe);
        probe[i] = down;
        let fd = eval(f, &probe);
        probe[i] = x[i];
        let gi = (fu - fd) / (up - down);
        g[i] = if gi.is_finite() { gi } else { 0.0 };
    }
    g
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Components of `g` that would move `x` out of the box are treated as zero.
fn free_gradient(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((&xi, &gi), (&l, &h))| if (xi <= l && gi > 0.0) || (xi >= h && gi < 0.0) { 0.0 } else { gi })
        .collect()
}

/// Returns the best point found and its value. Never fails: a stalled line
/// search simply ends the run at the current iterate.
pub fn minimize_box(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &LbfgsOptions,
) -> (Vec<f64>, f64) {
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let mut fx = eval(&f, &x);
    let mut g = gradient(&f, &x, lo, hi, opts.fd_step);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();

    for _ in 0..opts.max_iter {
        let pg = free_gradient(&x, &g, lo, hi);
        if pg.iter().map(|v| v * v).sum::<f64>().sqrt() < opts.tol {
            break;
        }
        // two-loop recursion
        let mut q = pg.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        if dot(&dir, &pg) >= 0.0 {
            dir = pg.iter().map(|v| -v).collect();
            history.clear();
        }

        let trial = |step: f64| {
            let mut cand: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            project(&mut cand, lo, hi);
            let moved: Vec<f64> = cand.iter().zip(&x).map(|(c, xi)| c - xi).collect();
            let fc = eval(&f, &cand);
            let ok = fc < fx && fc <= fx + 1e-4 * dot(&g, &moved);
            (cand, fc, ok)
        };
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let (cand, fc, ok) = trial(step);
            if ok {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        // a full step that succeeds may be too timid on a badly scaled first
        // iterate, so keep doubling while the value keeps falling
        if step == 1.0 {
            while let Some((_, best_f)) = &accepted {
                let (cand, fc, ok) = trial(step * 2.0);
                if !ok || fc >= *best_f || step > 1e6 {
                    break;
                }
                step *= 2.0;
                accepted = Some((cand, fc));
            }
        }
        let Some((xn, fn_)) = accepted else {
            break;
        };
        let gn = gradient(&f, &xn, lo, hi, opts.fd_step);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let converged = (fx - fn_).abs() <= opts.tol * (1.0 + fx.abs());
        x = xn;
        fx = fn_;
        g = gn;
        if converged {
            break;
        }
    }
    (x, fx)
}
