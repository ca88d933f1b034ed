//! Damped Gauss-Newton (Levenberg-Marquardt) refinement for small,
//! box-constrained curve models.

/// A model `f(x; p)` with an analytic gradient in `p`.
pub trait Model {
    fn n_params(&self) -> usize;
    fn eval(&self, x: f64, p: &[f64]) -> f64;
    /// Writes `∂f/∂p` at `x` into `grad`.
    fn grad(&self, x: f64, p: &[f64], grad: &mut [f64]);
    /// Maps `p` back into the feasible region (clamping, wrapping).
    fn project(&self, p: &mut [f64]);
    /// Value and gradient together; override when they share work.
    fn eval_grad(&self, x: f64, p: &[f64], grad: &mut [f64]) -> f64 {
        self.grad(x, p, grad);
        self.eval(x, p)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Relative RSS decrease below which an accepted step ends the search.
    pub ftol: f64,
    /// Relative step length below which the search ends.
    pub xtol: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            ftol: 1e-10,
            xtol: 1e-10,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub rss: f64,
    pub iterations: usize,
}

pub fn rss<M: Model + ?Sized>(model: &M, xs: &[f64], ys: &[f64], p: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - model.eval(x, p);
            r * r
        })
        .sum()
}

/// Minimizes `Σ (y − f(x; p))²` starting from `start`. Returns `None` when
/// the starting point already evaluates to a non-finite residual.
pub fn minimize<M: Model + ?Sized>(
    model: &M,
    xs: &[f64],
    ys: &[f64],
    start: &[f64],
    opts: &LmOptions,
) -> Option<LmOutcome> {
    let n = model.n_params();
    debug_assert_eq!(start.len(), n);
    let mut p = start.to_vec();
    model.project(&mut p);
    let mut current = rss(model, xs, ys, &p);
    if !current.is_finite() {
        return None;
    }

    let mut lambda = opts.initial_lambda;
    let mut grad = vec![0.0; n];
    let mut jtj = vec![0.0; n * n];
    let mut jtr = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut iterations = 0;

    while iterations < opts.max_iter && current > 0.0 {
        iterations += 1;
        jtj.iter_mut().for_each(|v| *v = 0.0);
        jtr.iter_mut().for_each(|v| *v = 0.0);
        for (&x, &y) in xs.iter().zip(ys) {
            let r = y - model.eval_grad(x, &p, &mut grad);
            for i in 0..n {
                jtr[i] += grad[i] * r;
                for j in 0..=i {
                    jtj[i * n + j] += grad[i] * grad[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                jtj[j * n + i] = jtj[i * n + j];
            }
        }

        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..n {
                let d = jtj[i * n + i].max(1e-12);
                a[i * n + i] += lambda * d;
            }
            let Some(step) = solve(&mut a, &jtr, n) else {
                lambda *= 10.0;
                continue;
            };
            for i in 0..n {
                trial[i] = p[i] + step[i];
            }
            model.project(&mut trial);
            let next = rss(model, xs, ys, &trial);
            if next.is_finite() && next < current {
                let step_norm: f64 = p
                    .iter()
                    .zip(&trial)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let p_norm: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                let decrease = current - next;
                p.copy_from_slice(&trial);
                let prev = current;
                current = next;
                lambda = (lambda * 0.2).max(1e-12);
                improved = true;
                if decrease <= opts.ftol * prev || step_norm <= opts.xtol * (p_norm + opts.xtol)
                {
                    return Some(LmOutcome {
                        params: p,
                        rss: current,
                        iterations,
                    });
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }

    Some(LmOutcome {
        params: p,
        rss: current,
        iterations,
    })
}

/// Solves `a · x = b` for a small dense system by Gaussian elimination with
/// partial pivoting. `a` is row-major `n × n` and is overwritten.
pub fn solve(a: &mut [f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut rhs = b.to_vec();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i * n + col]
                .abs()
                .partial_cmp(&a[j * n + col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        let pv = a[pivot * n + col];
        if !pv.is_finite() || pv.abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            rhs.swap(col, pivot);
        }
        for row in col + 1..n {
            let factor = a[row * n + col] / a[col * n + col];
            if factor != 0.0 {
                for k in col..n {
                    a[row * n + k] -= factor * a[col * n + k];
                }
                rhs[row] -= factor * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Ordinary least squares for `y ≈ Σ_j coef_j · basis_j(x)`, given the basis
/// columns evaluated at every sample.
pub fn linear_lstsq(columns: &[Vec<f64>], ys: &[f64]) -> Option<Vec<f64>> {
    let n = columns.len();
    let mut ata = vec![0.0; n * n];
    let mut aty = vec![0.0; n];
    for i in 0..n {
        aty[i] = columns[i].iter().zip(ys).map(|(a, y)| a * y).sum();
        for j in 0..=i {
            let v: f64 = columns[i].iter().zip(&columns[j]).map(|(a, b)| a * b).sum();
            ata[i * n + j] = v;
            ata[j * n + i] = v;
        }
    }
    solve(&mut ata, &aty, n)
}
