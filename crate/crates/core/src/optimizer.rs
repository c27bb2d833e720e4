//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

/// Why [`Lbfgs::minimize`] stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIters,
    GradientTol,
    LineSearchFailure,
    /// The objective produced a non-finite loss or gradient; the returned
    /// iterate is the last finite one.
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeReport {
    pub iterations_run: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Loss at the start point and after every accepted step.
    pub trace: Vec<f64>,
    pub termination: Termination,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lbfgs {
    pub max_iters: usize,
    /// Number of stored curvature pairs.
    pub history: usize,
    /// Stop once the max-norm of the (active) gradient drops below this.
    pub grad_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for Lbfgs {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            history: 10,
            grad_tol: 1e-7,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

const CURVATURE_EPS: f64 = 1e-10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl Lbfgs {
    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_history(mut self, history: usize) -> Self {
        self.history = history;
        self
    }

    pub fn with_grad_tol(mut self, grad_tol: f64) -> Self {
        self.grad_tol = grad_tol;
        self
    }

    /// Minimizes `objective`, which returns the loss and writes the gradient
    /// into its second argument.
    ///
    /// Coordinates where `active` is `false` keep their starting value exactly.
    /// `progress` is called with `(iteration, loss)` after every accepted step.
    pub fn minimize<E>(
        &self,
        x0: &[f64],
        active: Option<&[bool]>,
        mut objective: impl FnMut(&[f64], &mut [f64]) -> Result<f64, E>,
        mut progress: Option<&mut dyn FnMut(usize, f64)>,
    ) -> Result<(Vec<f64>, OptimizeReport), E> {
        let n = x0.len();
        if let Some(a) = active {
            assert_eq!(a.len(), n, "active mask length must match x0");
        }
        let freeze = |g: &mut [f64]| {
            if let Some(a) = active {
                for (gi, &on) in g.iter_mut().zip(a) {
                    if !on {
                        *gi = 0.0;
                    }
                }
            }
        };

        let mut x = x0.to_vec();
        let mut g = vec![0.0; n];
        let mut f = objective(&x, &mut g)?;
        freeze(&mut g);
        let mut report = OptimizeReport {
            iterations_run: 0,
            initial_loss: f,
            final_loss: f,
            trace: vec![f],
            termination: Termination::MaxIters,
        };
        if !f.is_finite() || !all_finite(&g) {
            report.termination = Termination::NonFinite;
            return Ok((x, report));
        }

        let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(self.history);
        let mut d = vec![0.0; n];
        let mut x_new = vec![0.0; n];
        let mut g_new = vec![0.0; n];
        let mut alpha_buf = vec![0.0; self.history];

        for iter in 0..self.max_iters {
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if gmax < self.grad_tol {
                report.termination = Termination::GradientTol;
                break;
            }

            // two-loop recursion
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
            for (i, (s, y, rho)) in pairs.iter().enumerate().rev() {
                let a = rho * dot(s, &d);
                alpha_buf[i] = a;
                d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
            }
            let mut step = 1.0;
            if let Some((s, y, _)) = pairs.back() {
                let gamma = dot(s, y) / dot(y, y);
                d.iter_mut().for_each(|di| *di *= gamma);
            }
            for (i, (s, y, rho)) in pairs.iter().enumerate() {
                let b = rho * dot(y, &d);
                d.iter_mut()
                    .zip(s)
                    .for_each(|(di, si)| *di += (alpha_buf[i] - b) * si);
            }
            let mut gd = dot(&g, &d);
            if pairs.is_empty() || !(gd < 0.0) {
                pairs.clear();
                d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
                gd = -dot(&g, &g);
                let l1: f64 = g.iter().map(|v| v.abs()).sum();
                step = (1.0 / l1).min(1.0);
            }
            freeze(&mut d);

            // backtracking Armijo search
            let mut accepted = None;
            for _ in 0..=self.max_backtracks {
                for i in 0..n {
                    x_new[i] = x[i] + step * d[i];
                }
                let f_new = objective(&x_new, &mut g_new)?;
                freeze(&mut g_new);
                if !f_new.is_finite() || !all_finite(&g_new) {
                    report.termination = Termination::NonFinite;
                    return Ok((x, report));
                }
                if f_new <= f + self.armijo * step * gd {
                    accepted = Some(f_new);
                    break;
                }
                step *= 0.5;
            }
            let Some(f_new) = accepted else {
                report.termination = Termination::LineSearchFailure;
                break;
            };

            if self.history > 0 {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let ys = dot(&y, &s);
                if ys > CURVATURE_EPS {
                    if pairs.len() == self.history {
                        pairs.pop_front();
                    }
                    pairs.push_back((s, y, 1.0 / ys));
                }
            }
            std::mem::swap(&mut x, &mut x_new);
            std::mem::swap(&mut g, &mut g_new);
            f = f_new;
            report.iterations_run = iter + 1;
            report.trace.push(f);
            report.final_loss = f;
            if let Some(cb) = progress.as_mut() {
                cb(iter + 1, f);
            }
        }
        Ok((x, report))
    }
}
