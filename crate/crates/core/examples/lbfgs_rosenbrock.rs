//! The L-BFGS solver on the Rosenbrock function.

use std::convert::Infallible;

use painterly::optimizer::{Lbfgs, OptimizeReport};

pub fn run_example(history: usize) -> (Vec<f64>, OptimizeReport) {
    let rosenbrock = |x: &[f64], g: &mut [f64]| {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        Ok::<_, Infallible>((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
    };
    let mut log = |i: usize, f: f64| {
        if i.is_power_of_two() {
            println!("  iter {i:3}  f = {f:.3e}");
        }
    };
    Lbfgs::default()
        .with_history(history)
        .with_grad_tol(1e-10)
        .minimize(&[-1.2, 1.0], None, rosenbrock, Some(&mut log))
        .unwrap()
}

#[allow(dead_code)]
fn main() {
    for history in [10, 3, 0] {
        println!("history {history}");
        let (x, report) = run_example(history);
        println!(
            "  -> ({:.8}, {:.8}) after {} iterations, {:?}",
            x[0], x[1], report.iterations_run, report.termination
        );
    }
}
