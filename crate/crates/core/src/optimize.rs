//! Quasi-Newton (BFGS) minimization with Armijo backtracking.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the relative objective decrease of an iteration falls below this.
    pub f_rel_tol: f64,
    /// Stop when the gradient norm falls below this.
    pub grad_tol: f64,
    /// Stop when the objective itself falls below this.
    pub f_abs_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iter: 2000, f_rel_tol: 1e-10, grad_tol: 1e-14, f_abs_tol: 1e-28 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f`, which returns the value and writes the gradient into its second argument.
pub fn bfgs<F>(f: F, x0: &[f64], opts: &BfgsOptions) -> BfgsResult
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut g = DVector::zeros(n);
    let mut fx = f(x.as_slice(), g.as_mut_slice());
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut x_new = DVector::zeros(n);
    let mut g_new = DVector::zeros(n);
    // Relative-decrease stalls must repeat before they count as convergence.
    let mut stalls = 0;
    for iter in 0..opts.max_iter {
        if fx <= opts.f_abs_tol || g.norm() <= opts.grad_tol {
            return BfgsResult { x: x.as_slice().to_vec(), f: fx, iterations: iter, converged: true };
        }
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            h = DMatrix::identity(n, n);
            d = -g.clone();
            slope = g.dot(&d);
        }
        let mut step = 1.0;
        let mut f_new;
        loop {
            x_new.copy_from(&(&x + &d * step));
            f_new = f(x_new.as_slice(), g_new.as_mut_slice());
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                return BfgsResult { x: x.as_slice().to_vec(), f: fx, iterations: iter, converged: h_is_fresh(&h) };
            }
        }
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            if iter == 0 {
                // Scale the initial inverse Hessian.
                let yy = y.dot(&y);
                if yy > 0.0 {
                    h *= sy / yy;
                }
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        let decrease = (fx - f_new) / fx.abs().max(f64::MIN_POSITIVE);
        x.copy_from(&x_new);
        g.copy_from(&g_new);
        fx = f_new;
        if decrease < opts.f_rel_tol {
            stalls += 1;
            if stalls >= 3 {
                return BfgsResult { x: x.as_slice().to_vec(), f: fx, iterations: iter + 1, converged: true };
            }
        } else {
            stalls = 0;
        }
    }
    let converged = fx <= opts.f_abs_tol || g.norm() <= opts.grad_tol;
    BfgsResult { x: x.as_slice().to_vec(), f: fx, iterations: opts.max_iter, converged }
}

fn h_is_fresh(h: &DMatrix<f64>) -> bool {
    // A failed line search along steepest descent means no descent is numerically possible.
    (h - DMatrix::identity(h.nrows(), h.ncols())).norm() == 0.0
}
