//! Independent reference solvers used as oracles by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// `e^{(1 + log 2π)/2}`: the exp-Lasso to square-root-Lasso factor.
pub fn gaussian_factor() -> f64 {
    (0.5 * (1.0 + (2.0 * std::f64::consts::PI).ln())).exp()
}

/// Coordinate descent for `‖y − Xb‖₂/√n + λ‖b_pen‖₁`.
pub fn sqrt_lasso_cd(x: &DMatrix<f64>, y: &DVector<f64>, mask: &[bool], lambda: f64) -> DVector<f64> {
    let (n, p) = (x.nrows(), x.ncols());
    let nf = n as f64;
    let mut b = DVector::zeros(p);
    let mut r = y.clone();
    let col_sq: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared()).collect();
    for _sweep in 0..200_000 {
        let mut max_change = 0.0f64;
        for j in 0..p {
            let xj = x.column(j);
            // partial residual without coordinate j
            r.axpy(b[j], &xj, 1.0);
            let a = r.norm_squared();
            let bb = xj.dot(&r);
            let c = col_sq[j];
            let new = if !mask[j] {
                bb / c
            } else if bb.abs() <= lambda * (nf * a).sqrt() {
                0.0
            } else {
                let d = (a * c - bb * bb).max(0.0);
                (bb - bb.signum() * (nf * lambda * lambda * d / (c - nf * lambda * lambda)).sqrt()) / c
            };
            max_change = max_change.max((new - b[j]).abs());
            b[j] = new;
            r.axpy(-new, &xj, 1.0);
        }
        if max_change < 1e-14 {
            break;
        }
    }
    b
}

/// Coordinate descent for `(1/2n)‖y − Xb‖² + λ‖b_pen‖₁`.
pub fn lasso_cd(x: &DMatrix<f64>, y: &DVector<f64>, mask: &[bool], lambda: f64) -> DVector<f64> {
    let (n, p) = (x.nrows(), x.ncols());
    let nf = n as f64;
    let mut b = DVector::zeros(p);
    let mut r = y.clone();
    let col_sq: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared() / nf).collect();
    for _sweep in 0..200_000 {
        let mut max_change = 0.0f64;
        for j in 0..p {
            let xj = x.column(j);
            r.axpy(b[j], &xj, 1.0);
            let z = xj.dot(&r) / nf;
            let new = if !mask[j] {
                z / col_sq[j]
            } else if z.abs() <= lambda {
                0.0
            } else {
                (z - lambda * z.signum()) / col_sq[j]
            };
            max_change = max_change.max((new - b[j]).abs());
            b[j] = new;
            r.axpy(-new, &xj, 1.0);
        }
        if max_change < 1e-15 {
            break;
        }
    }
    b
}
