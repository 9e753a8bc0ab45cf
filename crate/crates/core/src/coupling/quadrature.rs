//! Gauss–Hermite evaluation of vibrational matrix elements `⟨Φ_j|V(Δ)|Φ_j'⟩`.
//!
//! This is the numerical cross-check of the closed-form ladder expressions:
//! the potential is evaluated directly from the distance law, and its slope
//! for the linearized mode comes from a complex-step derivative rather than
//! the closed-form Taylor coefficients.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Monomer, ScatteringProblem};

/// Nodes and weights of the n-point Gauss–Hermite rule for weight `e^{-x²}`.
///
/// Nodes start from the eigenvalues of the Jacobi matrix and are polished by
/// Newton steps on the orthonormal recurrence; weights come from the
/// derivative formula. Returned in ascending order.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Hermite rule needs at least one node");
    let jacobi = DMatrix::from_fn(n, n, |i, k| {
        if i.abs_diff(k) == 1 {
            (0.5 * i.max(k) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut x: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    x.sort_by(f64::total_cmp);
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut w = vec![0.0; n];
    for (z, wi) in x.iter_mut().zip(w.iter_mut()) {
        let mut pp = 1.0;
        for _ in 0..8 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = *z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let step = p1 / pp;
            *z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        *wi = 2.0 / (pp * pp);
    }
    (x, w)
}

/// Orthonormal Hermite functions without their Gaussian factor:
/// `h_j(x) = H_j(x) / sqrt(2^j j! sqrt(π))`, so that `∫ h_j h_k e^{-x²} dx = δ_jk`.
pub fn hermite_functions(x: f64, count: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(count);
    if count == 0 {
        return h;
    }
    h.push(PI.powf(-0.25));
    if count > 1 {
        h.push(2f64.sqrt() * x * h[0]);
    }
    for j in 1..count.saturating_sub(1) {
        let jf = j as f64;
        let next = (2.0 / (jf + 1.0)).sqrt() * x * h[j] - (jf / (jf + 1.0)).sqrt() * h[j - 1];
        h.push(next);
    }
    h
}

/// A hopping `−μ²/r^m` as a function of the mobile monomer's displacement Δ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DistanceLaw {
    /// Two ring sites at equilibrium separation `separation`; `sign` is +1 when
    /// the mobile monomer is the first of the pair and −1 when it is the second.
    RingPair {
        mu_sq: f64,
        exponent: f64,
        radius: f64,
        separation: f64,
        sign: f64,
    },
    /// Chain site 0 and a ring site at equilibrium angle `angle`.
    Chain {
        mu_sq: f64,
        exponent: f64,
        d: f64,
        radius: f64,
        angle: f64,
    },
}

impl DistanceLaw {
    pub fn ring_pair(problem: &ScatteringProblem, n: Monomer, np: Monomer) -> Self {
        let sign = match problem.mobile() {
            Some(m) if m == n => 1.0,
            Some(m) if m == np => -1.0,
            _ => 0.0,
        };
        DistanceLaw::RingPair {
            mu_sq: problem.mu_sq,
            exponent: problem.exponent,
            radius: problem.geometry.radius,
            separation: problem.geometry.separation(n, np),
            sign,
        }
    }

    /// Chain–alpha hopping; Δ moves alpha only if alpha is the mobile monomer.
    pub fn chain_alpha(problem: &ScatteringProblem) -> Self {
        DistanceLaw::Chain {
            mu_sq: problem.mu_sq,
            exponent: problem.exponent,
            d: problem.geometry.d,
            radius: problem.geometry.radius,
            angle: problem.geometry.angle(Monomer::Alpha, 0.0),
        }
    }

    /// Hopping at (complex) displacement `delta`.
    pub fn eval_complex(&self, delta: Complex64) -> Complex64 {
        match *self {
            DistanceLaw::RingPair {
                mu_sq,
                exponent,
                radius,
                separation,
                sign,
            } => {
                let gap = (Complex64::new(separation, 0.0) + delta * sign).cos();
                let r_sq = (Complex64::new(1.0, 0.0) - gap) * (2.0 * radius * radius);
                -mu_sq * r_sq.powf(-0.5 * exponent)
            }
            DistanceLaw::Chain {
                mu_sq,
                exponent,
                d,
                radius,
                angle,
            } => {
                let c = (Complex64::new(angle, 0.0) + delta).cos();
                let r_sq = Complex64::new(d * d + radius * radius, 0.0) - c * (2.0 * d * radius);
                -mu_sq * r_sq.powf(-0.5 * exponent)
            }
        }
    }

    pub fn eval(&self, delta: f64) -> f64 {
        self.eval_complex(Complex64::new(delta, 0.0)).re
    }

    /// Slope at Δ = 0 by complex-step differentiation.
    pub fn slope(&self) -> f64 {
        let h = 1e-20;
        self.eval_complex(Complex64::new(0.0, h)).im / h
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureMode {
    /// First-order Taylor potential `V(0) + V'(0) Δ`.
    Linearized,
    /// Full distance law.
    Exact,
}

fn integrate(law: &DistanceLaw, size: usize, lambda: f64, mode: QuadratureMode, nodes: usize) -> Result<DMatrix<f64>> {
    let (x, w) = gauss_hermite(nodes);
    let v0 = law.eval(0.0);
    let v1 = law.slope();
    let mut out = DMatrix::zeros(size, size);
    for (&xi, &wi) in x.iter().zip(&w) {
        // Δ = sqrt(2) λ X for the dimensionless oscillator coordinate X.
        let delta = 2f64.sqrt() * lambda * xi;
        let v = match mode {
            QuadratureMode::Linearized => v0 + v1 * delta,
            QuadratureMode::Exact => law.eval(delta),
        };
        if !v.is_finite() {
            return Err(Error::Convergence {
                nodes,
                doubled: nodes,
                change: f64::INFINITY,
            });
        }
        let h = hermite_functions(xi, size);
        for j in 0..size {
            let hj = wi * v * h[j];
            for jp in 0..size {
                out[(j, jp)] += hj * h[jp];
            }
        }
    }
    Ok(out)
}

/// Matrix of `⟨Φ_j|V|Φ_j'⟩` for j, j' < `size` by Gauss–Hermite quadrature.
///
/// Uses `max(4 (size − 1) + 16, 64)` nodes and checks the result against a
/// rule with twice as many; the doubled-rule values are returned.
pub fn quadrature_matrix(law: &DistanceLaw, size: usize, lambda: f64, mode: QuadratureMode) -> Result<DMatrix<f64>> {
    let nodes = (4 * size.saturating_sub(1) + 16).max(64);
    let coarse = integrate(law, size, lambda, mode, nodes)?;
    let fine = integrate(law, size, lambda, mode, 2 * nodes)?;
    let scale = law.eval(0.0).abs();
    let mut worst: f64 = 0.0;
    for (a, b) in coarse.iter().zip(fine.iter()) {
        worst = worst.max((a - b).abs() / b.abs().max(scale));
    }
    if worst > 1e-9 || !worst.is_finite() {
        return Err(Error::Convergence {
            nodes,
            doubled: 2 * nodes,
            change: worst,
        });
    }
    Ok(fine)
}

/// Single matrix element `⟨Φ_j|V|Φ_j'⟩`.
pub fn quadrature_matrix_element(
    law: &DistanceLaw,
    j: usize,
    jp: usize,
    lambda: f64,
    mode: QuadratureMode,
) -> Result<f64> {
    let size = j.max(jp) + 1;
    Ok(quadrature_matrix(law, size, lambda, mode)?[(j, jp)])
}
