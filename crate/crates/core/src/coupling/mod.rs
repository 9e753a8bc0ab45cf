//! Electron–vibration coupling tensors in the harmonic-oscillator eigenbasis
//! of the mobile monomer.
//!
//! Every hopping is a power law `−μ² / r^m` of the inter-site distance. The
//! distance is expanded to first order in the trap displacement Δ, so each
//! matrix couples only neighbouring vibrational levels. The store is
//! specialised to a single mobile monomer: the vibrational multi-index of the
//! three traps collapses to the quantum number of that monomer, frozen traps
//! being pinned to their ground state.

pub mod quadrature;

use std::io::{self, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Monomer, ScatteringProblem};

pub use quadrature::{
    gauss_hermite, hermite_functions, quadrature_matrix, quadrature_matrix_element, DistanceLaw,
    QuadratureMode,
};

/// Zeroth- and first-order Taylor coefficients of `(1 − cos(θ + Δ))^{-m/2}` at Δ = 0.
pub fn power_law_taylor(theta: f64, exponent: f64) -> Result<(f64, f64)> {
    let gap = 1.0 - theta.cos();
    if gap.abs() < 1e-12 {
        return Err(Error::DegenerateGeometry(gap));
    }
    let half = 0.5 * exponent;
    let f0 = gap.powf(-half);
    let f1 = -half * gap.powf(-half - 1.0) * theta.sin();
    Ok((f0, f1))
}

/// Taylor coefficients `(F0, F1)` of the inverse-cube law between two ring sites.
pub fn taylor_coefficients(theta: f64) -> Result<(f64, f64)> {
    power_law_taylor(theta, 3.0)
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Ladder weight `Γ(v, w) = sqrt(v! w!) / ((v + w − 1)/2)!`, defined for |v − w| = 1.
///
/// Evaluated in log space; it equals `sqrt(max(v, w))`.
pub fn gamma_factor(v: usize, w: usize) -> Result<f64> {
    if v.abs_diff(w) != 1 {
        return Err(Error::SelectionRuleViolation { v, w });
    }
    let s = (v + w - 1) / 2;
    let ln = 0.5 * (ln_factorial(v) + ln_factorial(w)) - ln_factorial(s);
    Ok(ln.exp())
}

fn ladder(j: usize, jp: usize) -> f64 {
    gamma_factor(j, jp).unwrap_or(0.0)
}

/// Per-problem constants of the first-order coupling expansion.
#[derive(Clone, Debug)]
struct Expansion {
    mobile: Option<Monomer>,
    n_vib: usize,
    lambda: f64,
    /// −μ² / (√2 R)^m
    ring_prefactor: f64,
    /// (F0, F1) per ordered pair, indexed [n][n'].
    taylor: [[(f64, f64); 3]; 3],
    /// Chain–alpha hopping at equilibrium and its derivative in Δ_α.
    g0: f64,
    g1: f64,
}

impl Expansion {
    fn new(problem: &ScatteringProblem) -> Result<Self> {
        problem.validate()?;
        let geom = &problem.geometry;
        let m = problem.exponent;
        let mut taylor = [[(0.0, 0.0); 3]; 3];
        for a in Monomer::ALL {
            for b in Monomer::ALL {
                if a != b {
                    taylor[a.index()][b.index()] = power_law_taylor(geom.separation(a, b), m)?;
                }
            }
        }
        let phi = geom.angle(Monomer::Alpha, 0.0);
        let (d, r) = (geom.d, geom.radius);
        let dist_sq = d * d + r * r - 2.0 * d * r * phi.cos();
        let g0 = -problem.mu_sq * dist_sq.powf(-0.5 * m);
        let g1 = problem.mu_sq * m * d * r * phi.sin() * dist_sq.powf(-0.5 * m - 1.0);
        Ok(Self {
            mobile: problem.mobile(),
            n_vib: problem.vib_levels(),
            lambda: problem.lambda(),
            ring_prefactor: -problem.mu_sq / (2f64.sqrt() * r).powf(m),
            taylor,
            g0,
            g1,
        })
    }

    fn check(&self, j: usize, jp: usize) -> Result<()> {
        for index in [j, jp] {
            if index >= self.n_vib {
                return Err(Error::Truncation {
                    index,
                    n_vib: self.n_vib,
                });
            }
        }
        Ok(())
    }

    fn f(&self, n: Monomer, np: Monomer, j: usize, jp: usize) -> Result<f64> {
        if n == np {
            return Err(Error::Validation("F is defined only between distinct monomers".into()));
        }
        self.check(j, jp)?;
        let (f0, f1) = self.taylor[n.index()][np.index()];
        // Δ_{nn'} = Δ_n − Δ_{n'} picks up a sign when the mobile monomer is the second index.
        let sign = match self.mobile {
            Some(m) if m == n => 1.0,
            Some(m) if m == np => -1.0,
            _ => 0.0,
        };
        let diag = if j == jp { f0 } else { 0.0 };
        let ladder_term = sign * f1 * self.lambda * ladder(j, jp);
        Ok(self.ring_prefactor * (diag + ladder_term))
    }

    fn g(&self, j: usize, jp: usize) -> Result<f64> {
        self.check(j, jp)?;
        let diag = if j == jp { self.g0 } else { 0.0 };
        let slope = if self.mobile == Some(Monomer::Alpha) {
            self.g1 * self.lambda * ladder(j, jp)
        } else {
            0.0
        };
        Ok(diag + slope)
    }
}

/// Intra-CU hopping `F^{jj'}_{nn'}` between distinct monomers.
pub fn f_matrix_element(
    n: Monomer,
    np: Monomer,
    j: usize,
    jp: usize,
    problem: &ScatteringProblem,
) -> Result<f64> {
    Expansion::new(problem)?.f(n, np, j, jp)
}

/// Chain–CU hopping `G^{jj'}` between chain site 0 and alpha.
pub fn g_matrix_element(j: usize, jp: usize, problem: &ScatteringProblem) -> Result<f64> {
    Expansion::new(problem)?.g(j, jp)
}

/// Precomputed coupling matrices over the truncated vibrational basis.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingTensors {
    pub n_vib: usize,
    /// `f[n][n']` holds `F^{jj'}_{nn'}`; diagonal slots are zero matrices.
    pub f: [[DMatrix<f64>; 3]; 3],
    pub g: DMatrix<f64>,
    /// Zero-point ratio of the mobile monomer (0 when all are frozen).
    pub lambda: f64,
}

impl CouplingTensors {
    pub fn build(problem: &ScatteringProblem) -> Result<Self> {
        let exp = Expansion::new(problem)?;
        let n = exp.n_vib;
        let mut f: [[DMatrix<f64>; 3]; 3] = Default::default();
        for a in Monomer::ALL {
            for b in Monomer::ALL {
                f[a.index()][b.index()] = if a == b {
                    DMatrix::zeros(n, n)
                } else {
                    let mut mat = DMatrix::zeros(n, n);
                    for j in 0..n {
                        for jp in j.saturating_sub(1)..(j + 2).min(n) {
                            mat[(j, jp)] = exp.f(a, b, j, jp)?;
                        }
                    }
                    mat
                };
            }
        }
        let mut g = DMatrix::zeros(n, n);
        for j in 0..n {
            for jp in j.saturating_sub(1)..(j + 2).min(n) {
                g[(j, jp)] = exp.g(j, jp)?;
            }
        }
        Ok(Self {
            n_vib: n,
            f,
            g,
            lambda: exp.lambda,
        })
    }

    pub fn f(&self, n: Monomer, np: Monomer) -> &DMatrix<f64> {
        &self.f[n.index()][np.index()]
    }

    /// Same tensors with the chain coupling multiplied by `scale`.
    pub fn with_chain_coupling_scaled(mut self, scale: f64) -> Self {
        self.g *= scale;
        self
    }

    /// Plain-text dump: one labelled block per matrix, rows on lines,
    /// entries with 17 significant digits.
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# n_vib {} lambda {:.16e}", self.n_vib, self.lambda)?;
        let block = |name: String, m: &DMatrix<f64>, w: &mut W| -> io::Result<()> {
            writeln!(w, "{name} {} {}", m.nrows(), m.ncols())?;
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
                writeln!(w, "{}", row.join(" "))?;
            }
            Ok(())
        };
        for a in Monomer::ALL {
            for b in Monomer::ALL {
                if a.index() < b.index() {
                    block(format!("F {a} {b}"), self.f(a, b), &mut w)?;
                }
            }
        }
        block("G".into(), &self.g, &mut w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::PI;

    #[test]
    fn taylor_examples() {
        let (f0, f1) = taylor_coefficients(2.0 * PI / 3.0).unwrap();
        assert_relative_eq!(f0, 1.5f64.powf(-1.5), max_relative = 1e-14);
        assert_relative_eq!(f0, 0.5443310539518174, max_relative = 1e-12);
        assert_relative_eq!(f1, -1.5 * 1.5f64.powf(-2.5) * 3f64.sqrt() / 2.0, max_relative = 1e-14);

        assert_abs_diff_eq!(taylor_coefficients(PI).unwrap().1, 0.0, epsilon = 1e-16);

        let (f0, f1) = taylor_coefficients(PI / 2.0).unwrap();
        assert_relative_eq!(f0, 1.0, max_relative = 1e-15);
        assert_relative_eq!(f1, -1.5, max_relative = 1e-15);

        assert!(matches!(taylor_coefficients(0.0), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn gamma_examples() {
        assert_relative_eq!(gamma_factor(0, 1).unwrap(), 1.0);
        assert_relative_eq!(gamma_factor(1, 2).unwrap(), 2f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(gamma_factor(4, 3).unwrap(), 2.0, max_relative = 1e-14);
        assert_eq!(gamma_factor(2, 2), Err(Error::SelectionRuleViolation { v: 2, w: 2 }));
        assert_eq!(gamma_factor(0, 3), Err(Error::SelectionRuleViolation { v: 0, w: 3 }));
        // no overflow far beyond 20! in log space
        for j in 0..300 {
            assert_relative_eq!(gamma_factor(j, j + 1).unwrap(), ((j + 1) as f64).sqrt(), max_relative = 1e-10);
        }
    }

    #[test]
    fn gamma_matches_hermite_quadrature() {
        // ∫ H1 H2 H1 e^{-X²} dX normalised as in the ladder identity: Γ(1,2) = √2.
        let (x, w) = gauss_hermite(40);
        let h = |n: usize, t: f64| match n {
            1 => 2.0 * t,
            2 => 4.0 * t * t - 2.0,
            _ => unreachable!(),
        };
        let integral: f64 = x.iter().zip(&w).map(|(&t, &wt)| wt * h(1, t) * h(2, t) * h(1, t)).sum();
        assert_relative_eq!(integral, 8.0 * PI.sqrt(), max_relative = 1e-12);
        // X = H1/2; normalised Hermite functions carry 1/sqrt(2^j j! sqrt(π)).
        let x_element = 0.5 * integral / (2.0 * 1.0 * 4.0 * 2.0 * PI).sqrt();
        assert_relative_eq!(2f64.sqrt() * x_element, gamma_factor(1, 2).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn static_limit_is_pure_dipole() {
        let p = ScatteringProblem::static_preset();
        let r = p.geometry.radius;
        let f = f_matrix_element(Monomer::Alpha, Monomer::Beta, 0, 0, &p).unwrap();
        assert_relative_eq!(f, -p.mu_sq / (3f64.sqrt() * r).powi(3), max_relative = 1e-14);
        let g = g_matrix_element(0, 0, &p).unwrap();
        assert_relative_eq!(g, -p.mu_sq / (p.geometry.d - r).powi(3), max_relative = 1e-14);
        let t = CouplingTensors::build(&p).unwrap();
        assert_eq!(t.g.shape(), (1, 1));
        assert_eq!(t.lambda, 0.0);
    }

    #[test]
    fn selection_rules_and_truncation() {
        let p = ScatteringProblem::mobile_alpha(0.1);
        assert_eq!(f_matrix_element(Monomer::Alpha, Monomer::Beta, 0, 2, &p).unwrap(), 0.0);
        assert_eq!(
            f_matrix_element(Monomer::Alpha, Monomer::Beta, 0, 50, &p),
            Err(Error::Truncation { index: 50, n_vib: 50 })
        );
        // pair without the mobile monomer is diagonal in j
        assert_eq!(f_matrix_element(Monomer::Beta, Monomer::Eta, 3, 4, &p).unwrap(), 0.0);
        // symmetric placement: G diagonal and j independent
        let g5 = g_matrix_element(5, 5, &p).unwrap();
        assert_relative_eq!(g5, -p.mu_sq / (p.geometry.d - p.geometry.radius).powi(3), max_relative = 1e-14);
        assert_eq!(g_matrix_element(0, 1, &p).unwrap(), 0.0);
    }

    #[test]
    fn first_ladder_element() {
        let p = ScatteringProblem::mobile_alpha(0.05);
        let r = p.geometry.radius;
        let (_, f1) = taylor_coefficients(p.geometry.separation(Monomer::Alpha, Monomer::Beta)).unwrap();
        let expected = -p.mu_sq / (2f64.sqrt() * r).powi(3) * f1 * p.lambda();
        let got = f_matrix_element(Monomer::Alpha, Monomer::Beta, 0, 1, &p).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-14);
    }

    #[test]
    fn hermiticity_and_scaling() {
        let mut p = ScatteringProblem::mobile_alpha(0.2);
        p.geometry.theta0 = PI / 6.0;
        let t = CouplingTensors::build(&p).unwrap();
        for a in Monomer::ALL {
            for b in Monomer::ALL {
                assert_eq!(t.f(a, b), &t.f(b, a).transpose());
            }
        }
        assert_eq!(t.g, t.g.transpose());
        let fab = t.f(Monomer::Alpha, Monomer::Beta);
        for j in 0..(t.n_vib - 1) {
            assert_relative_eq!(fab[(j, j + 1)] / fab[(0, 1)], ((j + 1) as f64).sqrt(), max_relative = 1e-13);
            for jp in 0..t.n_vib {
                if j.abs_diff(jp) > 1 {
                    assert_eq!(fab[(j, jp)], 0.0);
                }
            }
        }
        assert!(t.g[(0, 1)].abs() > 0.0);
    }

    #[test]
    fn static_limit_of_large_omega() {
        let p = ScatteringProblem::mobile_alpha(1e10);
        let t = CouplingTensors::build(&p).unwrap();
        let s = ScatteringProblem::static_preset();
        let f_static = f_matrix_element(Monomer::Alpha, Monomer::Beta, 0, 0, &s).unwrap();
        let fab = t.f(Monomer::Alpha, Monomer::Beta);
        assert!(fab[(0, 1)].abs() < 1e-5 * f_static.abs());
        assert_relative_eq!(fab[(7, 7)], f_static, max_relative = 1e-12);
    }

    #[test]
    fn tensor_dump_format() {
        let mut p = ScatteringProblem::mobile_alpha(0.5);
        p.n_vib = 2;
        let t = CouplingTensors::build(&p).unwrap();
        let mut buf = Vec::new();
        t.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# n_vib 2"));
        assert!(text.contains("F alpha beta 2 2"));
        assert!(text.contains("\nG 2 2\n"));
        let first = text.lines().nth(2).unwrap();
        let parsed: f64 = first.split_whitespace().next().unwrap().parse().unwrap();
        assert_eq!(parsed, t.f(Monomer::Alpha, Monomer::Beta)[(0, 0)]);
    }
}
