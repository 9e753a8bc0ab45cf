//! Static transfer-matrix reference.
//!
//! With every monomer frozen the control unit acts on the chain as a single
//! energy-dependent defect `V_eff = D2 G² / D3` at site 0, where D3 and D2 are
//! the characteristic polynomials of the CU Hamiltonian with and without the
//! entrance site.

use nalgebra::{Matrix2, Matrix3, Vector2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Monomer, ScatteringProblem};

/// Relative threshold below which a characteristic polynomial counts as zero.
const POLE_TOL: f64 = 1e-13;

/// Dipole Hamiltonian of a frozen control unit and its chain coupling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StaticCU {
    /// CU Hamiltonian in the basis (alpha, beta, eta).
    pub h3: Matrix3<f64>,
    /// Block of `h3` on (beta, eta).
    pub h2: Matrix2<f64>,
    /// Hopping between chain site 0 and alpha.
    pub g: f64,
}

impl StaticCU {
    pub fn new(h3: Matrix3<f64>, g: f64) -> Self {
        let h2 = h3.fixed_view::<2, 2>(1, 1).into_owned();
        Self { h3, h2, g }
    }

    /// Control unit of `problem` at its equilibrium geometry.
    pub fn from_problem(problem: &ScatteringProblem) -> Result<Self> {
        Self::displaced(problem, [0.0; 3])
    }

    /// Control unit with monomers frozen at the given angular displacements.
    ///
    /// All hoppings are evaluated from the full `−μ²/r^m` law at the displaced
    /// positions.
    pub fn displaced(problem: &ScatteringProblem, displacements: [f64; 3]) -> Result<Self> {
        problem.geometry.validate()?;
        let pos = problem.geometry.site_positions(displacements);
        let law = |r: f64| -problem.mu_sq / r.powf(problem.exponent);
        let mut h3 = Matrix3::zeros();
        for a in Monomer::ALL {
            for b in Monomer::ALL {
                if a != b {
                    let r = pos.monomer_distance(a, b);
                    if r < 1e-12 * problem.geometry.radius {
                        return Err(Error::DegenerateGeometry(r));
                    }
                    h3[(a.index(), b.index())] = law(r);
                }
            }
        }
        let g = law(pos.chain_distance(Monomer::Alpha));
        Ok(Self::new(h3, g))
    }

    fn scale(&self, energy: f64) -> f64 {
        energy.abs().max(self.h3.amax()).max(f64::MIN_POSITIVE)
    }

    /// `det(E − H2)` and its derivative in E.
    fn d2(&self, e: f64) -> (f64, f64) {
        let m = Matrix2::identity() * e - self.h2;
        (m.determinant(), 2.0 * e - self.h2.trace())
    }

    /// `det(E − H3)` and its derivative in E.
    fn d3(&self, e: f64) -> (f64, f64) {
        let m = Matrix3::identity() * e - self.h3;
        let h = &self.h3;
        let minors = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)] + h[(0, 0)] * h[(2, 2)]
            - h[(0, 2)] * h[(2, 0)]
            + h[(1, 1)] * h[(2, 2)]
            - h[(1, 2)] * h[(2, 1)];
        (m.determinant(), 3.0 * e * e - 2.0 * e * h.trace() + minors)
    }
}

/// Effective defect potential `V_eff(E) = D2 G² / D3`.
///
/// When D2 and D3 vanish together the ratio is replaced by the ratio of their
/// derivatives. A remaining zero of D3 is a pole.
pub fn effective_potential(energy: f64, cu: &StaticCU) -> Result<f64> {
    let s = cu.scale(energy);
    let (d2, d2p) = cu.d2(energy);
    let (d3, d3p) = cu.d3(energy);
    let g2 = cu.g * cu.g;
    if d3.abs() >= POLE_TOL * s * s * s {
        return Ok(d2 * g2 / d3);
    }
    if d2.abs() < POLE_TOL * s * s && d3p.abs() >= POLE_TOL * s * s {
        return Ok(d2p * g2 / d3p);
    }
    if g2 == 0.0 {
        return Ok(0.0);
    }
    Err(Error::PoleAtEigenvalue { energy })
}

/// Closed-form single-defect transmission `(4J² − E²) / (4J² − E² + V_eff²)`.
///
/// Returns 0 at a pole of `V_eff`.
pub fn transmission_static(energy: f64, cu: &StaticCU, hopping: f64) -> Result<f64> {
    let edge = 2.0 * hopping;
    if !(energy.abs() < edge) {
        return Err(Error::OutOfBand {
            energy,
            band_edge: edge,
        });
    }
    let v = match effective_potential(energy, cu) {
        Ok(v) => v,
        Err(Error::PoleAtEigenvalue { .. }) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    let kin = edge * edge - energy * energy;
    Ok(kin / (kin + v * v))
}

/// Product of single-site transfer matrices over a window of sites.
///
/// The stored matrix is rescaled to unit max-norm after every factor; the
/// true product is `exp(log_scale) * matrix`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransferProduct {
    pub matrix: Matrix2<f64>,
    pub log_scale: f64,
    /// Index of the first site in the window.
    pub first_site: i64,
    /// Number of sites in the window.
    pub len: usize,
}

/// `P = T_{b} ⋯ T_{a}` with `T_n = [[(E − V_n)/J, −1], [1, 0]]`, mapping
/// `(ψ_a, ψ_{a−1})` to `(ψ_{b+1}, ψ_b)`.
pub fn transfer_matrix_product(energy: f64, hopping: f64, first_site: i64, potentials: &[f64]) -> TransferProduct {
    let mut matrix = Matrix2::identity();
    let mut log_scale = 0.0;
    for &v in potentials {
        let t = Matrix2::new((energy - v) / hopping, -1.0, 1.0, 0.0);
        matrix = t * matrix;
        let norm = matrix.amax();
        if !(1e-100..=1e100).contains(&norm) {
            matrix /= norm;
            log_scale += norm.ln();
        }
    }
    TransferProduct {
        matrix,
        log_scale,
        first_site,
        len: potentials.len(),
    }
}

impl TransferProduct {
    /// `det P`, which is 1 for any product of site matrices.
    pub fn determinant(&self) -> f64 {
        self.matrix.determinant() * (2.0 * self.log_scale).exp()
    }

    /// Reflection and transmission amplitudes for a unit wave `e^{ikn}` incident
    /// from the left, with `E = 2J cos k`.
    pub fn amplitudes(&self, energy: f64, hopping: f64) -> Result<(Complex64, Complex64)> {
        let edge = 2.0 * hopping;
        if !(energy.abs() < edge) {
            return Err(Error::OutOfBand {
                energy,
                band_edge: edge,
            });
        }
        let k = (energy / edge).acos();
        let plane = |n: i64, sign: f64| Complex64::from_polar(1.0, sign * k * n as f64);
        let a = self.first_site;
        let b = a + self.len as i64 - 1;
        let m = self.matrix.map(|x| Complex64::new(x, 0.0));
        let scale = (-self.log_scale).exp();
        // M (inc + r·refl) = scale · t · out, solved for (r, t).
        let inc = m * Vector2::new(plane(a, 1.0), plane(a - 1, 1.0));
        let refl = m * Vector2::new(plane(a, -1.0), plane(a - 1, -1.0));
        let out = Vector2::new(plane(b + 1, 1.0), plane(b, 1.0)).map(|z| z * scale);
        let lhs = Matrix2::new(refl[0], -out[0], refl[1], -out[1]);
        let sol = lhs
            .lu()
            .solve(&(-inc))
            .ok_or(Error::SingularAmplitudeMatrix { energy })?;
        Ok((sol[0], sol[1]))
    }

    pub fn transmission(&self, energy: f64, hopping: f64) -> Result<f64> {
        Ok(self.amplitudes(energy, hopping)?.1.norm_sqr())
    }
}
