//! Physical system: the tight-binding chain, the three-site control unit on a
//! ring beside chain site 0, and the harmonic angular traps of its monomers.
//!
//! Natural units throughout: ħ = 1, lattice spacing = 1, energies in units of
//! the chain hopping J (J = 1 in every preset).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant in natural units.
pub const HBAR: f64 = 1.0;

/// Zero-point ratio above which the first-order coupling expansion is suspect.
pub const LAMBDA_WARN: f64 = 0.2;

/// A monomer of the control unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monomer {
    /// Entrance site, coupled to chain site 0.
    Alpha,
    Beta,
    Eta,
}

impl Monomer {
    pub const ALL: [Monomer; 3] = [Monomer::Alpha, Monomer::Beta, Monomer::Eta];

    pub fn index(self) -> usize {
        match self {
            Monomer::Alpha => 0,
            Monomer::Beta => 1,
            Monomer::Eta => 2,
        }
    }

    pub fn from_index(i: usize) -> Monomer {
        Monomer::ALL[i]
    }
}

impl std::fmt::Display for Monomer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Monomer::Alpha => "alpha",
            Monomer::Beta => "beta",
            Monomer::Eta => "eta",
        };
        f.write_str(name)
    }
}

/// Exciton band energy `2J cos k`.
pub fn dispersion_energy(k: f64, hopping: f64) -> f64 {
    2.0 * hopping * k.cos()
}

/// Placement of the control unit relative to the chain.
///
/// The chain runs along the x axis with site 0 at the origin; the ring
/// centre sits at height `d`. Angles are measured from the pole of the ring
/// closest to the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlUnitGeometry {
    /// Distance from the ring centre to the chain.
    pub d: f64,
    /// Ring radius.
    pub radius: f64,
    /// Rigid rotation of the whole control unit.
    #[serde(default)]
    pub theta0: f64,
    /// Equilibrium angles of alpha, beta, eta.
    #[serde(default = "equilateral_angles")]
    pub equilibrium_angles: [f64; 3],
}

pub fn equilateral_angles() -> [f64; 3] {
    [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0]
}

/// Cartesian positions of chain site 0 and the three monomers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SitePositions {
    pub chain_site: [f64; 2],
    pub monomers: [[f64; 2]; 3],
}

impl SitePositions {
    pub fn monomer_distance(&self, a: Monomer, b: Monomer) -> f64 {
        distance(self.monomers[a.index()], self.monomers[b.index()])
    }

    pub fn chain_distance(&self, m: Monomer) -> f64 {
        distance(self.monomers[m.index()], self.chain_site)
    }
}

fn distance(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

impl ControlUnitGeometry {
    pub fn equilateral(d: f64, radius: f64) -> Self {
        Self {
            d,
            radius,
            theta0: 0.0,
            equilibrium_angles: equilateral_angles(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Validation(format!(
                "ring radius must be positive, got {}",
                self.radius
            )));
        }
        if !(self.d > self.radius && self.d.is_finite()) {
            return Err(Error::Validation(format!(
                "CU intersects chain: need d > R, got d = {}, R = {}",
                self.d, self.radius
            )));
        }
        for a in 0..3 {
            for b in (a + 1)..3 {
                let sep = self.equilibrium_angles[a] - self.equilibrium_angles[b];
                let gap = 1.0 - sep.cos();
                if gap.abs() < 1e-12 {
                    return Err(Error::DegenerateGeometry(gap));
                }
            }
        }
        Ok(())
    }

    /// Absolute angle of a monomer for a given trap displacement.
    pub fn angle(&self, m: Monomer, displacement: f64) -> f64 {
        self.equilibrium_angles[m.index()] + self.theta0 + displacement
    }

    /// Equilibrium angular separation `θ_n - θ_n'`.
    pub fn separation(&self, a: Monomer, b: Monomer) -> f64 {
        self.equilibrium_angles[a.index()] - self.equilibrium_angles[b.index()]
    }

    pub fn site_positions(&self, displacements: [f64; 3]) -> SitePositions {
        let mut monomers = [[0.0; 2]; 3];
        for m in Monomer::ALL {
            let phi = self.angle(m, displacements[m.index()]);
            monomers[m.index()] = [self.radius * phi.sin(), self.d - self.radius * phi.cos()];
        }
        SitePositions {
            chain_site: [0.0, 0.0],
            monomers,
        }
    }
}

/// Harmonic angular trap of one monomer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorSpec {
    /// Trap frequency in units of J/ħ.
    pub omega: f64,
    /// Effective monomer mass.
    pub mass: f64,
    #[serde(default)]
    pub mobile: bool,
}

impl OscillatorSpec {
    pub fn frozen() -> Self {
        Self {
            omega: 1e3,
            mass: 1.0,
            mobile: false,
        }
    }

    pub fn mobile(omega: f64, mass: f64) -> Self {
        Self {
            omega,
            mass,
            mobile: true,
        }
    }

    /// Dimensionless zero-point ratio `(1/R) sqrt(ħ / (2 M ω))`.
    pub fn zero_point_ratio(&self, radius: f64) -> f64 {
        (HBAR / (2.0 * self.mass * self.omega)).sqrt() / radius
    }
}

/// Full immutable description of one scattering setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatteringProblem {
    /// Nearest-neighbour chain hopping J.
    pub hopping: f64,
    /// Chain length used by the time-dependent propagation.
    pub n_sites: usize,
    pub geometry: ControlUnitGeometry,
    /// Traps of alpha, beta, eta.
    pub oscillators: [OscillatorSpec; 3],
    /// Transition dipole strength μ².
    pub mu_sq: f64,
    /// Exponent m of the `r^-m` interaction law.
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    /// Incoming vibrational quantum number.
    #[serde(default)]
    pub j_in: usize,
    /// Vibrational basis size of the mobile monomer.
    pub n_vib: usize,
}

fn default_exponent() -> f64 {
    3.0
}

/// Chain–alpha coupling magnitude of the default preset.
pub const PRESET_CHAIN_COUPLING: f64 = 1.5;

/// Mobile-monomer mass of the default preset; λ = 0.2 at ħω = 0.01 J.
pub const PRESET_MASS: f64 = 1250.0;

impl ScatteringProblem {
    /// Default equilateral preset with F = −J and |G| = [`PRESET_CHAIN_COUPLING`].
    ///
    /// `mobile` selects the vibrating monomer (if any) and its ħω.
    pub fn preset(mobile: Option<(Monomer, f64)>) -> Self {
        let radius = 1.0;
        let hopping = 1.0;
        let mu_sq = hopping * (3f64.sqrt() * radius).powi(3);
        let d = radius + (mu_sq / PRESET_CHAIN_COUPLING).cbrt();
        let mut oscillators = [OscillatorSpec::frozen(); 3];
        let mut n_vib = 1;
        if let Some((m, hbar_omega)) = mobile {
            oscillators[m.index()] = OscillatorSpec::mobile(hbar_omega / HBAR, PRESET_MASS);
            n_vib = 50;
        }
        Self {
            hopping,
            n_sites: 1000,
            geometry: ControlUnitGeometry::equilateral(d, radius),
            oscillators,
            mu_sq,
            exponent: 3.0,
            j_in: 0,
            n_vib,
        }
    }

    /// Static preset: every monomer frozen, a single vibrational level.
    pub fn static_preset() -> Self {
        Self::preset(None)
    }

    /// Preset with a vibrating alpha of the given ħω.
    pub fn mobile_alpha(hbar_omega: f64) -> Self {
        Self::preset(Some((Monomer::Alpha, hbar_omega)))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hopping > 0.0 && self.hopping.is_finite()) {
            return Err(Error::Validation(format!("J must be positive, got {}", self.hopping)));
        }
        if self.n_vib == 0 {
            return Err(Error::Validation("n_vib must be at least 1".into()));
        }
        if !(self.mu_sq >= 0.0 && self.mu_sq.is_finite()) {
            return Err(Error::Validation(format!("mu_sq must be non-negative, got {}", self.mu_sq)));
        }
        if !(self.exponent > 0.0 && self.exponent.is_finite()) {
            return Err(Error::Validation(format!(
                "interaction exponent must be positive, got {}",
                self.exponent
            )));
        }
        self.geometry.validate()?;
        for (i, osc) in self.oscillators.iter().enumerate() {
            if !(osc.omega > 0.0 && osc.omega.is_finite() && osc.mass > 0.0 && osc.mass.is_finite()) {
                return Err(Error::Validation(format!(
                    "oscillator {} needs omega > 0 and mass > 0",
                    Monomer::from_index(i)
                )));
            }
        }
        let mobile = self.oscillators.iter().filter(|o| o.mobile).count();
        if mobile > 1 {
            return Err(Error::Unsupported(
                "more than one mobile monomer; the product vibrational basis is not implemented".into(),
            ));
        }
        if self.j_in >= self.vib_levels() {
            return Err(Error::Validation(format!(
                "j_in = {} must be below the {} vibrational levels",
                self.j_in,
                self.vib_levels()
            )));
        }
        if let Some(m) = self.mobile() {
            let lambda = self.lambda();
            if lambda > LAMBDA_WARN {
                log::warn!(
                    "zero-point ratio {lambda:.3} of {m} exceeds {LAMBDA_WARN}; first-order coupling may be inaccurate"
                );
            }
        }
        Ok(())
    }

    /// The vibrating monomer, if any.
    pub fn mobile(&self) -> Option<Monomer> {
        self.oscillators
            .iter()
            .position(|o| o.mobile)
            .map(Monomer::from_index)
    }

    /// Number of vibrational levels actually carried (1 when all monomers are frozen).
    pub fn vib_levels(&self) -> usize {
        if self.mobile().is_some() {
            self.n_vib
        } else {
            1
        }
    }

    /// Vibrational quantum ħω of the mobile monomer (0 if none is mobile).
    pub fn hbar_omega(&self) -> f64 {
        self.mobile()
            .map(|m| HBAR * self.oscillators[m.index()].omega)
            .unwrap_or(0.0)
    }

    /// Vibrational level energy `ħω (j + 1/2)`; frozen monomers contribute no offset.
    pub fn vib_energy(&self, j: usize) -> f64 {
        self.hbar_omega() * (j as f64 + 0.5)
    }

    /// Zero-point ratio of the mobile monomer (0 if none is mobile).
    pub fn lambda(&self) -> f64 {
        self.mobile()
            .map(|m| self.oscillators[m.index()].zero_point_ratio(self.geometry.radius))
            .unwrap_or(0.0)
    }

    /// Total energy for an excitation of band energy `e_in` entering in channel `j_in`.
    pub fn total_energy(&self, e_in: f64) -> f64 {
        e_in + self.vib_energy(self.j_in)
    }

    /// Incoming band energy belonging to total energy `energy`.
    pub fn incoming_energy(&self, energy: f64) -> f64 {
        energy - self.vib_energy(self.j_in)
    }

    /// Stable content hash (SHA-256 of the canonical JSON form).
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("problem serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Kinematics of one vibrational channel at fixed total energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Channel {
    /// Vibrational energy ℰ_j.
    pub eps: f64,
    /// Wavenumber; real in (0, π) when open, Im k > 0 when closed.
    pub k: Complex64,
    pub open: bool,
}

impl Channel {
    pub fn sin_k(&self) -> Complex64 {
        self.k.sin()
    }

    /// `e^{ik}`; modulus below one for closed channels.
    pub fn phase(&self) -> Complex64 {
        (Complex64::i() * self.k).exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    pub energy: f64,
    pub channels: Vec<Channel>,
}

impl ChannelSet {
    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn open_count(&self) -> usize {
        self.channels.iter().filter(|c| c.open).count()
    }
}

/// Solves `2J cos k_j = E − ℰ_j` for every channel.
///
/// Closed channels get the decaying continuation `k = i acosh(x)` above the
/// band and `k = π + i acosh(−x)` below it, where `x = (E − ℰ_j) / 2J`.
pub fn channel_set(energy: f64, problem: &ScatteringProblem) -> Result<ChannelSet> {
    let two_j = 2.0 * problem.hopping;
    let channels: Vec<Channel> = (0..problem.vib_levels())
        .map(|j| {
            let eps = problem.vib_energy(j);
            let x = (energy - eps) / two_j;
            if x.abs() < 1.0 {
                Channel {
                    eps,
                    k: Complex64::new(x.acos(), 0.0),
                    open: true,
                }
            } else if x >= 1.0 {
                Channel {
                    eps,
                    k: Complex64::new(0.0, x.acosh()),
                    open: false,
                }
            } else {
                Channel {
                    eps,
                    k: Complex64::new(PI, (-x).acosh()),
                    open: false,
                }
            }
        })
        .collect();
    if !channels.iter().any(|c| c.open) {
        return Err(Error::NoOpenChannel { energy });
    }
    Ok(ChannelSet { energy, channels })
}
