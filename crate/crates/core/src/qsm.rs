//! Stationary multichannel scattering by auxiliary eigenproblems.
//!
//! For every outgoing channel j0 an auxiliary solution is fixed on the right
//! half-chain to the pure wave `δ_{j j0} e^{i k_j0 n}`. Because then
//! `ψ_{0j} = δ_{j j0}`, the ring amplitudes follow from one real linear
//! system shared by all j0, and `ψ_{−1}` from the lattice equation at site 0.
//! Decomposing the left half-chain into `e^{±ikn}` gives the columns of the
//! amplitude matrix A; the physical solution is the combination `C = A⁻¹ e_in`
//! with a unit incoming wave in channel `j_in` only.
//!
//! Total energies E are used throughout this module.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;

use crate::coupling::CouplingTensors;
use crate::error::{Error, Result};
use crate::model::{channel_set, ChannelSet, Monomer, ScatteringProblem};

/// Relative pivot size below which the ring system counts as singular.
pub const PIVOT_TOL: f64 = 1e-13;
/// Energy shift (in units of J) applied when an energy sits on a pole.
pub const NUDGE: f64 = 1e-9;
/// `|sin k|` below which a channel sits on its band edge.
pub const EDGE_TOL: f64 = 1e-12;
/// Condition estimate of A above which a solution is flagged.
pub const COND_WARN: f64 = 1e12;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// LU factorisation of the ring block `(E − ℰ_j) − F` over (monomer, level).
pub struct RingSystem {
    energy: f64,
    n_vib: usize,
    lu: LU<f64, Dyn, Dyn>,
    pub pivot_ratio: f64,
}

impl RingSystem {
    pub fn new(energy: f64, tensors: &CouplingTensors, channels: &ChannelSet) -> Result<Self> {
        let n = tensors.n_vib;
        let mut m = DMatrix::<f64>::zeros(3 * n, 3 * n);
        for a in Monomer::ALL {
            for b in Monomer::ALL {
                let (ra, rb) = (a.index() * n, b.index() * n);
                if a == b {
                    for j in 0..n {
                        m[(ra + j, ra + j)] = energy - channels.channels[j].eps;
                    }
                } else {
                    let f = tensors.f(a, b);
                    for j in 0..n {
                        for jp in 0..n {
                            m[(ra + j, rb + jp)] = -f[(j, jp)];
                        }
                    }
                }
            }
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let lu = m.lu();
        let diag = lu.u().diagonal();
        let smallest = diag.iter().fold(f64::INFINITY, |acc, d| acc.min(d.abs()));
        let pivot_ratio = smallest / scale;
        if !(pivot_ratio >= PIVOT_TOL) {
            return Err(Error::SingularRing { energy, pivot_ratio });
        }
        Ok(Self {
            energy,
            n_vib: n,
            lu,
            pivot_ratio,
        })
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Ring amplitudes `ψ^{(j0)}_{nj}` as a 3 × n_vib matrix.
    pub fn solve(&self, j0: usize, tensors: &CouplingTensors) -> DMatrix<f64> {
        let n = self.n_vib;
        let mut rhs = DVector::<f64>::zeros(3 * n);
        for j in 0..n {
            rhs[j] = tensors.g[(j, j0)];
        }
        let x = self.lu.solve(&rhs).expect("factorisation checked regular");
        DMatrix::from_fn(3, n, |m, j| x[m * n + j])
    }

    /// Ring amplitudes for every j0 at once.
    pub fn solve_all(&self, tensors: &CouplingTensors) -> Vec<DMatrix<f64>> {
        let n = self.n_vib;
        let mut rhs = DMatrix::<f64>::zeros(3 * n, n);
        rhs.view_mut((0, 0), (n, n)).copy_from(&tensors.g);
        let x = self.lu.solve(&rhs).expect("factorisation checked regular");
        (0..n)
            .map(|j0| DMatrix::from_fn(3, n, |m, j| x[(m * n + j, j0)]))
            .collect()
    }
}

/// Ring amplitudes of auxiliary problem `j0` at total energy `energy`.
pub fn solve_ring_system(
    energy: f64,
    j0: usize,
    tensors: &CouplingTensors,
    channels: &ChannelSet,
) -> Result<DMatrix<f64>> {
    check_index(j0, tensors.n_vib)?;
    Ok(RingSystem::new(energy, tensors, channels)?.solve(j0, tensors))
}

fn check_index(index: usize, n_vib: usize) -> Result<()> {
    if index >= n_vib {
        return Err(Error::Truncation { index, n_vib });
    }
    Ok(())
}

/// `ψ^{(j0)}_{−1,j}` and the column `A_j^{j0}` from the ring amplitudes.
pub fn boundary_amplitudes(
    energy: f64,
    j0: usize,
    psi_ring: &DMatrix<f64>,
    tensors: &CouplingTensors,
    channels: &ChannelSet,
    hopping: f64,
) -> Result<(DVector<Complex64>, DVector<Complex64>)> {
    let n = tensors.n_vib;
    check_index(j0, n)?;
    let alpha = psi_ring.row(Monomer::Alpha.index());
    let mut psi_m1 = DVector::<Complex64>::zeros(n);
    let mut a_col = DVector::<Complex64>::zeros(n);
    for j in 0..n {
        let ch = &channels.channels[j];
        let drive: f64 = (0..n).map(|jp| tensors.g[(j, jp)] * alpha[jp]).sum();
        let mut num = Complex64::new(-drive, 0.0);
        if j == j0 {
            num += energy - ch.eps - hopping * ch.phase();
        }
        psi_m1[j] = num / hopping;

        let sin_k = ch.sin_k();
        if sin_k.norm() < EDGE_TOL {
            return Err(Error::BandEdgeSingularity {
                channel: j,
                energy,
                sin_k: sin_k.norm(),
            });
        }
        let incident = if j == j0 { ch.phase() } else { Complex64::new(0.0, 0.0) };
        a_col[j] = (incident - psi_m1[j]) / (2.0 * I * sin_k);
    }
    Ok((psi_m1, a_col))
}

/// One auxiliary problem with outgoing channel `j0`.
#[derive(Clone, Debug)]
pub struct AuxiliarySolution {
    pub j0: usize,
    /// 3 × n_vib amplitudes on alpha, beta, eta.
    pub psi_ring: DMatrix<f64>,
    pub psi_m1: DVector<Complex64>,
    pub a_col: DVector<Complex64>,
}

impl AuxiliarySolution {
    /// Largest residual of the lattice equations at sites −1, 0 and the ring.
    pub fn residual(&self, tensors: &CouplingTensors, channels: &ChannelSet, hopping: f64) -> f64 {
        let n = tensors.n_vib;
        let e = channels.energy;
        let ring = self.psi_ring.map(|x| Complex64::new(x, 0.0));
        let chain = |site: i64, j: usize| -> Complex64 {
            let ch = &channels.channels[j];
            if site >= 0 {
                if j == self.j0 {
                    (I * ch.k * site as f64).exp()
                } else {
                    Complex64::new(0.0, 0.0)
                }
            } else {
                let delta = if j == self.j0 { 1.0 } else { 0.0 };
                let a = self.a_col[j];
                a * (I * ch.k * site as f64).exp() + (delta - a) * (-I * ch.k * site as f64).exp()
            }
        };
        let mut worst: f64 = 0.0;
        for j in 0..n {
            worst = worst.max((chain(-1, j) - self.psi_m1[j]).norm());
        }
        worst.max(lattice_residual(e, tensors, channels, hopping, &chain, &ring))
    }
}

/// Residual of the lattice equations on chain sites −1..=1 and the ring for a
/// state given by `chain(site, j)` and ring amplitudes `ring` (3 × n_vib).
fn lattice_residual(
    energy: f64,
    tensors: &CouplingTensors,
    channels: &ChannelSet,
    hopping: f64,
    chain: &dyn Fn(i64, usize) -> Complex64,
    ring: &DMatrix<Complex64>,
) -> f64 {
    let n = tensors.n_vib;
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let de = energy - channels.channels[j].eps;
        for site in -1..=1i64 {
            let mut r = de * chain(site, j) - hopping * (chain(site + 1, j) + chain(site - 1, j));
            if site == 0 {
                for jp in 0..n {
                    r -= tensors.g[(j, jp)] * ring[(Monomer::Alpha.index(), jp)];
                }
            }
            worst = worst.max(r.norm());
        }
        for a in Monomer::ALL {
            let mut r = de * ring[(a.index(), j)];
            for b in Monomer::ALL {
                if a != b {
                    let f = tensors.f(a, b);
                    for jp in 0..n {
                        r -= f[(j, jp)] * ring[(b.index(), jp)];
                    }
                }
            }
            if a == Monomer::Alpha {
                for jp in 0..n {
                    r -= tensors.g[(j, jp)] * chain(0, jp);
                }
            }
            worst = worst.max(r.norm());
        }
    }
    worst
}

/// Amplitude matrix `A[j][j0] = A_j^{j0}` with its inverse.
#[derive(Clone, Debug)]
pub struct AmplitudeMatrix {
    pub a: DMatrix<Complex64>,
    pub q: DMatrix<Complex64>,
    /// 1-norm condition estimate `‖A‖₁ ‖Q‖₁`.
    pub condition: f64,
    pub auxiliaries: Vec<AuxiliarySolution>,
    pub channels: ChannelSet,
}

fn norm1(m: &DMatrix<Complex64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Builds the coupling tensors of `problem` and the amplitude matrix at `energy`.
pub fn assemble_and_invert(energy: f64, problem: &ScatteringProblem) -> Result<AmplitudeMatrix> {
    QsmSolver::new(problem.clone())?.assemble(energy)
}

/// Scattering amplitudes and fluxes at one total energy.
#[derive(Clone, Debug)]
pub struct ScatteringSolution {
    /// Energy actually solved at (differs from the request when nudged).
    pub energy: f64,
    pub requested_energy: f64,
    pub j_in: usize,
    pub c: DVector<Complex64>,
    pub trans_amp: DVector<Complex64>,
    pub refl_amp: DVector<Complex64>,
    /// Flux coefficients per channel; zero for closed channels.
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub conservation_defect: f64,
    pub condition: f64,
    /// The energy was shifted off a ring pole.
    pub nudged: bool,
    pub ill_conditioned: bool,
    /// Ring amplitudes of the physical solution, 3 × n_vib.
    pub ring: DMatrix<Complex64>,
    pub channels: ChannelSet,
}

impl ScatteringSolution {
    pub fn total_transmission(&self) -> f64 {
        self.t.iter().sum()
    }

    pub fn total_reflection(&self) -> f64 {
        self.r.iter().sum()
    }

    /// Chain amplitude `ψ_{nj}` of the physical solution.
    pub fn chain_amplitude(&self, site: i64, j: usize) -> Complex64 {
        let k = self.channels.channels[j].k;
        if site >= 0 {
            self.trans_amp[j] * (I * k * site as f64).exp()
        } else {
            let incident = if j == self.j_in { 1.0 } else { 0.0 };
            incident * (I * k * site as f64).exp() + self.refl_amp[j] * (-I * k * site as f64).exp()
        }
    }

    /// Largest residual of `H|Ψ⟩ = E|Ψ⟩` on chain sites −2..=2 and the ring.
    pub fn lattice_residual(&self, tensors: &CouplingTensors, hopping: f64) -> f64 {
        let chain = |site: i64, j: usize| self.chain_amplitude(site, j);
        let mut worst = lattice_residual(self.energy, tensors, &self.channels, hopping, &chain, &self.ring);
        for j in 0..tensors.n_vib {
            let de = self.energy - self.channels.channels[j].eps;
            for site in [-2i64, 2] {
                let r = de * chain(site, j) - hopping * (chain(site + 1, j) + chain(site - 1, j));
                worst = worst.max(r.norm());
            }
        }
        worst
    }
}

/// Solver bound to one problem; tensors are built once and shared.
#[derive(Clone, Debug)]
pub struct QsmSolver {
    pub problem: ScatteringProblem,
    pub tensors: CouplingTensors,
}

impl QsmSolver {
    pub fn new(problem: ScatteringProblem) -> Result<Self> {
        let tensors = CouplingTensors::build(&problem)?;
        Ok(Self { problem, tensors })
    }

    /// Solver with externally supplied tensors (e.g. a rescaled chain coupling).
    pub fn with_tensors(problem: ScatteringProblem, tensors: CouplingTensors) -> Result<Self> {
        problem.validate()?;
        if tensors.n_vib != problem.vib_levels() {
            return Err(Error::Validation(format!(
                "tensors carry {} levels, problem needs {}",
                tensors.n_vib,
                problem.vib_levels()
            )));
        }
        Ok(Self { problem, tensors })
    }

    pub fn assemble(&self, energy: f64) -> Result<AmplitudeMatrix> {
        let channels = channel_set(energy, &self.problem)?;
        let ring = RingSystem::new(energy, &self.tensors, &channels)?;
        let n = self.tensors.n_vib;
        let mut a = DMatrix::<Complex64>::zeros(n, n);
        let mut auxiliaries = Vec::with_capacity(n);
        for (j0, psi_ring) in ring.solve_all(&self.tensors).into_iter().enumerate() {
            let (psi_m1, a_col) =
                boundary_amplitudes(energy, j0, &psi_ring, &self.tensors, &channels, self.problem.hopping)?;
            a.set_column(j0, &a_col);
            auxiliaries.push(AuxiliarySolution {
                j0,
                psi_ring,
                psi_m1,
                a_col,
            });
        }
        let q = a
            .clone()
            .try_inverse()
            .ok_or(Error::SingularAmplitudeMatrix { energy })?;
        let condition = norm1(&a) * norm1(&q);
        if !(condition <= COND_WARN) {
            log::warn!("amplitude matrix ill-conditioned at E = {energy}: estimate {condition:e}");
        }
        Ok(AmplitudeMatrix {
            a,
            q,
            condition,
            auxiliaries,
            channels,
        })
    }

    /// Solves at total energy `energy`, nudging off ring poles and off the
    /// thresholds of channels other than `j_in` if needed.
    pub fn solve(&self, energy: f64) -> Result<ScatteringSolution> {
        let shift = NUDGE * self.problem.hopping;
        let mut last = None;
        for (attempt, e) in [energy, energy + shift, energy - shift].into_iter().enumerate() {
            match self.solve_exact(e) {
                Ok(mut sol) => {
                    sol.requested_energy = energy;
                    sol.nudged = attempt > 0;
                    return Ok(sol);
                }
                Err(err @ (Error::SingularRing { .. } | Error::SingularAmplitudeMatrix { .. })) => {
                    last = Some(err);
                }
                // A threshold of some other channel is only a cusp of the fluxes.
                Err(err @ Error::BandEdgeSingularity { channel, .. }) if channel != self.problem.j_in => {
                    last = Some(err);
                }
                Err(err) => return Err(err),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    /// Solves for an incoming band energy `e_in` in channel `j_in`.
    pub fn solve_incoming(&self, e_in: f64) -> Result<ScatteringSolution> {
        self.solve(self.problem.total_energy(e_in))
    }

    fn solve_exact(&self, energy: f64) -> Result<ScatteringSolution> {
        let j_in = self.problem.j_in;
        let amp = self.assemble(energy)?;
        let channels = &amp.channels;
        if !channels.channels[j_in].open {
            return Err(Error::ChannelClosed { j_in, energy });
        }
        let n = self.tensors.n_vib;
        let c: DVector<Complex64> = amp.q.column(j_in).into_owned();
        let trans_amp = c.clone();
        let mut refl_amp = c.clone();
        refl_amp[j_in] -= 1.0;

        let sin_in = channels.channels[j_in].sin_k().re;
        let mut t = vec![0.0; n];
        let mut r = vec![0.0; n];
        for (j, ch) in channels.channels.iter().enumerate() {
            if ch.open {
                let ratio = ch.sin_k().re / sin_in;
                t[j] = trans_amp[j].norm_sqr() * ratio;
                r[j] = refl_amp[j].norm_sqr() * ratio;
            }
        }
        let conservation_defect = (t.iter().sum::<f64>() + r.iter().sum::<f64>() - 1.0).abs();

        let mut ring = DMatrix::<Complex64>::zeros(3, n);
        for (aux, &cj) in amp.auxiliaries.iter().zip(c.iter()) {
            ring += aux.psi_ring.map(|x| Complex64::new(x, 0.0)) * cj;
        }
        Ok(ScatteringSolution {
            energy,
            requested_energy: energy,
            j_in,
            c,
            trans_amp,
            refl_amp,
            t,
            r,
            conservation_defect,
            condition: amp.condition,
            nudged: false,
            ill_conditioned: !(amp.condition <= COND_WARN),
            ring,
            channels: amp.channels,
        })
    }

    /// Transmitted and reflected amplitudes for an incoming superposition
    /// `Σ_j w_j e^{ik_j n}|j⟩`; weights on closed channels must be zero.
    pub fn solve_superposition(
        &self,
        energy: f64,
        weights: &DVector<Complex64>,
    ) -> Result<(DVector<Complex64>, DVector<Complex64>)> {
        let amp = self.assemble(energy)?;
        for (j, ch) in amp.channels.channels.iter().enumerate() {
            if !ch.open && weights[j] != Complex64::new(0.0, 0.0) {
                return Err(Error::ChannelClosed { j_in: j, energy });
            }
        }
        let c = &amp.q * weights;
        let refl = &c - weights;
        Ok((c, refl))
    }
}

/// Builds a solver for `problem` and solves at total energy `energy`.
pub fn solve_scattering(energy: f64, problem: &ScatteringProblem) -> Result<ScatteringSolution> {
    QsmSolver::new(problem.clone())?.solve(energy)
}
