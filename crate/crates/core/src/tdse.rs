//! Time-dependent propagation of an excitation wavepacket through the
//! vibronic system, with transmission extraction and electron–vibration
//! entanglement entropy.
//!
//! The chain holds `n_sites` sites `n = −n_sites/2 .. n_sites/2 − 1` with hard
//! walls at both ends and the control unit attached to site 0. The state is
//! stored as a `(n_sites + 3) × levels` matrix: chain rows first, then alpha,
//! beta, eta.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coupling::CouplingTensors;
use crate::error::{Error, Result};
use crate::model::{Monomer, ScatteringProblem};

/// Populations below this count as empty for extraction and early stopping.
pub const EMPTY: f64 = 1e-10;
/// Norm drift that aborts a propagation.
pub const DRIFT_LIMIT: f64 = 1e-6;
/// Population that may reach the outermost sites before the run is declared
/// contaminated by wall reflections.
pub const WALL_LIMIT: f64 = 1e-10;
/// Width of the boundary strip watched for wall contact.
const WALL_STRIP: usize = 10;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Gaussian packet `N exp(−(n − n0)²/σ² − i k n)` heading towards the control unit.
///
/// With positive hopping the band velocity is `−2J sin k`, so the phase
/// `e^{−ikn}` carries the packet in the +n direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavepacketSpec {
    pub n0: i64,
    pub sigma: f64,
    pub k_in: f64,
}

impl WavepacketSpec {
    pub const DEFAULT_N0: i64 = -120;
    pub const DEFAULT_SIGMA: f64 = 10.0;

    /// Default packet with central band energy `e_in`.
    pub fn from_energy(e_in: f64, hopping: f64) -> Result<Self> {
        Self::with_energy(Self::DEFAULT_N0, Self::DEFAULT_SIGMA, e_in, hopping)
    }

    pub fn with_energy(n0: i64, sigma: f64, e_in: f64, hopping: f64) -> Result<Self> {
        let x = e_in / (2.0 * hopping);
        if !(x.abs() < 1.0) {
            return Err(Error::OutOfBand {
                energy: e_in,
                band_edge: 2.0 * hopping,
            });
        }
        Ok(Self {
            n0,
            sigma,
            k_in: x.acos(),
        })
    }

    /// Central band energy `2J cos k_in`.
    pub fn energy(&self, hopping: f64) -> f64 {
        2.0 * hopping * self.k_in.cos()
    }

    /// Group speed `2J sin k_in` in sites per unit time.
    pub fn group_speed(&self, hopping: f64) -> f64 {
        2.0 * hopping * self.k_in.sin()
    }

    /// Band mass `ħ² / |d²E/dk²| = 1 / (2J |cos k_in|)`.
    pub fn effective_mass(&self, hopping: f64) -> f64 {
        1.0 / (2.0 * hopping * self.k_in.cos().abs())
    }

    /// Localisation energy width `2ħ²k / (m σ)`.
    pub fn energy_width(&self, hopping: f64) -> f64 {
        2.0 * self.k_in / (self.effective_mass(hopping) * self.sigma)
    }

    /// Standard deviation of the band energy over the packet's momenta,
    /// to first order in `1/σ`.
    pub fn energy_spread(&self, hopping: f64) -> f64 {
        self.group_speed(hopping) / self.sigma
    }

    /// Momentum weights `|φ(k)|²` of the packet, normalised on a uniform grid of
    /// `count` momenta spanning `k_in ± 6/σ` clipped to (0, π).
    pub fn momentum_distribution(&self, count: usize) -> Vec<(f64, f64)> {
        let half = 6.0 / self.sigma;
        let lo = (self.k_in - half).max(1e-6);
        let hi = (self.k_in + half).min(std::f64::consts::PI - 1e-6);
        let step = (hi - lo) / (count.max(2) - 1) as f64;
        let mut out: Vec<(f64, f64)> = (0..count)
            .map(|i| {
                let k = lo + step * i as f64;
                let dk = k - self.k_in;
                (k, (-0.5 * self.sigma * self.sigma * dk * dk).exp())
            })
            .collect();
        let total: f64 = out.iter().map(|p| p.1).sum();
        for p in &mut out {
            p.1 /= total;
        }
        out
    }
}

/// Amplitudes `ψ_{nj}(t)` on chain and ring sites.
#[derive(Clone, Debug, PartialEq)]
pub struct WavepacketState {
    pub psi: DMatrix<Complex64>,
    pub t: f64,
    pub n_sites: usize,
}

impl WavepacketState {
    pub fn zeros(n_sites: usize, levels: usize) -> Self {
        Self {
            psi: DMatrix::zeros(n_sites + 3, levels),
            t: 0.0,
            n_sites,
        }
    }

    pub fn first_site(&self) -> i64 {
        -((self.n_sites / 2) as i64)
    }

    pub fn levels(&self) -> usize {
        self.psi.ncols()
    }

    /// Row of chain site `n`.
    pub fn row(&self, site: i64) -> usize {
        (site - self.first_site()) as usize
    }

    /// Chain site of row `row`.
    pub fn site(&self, row: usize) -> i64 {
        row as i64 + self.first_site()
    }

    pub fn ring_row(&self, m: Monomer) -> usize {
        self.n_sites + m.index()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.psi.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Population on chain sites satisfying `keep`.
    pub fn chain_population(&self, keep: impl Fn(i64) -> bool) -> f64 {
        let mut total = 0.0;
        for r in 0..self.n_sites {
            if keep(self.site(r)) {
                total += self.psi.row(r).iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        total
    }

    /// Time-reversed state (complex conjugate).
    pub fn conjugate(&self) -> Self {
        Self {
            psi: self.psi.map(|z| z.conj()),
            t: self.t,
            n_sites: self.n_sites,
        }
    }
}

/// Packet in vibrational level `j_in`, empty control unit.
pub fn initial_state(spec: &WavepacketSpec, j_in: usize, n_sites: usize, levels: usize) -> Result<WavepacketState> {
    if j_in >= levels {
        return Err(Error::Truncation {
            index: j_in,
            n_vib: levels,
        });
    }
    if !(spec.sigma > 0.0) {
        return Err(Error::BadGeometry(format!("sigma must be positive, got {}", spec.sigma)));
    }
    if spec.n0 as f64 + 4.0 * spec.sigma >= 0.0 {
        return Err(Error::BadGeometry(format!(
            "need n0 + 4 sigma < 0, got n0 = {}, sigma = {}",
            spec.n0, spec.sigma
        )));
    }
    let gauss = |n: i64| (-((n - spec.n0) as f64).powi(2) / (spec.sigma * spec.sigma)).exp();
    let mut state = WavepacketState::zeros(n_sites, levels);
    let first = state.first_site();
    if (spec.n0 - first) as f64 <= 6.0 * spec.sigma {
        return Err(Error::BadGeometry(format!(
            "packet at n0 = {} does not fit on a chain starting at {first}",
            spec.n0
        )));
    }
    if gauss(0) > 1e-10 * gauss(spec.n0) {
        return Err(Error::BadGeometry(format!(
            "initial amplitude at site 0 is {:e} of the peak",
            gauss(0)
        )));
    }
    for r in 0..n_sites {
        let n = state.site(r);
        state.psi[(r, j_in)] = Complex64::from_polar(gauss(n), -spec.k_in * n as f64);
    }
    let norm = state.norm_sqr().sqrt();
    state.psi /= Complex64::new(norm, 0.0);
    Ok(state)
}

/// Full Hamiltonian of `problem` restricted to the first `levels` vibrational states.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    pub hopping: f64,
    pub n_sites: usize,
    pub eps: Vec<f64>,
    f: [[DMatrix<f64>; 3]; 3],
    g: DMatrix<f64>,
}

impl Hamiltonian {
    pub fn new(problem: &ScatteringProblem, tensors: &CouplingTensors, levels: usize) -> Result<Self> {
        if levels == 0 || levels > tensors.n_vib {
            return Err(Error::Validation(format!(
                "propagation needs 1..={} levels, got {levels}",
                tensors.n_vib
            )));
        }
        let cut = |m: &DMatrix<f64>| m.view((0, 0), (levels, levels)).into_owned();
        let f = std::array::from_fn(|a| std::array::from_fn(|b| cut(&tensors.f[a][b])));
        Ok(Self {
            hopping: problem.hopping,
            n_sites: problem.n_sites,
            eps: (0..levels).map(|j| problem.vib_energy(j)).collect(),
            f,
            g: cut(&tensors.g),
        })
    }

    pub fn levels(&self) -> usize {
        self.eps.len()
    }

    /// Row-sum bound on ‖H‖.
    pub fn norm_bound(&self) -> f64 {
        let eps_max = self.eps.iter().fold(0.0f64, |a, e| a.max(e.abs()));
        let row = |m: &DMatrix<f64>| {
            m.row_iter()
                .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let chain = 2.0 * self.hopping.abs() + row(&self.g);
        let ring = Monomer::ALL
            .iter()
            .map(|&a| {
                Monomer::ALL
                    .iter()
                    .filter(|&&b| b != a)
                    .map(|&b| row(&self.f[a.index()][b.index()]))
                    .sum::<f64>()
                    + row(&self.g)
            })
            .fold(0.0, f64::max);
        eps_max + chain.max(ring)
    }

    /// `out = H psi`.
    pub fn apply(&self, psi: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>) {
        let n = self.n_sites;
        let levels = self.levels();
        let j_hop = self.hopping;
        let origin = n / 2;
        let psi_s = psi.as_slice();
        let out_s = out.as_mut_slice();
        let rows = n + 3;
        for j in 0..levels {
            let col = &psi_s[j * rows..(j + 1) * rows];
            let dst = &mut out_s[j * rows..(j + 1) * rows];
            let e = self.eps[j];
            dst[0] = col[0] * e + col[1] * j_hop;
            for r in 1..n - 1 {
                dst[r] = col[r] * e + (col[r - 1] + col[r + 1]) * j_hop;
            }
            dst[n - 1] = col[n - 1] * e + col[n - 2] * j_hop;
            for m in 0..3 {
                dst[n + m] = col[n + m] * e;
            }
        }
        let at = |row: usize, j: usize| psi_s[j * rows + row];
        for j in 0..levels {
            let mut to_site0 = Complex64::new(0.0, 0.0);
            let mut to_alpha = Complex64::new(0.0, 0.0);
            for jp in 0..levels {
                let g = self.g[(j, jp)];
                if g != 0.0 {
                    to_site0 += at(n, jp) * g;
                    to_alpha += at(origin, jp) * g;
                }
            }
            out_s[j * rows + origin] += to_site0;
            out_s[j * rows + n] += to_alpha;
            for a in 0..3 {
                let mut acc = Complex64::new(0.0, 0.0);
                for b in 0..3 {
                    if a != b {
                        let f = &self.f[a][b];
                        for jp in 0..levels {
                            let v = f[(j, jp)];
                            if v != 0.0 {
                                acc += at(n + b, jp) * v;
                            }
                        }
                    }
                }
                out_s[j * rows + n + a] += acc;
            }
        }
    }

    /// Energy expectation `⟨ψ|H|ψ⟩`.
    pub fn energy(&self, state: &WavepacketState) -> f64 {
        let mut h = DMatrix::zeros(state.psi.nrows(), state.psi.ncols());
        self.apply(&state.psi, &mut h);
        state.psi.iter().zip(h.iter()).map(|(a, b)| (a.conj() * b).re).sum()
    }
}

/// Time derivative `dψ/dt = −i H ψ / ħ`.
pub fn rhs(state: &WavepacketState, hamiltonian: &Hamiltonian) -> DMatrix<Complex64> {
    let mut out = DMatrix::zeros(state.psi.nrows(), state.psi.ncols());
    hamiltonian.apply(&state.psi, &mut out);
    out *= -I;
    out
}

/// Propagation settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between recorded samples.
    pub sample_stride: usize,
    /// Stop once the scattering region has emptied after `arrival_time`.
    pub early_stop: bool,
    /// Earliest time at which an early stop is considered.
    pub arrival_time: f64,
    /// Half-width of the region around site 0 that must be empty to stop early.
    pub clear_radius: i64,
    /// Population below which the CU and the cleared region count as empty.
    #[serde(default = "default_empty")]
    pub empty: f64,
}

fn default_empty() -> f64 {
    EMPTY
}

impl PropagationConfig {
    /// Settings for a packet run: stride of one time unit, early stop once the
    /// CU and `5σ` around site 0 are empty after the packet centre arrives.
    pub fn for_packet(spec: &WavepacketSpec, hopping: f64, dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            sample_stride: (1.0 / dt).round().max(1.0) as usize,
            early_stop: true,
            arrival_time: spec.n0.unsigned_abs() as f64 / spec.group_speed(hopping),
            clear_radius: (5.0 * spec.sigma).ceil() as i64,
            empty: EMPTY,
        }
    }
}

/// Observables recorded along a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub norm: f64,
    pub energy: f64,
    pub cu_population: f64,
    pub entropy: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub final_state: WavepacketState,
    pub stopped_early: bool,
    /// Largest |‖ψ‖² − 1| seen at sample points.
    pub norm_drift: f64,
    /// Largest relative change of ⟨H⟩ seen at sample points.
    pub energy_drift: f64,
}

fn sample(state: &WavepacketState, hamiltonian: &Hamiltonian) -> Sample {
    Sample {
        t: state.t,
        norm: state.norm_sqr(),
        energy: hamiltonian.energy(state),
        cu_population: cu_population(state),
        entropy: von_neumann_entropy(state),
    }
}

/// One classical fourth-order Runge–Kutta step.
pub fn rk4_step(state: &mut WavepacketState, hamiltonian: &Hamiltonian, dt: f64) {
    let shape = (state.psi.nrows(), state.psi.ncols());
    let mut k = DMatrix::zeros(shape.0, shape.1);
    let mut acc = state.psi.clone();
    let mut stage = state.psi.clone();
    let weights = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];
    let advance = [0.5, 0.5, 1.0];
    for s in 0..4 {
        hamiltonian.apply(&stage, &mut k);
        // k = −i H stage
        let wk = Complex64::new(0.0, -dt * weights[s]);
        acc.zip_apply(&k, |a, b| *a += wk * b);
        if s < 3 {
            let ak = Complex64::new(0.0, -dt * advance[s]);
            stage.copy_from(&state.psi);
            stage.zip_apply(&k, |a, b| *a += ak * b);
        }
    }
    state.psi = acc;
    state.t += dt;
}

/// Propagates `state` to `config.t_end` (or an early stop).
pub fn propagate(mut state: WavepacketState, hamiltonian: &Hamiltonian, config: &PropagationConfig) -> Result<Trajectory> {
    if !(config.dt > 0.0 && config.dt.is_finite()) {
        return Err(Error::Validation(format!("dt must be positive, got {}", config.dt)));
    }
    let stride = config.sample_stride.max(1);
    let steps = ((config.t_end - state.t) / config.dt).round().max(0.0) as usize;
    let first = sample(&state, hamiltonian);
    let energy_scale = first.energy.abs().max(hamiltonian.hopping);
    let mut samples = vec![first];
    let mut norm_drift: f64 = 0.0;
    let mut energy_drift: f64 = 0.0;
    let mut stopped_early = false;
    let t0 = state.t;
    for step in 1..=steps {
        rk4_step(&mut state, hamiltonian, config.dt);
        state.t = t0 + step as f64 * config.dt;
        if step % stride == 0 || step == steps {
            let s = sample(&state, hamiltonian);
            let drift = (s.norm - first.norm).abs();
            norm_drift = norm_drift.max(drift);
            energy_drift = energy_drift.max((s.energy - first.energy).abs() / energy_scale);
            samples.push(s);
            if !(drift <= DRIFT_LIMIT) {
                return Err(Error::StepSizeTooLarge {
                    drift,
                    limit: DRIFT_LIMIT,
                });
            }
            let strip = WALL_STRIP.min(state.n_sites / 2) as i64;
            let (lo, hi) = (state.first_site() + strip, state.first_site() + state.n_sites as i64 - strip);
            if state.chain_population(|n| n < lo || n >= hi) > WALL_LIMIT {
                return Err(Error::HardWallContact { time: state.t });
            }
            if config.early_stop && state.t >= config.arrival_time && s.cu_population < config.empty {
                let r = config.clear_radius;
                if state.chain_population(|n| n.abs() <= r) < config.empty {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    Ok(Trajectory {
        samples,
        final_state: state,
        stopped_early,
        norm_drift,
        energy_drift,
    })
}

/// Transmission and reflection read off a scattered state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsTransmission {
    pub t_total: f64,
    pub r_total: f64,
    pub t_j: Vec<f64>,
    pub r_j: Vec<f64>,
    /// Population neither left of `−n_split` nor right of `n_split`.
    pub residual: f64,
}

/// Splits the population at `±n_split`; requires an emptied scattering region.
pub fn transmission_from_dynamics(state: &WavepacketState, n_split: i64) -> Result<DynamicsTransmission> {
    transmission_with_threshold(state, n_split, EMPTY)
}

/// As [`transmission_from_dynamics`] with a custom emptiness threshold. The
/// population still inside the scattering region bounds the extraction error.
pub fn transmission_with_threshold(state: &WavepacketState, n_split: i64, empty: f64) -> Result<DynamicsTransmission> {
    let p_u = cu_population(state);
    if p_u > empty {
        return Err(Error::PrematureExtraction(format!("CU population {p_u:e} above {empty:e}")));
    }
    let middle = state.chain_population(|n| n.abs() <= n_split);
    if middle > empty {
        return Err(Error::PrematureExtraction(format!(
            "population {middle:e} left within |n| <= {n_split}"
        )));
    }
    let levels = state.levels();
    let mut t_j = vec![0.0; levels];
    let mut r_j = vec![0.0; levels];
    for r in 0..state.n_sites {
        let n = state.site(r);
        let target = if n > n_split {
            &mut t_j
        } else if n < -n_split {
            &mut r_j
        } else {
            continue;
        };
        for (j, acc) in target.iter_mut().enumerate() {
            *acc += state.psi[(r, j)].norm_sqr();
        }
    }
    let t_total: f64 = t_j.iter().sum();
    let r_total: f64 = r_j.iter().sum();
    Ok(DynamicsTransmission {
        t_total,
        r_total,
        t_j,
        r_j,
        residual: state.norm_sqr() - t_total - r_total,
    })
}

/// Entropy of the reduced electronic density matrix `ρ_el = Σ_j ψ_{·j} ψ_{·j}†`.
///
/// The nonzero spectrum of `ρ_el = Ψ Ψ†` is that of the small Gram matrix
/// `Ψ† Ψ` over vibrational levels, which is diagonalised instead.
pub fn von_neumann_entropy(state: &WavepacketState) -> f64 {
    let gram = state.psi.adjoint() * &state.psi;
    let eig = SymmetricEigen::new(gram).eigenvalues;
    // Normalise by the trace so integrator norm drift does not read as entropy.
    let trace: f64 = eig.iter().sum();
    if !(trace > 0.0) {
        return 0.0;
    }
    // Eigenvalues at rounding level are zero populations.
    let floor = 1e-15 * eig.iter().fold(0.0f64, |a, &p| a.max(p));
    eig.iter()
        .filter(|&&p| p > floor)
        .map(|&p| p / trace)
        .map(|p| -p * p.ln())
        .sum::<f64>()
        .max(0.0)
}

/// Total population on the control unit monomers.
pub fn cu_population(state: &WavepacketState) -> f64 {
    let n = state.n_sites;
    state.psi.rows(n, 3).iter().map(|z| z.norm_sqr()).sum()
}

/// Everything one packet run produces.
#[derive(Clone, Debug)]
pub struct PacketRun {
    pub spec: WavepacketSpec,
    pub trajectory: Trajectory,
    pub transmission: DynamicsTransmission,
}

/// Packet run: builds the Hamiltonian with `levels` vibrational states,
/// propagates until the CU and `5σ` around site 0 hold less than `empty`,
/// and extracts the channel fluxes.
pub fn run_packet(
    problem: &ScatteringProblem,
    tensors: &CouplingTensors,
    spec: WavepacketSpec,
    levels: usize,
    dt: f64,
    n_split: i64,
    empty: f64,
) -> Result<PacketRun> {
    let hamiltonian = Hamiltonian::new(problem, tensors, levels)?;
    let state = initial_state(&spec, problem.j_in, problem.n_sites, levels)?;
    let speed = spec.group_speed(problem.hopping);
    // Long enough for the slowest relevant components to clear; the run
    // normally stops early.
    let t_end = 4.0 * (spec.n0.unsigned_abs() as f64 + 10.0 * spec.sigma) / speed;
    let config = PropagationConfig {
        empty,
        ..PropagationConfig::for_packet(&spec, problem.hopping, dt, t_end)
    };
    let trajectory = propagate(state, &hamiltonian, &config)?;
    let transmission = transmission_with_threshold(&trajectory.final_state, n_split, empty)?;
    Ok(PacketRun {
        spec,
        trajectory,
        transmission,
    })
}
