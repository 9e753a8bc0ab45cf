//! Sweeps over the incoming band energy and analyses built on them.
//!
//! Every energy in this module is the band energy `E_in` of the incoming
//! excitation in channel `j_in`; the solver is called at the total energy
//! `E_in + ℰ_{j_in}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{gauss_hermite, CouplingTensors};
use crate::error::{Error, Result};
use crate::model::ScatteringProblem;
use crate::qsm::{QsmSolver, ScatteringSolution};
use crate::tdse::{run_packet, WavepacketSpec};
use crate::tmm::{transmission_static, StaticCU};

/// Rows whose flux balance is off by more than this are flagged.
pub const DEFECT_TOL: f64 = 1e-9;

/// Distance kept from the band edges by [`energy_grid`], in units of J.
pub const EDGE_GUARD: f64 = 1e-3;

/// Uniform grid of `count` band energies on `[lo, hi]`.
///
/// Fails unless the whole range lies strictly inside the band.
pub fn energy_grid(problem: &ScatteringProblem, lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    let edge = 2.0 * problem.hopping;
    for e in [lo, hi] {
        if !(e.abs() < edge) {
            return Err(Error::OutOfBand { energy: e, band_edge: edge });
        }
    }
    if !(lo < hi) || count < 2 {
        return Err(Error::Validation(format!(
            "grid needs lo < hi and at least two points, got [{lo}, {hi}] with {count}"
        )));
    }
    let step = (hi - lo) / (count - 1) as f64;
    Ok((0..count).map(|i| if i + 1 == count { hi } else { lo + step * i as f64 }).collect())
}

/// Default grid across the band, kept [`EDGE_GUARD`] J away from both edges.
pub fn band_grid(problem: &ScatteringProblem, count: usize) -> Result<Vec<f64>> {
    let edge = (2.0 - EDGE_GUARD) * problem.hopping;
    energy_grid(problem, -edge, edge, count)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowFlag {
    /// Solved slightly off the requested energy to avoid a ring pole or a threshold.
    Nudged,
    IllConditioned,
    /// Flux balance off by more than [`DEFECT_TOL`].
    Conservation,
    /// Solver error; the row carries no data.
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub e_in: f64,
    pub t_total: f64,
    pub r_total: f64,
    pub t_j: Vec<f64>,
    pub r_j: Vec<f64>,
    pub defect: f64,
    pub condition: f64,
    pub flags: Vec<RowFlag>,
}

impl SpectrumRow {
    fn from_solution(e_in: f64, sol: &ScatteringSolution) -> Self {
        let mut flags = Vec::new();
        if sol.nudged {
            flags.push(RowFlag::Nudged);
        }
        if sol.ill_conditioned {
            flags.push(RowFlag::IllConditioned);
        }
        if !(sol.conservation_defect < DEFECT_TOL) {
            flags.push(RowFlag::Conservation);
        }
        Self {
            e_in,
            t_total: sol.total_transmission(),
            r_total: sol.total_reflection(),
            t_j: sol.t.clone(),
            r_j: sol.r.clone(),
            defect: sol.conservation_defect,
            condition: sol.condition,
            flags,
        }
    }

    fn failed(e_in: f64, n_vib: usize, err: &Error) -> Self {
        Self {
            e_in,
            t_total: f64::NAN,
            r_total: f64::NAN,
            t_j: vec![f64::NAN; n_vib],
            r_j: vec![f64::NAN; n_vib],
            defect: f64::NAN,
            condition: f64::NAN,
            flags: vec![RowFlag::Failed(err.to_string())],
        }
    }

    pub fn is_failed(&self) -> bool {
        self.flags.iter().any(|f| matches!(f, RowFlag::Failed(_)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    /// Content hash of `problem`.
    pub hash: String,
    pub problem: ScatteringProblem,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTable {
    pub grid: Vec<f64>,
    pub rows: Vec<SpectrumRow>,
    pub meta: SpectrumMeta,
}

impl SpectrumTable {
    pub fn transmission(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t_total).collect()
    }

    pub fn worst_defect(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| !r.is_failed())
            .map(|r| r.defect)
            .fold(0.0, f64::max)
    }

    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.is_failed()).count()
    }
}

fn check_grid(problem: &ScatteringProblem, grid: &[f64]) -> Result<()> {
    let edge = 2.0 * problem.hopping;
    if let Some(&e) = grid.iter().find(|e| !(e.abs() < edge)) {
        return Err(Error::OutOfBand { energy: e, band_edge: edge });
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Validation("energy grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Solves at every grid energy in parallel. Solver failures become flagged
/// rows; only an invalid problem or grid aborts.
pub fn sweep(problem: &ScatteringProblem, grid: &[f64]) -> Result<SpectrumTable> {
    check_grid(problem, grid)?;
    let solver = QsmSolver::new(problem.clone())?;
    sweep_with(&solver, grid)
}

/// [`sweep`] with prebuilt coupling tensors.
pub fn sweep_with(solver: &QsmSolver, grid: &[f64]) -> Result<SpectrumTable> {
    let problem = &solver.problem;
    check_grid(problem, grid)?;
    let n_vib = solver.tensors.n_vib;
    // Each row is independent and collect keeps grid order, so the table does
    // not depend on the thread count.
    let rows = grid
        .par_iter()
        .map(|&e| match solver.solve_incoming(e) {
            Ok(sol) => SpectrumRow::from_solution(e, &sol),
            Err(err) => SpectrumRow::failed(e, n_vib, &err),
        })
        .collect();
    Ok(SpectrumTable {
        grid: grid.to_vec(),
        rows,
        meta: SpectrumMeta {
            hash: problem.content_hash(),
            problem: problem.clone(),
        },
    })
}

/// Elastic and inelastic parts of a vibrating table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelDecomposition {
    pub e_in: Vec<f64>,
    pub elastic: Vec<f64>,
    pub inelastic: Vec<f64>,
    /// Inelastic fraction of the total transmission (NaN where T = 0).
    pub inelastic_share: Vec<f64>,
    /// `per_channel[j][i]` is `T_j` at grid point i.
    pub per_channel: Vec<Vec<f64>>,
}

pub fn channel_decomposition(table: &SpectrumTable) -> ChannelDecomposition {
    let j_in = table.meta.problem.j_in;
    let n_vib = table.rows.first().map_or(0, |r| r.t_j.len());
    let mut out = ChannelDecomposition {
        e_in: table.grid.clone(),
        elastic: Vec::with_capacity(table.rows.len()),
        inelastic: Vec::with_capacity(table.rows.len()),
        inelastic_share: Vec::with_capacity(table.rows.len()),
        per_channel: vec![Vec::with_capacity(table.rows.len()); n_vib],
    };
    for row in &table.rows {
        let elastic = row.t_j[j_in];
        let inelastic: f64 = row
            .t_j
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != j_in)
            .map(|(_, t)| t)
            .sum();
        out.elastic.push(elastic);
        out.inelastic.push(inelastic);
        out.inelastic_share.push(inelastic / (elastic + inelastic));
        for (j, t) in row.t_j.iter().enumerate() {
            out.per_channel[j].push(*t);
        }
    }
    out
}

/// A neighbouring maximum/minimum pair of `T(E_in)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub peak_energy: f64,
    pub peak_value: f64,
    pub dip_energy: f64,
    pub dip_value: f64,
    pub center: f64,
    /// +1 when the peak lies below the dip in energy, −1 otherwise.
    pub asymmetry: i8,
}

/// Finds the vibrational peak/dip pair near `E_in = J + ħω`.
///
/// The window `[J + ħω/2, J + 3ħω/2 + 0.05J]`, clipped to the band, is
/// resampled ten times finer than the table grid (at least 400 points); the
/// adjacent extremum pair with the largest height difference is returned.
pub fn locate_vibrational_resonance(table: &SpectrumTable, hbar_omega: f64) -> Result<FeatureDescriptor> {
    let problem = &table.meta.problem;
    let j = problem.hopping;
    let lo = j + 0.5 * hbar_omega;
    let hi = (j + 1.5 * hbar_omega + 0.05 * j).min((2.0 - EDGE_GUARD) * j);
    if !(lo < hi) {
        return Err(Error::FeatureNotFound { lo, hi });
    }
    let spacing = table
        .grid
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let fine = if spacing.is_finite() { spacing / 10.0 } else { hi - lo };
    let count = (((hi - lo) / fine).ceil() as usize + 1).max(400);
    let grid = energy_grid(problem, lo, hi, count)?;
    let refined = sweep(problem, &grid)?;
    let t: Vec<f64> = refined.rows.iter().map(|r| r.t_total).collect();
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!(
            "resampling failed in [{lo}, {hi}]: {} rows flagged",
            refined.failed_rows()
        )));
    }

    // Interior extrema from sign changes of the forward differences.
    let mut extrema: Vec<(usize, bool)> = Vec::new();
    let mut last_sign = 0.0;
    for i in 0..t.len() - 1 {
        let d = t[i + 1] - t[i];
        if d == 0.0 {
            continue;
        }
        let s = d.signum();
        if last_sign != 0.0 && s != last_sign {
            extrema.push((i, last_sign > 0.0));
        }
        last_sign = s;
    }
    let best = extrema
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .max_by(|a, b| {
            let ha = (t[a[0].0] - t[a[1].0]).abs();
            let hb = (t[b[0].0] - t[b[1].0]).abs();
            ha.total_cmp(&hb)
        })
        .ok_or(Error::FeatureNotFound { lo, hi })?;
    let (peak, dip) = if best[0].1 { (best[0].0, best[1].0) } else { (best[1].0, best[0].0) };
    Ok(FeatureDescriptor {
        peak_energy: grid[peak],
        peak_value: t[peak],
        dip_energy: grid[dip],
        dip_value: t[dip],
        center: 0.5 * (grid[peak] + grid[dip]),
        asymmetry: if peak < dip { 1 } else { -1 },
    })
}

/// Largest change of the static average allowed when the rule is doubled.
pub const STATIC_AVERAGE_TOL: f64 = 1e-6;

/// Default node count for [`static_average`].
pub const STATIC_AVERAGE_NODES: usize = 160;

/// Static transmission at band energy `e_in` averaged over the ground-state
/// position density of the mobile monomer, a Gaussian in Δ of variance λ².
///
/// Uses `nodes` Gauss–Hermite points and checks the result with twice as
/// many. A frozen CU returns the equilibrium value.
pub fn static_average(problem: &ScatteringProblem, e_in: f64, nodes: usize) -> Result<f64> {
    problem.validate()?;
    let Some(mobile) = problem.mobile() else {
        return transmission_static(e_in, &StaticCU::from_problem(problem)?, problem.hopping);
    };
    let lambda = problem.lambda();
    let average = |n: usize| -> Result<f64> {
        let (x, w) = gauss_hermite(n);
        let mut total = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            let mut disp = [0.0; 3];
            disp[mobile.index()] = 2f64.sqrt() * lambda * xi;
            let cu = StaticCU::displaced(problem, disp)?;
            total += wi * transmission_static(e_in, &cu, problem.hopping)?;
        }
        Ok(total / std::f64::consts::PI.sqrt())
    };
    let coarse = average(nodes.max(1))?;
    let fine = average(2 * nodes.max(1))?;
    let change = (coarse - fine).abs();
    if change > STATIC_AVERAGE_TOL {
        return Err(Error::Convergence {
            nodes,
            doubled: 2 * nodes,
            change,
        });
    }
    Ok(fine)
}

/// Settings for [`cross_validate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossValidationConfig {
    pub energies: Vec<f64>,
    pub tolerance: f64,
    pub sigma: f64,
    pub n0: i64,
    pub dt: f64,
    pub n_split: i64,
    /// Population the scattering region may still hold at extraction; it
    /// bounds the extraction error.
    pub empty: f64,
    /// Vibrational levels whose packet-averaged flux falls below this are
    /// dropped from the propagation.
    pub level_cutoff: f64,
    /// Refuse the comparison unless the problem hashes to this value.
    pub expected_hash: Option<String>,
}

impl Default for CrossValidationConfig {
    fn default() -> Self {
        Self {
            energies: vec![0.5, 0.9, 1.0, 1.1, 1.5],
            tolerance: 0.02,
            sigma: WavepacketSpec::DEFAULT_SIGMA,
            n0: WavepacketSpec::DEFAULT_N0,
            dt: 0.01,
            n_split: 10,
            empty: 1e-4,
            level_cutoff: 1e-7,
            expected_hash: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidationEntry {
    pub e_in: f64,
    pub t_tdse: f64,
    /// Transmission of the monochromatic scattering state at `e_in`.
    pub t_qsm: f64,
    /// QSM transmission averaged over the packet's momentum distribution.
    pub t_qsm_packet: f64,
    pub t_j_tdse: Vec<f64>,
    pub t_j_qsm_packet: Vec<f64>,
    /// `|t_tdse − t_qsm_packet|`.
    pub deviation: f64,
    /// Largest per-channel deviation.
    pub channel_deviation: f64,
    /// Standard deviation of the packet's band energy.
    pub energy_spread: f64,
    pub levels: usize,
    pub final_time: f64,
    pub residual: f64,
    pub norm_drift: f64,
    pub energy_drift: f64,
    pub passed: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidationReport {
    pub hash: String,
    pub tolerance: f64,
    pub entries: Vec<CrossValidationEntry>,
    /// Set when the comparison was not run.
    pub refused: Option<String>,
    pub passed: bool,
}

/// Momentum points used for packet averaging.
const PACKET_POINTS: usize = 801;

/// QSM fluxes weighted by the packet's momentum distribution.
fn packet_average(solver: &QsmSolver, spec: &WavepacketSpec) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let hopping = solver.problem.hopping;
    let n = solver.tensors.n_vib;
    let mut t = vec![0.0; n];
    let mut r = vec![0.0; n];
    for (k, w) in spec.momentum_distribution(PACKET_POINTS) {
        let sol = solver.solve_incoming(2.0 * hopping * k.cos())?;
        for j in 0..n {
            t[j] += w * sol.t[j];
            r[j] += w * sol.r[j];
        }
    }
    Ok((t.iter().sum(), t, r))
}

fn cross_validate_one(solver: &QsmSolver, config: &CrossValidationConfig, e_in: f64) -> Result<CrossValidationEntry> {
    let problem = &solver.problem;
    let spec = WavepacketSpec::with_energy(config.n0, config.sigma, e_in, problem.hopping)?;
    let t_qsm = solver.solve_incoming(e_in)?.total_transmission();
    let (t_qsm_packet, t_j_qsm, r_j_qsm) = packet_average(solver, &spec)?;

    // Propagate only the levels the packet populates, plus the entry channel.
    let mut levels = problem.j_in + 1;
    for j in 0..t_j_qsm.len() {
        if t_j_qsm[j] + r_j_qsm[j] > config.level_cutoff {
            levels = levels.max(j + 1);
        }
    }
    let levels = (levels + 1).min(problem.vib_levels());

    let tensors: &CouplingTensors = &solver.tensors;
    let run = run_packet(problem, tensors, spec, levels, config.dt, config.n_split, config.empty)?;
    let t_j_tdse = run.transmission.t_j.clone();
    let channel_deviation = (0..t_j_qsm.len())
        .map(|j| (t_j_tdse.get(j).copied().unwrap_or(0.0) - t_j_qsm[j]).abs())
        .fold(0.0, f64::max);
    let deviation = (run.transmission.t_total - t_qsm_packet).abs();
    let last = run.trajectory.samples.last().map_or(0.0, |s| s.t);
    Ok(CrossValidationEntry {
        e_in,
        t_tdse: run.transmission.t_total,
        t_qsm,
        t_qsm_packet,
        t_j_tdse,
        t_j_qsm_packet: t_j_qsm,
        deviation,
        channel_deviation,
        energy_spread: spec.energy_spread(problem.hopping),
        levels,
        final_time: last.max(run.trajectory.final_state.t),
        residual: run.transmission.residual,
        norm_drift: run.trajectory.norm_drift,
        energy_drift: run.trajectory.energy_drift,
        passed: deviation <= config.tolerance && channel_deviation <= config.tolerance,
        error: None,
    })
}

/// Runs QSM and a packet propagation at each energy and compares the
/// transmissions. The packet is compared against QSM fluxes averaged over its
/// own momentum distribution; the monochromatic value is reported alongside.
/// Errors become failed entries.
pub fn cross_validate(problem: &ScatteringProblem, config: &CrossValidationConfig) -> CrossValidationReport {
    let hash = problem.content_hash();
    let refuse = |reason: String| CrossValidationReport {
        hash: hash.clone(),
        tolerance: config.tolerance,
        entries: Vec::new(),
        refused: Some(reason),
        passed: false,
    };
    if let Some(expected) = &config.expected_hash {
        if *expected != hash {
            return refuse(Error::ProblemMismatch {
                left: expected.clone(),
                right: hash.clone(),
            }
            .to_string());
        }
    }
    let solver = match QsmSolver::new(problem.clone()) {
        Ok(s) => s,
        Err(err) => return refuse(err.to_string()),
    };
    let entries: Vec<CrossValidationEntry> = config
        .energies
        .par_iter()
        .map(|&e| {
            cross_validate_one(&solver, config, e).unwrap_or_else(|err| CrossValidationEntry {
                e_in: e,
                t_tdse: f64::NAN,
                t_qsm: f64::NAN,
                t_qsm_packet: f64::NAN,
                t_j_tdse: Vec::new(),
                t_j_qsm_packet: Vec::new(),
                deviation: f64::NAN,
                channel_deviation: f64::NAN,
                energy_spread: f64::NAN,
                levels: 0,
                final_time: f64::NAN,
                residual: f64::NAN,
                norm_drift: f64::NAN,
                energy_drift: f64::NAN,
                passed: false,
                error: Some(err.to_string()),
            })
        })
        .collect();
    let passed = !entries.is_empty() && entries.iter().all(|e| e.passed);
    CrossValidationReport {
        hash,
        tolerance: config.tolerance,
        entries,
        refused: None,
        passed,
    }
}
