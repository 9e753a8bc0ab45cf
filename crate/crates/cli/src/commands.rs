use anyhow::Result;
use serde::Serialize;

use vibfano::qsm::QsmSolver;
use vibfano::spectra::{
    channel_decomposition, cross_validate, locate_vibrational_resonance, static_average, sweep_with,
    CrossValidationConfig, FeatureDescriptor, RowFlag,
};
use vibfano::tdse::{
    initial_state, propagate, transmission_with_threshold, DynamicsTransmission, Hamiltonian, PropagationConfig,
    Sample, Trajectory, WavepacketSpec,
};
use vibfano::tmm::{effective_potential, transmission_static, StaticCU};
use vibfano::{CouplingTensors, ScatteringProblem};

use crate::config::RunConfig;
use crate::output::{num, Csv, Writer};

/// What a subcommand hands back to `main`.
pub struct Outcome {
    /// A tolerance check inside the run failed.
    pub tolerance_failed: bool,
    pub message: String,
}

fn ok(message: String) -> Outcome {
    Outcome {
        tolerance_failed: false,
        message,
    }
}

fn flag_text(flags: &[RowFlag]) -> String {
    let parts: Vec<&str> = flags
        .iter()
        .map(|f| match f {
            RowFlag::Nudged => "nudged",
            RowFlag::IllConditioned => "ill_conditioned",
            RowFlag::Conservation => "conservation",
            RowFlag::Failed(_) => "failed",
        })
        .collect();
    parts.join("|")
}

pub fn spectrum(config: &RunConfig) -> Result<Outcome> {
    let problem = config.problem()?;
    let grid = config.sweep.grid(&problem)?;
    let solver = QsmSolver::new(problem.clone())?;
    let table = sweep_with(&solver, &grid)?;
    let n = solver.tensors.n_vib;

    let mut columns: Vec<String> = ["E", "T_total", "R_total", "defect", "condition", "flags"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    columns.extend((0..n).map(|j| format!("T_{j}")));
    let mut csv = Csv::new(columns);
    for row in &table.rows {
        let mut cells = vec![
            num(row.e_in),
            num(row.t_total),
            num(row.r_total),
            num(row.defect),
            num(row.condition),
            flag_text(&row.flags),
        ];
        cells.extend(row.t_j.iter().map(|t| num(*t)));
        csv.push(cells);
    }

    #[derive(Serialize)]
    struct Summary {
        points: usize,
        worst_defect: f64,
        failed_rows: usize,
        flagged_rows: usize,
        max_inelastic_share: f64,
        feature: Result<FeatureDescriptor, String>,
        errors: Vec<(f64, String)>,
    }
    let decomposition = channel_decomposition(&table);
    let feature = if problem.mobile().is_some() {
        locate_vibrational_resonance(&table, problem.hbar_omega()).map_err(|e| e.to_string())
    } else {
        Err("no mobile monomer".into())
    };
    let errors = table
        .rows
        .iter()
        .flat_map(|r| {
            r.flags.iter().filter_map(move |f| match f {
                RowFlag::Failed(msg) => Some((r.e_in, msg.clone())),
                _ => None,
            })
        })
        .collect();
    let summary = Summary {
        points: table.rows.len(),
        worst_defect: table.worst_defect(),
        failed_rows: table.failed_rows(),
        flagged_rows: table.rows.iter().filter(|r| !r.flags.is_empty()).count(),
        max_inelastic_share: decomposition
            .inelastic_share
            .iter()
            .copied()
            .filter(|x| x.is_finite())
            .fold(0.0, f64::max),
        feature,
        errors,
    };
    let mut w = Writer::new(config, "spectrum", table.meta.hash.clone());
    w.csv("spectrum.csv", &csv)?;
    w.json("spectrum.json", &summary)?;
    Ok(ok(format!(
        "{} energies, worst flux defect {:.2e}, {} failed",
        summary.points, summary.worst_defect, summary.failed_rows
    )))
}

pub fn tmm(config: &RunConfig) -> Result<Outcome> {
    let problem = config.problem()?;
    let grid = config.sweep.grid(&problem)?;
    let cu = StaticCU::from_problem(&problem)?;
    let mut csv = Csv::new(["E", "T", "V_eff"]);
    let mut t_max: f64 = 0.0;
    for &e in &grid {
        let t = transmission_static(e, &cu, problem.hopping)?;
        let v = effective_potential(e, &cu).unwrap_or(f64::INFINITY);
        t_max = t_max.max(t);
        csv.push(vec![num(e), num(t), num(v)]);
    }
    #[derive(Serialize)]
    struct Summary {
        points: usize,
        max_transmission: f64,
        h3_eigenvalues: Vec<f64>,
    }
    let mut eig: Vec<f64> = cu.h3.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let summary = Summary {
        points: grid.len(),
        max_transmission: t_max,
        h3_eigenvalues: eig,
    };
    let mut w = Writer::new(config, "tmm", problem.content_hash());
    w.csv("tmm.csv", &csv)?;
    w.json("tmm.json", &summary)?;
    Ok(ok(format!("{} energies, max T {:.6}", grid.len(), t_max)))
}

pub fn average(config: &RunConfig) -> Result<Outcome> {
    let problem = config.problem()?;
    let grid = config.sweep.grid(&problem)?;
    let solver = QsmSolver::new(problem.clone())?;
    let table = sweep_with(&solver, &grid)?;
    let cu = StaticCU::from_problem(&problem)?;
    let mut csv = Csv::new(["E", "T_average", "T_equilibrium", "T_QSM"]);
    let mut worst_gap: f64 = 0.0;
    for (row, &e) in table.rows.iter().zip(&grid) {
        let avg = static_average(&problem, e, config.average.nodes)?;
        let eq = transmission_static(e, &cu, problem.hopping)?;
        worst_gap = worst_gap.max((row.t_total - avg).abs());
        csv.push(vec![num(e), num(avg), num(eq), num(row.t_total)]);
    }
    #[derive(Serialize)]
    struct Summary {
        points: usize,
        lambda: f64,
        max_abs_qsm_minus_average: f64,
    }
    let summary = Summary {
        points: grid.len(),
        lambda: problem.lambda(),
        max_abs_qsm_minus_average: worst_gap,
    };
    let mut w = Writer::new(config, "average", problem.content_hash());
    w.csv("average.csv", &csv)?;
    w.json("average.json", &summary)?;
    Ok(ok(format!("{} energies, max |T_QSM - T_average| {:.4}", grid.len(), worst_gap)))
}

pub fn crossval(config: &RunConfig) -> Result<Outcome> {
    let problem = config.problem()?;
    let c = &config.crossval;
    let cv = CrossValidationConfig {
        energies: c.energies.clone(),
        tolerance: c.tolerance,
        sigma: config.tdse.sigma,
        n0: config.tdse.n0,
        dt: config.tdse.dt,
        n_split: config.tdse.n_split,
        empty: c.empty,
        level_cutoff: c.level_cutoff,
        expected_hash: c.expected_hash.clone(),
    };
    let report = cross_validate(&problem, &cv);
    let mut csv = Csv::new([
        "E",
        "T_TDSE",
        "T_QSM",
        "T_QSM_packet",
        "deviation",
        "channel_deviation",
        "energy_spread",
        "levels",
        "residual",
        "norm_drift",
        "energy_drift",
        "passed",
    ]);
    for e in &report.entries {
        csv.push(vec![
            num(e.e_in),
            num(e.t_tdse),
            num(e.t_qsm),
            num(e.t_qsm_packet),
            num(e.deviation),
            num(e.channel_deviation),
            num(e.energy_spread),
            e.levels.to_string(),
            num(e.residual),
            num(e.norm_drift),
            num(e.energy_drift),
            e.passed.to_string(),
        ]);
    }
    let mut w = Writer::new(config, "crossval", report.hash.clone());
    w.csv("crossval.csv", &csv)?;
    w.json("crossval.json", &report)?;
    let message = match &report.refused {
        Some(reason) => format!("comparison refused: {reason}"),
        None => format!(
            "{} of {} energies within {}",
            report.entries.iter().filter(|e| e.passed).count(),
            report.entries.len(),
            report.tolerance
        ),
    };
    Ok(Outcome {
        tolerance_failed: !report.passed,
        message,
    })
}

fn series_csv(samples: &[Sample]) -> Csv {
    let mut csv = Csv::new(["t", "norm", "energy", "P_U", "S"]);
    for s in samples {
        csv.push(vec![num(s.t), num(s.norm), num(s.energy), num(s.cu_population), num(s.entropy)]);
    }
    csv
}

struct Prepared {
    problem: ScatteringProblem,
    spec: WavepacketSpec,
    hamiltonian: Hamiltonian,
    levels: usize,
}

fn prepare(config: &RunConfig) -> Result<Prepared> {
    let problem = config.problem()?;
    let spec = config.tdse.spec(&problem)?;
    let levels = config.tdse.levels(&problem);
    let tensors = CouplingTensors::build(&problem)?;
    let hamiltonian = Hamiltonian::new(&problem, &tensors, levels)?;
    Ok(Prepared {
        problem,
        spec,
        hamiltonian,
        levels,
    })
}

fn run(p: &Prepared, config: PropagationConfig) -> Result<Trajectory> {
    let state = initial_state(&p.spec, p.problem.j_in, p.problem.n_sites, p.levels)?;
    Ok(propagate(state, &p.hamiltonian, &config)?)
}

pub fn tdse(config: &RunConfig) -> Result<Outcome> {
    let p = prepare(config)?;
    let t = &config.tdse;
    let speed = p.spec.group_speed(p.problem.hopping);
    let t_end = t
        .t_end
        .unwrap_or(4.0 * (p.spec.n0.unsigned_abs() as f64 + 10.0 * p.spec.sigma) / speed);
    let prop = PropagationConfig {
        empty: t.empty,
        ..PropagationConfig::for_packet(&p.spec, p.problem.hopping, t.dt, t_end)
    };
    let trajectory = run(&p, prop)?;
    let transmission = transmission_with_threshold(&trajectory.final_state, t.n_split, t.empty)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        levels: usize,
        final_time: f64,
        stopped_early: bool,
        norm_drift: f64,
        energy_drift: f64,
        transmission: &'a DynamicsTransmission,
    }
    let summary = Summary {
        levels: p.levels,
        final_time: trajectory.final_state.t,
        stopped_early: trajectory.stopped_early,
        norm_drift: trajectory.norm_drift,
        energy_drift: trajectory.energy_drift,
        transmission: &transmission,
    };
    let mut w = Writer::new(config, "tdse", p.problem.content_hash());
    w.csv("tdse.csv", &series_csv(&trajectory.samples))?;
    w.json("tdse.json", &summary)?;
    Ok(ok(format!(
        "T = {:.6}, R = {:.6} at t = {:.1}",
        transmission.t_total, transmission.r_total, trajectory.final_state.t
    )))
}

pub fn entropy(config: &RunConfig) -> Result<Outcome> {
    let p = prepare(config)?;
    let t = &config.tdse;
    let speed = p.spec.group_speed(p.problem.hopping);
    // Stop before the reflected packet can reach the left end of the chain.
    let room = p.spec.n0.unsigned_abs() as f64 + 0.5 * p.problem.n_sites as f64 - 10.0 * p.spec.sigma;
    let t_end = t.t_end.unwrap_or(0.9 * room / speed);
    let prop = PropagationConfig {
        early_stop: false,
        ..PropagationConfig::for_packet(&p.spec, p.problem.hopping, t.dt, t_end)
    };
    let trajectory = run(&p, prop)?;

    #[derive(Serialize)]
    struct Summary {
        levels: usize,
        final_time: f64,
        final_entropy: f64,
        max_entropy: f64,
        final_cu_population: f64,
        norm_drift: f64,
        energy_drift: f64,
    }
    let last = trajectory.samples.last().copied();
    let summary = Summary {
        levels: p.levels,
        final_time: trajectory.final_state.t,
        final_entropy: last.map_or(0.0, |s| s.entropy),
        max_entropy: trajectory.samples.iter().map(|s| s.entropy).fold(0.0, f64::max),
        final_cu_population: last.map_or(0.0, |s| s.cu_population),
        norm_drift: trajectory.norm_drift,
        energy_drift: trajectory.energy_drift,
    };
    let mut w = Writer::new(config, "entropy", p.problem.content_hash());
    w.csv("entropy.csv", &series_csv(&trajectory.samples))?;
    w.json("entropy.json", &summary)?;
    Ok(ok(format!(
        "S = {:.6} and P_U = {:.2e} at t = {:.1}",
        summary.final_entropy, summary.final_cu_population, summary.final_time
    )))
}
