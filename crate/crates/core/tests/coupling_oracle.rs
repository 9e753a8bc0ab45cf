use std::f64::consts::PI;

use proptest::prelude::*;
use vibfano::coupling::{quadrature_matrix, DistanceLaw, QuadratureMode};
use vibfano::{CouplingTensors, Monomer, ScatteringProblem};

fn problem(theta0: f64, lambda: f64, size: usize) -> ScatteringProblem {
    let mut p = ScatteringProblem::mobile_alpha(0.05);
    p.n_vib = size;
    p.geometry.theta0 = theta0;
    let osc = &mut p.oscillators[0];
    osc.mass = 1.0 / (2.0 * osc.omega * lambda * lambda);
    p
}

fn worst_gap(p: &ScatteringProblem, size: usize) -> f64 {
    let tensors = CouplingTensors::build(p).unwrap();
    let mut worst: f64 = 0.0;
    let mut compare = |law: DistanceLaw, analytic: &nalgebra::DMatrix<f64>| {
        let q = quadrature_matrix(&law, size, p.lambda(), QuadratureMode::Linearized).unwrap();
        worst = worst.max((analytic - q).amax() / analytic.amax());
    };
    for a in Monomer::ALL {
        for b in Monomer::ALL {
            if a != b {
                compare(DistanceLaw::ring_pair(p, a, b), tensors.f(a, b));
            }
        }
    }
    compare(DistanceLaw::chain_alpha(p), &tensors.g);
    worst
}

#[test]
fn closed_form_matches_linearized_quadrature() {
    for theta0 in [0.0, PI / 6.0, -0.4] {
        let gap = worst_gap(&problem(theta0, 0.1, 20), 20);
        assert!(gap < 1e-10, "theta0 = {theta0}: gap {gap:e}");
    }
}

#[test]
fn nonlinear_correction_is_second_order() {
    let err = |lambda: f64| {
        let p = problem(PI / 6.0, lambda, 12);
        let law = DistanceLaw::chain_alpha(&p);
        let exact = quadrature_matrix(&law, 12, lambda, QuadratureMode::Exact).unwrap();
        let lin = quadrature_matrix(&law, 12, lambda, QuadratureMode::Linearized).unwrap();
        (exact - lin).amax()
    };
    let ratio = err(0.02) / err(0.01);
    assert!((ratio - 4.0).abs() < 0.8, "ratio {ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn oracle_holds_across_geometries(theta0 in -1.0f64..1.0, lambda in 0.01f64..0.2, d_extra in 0.3f64..2.0) {
        let mut p = problem(theta0, lambda, 8);
        p.geometry.d = p.geometry.radius + d_extra;
        prop_assert!(worst_gap(&p, 8) < 1e-10);
    }
}
