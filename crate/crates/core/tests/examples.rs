use std::ops::ControlFlow;

use emc_core::dynamics::{self, ImplicitMidpoint, IntegratorRegistry, Rk4};
use emc_core::emc::{self, certify, EmcProblem, Verdict};
use emc_core::lie::AlgebraElement;
use emc_core::releq::{self, RelativeEquilibrium, SolverOptions};
use emc_core::systems::{instantiate_system, HarmonicS1, LagrangeTop, RigidBody, SymmetricOscillator, SystemRegistry};
use emc_core::verify::{self, EmpiricalVerdict, ExperimentOptions};
use emc_core::{EmcError, PhaseSpaceSystem};
use nalgebra::DVector;

fn p(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[test]
fn oscillator_full_period() {
    let sys = HarmonicS1::new();
    let (_, z) = dynamics::integrate_with(
        &sys,
        &Rk4,
        &p(&[1.0, 0.0]),
        2.0 * std::f64::consts::PI,
        1e-3,
        |_, _, _| ControlFlow::Continue(()),
    )
    .unwrap();
    assert!((z - p(&[1.0, 0.0])).norm() < 1e-9);
}

#[test]
fn rigid_body_drift_small() {
    let sys = RigidBody::new([1.0, 2.0, 3.0]);
    let traj = dynamics::integrate(&sys, &Rk4, &p(&[0.6, -0.5, 0.7]), 10.0, 1e-3, 1).unwrap();
    let drift = dynamics::conservation_drift(&sys, &traj).unwrap();
    assert!(drift.hamiltonian <= 1e-8 && drift.casimirs <= 1e-8, "{drift:?}");
}

#[test]
fn relative_equilibrium_flow_is_group_orbit() {
    let osc = SymmetricOscillator::new();
    let z = p(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let xi = AlgebraElement::from_slice(&[0.0, 0.0, 1.0]);
    let t = 3.0;
    let registry = IntegratorRegistry::builtin();
    for name in registry.names() {
        let (_, zt) = dynamics::integrate_with(&osc, registry.get(name).unwrap(), &z, t, 1e-3, |_, _, _| {
            ControlFlow::Continue(())
        })
        .unwrap();
        let expected = osc.act(&osc.group().exponential(&xi.scale(t)), &z);
        assert!((zt - expected).norm() < 1e-6, "{name}");
    }
}

#[test]
fn midpoint_is_second_order() {
    let sys = HarmonicS1::new();
    let end = |h: f64| {
        dynamics::integrate_with(
            &sys,
            &ImplicitMidpoint::default(),
            &p(&[1.0, 0.0]),
            2.0,
            h,
            |_, _, _| ControlFlow::Continue(()),
        )
        .unwrap()
        .1
    };
    let (a, b, c) = (end(0.1), end(0.05), end(0.025));
    let factor = (&a - &b).norm() / (&b - &c).norm();
    assert!((3.0..=5.0).contains(&factor), "{factor}");
}

#[test]
fn orbit_distance_examples() {
    let top = LagrangeTop::new(1.0, 1.0, 1.0);
    let re = RelativeEquilibrium::new(
        &top,
        p(&[0.0, 0.0, 2.5, 0.0, 0.0, 1.0]),
        AlgebraElement::from_slice(&[0.0]),
        1e-10,
    )
    .unwrap();
    assert_eq!(verify::orbit_distance(&top, &re.z_e, &re).unwrap().distance, 0.0);
    let z = &re.z_e + p(&[0.0, 0.0, 0.0, 0.1, 0.0, 0.0]);
    let d = verify::orbit_distance(&top, &z, &re).unwrap().distance;
    assert!(d > 0.0 && d <= 0.1 + 1e-12, "{d}");

    let osc = SymmetricOscillator::new();
    let re = RelativeEquilibrium::new(
        &osc,
        p(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
        AlgebraElement::from_slice(&[0.0, 0.0, 1.0]),
        1e-10,
    )
    .unwrap();
    let g = osc.group().exponential(&AlgebraElement::from_slice(&[0.0, 0.0, 2.2]));
    let d = verify::orbit_distance(&osc, &osc.act(&g, &re.z_e), &re).unwrap();
    assert!(d.distance <= 1e-8 && !d.degraded, "{d:?}");
}

#[test]
fn ls3_bound_examples() {
    let sys = RigidBody::new([1.0, 2.0, 3.0]);
    let re = RelativeEquilibrium::new(&sys, p(&[0.0, 0.0, 1.0]), AlgebraElement::from_slice(&[]), 1e-12).unwrap();
    let mut cert = certify(&EmcProblem::new(&sys, re.clone())).unwrap();
    assert_eq!(verify::ls3_bound(&sys, &re, &cert, &re.z_e).unwrap(), 0.0);
    let z = p(&[0.05, -0.02, 0.97]);
    let b1 = verify::ls3_bound(&sys, &re, &cert, &z).unwrap();
    let f = emc::liapunov_eval(&sys, &re, &cert, &z).unwrap();
    assert!(f.f <= b1 + 1e-15);
    let sigma = cert.sigma.unwrap();
    cert.sigma = Some(2.0 * sigma);
    let b2 = verify::ls3_bound(&sys, &re, &cert, &z).unwrap();
    assert!(((b2 - b1) - sigma * f.f2).abs() < 1e-15);
}

#[test]
fn zero_perturbation_is_consistent() {
    let sys = RigidBody::new([1.0, 2.0, 3.0]);
    let re = RelativeEquilibrium::new(&sys, p(&[0.0, 1.0, 0.0]), AlgebraElement::from_slice(&[]), 1e-12).unwrap();
    let cert = certify(&EmcProblem::new(&sys, re.clone())).unwrap();
    let opts = ExperimentOptions {
        deltas: vec![0.0],
        samples_per_delta: 2,
        t_final: 5.0,
        step: 1e-2,
        ..Default::default()
    };
    let rep = verify::stability_experiment(&sys, &re, &cert, &opts).unwrap();
    assert_eq!(rep.verdict, EmpiricalVerdict::ConsistentWithStable);
    assert!(rep.per_delta[0].max_orbit_distance <= 1e-12);
}

#[test]
fn experiment_is_reproducible_and_monitored() {
    let osc = SymmetricOscillator::new();
    let re = RelativeEquilibrium::new(
        &osc,
        p(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
        AlgebraElement::from_slice(&[0.0, 0.0, 1.0]),
        1e-10,
    )
    .unwrap();
    let cert = certify(&EmcProblem::new(&osc, re.clone())).unwrap();
    let opts = ExperimentOptions {
        deltas: vec![1e-3, 1e-2],
        samples_per_delta: 3,
        t_final: 10.0,
        step: 1e-2,
        record_series: true,
        ..Default::default()
    };
    let a = verify::stability_experiment(&osc, &re, &cert, &opts).unwrap();
    let b = verify::stability_experiment(&osc, &re, &cert, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.verdict, EmpiricalVerdict::ConsistentWithStable);
    assert_eq!(a.ls3_violations, 0);
    assert!(a
        .samples
        .iter()
        .all(|s| s.monitored && s.series.as_ref().is_some_and(|v| !v.is_empty())));
    assert!(a.per_delta[0].max_orbit_distance < 1e-2);
}

#[test]
fn sleeping_top_solver_flags_isotropy() {
    let top = LagrangeTop::new(1.0, 1.0, 1.0);
    let out = releq::find_relative_equilibrium(
        &top,
        &p(&[1e-4, -2e-4, 2.5, 3e-4, 1e-4, 1.0]),
        &AlgebraElement::from_slice(&[0.7]),
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(out.isotropy_nontrivial());
    assert_eq!(out.equilibrium.xi.coeffs()[0], 0.0);
}

#[test]
fn known_equilibria_are_relative_equilibria() {
    let registry = SystemRegistry::builtin();
    for factory in registry.entries() {
        let params = factory.resolve(&Default::default()).unwrap();
        let sys = factory.build(&params).unwrap();
        for known in factory.known_equilibria(&params) {
            let re = RelativeEquilibrium::new(sys.as_ref(), p(&known.z), AlgebraElement::from_slice(&known.xi), 1e-9);
            assert!(re.is_ok(), "{} / {}", factory.name(), known.name);
        }
    }
}

#[test]
fn unknown_system_lists_names() {
    let err = instantiate_system("double_pendulum", &Default::default())
        .err()
        .unwrap();
    assert!(matches!(err, EmcError::UnknownName { .. }));
    assert!(err.to_string().contains("lagrange_top"));
}

#[test]
fn sign_flip_changes_nothing_but_branch() {
    // The minor axis is certified through the negative branch.
    let sys = RigidBody::new([1.0, 2.0, 3.0]);
    let re = RelativeEquilibrium::new(&sys, p(&[-1.0, 0.0, 0.0]), AlgebraElement::from_slice(&[]), 1e-12).unwrap();
    let cert = certify(&EmcProblem::new(&sys, re)).unwrap();
    assert_eq!(cert.verdict, Verdict::CertifiedStable);
    assert_eq!(cert.sign_branch, Some(emc::SignBranch::Negative));
}
