use super::*;
use crate::systems::{LagrangeTop, RigidBody, SymmetricOscillator};
use nalgebra::DVector;

fn rigid_re(sys: &RigidBody, axis: usize) -> RelativeEquilibrium {
    let mut z = DVector::zeros(3);
    z[axis] = 1.0;
    RelativeEquilibrium::new(sys, z, AlgebraElement::from_slice(&[]), 1e-12).unwrap()
}

fn top_re(top: &LagrangeTop, omega: f64) -> RelativeEquilibrium {
    let z = DVector::from_vec(vec![0.0, 0.0, omega, 0.0, 0.0, 1.0]);
    RelativeEquilibrium::new(top, z, AlgebraElement::from_slice(&[0.0]), 1e-10).unwrap()
}

#[test]
fn rigid_body_branches() {
    let sys = RigidBody::new([1.0, 2.0, 3.0]);
    let cases = [
        (2, Some(SignBranch::Positive), vec![1.0 / 6.0, 2.0 / 3.0]),
        (0, Some(SignBranch::Negative), vec![-2.0 / 3.0, -0.5]),
        (1, None, vec![-1.0 / 6.0, 0.5]),
    ];
    for (axis, branch, spectrum) in cases {
        let cert = certify(&EmcProblem::new(&sys, rigid_re(&sys, axis))).unwrap();
        assert_eq!(cert.sign_branch, branch, "axis {axis}");
        assert_eq!(cert.k_dim, 2);
        assert_eq!(cert.lambda_nullspace_dim, 0);
        for (a, b) in cert.spectrum.iter().zip(&spectrum) {
            assert!((a - b).abs() < 1e-9, "axis {axis}: {:?}", cert.spectrum);
        }
        // λ = −1/(2 I_k)
        assert!((cert.lambda[0] + 1.0 / (2.0 * (axis + 1) as f64)).abs() < 1e-12);
        if branch.is_some() {
            assert_eq!(cert.verdict, Verdict::CertifiedStable);
            assert!(cert.sigma.unwrap() <= 64.0);
        } else {
            assert_eq!(cert.verdict, Verdict::InconclusiveIndefinite);
            assert!(cert.sigma.is_none());
        }
    }
}

#[test]
fn isotropic_body_has_degenerate_kernel() {
    let sys = RigidBody::new([1.0, 1.0, 1.0]);
    let cert = certify(&EmcProblem::new(&sys, rigid_re(&sys, 2))).unwrap();
    assert_eq!(cert.verdict, Verdict::InconclusiveKernelMismatch);
    assert_eq!(cert.zero_cluster_dim, 2);
    assert_eq!(cert.orbit_dim_in_k, 0);
}

#[test]
fn sleeping_top_certified_above_threshold() {
    let top = LagrangeTop::new(1.0, 1.0, 1.0);
    let cert = certify(&EmcProblem::new(&top, top_re(&top, 2.5))).unwrap();
    assert_eq!(cert.verdict, Verdict::CertifiedStable, "{cert:?}");
    assert_eq!(cert.k_dim, 4);
    assert_eq!(cert.orbit_dim_in_k, 0);
    assert_eq!(cert.xi_isotropy_dim, 1);
    // λ₂ = ξ − ω must land inside the positive window (−2, −0.5).
    let l2 = cert.xi_used[0] - 2.5;
    assert!(l2 > -2.0 && l2 < -0.5, "ξ = {:?}", cert.xi_used);
    assert!((cert.lambda[1] - l2).abs() < 1e-9);
}

#[test]
fn sleeping_top_below_threshold_is_inconclusive() {
    let top = LagrangeTop::new(1.0, 1.0, 1.0);
    let cert = certify(&EmcProblem::new(&top, top_re(&top, 1.5))).unwrap();
    assert!(!cert.verdict.is_certified(), "{cert:?}");
    assert!(cert.sigma.is_none());
}

#[test]
fn oscillator_circular_orbit() {
    let sys = SymmetricOscillator::new();
    let z = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let re = RelativeEquilibrium::new(&sys, z, AlgebraElement::from_slice(&[0.0, 0.0, 1.0]), 1e-10).unwrap();
    let cert = certify(&EmcProblem::new(&sys, re)).unwrap();
    assert_eq!(cert.verdict, Verdict::CertifiedStable, "{cert:?}");
    assert_eq!(cert.k_dim, 3);
    assert_eq!(cert.orbit_dim_in_k, 1);
    assert_eq!(cert.zero_cluster_dim, 1);
    assert!(cert.spectrum[0].abs() < 1e-9);
    assert!((cert.spectrum[1] - 2.0).abs() < 1e-9 && (cert.spectrum[2] - 2.0).abs() < 1e-9);
}

#[test]
fn spectral_margin_ignores_kernel() {
    assert_eq!(spectral_margin(&[0.0, 1.0, 2.0], 1), 1.0);
    assert_eq!(spectral_margin(&[-2.0, -1.0, 1e-12], 1), 1.0);
    assert_eq!(spectral_margin(&[-1.0, 2.0], 0), -1.0);
    assert!(spectral_margin(&[0.0], 1).is_infinite());
}

#[test]
fn lambda_solve_is_exact_for_rigid_body() {
    let sys = RigidBody::new([1.0, 2.0, 3.0]);
    let z = DVector::from_vec(vec![0.0, 0.0, 2.0]);
    let sol = solve_lambda(&sys, &z, &AlgebraElement::from_slice(&[]), &Tolerances::default()).unwrap();
    assert!(sol.em1_ok);
    assert!((sol.lambda[0] + 1.0 / 6.0).abs() < 1e-14);
}

#[test]
fn sigma_doubles_f2_term() {
    let sys = RigidBody::new([1.0, 2.0, 3.0]);
    let re = rigid_re(&sys, 2);
    let lambda = DVector::from_vec(vec![-1.0 / 6.0]);
    let xi = AlgebraElement::from_slice(&[]);
    let sel = select_sigma(
        &sys,
        &re,
        &lambda,
        &xi,
        SignBranch::Positive,
        1e-9,
        1e6,
        &Tolerances::default(),
    )
    .unwrap();
    assert_eq!(sel.sigma, Some(1.0));
    assert!((sel.slice_spectrum_min - 1.0 / 6.0).abs() < 1e-12);
}

#[test]
fn invalid_options_rejected() {
    let sys = RigidBody::new([1.0, 2.0, 3.0]);
    let mut opts = CertifyOptions::default();
    opts.tolerances.zero_rel = 0.0;
    assert!(certify(&EmcProblem::new(&sys, rigid_re(&sys, 2)).with_options(opts)).is_err());
}

#[test]
fn certificate_serializes_expected_names() {
    let sys = RigidBody::new([1.0, 2.0, 3.0]);
    let cert = certify(&EmcProblem::new(&sys, rigid_re(&sys, 1))).unwrap();
    let v = serde_json::to_value(&cert).unwrap();
    assert_eq!(v["verdict"], "Inconclusive_Indefinite");
    assert!(v["sigma"].is_null());
    assert!(v.get("K_dim").is_some() && v.get("orbit_dim_in_K").is_some());
    let back: EmcCertificate = serde_json::from_value(v).unwrap();
    assert_eq!(back, cert);
}
