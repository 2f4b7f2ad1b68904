//! Empirical stability checks: perturb a relative equilibrium, integrate, and
//! watch the distance to the `G_μ`-orbit and the certified Liapunov function.

use std::ops::ControlFlow;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, DriftReport, DriftTracker, Integrator, IntegratorRegistry};
use crate::emc::{EmcCertificate, LiapunovFunction, Verdict};
use crate::error::{ensure_len, EmcError, Result};
use crate::lie::{AlgebraElement, DualElement, GroupElement, DEFAULT_TOL_NULL};
use crate::orbit::OrbitProjector;
use crate::phase::{PhaseSpaceSystem, Point};
use crate::releq::RelativeEquilibrium;

/// Distance from points to the orbit `G_μ·z_e`.
pub struct OrbitMetric<'a> {
    sys: &'a dyn PhaseSpaceSystem,
    z_e: Point,
    gmu: Vec<AlgebraElement>,
    discrete: Vec<GroupElement>,
    xi_coords: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct OrbitDistance {
    pub distance: f64,
    /// The optimizer did not certify a local minimum; `distance` is then an
    /// upper bound.
    pub degraded: bool,
    pub coords: DVector<f64>,
}

impl<'a> OrbitMetric<'a> {
    pub fn new(sys: &'a dyn PhaseSpaceSystem, re: &RelativeEquilibrium) -> Result<Self> {
        let group = sys.group();
        ensure_len(sys.dim(), re.z_e.len())?;
        let gmu = group.momentum_isotropy_algebra(&re.mu, DEFAULT_TOL_NULL)?;
        let mu_tol = 1e-9 * (1.0 + re.mu.0.norm());
        let mut discrete = Vec::new();
        for g in group.discrete_samples() {
            if (group.coadjoint_action(g, &re.mu)?.0 - &re.mu.0).norm() <= mu_tol {
                discrete.push(g.clone());
            }
        }
        let xi_coords = DVector::from_iterator(gmu.len(), gmu.iter().map(|b| group.inner(b, &re.xi)));
        Ok(Self {
            sys,
            z_e: re.z_e.clone(),
            gmu,
            discrete,
            xi_coords,
        })
    }

    pub fn isotropy_basis(&self) -> &[AlgebraElement] {
        &self.gmu
    }

    /// Nearest-point distance, seeded at the identity, at `exp(tξ)` when `t`
    /// is given, and at an optional warm start.
    pub fn distance(&self, z: &Point, t: Option<f64>, warm_start: Option<&DVector<f64>>) -> OrbitDistance {
        let projector = OrbitProjector::new(self.sys, &self.z_e, &self.gmu).with_discrete(self.discrete.clone());
        let mut seeds = vec![DVector::zeros(self.gmu.len())];
        if let Some(t) = t {
            seeds.push(&self.xi_coords * t);
        }
        if let Some(w) = warm_start {
            seeds.push(w.clone());
        }
        let p = projector.project(z, &seeds);
        OrbitDistance {
            distance: p.distance,
            degraded: !p.converged,
            coords: p.coords,
        }
    }
}

/// `min_{g ∈ G_μ} ‖g·z_e − z‖`.
pub fn orbit_distance(sys: &dyn PhaseSpaceSystem, z: &Point, re: &RelativeEquilibrium) -> Result<OrbitDistance> {
    ensure_len(sys.dim(), z.len())?;
    Ok(OrbitMetric::new(sys, re)?.distance(z, None, None))
}

/// Conserved-quantity bound on `f` along the trajectory from `z0`:
/// `|ΔH| + ‖ΔJ‖·‖ξ‖ + |<λ, ΔC>| + σ|f₂(z0)|`, differences taken from `z_e`.
pub fn ls3_bound(
    sys: &dyn PhaseSpaceSystem,
    re: &RelativeEquilibrium,
    cert: &EmcCertificate,
    z0: &Point,
) -> Result<f64> {
    ensure_len(sys.dim(), z0.len())?;
    ensure_len(sys.casimir_dim(), cert.lambda.len())?;
    ensure_len(sys.group().dim(), cert.xi_used.len())?;
    Ok(Ls3Terms::new(sys, re, cert).bound(z0))
}

struct Ls3Terms<'a> {
    sys: &'a dyn PhaseSpaceSystem,
    h_e: f64,
    mu: DualElement,
    c_e: DVector<f64>,
    xi_norm: f64,
    lambda: DVector<f64>,
    sigma: f64,
}

impl<'a> Ls3Terms<'a> {
    fn new(sys: &'a dyn PhaseSpaceSystem, re: &RelativeEquilibrium, cert: &EmcCertificate) -> Self {
        let group = sys.group();
        Self {
            sys,
            h_e: sys.hamiltonian(&re.z_e),
            mu: re.mu.clone(),
            c_e: sys.casimirs(&re.z_e),
            xi_norm: group.norm(&AlgebraElement::from_slice(&cert.xi_used)),
            lambda: DVector::from_column_slice(&cert.lambda),
            sigma: cert.sigma.unwrap_or(0.0),
        }
    }

    fn f2(&self, z: &Point) -> f64 {
        let dj = DualElement(self.sys.momentum(z) - &self.mu.0);
        let dc = self.sys.casimirs(z) - &self.c_e;
        let v = self.sys.casimir_inner_product();
        self.sys.group().dual_norm(&dj).powi(2) + dc.dot(&(v * &dc))
    }

    fn bound(&self, z: &Point) -> f64 {
        let dh = (self.sys.hamiltonian(z) - self.h_e).abs();
        let dj = self
            .sys
            .group()
            .dual_norm(&DualElement(self.sys.momentum(z) - &self.mu.0));
        let dc = self.lambda.dot(&(self.sys.casimirs(z) - &self.c_e)).abs();
        dh + dj * self.xi_norm + dc + self.sigma * self.f2(z).abs()
    }

    /// Drift of the bound's ingredients, weighted as they enter the bound.
    fn weighted_drift(&self, drift: &DriftReport, f2_drift: f64) -> f64 {
        drift.hamiltonian + drift.momentum * self.xi_norm + drift.casimirs * self.lambda.norm() + self.sigma * f2_drift
    }
}

/// Absolute floor on the LS3 slack, covering roundoff in `f` itself.
pub const LS3_SLACK_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentOptions {
    pub deltas: Vec<f64>,
    pub samples_per_delta: usize,
    pub t_final: f64,
    pub step: f64,
    pub integrator: String,
    pub escape_radius: f64,
    /// Orbit distance and `f` are evaluated every `monitor_stride` steps.
    pub monitor_stride: usize,
    pub seed: u64,
    /// Keep the monitored time series of every sample.
    pub record_series: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            deltas: vec![1e-4, 1e-3, 1e-2],
            samples_per_delta: 8,
            t_final: 100.0,
            step: 1e-3,
            integrator: dynamics::DEFAULT_INTEGRATOR.to_string(),
            escape_radius: 0.5,
            monitor_stride: 10,
            seed: 0,
            record_series: false,
        }
    }
}

impl ExperimentOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: String| {
            Err(EmcError::InvalidParameter {
                name: name.to_string(),
                reason,
            })
        };
        if self.deltas.is_empty() {
            return bad("deltas", "at least one perturbation size is required".into());
        }
        if let Some(d) = self.deltas.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return bad("deltas", format!("must be non-negative and finite, got {d}"));
        }
        if self.samples_per_delta == 0 {
            return bad("samples_per_delta", "must be at least 1".into());
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return bad("t_final", format!("must be non-negative, got {}", self.t_final));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step", format!("must be positive, got {}", self.step));
        }
        if !(self.escape_radius > 0.0) {
            return bad("escape_radius", format!("must be positive, got {}", self.escape_radius));
        }
        if self.monitor_stride == 0 {
            return bad("monitor_stride", "must be at least 1".into());
        }
        IntegratorRegistry::builtin().get(&self.integrator)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmpiricalVerdict {
    ConsistentWithStable,
    EscapeObserved,
    Inconclusive,
}

impl EmpiricalVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            EmpiricalVerdict::ConsistentWithStable => "consistent_with_stable",
            EmpiricalVerdict::EscapeObserved => "escape_observed",
            EmpiricalVerdict::Inconclusive => "inconclusive",
        }
    }
}

impl std::fmt::Display for EmpiricalVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub orbit_distance: f64,
    pub f: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub delta: f64,
    pub sample: usize,
    pub z0: Vec<f64>,
    pub t_reached: f64,
    pub max_orbit_distance: f64,
    pub escaped: bool,
    pub degraded_distance: bool,
    /// `z0` lies in the tube and the certificate carries a Liapunov function.
    pub monitored: bool,
    pub left_tube: bool,
    pub max_f: Option<f64>,
    pub ls3_bound: Option<f64>,
    pub ls3_slack: Option<f64>,
    pub ls3_violations: usize,
    pub max_ls3_excess: Option<f64>,
    pub drift: DriftReport,
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series: Option<Vec<SeriesPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub delta: f64,
    pub samples: usize,
    pub max_orbit_distance: f64,
    pub max_f: Option<f64>,
    pub escapes: usize,
    pub ls3_checked: usize,
    pub ls3_violations: usize,
    pub failures: usize,
    pub max_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityExperimentReport {
    pub schema_version: u32,
    pub system: String,
    pub z_e: Vec<f64>,
    pub certificate_verdict: Verdict,
    pub options: ExperimentOptions,
    pub verdict: EmpiricalVerdict,
    pub ls3_violations: usize,
    pub per_delta: Vec<DeltaSummary>,
    pub samples: Vec<SampleResult>,
}

fn sample_seed(base: u64, delta_index: usize, sample: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((delta_index as u64) << 32)
        .wrapping_add(sample as u64)
}

fn unit_direction(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let u = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let norm: f64 = u.norm();
        if norm > 1e-12 {
            return u / norm;
        }
    }
}

struct SampleContext<'a> {
    sys: &'a dyn PhaseSpaceSystem,
    re: &'a RelativeEquilibrium,
    metric: OrbitMetric<'a>,
    liapunov: Option<LiapunovFunction<'a>>,
    terms: Ls3Terms<'a>,
    integrator: &'a dyn Integrator,
    opts: &'a ExperimentOptions,
}

impl SampleContext<'_> {
    fn run(&self, delta: f64, delta_index: usize, sample: usize) -> SampleResult {
        let n = self.sys.dim();
        let z0 = &self.re.z_e + unit_direction(n, sample_seed(self.opts.seed, delta_index, sample)) * delta;
        let mut out = SampleResult {
            delta,
            sample,
            z0: z0.iter().copied().collect(),
            t_reached: 0.0,
            max_orbit_distance: 0.0,
            escaped: false,
            degraded_distance: false,
            monitored: false,
            left_tube: false,
            max_f: None,
            ls3_bound: None,
            ls3_slack: None,
            ls3_violations: 0,
            max_ls3_excess: None,
            drift: DriftReport::default(),
            error: None,
            series: self.opts.record_series.then(Vec::new),
        };

        let mut lf = self.liapunov.as_ref();
        let bound = lf.map(|_| self.terms.bound(&z0));
        if let Some(l) = lf {
            if self.metric.distance(&z0, Some(0.0), None).distance > l.tube_radius() {
                lf = None;
            }
        }
        out.monitored = lf.is_some();
        out.ls3_bound = if out.monitored { bound } else { None };

        let mut tracker = DriftTracker::new(self.sys, &z0);
        let f2_0 = self.terms.f2(&z0);
        let mut f2_drift: f64 = 0.0;
        let mut warm: Option<DVector<f64>> = None;
        // (t, f) at each monitored step; compared against the bound once the
        // drift over the whole run is known.
        let mut f_values: Vec<f64> = Vec::new();
        let n_steps = (self.opts.t_final / self.opts.step).ceil() as usize;
        let stride = self.opts.monitor_stride;

        let result = dynamics::integrate_with(
            self.sys,
            self.integrator,
            &z0,
            self.opts.t_final,
            self.opts.step,
            |k, t, z| {
                tracker.observe(z);
                if k % stride != 0 && k != n_steps {
                    return ControlFlow::Continue(());
                }
                out.t_reached = t;
                let d = self.metric.distance(z, Some(t), warm.as_ref());
                out.degraded_distance |= d.degraded;
                out.max_orbit_distance = out.max_orbit_distance.max(d.distance);
                warm = Some(d.coords.clone());
                let mut f_now = None;
                if let (Some(l), false) = (lf, out.left_tube) {
                    f2_drift = f2_drift.max((self.terms.f2(z) - f2_0).abs());
                    match l.eval(z, warm.as_ref()) {
                        Ok(v) => {
                            f_values.push(v.f);
                            out.max_f = Some(out.max_f.map_or(v.f, |m: f64| m.max(v.f)));
                            f_now = Some(v.f);
                        }
                        Err(_) => out.left_tube = true,
                    }
                }
                if let Some(series) = out.series.as_mut() {
                    series.push(SeriesPoint {
                        t,
                        orbit_distance: d.distance,
                        f: f_now,
                    });
                }
                if d.distance > self.opts.escape_radius {
                    out.escaped = true;
                    return ControlFlow::Break(());
                }
                ControlFlow::Continue(())
            },
        );
        if let Err(e) = result {
            out.error = Some(e.to_string());
            if matches!(e, EmcError::BlowUp { .. }) {
                out.escaped = true;
            }
        }
        out.drift = tracker.report;

        if let (true, Some(bound)) = (out.monitored, out.ls3_bound) {
            let slack = 10.0 * self.terms.weighted_drift(&out.drift, f2_drift) + LS3_SLACK_FLOOR;
            out.ls3_slack = Some(slack);
            let mut excess = f64::NEG_INFINITY;
            for f in &f_values {
                excess = excess.max(f - bound);
                if *f > bound + slack {
                    out.ls3_violations += 1;
                }
            }
            if !f_values.is_empty() {
                out.max_ls3_excess = Some(excess);
            }
        }
        out
    }
}

/// Perturbation experiment around `re` with monitoring of the certificate's
/// Liapunov function where one is available.
pub fn stability_experiment(
    sys: &dyn PhaseSpaceSystem,
    re: &RelativeEquilibrium,
    cert: &EmcCertificate,
    opts: &ExperimentOptions,
) -> Result<StabilityExperimentReport> {
    opts.validate()?;
    ensure_len(sys.dim(), re.z_e.len())?;
    let liapunov = match (cert.sign_branch, cert.sigma) {
        (Some(_), Some(_)) => Some(LiapunovFunction::from_certificate(sys, re, cert)?),
        _ => None,
    };
    let registry = IntegratorRegistry::builtin();
    let ctx = SampleContext {
        integrator: registry.get(&opts.integrator)?,
        sys,
        re,
        metric: OrbitMetric::new(sys, re)?,
        liapunov,
        terms: Ls3Terms::new(sys, re, cert),
        opts,
    };
    let jobs: Vec<(usize, f64, usize)> = opts
        .deltas
        .iter()
        .enumerate()
        .flat_map(|(i, d)| (0..opts.samples_per_delta).map(move |s| (i, *d, s)))
        .collect();
    let samples: Vec<SampleResult> = jobs.par_iter().map(|(i, d, s)| ctx.run(*d, *i, *s)).collect();

    let per_delta: Vec<DeltaSummary> = opts
        .deltas
        .iter()
        .map(|d| {
            let group: Vec<&SampleResult> = samples.iter().filter(|s| s.delta == *d).collect();
            DeltaSummary {
                delta: *d,
                samples: group.len(),
                max_orbit_distance: group.iter().map(|s| s.max_orbit_distance).fold(0.0, f64::max),
                max_f: group.iter().filter_map(|s| s.max_f).reduce(f64::max),
                escapes: group.iter().filter(|s| s.escaped).count(),
                ls3_checked: group.iter().filter(|s| s.monitored).count(),
                ls3_violations: group.iter().map(|s| s.ls3_violations).sum(),
                failures: group.iter().filter(|s| s.error.is_some()).count(),
                max_drift: group.iter().map(|s| s.drift.max()).fold(0.0, f64::max),
            }
        })
        .collect();

    let ls3_violations = samples.iter().map(|s| s.ls3_violations).sum();
    let escaped = samples.iter().any(|s| s.escaped && s.delta <= 1e-2);
    let failed = samples.iter().any(|s| s.error.is_some());
    let verdict = if escaped {
        EmpiricalVerdict::EscapeObserved
    } else if failed || ls3_violations > 0 {
        EmpiricalVerdict::Inconclusive
    } else {
        EmpiricalVerdict::ConsistentWithStable
    };
    Ok(StabilityExperimentReport {
        schema_version: crate::SCHEMA_VERSION,
        system: sys.name().to_string(),
        z_e: re.z_e.iter().copied().collect(),
        certificate_verdict: cert.verdict,
        options: opts.clone(),
        verdict,
        ls3_violations,
        per_delta,
        samples,
    })
}
