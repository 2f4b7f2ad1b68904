use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::ArgMatches;
use emc_core::dynamics::{self, IntegratorRegistry, DEFAULT_INTEGRATOR};
use emc_core::emc::{certify, EmcCertificate, EmcProblem};
use emc_core::phase::check_structure;
use emc_core::releq::{self, RelativeEquilibrium};
use emc_core::systems::{ParamValues, SystemFactory, SystemRegistry};
use emc_core::verify::{stability_experiment, EmpiricalVerdict};
use emc_core::{AlgebraElement, PhaseSpaceSystem};
use nalgebra::DVector;
use serde::Serialize;

use crate::args::{count_flag, list_flag, param_flags, scalar_flag, u64_flag};
use crate::config::{read_json, CertificateDocument, ExperimentDocument, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 2;
pub const EXIT_STRUCTURAL: i32 = 3;

/// A system definition or certificate input that is structurally unusable.
#[derive(Debug)]
pub struct StructuralFailure(pub String);

impl std::fmt::Display for StructuralFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for StructuralFailure {}

/// Write `bytes` to a sibling temp file and rename it into place, so a
/// failed run never leaves a partial output behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(path, &text)
}

fn output_path(m: &ArgMatches, cfg: &RunConfig) -> Option<PathBuf> {
    m.get_one::<String>("output")
        .map(PathBuf::from)
        .or_else(|| cfg.output.json.clone())
}

/// Everything a system-level subcommand needs: merged config, resolved
/// parameters and the built system.
struct RunContext {
    cfg: RunConfig,
    factory_name: &'static str,
    params: ParamValues,
    sys: Arc<dyn PhaseSpaceSystem>,
}

fn load_config(m: &ArgMatches) -> Result<RunConfig> {
    match m.get_one::<String>("config") {
        Some(p) => RunConfig::load(Path::new(p)),
        None => Ok(RunConfig::default()),
    }
}

fn build_context(m: &ArgMatches, registry: &SystemRegistry, mut cfg: RunConfig) -> Result<RunContext> {
    if let Some(name) = m.get_one::<String>("system") {
        cfg.system = Some(name.clone());
    }
    let name = cfg
        .system
        .clone()
        .ok_or_else(|| anyhow!("no system given; pass SYSTEM or set `system` in the config"))?;
    let factory = registry.get(&name)?;
    let mut raw = cfg.param_values();
    raw.extend(param_flags(m, registry)?);
    let params = factory.resolve(&raw)?;
    let sys = factory.build(&params)?;
    cfg.set_params(&params);
    Ok(RunContext {
        cfg,
        factory_name: factory.name(),
        params,
        sys,
    })
}

fn apply_point_flags(m: &ArgMatches, cfg: &mut RunConfig) -> Result<()> {
    if let Some(at) = list_flag(m, "at")? {
        cfg.at = Some(at);
        cfg.known = None;
    }
    if let Some(known) = m.get_one::<String>("known") {
        cfg.known = Some(known.clone());
        cfg.at = None;
    }
    if m.try_get_one::<String>("xi").ok().flatten().is_some() {
        cfg.xi = list_flag(m, "xi")?;
    }
    if let Some(tol) = m.try_get_one::<String>("tol-re").ok().flatten() {
        cfg.solver.tol_re = tol.parse().map_err(|_| anyhow!("--tol-re: {tol:?} is not a number"))?;
    }
    Ok(())
}

fn known_point(factory: &dyn SystemFactory, params: &ParamValues, name: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let known = factory.known_equilibria(params);
    known
        .iter()
        .find(|k| k.name == name)
        .map(|k| (k.z.clone(), k.xi.clone()))
        .ok_or_else(|| {
            let names: Vec<_> = known.iter().map(|k| k.name.as_str()).collect();
            anyhow!(
                "unknown equilibrium {name:?} of {}; available: {}",
                factory.name(),
                names.join(", ")
            )
        })
}

fn check_dim(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        bail!("{what} has {got} component(s), the system needs {expected}");
    }
    Ok(())
}

/// The relative equilibrium named by `known`, or `at` with `xi` (fitted when absent).
fn relative_equilibrium(ctx: &RunContext, registry: &SystemRegistry) -> Result<RelativeEquilibrium> {
    let sys = ctx.sys.as_ref();
    let tol = ctx.cfg.solver.tol_re;
    let (z, xi) = match (&ctx.cfg.known, &ctx.cfg.at) {
        (Some(name), _) => {
            let (z, xi) = known_point(registry.get(ctx.factory_name)?, &ctx.params, name)?;
            (z, Some(ctx.cfg.xi.clone().unwrap_or(xi)))
        }
        (None, Some(z)) => (z.clone(), ctx.cfg.xi.clone()),
        (None, None) => bail!("no equilibrium given; pass --at or --known"),
    };
    check_dim("--at", z.len(), sys.dim())?;
    let z = DVector::from_vec(z);
    let re = match xi {
        Some(xi) => {
            check_dim("--xi", xi.len(), sys.group().dim())?;
            RelativeEquilibrium::new(sys, z, AlgebraElement::from_slice(&xi), tol)?
        }
        None => RelativeEquilibrium::at_point(sys, z, tol)?,
    };
    Ok(re)
}

fn structure_gate(ctx: &RunContext) -> Result<()> {
    let mut opts = ctx.cfg.structure;
    opts.strict = false;
    let report = check_structure(ctx.sys.as_ref(), &opts)?;
    if !report.passed {
        return Err(StructuralFailure(format!(
            "{} failed structure checks ({}); max violation {:e} > {:e}",
            report.system,
            report.failing_checks().join(", "),
            report.max_violation,
            report.tol
        ))
        .into());
    }
    Ok(())
}

pub fn list_systems(m: &ArgMatches, registry: &SystemRegistry) -> Result<i32> {
    #[derive(Serialize)]
    struct Entry {
        name: &'static str,
        description: &'static str,
        params: Vec<emc_core::systems::ParamSpec>,
        known_equilibria: Vec<emc_core::systems::KnownEquilibrium>,
    }
    let mut entries = Vec::new();
    for f in registry.entries() {
        let defaults = f.resolve(&ParamValues::new())?;
        entries.push(Entry {
            name: f.name(),
            description: f.description(),
            params: f.params(),
            known_equilibria: f.known_equilibria(&defaults),
        });
    }
    if m.get_flag("json") {
        return emit_json(None, &entries).map(|_| EXIT_OK);
    }
    let mut text = String::new();
    for e in &entries {
        writeln!(text, "{}: {}", e.name, e.description)?;
        for p in &e.params {
            writeln!(
                text,
                "  --{} {:?}  range {}  {}",
                p.name,
                p.default,
                p.range_text(),
                p.description
            )?;
        }
        for k in &e.known_equilibria {
            writeln!(
                text,
                "  known {}: z = {:?}, xi = {:?}  {}",
                k.name, k.z, k.xi, k.description
            )?;
        }
    }
    emit(None, &text).map(|_| EXIT_OK)
}

pub fn check_structure_cmd(m: &ArgMatches, registry: &SystemRegistry) -> Result<i32> {
    let mut ctx = build_context(m, registry, load_config(m)?)?;
    if let Some(n) = count_flag(m, "samples")? {
        ctx.cfg.structure.n_samples = n;
    }
    if let Some(s) = u64_flag(m, "rng-seed")? {
        ctx.cfg.structure.seed = s;
    }
    if let Some(t) = scalar_flag(m, "tol")? {
        ctx.cfg.structure.tol = t;
    }
    if m.get_flag("strict") {
        ctx.cfg.structure.strict = true;
    }
    let report = check_structure(ctx.sys.as_ref(), &ctx.cfg.structure)?;
    emit_json(output_path(m, &ctx.cfg).as_deref(), &report)?;
    if !report.passed {
        eprintln!("failing checks: {}", report.failing_checks().join(", "));
        return Ok(EXIT_STRUCTURAL);
    }
    Ok(EXIT_OK)
}

pub fn find_re(m: &ArgMatches, registry: &SystemRegistry) -> Result<i32> {
    #[derive(Serialize)]
    struct Document<'a> {
        system: &'a str,
        z_e: Vec<f64>,
        xi: Vec<f64>,
        mu: Vec<f64>,
        residual_norm: f64,
        iterations: usize,
        isotropy_dim: usize,
        params: &'a ParamValues,
    }
    let mut ctx = build_context(m, registry, load_config(m)?)?;
    if let Some(n) = count_flag(m, "max-iterations")? {
        ctx.cfg.solver.max_iterations = n;
    }
    if let Some(t) = scalar_flag(m, "tol-re")? {
        ctx.cfg.solver.tol_re = t;
    }
    let sys = ctx.sys.as_ref();
    let seed = list_flag(m, "seed")?
        .or_else(|| ctx.cfg.at.clone())
        .ok_or_else(|| anyhow!("no seed point; pass --seed"))?;
    check_dim("--seed", seed.len(), sys.dim())?;
    let xi = list_flag(m, "xi")?
        .or_else(|| ctx.cfg.xi.clone())
        .unwrap_or_else(|| vec![0.0; sys.group().dim()]);
    check_dim("--xi", xi.len(), sys.group().dim())?;
    let outcome = releq::find_relative_equilibrium(
        sys,
        &DVector::from_vec(seed),
        &AlgebraElement::from_slice(&xi),
        &ctx.cfg.solver,
    )?;
    let re = &outcome.equilibrium;
    if outcome.isotropy_nontrivial() {
        eprintln!(
            "note: isotropy algebra of the solution has dimension {}; xi is the minimal-norm representative",
            outcome.isotropy_dim
        );
    }
    emit_json(
        output_path(m, &ctx.cfg).as_deref(),
        &Document {
            system: sys.name(),
            z_e: re.z_e.iter().copied().collect(),
            xi: re.xi.coeffs().iter().copied().collect(),
            mu: re.mu.0.iter().copied().collect(),
            residual_norm: re.residual_norm,
            iterations: outcome.iterations,
            isotropy_dim: outcome.isotropy_dim,
            params: &ctx.params,
        },
    )?;
    Ok(EXIT_OK)
}

fn apply_certify_flags(m: &ArgMatches, cfg: &mut RunConfig) -> Result<()> {
    let c = &mut cfg.certify;
    if let Some(v) = scalar_flag(m, "sigma-max")? {
        c.sigma_max = v;
    }
    if let Some(v) = count_flag(m, "xi-search-budget")? {
        c.xi_search_budget = v;
    }
    if let Some(v) = scalar_flag(m, "search-scale")? {
        c.search_scale = v;
    }
    if let Some(v) = scalar_flag(m, "tube-radius")? {
        c.tube_radius = v;
    }
    let t = &mut c.tolerances;
    for (flag, slot) in [
        ("tol-zero", &mut t.zero_rel),
        ("tol-pos", &mut t.pos_rel),
        ("tol-angle", &mut t.angle),
        ("tol-crit", &mut t.crit),
        ("tol-null", &mut t.null),
        ("tol-em3", &mut t.em3),
    ] {
        if let Some(v) = scalar_flag(m, flag)? {
            *slot = v;
        }
    }
    Ok(())
}

fn run_certify(ctx: &RunContext, re: &RelativeEquilibrium) -> Result<EmcCertificate> {
    let problem = EmcProblem::new(ctx.sys.as_ref(), re.clone()).with_options(ctx.cfg.certify);
    Ok(certify(&problem)?)
}

pub fn certify_cmd(m: &ArgMatches, registry: &SystemRegistry) -> Result<i32> {
    let mut cfg = load_config(m)?;
    apply_point_flags(m, &mut cfg)?;
    apply_certify_flags(m, &mut cfg)?;
    let ctx = build_context(m, registry, cfg)?;
    if !m.get_flag("skip-structure-check") {
        structure_gate(&ctx)?;
    }
    let re = relative_equilibrium(&ctx, registry)?;
    let certificate = run_certify(&ctx, &re)?;
    let verdict = certificate.verdict;
    eprintln!("verdict: {verdict}");
    let doc = CertificateDocument {
        certificate,
        params: ctx.params.clone(),
        config: ctx.cfg.clone(),
    };
    emit_json(output_path(m, &ctx.cfg).as_deref(), &doc)?;
    Ok(if verdict.is_certified() { EXIT_OK } else { EXIT_NEGATIVE })
}

fn apply_experiment_flags(m: &ArgMatches, cfg: &mut RunConfig) -> Result<()> {
    let e = &mut cfg.experiment;
    if let Some(v) = list_flag(m, "deltas")? {
        e.deltas = v;
    }
    if let Some(v) = count_flag(m, "samples")? {
        e.samples_per_delta = v;
    }
    if let Some(v) = scalar_flag(m, "t-final")? {
        e.t_final = v;
    }
    if let Some(v) = scalar_flag(m, "step")? {
        e.step = v;
    }
    if let Some(v) = m.get_one::<String>("integrator") {
        e.integrator = v.clone();
    }
    if let Some(v) = scalar_flag(m, "escape-radius")? {
        e.escape_radius = v;
    }
    if let Some(v) = count_flag(m, "monitor-stride")? {
        e.monitor_stride = v;
    }
    if let Some(v) = u64_flag(m, "rng-seed")? {
        e.seed = v;
    }
    if let Some(v) = m.get_one::<String>("csv") {
        cfg.output.csv = Some(PathBuf::from(v));
    }
    if cfg.output.csv.is_some() {
        cfg.experiment.record_series = true;
    }
    Ok(())
}

pub fn verify_cmd(m: &ArgMatches, registry: &SystemRegistry) -> Result<i32> {
    let stored: Option<CertificateDocument> = m
        .get_one::<String>("certificate")
        .map(|p| read_json(Path::new(p), "certificate"))
        .transpose()?;

    if let (Some(doc), Some(name)) = (&stored, m.get_one::<String>("system")) {
        if &doc.certificate.system != name {
            return Err(StructuralFailure(format!("certificate is for {}, not {name}", doc.certificate.system)).into());
        }
    }
    let mut cfg = match (m.get_one::<String>("config"), &stored) {
        (Some(_), _) => load_config(m)?,
        (None, Some(doc)) => doc.config.clone(),
        (None, None) => RunConfig::default(),
    };
    if let Some(doc) = &stored {
        cfg.system.get_or_insert_with(|| doc.certificate.system.clone());
        if cfg.params.is_empty() {
            cfg.set_params(&doc.params);
        }
    }
    apply_point_flags(m, &mut cfg)?;
    apply_experiment_flags(m, &mut cfg)?;
    let ctx = build_context(m, registry, cfg)?;
    let sys = ctx.sys.as_ref();

    let explicit_point = m.contains_id("at") || m.contains_id("known");
    let (re, certificate) = match stored {
        Some(doc) if !explicit_point => {
            let cert = doc.certificate;
            if cert.system != sys.name() {
                return Err(
                    StructuralFailure(format!("certificate is for {}, not {}", cert.system, sys.name())).into(),
                );
            }
            check_dim("certificate z_e", cert.z_e.len(), sys.dim())?;
            let re = RelativeEquilibrium::new(
                sys,
                DVector::from_column_slice(&cert.z_e),
                AlgebraElement::from_slice(&cert.xi_used),
                ctx.cfg.solver.tol_re,
            )
            .context("certificate no longer describes a relative equilibrium of this system")?;
            (re, cert)
        }
        Some(_) => bail!("--certificate cannot be combined with --at or --known"),
        None => {
            let re = relative_equilibrium(&ctx, registry)?;
            let cert = run_certify(&ctx, &re)?;
            (re, cert)
        }
    };

    let report = stability_experiment(sys, &re, &certificate, &ctx.cfg.experiment)?;
    eprintln!(
        "certificate: {}; experiment: {}; ls3 violations: {}",
        certificate.verdict,
        report.verdict.as_str(),
        report.ls3_violations
    );
    if let Some(csv_path) = &ctx.cfg.output.csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["delta", "sample", "t", "orbit_distance", "f"])?;
        for s in &report.samples {
            for pt in s.series.iter().flatten() {
                w.write_record([
                    s.delta.to_string(),
                    s.sample.to_string(),
                    pt.t.to_string(),
                    pt.orbit_distance.to_string(),
                    pt.f.map(|f| f.to_string()).unwrap_or_default(),
                ])?;
            }
        }
        write_atomic(csv_path, &w.into_inner()?)?;
    }
    let verdict = report.verdict;
    let doc = ExperimentDocument {
        report,
        params: ctx.params.clone(),
        config: ctx.cfg.clone(),
    };
    emit_json(output_path(m, &ctx.cfg).as_deref(), &doc)?;
    Ok(if verdict == EmpiricalVerdict::ConsistentWithStable {
        EXIT_OK
    } else {
        EXIT_NEGATIVE
    })
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<_> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn report_cmd(m: &ArgMatches) -> Result<i32> {
    let path = m.get_one::<String>("certificate").expect("required");
    let doc: CertificateDocument = read_json(Path::new(path), "certificate")?;
    let c = &doc.certificate;
    let mut t = String::new();
    writeln!(t, "system           {}", c.system)?;
    for (k, v) in &doc.params {
        writeln!(t, "  {k:<15}{}", fmt_vec(v))?;
    }
    writeln!(t, "z_e              {}", fmt_vec(&c.z_e))?;
    writeln!(t, "mu               {}", fmt_vec(&c.mu))?;
    writeln!(t, "xi               {}", fmt_vec(&c.xi_used))?;
    writeln!(t, "lambda           {}", fmt_vec(&c.lambda))?;
    writeln!(t, "verdict          {}", c.verdict)?;
    writeln!(
        t,
        "K dim            {} (orbit directions {})",
        c.k_dim, c.orbit_dim_in_k
    )?;
    writeln!(t, "spectrum on K    {}", fmt_vec(&c.spectrum))?;
    writeln!(
        t,
        "zero cluster     {} (principal angle {:.3e})",
        c.zero_cluster_dim, c.kernel_principal_angle
    )?;
    if let Some(margin) = c.margin {
        writeln!(t, "margin           {margin:.6e}")?;
    }
    if let (Some(b), Some(s)) = (c.sign_branch, c.sigma) {
        writeln!(t, "Liapunov         branch {}, sigma {s:.6e}", b.factor())?;
    }
    writeln!(t, "EM1 residual     {:.3e}", c.em1_residual)?;
    writeln!(t, "EM3 violation    {:.3e}", c.em3_violation)?;
    if let Some(path) = m.get_one::<String>("experiment") {
        let exp: ExperimentDocument = read_json(Path::new(path), "experiment")?;
        let r = &exp.report;
        writeln!(t)?;
        writeln!(
            t,
            "experiment       {} ({} samples, ls3 violations {})",
            r.verdict.as_str(),
            r.samples.len(),
            r.ls3_violations
        )?;
        writeln!(
            t,
            "{:>12} {:>8} {:>14} {:>14} {:>8} {:>8}",
            "delta", "samples", "max dist", "max f", "escapes", "ls3 bad"
        )?;
        for d in &r.per_delta {
            writeln!(
                t,
                "{:>12.3e} {:>8} {:>14.6e} {:>14} {:>8} {:>8}",
                d.delta,
                d.samples,
                d.max_orbit_distance,
                d.max_f.map(|f| format!("{f:.6e}")).unwrap_or_else(|| "-".into()),
                d.escapes,
                d.ls3_violations
            )?;
        }
    }
    emit(None, &t).map(|_| EXIT_OK)
}

pub fn simulate_cmd(m: &ArgMatches, registry: &SystemRegistry) -> Result<i32> {
    let mut cfg = load_config(m)?;
    if let Some(at) = list_flag(m, "at")? {
        cfg.at = Some(at);
        cfg.known = None;
    }
    if let Some(known) = m.get_one::<String>("known") {
        cfg.known = Some(known.clone());
        cfg.at = None;
    }
    let ctx = build_context(m, registry, cfg)?;
    let sys = ctx.sys.as_ref();
    let z0 = match (&ctx.cfg.known, &ctx.cfg.at) {
        (Some(name), _) => known_point(registry.get(ctx.factory_name)?, &ctx.params, name)?.0,
        (None, Some(z)) => z.clone(),
        (None, None) => bail!("no initial point; pass --at or --known"),
    };
    check_dim("--at", z0.len(), sys.dim())?;
    let t_final = scalar_flag(m, "t-final")?.unwrap_or(ctx.cfg.experiment.t_final);
    let step = scalar_flag(m, "step")?.unwrap_or(ctx.cfg.experiment.step);
    let stride = count_flag(m, "stride")?.unwrap_or(1);
    let name =
        m.get_one::<String>("integrator")
            .map(String::as_str)
            .unwrap_or(if ctx.cfg.experiment.integrator.is_empty() {
                DEFAULT_INTEGRATOR
            } else {
                &ctx.cfg.experiment.integrator
            });
    let integrators = IntegratorRegistry::builtin();
    let traj = dynamics::integrate(
        sys,
        integrators.get(name)?,
        &DVector::from_vec(z0),
        t_final,
        step,
        stride,
    )?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((1..=sys.dim()).map(|i| format!("z{i}")));
    w.write_record(&header)?;
    for (t, z) in traj.times.iter().zip(&traj.states) {
        let mut row = vec![t.to_string()];
        row.extend(z.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner()?;
    match m.get_one::<String>("output") {
        Some(p) => write_atomic(Path::new(p), &bytes)?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(EXIT_OK)
}
