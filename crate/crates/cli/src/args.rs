//! Command-line definition. Per-system parameter flags are generated from the
//! system registry's parameter schemas.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Result};
use clap::{Arg, ArgAction, ArgMatches, Command};
use emc_core::systems::{ParamValues, SystemRegistry};

const PARAM_PREFIX: &str = "param:";

/// Parse `"1,2,3"` (commas and/or whitespace) into numbers.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    let values: Result<Vec<f64>> = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| anyhow!("{s:?} is not a number")))
        .collect();
    let values = values?;
    if values.is_empty() {
        bail!("empty list");
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        bail!("non-finite value {v}");
    }
    Ok(values)
}

pub fn list_flag(matches: &ArgMatches, id: &str) -> Result<Option<Vec<f64>>> {
    matches
        .get_one::<String>(id)
        .map(|s| parse_list(s).map_err(|e| anyhow!("--{id}: {e}")))
        .transpose()
}

pub fn scalar_flag(matches: &ArgMatches, id: &str) -> Result<Option<f64>> {
    match list_flag(matches, id)? {
        None => Ok(None),
        Some(v) if v.len() == 1 => Ok(Some(v[0])),
        Some(v) => bail!("--{id} takes one number, got {}", v.len()),
    }
}

pub fn count_flag(matches: &ArgMatches, id: &str) -> Result<Option<usize>> {
    matches
        .get_one::<String>(id)
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| anyhow!("--{id}: {s:?} is not a non-negative integer"))
        })
        .transpose()
}

pub fn u64_flag(matches: &ArgMatches, id: &str) -> Result<Option<u64>> {
    matches
        .get_one::<String>(id)
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| anyhow!("--{id}: {s:?} is not a non-negative integer"))
        })
        .transpose()
}

/// Parameter flags given on the command line.
pub fn param_flags(matches: &ArgMatches, registry: &SystemRegistry) -> Result<ParamValues> {
    let mut out = ParamValues::new();
    for name in param_names(registry).keys() {
        let id = format!("{PARAM_PREFIX}{name}");
        if let Some(text) = matches.get_one::<String>(&id) {
            out.insert(name.clone(), parse_list(text).map_err(|e| anyhow!("--{name}: {e}"))?);
        }
    }
    Ok(out)
}

/// Parameter name → systems that declare it.
fn param_names(registry: &SystemRegistry) -> BTreeMap<String, Vec<&'static str>> {
    let mut names: BTreeMap<String, Vec<&'static str>> = BTreeMap::new();
    for factory in registry.entries() {
        for spec in factory.params() {
            names.entry(spec.name).or_default().push(factory.name());
        }
    }
    names
}

fn value(id: &'static str, help: &'static str) -> Arg {
    Arg::new(id)
        .long(id)
        .value_name("X")
        .help(help)
        .allow_hyphen_values(true)
}

fn list(id: &'static str, help: &'static str) -> Arg {
    Arg::new(id)
        .long(id)
        .value_name("X,Y,...")
        .help(help)
        .allow_hyphen_values(true)
}

fn system_args(cmd: Command, registry: &SystemRegistry) -> Command {
    let mut cmd = cmd
        .arg(
            Arg::new("system")
                .value_name("SYSTEM")
                .help(format!("catalog system ({})", registry.names().join(", "))),
        )
        .arg(value("config", "TOML run configuration; flags override it"));
    for (name, systems) in param_names(registry) {
        let id: &'static str = Box::leak(format!("{PARAM_PREFIX}{name}").into_boxed_str());
        let long: &'static str = Box::leak(name.into_boxed_str());
        cmd = cmd.arg(
            Arg::new(id)
                .long(long)
                .value_name("X,...")
                .allow_hyphen_values(true)
                .help(format!("system parameter ({})", systems.join(", "))),
        );
    }
    cmd
}

fn point_args(cmd: Command) -> Command {
    cmd.arg(list("at", "phase-space point of the relative equilibrium").conflicts_with("known"))
        .arg(list("xi", "generator ξ; fitted at the point when omitted"))
        .arg(value(
            "known",
            "documented equilibrium of the system (see list-systems)",
        ))
        .arg(value("tol-re", "relative-equilibrium residual tolerance"))
}

fn output_arg(cmd: Command) -> Command {
    cmd.arg(value("output", "write JSON here instead of standard output"))
}

pub fn command(registry: &SystemRegistry) -> Command {
    let list_systems = Command::new("list-systems")
        .about("List catalog systems, their parameters and documented equilibria")
        .arg(
            Arg::new("json")
                .long("json")
                .action(ArgAction::SetTrue)
                .help("print JSON"),
        );

    let check_structure = output_arg(system_args(
        Command::new("check-structure").about("Randomized consistency checks of a system definition"),
        registry,
    ))
    .arg(value("samples", "number of sample points"))
    .arg(value("rng-seed", "random seed"))
    .arg(value("tol", "pass/fail threshold"))
    .arg(
        Arg::new("strict")
            .long("strict")
            .action(ArgAction::SetTrue)
            .help("treat failures as errors"),
    );

    let find_re = output_arg(system_args(
        Command::new("find-re").about("Solve for a relative equilibrium near a seed point"),
        registry,
    ))
    .arg(list("seed", "initial point"))
    .arg(list("xi", "initial generator (default 0)"))
    .arg(value("max-iterations", "iteration cap"))
    .arg(value("tol-re", "residual tolerance"));

    let certify = output_arg(point_args(system_args(
        Command::new("certify").about("Run the energy-momentum-Casimir test and write a certificate"),
        registry,
    )))
    .arg(value("sigma-max", "cap on the f₂ weight σ"))
    .arg(value("xi-search-budget", "grid points per dimension of the ξ/λ search"))
    .arg(value("search-scale", "half-width of the ξ/λ search box, relative"))
    .arg(value("tube-radius", "radius of the Liapunov function's neighbourhood"))
    .arg(value("tol-zero", "relative zero-eigenvalue threshold"))
    .arg(value("tol-pos", "relative definiteness threshold"))
    .arg(value("tol-angle", "kernel principal-angle tolerance (rad)"))
    .arg(value("tol-crit", "critical-point gradient tolerance"))
    .arg(value("tol-null", "relative null-space tolerance"))
    .arg(value("tol-em3", "isotropy-invariance tolerance for ξ"))
    .arg(
        Arg::new("skip-structure-check")
            .long("skip-structure-check")
            .action(ArgAction::SetTrue)
            .help("do not run check-structure first"),
    );

    let verify = output_arg(point_args(system_args(
        Command::new("verify").about("Perturbation experiment monitoring orbit distance and the Liapunov function"),
        registry,
    )))
    .arg(value(
        "certificate",
        "certificate JSON from `certify`; computed when omitted",
    ))
    .arg(list("deltas", "perturbation sizes"))
    .arg(value("samples", "trajectories per perturbation size"))
    .arg(value("t-final", "integration horizon"))
    .arg(value("step", "integration step"))
    .arg(value("integrator", "rk4 or implicit_midpoint"))
    .arg(value("escape-radius", "orbit distance counted as escape"))
    .arg(value("monitor-stride", "steps between monitor evaluations"))
    .arg(value("rng-seed", "random seed for perturbations"))
    .arg(value("csv", "write per-sample time series here"));

    let report = Command::new("report")
        .about("Human-readable summary of a certificate and optional experiment")
        .arg(value("certificate", "certificate JSON").required(true))
        .arg(value("experiment", "experiment JSON from `verify`"));

    let simulate = system_args(
        Command::new("simulate").about("Integrate a trajectory and write it as CSV"),
        registry,
    )
    .arg(list("at", "initial point").conflicts_with("known"))
    .arg(value("known", "start from a documented equilibrium"))
    .arg(value("t-final", "integration horizon"))
    .arg(value("step", "integration step"))
    .arg(value("integrator", "rk4 or implicit_midpoint"))
    .arg(value("stride", "record every n-th step"))
    .arg(value("output", "write CSV here instead of standard output"));

    Command::new("emc")
        .about("Energy-momentum-Casimir stability certificates for symmetric Hamiltonian systems")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommands([
            list_systems,
            check_structure,
            find_re,
            certify,
            verify,
            report,
            simulate,
        ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_parse() {
        assert_eq!(parse_list("1,2, 3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_list("-1 0 0").unwrap(), vec![-1.0, 0.0, 0.0]);
        assert!(parse_list("1,x").is_err());
        assert!(parse_list("").is_err());
        assert!(parse_list("inf").is_err());
    }

    #[test]
    fn parameter_flags_come_from_registry() {
        let registry = SystemRegistry::builtin();
        let m = command(&registry)
            .try_get_matches_from(["emc", "certify", "rigid_body", "--I", "1,2,3", "--at", "-1,0,0"])
            .unwrap();
        let (_, sub) = m.subcommand().unwrap();
        let params = param_flags(sub, &registry).unwrap();
        assert_eq!(params["I"], vec![1.0, 2.0, 3.0]);
        assert_eq!(list_flag(sub, "at").unwrap().unwrap(), vec![-1.0, 0.0, 0.0]);
    }

    #[test]
    fn at_conflicts_with_known() {
        let registry = SystemRegistry::builtin();
        let r =
            command(&registry).try_get_matches_from(["emc", "certify", "rigid_body", "--at", "0,0,1", "--known", "e3"]);
        assert!(r.is_err());
    }
}
