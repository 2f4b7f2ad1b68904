mod args;
mod commands;
mod config;

use emc_core::systems::SystemRegistry;
use emc_core::EmcError;

use commands::StructuralFailure;

fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<StructuralFailure>().is_some() {
        return commands::EXIT_STRUCTURAL;
    }
    match err.downcast_ref::<EmcError>() {
        Some(
            EmcError::NonInvariantInnerProduct { .. }
            | EmcError::OrbitNotInConstraintSpace { .. }
            | EmcError::StructureFailure(_),
        ) => commands::EXIT_STRUCTURAL,
        _ => 1,
    }
}

fn main() {
    let registry = SystemRegistry::builtin();
    let matches = match args::command(&registry).try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match matches.subcommand() {
        Some(("list-systems", m)) => commands::list_systems(m, &registry),
        Some(("check-structure", m)) => commands::check_structure_cmd(m, &registry),
        Some(("find-re", m)) => commands::find_re(m, &registry),
        Some(("certify", m)) => commands::certify_cmd(m, &registry),
        Some(("verify", m)) => commands::verify_cmd(m, &registry),
        Some(("report", m)) => commands::report_cmd(m),
        Some(("simulate", m)) => commands::simulate_cmd(m, &registry),
        _ => unreachable!("subcommand required"),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(exit_code(&err));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structural_errors_map_to_three() {
        assert_eq!(exit_code(&StructuralFailure("x".into()).into()), 3);
        assert_eq!(
            exit_code(&EmcError::NonInvariantInnerProduct { violation: 1.0 }.into()),
            3
        );
        assert_eq!(
            exit_code(&EmcError::OrbitNotInConstraintSpace { residual: 1.0 }.into()),
            3
        );
        assert_eq!(exit_code(&EmcError::StructureFailure("x".into()).into()), 3);
        assert_eq!(exit_code(&EmcError::InvalidArgument("x".into()).into()), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("io")), 1);
    }
}
