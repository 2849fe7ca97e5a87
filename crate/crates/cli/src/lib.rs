//! Command line front end for the `pdeopt` demos.

pub mod config;
pub mod error;
pub mod history;
pub mod problems;

use std::path::Path;

use pdeopt::mesh::{save_vtk, VtkField};

pub use config::Config;
pub use error::CliError;
pub use problems::{gradient_check, run, CheckReport, Outcome, Problem};

/// Writes `history.csv` and, if requested, the VTK files of a run.
pub fn write_outputs(outcome: &Outcome, dir: &Path, vtk: bool) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("history.csv"), outcome.history.to_csv())?;
    if vtk {
        for out in &outcome.vtk {
            let point: Vec<VtkField> = out.point_data.iter().map(|(n, v)| VtkField::Scalar(n, v)).collect();
            let cell: Vec<VtkField> = out.cell_data.iter().map(|(n, v)| VtkField::Scalar(n, v)).collect();
            save_vtk(
                dir.join(format!("{}.vtk", out.name)),
                &out.mesh,
                &out.name,
                &point,
                &cell,
            )?;
        }
    }
    Ok(())
}

/// `run <config>`: returns the process exit code.
pub fn run_command(path: &Path) -> i32 {
    let result = Config::load(path).and_then(|config| {
        let outcome = run(&config)?;
        write_outputs(&outcome, &config.output_dir(), config.vtk)?;
        Ok(outcome)
    });
    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary());
            if outcome.converged {
                0
            } else {
                eprintln!("best iterate reported above; iteration limit or stagnation reached");
                2
            }
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// `gradient-check <config>`: returns the process exit code.
pub fn gradient_check_command(path: &Path) -> i32 {
    let report = Config::load(path).and_then(|config| gradient_check(&config));
    match report {
        Ok(report) => {
            let steps: Vec<String> = report.steps.iter().map(|h| format!("{h:.0e}")).collect();
            println!("step sweep: {}", steps.join(" "));
            for line in &report.lines {
                let errs: Vec<String> = line.errors.iter().map(|e| format!("{e:.3e}")).collect();
                println!("{}: {} (best {:.3e})", line.label, errs.join(" "), line.best());
            }
            let verdict = if report.passed() { "pass" } else { "FAIL" };
            println!(
                "{verdict}: worst best error {:.3e} (threshold {:.0e})",
                report.worst_best(),
                problems::CHECK_THRESHOLD
            );
            if report.passed() {
                0
            } else {
                2
            }
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// `list`: one line per registered problem.
pub fn list_problems() -> String {
    Problem::ALL
        .iter()
        .map(|p| format!("{:<24} {}\n", p.name(), p.description()))
        .collect()
}
