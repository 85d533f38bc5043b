//! Scenario-driven front end for the `etgeom` checks.

pub mod groups;
pub mod run;
pub mod scenario;

pub use run::{run_scenario, RunError, RunOptions, RunReport, Summary};
pub use scenario::{load_scenario, parse_scenario, InputError, Scenario};

/// `name  case` lines for every corpus entry.
pub fn corpus_table() -> String {
    let entries = etgeom::constructions::corpus();
    let width = entries.iter().map(|e| e.name.len()).max().unwrap_or(0);
    entries
        .iter()
        .map(|e| format!("{:<width$}  {}\n", e.name, e.case))
        .collect()
}
