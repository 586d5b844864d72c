//! Batch front end: load a scenario, run its tasks, write a report.

pub mod report;
pub mod scenario;
pub mod tasks;

pub use report::{emit_report, render_report, Format, Report, ReportError, TaskResult};
pub use scenario::{load_scenario, load_scenario_with_seed, Reason, Scenario, ScenarioError, TaskSpec};

/// Runs the tasks in order on the current rayon pool.
pub fn run_tasks(scenario: &Scenario) -> Report {
    Report::new(scenario.tasks().iter().map(|t| tasks::run_task(scenario, t)).collect())
}

/// Runs the tasks on a dedicated pool of `threads` workers, or the global
/// pool when `None`.
pub fn run_tasks_with_threads(scenario: &Scenario, threads: Option<usize>) -> Result<Report, rayon::ThreadPoolBuildError> {
    match threads {
        None => Ok(run_tasks(scenario)),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            Ok(pool.install(|| run_tasks(scenario)))
        }
    }
}
