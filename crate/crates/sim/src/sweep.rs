//! Batches of independent scenario runs.

use crate::scenario::{run_scenario, Audit, Scenario, ScenarioResult};

#[derive(Debug, Clone)]
pub struct SweepItem {
    pub seed: u64,
    pub ases: usize,
    pub result: Result<(ScenarioResult, Audit), String>,
}

/// One random scenario per seed.
pub fn random_scenarios(seeds: std::ops::Range<u64>) -> Vec<Scenario> {
    seeds.map(Scenario::random).collect()
}

fn run_one(scenario: &Scenario) -> SweepItem {
    let seed = scenario.seed;
    match run_scenario(scenario, seed) {
        Ok(run) => SweepItem {
            seed,
            ases: run.instance.topology.len(),
            result: Ok((run.result, run.audit)),
        },
        Err(e) => SweepItem {
            seed,
            ases: 0,
            result: Err(e.to_string()),
        },
    }
}

pub fn run_sequential(scenarios: &[Scenario]) -> Vec<SweepItem> {
    scenarios.iter().map(run_one).collect()
}

/// Same results as [`run_sequential`], in the same order.
#[cfg(feature = "parallel")]
pub fn run_parallel(scenarios: &[Scenario]) -> Vec<SweepItem> {
    use rayon::prelude::*;
    scenarios.par_iter().map(run_one).collect()
}

/// Parallel when the `parallel` feature is on.
pub fn run(scenarios: &[Scenario]) -> Vec<SweepItem> {
    #[cfg(feature = "parallel")]
    {
        run_parallel(scenarios)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_sequential(scenarios)
    }
}
