//! Fan-out of independent simulation runs, used for parameter studies.
//!
//! Runs share nothing, so they parallelize trivially; with the `parallel`
//! feature they spread over a rayon pool, otherwise they execute in order.
//! Results come back in job order either way, so output is deterministic.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::metrics::{report_from_records, Summary};
use crate::mobility::scenarios::{churn, ChurnConfig};
use crate::sim::trace::{AppScenario, ContactTrace};
use crate::sim::{run, RolePolicy, SimConfig};

/// One simulation to run, with everything it needs.
pub struct SweepJob {
    pub name: String,
    pub trace: ContactTrace,
    pub app: AppScenario,
    pub cfg: SimConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub name: String,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("job {name}: {detail}")]
pub struct SweepError {
    pub name: String,
    pub detail: String,
}

fn run_one(job: &SweepJob) -> Result<SweepResult, SweepError> {
    let fail = |detail: String| SweepError {
        name: job.name.clone(),
        detail,
    };
    let out = run(&job.trace, &job.app, &job.cfg).map_err(|e| fail(e.to_string()))?;
    let report = report_from_records(&out.log).map_err(|e| fail(e.to_string()))?;
    Ok(SweepResult {
        name: job.name.clone(),
        summary: report.summary,
    })
}

/// Runs every job and returns summaries in job order. Jobs spread over a
/// rayon pool when the `parallel` feature is on.
pub fn run_sweep(jobs: &[SweepJob]) -> Result<Vec<SweepResult>, SweepError> {
    #[cfg(feature = "parallel")]
    {
        jobs.par_iter().map(run_one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_sweep_serial(jobs)
    }
}

/// One-job-at-a-time variant of [`run_sweep`], for comparison and for
/// callers that manage their own parallelism.
pub fn run_sweep_serial(jobs: &[SweepJob]) -> Result<Vec<SweepResult>, SweepError> {
    jobs.iter().map(run_one).collect()
}

/// One data point of a relay-ratio study.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioPoint {
    pub ratio: f64,
    pub seed: u64,
    pub summary: Summary,
}

/// The relay-ratio experiment: per seed, generate one churn scenario and
/// replay the identical trace under each ratio, so the only difference
/// between runs of a seed is which pedestrians get to relay.
pub fn relay_ratio_study(
    base: &ChurnConfig,
    ratios: &[f64],
    seeds: &[u64],
    sim: &SimConfig,
) -> Result<Vec<RatioPoint>, SweepError> {
    let mut jobs = Vec::new();
    let mut points = Vec::new();
    for &seed in seeds {
        let cfg = ChurnConfig {
            seed,
            ..base.clone()
        };
        let (trace, app) = churn(&cfg).map_err(|detail| SweepError {
            name: format!("gen seed {seed}"),
            detail,
        })?;
        for &ratio in ratios {
            jobs.push(SweepJob {
                name: format!("ratio {ratio} seed {seed}"),
                trace: trace.clone(),
                app: app.clone(),
                cfg: SimConfig {
                    role_policy: RolePolicy::RelayRatio(ratio),
                    ..sim.clone()
                },
            });
            points.push((ratio, seed));
        }
    }
    let results = run_sweep(&jobs)?;
    Ok(points
        .into_iter()
        .zip(results)
        .map(|((ratio, seed), r)| RatioPoint {
            ratio,
            seed,
            summary: r.summary,
        })
        .collect())
}
