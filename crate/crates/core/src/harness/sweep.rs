//! Concurrent independent runs. Runs share nothing but the filesystem: every
//! grid point writes to its own directory.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::config::RunConfig;
use super::train::{train, TrainSummary};
use crate::algos::AlgoId;
use crate::error::{Error, Result};
use crate::scenarios::ScenarioId;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub scenario: ScenarioId,
    pub algo: AlgoId,
    pub seed: u64,
    pub out: PathBuf,
}

/// Directory name of one grid point under the sweep root.
pub fn point_dir(root: &Path, scenario: ScenarioId, algo: AlgoId, seed: u64) -> PathBuf {
    root.join(format!("{scenario}_{algo}_seed{seed}"))
}

/// Cartesian grid of scenarios, algorithms and seeds under `root`.
pub fn grid(root: &Path, scenarios: &[ScenarioId], algos: &[AlgoId], seeds: &[u64]) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for &scenario in scenarios {
        for &algo in algos {
            for &seed in seeds {
                out.push(SweepPoint {
                    scenario,
                    algo,
                    seed,
                    out: point_dir(root, scenario, algo, seed),
                });
            }
        }
    }
    out
}

/// Configuration of `point` derived from `base`: the base keys are re-resolved
/// on top of the point's scenario preset, then algorithm, seed and output
/// directory are overridden.
pub fn point_config(base: &[(String, String)], point: &SweepPoint) -> Result<RunConfig> {
    let mut overrides: Vec<(String, String)> = base.to_vec();
    overrides.retain(|(k, _)| !matches!(k.as_str(), "scenario" | "algo" | "seed" | "out"));
    overrides.push(("scenario".into(), point.scenario.to_string()));
    overrides.push(("algo".into(), point.algo.to_string()));
    overrides.push(("seed".into(), point.seed.to_string()));
    let mut cfg = RunConfig::resolve(&[], &overrides)?;
    cfg.out = Some(point.out.clone());
    Ok(cfg)
}

/// Run every point with at most `jobs` concurrently. Results come back in grid
/// order; one failing run does not stop the others.
pub fn run_sweep(base: &[(String, String)], points: &[SweepPoint], jobs: usize) -> Vec<Result<TrainSummary>> {
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = points.iter().find(|p| !seen.insert(p.out.clone())) {
        let message = format!("two sweep points share {}", dup.out.display());
        return points.iter().map(|_| Err(Error::Input(message.clone()))).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<Result<TrainSummary>>>> = points.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, points.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(point) = points.get(i) else { break };
                let outcome = point_config(base, point).and_then(|cfg| train(&cfg));
                *results[i].lock().expect("result slot") = Some(outcome);
            });
        }
    });
    results
        .into_iter()
        .map(|slot| slot.into_inner().expect("result slot").expect("every point ran"))
        .collect()
}
