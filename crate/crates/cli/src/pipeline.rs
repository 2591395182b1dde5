//! Scenario sweeps shared by the subcommands.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use bwe_core::dataio::{write_call, CallTrajectory, Manifest, ManifestEntry};
use bwe_core::evalx::{
    attach_proxy_rewards, e_minus, e_plus, mse_mbps2, records_from_run, score, FamilyResult,
    LegScore, ProxyRewardConfig, ScoreSummary, StepRecord, BOOTSTRAP_RESAMPLES,
};
use bwe_core::netemu::{run_call, CallConfig};
use bwe_core::seeds::derive_seed;
use bwe_core::traces::{Family, FamilyConfig, Scenario};
use serde::Serialize;

use crate::policy_spec::PolicyFactory;
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct SweepOptions {
    pub duration_ms: f64,
    pub repeats: usize,
    pub seed: u64,
    pub jobs: usize,
    pub call: CallConfig,
    pub rewards: ProxyRewardConfig,
    pub families: FamilyConfig,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            duration_ms: 120_000.0,
            repeats: 1,
            seed: 0,
            jobs: 1,
            call: CallConfig::default(),
            rewards: ProxyRewardConfig::default(),
            families: FamilyConfig::default(),
        }
    }
}

/// One family, one scenario whose trace seed is `seed`.
pub fn family_scenarios(family: Family, seed: u64) -> Vec<Scenario> {
    vec![Scenario {
        name: format!("{family}_0"),
        family,
        seed,
    }]
}

#[derive(Debug, Clone)]
pub struct CallResult {
    pub scenario: Scenario,
    pub repeat: usize,
    pub policy: String,
    pub records: Vec<StepRecord>,
    pub leg: LegScore,
    pub rewards: Vec<f64>,
    /// Kept only when the sweep asks for it.
    pub trajectory: Option<CallTrajectory>,
}

impl CallResult {
    pub fn call_id(&self) -> String {
        format!("{}_r{}", self.scenario.name, self.repeat)
    }

    pub fn summary_line(&self) -> Result<String, CliError> {
        Ok(format!(
            "call {} policy {} S={:.4} mse={:.6} e+={:.4} e-={:.4}",
            self.call_id(),
            self.policy,
            self.leg.score(),
            mse_mbps2(&self.records)?,
            e_plus(&self.records)?,
            e_minus(&self.records)?,
        ))
    }
}

/// Seed of call `repeat` of a scenario.
pub fn call_seed(scenario: &Scenario, repeat: usize) -> u64 {
    derive_seed(scenario.seed, repeat as u64)
}

fn run_one(
    policy: &PolicyFactory,
    scenario: &Scenario,
    repeat: usize,
    opts: &SweepOptions,
    keep_trajectory: bool,
) -> Result<CallResult, CliError> {
    let trace = opts
        .families
        .generate(scenario.family, scenario.seed, opts.duration_ms)?;
    let seed = call_seed(scenario, repeat);
    let mut estimator = policy.build(&trace, seed);
    let mut run = run_call(
        &trace,
        estimator.as_mut(),
        &opts.call,
        opts.duration_ms,
        seed,
    )?;
    attach_proxy_rewards(&mut run, &opts.rewards);
    run.trajectory.call_id = format!("{}_r{repeat}", scenario.name);
    run.trajectory.policy_id = policy.label();
    let records = records_from_run(&run)?;
    let leg = LegScore::from_call(&run.trajectory)?;
    let rewards = run
        .trajectory
        .steps
        .iter()
        .map(|s| s.r_audio + s.r_video)
        .collect();
    Ok(CallResult {
        scenario: scenario.clone(),
        repeat,
        policy: policy.label(),
        records,
        leg,
        rewards,
        trajectory: keep_trajectory.then_some(run.trajectory),
    })
}

/// Run `repeats` calls per scenario. Results come back in scenario-major
/// order whatever the number of workers.
pub fn sweep(
    policy: &PolicyFactory,
    scenarios: &[Scenario],
    opts: &SweepOptions,
    keep_trajectories: bool,
) -> Result<Vec<CallResult>, CliError> {
    let jobs: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|s| (0..opts.repeats).map(move |r| (s, r)))
        .collect();
    let workers = opts.jobs.clamp(1, jobs.len().max(1));
    if workers == 1 {
        return jobs
            .iter()
            .map(|&(s, r)| run_one(policy, &scenarios[s], r, opts, keep_trajectories))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<CallResult, CliError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(s, r)) = jobs.get(i) else {
                    break;
                };
                let out = run_one(policy, &scenarios[s], r, opts, keep_trajectories);
                slots.lock().expect("no poisoned workers")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// Write one call file per result plus the manifest.
pub fn write_trajectories(results: &[CallResult], dir: &Path) -> Result<Manifest, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut manifest = Manifest::default();
    for r in results {
        let traj = r
            .trajectory
            .as_ref()
            .ok_or_else(|| CliError::Config("sweep did not keep trajectories".into()))?;
        let file = format!("{}.json", r.call_id());
        write_call(traj, dir.join(&file))?;
        manifest.calls.push(ManifestEntry {
            file,
            call_id: traj.call_id.clone(),
            policy_id: traj.policy_id.clone(),
        });
    }
    manifest.write(dir)?;
    Ok(manifest)
}

/// Group results by family, keeping first-appearance order.
pub fn by_family(results: &[CallResult]) -> Vec<FamilyResult> {
    let mut out: Vec<FamilyResult> = Vec::new();
    for r in results {
        let family = r.scenario.family.to_string();
        let idx = match out
            .iter()
            .position(|f| f.family == family && f.policy == r.policy)
        {
            Some(i) => i,
            None => {
                out.push(FamilyResult {
                    family,
                    policy: r.policy.clone(),
                    records: Vec::new(),
                    legs: Vec::new(),
                    rewards: Vec::new(),
                });
                out.len() - 1
            }
        };
        let f = &mut out[idx];
        f.records.extend_from_slice(&r.records);
        f.legs.push(r.leg);
        f.rewards.extend_from_slice(&r.rewards);
    }
    out
}

/// Suite score over every leg of the results.
pub fn suite_score(results: &[CallResult], seed: u64) -> Result<ScoreSummary, CliError> {
    let legs: Vec<LegScore> = results.iter().map(|r| r.leg).collect();
    Ok(score(&legs, BOOTSTRAP_RESAMPLES, seed)?)
}
