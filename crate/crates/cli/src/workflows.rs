//! The four commands. Artifacts land under the output directory:
//!
//! | command           | directory  | files |
//! |-------------------|------------|-------|
//! | `simulate-expert` | `expert/`  | `checkpoint.bin` (+`.json`), `trajectories.json`, `trajectories.csv`, `training_curve.csv`, `split.json`, `load_report.json` (CSV data only) |
//! | `learn-reward`    | `irl/`     | `result.json`, `alpha_history.csv`, `margins.csv`, `training_curves.csv`, `checkpoints/iter_NN.bin` (+`.json`) |
//! | `evaluate`        | `eval/`    | `metrics.csv`, `summary.json`, `provision.csv`, `rewards.csv`, `schedule.csv`, `provision.svg`, `rewards.svg`, `schedule.svg` |
//! | `bench-exact`     | `bench/`   | `report.json`, `report.csv` |
//!
//! Each directory also holds `config.toml`, the resolved configuration,
//! and `manifests/<command>.json` lists every artifact with its SHA-256.

use std::fs;
use std::path::{Path, PathBuf};

use irl_dr_core::data_io::{self, schedule_code, DateRange, LoadReport, Split};
use irl_dr_core::domain::{Household, MAX_TIME_SHIFTABLE, SLOTS_PER_DAY};
use irl_dr_core::dqn::{evaluate_policy, CurvePoint, Policy};
use irl_dr_core::environment::{Normalizer, Trajectory};
use irl_dr_core::irl_exact::{self, lambda_sweep};
use irl_dr_core::irl_sampled::{self, Expert, IrlResult};
use irl_dr_core::metrics::{self, DayMetrics};
use irl_dr_core::qnet::Mlp;
use irl_dr_core::rewards::{LearnedReward, RewardSpec, BASIS_COUNT};
use irl_dr_core::synth;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{seeds, DataConfig, ExperimentConfig};
use crate::manifest::{self, Manifest};
use crate::svg;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SimulateExpert,
    LearnReward,
    Evaluate,
    BenchExact,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SimulateExpert => "simulate-expert",
            Command::LearnReward => "learn-reward",
            Command::Evaluate => "evaluate",
            Command::BenchExact => "bench-exact",
        }
    }
}

/// Runs `command` and writes its manifest.
pub fn run(command: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Manifest, CliError> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let files = match command {
        Command::SimulateExpert => simulate_expert(cfg, out)?,
        Command::LearnReward => learn_reward(cfg, out)?,
        Command::Evaluate => evaluate(cfg, out)?,
        Command::BenchExact => bench_exact(cfg, out)?,
    };
    let m = Manifest {
        tool: "irl-dr".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: command.name().into(),
        seed: cfg.seed,
        seeds: json!({
            "data": data_seed(cfg),
            "expert": seeds::expert(cfg.seed),
            "irl": seeds::irl(cfg.seed),
        }),
        config: cfg.clone(),
        artifacts: manifest::collect(out, &files)?,
    };
    manifest::write(out, &m)?;
    Ok(m)
}

fn data_seed(cfg: &ExperimentConfig) -> Option<u64> {
    match cfg.data {
        DataConfig::Synth { seed, .. } => Some(seed.unwrap_or(cfg.seed)),
        DataConfig::Csv { .. } => None,
    }
}

/// Household and, for CSV input, its load report.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Household, Option<LoadReport>), CliError> {
    match &cfg.data {
        DataConfig::Synth { archetype, seed, days } => {
            let seed = seed.unwrap_or(cfg.seed);
            let h = synth::synth_household_days(seed, *archetype, days.unwrap_or(synth::SYNTH_DAYS));
            Ok((h, None))
        }
        DataConfig::Csv { path, mapping } => {
            if !path.exists() {
                return Err(CliError::User(format!("data file {} does not exist", path.display())));
            }
            let (h, report) = data_io::load_household(path, mapping).map_err(|e| CliError::User(e.to_string()))?;
            Ok((h, Some(report)))
        }
    }
}

fn pick(h: &Household, ranges: &[DateRange]) -> Vec<usize> {
    h.dates
        .iter()
        .enumerate()
        .filter(|(_, d)| ranges.iter().any(|r| r.contains(**d)))
        .map(|(i, _)| i)
        .collect()
}

pub fn resolve_split(cfg: &ExperimentConfig, h: &Household) -> Result<Split, CliError> {
    let s = Split {
        train: pick(h, &cfg.split.train),
        test: pick(h, &cfg.split.test),
    };
    if s.train.is_empty() || s.test.is_empty() {
        return Err(CliError::User(format!(
            "the data ({} .. {}) holds no {} days of the split",
            h.dates.first().map_or("-".into(), |d| d.to_string()),
            h.dates.last().map_or("-".into(), |d| d.to_string()),
            if s.train.is_empty() { "training" } else { "test" }
        )));
    }
    Ok(s)
}

fn mkdir(p: &Path) -> Result<(), CliError> {
    fs::create_dir_all(p).map_err(|e| CliError::io(p, e))
}

fn write_text(path: &Path, text: &str) -> Result<PathBuf, CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializes");
    write_text(path, &(text + "\n"))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    write_text(&dir.join("config.toml"), &cfg.to_toml())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub normalizer: Normalizer,
    pub reward: RewardSpec,
    pub episodes: usize,
    /// False when no gradient update ran (zero episodes).
    pub trained: bool,
}

fn save_policy(path: &Path, policy: &Policy, meta: &CheckpointMeta) -> Result<Vec<PathBuf>, CliError> {
    let Policy::Greedy { net, .. } = policy else {
        return Err(CliError::Internal("only greedy policies have checkpoints".into()));
    };
    net.save(path, serde_json::to_value(meta).expect("metadata serializes"))?;
    Ok(vec![path.to_path_buf(), irl_dr_core::qnet::sidecar_path(path)])
}

pub fn load_policy(path: &Path) -> Result<(Policy, CheckpointMeta), CliError> {
    if !path.exists() {
        return Err(CliError::User(format!(
            "missing checkpoint {} (run the earlier command first)",
            path.display()
        )));
    }
    let (net, meta): (Mlp, serde_json::Value) = Mlp::load(path)?;
    let meta: CheckpointMeta = serde_json::from_value(meta)
        .map_err(|e| CliError::User(format!("{}: bad checkpoint metadata: {e}", path.display())))?;
    Ok((
        Policy::Greedy {
            net,
            normalizer: meta.normalizer,
        },
        meta,
    ))
}

fn curve_rows(curve: &[CurvePoint], iteration: Option<usize>) -> Vec<Vec<String>> {
    curve
        .iter()
        .map(|c| {
            let mut r = Vec::new();
            if let Some(i) = iteration {
                r.push(i.to_string());
            }
            r.extend([c.episode.to_string(), c.epsilon.to_string(), c.reward.to_string()]);
            r
        })
        .collect()
}

fn simulate_expert(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let (h, report) = load_data(cfg)?;
    let split = resolve_split(cfg, &h)?;
    let dir = out.join("expert");
    mkdir(&dir)?;
    let mut files = vec![write_config(&dir, cfg)?];
    if let Some(r) = &report {
        files.push(write_json(&dir.join("load_report.json"), r)?);
    }
    files.push(write_json(&dir.join("split.json"), &split_record(&h, &split))?);

    let reward = RewardSpec::True(cfg.reward.clone());
    let train_cfg = cfg.dqn.train_config(cfg.dqn.episodes, seeds::expert(cfg.seed));
    let (policy, outcome, trajectories) =
        irl_sampled::simulate_expert(&h, &split.train, &cfg.price, &reward, &train_cfg)?;
    let Policy::Greedy { normalizer, .. } = &policy else {
        unreachable!("training yields a greedy policy")
    };
    let meta = CheckpointMeta {
        normalizer: *normalizer,
        reward,
        episodes: cfg.dqn.episodes,
        trained: outcome.trained(),
    };
    files.extend(save_policy(&dir.join("checkpoint.bin"), &policy, &meta)?);
    let tj = dir.join("trajectories.json");
    data_io::write_trajectories_json(&trajectories, &tj)?;
    files.push(tj);
    let tc = dir.join("trajectories.csv");
    data_io::write_trajectories_csv(&trajectories, &tc)?;
    files.push(tc);
    files.push(write_csv(
        &dir.join("training_curve.csv"),
        &["episode", "epsilon", "reward"],
        &curve_rows(&outcome.curve, None),
    )?);
    Ok(files)
}

fn split_record(h: &Household, s: &Split) -> serde_json::Value {
    let dates = |idx: &[usize]| idx.iter().map(|&i| h.dates[i].to_string()).collect::<Vec<_>>();
    json!({
        "household": h.id,
        "train": dates(&s.train),
        "test": dates(&s.test),
    })
}

fn expert_trajectories(out: &Path) -> Result<Vec<Trajectory>, CliError> {
    let path = out.join("expert").join("trajectories.json");
    if !path.exists() {
        return Err(CliError::User(format!(
            "missing expert artifacts: {} (run simulate-expert first)",
            path.display()
        )));
    }
    data_io::read_trajectories_json(&path).map_err(|e| CliError::User(e.to_string()))
}

fn checkpoint_name(iteration: usize) -> String {
    format!("iter_{iteration:02}.bin")
}

fn learn_reward(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let expert = expert_trajectories(out)?;
    let (h, _) = load_data(cfg)?;
    let split = resolve_split(cfg, &h)?;
    let n_val = cfg.irl.validation_days.min(split.train.len());
    let validation = split.train[split.train.len() - n_val..].to_vec();
    let irl_cfg = cfg.irl_config();
    let result = irl_sampled::run_irl(
        &Expert::Recorded(expert),
        &h,
        &split.train,
        &validation,
        &cfg.price,
        &irl_cfg,
    )?;

    let dir = out.join("irl");
    let ckpt = dir.join("checkpoints");
    mkdir(&ckpt)?;
    let mut files = vec![write_config(&dir, cfg)?];
    files.push(write_json(&dir.join("result.json"), &result)?);
    let mut alpha_rows = Vec::new();
    let mut margin_rows = Vec::new();
    for r in &result.history {
        let mut row = vec![r.iteration.to_string()];
        row.extend(r.alpha.iter().map(f64::to_string));
        row.push(r.objective.to_string());
        alpha_rows.push(row);
        margin_rows.push(vec![
            r.iteration.to_string(),
            r.margin.to_string(),
            r.max_min_margin.to_string(),
            r.validation_mae.map_or(String::new(), |m| m.to_string()),
        ]);
    }
    files.push(write_csv(
        &dir.join("alpha_history.csv"),
        &["iteration", "alpha_0", "alpha_1", "alpha_2", "alpha_3", "alpha_4", "alpha_5", "objective"],
        &alpha_rows,
    )?);
    files.push(write_csv(
        &dir.join("margins.csv"),
        &["iteration", "margin", "max_min_margin", "validation_mae"],
        &margin_rows,
    )?);
    // policies[0] is the random start; agent k+1 was trained with alpha_k
    let mut curves = Vec::new();
    for (k, (cand, outcome)) in result.policies.iter().skip(1).zip(&result.training).enumerate() {
        let iteration = trained_iteration(&result, k);
        let Policy::Greedy { normalizer, .. } = &cand.policy else {
            unreachable!("agents are greedy")
        };
        let meta = CheckpointMeta {
            normalizer: *normalizer,
            reward: cand.reward.clone(),
            episodes: irl_cfg.agent.episodes,
            trained: outcome.trained(),
        };
        files.extend(save_policy(&ckpt.join(checkpoint_name(iteration)), &cand.policy, &meta)?);
        curves.extend(curve_rows(&outcome.curve, Some(iteration)));
    }
    files.push(write_csv(
        &dir.join("training_curves.csv"),
        &["iteration", "episode", "epsilon", "reward"],
        &curves,
    )?);
    Ok(files)
}

/// Iteration whose weights trained the `k`-th agent.
fn trained_iteration(result: &IrlResult, k: usize) -> usize {
    result
        .history
        .iter()
        .filter(|r| r.validation_mae.is_some())
        .nth(k)
        .map_or(k, |r| r.iteration)
}

fn read_result(out: &Path) -> Result<IrlResult, CliError> {
    let path = out.join("irl").join("result.json");
    let text = fs::read_to_string(&path).map_err(|_| {
        CliError::User(format!(
            "missing reward-learning artifacts: {} (run learn-reward first)",
            path.display()
        ))
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub days: usize,
    pub alpha: [f64; BASIS_COUNT],
    pub selected_iteration: usize,
    pub mae: metrics::Summary,
    pub mse: metrics::Summary,
    pub pearson: Option<metrics::PartialSummary>,
    pub expert_true_reward: f64,
    pub learned_true_reward: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn true_reward_mean(trajectories: &[Trajectory], reward: &RewardSpec) -> f64 {
    mean(trajectories.iter().map(|t| t.rescored(reward).iter().sum::<f64>()))
}

fn evaluate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let (expert_policy, _) = load_policy(&out.join("expert").join("checkpoint.bin"))?;
    let result = read_result(out)?;
    let ckpt_dir = out.join("irl").join("checkpoints");
    let (learned_policy, learned_meta) = load_policy(&ckpt_dir.join(checkpoint_name(result.selected_iteration)))?;
    let (h, _) = load_data(cfg)?;
    let split = resolve_split(cfg, &h)?;
    let days = &split.test;
    let true_reward = RewardSpec::True(cfg.reward.clone());

    let (expert, _) = evaluate_policy(&expert_policy, &h, days, &cfg.price, &true_reward)?;
    let (learned, _) = evaluate_policy(&learned_policy, &h, days, &cfg.price, &learned_meta.reward)?;

    let dir = out.join("eval");
    mkdir(&dir)?;
    let mut files = vec![write_config(&dir, cfg)?];

    let mut rows = Vec::new();
    let mut per_day = Vec::new();
    for (e, l) in expert.iter().zip(&learned) {
        let m = DayMetrics::compare(&e.provision(), &l.provision()).map_err(irl_dr_core::Error::from)?;
        rows.push(vec![
            e.day.to_string(),
            h.dates[e.day].to_string(),
            m.mae.to_string(),
            m.mse.to_string(),
            m.pearson.map_or(String::new(), |p| p.to_string()),
        ]);
        per_day.push(m);
    }
    files.push(write_csv(&dir.join("metrics.csv"), &["day", "date", "mae", "mse", "pearson"], &rows)?);
    let maes: Vec<f64> = per_day.iter().map(|m| m.mae).collect();
    let mses: Vec<f64> = per_day.iter().map(|m| m.mse).collect();
    let pearsons: Vec<Option<f64>> = per_day.iter().map(|m| m.pearson).collect();
    let summary = EvalSummary {
        days: days.len(),
        alpha: result.alpha,
        selected_iteration: result.selected_iteration,
        mae: metrics::aggregate(&maes).map_err(irl_dr_core::Error::from)?,
        mse: metrics::aggregate(&mses).map_err(irl_dr_core::Error::from)?,
        pearson: metrics::aggregate_partial(&pearsons).ok(),
        expert_true_reward: true_reward_mean(&expert, &true_reward),
        learned_true_reward: true_reward_mean(&learned, &true_reward),
    };
    files.push(write_json(&dir.join("summary.json"), &summary)?);

    let mut prov = Vec::new();
    for (name, set) in [("expert", &expert), ("learned", &learned)] {
        for t in set.iter() {
            for s in &t.steps {
                prov.push(vec![
                    name.to_string(),
                    t.day.to_string(),
                    h.dates[t.day].to_string(),
                    s.slot.to_string(),
                    s.state.baseline.to_string(),
                    s.dispatch.total.to_string(),
                    s.provision().to_string(),
                ]);
            }
        }
    }
    files.push(write_csv(
        &dir.join("provision.csv"),
        &["policy", "day", "date", "slot", "baseline", "total", "provision"],
        &prov,
    )?);

    // true reward of every trained agent on the test days
    let mut reward_rows = Vec::new();
    let mut agent_rewards = Vec::new();
    let expert_reward = summary.expert_true_reward;
    for r in result.history.iter().filter(|r| r.validation_mae.is_some()) {
        let (policy, meta) = load_policy(&ckpt_dir.join(checkpoint_name(r.iteration)))?;
        let (t, _) = evaluate_policy(&policy, &h, days, &cfg.price, &meta.reward)?;
        let value = true_reward_mean(&t, &true_reward);
        agent_rewards.push(value);
        reward_rows.push(vec![r.iteration.to_string(), expert_reward.to_string(), value.to_string()]);
    }
    files.push(write_csv(
        &dir.join("rewards.csv"),
        &["iteration", "expert_true_reward", "agent_true_reward"],
        &reward_rows,
    )?);

    let mut sched = Vec::new();
    for (name, set) in [("expert", &expert), ("learned", &learned)] {
        for t in set.iter() {
            sched.extend(schedule_rows(name, t, &h));
        }
    }
    files.push(write_csv(
        &dir.join("schedule.csv"),
        &["policy", "day", "slot", "appliance", "value"],
        &sched,
    )?);

    let first_e = &expert[0];
    let first_l = &learned[0];
    let (pe, pl) = (first_e.provision(), first_l.provision());
    files.push(write_text(
        &dir.join("provision.svg"),
        &svg::line_chart(
            &format!("DR provision on {}", h.dates[first_e.day]),
            &[("expert", &pe), ("learned", &pl)],
        ),
    )?);
    let flat = vec![expert_reward; agent_rewards.len()];
    files.push(write_text(
        &dir.join("rewards.svg"),
        &svg::line_chart(
            "mean true reward per test day by iteration",
            &[("expert", &flat), ("agent", &agent_rewards)],
        ),
    )?);
    let mut grid_rows = Vec::new();
    for (name, t) in [("expert", first_e), ("learned", first_l)] {
        for (m, label) in appliance_labels().iter().enumerate() {
            grid_rows.push((format!("{name} {label}"), schedule_grid(t, m)));
        }
    }
    let grid_refs: Vec<(&str, Vec<Option<f64>>)> = grid_rows.iter().map(|(l, v)| (l.as_str(), v.clone())).collect();
    files.push(write_text(
        &dir.join("schedule.svg"),
        &svg::heatmap(&format!("appliance schedule on {}", h.dates[first_e.day]), &grid_refs),
    )?);
    Ok(files)
}

fn appliance_labels() -> [&'static str; MAX_TIME_SHIFTABLE + 1] {
    let n = irl_dr_core::domain::TIME_SHIFTABLE_NAMES;
    [n[0], n[1], n[2], n[3], irl_dr_core::domain::CURTAILABLE_NAME]
}

/// Value of appliance column `m` (4 = AC) at every slot: decision codes
/// for time-shiftable appliances, served share for the AC.
fn schedule_grid(t: &Trajectory, m: usize) -> Vec<Option<f64>> {
    t.steps
        .iter()
        .map(|s| {
            if m < MAX_TIME_SHIFTABLE {
                schedule_code(s.dispatch.ts_decisions[m]).map(f64::from)
            } else if s.state.pc_demand > 0.0 {
                Some((s.dispatch.pc / s.state.pc_demand).clamp(0.0, 1.0))
            } else {
                None
            }
        })
        .collect()
}

fn schedule_rows(name: &str, t: &Trajectory, _h: &Household) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (m, label) in appliance_labels().iter().enumerate() {
        for (slot, v) in schedule_grid(t, m).into_iter().enumerate() {
            if let Some(v) = v {
                rows.push(vec![
                    name.to_string(),
                    t.day.to_string(),
                    slot.to_string(),
                    label.to_string(),
                    v.to_string(),
                ]);
            }
        }
    }
    debug_assert!(t.steps.len() == SLOTS_PER_DAY);
    rows
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub size: usize,
    pub gamma: f64,
    pub r_max: f64,
    pub best_agreement: Option<f64>,
    pub rows: Vec<irl_exact::SweepRow>,
}

fn bench_exact(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let grid = cfg.exact.gridworld();
    let (mdp, reference) = grid.build();
    let rows = lambda_sweep(&mdp, &reference, &cfg.exact.lambdas, cfg.exact.r_max)?;
    let best = rows.iter().filter_map(|r| r.agreement).fold(None, |b: Option<f64>, a| {
        Some(b.map_or(a, |b| b.max(a)))
    });
    let report = BenchReport {
        size: cfg.exact.size,
        gamma: cfg.exact.gamma,
        r_max: cfg.exact.r_max,
        best_agreement: best,
        rows,
    };
    let dir = out.join("bench");
    mkdir(&dir)?;
    let mut files = vec![write_config(&dir, cfg)?];
    files.push(write_json(&dir.join("report.json"), &report)?);
    let csv_rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.lambda.to_string(),
                r.agreement.map_or(String::new(), |a| a.to_string()),
                r.max_abs_reward.to_string(),
            ]
        })
        .collect();
    files.push(write_csv(
        &dir.join("report.csv"),
        &["lambda", "agreement", "max_abs_reward"],
        &csv_rows,
    )?);
    Ok(files)
}

/// Learned reward of a finished reward-learning run.
pub fn learned_reward(out: &Path) -> Result<LearnedReward, CliError> {
    Ok(read_result(out)?.learned_reward())
}
