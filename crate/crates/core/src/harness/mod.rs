//! Experiment drivers, configuration and persistence.
//!
//! Every driver takes an [`ExperimentConfig`], runs seeded episodes and
//! returns plain rows that can be written as CSV.

mod checkpoint;
mod report;

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{
    aui_episode, error_model_from_buffer, mean_std, pretrain, run_online_skipping, AgentConfig, EpisodeRecord,
};
use crate::buffer::ReplayBuffer;
use crate::dynamics::{DeltaModel, ModelConfig, TrainConfig};
use crate::envs::{EnvKind, EnvSpec};
use crate::error::{Error, Result};
use crate::planner::CemConfig;
use crate::skip::{ErrorModel, Policy, SkipPolicyConfig};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MAGIC, VERSION};
pub use report::{
    normalize_rewards, read_csv_rows, spearman, summarize, write_csv_rows, ErrorStepRow, OnlineRow, PretrainRow,
    ResultRow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Pretrain,
    ErrorAnalysis,
    Sweep,
    Online,
}

/// Hyperparameter grids of the sweep, and the CB grid of the online run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub nskip: Vec<usize>,
    pub fsa: Vec<f64>,
    pub cb: Vec<f64>,
}

impl Default for SweepGrid {
    /// A reduced grid that runs in minutes.
    fn default() -> Self {
        Self { nskip: vec![1, 2, 4], fsa: vec![0.5, 0.9, 0.99], cb: vec![0.25, 0.5, 1.0, 2.0] }
    }
}

impl SweepGrid {
    /// The complete grid: every n below 20, eleven FSA percentiles and CB
    /// multipliers from 0 to 2 in steps of 0.05.
    pub fn full() -> Self {
        Self {
            nskip: (1..20).collect(),
            fsa: vec![0.1, 0.15, 0.25, 0.35, 0.5, 0.75, 0.85, 0.9, 0.95, 0.99, 0.999],
            cb: (0..=40).map(|i| i as f64 * 0.05).collect(),
        }
    }
}

/// Root of the JSON configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    pub env: EnvKind,
    pub task_horizon: Option<usize>,
    pub planner: CemConfig,
    pub skip: SkipPolicyConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Training iterations per pre-training run, or per online run.
    pub n_iterations: usize,
    pub sweep: SweepGrid,
    pub runs_per_setting: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/model.auim`.
    pub checkpoint: Option<PathBuf>,
    pub pretrain_seeds: Vec<u64>,
    /// Significance level of the normality test behind FSA.
    pub significance: f64,
    /// Values of n for the error analysis.
    pub error_analysis_n: Vec<usize>,
    /// Run the seeds of one setting on the rayon pool.
    pub parallel_runs: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            env: EnvKind::Cartpole,
            task_horizon: None,
            planner: CemConfig::default(),
            skip: SkipPolicyConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            n_iterations: 5,
            sweep: SweepGrid::default(),
            runs_per_setting: 10,
            seed: 0,
            output_dir: PathBuf::from("out"),
            checkpoint: None,
            pretrain_seeds: (0..5).collect(),
            significance: 0.05,
            error_analysis_n: (0..20).collect(),
            parallel_runs: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => e.into(),
        })?;
        Self::from_json(&text)
    }

    /// Smaller networks and a cheaper planner that keep a full experiment
    /// on one CPU core in the range of minutes.
    pub fn desk(env: EnvKind) -> Self {
        Self {
            env,
            planner: CemConfig { population: 100, elites: 10, iterations: 3, particles: 10, ..Default::default() },
            model: ModelConfig { hidden: 32, ..Default::default() },
            n_iterations: 3,
            ..Default::default()
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.output_dir.join("model.auim"))
    }

    pub fn env_spec(&self) -> Result<EnvSpec> {
        self.agent().env_spec()
    }

    /// Agent settings shared by every run of the experiment.
    pub fn agent(&self) -> AgentConfig {
        AgentConfig {
            env: self.env,
            task_horizon: self.task_horizon,
            planner: self.planner.clone(),
            skip: self.skip.clone(),
            n_iterations: self.n_iterations,
            train_model: true,
            seed: self.seed,
            model: self.model.clone(),
            train: self.train.clone(),
        }
    }

    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        if let Some(k) = self.experiment {
            if k != kind {
                return Err(Error::config(format!("config is for {k:?}, not {kind:?}")));
            }
        }
        self.agent().validate()?;
        if self.runs_per_setting == 0 {
            return Err(Error::config("runs_per_setting must be at least 1"));
        }
        let horizon = self.env_spec()?.plan_horizon;
        match kind {
            ExperimentKind::Pretrain if self.pretrain_seeds.is_empty() => {
                Err(Error::config("pretrain_seeds must not be empty"))
            }
            ExperimentKind::Sweep => {
                let g = &self.sweep;
                if g.nskip.is_empty() || g.fsa.is_empty() || g.cb.is_empty() {
                    return Err(Error::config("sweep lists must not be empty"));
                }
                for p in self.sweep_policies() {
                    p.validate(horizon)?;
                }
                Ok(())
            }
            ExperimentKind::ErrorAnalysis => {
                if self.error_analysis_n.is_empty() {
                    return Err(Error::config("error_analysis_n must not be empty"));
                }
                self.error_analysis_n.iter().try_for_each(|&n| SkipPolicyConfig::nskip(n).validate(horizon))
            }
            ExperimentKind::Online => self.sweep.cb.iter().try_for_each(|&c| SkipPolicyConfig::cb(c).validate(horizon)),
            _ => Ok(()),
        }
    }

    /// Baseline first, then every configured policy; `n = 0` is the
    /// baseline and is not repeated.
    pub fn sweep_policies(&self) -> Vec<SkipPolicyConfig> {
        let mut out = vec![SkipPolicyConfig::nskip(0)];
        out.extend(self.sweep.nskip.iter().filter(|&&n| n > 0).map(|&n| SkipPolicyConfig::nskip(n)));
        out.extend(self.sweep.fsa.iter().map(|&c| SkipPolicyConfig::fsa(c)));
        out.extend(self.sweep.cb.iter().map(|&c| SkipPolicyConfig::cb(c)));
        out
    }

    fn prepare_output(&self) -> Result<()> {
        fs::create_dir_all(&self.output_dir)?;
        Ok(())
    }
}

/// One frozen-model episode per seed index. Run `r` of every setting starts
/// from the same generator state, so settings are compared on the same
/// initial conditions.
pub fn evaluate<M: DeltaModel + ?Sized>(
    spec: &EnvSpec,
    cem: &CemConfig,
    model: &M,
    policy: &Policy,
    runs: usize,
    seed: u64,
    parallel: bool,
) -> Result<Vec<EpisodeRecord>> {
    let one = |r: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        aui_episode(spec, cem, model, policy, &mut ReplayBuffer::new(), &mut rng)
    };
    if parallel {
        (0..runs).into_par_iter().map(one).collect()
    } else {
        (0..runs).map(one).collect()
    }
}

/// Result of the pre-training driver.
#[derive(Debug, Clone)]
pub struct PretrainSummary {
    pub rows: Vec<PretrainRow>,
    pub checkpoint: PathBuf,
}

/// Pre-train from scratch once per seed, keep the best model and save it
/// with its replay buffer.
pub fn run_pretrain(cfg: &ExperimentConfig) -> Result<PretrainSummary> {
    cfg.validate(ExperimentKind::Pretrain)?;
    cfg.prepare_output()?;
    let out = pretrain(&cfg.agent(), &cfg.pretrain_seeds)?;
    let path = cfg.checkpoint_path();
    save_checkpoint(&path, &out.model, &out.buffer)?;
    let rows: Vec<PretrainRow> = cfg
        .pretrain_seeds
        .iter()
        .zip(&out.final_rewards)
        .enumerate()
        .map(|(run, (&seed, &final_reward))| PretrainRow { run, seed, final_reward, selected: run == out.best_run })
        .collect();
    write_csv_rows(&cfg.output_dir.join("pretrain.csv"), &rows, None)?;
    Ok(PretrainSummary { rows, checkpoint: path })
}

/// Errors grouped by steps since the last replan, for every n.
pub fn error_rows(n: usize, records: &[EpisodeRecord]) -> Vec<ErrorStepRow> {
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    for rec in records {
        for (&d, &e) in rec.step_depths.iter().zip(&rec.step_errors) {
            if d <= n {
                bins[d].push(e);
            }
        }
    }
    bins.iter()
        .enumerate()
        .filter(|(_, b)| !b.is_empty())
        .map(|(step, b)| {
            let (mean, std) = mean_std(b);
            ErrorStepRow {
                n,
                step_index: step,
                count: b.len(),
                mean_err: mean,
                std_err: std,
                min_err: b.iter().copied().fold(f64::INFINITY, f64::min),
                max_err: b.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

/// For each n, run N-Skip episodes with the pre-trained model and report
/// prediction-error statistics per step since the last replan.
pub fn run_error_analysis(cfg: &ExperimentConfig) -> Result<Vec<ErrorStepRow>> {
    cfg.validate(ExperimentKind::ErrorAnalysis)?;
    let (model, _) = load_checkpoint(&cfg.checkpoint_path())?;
    cfg.prepare_output()?;
    let spec = cfg.env_spec()?;
    let mut rows = Vec::new();
    for &n in &cfg.error_analysis_n {
        let records = evaluate(
            &spec,
            &cfg.planner,
            &model,
            &Policy::NSkip { n },
            cfg.runs_per_setting,
            cfg.seed,
            cfg.parallel_runs,
        )?;
        rows.extend(error_rows(n, &records));
    }
    write_csv_rows(&cfg.output_dir.join("error_analysis.csv"), &rows, None)?;
    Ok(rows)
}

/// Evaluate every sweep policy with the pre-trained model.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate(ExperimentKind::Sweep)?;
    let (model, buffer) = load_checkpoint(&cfg.checkpoint_path())?;
    cfg.prepare_output()?;
    let spec = cfg.env_spec()?;
    let errors = if cfg.sweep.fsa.is_empty() {
        None
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let m = error_model_from_buffer(&model, &buffer, cfg.planner.particles, cfg.significance, &mut rng)?;
        m.write_csv(fs::File::create(cfg.output_dir.join("e0_errors.csv"))?)?;
        Some(m)
    };
    let mut rows = Vec::new();
    for pc in cfg.sweep_policies() {
        rows.push(sweep_row(cfg, &spec, &model, &pc, errors.as_ref())?);
    }
    normalize_rewards(&mut rows);
    let note = format!("# normalized rewards use min/max over all rows of {}", spec.name());
    write_csv_rows(&cfg.output_dir.join("sweep.csv"), &rows, Some(&note))?;
    Ok(rows)
}

fn sweep_row<M: DeltaModel + ?Sized>(
    cfg: &ExperimentConfig,
    spec: &EnvSpec,
    model: &M,
    pc: &SkipPolicyConfig,
    errors: Option<&ErrorModel>,
) -> Result<ResultRow> {
    let policy = pc.build(spec.plan_horizon, errors)?;
    let records = evaluate(spec, &cfg.planner, model, &policy, cfg.runs_per_setting, cfg.seed, cfg.parallel_runs)?;
    Ok(summarize(pc, &records))
}

/// Train from scratch with no skipping and with CB at each configured c,
/// recording the per-iteration series averaged over the runs.
pub fn run_online(cfg: &ExperimentConfig) -> Result<Vec<OnlineRow>> {
    cfg.validate(ExperimentKind::Online)?;
    cfg.prepare_output()?;
    let mut settings = vec![SkipPolicyConfig::nskip(0)];
    settings.extend(cfg.sweep.cb.iter().map(|&c| SkipPolicyConfig::cb(c)));
    let mut rows = Vec::new();
    for pc in settings {
        let agent = AgentConfig { skip: pc.clone(), ..cfg.agent() };
        let run = |r: usize| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            run_online_skipping(&agent, &mut rng)
        };
        let series: Vec<_> = if cfg.parallel_runs {
            (0..cfg.runs_per_setting).into_par_iter().map(run).collect::<Result<_>>()?
        } else {
            (0..cfg.runs_per_setting).map(run).collect::<Result<_>>()?
        };
        let mut cumulative = 0.0;
        for it in 0..cfg.n_iterations {
            let at: Vec<_> = series.iter().map(|s| &s[it]).collect();
            let k = at.len() as f64;
            let rewards: Vec<f64> = at.iter().map(|x| x.reward).collect();
            let calls = at.iter().map(|x| x.recalc_count as f64).sum::<f64>() / k;
            cumulative += calls;
            rows.push(OnlineRow {
                setting: pc.label(),
                iteration: it,
                wall_seconds: at.iter().map(|x| x.wall_seconds).sum::<f64>() / k,
                reward_mean: mean_std(&rewards).0,
                reward_min: rewards.iter().copied().fold(f64::INFINITY, f64::min),
                reward_max: rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                recalc_pct: at.iter().map(|x| x.recalc_pct).sum::<f64>() / k,
                planner_calls: calls,
                planner_calls_cum: cumulative,
                err_mean: at.iter().map(|x| x.error_mean).sum::<f64>() / k,
                err_std: at.iter().map(|x| x.error_std).sum::<f64>() / k,
            });
        }
    }
    write_csv_rows(&cfg.output_dir.join("online.csv"), &rows, None)?;
    Ok(rows)
}
