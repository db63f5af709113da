//! Experiment protocols behind `hexpert run`. Each protocol writes its
//! metric CSVs, checkpoints and a manifest into one output directory and
//! returns the numbers the acceptance suite checks.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use hexpert::approx::Activation;
use hexpert::density::{bounding_box, DensityBank, DensityConfig, DensityMetrics};
use hexpert::distrib::{ResourceParams, Simplex};
use hexpert::meta::{mean_confidence, write_partition_csv as write_meta_partition, MetaBank, MetaConfig};
use hexpert::oracle::{decompose, solve_flagged, SolveReport, TabularProblem};
use hexpert::rl::{write_metrics_csv, write_partition_csv as write_rl_partition, IterationMetrics, RlBank, RlConfig};
use hexpert::rng::{child_rng, child_seed};
use hexpert::supervised::{class_batch, BankConfig, ExpertBank, ExpertOutput, RegressionLoss};
use hexpert::tasks::{
    corner_means, make_classification, sample_mixture, sample_sine_task, sine_dataset, CartPole, LabeledDataset,
    TaskDataset, AMPLITUDE_RANGE, DEFAULT_X_RANGE, PHASE_RANGE,
};
use rand::Rng as _;
use serde::Serialize;

use crate::config::{ExperimentConfig, Kind, SupervisedSection};

/// Writes files into one directory, each through a temporary name that is
/// renamed into place once complete.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Artifacts { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<()> {
        let tmp = self.dir.join(format!(".{name}.tmp"));
        let mut w = BufWriter::new(File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?);
        body(&mut w)?;
        w.flush()?;
        drop(w);
        fs::rename(&tmp, self.dir.join(name))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
            writeln!(w)
        })
    }
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleOutcome {
    pub report: SolveReport,
    pub utility: f64,
    pub rate_xm: f64,
    pub rate_xy_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldRow {
    pub experts: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: usize,
    pub fold: usize,
    pub accuracy: f64,
    pub rate_xm: f64,
    pub rate_xy_m: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityRun {
    pub experts: usize,
    pub means: Vec<Vec<f64>>,
    pub prior_m: Vec<f64>,
    pub last: DensityMetrics,
}

#[derive(Clone, Debug, Serialize)]
pub struct RlRun {
    pub seed: usize,
    pub lengths: Vec<usize>,
    pub mean_length: f64,
    pub usage: Vec<f64>,
    pub last: IterationMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdaptRow {
    pub experts: usize,
    pub seed: usize,
    pub pre_mse: f64,
    pub post_mse: f64,
    pub rate_xm: f64,
    pub improved_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfidenceRow {
    pub experts: usize,
    pub seed: usize,
    pub shots: usize,
    pub confidence: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MetaOutcome {
    pub adaptation: Vec<AdaptRow>,
    pub confidence: Vec<ConfidenceRow>,
}

#[derive(Clone, Debug, Serialize)]
pub enum Outcome {
    Oracle(OracleOutcome),
    Supervised(Vec<FoldRow>),
    Sweep(Vec<FoldRow>),
    Density(Vec<DensityRun>),
    Rl(Vec<RlRun>),
    Meta(MetaOutcome),
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub outcome: Outcome,
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub wall_seconds: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    name: &'a str,
    kind: String,
    version: &'a str,
    config: toml::Table,
    wall_seconds: f64,
    files: &'a [String],
}

/// Runs one validated config into `dir`.
pub fn run(config: &ExperimentConfig, dir: &Path) -> Result<RunReport> {
    let start = Instant::now();
    let mut art = Artifacts::create(dir)?;
    let outcome = match config.kind {
        Kind::Oracle => Outcome::Oracle(run_oracle(config, &mut art)?),
        Kind::Supervised => Outcome::Supervised(run_supervised(config, &mut art)?),
        Kind::RateUtilitySweep => Outcome::Sweep(run_sweep(config, &mut art)?),
        Kind::Density => Outcome::Density(run_density(config, &mut art)?),
        Kind::Rl => Outcome::Rl(run_rl(config, &mut art)?),
        Kind::Meta => Outcome::Meta(run_meta(config, &mut art)?),
    };
    let wall_seconds = start.elapsed().as_secs_f64();
    let mut files = art.files().to_vec();
    files.push("manifest.json".into());
    let manifest = Manifest {
        name: config.name(),
        kind: config.kind.to_string(),
        version: env!("CARGO_PKG_VERSION"),
        config: config.resolved_view(),
        wall_seconds,
        files: &files,
    };
    art.json("manifest.json", &manifest)?;
    Ok(RunReport { outcome, dir: dir.to_path_buf(), files, wall_seconds })
}

fn run_oracle(config: &ExperimentConfig, art: &mut Artifacts) -> Result<OracleOutcome> {
    let o = &config.oracle;
    let rp = config.resource_params();
    let prob = match &o.problem {
        Some(p) => TabularProblem::new(Simplex::new(p.px.clone())?, p.utility.clone(), o.experts)?,
        None => TabularProblem::random(o.states, o.actions, o.experts, &mut child_rng(config.seed, "problem", 0)),
    };
    let report = solve_flagged(&prob, &rp, o.tol, o.max_sweeps, &mut child_rng(config.seed, "oracle", 0))?;
    let (utility, rate_xm, rate_xy_m) = decompose(&prob, &report.solution)?;
    art.write("objective.csv", |w| {
        writeln!(w, "sweep,objective")?;
        for (i, v) in report.objective_trace.iter().enumerate() {
            writeln!(w, "{},{}", i + 1, v)?;
        }
        Ok(())
    })?;
    art.write("summary.csv", |w| {
        writeln!(w, "sweeps,converged,last_delta,objective,utility,rate_xm,rate_xy_m")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            report.sweeps, report.converged, report.last_delta, report.solution.objective, utility, rate_xm, rate_xy_m
        )
    })?;
    art.json("problem.json", &prob)?;
    art.json("solution.json", &report)?;
    if !report.converged {
        anyhow::bail!("oracle did not converge within {} sweeps (last delta {})", report.sweeps, report.last_delta);
    }
    Ok(OracleOutcome { report, utility, rate_xm, rate_xy_m })
}

fn bank_config(s: &SupervisedSection, classes: usize, experts: usize, rp: ResourceParams) -> BankConfig {
    BankConfig {
        input_dim: 2,
        num_experts: experts,
        output: ExpertOutput::Categorical { classes },
        selector_hidden: s.selector_hidden.clone(),
        expert_hidden: s.expert_hidden.clone(),
        activation: Activation::Tanh,
        rp,
        selector_lr: s.selector_lr,
        expert_lr: s.expert_lr,
        baseline_decay: 0.99,
        loss: RegressionLoss::Squared,
    }
}

/// Trains one bank on one split and scores it on the held-out part.
fn fit_fold(
    config: &ExperimentConfig,
    data: &LabeledDataset,
    cell: (usize, ResourceParams),
    seed: usize,
    fold: usize,
    stream: &str,
) -> Result<(FoldRow, ExpertBank)> {
    let s = &config.supervised;
    let index = (seed * s.folds + fold) as u64;
    let (train, test) = data.split(s.test_fraction, &mut child_rng(config.seed, "split", index));
    let mut rng = child_rng(config.seed, stream, index);
    let (experts, rp) = cell;
    let mut bank = ExpertBank::new(bank_config(s, data.num_classes, experts, rp), &mut rng)?;
    for _ in 0..s.steps {
        let batch = class_batch(&train, s.batch, &mut rng);
        bank.train_step(&batch, &mut rng)?;
    }
    let eval = bank.evaluate(&test)?;
    let row = FoldRow {
        experts,
        beta1: rp.beta1,
        beta2: rp.beta2,
        seed,
        fold,
        accuracy: eval.accuracy.unwrap_or(f64::NAN),
        rate_xm: eval.rate_xm,
        rate_xy_m: eval.rate_xy_given_m,
    };
    Ok((row, bank))
}

fn datasets(config: &ExperimentConfig) -> Result<Vec<LabeledDataset>> {
    let s = &config.supervised;
    (0..s.seeds)
        .map(|i| Ok(make_classification(&s.dataset, s.samples, s.noise, child_seed(config.seed, "data", i as u64))?))
        .collect()
}

fn write_folds(art: &mut Artifacts, name: &str, rows: &[FoldRow]) -> Result<()> {
    art.write(name, |w| {
        writeln!(w, "experts,beta1,beta2,seed,fold,accuracy,rate_xm,rate_xy_m")?;
        for r in rows {
            writeln!(w, "{},{},{},{},{},{},{},{}", r.experts, r.beta1, r.beta2, r.seed, r.fold, r.accuracy, r.rate_xm, r.rate_xy_m)?;
        }
        Ok(())
    })
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Selector and prediction over a regular grid covering the data.
fn write_decision_grid(w: &mut impl Write, bank: &ExpertBank, data: &LabeledDataset, n: usize) -> io::Result<()> {
    let (lo, hi) = bounding_box(&data.inputs);
    writeln!(w, "x1,x2,expert,prediction")?;
    for i in 0..n {
        for j in 0..n {
            let t = |k: usize, a: f64, b: f64| a + (b - a) * k as f64 / (n - 1) as f64;
            let x = [t(i, lo[0], hi[0]), t(j, lo[1], hi[1])];
            let m = bank.selector_probs(&x).map_err(io::Error::other)?.argmax();
            let y = match bank.expert_output(m, &x).map_err(io::Error::other)? {
                hexpert::approx::Output::Probs(q) => q.argmax(),
                _ => 0,
            };
            writeln!(w, "{},{},{},{}", x[0], x[1], m, y)?;
        }
    }
    Ok(())
}

fn run_supervised(config: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<FoldRow>> {
    let s = &config.supervised;
    let rp = config.resource_params();
    let data = datasets(config)?;
    let mut rows = Vec::new();
    for &m in &s.experts {
        for (seed, d) in data.iter().enumerate() {
            for fold in 0..s.folds {
                let (row, bank) = fit_fold(config, d, (m, rp), seed, fold, &format!("train-m{m}"))?;
                if seed == 0 && fold == 0 {
                    art.json(&format!("checkpoint_m{m}.json"), &bank)?;
                    art.write(&format!("partition_m{m}.csv"), |w| write_decision_grid(w, &bank, d, 50))?;
                }
                rows.push(row);
            }
        }
    }
    write_folds(art, "folds.csv", &rows)?;
    art.write("summary.csv", |w| {
        writeln!(w, "experts,mean_accuracy,std_accuracy,mean_rate_xm,mean_rate_xy_m")?;
        for &m in &s.experts {
            let sel: Vec<&FoldRow> = rows.iter().filter(|r| r.experts == m).collect();
            let (acc, sd) = mean_std(&sel.iter().map(|r| r.accuracy).collect::<Vec<_>>());
            let (rxm, _) = mean_std(&sel.iter().map(|r| r.rate_xm).collect::<Vec<_>>());
            let (rxy, _) = mean_std(&sel.iter().map(|r| r.rate_xy_m).collect::<Vec<_>>());
            writeln!(w, "{m},{acc},{sd},{rxm},{rxy}")?;
        }
        Ok(())
    })?;
    Ok(rows)
}

fn run_sweep(config: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<FoldRow>> {
    let s = &config.supervised;
    let sw = &config.sweep;
    let base = config.resource_params();
    let data = datasets(config)?;
    let mut rows = Vec::new();
    let mut cell = 0;
    for &b1 in &sw.beta1 {
        for &b2 in &sw.beta2 {
            let rp = ResourceParams { beta1: b1, beta2: b2, ..base };
            for (seed, d) in data.iter().enumerate() {
                for fold in 0..s.folds {
                    rows.push(fit_fold(config, d, (sw.experts, rp), seed, fold, &format!("train-cell{cell}"))?.0);
                }
            }
            cell += 1;
        }
    }
    write_folds(art, "sweep.csv", &rows)?;
    art.write("surface.csv", |w| {
        writeln!(w, "beta1,beta2,mean_rate_xm,mean_rate_xy_m,mean_accuracy,std_accuracy")?;
        for &b1 in &sw.beta1 {
            for &b2 in &sw.beta2 {
                let sel: Vec<&FoldRow> = rows.iter().filter(|r| r.beta1 == b1 && r.beta2 == b2).collect();
                let (acc, sd) = mean_std(&sel.iter().map(|r| r.accuracy).collect::<Vec<_>>());
                let (rxm, _) = mean_std(&sel.iter().map(|r| r.rate_xm).collect::<Vec<_>>());
                let (rxy, _) = mean_std(&sel.iter().map(|r| r.rate_xy_m).collect::<Vec<_>>());
                writeln!(w, "{b1},{b2},{rxm},{rxy},{acc},{sd}")?;
            }
        }
        Ok(())
    })?;
    Ok(rows)
}

fn run_density(config: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<DensityRun>> {
    let d = &config.density;
    let data = sample_mixture(&corner_means(), d.cov_scale, d.samples, &mut child_rng(config.seed, "data", 0))?.points;
    let (lo, hi) = bounding_box(&data);
    art.write("data.csv", |w| {
        writeln!(w, "x1,x2")?;
        data.iter().try_for_each(|p| writeln!(w, "{}", join(p)))
    })?;
    let mut runs = Vec::new();
    for &m in &d.experts {
        let cfg = DensityConfig {
            dim: 2,
            num_experts: m,
            selector_hidden: d.selector_hidden.clone(),
            rp: config.resource_params(),
            lambda: d.lambda,
            nu: None,
            prior_lambda: d.prior_lambda,
            selector_lr: d.selector_lr,
            expert_lr: d.expert_lr,
            baseline_decay: 0.99,
        };
        let mut rng = child_rng(config.seed, &format!("density-m{m}"), 0);
        let mut bank = DensityBank::new(cfg, &lo, &hi, &mut rng)?;
        let mut log = Vec::new();
        let mut window = DensityMetrics::default();
        let mut last = DensityMetrics::default();
        for step in 1..=d.steps {
            let batch: Vec<Vec<f64>> = (0..d.batch).map(|_| data[rng.random_range(0..data.len())].clone()).collect();
            let met = bank.train_step(&batch, &mut rng)?;
            window.free_energy += met.free_energy;
            window.loglik += met.loglik;
            window.rate_xm += met.rate_xm;
            window.expert_kl += met.expert_kl;
            if step % d.log_every == 0 || step == d.steps {
                let n = (step - 1) % d.log_every + 1;
                let k = n as f64;
                last = DensityMetrics {
                    free_energy: window.free_energy / k,
                    loglik: window.loglik / k,
                    rate_xm: window.rate_xm / k,
                    expert_kl: window.expert_kl / k,
                };
                log.push((step, last.clone(), bank.prior_m.probs().to_vec()));
                window = DensityMetrics::default();
            }
        }
        art.write(&format!("metrics_m{m}.csv"), |w| {
            let pm: Vec<String> = (0..m).map(|i| format!("prior_m_{i}")).collect();
            writeln!(w, "step,free_energy,loglik,rate_xm,expert_kl,{}", pm.join(","))?;
            for (step, r, p) in &log {
                writeln!(w, "{step},{},{},{},{},{}", r.free_energy, r.loglik, r.rate_xm, r.expert_kl, join(p))?;
            }
            Ok(())
        })?;
        art.write(&format!("experts_m{m}.csv"), |w| {
            writeln!(w, "expert,omega1,omega2,prior_m")?;
            for (i, (e, p)) in bank.experts.iter().zip(bank.prior_m.probs()).enumerate() {
                writeln!(w, "{i},{},{p}", join(&e.omega))?;
            }
            Ok(())
        })?;
        if d.grid_points > 1 {
            art.write(&format!("grid_m{m}.csv"), |w| bank.write_grid_csv(w, (lo[0], lo[1]), (hi[0], hi[1]), d.grid_points))?;
        }
        art.json(&format!("mixture_m{m}.json"), &bank.export())?;
        art.json(&format!("checkpoint_m{m}.json"), &bank)?;
        runs.push(DensityRun {
            experts: m,
            means: bank.experts.iter().map(|e| e.omega.clone()).collect(),
            prior_m: bank.prior_m.probs().to_vec(),
            last,
        });
    }
    Ok(runs)
}

fn run_rl(config: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<RlRun>> {
    let r = &config.rl;
    let mut runs = Vec::new();
    for seed in 0..r.seeds {
        let cfg = RlConfig {
            state_dim: 4,
            action_dim: 1,
            num_experts: r.experts,
            selector_hidden: r.selector_hidden.clone(),
            critic_hidden: r.critic_hidden.clone(),
            expert_hidden: r.expert_hidden.clone(),
            activation: Activation::Tanh,
            rp: config.resource_params(),
            selector_lr: r.selector_lr,
            actor_lr: r.actor_lr,
            critic_lr: r.critic_lr,
            huber_delta: r.huber_delta,
            critic_epochs: r.critic_epochs,
            state_scale: (!r.state_scale.is_empty()).then(|| r.state_scale.clone()),
        };
        let mut rng = child_rng(config.seed, "rl", seed as u64);
        let mut bank = RlBank::new(cfg, &mut rng)?;
        let mut envs = vec![CartPole { max_steps: r.max_steps, ..CartPole::default() }];
        let mut rows = Vec::with_capacity(r.iterations);
        for _ in 0..r.iterations {
            rows.push(bank.train_iteration(&mut envs, r.batch, r.max_steps, &mut rng)?);
        }
        let mut env = CartPole { max_steps: r.max_steps, ..CartPole::default() };
        let eval = bank.evaluate(&mut env, r.eval_episodes, r.max_steps, &mut child_rng(config.seed, "rl-eval", seed as u64))?;
        art.write(&format!("metrics_s{seed}.csv"), |w| write_metrics_csv(w, &rows))?;
        art.write(&format!("partition_s{seed}.csv"), |w| write_rl_partition(w, &eval.partition))?;
        art.json(&format!("checkpoint_s{seed}.json"), &bank)?;
        runs.push(RlRun {
            seed,
            lengths: eval.lengths.clone(),
            mean_length: eval.mean_length,
            usage: eval.usage(r.experts),
            last: rows.last().cloned().unwrap_or_default(),
        });
    }
    art.write("eval.csv", |w| {
        writeln!(w, "seed,episode,length")?;
        for run in &runs {
            for (i, l) in run.lengths.iter().enumerate() {
                writeln!(w, "{},{},{}", run.seed, i, l)?;
            }
        }
        Ok(())
    })?;
    art.write("summary.csv", |w| {
        let us: Vec<String> = (0..r.experts).map(|i| format!("usage_{i}")).collect();
        writeln!(w, "seed,mean_length,{}", us.join(","))?;
        for run in &runs {
            writeln!(w, "{},{},{}", run.seed, run.mean_length, join(&run.usage))?;
        }
        Ok(())
    })?;
    Ok(runs)
}

/// Cell centres of `n` equal intervals.
fn centres(range: (f64, f64), n: usize) -> Vec<f64> {
    (0..n).map(|i| range.0 + (range.1 - range.0) * (i as f64 + 0.5) / n as f64).collect()
}

fn run_meta(config: &ExperimentConfig, art: &mut Artifacts) -> Result<MetaOutcome> {
    let c = &config.meta;
    let mut adaptation = Vec::new();
    let mut confidence = Vec::new();
    let amps = centres(AMPLITUDE_RANGE, c.grid);
    let phases = centres(PHASE_RANGE, c.grid);
    for &m in &c.experts {
        for seed in 0..c.seeds {
            let cfg = MetaConfig {
                num_experts: m,
                bins: c.bins,
                x_range: DEFAULT_X_RANGE,
                selector_hidden: c.selector_hidden.clone(),
                expert_hidden: c.expert_hidden.clone(),
                activation: Activation::Tanh,
                rp: config.resource_params(),
                selector_lr: c.selector_lr,
                expert_lr: c.expert_lr,
                baseline_decay: 0.99,
                loss: RegressionLoss::Huber { delta: c.huber_delta },
                adapt_lr: c.adapt_lr,
            };
            let mut rng = child_rng(config.seed, &format!("meta-m{m}"), seed as u64);
            let mut bank = MetaBank::new(cfg, &mut rng)?;
            let mut log = Vec::new();
            let mut window = [0.0; 3];
            for episode in 1..=c.episodes {
                let tasks = (0..c.tasks_per_episode)
                    .map(|_| {
                        let k = c.train_shots[rng.random_range(0..c.train_shots.len())];
                        let task = sample_sine_task(&mut rng);
                        sine_dataset(task, k, DEFAULT_X_RANGE, &mut rng)
                    })
                    .collect::<std::result::Result<Vec<TaskDataset>, _>>()?;
                let met = bank.train_episode(&tasks, c.adaptation_steps, &mut rng)?;
                window[0] += met.free_energy;
                window[1] += met.val_loss;
                window[2] += met.rate_xm;
                if episode % c.log_every == 0 || episode == c.episodes {
                    let k = ((episode - 1) % c.log_every + 1) as f64;
                    log.push((episode, window.map(|v| v / k), met.prior_m.clone()));
                    window = [0.0; 3];
                }
            }
            art.write(&format!("metrics_m{m}_s{seed}.csv"), |w| {
                let pm: Vec<String> = (0..m).map(|i| format!("prior_m_{i}")).collect();
                writeln!(w, "episode,free_energy,val_loss,rate_xm,{}", pm.join(","))?;
                for (e, v, p) in &log {
                    writeln!(w, "{e},{},{},{},{}", v[0], v[1], v[2], join(p))?;
                }
                Ok(())
            })?;

            let mut erng = child_rng(config.seed, "meta-eval", seed as u64);
            let tasks = (0..c.eval_tasks)
                .map(|_| {
                    let task = sample_sine_task(&mut erng);
                    sine_dataset(task, c.eval_shots, DEFAULT_X_RANGE, &mut erng)
                })
                .collect::<std::result::Result<Vec<TaskDataset>, _>>()?;
            let ev = bank.evaluate(&tasks, c.eval_steps)?;
            adaptation.push(AdaptRow {
                experts: m,
                seed,
                pre_mse: ev.pre_mse,
                post_mse: ev.post_mse,
                rate_xm: ev.rate_xm,
                improved_fraction: ev.improved_fraction,
            });
            for &k in &c.confidence_shots {
                let mut mrng = child_rng(config.seed, &format!("meta-map-k{k}"), seed as u64);
                let cells = bank.partition_map(&amps, &phases, k, c.draws, &mut mrng)?;
                confidence.push(ConfidenceRow { experts: m, seed, shots: k, confidence: mean_confidence(&cells) });
                if seed == 0 {
                    art.write(&format!("partition_m{m}_k{k}.csv"), |w| write_meta_partition(w, &cells))?;
                }
            }
            if seed == 0 {
                art.json(&format!("checkpoint_m{m}.json"), &bank)?;
            }
        }
    }
    art.write("adaptation.csv", |w| {
        writeln!(w, "experts,seed,pre_mse,post_mse,rate_xm,improved_fraction")?;
        for r in &adaptation {
            writeln!(w, "{},{},{},{},{},{}", r.experts, r.seed, r.pre_mse, r.post_mse, r.rate_xm, r.improved_fraction)?;
        }
        Ok(())
    })?;
    art.write("confidence.csv", |w| {
        writeln!(w, "experts,seed,shots,confidence")?;
        for r in &confidence {
            writeln!(w, "{},{},{},{}", r.experts, r.seed, r.shots, r.confidence)?;
        }
        Ok(())
    })?;
    Ok(MetaOutcome { adaptation, confidence })
}

/// Output directory: `--out` wins; otherwise the config's `out` (or its
/// name) under the root taken from `root_env`, defaulting to `runs`.
pub fn output_dir(config: &ExperimentConfig, flag: Option<&Path>, root_env: Option<&str>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    let rel = config.out.clone().unwrap_or_else(|| PathBuf::from(config.name()));
    if rel.is_absolute() {
        return rel;
    }
    Path::new(root_env.filter(|s| !s.is_empty()).unwrap_or("runs")).join(rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::load_table;

    fn config(text: &str) -> ExperimentConfig {
        load_table(text.parse().unwrap()).unwrap().config
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn centres_split_the_range_evenly() {
        assert_eq!(centres((0.0, 4.0), 2), vec![1.0, 3.0]);
    }

    #[test]
    fn output_dir_precedence() {
        let c = config("kind = \"oracle\"\nname = \"x\"");
        assert_eq!(output_dir(&c, Some(Path::new("/tmp/a")), Some("/r")), PathBuf::from("/tmp/a"));
        assert_eq!(output_dir(&c, None, Some("/r")), PathBuf::from("/r/x"));
        assert_eq!(output_dir(&c, None, None), PathBuf::from("runs/x"));
        let c = config("kind = \"oracle\"\nout = \"/abs\"");
        assert_eq!(output_dir(&c, None, Some("/r")), PathBuf::from("/abs"));
    }

    #[test]
    fn oracle_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let c = config("kind = \"oracle\"\nseed = 3");
        let report = run(&c, dir.path()).unwrap();
        let Outcome::Oracle(o) = &report.outcome else { panic!("wrong outcome") };
        assert!(o.report.converged);
        for f in ["objective.csv", "summary.csv", "solution.json", "problem.json", "manifest.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["kind"], "oracle");
        assert_eq!(manifest["config"]["resources"]["beta1"], 5.0);
    }
}
