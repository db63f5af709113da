//! Across-task specialization for few-shot sine regression.
//!
//! The selector sees a permutation-invariant embedding of a task's training
//! split and picks one expert for the whole task. The selector is scored on
//! the expert's free energy over the validation split; the chosen expert is
//! trained on the training split.

use std::io::{self, Write};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{sgd_step, Activation, Adam, ApproxError, GaussianParams, Grads, Head, Net};
use crate::distrib::{ema_update, kl, sample, DistribError, ResourceParams, Simplex, PROB_FLOOR};
use crate::rng::Rng;
use crate::supervised::{gaussian_ema, gaussian_term, selector_logit_grad, Baseline, RegressionLoss};
use crate::tasks::{join, sine_dataset, SineTask, TaskDataset, TaskError, DEFAULT_X_RANGE};

#[derive(Debug, Error)]
pub enum MetaError {
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Distrib(#[from] DistribError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty task batch or split")]
    Empty,
}

type Result<T> = std::result::Result<T, MetaError>;

/// Bin-averaged `y` values over `bins` uniform bins of `x_range`; empty bins
/// are 0 and points outside the range fall into the end bins.
pub fn embed_regression(points: &[(f64, f64)], bins: usize, x_range: (f64, f64)) -> Vec<f64> {
    let width = (x_range.1 - x_range.0) / bins as f64;
    let mut per_bin: Vec<Vec<f64>> = vec![Vec::new(); bins];
    for &(x, y) in points {
        let k = (((x - x_range.0) / width).floor().max(0.0) as usize).min(bins - 1);
        per_bin[k].push(y);
    }
    per_bin
        .iter_mut()
        .map(|ys| {
            if ys.is_empty() {
                return 0.0;
            }
            // sorted so the float sum does not depend on input order
            ys.sort_by(f64::total_cmp);
            ys.iter().sum::<f64>() / ys.len() as f64
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    pub num_experts: usize,
    pub bins: usize,
    pub x_range: (f64, f64),
    pub selector_hidden: Vec<usize>,
    pub expert_hidden: Vec<usize>,
    pub activation: Activation,
    pub rp: ResourceParams,
    pub selector_lr: f64,
    pub expert_lr: f64,
    pub baseline_decay: f64,
    pub loss: RegressionLoss,
    /// Plain SGD step size used by [`MetaBank::adapt_and_evaluate`].
    pub adapt_lr: f64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            num_experts: 8,
            bins: 20,
            x_range: DEFAULT_X_RANGE,
            selector_hidden: vec![16, 16],
            expert_hidden: vec![40],
            activation: Activation::Tanh,
            rp: ResourceParams::with_betas(25.0, 1.25),
            selector_lr: 1e-3,
            expert_lr: 3e-3,
            baseline_decay: 0.99,
            loss: RegressionLoss::Huber { delta: 5.0 },
            adapt_lr: 0.01,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        self.rp.validate()?;
        let bad = |msg: &str| Err(MetaError::InvalidConfig(msg.into()));
        if self.num_experts == 0 || self.bins == 0 {
            return bad("num_experts and bins must be positive");
        }
        if !(self.x_range.1 > self.x_range.0) {
            return bad("x_range must be non-empty");
        }
        if !(self.selector_lr > 0.0 && self.expert_lr > 0.0 && self.adapt_lr >= 0.0) {
            return bad("learning rates must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// Mean validation free energy of the chosen experts.
    pub free_energy: f64,
    /// Mean validation loss of the chosen experts (mean prediction).
    pub val_loss: f64,
    /// Mean `KL(p(m|z) || p(m))`.
    pub rate_xm: f64,
    pub prior_m: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adaptation {
    pub expert: usize,
    pub pre_mse: f64,
    pub post_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionCell {
    pub a: f64,
    pub b: f64,
    pub expert: usize,
    pub probs: Vec<f64>,
}

/// Mean of the largest selector probability over the cells.
pub fn mean_confidence(cells: &[PartitionCell]) -> f64 {
    cells.iter().map(|c| c.probs.iter().copied().fold(0.0, f64::max)).sum::<f64>() / cells.len().max(1) as f64
}

pub fn write_partition_csv<W: Write>(mut w: W, cells: &[PartitionCell]) -> io::Result<()> {
    let m = cells.first().map_or(0, |c| c.probs.len());
    let mut header = vec!["a".to_string(), "b".to_string(), "expert".to_string()];
    header.extend((0..m).map(|i| format!("p{i}")));
    writeln!(w, "{}", header.join(","))?;
    for c in cells {
        writeln!(w, "{},{},{},{}", c.a, c.b, c.expert, join(&c.probs))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub pre_mse: f64,
    pub post_mse: f64,
    /// `I(X;M)` of the empirical joint over the evaluated tasks.
    pub rate_xm: f64,
    /// Fraction of tasks whose adapted MSE did not exceed the pre-adaptation MSE.
    pub improved_fraction: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetaBank {
    pub config: MetaConfig,
    pub selector: Net,
    pub experts: Vec<Net>,
    pub prior_m: Simplex,
    pub priors: Vec<GaussianParams>,
    pub episodes: usize,
    #[serde(skip)]
    opts: Option<(Adam, Vec<Adam>)>,
    #[serde(skip)]
    baseline: Baseline,
}

impl MetaBank {
    pub fn new(config: MetaConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut sel_sizes = vec![config.bins];
        sel_sizes.extend_from_slice(&config.selector_hidden);
        sel_sizes.push(config.num_experts);
        let mut selector = Net::new(&sel_sizes, config.activation, Head::Softmax, rng);
        if let Some(last) = selector.layers.last_mut() {
            last.weights.iter_mut().for_each(|w| *w = 0.0);
            last.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        let mut exp_sizes = vec![1];
        exp_sizes.extend_from_slice(&config.expert_hidden);
        exp_sizes.push(2);
        let experts: Vec<Net> = (0..config.num_experts)
            .map(|_| Net::new(&exp_sizes, config.activation, Head::Gaussian, rng))
            .collect();
        let prior = GaussianParams { mean: vec![0.0], log_std: vec![0.0] };
        Ok(MetaBank {
            prior_m: Simplex::uniform(config.num_experts),
            priors: vec![prior; config.num_experts],
            selector,
            experts,
            config,
            episodes: 0,
            opts: None,
            baseline: Baseline::default(),
        })
    }

    pub fn num_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn embed(&self, points: &[(f64, f64)]) -> Vec<f64> {
        embed_regression(points, self.config.bins, self.config.x_range)
    }

    /// `p(m | z(train))`; depends on the training split only.
    pub fn selector_probs(&self, train: &[(f64, f64)]) -> Result<Simplex> {
        Ok(self.selector.forward(&self.embed(train))?.as_probs().expect("softmax head").clone())
    }

    pub fn predict(&self, m: usize, x: f64) -> Result<f64> {
        Ok(self.experts[m].forward(&[x])?.as_gaussian().expect("gaussian head").mean[0])
    }

    /// Free energy of expert `m` on `points` with the mean prediction.
    pub fn free_energy(&self, m: usize, points: &[(f64, f64)]) -> Result<f64> {
        if points.is_empty() {
            return Err(MetaError::Empty);
        }
        let mut total = 0.0;
        for &(x, y) in points {
            let g = self.experts[m].forward(&[x])?;
            let g = g.as_gaussian().expect("gaussian head");
            total += gaussian_term(g, &self.priors[m], y, 0.0, self.config.loss, self.config.rp.beta2).free_energy;
        }
        Ok(total / points.len() as f64)
    }

    /// One meta-training episode over a batch of tasks. The selector is
    /// scored on the validation split by a copy of the sampled expert
    /// adapted for `adaptation_steps` on the training split.
    pub fn train_episode(&mut self, tasks: &[TaskDataset], adaptation_steps: usize, rng: &mut Rng) -> Result<EpisodeMetrics> {
        if tasks.is_empty() || tasks.iter().any(|t| t.train.is_empty() || t.val.is_empty()) {
            return Err(MetaError::Empty);
        }
        let rp = self.config.rp;
        let loss = self.config.loss;
        let mut g_sel = Grads::zeros_like(&self.selector);
        let mut g_exp: Vec<Grads> = self.experts.iter().map(Grads::zeros_like).collect();
        let mut counts = vec![0usize; self.num_experts()];
        let mut metrics = EpisodeMetrics::default();
        for task in tasks {
            let z = self.embed(&task.train);
            let trace = self.selector.forward_trace(&z)?;
            let p = trace.output().as_probs().expect("softmax head").clone();
            let m = sample(&p, rng);

            let adapted;
            let scorer = if adaptation_steps == 0 {
                &self.experts[m]
            } else {
                adapted = self.adapted(m, &task.train, adaptation_steps)?;
                &adapted
            };
            let mut f_val = 0.0;
            let mut val_loss = 0.0;
            for &(x, y) in &task.val {
                let g = scorer.forward(&[x])?;
                let g = g.as_gaussian().expect("gaussian head");
                let noise: f64 = StandardNormal.sample(rng);
                f_val += gaussian_term(g, &self.priors[m], y, noise, loss, rp.beta2).free_energy;
                val_loss += (g.mean[0] - y).powi(2);
            }
            f_val /= task.val.len() as f64;
            val_loss /= task.val.len() as f64;

            let log_ratio = p.probs()[m].max(f64::MIN_POSITIVE).ln() - self.prior_m.probs()[m].max(PROB_FLOOR).ln();
            let advantage = f_val - self.baseline.get(f_val) - log_ratio / rp.beta1;
            let logit: Vec<f64> = selector_logit_grad(&p, m, advantage).iter().map(|g| -g).collect();
            self.selector.accumulate_raw(&trace, &logit, &mut g_sel, 1.0)?;
            self.baseline.update(f_val, self.config.baseline_decay);

            let scale = 1.0 / task.train.len() as f64;
            for &(x, y) in &task.train {
                let trace = self.experts[m].forward_trace(&[x])?;
                let g = trace.output().as_gaussian().expect("gaussian head").clone();
                let noise: f64 = StandardNormal.sample(rng);
                let term = gaussian_term(&g, &self.priors[m], y, noise, loss, rp.beta2);
                let descent: Vec<f64> = term.grad.iter().map(|v| -v).collect();
                self.experts[m].accumulate(&trace, &descent, &mut g_exp[m], scale)?;
                self.priors[m] = gaussian_ema(&self.priors[m], &g, rp.lambda1);
            }
            counts[m] += 1;

            metrics.rate_xm += kl(&p, &self.prior_m)?;
            metrics.free_energy += f_val;
            metrics.val_loss += val_loss;
            self.prior_m = ema_update(&self.prior_m, &p, rp.lambda2)?;
        }
        let (sel_opt, exp_opts) = self.opts.get_or_insert_with(|| {
            (
                Adam::new(&self.selector, self.config.selector_lr),
                self.experts.iter().map(|e| Adam::new(e, self.config.expert_lr)).collect(),
            )
        });
        let n = tasks.len() as f64;
        g_sel.scale(1.0 / n);
        sel_opt.step(&mut self.selector, &g_sel)?;
        for (m, g) in g_exp.iter_mut().enumerate() {
            if counts[m] > 0 {
                g.scale(1.0 / counts[m] as f64);
                exp_opts[m].step(&mut self.experts[m], g)?;
            }
        }
        self.episodes += 1;
        metrics.rate_xm /= n;
        metrics.free_energy /= n;
        metrics.val_loss /= n;
        metrics.prior_m = self.prior_m.probs().to_vec();
        Ok(metrics)
    }

    /// Routes the task to its most probable expert, adapts a copy of it
    /// with `steps` SGD steps on the training split and reports the
    /// validation MSE before and after. The bank is unchanged.
    pub fn adapt_and_evaluate(&self, task: &TaskDataset, steps: usize) -> Result<Adaptation> {
        if task.train.is_empty() || task.val.is_empty() {
            return Err(MetaError::Empty);
        }
        let m = self.selector_probs(&task.train)?.argmax();
        let pre_mse = mse(&self.experts[m], &task.val)?;
        let net = self.adapted(m, &task.train, steps)?;
        let post_mse = if steps == 0 { pre_mse } else { mse(&net, &task.val)? };
        Ok(Adaptation { expert: m, pre_mse, post_mse })
    }

    /// Copy of expert `m` after `steps` plain SGD steps on `train`.
    fn adapted(&self, m: usize, train: &[(f64, f64)], steps: usize) -> Result<Net> {
        let mut net = self.experts[m].clone();
        let scale = 1.0 / train.len() as f64;
        for _ in 0..steps {
            let mut g = Grads::zeros_like(&net);
            for &(x, y) in train {
                let trace = net.forward_trace(&[x])?;
                let mean = trace.output().as_gaussian().expect("gaussian head").mean[0];
                net.accumulate(&trace, &[self.config.loss.derivative(mean - y), 0.0], &mut g, scale)?;
            }
            sgd_step(&mut net, &g, self.config.adapt_lr)?;
        }
        Ok(net)
    }

    /// Adaptation over a task set plus the selector rate on it.
    pub fn evaluate(&self, tasks: &[TaskDataset], steps: usize) -> Result<EvalSummary> {
        if tasks.is_empty() {
            return Err(MetaError::Empty);
        }
        let mut rows = Vec::with_capacity(tasks.len());
        let (mut pre, mut post, mut improved) = (0.0, 0.0, 0.0);
        for t in tasks {
            let a = self.adapt_and_evaluate(t, steps)?;
            pre += a.pre_mse;
            post += a.post_mse;
            if a.post_mse <= a.pre_mse {
                improved += 1.0;
            }
            rows.push(self.selector_probs(&t.train)?);
        }
        let n = tasks.len() as f64;
        let mut marginal = vec![0.0; self.num_experts()];
        for r in &rows {
            marginal.iter_mut().zip(r.probs()).for_each(|(a, b)| *a += b / n);
        }
        let marginal = Simplex::renormalized(marginal);
        let rate_xm = rows.iter().map(|r| kl(r, &marginal)).sum::<std::result::Result<f64, _>>()? / n;
        Ok(EvalSummary { pre_mse: pre / n, post_mse: post / n, rate_xm: rate_xm.max(0.0), improved_fraction: improved / n })
    }

    /// Task-level assignment `p(m|a,b)` over an `(a, b)` grid: the selector
    /// posterior averaged over `draws` fresh `k`-shot splits per cell.
    pub fn partition_map(&self, amplitudes: &[f64], phases: &[f64], k: usize, draws: usize, rng: &mut Rng) -> Result<Vec<PartitionCell>> {
        if amplitudes.is_empty() || phases.is_empty() || draws == 0 {
            return Err(MetaError::Empty);
        }
        let mut cells = Vec::with_capacity(amplitudes.len() * phases.len());
        for &a in amplitudes {
            for &b in phases {
                let mut probs = vec![0.0; self.num_experts()];
                for _ in 0..draws {
                    let data = sine_dataset(SineTask { a, b }, k, self.config.x_range, rng)?;
                    let p = self.selector_probs(&data.train)?;
                    probs.iter_mut().zip(p.probs()).for_each(|(s, q)| *s += q / draws as f64);
                }
                let p = Simplex::renormalized(probs);
                cells.push(PartitionCell { a, b, expert: p.argmax(), probs: p.into_vec() });
            }
        }
        Ok(cells)
    }
}

fn mse(net: &Net, points: &[(f64, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for &(x, y) in points {
        let mean = net.forward(&[x])?.as_gaussian().expect("gaussian head").mean[0];
        total += (mean - y).powi(2);
    }
    Ok(total / points.len() as f64)
}
