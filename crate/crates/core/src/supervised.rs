//! Online selector-plus-experts learner for classification, regression and
//! tabular decision problems.
//!
//! Each sample is routed to one expert drawn from the selector `p(m|x)`.
//! The sampled expert ascends its free energy
//! `f(m,x) = -L - KL(p(y|x,m) || p(y|m)) / beta2`; the selector ascends
//! `f(m,x) - ln(p(m|x) / p(m)) / beta1` with a score-function estimate.
//! Priors `p(m)` and `p(y|m)` follow exponential moving averages of the
//! posteriors.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{
    gaussian_kl, gaussian_kl_grad, huber, huber_grad, Activation, Adam, ApproxError, GaussianParams, Grads, Head, Net,
    Output, Trace,
};
use crate::distrib::{ema_update, sample, DistribError, ResourceParams, Simplex, PROB_FLOOR};
use crate::oracle::{HierSolution, OracleError, TabularProblem};
use crate::rng::Rng;
use crate::tasks::LabeledDataset;

#[derive(Debug, Error)]
pub enum SupervisedError {
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Distrib(#[from] DistribError),
    #[error("expert index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("target does not match the expert output kind")]
    TargetMismatch,
    #[error("empty batch or dataset")]
    Empty,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

type Result<T> = std::result::Result<T, SupervisedError>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExpertOutput {
    /// Softmax over classes or actions.
    Categorical { classes: usize },
    /// Scalar regression through a Gaussian head.
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressionLoss {
    Squared,
    Huber { delta: f64 },
}

impl RegressionLoss {
    pub fn value(self, residual: f64) -> f64 {
        match self {
            RegressionLoss::Squared => residual * residual,
            RegressionLoss::Huber { delta } => huber(residual, delta),
        }
    }

    pub fn derivative(self, residual: f64) -> f64 {
        match self {
            RegressionLoss::Squared => 2.0 * residual,
            RegressionLoss::Huber { delta } => huber_grad(residual, delta),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target<'a> {
    /// Class label, utility `ln p(y|x,m)` (negative cross-entropy).
    Class(usize),
    /// Utility of every action; utility is `E_{p(y|x,m)}[U]`.
    Utility(&'a [f64]),
    /// Real regression target.
    Value(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample<'a> {
    pub x: &'a [f64],
    pub target: Target<'a>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ExpertPrior {
    Categorical(Simplex),
    Gaussian(GaussianParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankConfig {
    pub input_dim: usize,
    pub num_experts: usize,
    pub output: ExpertOutput,
    pub selector_hidden: Vec<usize>,
    pub expert_hidden: Vec<usize>,
    pub activation: Activation,
    pub rp: ResourceParams,
    pub selector_lr: f64,
    pub expert_lr: f64,
    pub baseline_decay: f64,
    pub loss: RegressionLoss,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig {
            input_dim: 2,
            num_experts: 4,
            output: ExpertOutput::Categorical { classes: 2 },
            selector_hidden: vec![10, 10],
            expert_hidden: Vec::new(),
            activation: Activation::Tanh,
            rp: ResourceParams::with_betas(25.0, 10.0),
            selector_lr: crate::approx::DEFAULT_LEARNING_RATE,
            expert_lr: crate::approx::DEFAULT_LEARNING_RATE,
            baseline_decay: 0.99,
            loss: RegressionLoss::Squared,
        }
    }
}

impl BankConfig {
    pub fn validate(&self) -> Result<()> {
        self.rp.validate()?;
        let bad = |m: &str| Err(SupervisedError::InvalidConfig(m.to_string()));
        if self.input_dim == 0 {
            return bad("input_dim must be positive");
        }
        if self.num_experts == 0 {
            return bad("num_experts must be positive");
        }
        if let ExpertOutput::Categorical { classes } = self.output {
            if classes < 1 {
                return bad("classes must be positive");
            }
        }
        if self.selector_hidden.iter().chain(&self.expert_hidden).any(|&h| h == 0) {
            return bad("hidden widths must be positive");
        }
        if !(self.selector_lr > 0.0 && self.expert_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad("baseline_decay must lie in [0, 1)");
        }
        Ok(())
    }

    fn raw_output(&self) -> usize {
        match self.output {
            ExpertOutput::Categorical { classes } => classes,
            ExpertOutput::Gaussian => 2,
        }
    }
}

/// Value and ascent direction of one expert's free energy on one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpertTerm {
    pub free_energy: f64,
    pub utility: f64,
    pub kl: f64,
    /// Gradient of the free energy with respect to the logits (categorical)
    /// or `[mean, log_std]` (Gaussian).
    pub grad: Vec<f64>,
}

pub fn categorical_term(q: &Simplex, prior: &Simplex, target: Target<'_>, beta2: f64) -> Result<ExpertTerm> {
    if q.dim() != prior.dim() {
        return Err(DistribError::DimensionMismatch(q.dim(), prior.dim()).into());
    }
    let qs = q.probs();
    let log_ratio: Vec<f64> = qs
        .iter()
        .zip(prior.probs())
        .map(|(&a, &b)| a.max(f64::MIN_POSITIVE).ln() - b.max(PROB_FLOOR).ln())
        .collect();
    let kl = qs.iter().zip(&log_ratio).map(|(a, l)| a * l).sum::<f64>().max(0.0);
    let (utility, mut grad): (f64, Vec<f64>) = match target {
        Target::Class(y) if y < qs.len() => {
            let g = (0..qs.len()).map(|i| f64::from(u8::from(i == y)) - qs[i]).collect();
            (qs[y].max(f64::MIN_POSITIVE).ln(), g)
        }
        Target::Utility(u) if u.len() == qs.len() => {
            let mean: f64 = qs.iter().zip(u).map(|(a, b)| a * b).sum();
            (mean, qs.iter().zip(u).map(|(a, b)| a * (b - mean)).collect())
        }
        _ => return Err(SupervisedError::TargetMismatch),
    };
    for (g, (&qi, &li)) in grad.iter_mut().zip(qs.iter().zip(&log_ratio)) {
        *g -= qi * (li - kl) / beta2;
    }
    Ok(ExpertTerm { free_energy: utility - kl / beta2, utility, kl, grad })
}

/// Regression free energy with prediction `mean + std * noise`; `noise = 0`
/// uses the mean prediction.
pub fn gaussian_term(
    g: &GaussianParams,
    prior: &GaussianParams,
    y: f64,
    noise: f64,
    loss: RegressionLoss,
    beta2: f64,
) -> ExpertTerm {
    let std = g.log_std[0].exp();
    let residual = g.mean[0] + std * noise - y;
    let utility = -loss.value(residual);
    let dl = loss.derivative(residual);
    let kl = gaussian_kl(g, prior);
    let kg = gaussian_kl_grad(g, prior);
    ExpertTerm {
        free_energy: utility - kl / beta2,
        utility,
        kl,
        grad: vec![-dl - kg[0] / beta2, -dl * std * noise - kg[1] / beta2],
    }
}

/// Score-function ascent direction on the selector logits.
pub fn selector_logit_grad(p: &Simplex, m: usize, advantage: f64) -> Vec<f64> {
    p.probs()
        .iter()
        .enumerate()
        .map(|(i, &pi)| (f64::from(u8::from(i == m)) - pi) * advantage)
        .collect()
}

/// Scalar running-mean baseline.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    value: Option<f64>,
}

impl Baseline {
    pub fn get(&self, fallback: f64) -> f64 {
        self.value.unwrap_or(fallback)
    }

    pub fn update(&mut self, x: f64, decay: f64) {
        self.value = Some(match self.value {
            Some(v) => decay * v + (1.0 - decay) * x,
            None => x,
        });
    }
}

/// Moment-matched EMA: the result has the mean and variance of the mixture
/// `lambda * prior + (1 - lambda) * post`.
pub(crate) fn gaussian_ema(prior: &GaussianParams, post: &GaussianParams, lambda: f64) -> GaussianParams {
    let mut out = prior.clone();
    for i in 0..prior.dim() {
        let (m0, m1) = (prior.mean[i], post.mean[i]);
        let second = lambda * ((2.0 * prior.log_std[i]).exp() + m0 * m0) + (1.0 - lambda) * ((2.0 * post.log_std[i]).exp() + m1 * m1);
        let mean = lambda * m0 + (1.0 - lambda) * m1;
        out.mean[i] = mean;
        out.log_std[i] = 0.5 * (second - mean * mean).max(1e-300).ln();
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// Mean utility (negative loss) of the routed experts.
    pub utility: f64,
    /// Mean `KL(p(m|x) || p(m))` over the batch.
    pub rate_xm: f64,
    /// Mean KL of the routed experts to their priors.
    pub expert_kl: f64,
    pub free_energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: Option<f64>,
    pub mse: Option<f64>,
    pub rate_xm: f64,
    pub rate_xy_given_m: f64,
    /// Mean selector probability of each expert.
    pub usage: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertBank {
    pub config: BankConfig,
    pub selector: Net,
    pub experts: Vec<Net>,
    pub prior_m: Simplex,
    pub priors: Vec<ExpertPrior>,
    selector_opt: Adam,
    expert_opts: Vec<Adam>,
    baseline: Baseline,
    pub steps: u64,
}

impl ExpertBank {
    /// Random experts and a selector whose output layer starts at zero, so
    /// `p(m|x)` is uniform before training.
    pub fn new(config: BankConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut sel_sizes = vec![config.input_dim];
        sel_sizes.extend(&config.selector_hidden);
        sel_sizes.push(config.num_experts);
        let mut selector = Net::new(&sel_sizes, config.activation, Head::Softmax, rng);
        let last = selector.layers.last_mut().expect("non-empty");
        last.weights.iter_mut().for_each(|w| *w = 0.0);

        let mut exp_sizes = vec![config.input_dim];
        exp_sizes.extend(&config.expert_hidden);
        exp_sizes.push(config.raw_output());
        let head = match config.output {
            ExpertOutput::Categorical { .. } => Head::Softmax,
            ExpertOutput::Gaussian => Head::Gaussian,
        };
        let experts: Vec<Net> = (0..config.num_experts)
            .map(|_| Net::new(&exp_sizes, config.activation, head, rng))
            .collect();
        let prior = match config.output {
            ExpertOutput::Categorical { classes } => ExpertPrior::Categorical(Simplex::uniform(classes)),
            ExpertOutput::Gaussian => ExpertPrior::Gaussian(GaussianParams { mean: vec![0.0], log_std: vec![0.0] }),
        };
        Ok(ExpertBank {
            selector_opt: Adam::new(&selector, config.selector_lr),
            expert_opts: experts.iter().map(|e| Adam::new(e, config.expert_lr)).collect(),
            prior_m: Simplex::uniform(config.num_experts),
            priors: vec![prior; config.num_experts],
            selector,
            experts,
            baseline: Baseline::default(),
            steps: 0,
            config,
        })
    }

    /// Same as [`ExpertBank::new`] with every parameter zero.
    pub fn zeros(config: BankConfig, rng: &mut Rng) -> Result<Self> {
        let mut bank = ExpertBank::new(config, rng)?;
        bank.selector.params_mut().for_each(|p| *p = 0.0);
        for e in &mut bank.experts {
            e.params_mut().for_each(|p| *p = 0.0);
        }
        Ok(bank)
    }

    pub fn num_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn selector_probs(&self, x: &[f64]) -> Result<Simplex> {
        Ok(self.selector.forward(x)?.as_probs().expect("softmax head").clone())
    }

    pub fn expert_output(&self, m: usize, x: &[f64]) -> Result<Output> {
        let net = self.experts.get(m).ok_or(SupervisedError::IndexOutOfRange(m))?;
        Ok(net.forward(x)?)
    }

    fn term(&self, m: usize, out: &Output, target: Target<'_>, noise: f64) -> Result<ExpertTerm> {
        let beta2 = self.config.rp.beta2;
        match (out, &self.priors[m]) {
            (Output::Probs(q), ExpertPrior::Categorical(prior)) => categorical_term(q, prior, target, beta2),
            (Output::Gaussian(g), ExpertPrior::Gaussian(prior)) => match target {
                Target::Value(y) => Ok(gaussian_term(g, prior, y, noise, self.config.loss, beta2)),
                _ => Err(SupervisedError::TargetMismatch),
            },
            _ => Err(SupervisedError::TargetMismatch),
        }
    }

    /// Free energy of expert `m` on `(x, target)`; regression uses the mean
    /// prediction.
    pub fn expert_free_energy(&self, m: usize, x: &[f64], target: Target<'_>) -> Result<f64> {
        let out = self.expert_output(m, x)?;
        Ok(self.term(m, &out, target, 0.0)?.free_energy)
    }

    /// One minibatch update: per sample, route, score, and accumulate
    /// gradients; priors move per sample; each net takes one Adam step.
    pub fn train_step(&mut self, batch: &[Sample<'_>], rng: &mut Rng) -> Result<StepMetrics> {
        if batch.is_empty() {
            return Err(SupervisedError::Empty);
        }
        let rp = self.config.rp;
        let mut sel_grads = Grads::zeros_like(&self.selector);
        let mut exp_grads: Vec<Grads> = self.experts.iter().map(Grads::zeros_like).collect();
        let mut counts = vec![0usize; self.experts.len()];
        let mut metrics = StepMetrics::default();
        for s in batch {
            let sel_trace = self.selector.forward_trace(s.x)?;
            let p = sel_trace.output().as_probs().expect("softmax head").clone();
            let m = sample(&p, rng);
            let exp_trace = self.experts[m].forward_trace(s.x)?;
            let noise = match self.config.output {
                ExpertOutput::Gaussian => StandardNormal.sample(rng),
                ExpertOutput::Categorical { .. } => 0.0,
            };
            let term = self.term(m, exp_trace.output(), s.target, noise)?;

            let descent: Vec<f64> = term.grad.iter().map(|g| -g).collect();
            accumulate_head(&self.experts[m], &exp_trace, &descent, &mut exp_grads[m])?;
            counts[m] += 1;

            let log_ratio = p.probs()[m].max(f64::MIN_POSITIVE).ln() - self.prior_m.probs()[m].max(PROB_FLOOR).ln();
            let advantage = term.free_energy - self.baseline.get(term.free_energy) - log_ratio / rp.beta1;
            let logit_grad: Vec<f64> = selector_logit_grad(&p, m, advantage).iter().map(|g| -g).collect();
            self.selector.accumulate_raw(&sel_trace, &logit_grad, &mut sel_grads, 1.0)?;
            self.baseline.update(term.free_energy, self.config.baseline_decay);

            metrics.rate_xm += crate::distrib::kl_to_prior(&p, &self.prior_m)?;
            metrics.utility += term.utility;
            metrics.expert_kl += term.kl;
            metrics.free_energy += term.free_energy;

            self.prior_m = ema_update(&self.prior_m, &p, rp.lambda2)?;
            self.priors[m] = match (&self.priors[m], exp_trace.output()) {
                (ExpertPrior::Categorical(r), Output::Probs(q)) => ExpertPrior::Categorical(ema_update(r, q, rp.lambda1)?),
                (ExpertPrior::Gaussian(r), Output::Gaussian(g)) => ExpertPrior::Gaussian(gaussian_ema(r, g, rp.lambda1)),
                _ => return Err(SupervisedError::TargetMismatch),
            };
        }
        let n = batch.len() as f64;
        sel_grads.scale(1.0 / n);
        self.selector_opt.step(&mut self.selector, &sel_grads)?;
        for (m, g) in exp_grads.iter_mut().enumerate() {
            if counts[m] > 0 {
                g.scale(1.0 / counts[m] as f64);
                self.expert_opts[m].step(&mut self.experts[m], g)?;
            }
        }
        self.steps += 1;
        metrics.utility /= n;
        metrics.rate_xm /= n;
        metrics.expert_kl /= n;
        metrics.free_energy /= n;
        Ok(metrics)
    }

    /// Information estimates use the empirical marginals of the evaluated
    /// points, so `rate_xm` lies in `[0, ln M]`.
    pub fn evaluate(&self, dataset: &LabeledDataset) -> Result<EvalReport> {
        if dataset.is_empty() {
            return Err(SupervisedError::Empty);
        }
        let weights = vec![1.0 / dataset.len() as f64; dataset.len()];
        let mut correct = 0.0;
        let mut sel = Vec::with_capacity(dataset.len());
        let mut act = Vec::with_capacity(dataset.len());
        for (x, &y) in dataset.inputs.iter().zip(&dataset.labels) {
            let p = self.selector_probs(x)?;
            let qs: Vec<Simplex> = (0..self.num_experts())
                .map(|m| match self.expert_output(m, x)? {
                    Output::Probs(q) => Ok(q),
                    _ => Err(SupervisedError::TargetMismatch),
                })
                .collect::<Result<_>>()?;
            let mut mix = vec![0.0; qs[0].dim()];
            for (pm, q) in p.probs().iter().zip(&qs) {
                mix.iter_mut().zip(q.probs()).for_each(|(a, b)| *a += pm * b);
            }
            let pred = Simplex::renormalized(mix).argmax();
            if pred == y {
                correct += 1.0;
            }
            sel.push(p);
            act.push(qs);
        }
        let (rate_xm, rate_xy_given_m, usage) = empirical_rates(&weights, &sel, &act)?;
        Ok(EvalReport {
            accuracy: Some(correct / dataset.len() as f64),
            mse: None,
            rate_xm,
            rate_xy_given_m,
            usage,
        })
    }

    /// Regression evaluation on `(x, y)` pairs with the mixture-mean
    /// prediction.
    pub fn evaluate_regression(&self, inputs: &[Vec<f64>], targets: &[f64]) -> Result<EvalReport> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(SupervisedError::Empty);
        }
        let mut sel = Vec::with_capacity(inputs.len());
        let mut se = 0.0;
        for (x, &y) in inputs.iter().zip(targets) {
            let p = self.selector_probs(x)?;
            let mut pred = 0.0;
            for (m, &pm) in p.probs().iter().enumerate() {
                match self.expert_output(m, x)? {
                    Output::Gaussian(g) => pred += pm * g.mean[0],
                    _ => return Err(SupervisedError::TargetMismatch),
                }
            }
            se += (pred - y).powi(2);
            sel.push(p);
        }
        let n = inputs.len() as f64;
        let usage = mean_rows(&sel);
        let marginal = Simplex::renormalized(usage.clone());
        let rate_xm = sel.iter().map(|p| crate::distrib::kl_to_prior(p, &marginal)).sum::<std::result::Result<f64, _>>()? / n;
        Ok(EvalReport {
            accuracy: None,
            mse: Some(se / n),
            rate_xm,
            rate_xy_given_m: 0.0,
            usage,
        })
    }
}

fn accumulate_head(net: &Net, trace: &Trace, grad: &[f64], acc: &mut Grads) -> std::result::Result<(), ApproxError> {
    match net.head {
        Head::Softmax => net.accumulate_raw(trace, grad, acc, 1.0),
        _ => net.accumulate(trace, grad, acc, 1.0),
    }
}

fn mean_rows(rows: &[Simplex]) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut out = vec![0.0; rows[0].dim()];
    for r in rows {
        out.iter_mut().zip(r.probs()).for_each(|(a, b)| *a += b / n);
    }
    out
}

/// `(I(X;M), I(X;Y|M), usage)` of the joint
/// `w(x) p(m|x) p(y|x,m)` with priors set to its exact marginals.
pub fn empirical_rates(weights: &[f64], sel: &[Simplex], act: &[Vec<Simplex>]) -> Result<(f64, f64, Vec<f64>)> {
    let nm = sel[0].dim();
    let ny = act[0][0].dim();
    let mut pm = vec![0.0; nm];
    let mut py_m = vec![vec![0.0; ny]; nm];
    for ((w, p), qs) in weights.iter().zip(sel).zip(act) {
        for m in 0..nm {
            let wm = w * p.probs()[m];
            pm[m] += wm;
            py_m[m].iter_mut().zip(qs[m].probs()).for_each(|(a, b)| *a += wm * b);
        }
    }
    let marg_m = Simplex::renormalized(pm.clone());
    let marg_y: Vec<Simplex> = py_m
        .into_iter()
        .map(|row| {
            if row.iter().sum::<f64>() > 0.0 {
                Simplex::renormalized(row)
            } else {
                Simplex::uniform(ny)
            }
        })
        .collect();
    let mut i_xm = 0.0;
    let mut i_xy = 0.0;
    for ((w, p), qs) in weights.iter().zip(sel).zip(act) {
        i_xm += w * crate::distrib::kl_to_prior(p, &marg_m)?;
        for m in 0..nm {
            let wm = w * p.probs()[m];
            if wm > 0.0 {
                i_xy += wm * crate::distrib::kl_to_prior(&qs[m], &marg_y[m])?;
            }
        }
    }
    Ok((i_xm, i_xy, pm))
}

/// Draws a minibatch of `(x, label)` indices uniformly with replacement.
pub fn class_batch<'a>(data: &'a LabeledDataset, size: usize, rng: &mut Rng) -> Vec<Sample<'a>> {
    use rand::Rng as _;
    (0..size)
        .map(|_| {
            let i = rng.random_range(0..data.len());
            Sample { x: &data.inputs[i], target: Target::Class(data.labels[i]) }
        })
        .collect()
}

/// One-hot encodings of `n` discrete states.
pub fn one_hot_states(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect()
}

/// Linear selector and experts over one-hot states of a tabular problem.
pub fn tabular_config(prob: &TabularProblem, rp: ResourceParams, lr: f64) -> BankConfig {
    BankConfig {
        input_dim: prob.num_states(),
        num_experts: prob.num_experts,
        output: ExpertOutput::Categorical { classes: prob.num_actions() },
        selector_hidden: Vec::new(),
        expert_hidden: Vec::new(),
        rp,
        selector_lr: lr,
        expert_lr: lr,
        ..BankConfig::default()
    }
}

/// Trains a bank online on states drawn from `p(x)` with utility targets.
pub fn train_tabular(
    prob: &TabularProblem,
    config: BankConfig,
    steps: usize,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<ExpertBank> {
    let states = one_hot_states(prob.num_states());
    let mut bank = ExpertBank::new(config, rng)?;
    for _ in 0..steps {
        let batch: Vec<Sample<'_>> = (0..batch_size)
            .map(|_| {
                let x = sample(&prob.px, rng);
                Sample { x: &states[x], target: Target::Utility(&prob.utility[x]) }
            })
            .collect();
        bank.train_step(&batch, rng)?;
    }
    Ok(bank)
}

/// Policy tables of a bank trained on one-hot states, with exact marginal
/// priors and the resulting objective.
pub fn tabular_solution(bank: &ExpertBank, prob: &TabularProblem) -> std::result::Result<HierSolution, OracleError> {
    let states = one_hot_states(prob.num_states());
    let mut sel = Vec::with_capacity(states.len());
    let mut act = Vec::with_capacity(states.len());
    for x in &states {
        sel.push(bank.selector_probs(x).map_err(|e| OracleError::InvalidSetting(e.to_string()))?);
        let row = (0..bank.num_experts())
            .map(|m| match bank.expert_output(m, x) {
                Ok(Output::Probs(q)) => Ok(q),
                _ => Err(OracleError::InvalidSetting("bank is not categorical".into())),
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        act.push(row);
    }
    HierSolution::from_policies(prob, sel, act, &bank.config.rp)
}
