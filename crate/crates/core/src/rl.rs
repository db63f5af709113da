//! Free-energy actor-critic hierarchy for episodic control.
//!
//! A selector actor `p(m|x)` picks an expert per state; the expert draws a
//! continuous action from a Gaussian policy. Experts regress their critic on
//! the discounted free energy `F_t` of
//! `f = r - ln(p(a|x,m) / p(a|m)) / beta2`; the selector critic regresses
//! `F̄_t` of `f̄ = f - ln(p(m|x) / p(m)) / beta1`, both estimated from the
//! realized `(x, m, a)` tuple. Actors follow one-step TD advantages.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{
    gaussian_kl, gaussian_log_prob, gaussian_log_prob_grad, gaussian_sample, huber, huber_grad, Activation, Adam,
    ApproxError, GaussianParams, Grads, Head, Net,
};
use crate::distrib::{ema_update, sample, DistribError, ResourceParams, Simplex, PROB_FLOOR};
use crate::rng::Rng;
use crate::tasks::{join, Env, TaskError};

#[derive(Debug, Error)]
pub enum RlError {
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Distrib(#[from] DistribError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty trajectory batch")]
    Empty,
}

type Result<T> = std::result::Result<T, RlError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub expert: usize,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Terminal transition; no bootstrap past it.
    pub done: bool,
    /// `ln p(a|x,m)` under the acting expert.
    pub log_prob: f64,
    /// `ln p(a|m)` under the expert's action prior.
    pub prior_log_prob: f64,
    /// `ln p(m|x) - ln p(m)`.
    pub selector_log_ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    pub returns: Vec<f64>,
    pub free_energy: Vec<f64>,
    pub selector_free_energy: Vec<f64>,
    pub advantages: Vec<f64>,
    pub selector_advantages: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Transition>,
    pub annotations: Option<Annotations>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Ended by truncation rather than a terminal state.
    pub fn needs_bootstrap(&self) -> bool {
        self.steps.last().is_some_and(|s| !s.done)
    }

    fn dones(&self) -> Vec<bool> {
        self.steps.iter().map(|s| s.done).collect()
    }
}

/// Backward recursion `G_t = c_t + gamma * G_{t+1} * (1 - done_t)` with
/// `G_{T+1} = bootstrap`.
pub fn discounted(terms: &[f64], dones: &[bool], gamma: f64, bootstrap: f64) -> Vec<f64> {
    let mut out = vec![0.0; terms.len()];
    let mut next = bootstrap;
    for t in (0..terms.len()).rev() {
        let carry = if dones[t] { 0.0 } else { next };
        out[t] = terms[t] + gamma * carry;
        next = out[t];
    }
    out
}

pub fn discounted_returns(traj: &Trajectory, gamma: f64) -> Vec<f64> {
    let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
    discounted(&rewards, &traj.dones(), gamma, 0.0)
}

/// Per-step `(f, f̄)` from the cached log-probabilities.
pub fn free_energy_terms(traj: &Trajectory, rp: &ResourceParams) -> (Vec<f64>, Vec<f64>) {
    traj.steps
        .iter()
        .map(|s| {
            let f = s.reward - (s.log_prob - s.prior_log_prob) / rp.beta2;
            (f, f - s.selector_log_ratio / rp.beta1)
        })
        .unzip()
}

/// `(F_t, F̄_t)` with the given bootstrap values past the last step.
pub fn discounted_free_energy(traj: &Trajectory, rp: &ResourceParams, bootstrap: (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    let (f, fbar) = free_energy_terms(traj, rp);
    let dones = traj.dones();
    (discounted(&f, &dones, rp.gamma, bootstrap.0), discounted(&fbar, &dones, rp.gamma, bootstrap.1))
}

/// One-step TD residuals `c_t + gamma V(x_{t+1}) (1 - done_t) - V(x_t)`.
pub fn td_advantages(terms: &[f64], values: &[f64], next_values: &[f64], dones: &[bool], gamma: f64) -> Vec<f64> {
    (0..terms.len())
        .map(|t| {
            let boot = if dones[t] { 0.0 } else { gamma * next_values[t] };
            terms[t] + boot - values[t]
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Level {
    Expert,
    Selector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RlConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub num_experts: usize,
    pub selector_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Empty means linear experts.
    pub expert_hidden: Vec<usize>,
    pub activation: Activation,
    pub rp: ResourceParams,
    pub selector_lr: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub huber_delta: f64,
    /// Critic regression steps per update on the same batch.
    pub critic_epochs: usize,
    /// Per-dimension factors applied to states before every network.
    pub state_scale: Option<Vec<f64>>,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            state_dim: 4,
            action_dim: 1,
            num_experts: 2,
            selector_hidden: vec![32, 32],
            critic_hidden: vec![32, 32],
            expert_hidden: vec![],
            activation: Activation::Tanh,
            rp: ResourceParams::with_betas(25.0, 2.5),
            selector_lr: 1e-4,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            huber_delta: 1.0,
            critic_epochs: 1,
            state_scale: None,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        self.rp.validate()?;
        let bad = |msg: &str| Err(RlError::InvalidConfig(msg.into()));
        if self.state_dim == 0 || self.action_dim == 0 || self.num_experts == 0 {
            return bad("state_dim, action_dim and num_experts must be positive");
        }
        if !(self.selector_lr > 0.0 && self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.huber_delta > 0.0) {
            return bad("learning rates and huber_delta must be positive");
        }
        if !(0.0..=1.0).contains(&self.rp.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if let Some(s) = &self.state_scale {
            if s.len() != self.state_dim || s.iter().any(|v| !v.is_finite()) {
                return bad("state_scale must have state_dim finite entries");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub mean_reward: f64,
    pub mean_length: f64,
    /// `I(X;M)` of the empirical joint over visited states, in `[0, ln M]`.
    pub rate_xm: f64,
    /// Mean per-step `KL(p(a|x,m) || p(a|m))` of the acting experts.
    pub expert_kl: f64,
    /// Mean Huber loss of all critics before the update.
    pub critic_loss: f64,
    pub prior_m: Vec<f64>,
}

pub fn write_metrics_csv<W: Write>(mut w: W, rows: &[IterationMetrics]) -> io::Result<()> {
    let m = rows.first().map_or(0, |r| r.prior_m.len());
    let mut header = vec!["iter", "mean_reward", "mean_length", "rate_xm", "expert_kl", "critic_loss"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend((0..m).map(|i| format!("prior_m_{i}")));
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.iteration,
            r.mean_reward,
            r.mean_length,
            r.rate_xm,
            r.expert_kl,
            r.critic_loss,
            join(&r.prior_m)
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub lengths: Vec<usize>,
    pub rewards: Vec<f64>,
    pub mean_length: f64,
    pub mean_reward: f64,
    /// Visited states with the selector posterior at each.
    pub partition: Vec<(Vec<f64>, Simplex)>,
}

impl EvalSummary {
    /// Fraction of visited states whose most probable expert is `m`.
    pub fn usage(&self, num_experts: usize) -> Vec<f64> {
        let mut counts = vec![0.0; num_experts];
        for (_, p) in &self.partition {
            counts[p.argmax()] += 1.0;
        }
        let n = self.partition.len().max(1) as f64;
        counts.iter().map(|c| c / n).collect()
    }
}

/// CSV `s0..,expert,p0..` of a state partition.
pub fn write_partition_csv<W: Write>(mut w: W, partition: &[(Vec<f64>, Simplex)]) -> io::Result<()> {
    let ds = partition.first().map_or(0, |r| r.0.len());
    let m = partition.first().map_or(0, |r| r.1.dim());
    let mut header: Vec<String> = (0..ds).map(|i| format!("s{i}")).collect();
    header.push("expert".into());
    header.extend((0..m).map(|i| format!("p{i}")));
    writeln!(w, "{}", header.join(","))?;
    for (s, p) in partition {
        writeln!(w, "{},{},{}", join(s), p.argmax(), join(p.probs()))?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct RlBank {
    pub config: RlConfig,
    pub selector: Net,
    pub selector_critic: Net,
    pub experts: Vec<Net>,
    pub critics: Vec<Net>,
    pub prior_m: Simplex,
    pub action_priors: Vec<GaussianParams>,
    pub iterations: usize,
    #[serde(skip)]
    opts: Option<Optimizers>,
}

#[derive(Clone, Debug)]
struct Optimizers {
    selector: Adam,
    selector_critic: Adam,
    experts: Vec<Adam>,
    critics: Vec<Adam>,
}

struct StepCache {
    probs: Simplex,
    policy: GaussianParams,
    v_sel: f64,
    v_sel_next: f64,
    v_exp: f64,
    v_exp_next: f64,
}

impl RlBank {
    pub fn new(config: RlConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let d = config.state_dim;
        let sizes = |hidden: &[usize], out: usize| {
            let mut s = vec![d];
            s.extend_from_slice(hidden);
            s.push(out);
            s
        };
        let mut selector = Net::new(&sizes(&config.selector_hidden, config.num_experts), config.activation, Head::Softmax, rng);
        zero_last_layer(&mut selector);
        let selector_critic = Net::new(&sizes(&config.critic_hidden, 1), config.activation, Head::Identity, rng);
        let experts: Vec<Net> = (0..config.num_experts)
            .map(|_| Net::new(&sizes(&config.expert_hidden, 2 * config.action_dim), config.activation, Head::Gaussian, rng))
            .collect();
        let critics: Vec<Net> = (0..config.num_experts)
            .map(|_| Net::new(&sizes(&config.critic_hidden, 1), config.activation, Head::Identity, rng))
            .collect();
        let opts = Optimizers {
            selector: Adam::new(&selector, config.selector_lr),
            selector_critic: Adam::new(&selector_critic, config.critic_lr),
            experts: experts.iter().map(|n| Adam::new(n, config.actor_lr)).collect(),
            critics: critics.iter().map(|n| Adam::new(n, config.critic_lr)).collect(),
        };
        let prior = GaussianParams { mean: vec![0.0; config.action_dim], log_std: vec![0.0; config.action_dim] };
        Ok(RlBank {
            prior_m: Simplex::uniform(config.num_experts),
            action_priors: vec![prior; config.num_experts],
            config,
            selector,
            selector_critic,
            experts,
            critics,
            iterations: 0,
            opts: Some(opts),
        })
    }

    pub fn num_experts(&self) -> usize {
        self.experts.len()
    }

    fn scaled(&self, x: &[f64]) -> Vec<f64> {
        match &self.config.state_scale {
            Some(s) => x.iter().zip(s).map(|(a, b)| a * b).collect(),
            None => x.to_vec(),
        }
    }

    pub fn selector_probs(&self, x: &[f64]) -> Result<Simplex> {
        Ok(self.selector.forward(&self.scaled(x))?.as_probs().expect("softmax head").clone())
    }

    pub fn expert_policy(&self, m: usize, x: &[f64]) -> Result<GaussianParams> {
        Ok(self.experts[m].forward(&self.scaled(x))?.as_gaussian().expect("gaussian head").clone())
    }

    /// `V(x)` of the selector critic or of expert `m`'s critic.
    pub fn value(&self, level: Level, m: usize, x: &[f64]) -> Result<f64> {
        let net = match level {
            Level::Selector => &self.selector_critic,
            Level::Expert => &self.critics[m],
        };
        Ok(net.forward(&self.scaled(x))?.as_vector().expect("identity head")[0])
    }

    /// Samples `m ~ p(m|x)` then `a ~ p(a|x,m)`.
    pub fn act(&self, x: &[f64], rng: &mut Rng) -> Result<(usize, Vec<f64>, f64, f64, f64)> {
        let p = self.selector_probs(x)?;
        let m = sample(&p, rng);
        let policy = self.expert_policy(m, x)?;
        let a = gaussian_sample(&policy, rng);
        let lp = gaussian_log_prob(&policy, &a);
        let prior_lp = gaussian_log_prob(&self.action_priors[m], &a);
        let ratio = p.probs()[m].max(f64::MIN_POSITIVE).ln() - self.prior_m.probs()[m].max(PROB_FLOOR).ln();
        Ok((m, a, lp, prior_lp, ratio))
    }

    /// Resets `env` and runs the stochastic hierarchy for at most
    /// `max_steps` steps or until the episode ends.
    pub fn collect_rollout<E: Env>(&self, env: &mut E, rng: &mut Rng, max_steps: usize) -> Result<Trajectory> {
        let mut x = env.reset(rng);
        let mut steps = Vec::new();
        for _ in 0..max_steps {
            let (m, a, lp, prior_lp, ratio) = self.act(&x, rng)?;
            let out = env.step(&a)?;
            let finished = out.done();
            steps.push(Transition {
                state: std::mem::replace(&mut x, out.state.clone()),
                expert: m,
                action: a,
                reward: out.reward,
                next_state: out.state,
                done: out.terminated,
                log_prob: lp,
                prior_log_prob: prior_lp,
                selector_log_ratio: ratio,
            });
            if finished {
                break;
            }
        }
        Ok(Trajectory { steps, annotations: None })
    }

    /// TD advantages at one level under the current critics.
    pub fn advantage(&self, traj: &Trajectory, level: Level) -> Result<Vec<f64>> {
        let (f, fbar) = free_energy_terms(traj, &self.config.rp);
        let terms = if level == Level::Selector { fbar } else { f };
        let mut v = Vec::with_capacity(traj.len());
        let mut v_next = Vec::with_capacity(traj.len());
        for s in &traj.steps {
            v.push(self.value(level, s.expert, &s.state)?);
            v_next.push(self.value(level, s.expert, &s.next_state)?);
        }
        Ok(td_advantages(&terms, &v, &v_next, &traj.dones(), self.config.rp.gamma))
    }

    /// Fills `R`, `F`, `F̄`, `A`, `Ā`; truncated ends bootstrap from the
    /// critics.
    pub fn annotate(&self, traj: &mut Trajectory) -> Result<()> {
        let caches = self.caches(traj)?;
        traj.annotations = Some(self.annotations_from(traj, &caches));
        Ok(())
    }

    fn caches(&self, traj: &Trajectory) -> Result<Vec<StepCache>> {
        traj.steps
            .iter()
            .map(|s| {
                let x = self.scaled(&s.state);
                let xn = self.scaled(&s.next_state);
                let scalar = |net: &Net, x: &[f64]| -> Result<f64> { Ok(net.forward(x)?.as_vector().expect("identity head")[0]) };
                Ok(StepCache {
                    probs: self.selector.forward(&x)?.as_probs().expect("softmax head").clone(),
                    policy: self.experts[s.expert].forward(&x)?.as_gaussian().expect("gaussian head").clone(),
                    v_sel: scalar(&self.selector_critic, &x)?,
                    v_sel_next: scalar(&self.selector_critic, &xn)?,
                    v_exp: scalar(&self.critics[s.expert], &x)?,
                    v_exp_next: scalar(&self.critics[s.expert], &xn)?,
                })
            })
            .collect()
    }

    fn annotations_from(&self, traj: &Trajectory, caches: &[StepCache]) -> Annotations {
        let rp = &self.config.rp;
        let boot = match (traj.needs_bootstrap(), caches.last()) {
            (true, Some(c)) => (c.v_exp_next, c.v_sel_next),
            _ => (0.0, 0.0),
        };
        let (f, fbar) = free_energy_terms(traj, rp);
        let dones = traj.dones();
        let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
        let pick = |g: fn(&StepCache) -> f64| caches.iter().map(g).collect::<Vec<f64>>();
        Annotations {
            returns: discounted(&rewards, &dones, rp.gamma, boot.0),
            free_energy: discounted(&f, &dones, rp.gamma, boot.0),
            selector_free_energy: discounted(&fbar, &dones, rp.gamma, boot.1),
            advantages: td_advantages(&f, &pick(|c| c.v_exp), &pick(|c| c.v_exp_next), &dones, rp.gamma),
            selector_advantages: td_advantages(&fbar, &pick(|c| c.v_sel), &pick(|c| c.v_sel_next), &dones, rp.gamma),
        }
    }

    /// Collects `batch_size` rollouts (cycling through `envs`), then takes one
    /// Adam step on every actor and critic and updates the priors.
    pub fn train_iteration<E: Env>(
        &mut self,
        envs: &mut [E],
        batch_size: usize,
        max_steps: usize,
        rng: &mut Rng,
    ) -> Result<IterationMetrics> {
        if batch_size == 0 || envs.is_empty() {
            return Err(RlError::Empty);
        }
        let mut trajs = Vec::with_capacity(batch_size);
        for i in 0..batch_size {
            let k = i % envs.len();
            trajs.push(self.collect_rollout(&mut envs[k], rng, max_steps)?);
        }
        self.update(&mut trajs)
    }

    /// One update from already collected rollouts.
    pub fn update(&mut self, trajs: &mut [Trajectory]) -> Result<IterationMetrics> {
        let total_steps: usize = trajs.iter().map(|t| t.len()).sum();
        if total_steps == 0 {
            return Err(RlError::Empty);
        }
        let m_count = self.num_experts();
        let delta = self.config.huber_delta;
        let mut g_sel = Grads::zeros_like(&self.selector);
        let mut g_exp: Vec<Grads> = self.experts.iter().map(Grads::zeros_like).collect();
        let mut counts = vec![0usize; m_count];
        let mut sel_rows = Vec::with_capacity(total_steps);
        let mut moments = vec![(vec![0.0; self.config.action_dim], vec![0.0; self.config.action_dim], vec![0.0; self.config.action_dim]); m_count];
        let mut critic_loss = 0.0;
        let mut targets = Vec::with_capacity(total_steps);
        let mut expert_kl = 0.0;

        for traj in trajs.iter_mut() {
            let caches = self.caches(traj)?;
            let ann = self.annotations_from(traj, &caches);
            for (t, s) in traj.steps.iter().enumerate() {
                let c = &caches[t];
                let m = s.expert;
                let x = self.scaled(&s.state);
                counts[m] += 1;

                let logit: Vec<f64> = (0..m_count)
                    .map(|k| -ann.selector_advantages[t] * ((k == m) as u8 as f64 - c.probs.probs()[k]))
                    .collect();
                let trace = self.selector.forward_trace(&x)?;
                self.selector.accumulate_raw(&trace, &logit, &mut g_sel, 1.0)?;

                let trace = self.experts[m].forward_trace(&x)?;
                let score = gaussian_log_prob_grad(&c.policy, &s.action);
                let descent: Vec<f64> = score.iter().map(|g| -ann.advantages[t] * g).collect();
                self.experts[m].accumulate(&trace, &descent, &mut g_exp[m], 1.0)?;

                let r_sel = c.v_sel - ann.selector_free_energy[t];
                let r_exp = c.v_exp - ann.free_energy[t];
                critic_loss += 0.5 * (huber(r_sel, delta) + huber(r_exp, delta));
                targets.push((x, m, ann.free_energy[t], ann.selector_free_energy[t]));

                expert_kl += gaussian_kl(&c.policy, &self.action_priors[m]);
                let (sum_mean, sum_sq, sum_var) = &mut moments[m];
                for i in 0..c.policy.dim() {
                    sum_mean[i] += c.policy.mean[i];
                    sum_sq[i] += c.policy.mean[i] * c.policy.mean[i];
                    sum_var[i] += (2.0 * c.policy.log_std[i]).exp();
                }
                sel_rows.push(c.probs.clone());
            }
            traj.annotations = Some(ann);
        }

        let opts = self.opts.get_or_insert_with(|| Optimizers {
            selector: Adam::new(&self.selector, self.config.selector_lr),
            selector_critic: Adam::new(&self.selector_critic, self.config.critic_lr),
            experts: self.experts.iter().map(|n| Adam::new(n, self.config.actor_lr)).collect(),
            critics: self.critics.iter().map(|n| Adam::new(n, self.config.critic_lr)).collect(),
        });
        let n_traj = trajs.len() as f64;
        g_sel.scale(1.0 / n_traj);
        opts.selector.step(&mut self.selector, &g_sel)?;
        for m in 0..m_count {
            if counts[m] == 0 {
                continue;
            }
            g_exp[m].scale(1.0 / n_traj);
            opts.experts[m].step(&mut self.experts[m], &g_exp[m])?;
        }
        for _ in 0..self.config.critic_epochs {
            self.fit_critics(&targets, &counts)?;
        }

        let marginal = mean_simplex(&sel_rows)?;
        let rate_xm = sel_rows.iter().map(|p| crate::distrib::kl(p, &marginal)).sum::<std::result::Result<f64, _>>()?
            / sel_rows.len() as f64;
        let rp = self.config.rp;
        self.prior_m = ema_update(&self.prior_m, &marginal, rp.lambda2)?;
        for m in 0..m_count {
            if counts[m] == 0 {
                continue;
            }
            let n = counts[m] as f64;
            let (sum_mean, sum_sq, sum_var) = &moments[m];
            let prior = &mut self.action_priors[m];
            for i in 0..prior.dim() {
                let mean = sum_mean[i] / n;
                let var = (sum_var[i] / n + (sum_sq[i] / n - mean * mean).max(0.0)).max(1e-12);
                let prior_var = (2.0 * prior.log_std[i]).exp();
                prior.mean[i] = rp.lambda1 * prior.mean[i] + (1.0 - rp.lambda1) * mean;
                prior.log_std[i] = 0.5 * (rp.lambda1 * prior_var + (1.0 - rp.lambda1) * var).ln();
            }
        }

        self.iterations += 1;
        Ok(IterationMetrics {
            iteration: self.iterations,
            mean_reward: trajs.iter().map(|t| t.total_reward()).sum::<f64>() / n_traj,
            mean_length: total_steps as f64 / n_traj,
            rate_xm: rate_xm.max(0.0),
            expert_kl: expert_kl / total_steps as f64,
            critic_loss: critic_loss / total_steps as f64,
            prior_m: self.prior_m.probs().to_vec(),
        })
    }

    /// One Huber regression step of every critic on fixed `(x, m, F, F̄)`
    /// targets.
    fn fit_critics(&mut self, targets: &[(Vec<f64>, usize, f64, f64)], counts: &[usize]) -> Result<()> {
        let delta = self.config.huber_delta;
        let mut g_sel = Grads::zeros_like(&self.selector_critic);
        let mut g_exp: Vec<Grads> = self.critics.iter().map(Grads::zeros_like).collect();
        for (x, m, f, fbar) in targets {
            let trace = self.selector_critic.forward_trace(x)?;
            let r = trace.raw()[0] - fbar;
            self.selector_critic.accumulate_raw(&trace, &[huber_grad(r, delta)], &mut g_sel, 1.0)?;
            let trace = self.critics[*m].forward_trace(x)?;
            let r = trace.raw()[0] - f;
            self.critics[*m].accumulate_raw(&trace, &[huber_grad(r, delta)], &mut g_exp[*m], 1.0)?;
        }
        let opts = self.opts.as_mut().expect("optimizers initialised");
        g_sel.scale(1.0 / targets.len() as f64);
        opts.selector_critic.step(&mut self.selector_critic, &g_sel)?;
        for (m, g) in g_exp.iter_mut().enumerate() {
            if counts[m] > 0 {
                g.scale(1.0 / counts[m] as f64);
                opts.critics[m].step(&mut self.critics[m], g)?;
            }
        }
        Ok(())
    }

    /// Evaluation: expert drawn from the selector, mean action.
    pub fn evaluate<E: Env>(&self, env: &mut E, episodes: usize, max_steps: usize, rng: &mut Rng) -> Result<EvalSummary> {
        let mut lengths = Vec::with_capacity(episodes);
        let mut rewards = Vec::with_capacity(episodes);
        let mut partition = Vec::new();
        for _ in 0..episodes {
            let mut x = env.reset(rng);
            let mut total = 0.0;
            let mut len = 0;
            for _ in 0..max_steps {
                let p = self.selector_probs(&x)?;
                let policy = self.expert_policy(sample(&p, rng), &x)?;
                let out = env.step(&policy.mean)?;
                partition.push((std::mem::replace(&mut x, out.state.clone()), p));
                total += out.reward;
                len += 1;
                if out.done() {
                    break;
                }
            }
            lengths.push(len);
            rewards.push(total);
        }
        let n = episodes.max(1) as f64;
        Ok(EvalSummary {
            mean_length: lengths.iter().sum::<usize>() as f64 / n,
            mean_reward: rewards.iter().sum::<f64>() / n,
            lengths,
            rewards,
            partition,
        })
    }
}

fn zero_last_layer(net: &mut Net) {
    if let Some(last) = net.layers.last_mut() {
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        last.bias.iter_mut().for_each(|b| *b = 0.0);
    }
}

fn mean_simplex(rows: &[Simplex]) -> Result<Simplex> {
    let n = rows.len() as f64;
    let mut out = vec![0.0; rows[0].dim()];
    for r in rows {
        out.iter_mut().zip(r.probs()).for_each(|(a, b)| *a += b / n);
    }
    Ok(Simplex::renormalized(out))
}
