//! Density estimation with Normal-Wishart experts.
//!
//! Each expert holds a Normal-Wishart posterior over a Gaussian's mean and
//! precision. A datum is scored by drawing `(mu, Lambda)` from the routed
//! expert and evaluating the Gaussian log-likelihood with precision
//! `lambda * Lambda`, penalized by the KL divergence to a frozen prior block.
//! Experts learn `omega` and the Cholesky factor of `W` by reparameterized
//! gradient ascent; `lambda` and `nu` stay fixed.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{Activation, Adam, ApproxError, FlatAdam, Grads, Head, Net};
use crate::distrib::{ema_update, kl_to_prior, sample, DistribError, ResourceParams, Simplex, PROB_FLOOR};
use crate::rng::Rng;
use crate::supervised::{selector_logit_grad, Baseline};

#[derive(Debug, Error)]
pub enum DensityError {
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Distrib(#[from] DistribError),
    #[error("matrix is not symmetric positive-definite")]
    NotSpd,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("the constant KL term needs equal lambda and nu")]
    ConstantTermUnsupported,
    #[error("expert index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("empty batch")]
    Empty,
}

type Result<T> = std::result::Result<T, DensityError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalWishart {
    pub omega: Vec<f64>,
    pub lambda: f64,
    /// Row-major `D x D`.
    pub w: Vec<Vec<f64>>,
    pub nu: f64,
}

impl NormalWishart {
    pub fn new(omega: Vec<f64>, lambda: f64, w: &DMatrix<f64>, nu: f64) -> Result<Self> {
        let nw = NormalWishart {
            omega,
            lambda,
            w: (0..w.nrows()).map(|i| w.row(i).iter().copied().collect()).collect(),
            nu,
        };
        nw.validate()?;
        Ok(nw)
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }

    pub fn w_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.w[i][j])
    }

    pub fn omega_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.omega)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(DensityError::InvalidParameter { name: "omega", reason: "empty".into() });
        }
        if self.w.len() != d || self.w.iter().any(|r| r.len() != d) {
            return Err(DensityError::DimensionMismatch { expected: d, got: self.w.len() });
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(DensityError::InvalidParameter { name: "lambda", reason: "must be positive".into() });
        }
        if !(self.nu > d as f64 - 1.0 && self.nu.is_finite()) {
            return Err(DensityError::InvalidParameter { name: "nu", reason: format!("must exceed D - 1 = {}", d - 1) });
        }
        let w = self.w_matrix();
        if (&w - w.transpose()).abs().max() > 1e-9 * w.abs().max().max(1.0) {
            return Err(DensityError::NotSpd);
        }
        cholesky(&w)?;
        Ok(())
    }
}

fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.l()).ok_or(DensityError::NotSpd)
}

/// Standard normals and chi-square roots behind one Bartlett draw.
#[derive(Clone, Debug, PartialEq)]
pub struct NwNoise {
    /// Lower-triangular Bartlett factor `A`.
    pub a: DMatrix<f64>,
    pub z: DVector<f64>,
}

impl NwNoise {
    pub fn draw(d: usize, nu: f64, rng: &mut Rng) -> Self {
        let mut a = DMatrix::zeros(d, d);
        for i in 0..d {
            let chi = ChiSquared::new(nu - i as f64).expect("nu > D - 1");
            a[(i, i)] = chi.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = StandardNormal.sample(rng);
            }
        }
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        NwNoise { a, z }
    }
}

/// `Lambda = (L A)(L A)^T`, `mu = omega + (L A)^{-T} z / sqrt(lambda)`.
fn transform(l: &DMatrix<f64>, omega: &DVector<f64>, lambda: f64, noise: &NwNoise) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let b = l * &noise.a;
    let u = b
        .transpose()
        .solve_upper_triangular(&(&noise.z / lambda.sqrt()))
        .expect("triangular factor with positive diagonal");
    let big_lambda = &b * b.transpose();
    (omega + u, big_lambda, b)
}

/// Wishart draw by Bartlett decomposition, then the mean given the precision.
pub fn nw_sample(nw: &NormalWishart, rng: &mut Rng) -> Result<(DVector<f64>, DMatrix<f64>)> {
    nw.validate()?;
    let l = cholesky(&nw.w_matrix())?;
    let noise = NwNoise::draw(nw.dim(), nw.nu, rng);
    let (mu, big_lambda, _) = transform(&l, &nw.omega_vector(), nw.lambda, &noise);
    Ok((mu, big_lambda))
}

/// Multivariate normal log-density with the given precision matrix.
pub fn gaussian_loglik(x: &[f64], mu: &[f64], precision: &DMatrix<f64>) -> Result<f64> {
    let d = x.len();
    if mu.len() != d || precision.nrows() != d || precision.ncols() != d {
        return Err(DensityError::DimensionMismatch { expected: d, got: mu.len() });
    }
    let l = cholesky(precision)?;
    let diff = DVector::from_iterator(d, x.iter().zip(mu).map(|(a, b)| a - b));
    let s = l.transpose() * diff;
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(-0.5 * (d as f64 * (2.0 * PI).ln() - log_det + s.norm_squared()))
}

/// KL divergence between Normal-Wishart distributions, up to the constant
/// that depends only on `lambda` and `nu`. With `include_constant` the exact
/// value is returned, which is supported when both share `lambda` and `nu`
/// (the constant is then zero).
pub fn nw_kl(p: &NormalWishart, q: &NormalWishart, include_constant: bool) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(DensityError::DimensionMismatch { expected: p.dim(), got: q.dim() });
    }
    p.validate()?;
    q.validate()?;
    if include_constant && (p.lambda != q.lambda || p.nu != q.nu) {
        return Err(DensityError::ConstantTermUnsupported);
    }
    if p == q {
        return Ok(0.0);
    }
    let kl = kl_parts(&p.omega_vector(), &p.w_matrix(), p.nu, &q.omega_vector(), &q.w_matrix(), q.lambda, q.nu)?.0;
    Ok(if include_constant { kl.max(0.0) } else { kl })
}

/// KL value plus gradients with respect to `omega_p` and the symmetric
/// gradient with respect to `W_p`.
fn kl_parts(
    omega_p: &DVector<f64>,
    w_p: &DMatrix<f64>,
    nu_p: f64,
    omega_q: &DVector<f64>,
    w_q: &DMatrix<f64>,
    lambda_q: f64,
    nu_q: f64,
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let d = omega_p.len() as f64;
    let w_q_inv = w_q.clone().cholesky().ok_or(DensityError::NotSpd)?.inverse();
    let w_p_chol = w_p.clone().cholesky().ok_or(DensityError::NotSpd)?;
    let w_p_inv = w_p_chol.inverse();
    let delta = omega_q - omega_p;
    let quad = (delta.transpose() * w_p * &delta)[(0, 0)];
    let ratio = &w_q_inv * w_p;
    let log_det_ratio = 2.0 * w_p_chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>()
        - w_q.clone().cholesky().ok_or(DensityError::NotSpd)?.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum::<f64>();
    let kl = 0.5 * lambda_q * nu_p * quad - 0.5 * nu_q * log_det_ratio + 0.5 * nu_p * (ratio.trace() - d);
    let g_omega = -(w_p * &delta) * (lambda_q * nu_p);
    let g_w = &delta * delta.transpose() * (0.5 * lambda_q * nu_p) - w_p_inv * (0.5 * nu_q) + w_q_inv * (0.5 * nu_p);
    Ok((kl, g_omega, g_w))
}

/// Learnable expert block: `omega` and the packed lower Cholesky factor of
/// `W` with the diagonal stored as logs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NwExpert {
    pub omega: Vec<f64>,
    pub chol: Vec<f64>,
}

fn packed(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

impl NwExpert {
    pub fn from_nw(nw: &NormalWishart) -> Result<Self> {
        let l = cholesky(&nw.w_matrix())?;
        let d = nw.dim();
        let mut chol = vec![0.0; d * (d + 1) / 2];
        for i in 0..d {
            for j in 0..=i {
                chol[packed(i, j)] = if i == j { l[(i, i)].ln() } else { l[(i, j)] };
            }
        }
        Ok(NwExpert { omega: nw.omega.clone(), chol })
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }

    pub fn l_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Equal => self.chol[packed(i, i)].exp(),
            std::cmp::Ordering::Greater => self.chol[packed(i, j)],
            std::cmp::Ordering::Less => 0.0,
        })
    }

    pub fn w_matrix(&self) -> DMatrix<f64> {
        let l = self.l_matrix();
        &l * l.transpose()
    }

    pub fn to_nw(&self, lambda: f64, nu: f64) -> NormalWishart {
        let w = self.w_matrix();
        NormalWishart {
            omega: self.omega.clone(),
            lambda,
            w: (0..w.nrows()).map(|i| w.row(i).iter().copied().collect()).collect(),
            nu,
        }
    }

    fn flat(&self) -> Vec<f64> {
        self.omega.iter().chain(&self.chol).copied().collect()
    }

    fn set_flat(&mut self, v: &[f64]) {
        let d = self.dim();
        self.omega.copy_from_slice(&v[..d]);
        self.chol.copy_from_slice(&v[d..]);
    }

    /// Pack a gradient with respect to `L` into the parameter layout.
    fn pack_l_grad(&self, l: &DMatrix<f64>, g_l: &DMatrix<f64>) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d * (d + 1) / 2];
        for i in 0..d {
            for j in 0..=i {
                out[packed(i, j)] = if i == j { g_l[(i, i)] * l[(i, i)] } else { g_l[(i, j)] };
            }
        }
        out
    }
}

/// One reparameterized draw: the log-likelihood of `x` and its gradient with
/// respect to the expert's flat parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DrawScore {
    pub mu: DVector<f64>,
    pub precision: DMatrix<f64>,
    pub loglik: f64,
    pub grad: Vec<f64>,
}

pub fn draw_score(expert: &NwExpert, lambda: f64, x: &[f64], noise: &NwNoise) -> Result<DrawScore> {
    let d = expert.dim();
    if x.len() != d {
        return Err(DensityError::DimensionMismatch { expected: d, got: x.len() });
    }
    let l = expert.l_matrix();
    let omega = DVector::from_column_slice(&expert.omega);
    let (mu, big_lambda, b) = transform(&l, &omega, lambda, noise);
    let diff = DVector::from_column_slice(x) - &omega;
    let sl = lambda.sqrt();
    let s = b.transpose() * &diff * sl - &noise.z;
    let log_diag: f64 = (0..d).map(|i| l[(i, i)].ln() + noise.a[(i, i)].ln()).sum();
    let loglik = -0.5 * d as f64 * (2.0 * PI).ln() + 0.5 * d as f64 * lambda.ln() + log_diag - 0.5 * s.norm_squared();

    let g_omega = &b * &s * sl;
    let g_b = -(&diff * s.transpose()) * sl;
    let mut g_l = g_b * noise.a.transpose();
    for i in 0..d {
        g_l[(i, i)] += 1.0 / l[(i, i)];
    }
    let mut grad: Vec<f64> = g_omega.iter().copied().collect();
    grad.extend(expert.pack_l_grad(&l, &g_l));
    Ok(DrawScore { mu, precision: big_lambda * lambda, loglik, grad })
}

/// `KL(expert || prior)` without the constant and its gradient in the flat
/// parameter layout.
pub fn expert_kl(expert: &NwExpert, nu: f64, prior: &NormalWishart) -> Result<(f64, Vec<f64>)> {
    let l = expert.l_matrix();
    let w = &l * l.transpose();
    let omega = DVector::from_column_slice(&expert.omega);
    let (kl, g_omega, g_w) = kl_parts(&omega, &w, nu, &prior.omega_vector(), &prior.w_matrix(), prior.lambda, prior.nu)?;
    let g_l = g_w * &l * 2.0;
    let mut grad: Vec<f64> = g_omega.iter().copied().collect();
    grad.extend(expert.pack_l_grad(&l, &g_l));
    Ok((kl, grad))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub dim: usize,
    pub num_experts: usize,
    pub selector_hidden: Vec<usize>,
    pub rp: ResourceParams,
    /// Mean-precision scale of the expert posteriors.
    pub lambda: f64,
    /// Degrees of freedom; `None` means `D + 2`.
    pub nu: Option<f64>,
    /// Mean-precision scale of the frozen prior blocks.
    pub prior_lambda: f64,
    pub selector_lr: f64,
    pub expert_lr: f64,
    pub baseline_decay: f64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            dim: 2,
            num_experts: 4,
            selector_hidden: vec![10, 10],
            rp: ResourceParams::with_betas(20.0, 1.0),
            lambda: 25.0,
            nu: None,
            prior_lambda: 1.0,
            selector_lr: 3e-3,
            expert_lr: 3e-3,
            baseline_decay: 0.99,
        }
    }
}

impl DensityConfig {
    pub fn nu(&self) -> f64 {
        self.nu.unwrap_or(self.dim as f64 + 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.rp.validate()?;
        let bad = |name: &'static str, reason: &str| Err(DensityError::InvalidParameter { name, reason: reason.into() });
        if self.dim == 0 {
            return bad("dim", "must be positive");
        }
        if self.num_experts == 0 {
            return bad("num_experts", "must be positive");
        }
        if !(self.lambda > 0.0 && self.prior_lambda > 0.0) {
            return bad("lambda", "must be positive");
        }
        if self.nu() <= self.dim as f64 - 1.0 {
            return bad("nu", "must exceed D - 1");
        }
        if !(self.selector_lr > 0.0 && self.expert_lr > 0.0) {
            return bad("learning rate", "must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DensityMetrics {
    pub free_energy: f64,
    pub loglik: f64,
    pub rate_xm: f64,
    pub expert_kl: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityBank {
    pub config: DensityConfig,
    pub selector: Net,
    pub experts: Vec<NwExpert>,
    /// Frozen prior blocks `p_0`.
    pub priors: Vec<NormalWishart>,
    pub prior_m: Simplex,
    selector_opt: Adam,
    expert_opts: Vec<FlatAdam>,
    baseline: Baseline,
    pub steps: u64,
}

impl DensityBank {
    /// Prior means uniform in the box `[lo, hi]`, prior scale `I / nu`;
    /// posteriors start at their priors.
    pub fn new(config: DensityConfig, lo: &[f64], hi: &[f64], rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        if lo.len() != d || hi.len() != d {
            return Err(DensityError::DimensionMismatch { expected: d, got: lo.len() });
        }
        let nu = config.nu();
        let mut sizes = vec![d];
        sizes.extend(&config.selector_hidden);
        sizes.push(config.num_experts);
        let mut selector = Net::new(&sizes, Activation::Tanh, Head::Softmax, rng);
        selector.layers.last_mut().expect("non-empty").weights.iter_mut().for_each(|w| *w = 0.0);
        let w0 = DMatrix::identity(d, d) / nu;
        let mut priors = Vec::with_capacity(config.num_experts);
        for _ in 0..config.num_experts {
            let omega = (0..d).map(|i| rng.random_range(lo[i]..=hi[i])).collect();
            priors.push(NormalWishart::new(omega, config.prior_lambda, &w0, nu)?);
        }
        let experts = priors.iter().map(NwExpert::from_nw).collect::<Result<Vec<_>>>()?;
        let n_params = d + d * (d + 1) / 2;
        Ok(DensityBank {
            selector_opt: Adam::new(&selector, config.selector_lr),
            expert_opts: (0..config.num_experts).map(|_| FlatAdam::new(n_params, config.expert_lr)).collect(),
            prior_m: Simplex::uniform(config.num_experts),
            selector,
            experts,
            priors,
            baseline: Baseline::default(),
            steps: 0,
            config,
        })
    }

    pub fn num_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn posterior(&self, m: usize) -> Result<NormalWishart> {
        let e = self.experts.get(m).ok_or(DensityError::IndexOutOfRange(m))?;
        Ok(e.to_nw(self.config.lambda, self.config.nu()))
    }

    pub fn selector_probs(&self, x: &[f64]) -> Result<Simplex> {
        Ok(self.selector.forward(x)?.as_probs().expect("softmax head").clone())
    }

    fn score(&self, m: usize, x: &[f64], noise: &NwNoise) -> Result<(f64, DrawScore, f64, Vec<f64>)> {
        let expert = self.experts.get(m).ok_or(DensityError::IndexOutOfRange(m))?;
        let draw = draw_score(expert, self.config.lambda, x, noise)?;
        let (kl, kl_grad) = expert_kl(expert, self.config.nu(), &self.priors[m])?;
        Ok((draw.loglik - kl / self.config.rp.beta2, draw, kl, kl_grad))
    }

    /// Single-draw free energy of expert `m` on `x`.
    pub fn free_energy(&self, m: usize, x: &[f64], rng: &mut Rng) -> Result<f64> {
        let noise = NwNoise::draw(self.config.dim, self.config.nu(), rng);
        Ok(self.score(m, x, &noise)?.0)
    }

    pub fn train_step(&mut self, batch: &[Vec<f64>], rng: &mut Rng) -> Result<DensityMetrics> {
        if batch.is_empty() {
            return Err(DensityError::Empty);
        }
        let rp = self.config.rp;
        let n_params = self.experts[0].flat().len();
        let mut sel_grads = Grads::zeros_like(&self.selector);
        let mut exp_grads = vec![vec![0.0; n_params]; self.num_experts()];
        let mut counts = vec![0usize; self.num_experts()];
        let mut metrics = DensityMetrics::default();
        for x in batch {
            let trace = self.selector.forward_trace(x)?;
            let p = trace.output().as_probs().expect("softmax head").clone();
            let m = sample(&p, rng);
            let noise = NwNoise::draw(self.config.dim, self.config.nu(), rng);
            let (f, draw, kl, kl_grad) = self.score(m, x, &noise)?;
            for ((g, a), b) in exp_grads[m].iter_mut().zip(&draw.grad).zip(&kl_grad) {
                *g -= a - b / rp.beta2;
            }
            counts[m] += 1;

            let log_ratio = p.probs()[m].max(f64::MIN_POSITIVE).ln() - self.prior_m.probs()[m].max(PROB_FLOOR).ln();
            let advantage = f - self.baseline.get(f) - log_ratio / rp.beta1;
            let logit_grad: Vec<f64> = selector_logit_grad(&p, m, advantage).iter().map(|g| -g).collect();
            self.selector.accumulate_raw(&trace, &logit_grad, &mut sel_grads, 1.0)?;
            self.baseline.update(f, self.config.baseline_decay);

            metrics.free_energy += f;
            metrics.loglik += draw.loglik;
            metrics.expert_kl += kl;
            metrics.rate_xm += kl_to_prior(&p, &self.prior_m)?;
            self.prior_m = ema_update(&self.prior_m, &p, rp.lambda2)?;
        }
        let n = batch.len() as f64;
        sel_grads.scale(1.0 / n);
        self.selector_opt.step(&mut self.selector, &sel_grads)?;
        for m in 0..self.num_experts() {
            if counts[m] > 0 {
                let g: Vec<f64> = exp_grads[m].iter().map(|v| v / counts[m] as f64).collect();
                let mut params = self.experts[m].flat();
                self.expert_opts[m].step(&mut params, &g)?;
                self.experts[m].set_flat(&params);
            }
        }
        self.steps += 1;
        metrics.free_energy /= n;
        metrics.loglik /= n;
        metrics.expert_kl /= n;
        metrics.rate_xm /= n;
        Ok(metrics)
    }

    /// Plug-in mixture log-density `ln sum_m p(m) N(x | omega_m, (lambda nu W_m)^{-1})`.
    pub fn mixture_log_density(&self, x: &[f64]) -> Result<f64> {
        let terms = (0..self.num_experts())
            .map(|m| {
                let e = &self.experts[m];
                // Mean integrated out: x - omega has covariance 2 (lambda Lambda)^-1.
                let precision = e.w_matrix() * (0.5 * self.config.lambda * self.config.nu());
                Ok(self.prior_m.probs()[m].max(PROB_FLOOR).ln() + gaussian_loglik(x, &e.omega, &precision)?)
            })
            .collect::<Result<Vec<f64>>>()?;
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln())
    }

    pub fn export(&self) -> MixtureExport {
        MixtureExport {
            experts: (0..self.num_experts()).map(|m| self.experts[m].to_nw(self.config.lambda, self.config.nu())).collect(),
            prior_m: self.prior_m.probs().to_vec(),
        }
    }

    /// CSV `x1,x2,log_density` over a regular 2-D grid.
    pub fn write_grid_csv<W: Write>(&self, mut w: W, lo: (f64, f64), hi: (f64, f64), n: usize) -> io::Result<()> {
        writeln!(w, "x1,x2,log_density")?;
        for i in 0..n {
            for j in 0..n {
                let t = |k: usize, a: f64, b: f64| a + (b - a) * k as f64 / (n.max(2) - 1) as f64;
                let x = [t(i, lo.0, hi.0), t(j, lo.1, hi.1)];
                let v = self.mixture_log_density(&x).map_err(io::Error::other)?;
                writeln!(w, "{},{},{}", x[0], x[1], v)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureExport {
    pub experts: Vec<NormalWishart>,
    pub prior_m: Vec<f64>,
}

/// Coordinate-wise bounding box of a point set.
pub fn bounding_box(points: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = points[0].len();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in points {
        for i in 0..d {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    (lo, hi)
}
