//! Probability and information primitives shared by every learner.
//!
//! All information quantities are in nats.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;

/// Entries below this value are lifted before a learned prior is used as the
/// second argument of a KL divergence.
pub const PROB_FLOOR: f64 = 1e-12;

const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistribError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("empty distribution")]
    Empty,
    #[error("invalid probability {value} at index {index}")]
    InvalidEntry { index: usize, value: f64 },
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("absolute continuity violated at index {index}: p = {p}, q = 0")]
    AbsoluteContinuityViolation { index: usize, p: f64 },
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

/// A finite categorical distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Simplex(Vec<f64>);

impl Simplex {
    pub fn new(probs: Vec<f64>) -> Result<Self, DistribError> {
        check_entries(&probs)?;
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(DistribError::NotNormalized(sum));
        }
        Ok(Simplex(probs))
    }

    /// Normalizes non-negative weights with a positive total.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, DistribError> {
        check_entries(&weights)?;
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(DistribError::NotNormalized(sum));
        }
        Ok(Simplex(weights.into_iter().map(|w| w / sum).collect()))
    }

    pub fn uniform(dim: usize) -> Self {
        assert!(dim >= 1, "simplex dimension must be at least 1");
        Simplex(vec![1.0 / dim as f64; dim])
    }

    pub fn one_hot(dim: usize, index: usize) -> Self {
        assert!(index < dim, "one-hot index {index} out of range {dim}");
        let mut p = vec![0.0; dim];
        p[index] = 1.0;
        Simplex(p)
    }

    /// Numerically normalized vector produced inside this crate; renormalizes
    /// to absorb rounding.
    pub(crate) fn renormalized(mut probs: Vec<f64>) -> Self {
        debug_assert!(!probs.is_empty());
        for p in probs.iter_mut() {
            if !(*p > 0.0) {
                *p = 0.0;
            }
        }
        let sum: f64 = probs.iter().sum();
        debug_assert!(sum > 0.0, "renormalizing an all-zero vector");
        for p in probs.iter_mut() {
            *p /= sum;
        }
        Simplex(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Copy with every entry lifted to at least `floor`, then renormalized.
    pub fn clamped(&self, floor: f64) -> Simplex {
        Simplex::renormalized(self.0.iter().map(|&p| p.max(floor)).collect())
    }

    pub fn expectation(&self, values: &[f64]) -> Result<f64, DistribError> {
        same_dim(self.dim(), values.len())?;
        Ok(self.0.iter().zip(values).map(|(p, v)| p * v).sum())
    }
}

impl TryFrom<Vec<f64>> for Simplex {
    type Error = DistribError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Simplex::new(v)
    }
}

impl From<Simplex> for Vec<f64> {
    fn from(s: Simplex) -> Self {
        s.0
    }
}

fn check_entries(probs: &[f64]) -> Result<(), DistribError> {
    if probs.is_empty() {
        return Err(DistribError::Empty);
    }
    for (index, &value) in probs.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(DistribError::InvalidEntry { index, value });
        }
    }
    Ok(())
}

fn same_dim(a: usize, b: usize) -> Result<(), DistribError> {
    if a != b {
        return Err(DistribError::DimensionMismatch(a, b));
    }
    Ok(())
}

/// Resource parameters of a two-level hierarchy.
///
/// `beta1`/`beta2` are the inverse temperatures of the selector and the
/// experts; `lambda1`/`lambda2` the EMA momenta of the expert priors and the
/// selector prior; `gamma` the discount used by the RL learner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceParams {
    pub beta1: f64,
    pub beta2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
}

impl Default for ResourceParams {
    fn default() -> Self {
        ResourceParams {
            beta1: 1.0,
            beta2: 1.0,
            lambda1: 0.99,
            lambda2: 0.99,
            gamma: 0.99,
        }
    }
}

impl ResourceParams {
    pub fn with_betas(beta1: f64, beta2: f64) -> Self {
        ResourceParams {
            beta1,
            beta2,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), DistribError> {
        let positive = [("beta1", self.beta1), ("beta2", self.beta2)];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(DistribError::InvalidParameter {
                    name,
                    value,
                    reason: "must be a positive finite number",
                });
            }
        }
        let unit = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("gamma", self.gamma),
        ];
        for (name, value) in unit {
            if !(0.0..=1.0).contains(&value) {
                return Err(DistribError::InvalidParameter {
                    name,
                    value,
                    reason: "must lie in [0, 1]",
                });
            }
        }
        Ok(())
    }
}

/// Shannon entropy with `0 ln 0 = 0`.
pub fn entropy(p: &Simplex) -> f64 {
    -p.0.iter()
        .filter(|&&pi| pi > 0.0)
        .map(|&pi| pi * pi.ln())
        .sum::<f64>()
}

/// `KL(p || q)`; fails when `p` puts mass where `q` has none.
pub fn kl(p: &Simplex, q: &Simplex) -> Result<f64, DistribError> {
    same_dim(p.dim(), q.dim())?;
    let mut total = 0.0;
    for (index, (&pi, &qi)) in p.0.iter().zip(&q.0).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(DistribError::AbsoluteContinuityViolation { index, p: pi });
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total.max(0.0))
}

/// KL against a learned prior: the prior is floored at [`PROB_FLOOR`] and
/// renormalized first, so underflowed EMA entries cannot make it infinite.
pub fn kl_to_prior(p: &Simplex, prior: &Simplex) -> Result<f64, DistribError> {
    kl(p, &prior.clamped(PROB_FLOOR))
}

/// `Σ_x w(x) KL(post_x || prior)`. Equals `I(X;M)` when `prior` is the
/// `w`-weighted mixture of the posteriors.
pub fn rate(posteriors: &[Simplex], weights: &Simplex, prior: &Simplex) -> Result<f64, DistribError> {
    same_dim(posteriors.len(), weights.dim())?;
    let mut total = 0.0;
    for (post, &w) in posteriors.iter().zip(&weights.0) {
        same_dim(post.dim(), prior.dim())?;
        if w > 0.0 {
            total += w * kl(post, prior)?;
        }
    }
    Ok(total)
}

/// Mutual information of a joint table `joint[x][y]` (entries summing to 1).
pub fn mutual_information(joint: &[Vec<f64>]) -> Result<f64, DistribError> {
    let Some(first) = joint.first() else {
        return Err(DistribError::Empty);
    };
    let cols = first.len();
    let mut row_marg = vec![0.0; joint.len()];
    let mut col_marg = vec![0.0; cols];
    for (i, row) in joint.iter().enumerate() {
        same_dim(row.len(), cols)?;
        for (j, &v) in row.iter().enumerate() {
            row_marg[i] += v;
            col_marg[j] += v;
        }
    }
    let mut mi = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > 0.0 {
                mi += v * (v / (row_marg[i] * col_marg[j])).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// `p*(i) ∝ prior(i) exp(beta score(i))`, evaluated in log space.
pub fn gibbs_posterior(prior: &Simplex, scores: &[f64], beta: f64) -> Result<Simplex, DistribError> {
    same_dim(prior.dim(), scores.len())?;
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(DistribError::InvalidParameter {
            name: "beta",
            value: beta,
            reason: "must be a non-negative finite number",
        });
    }
    if let Some((index, &value)) = scores.iter().enumerate().find(|(_, s)| !s.is_finite()) {
        return Err(DistribError::InvalidEntry { index, value });
    }
    if beta == 0.0 {
        return Ok(prior.clone());
    }
    let logits: Vec<f64> = prior
        .0
        .iter()
        .zip(scores)
        .map(|(&p, &s)| if p > 0.0 { p.ln() + beta * s } else { f64::NEG_INFINITY })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Simplex::renormalized(
        logits.iter().map(|&l| (l - max).exp()).collect(),
    ))
}

/// `lambda * prior + (1 - lambda) * posterior`.
pub fn ema_update(prior: &Simplex, posterior: &Simplex, lambda: f64) -> Result<Simplex, DistribError> {
    same_dim(prior.dim(), posterior.dim())?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(DistribError::InvalidParameter {
            name: "lambda",
            value: lambda,
            reason: "must lie in [0, 1]",
        });
    }
    Ok(Simplex::renormalized(
        prior
            .0
            .iter()
            .zip(&posterior.0)
            .map(|(&a, &b)| lambda * a + (1.0 - lambda) * b)
            .collect(),
    ))
}

/// Draws an index with probability `p_i`.
pub fn sample(p: &Simplex, rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &pi) in p.0.iter().enumerate() {
        if pi > 0.0 {
            acc += pi;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Row-wise softmax of logits.
pub fn softmax(logits: &[f64]) -> Simplex {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Simplex::renormalized(logits.iter().map(|&l| (l - max).exp()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn s(v: &[f64]) -> Simplex {
        Simplex::new(v.to_vec()).unwrap()
    }

    #[test]
    fn simplex_validation() {
        assert!(Simplex::new(vec![]).is_err());
        assert!(Simplex::new(vec![0.5, 0.6]).is_err());
        assert!(Simplex::new(vec![-0.1, 1.1]).is_err());
        assert!(Simplex::new(vec![f64::NAN, 1.0]).is_err());
        assert!(Simplex::new(vec![0.25, 0.75]).is_ok());
        let json = serde_json::to_string(&s(&[0.25, 0.75])).unwrap();
        assert_eq!(json, "[0.25,0.75]");
        assert!(serde_json::from_str::<Simplex>("[0.5,0.6]").is_err());
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&s(&[0.5, 0.5])) - 2f64.ln()).abs() < 1e-12);
        assert_eq!(entropy(&s(&[1.0, 0.0])), 0.0);
        assert!((entropy(&s(&[0.75, 0.25])) - 0.562335).abs() < 1e-6);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl(&s(&[0.3, 0.7]), &s(&[0.3, 0.7])).unwrap(), 0.0);
        assert!((kl(&s(&[0.75, 0.25]), &s(&[0.5, 0.5])).unwrap() - 0.130812).abs() < 1e-6);
        assert!(matches!(
            kl(&s(&[1.0, 0.0]), &s(&[0.0, 1.0])),
            Err(DistribError::AbsoluteContinuityViolation { index: 0, .. })
        ));
        assert!(matches!(
            kl(&s(&[1.0]), &s(&[0.5, 0.5])),
            Err(DistribError::DimensionMismatch(1, 2))
        ));
        // the floored variant never fails on support mismatch
        let v = kl_to_prior(&s(&[1.0, 0.0]), &s(&[0.0, 1.0])).unwrap();
        assert!(v.is_finite() && v > 20.0);
    }

    #[test]
    fn rate_examples() {
        let same = vec![s(&[0.3, 0.7]), s(&[0.3, 0.7])];
        assert_eq!(rate(&same, &s(&[0.5, 0.5]), &s(&[0.3, 0.7])).unwrap(), 0.0);
        let det = vec![s(&[1.0, 0.0]), s(&[0.0, 1.0])];
        let r = rate(&det, &s(&[0.5, 0.5]), &s(&[0.5, 0.5])).unwrap();
        assert!((r - 2f64.ln()).abs() < 1e-12);
        let noisy = vec![s(&[0.9, 0.1]), s(&[0.1, 0.9])];
        let r = rate(&noisy, &s(&[0.5, 0.5]), &s(&[0.5, 0.5])).unwrap();
        // hand expansion: 0.9 ln 1.8 + 0.1 ln 0.2
        let expected = 0.9 * 1.8f64.ln() + 0.1 * 0.2f64.ln();
        assert!((r - expected).abs() < 1e-12);
        assert!((r - 0.368064).abs() < 1e-6);
        assert!(rate(&noisy, &s(&[1.0]), &s(&[0.5, 0.5])).is_err());
        assert!(rate(&noisy, &s(&[0.5, 0.5]), &s(&[1.0])).is_err());
    }

    #[test]
    fn gibbs_examples() {
        let prior = s(&[0.2, 0.8]);
        assert_eq!(gibbs_posterior(&prior, &[3.0, -1.0], 0.0).unwrap(), prior);
        let p = gibbs_posterior(&s(&[0.5, 0.5]), &[1.0, 0.0], 1.0).unwrap();
        assert!((p.probs()[0] - 0.731059).abs() < 1e-6);
        assert!((p.probs()[1] - 0.268941).abs() < 1e-6);
        let p = gibbs_posterior(&s(&[0.5, 0.5]), &[1.0, 0.0], 1e6).unwrap();
        assert!((p.probs()[0] - 1.0).abs() < 1e-6 && p.probs()[1] < 1e-6);
        assert!(gibbs_posterior(&prior, &[1.0], 1.0).is_err());
        assert!(gibbs_posterior(&prior, &[1.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn ema_examples() {
        let a = s(&[1.0, 0.0]);
        let b = s(&[0.0, 1.0]);
        assert_eq!(ema_update(&a, &b, 1.0).unwrap(), a);
        assert_eq!(ema_update(&a, &b, 0.0).unwrap(), b);
        assert_eq!(ema_update(&a, &b, 0.5).unwrap(), s(&[0.5, 0.5]));
        assert!(ema_update(&a, &b, 1.5).is_err());
    }

    #[test]
    fn sample_examples() {
        let mut rng = seeded(3);
        for _ in 0..100 {
            assert_eq!(sample(&s(&[1.0, 0.0]), &mut rng), 0);
            assert_eq!(sample(&s(&[0.0, 1.0]), &mut rng), 1);
        }
        let mut rng = seeded(42);
        let n = 100_000;
        let zeros = (0..n).filter(|_| sample(&s(&[0.5, 0.5]), &mut rng) == 0).count();
        assert!((zeros as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn resource_params_validation() {
        assert!(ResourceParams::default().validate().is_ok());
        assert!(ResourceParams::with_betas(-1.0, 1.0).validate().is_err());
        let rp = ResourceParams { gamma: 1.5, ..Default::default() };
        assert!(rp.validate().is_err());
    }

    fn simplex_strategy(dim: usize) -> impl Strategy<Value = Simplex> {
        prop::collection::vec(0.0f64..1.0, dim).prop_filter_map("zero mass", |w| {
            let sum: f64 = w.iter().sum();
            (sum > 1e-6).then(|| Simplex::from_weights(w).unwrap())
        })
    }

    proptest! {
        #[test]
        fn kl_is_non_negative(p in simplex_strategy(5), q in simplex_strategy(5)) {
            prop_assert_eq!(kl(&p, &p).unwrap(), 0.0);
            let q = q.clamped(1e-9);
            prop_assert!(kl(&p, &q).unwrap() >= 0.0);
        }

        #[test]
        fn rate_matches_joint_mutual_information(
            posts in prop::collection::vec(simplex_strategy(4), 1..6),
            w_raw in prop::collection::vec(0.01f64..1.0, 6),
        ) {
            let weights = Simplex::from_weights(w_raw[..posts.len()].to_vec()).unwrap();
            let mut marginal = vec![0.0; 4];
            for (p, &w) in posts.iter().zip(weights.probs()) {
                for (m, &pi) in marginal.iter_mut().zip(p.probs()) {
                    *m += w * pi;
                }
            }
            let marginal = Simplex::renormalized(marginal);
            let r = rate(&posts, &weights, &marginal).unwrap();
            let joint: Vec<Vec<f64>> = posts
                .iter()
                .zip(weights.probs())
                .map(|(p, &w)| p.probs().iter().map(|&pi| w * pi).collect())
                .collect();
            let mi = mutual_information(&joint).unwrap();
            prop_assert!((r - mi).abs() < 1e-9, "rate {} vs mi {}", r, mi);
            prop_assert!(r <= 4f64.ln() + 1e-12);
        }

        #[test]
        fn gibbs_expected_score_monotone_in_beta(
            prior in simplex_strategy(4),
            scores in prop::collection::vec(-3.0f64..3.0, 4),
        ) {
            let mut last = f64::NEG_INFINITY;
            for k in 0..20 {
                let beta = 0.25 * k as f64;
                let p = gibbs_posterior(&prior, &scores, beta).unwrap();
                let e = p.expectation(&scores).unwrap();
                prop_assert!(e >= last - 1e-12);
                last = e;
            }
        }

        #[test]
        fn ema_output_is_simplex(a in simplex_strategy(3), b in simplex_strategy(3), l in 0.0f64..=1.0) {
            let out = ema_update(&a, &b, l).unwrap();
            prop_assert!(Simplex::new(out.into_vec()).is_ok());
        }
    }
}
