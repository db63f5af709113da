//! Information-constrained hierarchical expert systems.
//!
//! A selector policy `p(m|x)` routes each input (or whole task) to one of
//! `M` experts `p(y|x,m)`. Both levels trade expected utility against the
//! KL divergence to their priors, with inverse temperatures `beta1`
//! (selector) and `beta2` (experts). The crate contains
//!
//! - [`distrib`]: categorical distributions and information measures,
//! - [`oracle`]: an exact alternating solver for the tabular problem,
//! - [`approx`]: small neural networks with analytic gradients and Adam,
//! - [`tasks`]: dataset and environment generators,
//! - [`supervised`], [`density`], [`rl`], [`meta`]: the online learners.

pub mod approx;
pub mod density;
pub mod distrib;
pub mod meta;
pub mod oracle;
pub mod rl;
pub mod rng;
pub mod supervised;
pub mod tasks;
