//! Exact solver for the discrete hierarchical free-energy problem.
//!
//! For a tabular world `p(x)`, utility `U(x, y)` and `M` experts the solver
//! maximizes
//!
//! ```text
//! E[U(x, y)] - I(X;M) / beta1 - I(X;Y|M) / beta2
//! ```
//!
//! by alternating exact block updates: every expert row becomes the Gibbs
//! posterior of its prior under `U`, the expert priors become exact
//! marginals, every selector row becomes the Gibbs posterior of `p(m)` under
//! the expert free energies, and finally both priors are re-marginalized. Each
//! block is an exact maximizer of the variational objective, so the recorded
//! objective never decreases.
//!
//! The learners are validated against this solver.

use rand_distr::{Distribution, Exp1, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distrib::{self, gibbs_posterior, kl_to_prior, DistribError, ResourceParams, Simplex};
use crate::rng::Rng;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Distrib(#[from] DistribError),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("index out of range: x = {x}, m = {m}")]
    IndexOutOfRange { x: usize, m: usize },
    #[error("invalid solver setting: {0}")]
    InvalidSetting(String),
    #[error("not converged after {sweeps} sweeps (last delta {last_delta:e})")]
    NotConverged {
        sweeps: usize,
        last_delta: f64,
        report: Box<SolveReport>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularProblem {
    pub px: Simplex,
    /// Row-major `|X| x |Y|`.
    pub utility: Vec<Vec<f64>>,
    pub num_experts: usize,
}

impl TabularProblem {
    pub fn new(px: Simplex, utility: Vec<Vec<f64>>, num_experts: usize) -> Result<Self, OracleError> {
        let p = TabularProblem { px, utility, num_experts };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        check_len("utility rows", self.px.dim(), self.utility.len())?;
        let ny = self.utility[0].len();
        if ny == 0 {
            return Err(OracleError::InvalidSetting("utility has no actions".into()));
        }
        for row in &self.utility {
            check_len("utility columns", ny, row.len())?;
            if row.iter().any(|u| !u.is_finite()) {
                return Err(OracleError::InvalidSetting("utility must be finite".into()));
            }
        }
        if self.num_experts == 0 {
            return Err(OracleError::InvalidSetting("num_experts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.px.dim()
    }

    pub fn num_actions(&self) -> usize {
        self.utility[0].len()
    }

    /// Random problem: `p(x)` from a flat Dirichlet, utilities uniform in [0, 1).
    pub fn random(states: usize, actions: usize, experts: usize, rng: &mut Rng) -> Self {
        let px = dirichlet_flat(states, rng);
        let unit = Uniform::new(0.0, 1.0).expect("valid range");
        let utility = (0..states)
            .map(|_| (0..actions).map(|_| unit.sample(rng)).collect())
            .collect();
        TabularProblem { px, utility, num_experts: experts }
    }

    /// `E_x[max_y U(x, y)]`, the unconstrained optimum.
    pub fn rational_value(&self) -> f64 {
        self.px
            .probs()
            .iter()
            .zip(&self.utility)
            .map(|(p, row)| p * row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .sum()
    }
}

/// Tabular policies and priors of a two-level hierarchy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierSolution {
    /// `p(m|x)`, one row per state.
    pub sel: Vec<Simplex>,
    /// `p(y|x,m)`, indexed `[x][m]`.
    pub act: Vec<Vec<Simplex>>,
    pub prior_m: Simplex,
    /// `p(y|m)`, one row per expert.
    pub prior_y: Vec<Simplex>,
    pub objective: f64,
}

impl HierSolution {
    /// Builds a solution from policy tables, setting the priors to the exact
    /// marginals and evaluating the objective.
    pub fn from_policies(
        prob: &TabularProblem,
        sel: Vec<Simplex>,
        act: Vec<Vec<Simplex>>,
        rp: &ResourceParams,
    ) -> Result<Self, OracleError> {
        let prior_m = selector_marginal(&prob.px, &sel);
        let fallback = vec![Simplex::uniform(prob.num_actions()); prob.num_experts];
        let prior_y = action_marginals(&prob.px, &sel, &act, &fallback);
        let mut sol = HierSolution { sel, act, prior_m, prior_y, objective: 0.0 };
        sol.objective = objective_value(prob, &sol, rp)?;
        Ok(sol)
    }

    fn check_shape(&self, prob: &TabularProblem) -> Result<(), OracleError> {
        let (nx, ny, nm) = (prob.num_states(), prob.num_actions(), prob.num_experts);
        check_len("sel rows", nx, self.sel.len())?;
        check_len("act rows", nx, self.act.len())?;
        check_len("prior_m", nm, self.prior_m.dim())?;
        check_len("prior_y rows", nm, self.prior_y.len())?;
        for row in &self.sel {
            check_len("sel columns", nm, row.dim())?;
        }
        for row in &self.act {
            check_len("act experts", nm, row.len())?;
            for a in row {
                check_len("act columns", ny, a.dim())?;
            }
        }
        for p in &self.prior_y {
            check_len("prior_y columns", ny, p.dim())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solution: HierSolution,
    pub sweeps: usize,
    /// Objective after each sweep.
    pub objective_trace: Vec<f64>,
    pub last_delta: f64,
    pub converged: bool,
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), OracleError> {
    if expected != got {
        return Err(OracleError::Shape { what, expected, got });
    }
    Ok(())
}

fn dirichlet_flat(dim: usize, rng: &mut Rng) -> Simplex {
    let w: Vec<f64> = (0..dim).map(|_| Exp1.sample(rng)).collect::<Vec<f64>>();
    Simplex::renormalized(w)
}

fn selector_marginal(px: &Simplex, sel: &[Simplex]) -> Simplex {
    let mut pm = vec![0.0; sel[0].dim()];
    for (&p, row) in px.probs().iter().zip(sel) {
        for (acc, &q) in pm.iter_mut().zip(row.probs()) {
            *acc += p * q;
        }
    }
    Simplex::renormalized(pm)
}

/// `p(y|m) = Σ_x p(x|m) p(y|x,m)`; experts with no mass keep `fallback`.
fn action_marginals(px: &Simplex, sel: &[Simplex], act: &[Vec<Simplex>], fallback: &[Simplex]) -> Vec<Simplex> {
    fallback
        .iter()
        .enumerate()
        .map(|(m, fb)| {
            let mut acc = vec![0.0; fb.dim()];
            let mut mass = 0.0;
            for (x, &p) in px.probs().iter().enumerate() {
                let w = p * sel[x].probs()[m];
                if w > 0.0 {
                    mass += w;
                    for (a, &q) in acc.iter_mut().zip(act[x][m].probs()) {
                        *a += w * q;
                    }
                }
            }
            if mass > 0.0 && acc.iter().any(|&a| a > 0.0) {
                Simplex::renormalized(acc)
            } else {
                fb.clone()
            }
        })
        .collect()
}

/// `E[U] - I(X;M)/beta1 - I(X;Y|M)/beta2`, with the information terms
/// computed from the joint induced by `px`, `sel` and `act` (the stored priors
/// are not used).
pub fn objective_value(prob: &TabularProblem, sol: &HierSolution, rp: &ResourceParams) -> Result<f64, OracleError> {
    sol.check_shape(prob)?;
    let (utility, i_xm, i_xy_m) = decompose(prob, sol)?;
    Ok(utility - i_xm / rp.beta1 - i_xy_m / rp.beta2)
}

/// `(E[U], I(X;M), I(X;Y|M))` of the joint induced by a solution's tables.
pub fn decompose(prob: &TabularProblem, sol: &HierSolution) -> Result<(f64, f64, f64), OracleError> {
    sol.check_shape(prob)?;
    let px = &prob.px;
    let mut utility = 0.0;
    for (x, &p) in px.probs().iter().enumerate() {
        for (m, &s) in sol.sel[x].probs().iter().enumerate() {
            utility += p * s * sol.act[x][m].expectation(&prob.utility[x])?;
        }
    }
    let pm = selector_marginal(px, &sol.sel);
    let i_xm = distrib::rate(&sol.sel, px, &pm)?;
    let marg = action_marginals(px, &sol.sel, &sol.act, &sol.prior_y);
    let mut i_xy_m = 0.0;
    for (m, &pmass) in pm.probs().iter().enumerate() {
        if pmass <= 0.0 {
            continue;
        }
        for (x, &p) in px.probs().iter().enumerate() {
            let w = p * sol.sel[x].probs()[m];
            if w > 0.0 {
                i_xy_m += w * distrib::kl(&sol.act[x][m], &marg[m])?;
            }
        }
    }
    Ok((utility, i_xm, i_xy_m))
}

/// `F(x, m) = E_{p(y|x,m)}[U(x, y)] - KL(p(y|x,m) || p(y|m)) / beta2`.
pub fn free_energy(
    prob: &TabularProblem,
    sol: &HierSolution,
    rp: &ResourceParams,
    x: usize,
    m: usize,
) -> Result<f64, OracleError> {
    if x >= prob.num_states() || m >= prob.num_experts {
        return Err(OracleError::IndexOutOfRange { x, m });
    }
    sol.check_shape(prob)?;
    expert_free_energy(&sol.act[x][m], &sol.prior_y[m], &prob.utility[x], rp.beta2)
}

fn expert_free_energy(act: &Simplex, prior: &Simplex, utility: &[f64], beta2: f64) -> Result<f64, OracleError> {
    Ok(act.expectation(utility)? - kl_to_prior(act, prior)? / beta2)
}

fn max_abs_change(a: &Simplex, b: &Simplex) -> f64 {
    a.probs()
        .iter()
        .zip(b.probs())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// One alternating sweep in place; returns the largest change of any table
/// entry (policies and priors).
fn sweep(prob: &TabularProblem, sol: &mut HierSolution, rp: &ResourceParams) -> Result<f64, OracleError> {
    let (nx, nm) = (prob.num_states(), prob.num_experts);
    let mut delta: f64 = 0.0;

    for x in 0..nx {
        for m in 0..nm {
            let next = gibbs_posterior(&sol.prior_y[m], &prob.utility[x], rp.beta2)?;
            delta = delta.max(max_abs_change(&next, &sol.act[x][m]));
            sol.act[x][m] = next;
        }
    }
    let prior_y = action_marginals(&prob.px, &sol.sel, &sol.act, &sol.prior_y);

    for x in 0..nx {
        let scores = (0..nm)
            .map(|m| expert_free_energy(&sol.act[x][m], &prior_y[m], &prob.utility[x], rp.beta2))
            .collect::<Result<Vec<_>, _>>()?;
        let next = gibbs_posterior(&sol.prior_m, &scores, rp.beta1)?;
        delta = delta.max(max_abs_change(&next, &sol.sel[x]));
        sol.sel[x] = next;
    }
    let prior_m = selector_marginal(&prob.px, &sol.sel);
    delta = delta.max(max_abs_change(&prior_m, &sol.prior_m));
    sol.prior_m = prior_m;

    let prior_y = action_marginals(&prob.px, &sol.sel, &sol.act, &prior_y);
    for (new, old) in prior_y.iter().zip(&sol.prior_y) {
        delta = delta.max(max_abs_change(new, old));
    }
    sol.prior_y = prior_y;
    sol.objective = objective_value(prob, sol, rp)?;
    Ok(delta)
}

/// Largest entry change produced by replaying one sweep from `sol`.
pub fn fixed_point_residual(prob: &TabularProblem, sol: &HierSolution, rp: &ResourceParams) -> Result<f64, OracleError> {
    let mut replay = sol.clone();
    sweep(prob, &mut replay, rp)
}

/// Random initial tables: flat-Dirichlet rows, priors set to the induced
/// marginals.
pub fn random_init(prob: &TabularProblem, rp: &ResourceParams, rng: &mut Rng) -> Result<HierSolution, OracleError> {
    let (nx, ny, nm) = (prob.num_states(), prob.num_actions(), prob.num_experts);
    let sel = (0..nx).map(|_| dirichlet_flat(nm, rng)).collect();
    let act = (0..nx)
        .map(|_| (0..nm).map(|_| dirichlet_flat(ny, rng)).collect())
        .collect();
    HierSolution::from_policies(prob, sel, act, rp)
}

/// Alternates the coupled Gibbs updates until no table entry moves by more
/// than `tol` in a sweep.
pub fn solve(
    prob: &TabularProblem,
    rp: &ResourceParams,
    tol: f64,
    max_sweeps: usize,
    rng: &mut Rng,
) -> Result<SolveReport, OracleError> {
    prob.validate()?;
    rp.validate()?;
    if !(tol > 0.0) {
        return Err(OracleError::InvalidSetting(format!("tol must be positive, got {tol}")));
    }
    if max_sweeps == 0 {
        return Err(OracleError::InvalidSetting("max_sweeps must be at least 1".into()));
    }
    let mut sol = random_init(prob, rp, rng)?;
    let mut trace = Vec::new();
    let mut last_delta = f64::INFINITY;
    for sweeps in 1..=max_sweeps {
        last_delta = sweep(prob, &mut sol, rp)?;
        trace.push(sol.objective);
        if last_delta < tol {
            return Ok(SolveReport {
                solution: sol,
                sweeps,
                objective_trace: trace,
                last_delta,
                converged: true,
            });
        }
    }
    Err(OracleError::NotConverged {
        sweeps: max_sweeps,
        last_delta,
        report: Box::new(SolveReport {
            solution: sol,
            sweeps: max_sweeps,
            objective_trace: trace,
            last_delta,
            converged: false,
        }),
    })
}

/// Like [`solve`] but hands back the flagged report instead of an error when
/// the sweep budget runs out.
pub fn solve_flagged(
    prob: &TabularProblem,
    rp: &ResourceParams,
    tol: f64,
    max_sweeps: usize,
    rng: &mut Rng,
) -> Result<SolveReport, OracleError> {
    match solve(prob, rp, tol, max_sweeps, rng) {
        Err(OracleError::NotConverged { report, .. }) => Ok(*report),
        other => other,
    }
}
