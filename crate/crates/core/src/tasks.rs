//! Dataset and environment generators.

use std::f64::consts::PI;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{seeded, Rng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("unknown dataset `{0}` (expected moons, circles or blobs)")]
    UnknownDataset(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite environment state")]
    NonFiniteState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub name: String,
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            name: self.name.clone(),
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Random split into (train, test) with `test_fraction` of each class
    /// held out.
    pub fn split(&self, test_fraction: f64, rng: &mut Rng) -> (LabeledDataset, LabeledDataset) {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for c in 0..self.num_classes {
            let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == c).collect();
            idx.shuffle(rng);
            let n_test = ((idx.len() as f64) * test_fraction).round() as usize;
            let n_test = n_test.min(idx.len());
            test.extend_from_slice(&idx[..n_test]);
            train.extend_from_slice(&idx[n_test..]);
        }
        train.shuffle(rng);
        test.shuffle(rng);
        (self.subset(&train), self.subset(&test))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.input_dim()).map(|i| format!("x{i}")).collect();
        writeln!(w, "{},label", header.join(","))?;
        for (x, y) in self.inputs.iter().zip(&self.labels) {
            writeln!(w, "{},{}", join(x), y)?;
        }
        Ok(())
    }
}

pub(crate) fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Two-dimensional synthetic classification sets, standardized per
/// coordinate and shuffled.
pub fn make_classification(name: &str, n: usize, noise: f64, seed: u64) -> Result<LabeledDataset, TaskError> {
    if n < 2 {
        return Err(TaskError::InvalidArgument("n must be at least 2".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(TaskError::InvalidArgument("noise must be finite and non-negative".into()));
    }
    let mut rng = seeded(seed);
    let (mut inputs, labels, num_classes) = match name {
        "moons" => {
            let mut pts = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            let per = [(n + 1) / 2, n / 2];
            let mut seen = [0usize; 2];
            for i in 0..n {
                let c = i % 2;
                let t = PI * seen[c] as f64 / (per[c].max(2) - 1) as f64;
                seen[c] += 1;
                let p = if c == 0 {
                    vec![t.cos(), t.sin()]
                } else {
                    vec![1.0 - t.cos(), 0.5 - t.sin()]
                };
                pts.push(p);
                labels.push(c);
            }
            (pts, labels, 2)
        }
        "circles" => {
            let mut pts = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            let per = [(n + 1) / 2, n / 2];
            let mut seen = [0usize; 2];
            for i in 0..n {
                let c = i % 2;
                let t = 2.0 * PI * seen[c] as f64 / per[c] as f64;
                seen[c] += 1;
                let r = if c == 0 { 1.0 } else { 0.5 };
                pts.push(vec![r * t.cos(), r * t.sin()]);
                labels.push(c);
            }
            (pts, labels, 2)
        }
        "blobs" => {
            let centers = [[0.0, 3.0], [-2.6, -1.5], [2.6, -1.5]];
            let mut pts = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let c = i % 3;
                pts.push(centers[c].to_vec());
                labels.push(c);
            }
            (pts, labels, 3)
        }
        other => return Err(TaskError::UnknownDataset(other.to_string())),
    };
    for p in &mut inputs {
        for v in p.iter_mut() {
            *v += noise * normal(&mut rng);
        }
    }
    standardize(&mut inputs);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    Ok(LabeledDataset {
        name: name.to_string(),
        inputs: order.iter().map(|&i| inputs[i].clone()).collect(),
        labels: order.iter().map(|&i| labels[i]).collect(),
        num_classes,
    })
}

/// Zero mean, unit variance per coordinate (constant coordinates are only
/// centred).
pub fn standardize(points: &mut [Vec<f64>]) {
    let Some(d) = points.first().map(Vec::len) else { return };
    let n = points.len() as f64;
    for j in 0..d {
        let mean = points.iter().map(|p| p[j]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 1e-24 { var.sqrt() } else { 1.0 };
        for p in points.iter_mut() {
            p[j] = (p[j] - mean) / sd;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureSample {
    pub points: Vec<Vec<f64>>,
    /// Generating component of each point.
    pub components: Vec<usize>,
}

/// Equal-weight isotropic Gaussian mixture with covariance `cov_scale * I`.
pub fn sample_mixture(means: &[Vec<f64>], cov_scale: f64, n: usize, rng: &mut Rng) -> Result<MixtureSample, TaskError> {
    if means.is_empty() {
        return Err(TaskError::InvalidArgument("empty means list".into()));
    }
    let d = means[0].len();
    if d == 0 || means.iter().any(|m| m.len() != d) {
        return Err(TaskError::InvalidArgument("means must share a positive dimension".into()));
    }
    if n < 1 || !(cov_scale > 0.0 && cov_scale.is_finite()) {
        return Err(TaskError::InvalidArgument("need n >= 1 and cov_scale > 0".into()));
    }
    let sd = cov_scale.sqrt();
    let mut points = Vec::with_capacity(n);
    let mut components = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.random_range(0..means.len());
        points.push(means[c].iter().map(|&m| m + sd * normal(rng)).collect());
        components.push(c);
    }
    Ok(MixtureSample { points, components })
}

/// The four corners `(±1, ±1)`.
pub fn corner_means() -> Vec<Vec<f64>> {
    vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]]
}

pub const AMPLITUDE_RANGE: (f64, f64) = (0.1, 5.0);
pub const PHASE_RANGE: (f64, f64) = (0.0, 2.0 * PI);
pub const DEFAULT_X_RANGE: (f64, f64) = (-5.0, 5.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineTask {
    pub a: f64,
    pub b: f64,
}

impl SineTask {
    pub fn eval(&self, x: f64) -> f64 {
        self.a * (x + self.b).sin()
    }
}

/// A K-shot regression task: train and validation pairs drawn independently.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    pub train: Vec<(f64, f64)>,
    pub val: Vec<(f64, f64)>,
    pub task: SineTask,
}

pub fn sample_sine_task(rng: &mut Rng) -> SineTask {
    sample_sine_task_in(rng, AMPLITUDE_RANGE)
}

pub fn sample_sine_task_in(rng: &mut Rng, amplitude: (f64, f64)) -> SineTask {
    SineTask {
        a: rng.random_range(amplitude.0..=amplitude.1),
        b: rng.random_range(PHASE_RANGE.0..=PHASE_RANGE.1),
    }
}

pub fn sine_dataset(task: SineTask, k: usize, x_range: (f64, f64), rng: &mut Rng) -> Result<TaskDataset, TaskError> {
    if k < 1 {
        return Err(TaskError::InvalidArgument("K must be at least 1".into()));
    }
    if !(x_range.0 < x_range.1) {
        return Err(TaskError::InvalidArgument("empty x range".into()));
    }
    let draw = |rng: &mut Rng| -> Vec<(f64, f64)> {
        (0..k)
            .map(|_| {
                let x = rng.random_range(x_range.0..x_range.1);
                (x, task.eval(x))
            })
            .collect()
    };
    let train = draw(rng);
    let val = draw(rng);
    Ok(TaskDataset { train, val, task })
}

/// Result of one environment transition.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep {
    pub state: Vec<f64>,
    pub reward: f64,
    /// Reached a terminal state (no bootstrap).
    pub terminated: bool,
    /// Hit the step limit (bootstrap from the critic).
    pub truncated: bool,
}

impl EnvStep {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

pub trait Env {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<EnvStep, TaskError>;
}

pub const GRAVITY: f64 = 9.8;
pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
pub const HALF_LENGTH: f64 = 0.5;
pub const FORCE_MAG: f64 = 10.0;
pub const TAU: f64 = 0.02;
pub const ANGLE_LIMIT: f64 = 12.0 * PI / 180.0;
pub const POSITION_LIMIT: f64 = 2.4;
pub const MAX_EPISODE_STEPS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartPoleState {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.x, self.x_dot, self.theta, self.theta_dot]
    }

    fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}

pub fn cartpole_reset(rng: &mut Rng) -> CartPoleState {
    let mut u = || rng.random_range(-0.05..=0.05);
    CartPoleState {
        x: u(),
        x_dot: u(),
        theta: u(),
        theta_dot: u(),
    }
}

/// One Euler step of the classic cart-pole. `signal` is clipped to
/// `[-1, 1]` and scaled to a force of at most 10 N. `done` covers the
/// angle and position limits; the episode step limit lives in [`CartPole`].
pub fn cartpole_step(s: CartPoleState, signal: f64) -> Result<(CartPoleState, f64, bool), TaskError> {
    if !s.is_finite() || !signal.is_finite() {
        return Err(TaskError::NonFiniteState);
    }
    let force = FORCE_MAG * signal.clamp(-1.0, 1.0);
    let total = CART_MASS + POLE_MASS;
    let pml = POLE_MASS * HALF_LENGTH;
    let (sin, cos) = s.theta.sin_cos();
    let temp = (force + pml * s.theta_dot * s.theta_dot * sin) / total;
    let theta_acc = (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total));
    let x_acc = temp - pml * theta_acc * cos / total;
    let mut theta = s.theta + TAU * s.theta_dot;
    if theta > PI {
        theta -= 2.0 * PI;
    } else if theta < -PI {
        theta += 2.0 * PI;
    }
    let next = CartPoleState {
        x: s.x + TAU * s.x_dot,
        x_dot: s.x_dot + TAU * x_acc,
        theta,
        theta_dot: s.theta_dot + TAU * theta_acc,
    };
    if !next.is_finite() {
        return Err(TaskError::NonFiniteState);
    }
    let done = next.theta.abs() > ANGLE_LIMIT || next.x.abs() > POSITION_LIMIT;
    Ok((next, 1.0, done))
}

#[derive(Clone, Debug)]
pub struct CartPole {
    pub state: CartPoleState,
    pub steps: usize,
    pub max_steps: usize,
}

impl Default for CartPole {
    fn default() -> Self {
        CartPole {
            state: CartPoleState { x: 0.0, x_dot: 0.0, theta: 0.0, theta_dot: 0.0 },
            steps: 0,
            max_steps: MAX_EPISODE_STEPS,
        }
    }
}

impl Env for CartPole {
    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.state = cartpole_reset(rng);
        self.steps = 0;
        self.state.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, TaskError> {
        let signal = *action.first().ok_or_else(|| TaskError::InvalidArgument("empty action".into()))?;
        let (next, reward, terminated) = cartpole_step(self.state, signal)?;
        self.state = next;
        self.steps += 1;
        Ok(EnvStep {
            state: next.to_vec(),
            reward,
            terminated,
            truncated: !terminated && self.steps >= self.max_steps,
        })
    }
}

/// One row of an environment trace export.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub fn write_trace_csv<W: Write>(mut w: W, rows: &[TraceRow]) -> io::Result<()> {
    let ds = rows.first().map_or(0, |r| r.state.len());
    let da = rows.first().map_or(0, |r| r.action.len());
    let mut header = vec!["t".to_string()];
    header.extend((0..ds).map(|i| format!("s{i}")));
    header.extend((0..da).map(|i| format!("a{i}")));
    header.extend(["reward".to_string(), "done".to_string()]);
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.t, join(&r.state), join(&r.action), r.reward, r.done as u8)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn circles_radii_separate() {
        let d = make_classification("circles", 1000, 0.0, 1).unwrap();
        let r = |p: &Vec<f64>| (p[0] * p[0] + p[1] * p[1]).sqrt();
        let inner_max = d.inputs.iter().zip(&d.labels).filter(|(_, &l)| l == 1).map(|(p, _)| r(p)).fold(0.0, f64::max);
        let outer_min = d.inputs.iter().zip(&d.labels).filter(|(_, &l)| l == 0).map(|(p, _)| r(p)).fold(f64::INFINITY, f64::min);
        assert!(inner_max < outer_min);
    }

    #[test]
    fn classification_is_deterministic_and_standardized() {
        for name in ["moons", "circles", "blobs"] {
            let a = make_classification(name, 300, 0.1, 9).unwrap();
            let b = make_classification(name, 300, 0.1, 9).unwrap();
            assert_eq!(a, b);
            for j in 0..2 {
                let mean = a.inputs.iter().map(|p| p[j]).sum::<f64>() / 300.0;
                let var = a.inputs.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / 300.0;
                assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
            }
        }
        assert!(matches!(make_classification("spirals", 10, 0.0, 0), Err(TaskError::UnknownDataset(_))));
        assert!(make_classification("moons", 1, 0.0, 0).is_err());
    }

    #[test]
    fn split_holds_out_each_class_in_proportion() {
        let d = make_classification("circles", 1024, 0.1, 4).unwrap();
        let (train, test) = d.split(0.2, &mut crate::rng::seeded(8));
        assert_eq!(train.len() + test.len(), 1024);
        for c in 0..2 {
            let total = d.labels.iter().filter(|&&l| l == c).count() as f64;
            let held = test.labels.iter().filter(|&&l| l == c).count() as f64;
            assert_eq!(held, (total * 0.2).round());
        }
        let mut all: Vec<Vec<u64>> = train.inputs.iter().chain(&test.inputs).map(|p| p.iter().map(|v| v.to_bits()).collect()).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 1024);
    }

    #[test]
    fn moons_class_balance() {
        let d = make_classification("moons", 10_000, 0.1, 3).unwrap();
        let ones = d.labels.iter().filter(|&&l| l == 1).count() as f64 / 1e4;
        assert!((ones - 0.5).abs() < 0.01);
    }

    #[test]
    fn mixture_examples() {
        let means = corner_means();
        let s = sample_mixture(&means, 0.15, 4000, &mut seeded(0)).unwrap();
        for (c, m) in means.iter().enumerate() {
            let pts: Vec<&Vec<f64>> = s.points.iter().zip(&s.components).filter(|(_, &k)| k == c).map(|(p, _)| p).collect();
            let n = pts.len() as f64;
            let emp: Vec<f64> = (0..2).map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / n).collect();
            let dist = ((emp[0] - m[0]).powi(2) + (emp[1] - m[1]).powi(2)).sqrt();
            assert!(dist < 0.05, "component {c}: {dist}");
        }
        let one = sample_mixture(&means, 0.15, 1, &mut seeded(4)).unwrap();
        assert_eq!(one.points.len(), 1);
        assert_eq!(one.points[0].len(), 2);
        let tight = sample_mixture(&means, 1e-12, 100, &mut seeded(5)).unwrap();
        for (p, &c) in tight.points.iter().zip(&tight.components) {
            assert!(p.iter().zip(&means[c]).all(|(a, b)| (a - b).abs() < 1e-5));
        }
        assert!(sample_mixture(&[], 0.15, 10, &mut seeded(0)).is_err());
    }

    #[test]
    fn sine_examples() {
        assert!((SineTask { a: 1.0, b: 0.0 }.eval(PI / 2.0) - 1.0).abs() < 1e-15);
        assert!(SineTask { a: 2.0, b: PI }.eval(0.0).abs() < 1e-15);
        let mut rng = seeded(5);
        let mean = (0..10_000).map(|_| sample_sine_task(&mut rng).a).sum::<f64>() / 1e4;
        assert!((mean - 2.55).abs() < 0.02 * 2.55);
        let task = sample_sine_task(&mut rng);
        let d = sine_dataset(task, 10, DEFAULT_X_RANGE, &mut rng).unwrap();
        assert_eq!((d.train.len(), d.val.len()), (10, 10));
        assert!(d.train.iter().chain(&d.val).all(|&(x, y)| (-5.0..5.0).contains(&x) && y == task.eval(x)));
        assert!(sine_dataset(task, 0, DEFAULT_X_RANGE, &mut rng).is_err());
        assert!(sine_dataset(task, 3, (1.0, 1.0), &mut rng).is_err());
    }

    #[test]
    fn cartpole_examples() {
        let zero = CartPoleState { x: 0.0, x_dot: 0.0, theta: 0.0, theta_dot: 0.0 };
        let (s, r, done) = cartpole_step(zero, 0.0).unwrap();
        assert_eq!((s.theta, r, done), (0.0, 1.0, false));

        // hand integration: temp = 10/1.1, theta_acc = -temp / (0.5 (4/3 - 0.1/1.1)),
        // x_acc = temp - 0.05 theta_acc / 1.1
        let temp = 10.0 / 1.1;
        let theta_acc = -temp / (0.5 * (4.0 / 3.0 - 0.1 / 1.1));
        let x_acc = temp - 0.05 * theta_acc / 1.1;
        let (s, _, _) = cartpole_step(zero, 1.0).unwrap();
        assert!((s.x_dot - 0.02 * x_acc).abs() < 1e-12 && s.x_dot > 0.0);
        assert!((s.theta_dot - 0.02 * theta_acc).abs() < 1e-12 && s.theta_dot < 0.0);
        assert!((s.x_dot - 0.195122).abs() < 1e-6);

        let tilted = CartPoleState { theta: 13f64.to_radians(), ..zero };
        assert!(cartpole_step(tilted, 0.0).unwrap().2);
        let bad = CartPoleState { x: f64::NAN, ..zero };
        assert_eq!(cartpole_step(bad, 0.0), Err(TaskError::NonFiniteState));
    }

    #[test]
    fn cartpole_env_truncates() {
        let mut env = CartPole { max_steps: 3, ..CartPole::default() };
        env.state = CartPoleState { x: 0.0, x_dot: 0.0, theta: 0.0, theta_dot: 0.0 };
        let steps: Vec<EnvStep> = (0..3).map(|_| env.step(&[0.0]).unwrap()).collect();
        assert!(!steps[1].done());
        assert!(steps[2].truncated && !steps[2].terminated);
        let s = env.reset(&mut seeded(2));
        assert!(s.iter().all(|v| v.abs() <= 0.05));
    }

    #[test]
    fn cartpole_stays_finite_under_random_forcing() {
        let mut rng = seeded(8);
        let mut s = cartpole_reset(&mut rng);
        for _ in 0..1_000_000 {
            s = cartpole_step(s, rng.random_range(-1.0..=1.0)).unwrap().0;
        }
        assert!(s.is_finite() && s.theta.abs() <= PI);
    }

    #[test]
    fn csv_exports() {
        let d = make_classification("blobs", 4, 0.0, 0).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1,x2,label\n"));
        assert_eq!(text.lines().count(), 5);

        let rows = vec![TraceRow { t: 0, state: vec![0.0; 4], action: vec![0.5], reward: 1.0, done: false }];
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,s0,s1,s2,s3,a0,reward,done\n0,0,0,0,0,0.5,1,0\n");
    }

    proptest! {
        #[test]
        fn generators_are_pure(seed in any::<u64>(), n in 2usize..60) {
            let a = make_classification("moons", n, 0.2, seed).unwrap();
            prop_assert_eq!(&a, &make_classification("moons", n, 0.2, seed).unwrap());
            let m1 = sample_mixture(&corner_means(), 0.15, n, &mut seeded(seed)).unwrap();
            let m2 = sample_mixture(&corner_means(), 0.15, n, &mut seeded(seed)).unwrap();
            prop_assert_eq!(m1, m2);
        }
    }
}
