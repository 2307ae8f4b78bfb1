//! Expected improvement and the sequential model-based optimization loop.

use rand::Rng;
use statrs::function::erf::erfc;

use crate::error::SmboError;
use crate::gp::{FitConfig, KrigingModel};
use crate::kernels::KernelKind;
use crate::optim::{de_minimize, BoxProblem, DeConfig};
use crate::space::{Point, SearchSpace};

/// Proposals closer than this (per coordinate) to an evaluated point count
/// as duplicates.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;
/// Half-width of the uniform perturbation applied to duplicate proposals.
pub const DUPLICATE_PERTURBATION: f64 = 1e-3;

fn normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / std::f64::consts::SQRT_2)
}

fn normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement `E[max(y_min - Y, 0)]` for `Y ~ N(mean, sd²)`.
pub fn expected_improvement(mean: f64, sd: f64, y_min: f64) -> f64 {
    let diff = y_min - mean;
    if !(sd > 0.0) {
        return diff.max(0.0);
    }
    let u = diff / sd;
    (diff * normal_cdf(u) + sd * normal_pdf(u)).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmboConfig {
    pub init_size: usize,
    pub total_budget: usize,
    pub kernel: KernelKind,
    pub fit: FitConfig,
    /// Expected-improvement evaluations spent by DE per iteration.
    pub infill_budget: usize,
    pub de: DeConfig,
}

impl Default for SmboConfig {
    fn default() -> Self {
        Self {
            init_size: 3,
            total_budget: 10,
            kernel: KernelKind::Stan,
            fit: FitConfig::default(),
            infill_budget: 10_000,
            de: DeConfig::default(),
        }
    }
}

impl SmboConfig {
    pub fn with_kernel(kernel: KernelKind) -> Self {
        Self {
            kernel,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub point: Point,
    pub value: f64,
    /// 0 for the initial design, then one per model-based proposal.
    pub iteration: usize,
    pub initial: bool,
    /// The model could not be fitted and a random point was used instead.
    pub fallback: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SmboHistory {
    pub evaluations: Vec<Evaluation>,
    /// Best value after each evaluation.
    pub best_so_far: Vec<f64>,
}

impl SmboHistory {
    fn push(&mut self, e: Evaluation) {
        let best = self.best_so_far.last().map_or(e.value, |b| b.min(e.value));
        self.best_so_far.push(best);
        self.evaluations.push(e);
    }

    pub fn len(&self) -> usize {
        self.evaluations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.evaluations.is_empty()
    }

    pub fn best(&self) -> Option<&Evaluation> {
        self.evaluations
            .iter()
            .min_by(|a, b| a.value.total_cmp(&b.value))
    }

    pub fn best_value(&self) -> f64 {
        self.best_so_far.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Proposes the next point by maximizing expected improvement over the box.
pub fn propose<R: Rng + ?Sized>(
    model: &KrigingModel,
    y_min: f64,
    budget: usize,
    de: &DeConfig,
    rng: &mut R,
) -> Result<Point, SmboError> {
    let space = model.space();
    let (lower, upper) = space.box_bounds();
    let objective = |v: &[f64]| {
        let x = space.decode(v);
        let (mean, var) = model.predict(&x);
        -expected_improvement(mean, var.sqrt(), y_min)
    };
    let mut problem = BoxProblem::new(objective, lower, upper, budget)?;
    let best = de_minimize(&mut problem, de, rng)?;
    Ok(space.decode(&best.x))
}

fn is_duplicate(x: &Point, seen: &[Evaluation]) -> bool {
    seen.iter().any(|e| {
        e.point
            .values()
            .iter()
            .zip(x.values())
            .all(|(a, b)| (a - b).abs() <= DUPLICATE_TOLERANCE)
    })
}

fn perturb<R: Rng + ?Sized>(space: &SearchSpace, x: &Point, rng: &mut R) -> Point {
    let moved: Vec<f64> = x
        .values()
        .iter()
        .map(|v| v + rng.gen_range(-DUPLICATE_PERTURBATION..=DUPLICATE_PERTURBATION))
        .collect();
    space.decode(&moved)
}

/// Runs SMBO: `init_size` uniform random points, then fit / maximize EI /
/// evaluate until `total_budget` evaluations are spent.
pub fn smbo_run<F, R>(mut objective: F, space: &SearchSpace, config: &SmboConfig, rng: &mut R) -> Result<SmboHistory, SmboError>
where
    F: FnMut(&Point) -> f64,
    R: Rng + ?Sized,
{
    if config.init_size == 0 || config.init_size > config.total_budget {
        return Err(SmboError::BadConfig(format!(
            "need 1 <= init_size ({}) <= total_budget ({})",
            config.init_size, config.total_budget
        )));
    }

    let mut history = SmboHistory::default();
    for point in space.sample_uniform(config.init_size, rng) {
        let value = objective(&point);
        history.push(Evaluation {
            point,
            value,
            iteration: 0,
            initial: true,
            fallback: false,
        });
    }

    let mut iteration = 0;
    while history.len() < config.total_budget {
        iteration += 1;
        let points: Vec<Point> = history.evaluations.iter().map(|e| e.point.clone()).collect();
        let y: Vec<f64> = history.evaluations.iter().map(|e| e.value).collect();
        let (candidate, fallback) = match KrigingModel::fit(space, points, y, config.kernel, &config.fit) {
            Ok(model) => {
                let y_min = history.best_value();
                (propose(&model, y_min, config.infill_budget, &config.de, rng)?, false)
            }
            Err(e) => {
                log::debug!("iteration {iteration}: model fit failed ({e}), sampling at random");
                (space.sample_uniform(1, rng).remove(0), true)
            }
        };
        let point = if is_duplicate(&candidate, &history.evaluations) {
            perturb(space, &candidate, rng)
        } else {
            candidate
        };
        let value = objective(&point);
        history.push(Evaluation {
            point,
            value,
            iteration,
            initial: false,
            fallback,
        });
    }
    Ok(history)
}
