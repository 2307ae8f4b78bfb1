//! Derivative-free box-constrained minimizers.
//!
//! [`direct_minimize`] is the deterministic DIviding RECTangles method used
//! for likelihood optimization; [`de_minimize`] is rand/1/bin differential
//! evolution used to optimize the infill criterion.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::OptimError;

/// Minimization problem over an axis-aligned box with an evaluation budget.
pub struct BoxProblem<F> {
    objective: F,
    lower: Vec<f64>,
    upper: Vec<f64>,
    budget: usize,
}

impl<F: FnMut(&[f64]) -> f64> BoxProblem<F> {
    pub fn new(objective: F, lower: Vec<f64>, upper: Vec<f64>, budget: usize) -> Result<Self, OptimError> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(OptimError::EmptyBox);
        }
        if budget < lower.len() + 1 {
            return Err(OptimError::BudgetTooSmall {
                budget,
                needed: lower.len() + 1,
            });
        }
        Ok(Self {
            objective,
            lower,
            upper,
            budget,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        let v = (self.objective)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

// ---------------------------------------------------------------------------
// DIRECT

/// Potential-optimality tolerance.
pub const DIRECT_EPSILON: f64 = 1e-4;

/// Rectangles are not split below side length `3^-MAX_LEVEL`.
const MAX_LEVEL: u32 = 35;

struct Rect {
    center: Vec<f64>,
    levels: Vec<u32>,
    value: f64,
}

impl Rect {
    fn size_key(&self) -> Vec<u32> {
        let mut key = self.levels.clone();
        key.sort_unstable();
        key
    }
}

fn half_diagonal(sorted_levels: &[u32]) -> f64 {
    0.5 * sorted_levels
        .iter()
        .map(|&l| 9f64.powi(-(l as i32)))
        .sum::<f64>()
        .sqrt()
}

/// Deterministic DIRECT on the problem box, working in unit-cube
/// coordinates. The budget is checked before each rectangle is divided, so
/// the evaluation count can exceed it by at most one batch of `2·d` samples.
/// Non-finite objective values are ranked above every finite one.
pub fn direct_minimize<F: FnMut(&[f64]) -> f64>(problem: &mut BoxProblem<F>) -> OptimResult {
    let d = problem.dim();
    let scale: Vec<f64> = problem.lower.iter().zip(&problem.upper).map(|(l, u)| u - l).collect();
    let lower = problem.lower.clone();
    let to_box = |c: &[f64]| -> Vec<f64> { c.iter().zip(&lower).zip(&scale).map(|((c, l), s)| l + c * s).collect() };

    let mut evaluations = 0usize;
    let mut best = (f64::INFINITY, 0usize);
    let mut rects: Vec<Rect> = Vec::new();

    let center = vec![0.5; d];
    let value = problem.eval(&to_box(&center));
    evaluations += 1;
    best = (value, 0).min_by_value(best);
    rects.push(Rect {
        center,
        levels: vec![0; d],
        value,
    });

    while evaluations < problem.budget {
        let selected = potentially_optimal(&rects, best.0);
        let mut divided = false;
        for idx in selected {
            if evaluations >= problem.budget {
                break;
            }
            let min_level = *rects[idx].levels.iter().min().expect("d >= 1");
            if min_level >= MAX_LEVEL {
                continue;
            }
            divided = true;
            let long_dims: Vec<usize> = (0..d).filter(|&i| rects[idx].levels[i] == min_level).collect();
            let delta = 3f64.powi(-(min_level as i32)) / 3.0;

            let mut samples = Vec::with_capacity(long_dims.len());
            for &i in &long_dims {
                let mut plus = rects[idx].center.clone();
                plus[i] += delta;
                let mut minus = rects[idx].center.clone();
                minus[i] -= delta;
                let f_plus = problem.eval(&to_box(&plus));
                let f_minus = problem.eval(&to_box(&minus));
                evaluations += 2;
                samples.push((i, plus, f_plus, minus, f_minus));
            }
            samples.sort_by(|a, b| a.2.min(a.4).total_cmp(&b.2.min(b.4)).then(a.0.cmp(&b.0)));

            for (i, plus, f_plus, minus, f_minus) in samples {
                rects[idx].levels[i] += 1;
                let levels = rects[idx].levels.clone();
                for (c, f) in [(plus, f_plus), (minus, f_minus)] {
                    let id = rects.len();
                    best = (f, id).min_by_value(best);
                    rects.push(Rect {
                        center: c,
                        levels: levels.clone(),
                        value: f,
                    });
                }
            }
        }
        if !divided {
            break;
        }
    }

    let b = &rects[best.1];
    OptimResult {
        x: to_box(&b.center),
        value: b.value,
        evaluations,
    }
}

trait MinByValue {
    fn min_by_value(self, other: Self) -> Self;
}

impl MinByValue for (f64, usize) {
    fn min_by_value(self, other: Self) -> Self {
        if self.0 < other.0 {
            self
        } else {
            other
        }
    }
}

/// Indices of potentially optimal rectangles: per size class the lowest
/// value, kept if it lies on the lower-right convex hull of (size, value) and
/// promises a nontrivial improvement over the incumbent.
fn potentially_optimal(rects: &[Rect], f_min: f64) -> Vec<usize> {
    let max_finite = rects
        .iter()
        .map(|r| r.value)
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let sanitize = |v: f64| {
        if v.is_finite() {
            v
        } else if max_finite.is_finite() {
            max_finite + 1.0
        } else {
            0.0
        }
    };
    let f_min = sanitize(f_min);

    // size class -> (value, index) of its best member, lowest index on ties
    let mut classes: BTreeMap<Vec<u32>, (f64, usize)> = BTreeMap::new();
    for (idx, r) in rects.iter().enumerate() {
        if *r.levels.iter().min().expect("d >= 1") >= MAX_LEVEL {
            continue;
        }
        let v = sanitize(r.value);
        classes
            .entry(r.size_key())
            .and_modify(|e| {
                if v < e.0 {
                    *e = (v, idx);
                }
            })
            .or_insert((v, idx));
    }

    let mut cands: Vec<(f64, f64, usize)> = classes
        .iter()
        .map(|(key, &(v, idx))| (half_diagonal(key), v, idx))
        .collect();
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));

    let mut out = Vec::new();
    for (j, &(dj, fj, idx)) in cands.iter().enumerate() {
        let mut k_low = 0.0f64;
        let mut k_high = f64::INFINITY;
        let mut dominated = false;
        for (i, &(di, fi, _)) in cands.iter().enumerate() {
            if i == j {
                continue;
            }
            if di < dj {
                k_low = k_low.max((fj - fi) / (dj - di));
            } else if di > dj {
                let slope = (fi - fj) / (di - dj);
                if slope <= 0.0 {
                    // a larger rectangle is at least as good
                    dominated = true;
                    break;
                }
                k_high = k_high.min(slope);
            }
        }
        if dominated || k_low > k_high {
            continue;
        }
        if k_high.is_finite() && fj - k_high * dj > f_min - DIRECT_EPSILON * f_min.abs() {
            continue;
        }
        out.push(idx);
    }
    out
}

// ---------------------------------------------------------------------------
// Differential evolution

#[derive(Debug, Clone, PartialEq)]
pub struct DeConfig {
    /// Population size; `None` means `10·dimension`.
    pub population: Option<usize>,
    pub weight: f64,
    pub crossover: f64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            population: None,
            weight: 0.8,
            crossover: 0.5,
        }
    }
}

impl DeConfig {
    pub fn population_for(&self, dim: usize) -> usize {
        self.population.unwrap_or(10 * dim)
    }

    fn validate(&self, dim: usize) -> Result<(), OptimError> {
        let np = self.population_for(dim);
        if np < 4 {
            return Err(OptimError::BadConfig(format!("population {np} < 4")));
        }
        if !(self.weight > 0.0 && self.weight <= 2.0) {
            return Err(OptimError::BadConfig(format!("weight {} outside (0,2]", self.weight)));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(OptimError::BadConfig(format!("crossover {} outside [0,1]", self.crossover)));
        }
        Ok(())
    }
}

/// rand/1/bin differential evolution with `floor(budget / NP)` generations,
/// counting the initial population as the first one. Mutants leaving the
/// box are clipped. A trial replaces its target when it is no worse.
pub fn de_minimize<F, R>(problem: &mut BoxProblem<F>, config: &DeConfig, rng: &mut R) -> Result<OptimResult, OptimError>
where
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let d = problem.dim();
    config.validate(d)?;
    let np = config.population_for(d);
    let generations = (problem.budget / np).max(1);

    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| {
            (0..d)
                .map(|j| rng.gen_range(problem.lower[j]..=problem.upper[j]))
                .collect()
        })
        .collect();
    let mut values: Vec<f64> = Vec::with_capacity(np);
    for x in &pop {
        let v = problem.eval(x);
        values.push(v);
    }
    let mut evaluations = np;

    for _ in 1..generations {
        let mut next = pop.clone();
        let mut next_values = values.clone();
        for i in 0..np {
            let (r1, r2, r3) = distinct_three(np, i, rng);
            let j_rand = rng.gen_range(0..d);
            let trial: Vec<f64> = (0..d)
                .map(|j| {
                    if j == j_rand || rng.gen::<f64>() < config.crossover {
                        let v = pop[r1][j] + config.weight * (pop[r2][j] - pop[r3][j]);
                        v.clamp(problem.lower[j], problem.upper[j])
                    } else {
                        pop[i][j]
                    }
                })
                .collect();
            let v = problem.eval(&trial);
            evaluations += 1;
            if v <= values[i] {
                next[i] = trial;
                next_values[i] = v;
            }
        }
        pop = next;
        values = next_values;
    }

    let (best, &value) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .expect("population is non-empty");
    Ok(OptimResult {
        x: pop[best].clone(),
        value,
        evaluations,
    })
}

fn distinct_three<R: Rng + ?Sized>(np: usize, exclude: usize, rng: &mut R) -> (usize, usize, usize) {
    let mut pick = |taken: &[usize]| loop {
        let r = rng.gen_range(0..np);
        if r != exclude && !taken.contains(&r) {
            return r;
        }
    };
    let r1 = pick(&[]);
    let r2 = pick(&[r1]);
    let r3 = pick(&[r1, r2]);
    (r1, r2, r3)
}
