#![allow(dead_code)]

use hierkrig::kernels::{KernelKind, KernelParams};
use hierkrig::space::{ActivityRule, Dimension, Point, Predicate, SearchSpace};
use nalgebra::DMatrix;
use rand::Rng;

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

/// `x1, x2 ∈ [0,1]` with `x2` active iff `x1 > 0.4`, plus a three-level
/// categorical active iff `x1 <= 0.6`.
pub fn mixed_space() -> SearchSpace {
    SearchSpace::new(
        vec![
            Dimension::numeric("x1", 0.0, 1.0),
            Dimension::numeric("x2", 0.0, 1.0),
            Dimension::categorical("x3", ["a", "b", "c"]),
        ],
        vec![
            ActivityRule::new(1, 0, Predicate::Above(0.4)),
            ActivityRule::new(2, 0, Predicate::AtMost(0.6)),
        ],
    )
    .unwrap()
}

pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.gen_range(lo.log10()..hi.log10()))
}

/// Valid parameters for `kind` on `space`, drawn from the MLE search ranges.
pub fn random_params<R: Rng>(rng: &mut R, kind: KernelKind, space: &SearchSpace) -> KernelParams {
    let d = space.len();
    let theta: Vec<f64> = (0..d).map(|_| log_uniform(rng, 1e-4, 1e2)).collect();
    let mut p = KernelParams::with_theta(theta, log_uniform(rng, 1e-8, 1e-2));
    for (i, dim) in space.dims().iter().enumerate() {
        p.rho[i] = match kind {
            KernelKind::Arc | KernelKind::ImpArc => rng.gen_range(0.0..=1.0),
            _ => log_uniform(rng, 1e-4, 1e2),
        };
        p.impute[i] = match dim.level_count() {
            Some(levels) => rng.gen_range(0..=levels) as f64,
            None => {
                let (lo, hi) = dim.box_bounds();
                let r = hi - lo;
                rng.gen_range(lo - 2.0 * r..=hi + 2.0 * r)
            }
        };
        p.beta[i] = [log_uniform(rng, 1e-4, 1e2), log_uniform(rng, 1e-4, 1e2)];
    }
    p
}

/// Replaces each inactive coordinate by the corresponding imputed value.
pub fn impute(space: &SearchSpace, points: &[Point], values: &[f64]) -> Vec<Point> {
    points
        .iter()
        .map(|p| {
            let act = space.activity(p);
            Point(
                p.values()
                    .iter()
                    .zip(&act)
                    .zip(values)
                    .map(|((&v, &a), &r)| if a { v } else { r })
                    .collect(),
            )
        })
        .collect()
}

fn phi(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E[max(y_min - Y, 0)]` for `Y ~ N(mean, sd²)` by composite Simpson
/// quadrature of `sd ∫_{-∞}^{u} (u - t) φ(t) dt`, `u = (y_min - mean)/sd`.
pub fn ei_by_quadrature(mean: f64, sd: f64, y_min: f64) -> f64 {
    let u = (y_min - mean) / sd;
    let lo = (u - 12.0).min(-12.0);
    if u <= lo {
        return 0.0;
    }
    let steps = 200_000;
    let h = (u - lo) / steps as f64;
    let f = |t: f64| (u - t) * phi(t);
    let mut acc = f(lo) + f(u);
    for i in 1..steps {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
    }
    sd * acc * h / 3.0
}
