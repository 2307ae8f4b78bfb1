//! Ordinary Kriging with maximum likelihood parameter estimation.
//!
//! The model has a constant process mean. Parameters (kernel parameters and
//! the nugget) maximize the concentrated likelihood, searched with DIRECT on
//! the box given by [`param_bounds`]. Uncertainty can be re-interpolated so
//! that the nugget does not inflate the variance at training points.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::ModelError;
use crate::kernels::{
    check_compatible, cross_unchecked, finish_matrix, param_bounds, raw_matrix_unchecked, Design, KernelKind,
    KernelParams,
};
use crate::optim::{direct_minimize, BoxProblem};
use crate::space::{Point, SearchSpace};

/// Likelihood returned when the residual variance vanishes (constant data).
pub const DEGENERATE_LIKELIHOOD: f64 = 1e10;

/// Eigenvalues below this fraction of the largest magnitude are treated as
/// zero when inverting the nugget-free matrix for re-interpolation.
const PINV_RELATIVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub likelihood_budget: usize,
    pub use_reinterpolation: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            likelihood_budget: 200,
            use_reinterpolation: true,
        }
    }
}

/// Pieces of the concentrated likelihood for one parameter setting.
#[derive(Debug, Clone)]
pub struct LikelihoodTerms {
    /// `n·ln(σ²) + ln det(K)`, or [`DEGENERATE_LIKELIHOOD`] if `σ² = 0`.
    pub value: f64,
    pub log_det: f64,
    pub mu: f64,
    pub sigma2: f64,
}

struct Solved {
    chol: Cholesky<f64, Dyn>,
    mu: f64,
    sigma2: f64,
    alpha: DVector<f64>,
    log_det: f64,
}

fn solve(k: DMatrix<f64>, y: &DVector<f64>) -> Option<Solved> {
    let n = y.len();
    let chol = k.cholesky()?;
    let ones = DVector::from_element(n, 1.0);
    let k_inv_one = chol.solve(&ones);
    let k_inv_y = chol.solve(y);
    let denom = ones.dot(&k_inv_one);
    if !(denom > 0.0) || !denom.is_finite() {
        return None;
    }
    let mu = ones.dot(&k_inv_y) / denom;
    let resid = y - DVector::from_element(n, mu);
    let alpha = chol.solve(&resid);
    let sigma2 = resid.dot(&alpha) / n as f64;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if !sigma2.is_finite() || !log_det.is_finite() {
        return None;
    }
    Some(Solved {
        chol,
        mu,
        sigma2,
        alpha,
        log_det,
    })
}

fn check_data(space: &SearchSpace, points: &[Point], y: &[f64], min_points: usize) -> Result<(), ModelError> {
    if points.len() != y.len() {
        return Err(ModelError::LengthMismatch {
            points: points.len(),
            observations: y.len(),
        });
    }
    if points.len() < min_points {
        return Err(ModelError::TooFewPoints {
            needed: min_points,
            got: points.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFiniteObservation);
    }
    for p in points {
        space.validate(p)?;
    }
    Ok(())
}

fn terms_unchecked(
    kind: KernelKind,
    params: &KernelParams,
    space: &SearchSpace,
    design: &Design,
    y: &DVector<f64>,
) -> Option<LikelihoodTerms> {
    let raw = raw_matrix_unchecked(kind, params, space.dims(), design);
    let k = finish_matrix(kind, params.eta, raw).ok()?;
    let s = solve(k.matrix, y)?;
    let n = y.len() as f64;
    let value = if s.sigma2 > 0.0 {
        n * s.sigma2.ln() + s.log_det
    } else {
        DEGENERATE_LIKELIHOOD
    };
    Some(LikelihoodTerms {
        value,
        log_det: s.log_det,
        mu: s.mu,
        sigma2: s.sigma2,
    })
}

/// Likelihood terms, or `None` when the correlation matrix cannot be
/// factorized.
pub fn likelihood_terms(
    kind: KernelKind,
    params: &KernelParams,
    space: &SearchSpace,
    points: &[Point],
    y: &[f64],
) -> Result<Option<LikelihoodTerms>, ModelError> {
    check_data(space, points, y, 2)?;
    check_compatible(kind, params, space)?;
    let design = Design::new(space, points.to_vec());
    Ok(terms_unchecked(kind, params, space, &design, &DVector::from_column_slice(y)))
}

/// Negated concentrated log-likelihood `n·ln(σ²) + ln det(K)` (up to
/// constants). `+∞` when factorization fails.
pub fn neg_concentrated_log_likelihood(
    kind: KernelKind,
    params: &KernelParams,
    space: &SearchSpace,
    points: &[Point],
    y: &[f64],
) -> Result<f64, ModelError> {
    Ok(likelihood_terms(kind, params, space, points, y)?.map_or(f64::INFINITY, |t| t.value))
}

#[derive(Debug, Clone)]
pub struct KrigingModel {
    space: SearchSpace,
    design: Design,
    y: Vec<f64>,
    kind: KernelKind,
    params: KernelParams,
    chol: Cholesky<f64, Dyn>,
    mu: f64,
    sigma2: f64,
    sigma2_ri: f64,
    alpha: DVector<f64>,
    /// Pseudo-inverse of the nugget-free training matrix, when re-interpolating.
    ri_inverse: Option<DMatrix<f64>>,
    likelihood: f64,
    likelihood_evaluations: usize,
}

impl KrigingModel {
    /// Fits parameters by maximum likelihood.
    pub fn fit(
        space: &SearchSpace,
        points: Vec<Point>,
        y: Vec<f64>,
        kind: KernelKind,
        config: &FitConfig,
    ) -> Result<Self, ModelError> {
        check_data(space, &points, &y, 2)?;
        let layout = param_bounds(kind, space)?;
        let design = Design::new(space, points);
        let y_vec = DVector::from_column_slice(&y);
        let (lower, upper) = layout.search_box();
        let budget = config.likelihood_budget.max(layout.len() + 1);

        let objective = |v: &[f64]| {
            let p = layout.decode(v);
            terms_unchecked(kind, &p, space, &design, &y_vec).map_or(f64::INFINITY, |t| t.value)
        };
        let mut problem = BoxProblem::new(objective, lower, upper, budget).expect("parameter box is well formed");
        let best = direct_minimize(&mut problem);
        if !best.value.is_finite() {
            return Err(ModelError::Infeasible);
        }
        let params = layout.decode(&best.x);
        let mut model = Self::assemble(space, design, y, kind, params, config.use_reinterpolation)?;
        model.likelihood_evaluations = best.evaluations;
        Ok(model)
    }

    /// Builds a model with fixed parameters (no likelihood optimization).
    pub fn with_params(
        space: &SearchSpace,
        points: Vec<Point>,
        y: Vec<f64>,
        kind: KernelKind,
        params: KernelParams,
        use_reinterpolation: bool,
    ) -> Result<Self, ModelError> {
        check_data(space, &points, &y, 1)?;
        check_compatible(kind, &params, space)?;
        let design = Design::new(space, points);
        Self::assemble(space, design, y, kind, params, use_reinterpolation)
    }

    fn assemble(
        space: &SearchSpace,
        design: Design,
        y: Vec<f64>,
        kind: KernelKind,
        params: KernelParams,
        use_reinterpolation: bool,
    ) -> Result<Self, ModelError> {
        let raw = raw_matrix_unchecked(kind, &params, space.dims(), &design);
        let k = finish_matrix(kind, params.eta, raw)?;
        let y_vec = DVector::from_column_slice(&y);
        let s = solve(k.matrix.clone(), &y_vec).ok_or(ModelError::NotPositiveDefinite)?;
        let n = y.len() as f64;

        let (ri_inverse, sigma2_ri) = if use_reinterpolation {
            let mut bare = k.matrix;
            for i in 0..bare.nrows() {
                bare[(i, i)] -= params.eta;
            }
            // σ²_ri = rᵀ K⁻¹ (K - ηI) K⁻¹ r / n with K⁻¹ r = alpha
            let sigma2_ri = (s.alpha.transpose() * &bare * &s.alpha)[(0, 0)] / n;
            (Some(pseudo_inverse(bare)?), sigma2_ri.max(0.0))
        } else {
            (None, 0.0)
        };

        let likelihood = if s.sigma2 > 0.0 {
            n * s.sigma2.ln() + s.log_det
        } else {
            DEGENERATE_LIKELIHOOD
        };
        Ok(Self {
            space: space.clone(),
            design,
            y,
            kind,
            params,
            chol: s.chol,
            mu: s.mu,
            sigma2: s.sigma2.max(0.0),
            sigma2_ri,
            alpha: s.alpha,
            ri_inverse,
            likelihood,
            likelihood_evaluations: 0,
        })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn points(&self) -> &[Point] {
        self.design.points()
    }

    pub fn observations(&self) -> &[f64] {
        &self.y
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma2_reinterpolated(&self) -> f64 {
        self.sigma2_ri
    }

    /// Value of the negated concentrated log-likelihood at the fitted parameters.
    pub fn likelihood(&self) -> f64 {
        self.likelihood
    }

    /// Likelihood evaluations spent by [`KrigingModel::fit`]; zero for fixed parameters.
    pub fn likelihood_evaluations(&self) -> usize {
        self.likelihood_evaluations
    }

    pub fn reinterpolates(&self) -> bool {
        self.ri_inverse.is_some()
    }

    fn cross(&self, x: &Point) -> DVector<f64> {
        let act = self.space.activity(x);
        cross_unchecked(self.kind, &self.params, self.space.dims(), &self.design, x.values(), &act)
    }

    pub fn predict_mean(&self, x: &Point) -> f64 {
        self.mu + self.cross(x).dot(&self.alpha)
    }

    pub fn predict_variance(&self, x: &Point) -> f64 {
        self.variance_from_cross(&self.cross(x))
    }

    /// Mean and variance sharing one correlation vector.
    pub fn predict(&self, x: &Point) -> (f64, f64) {
        let k = self.cross(x);
        (self.mu + k.dot(&self.alpha), self.variance_from_cross(&k))
    }

    fn variance_from_cross(&self, k: &DVector<f64>) -> f64 {
        let v = match &self.ri_inverse {
            Some(inv) => self.sigma2_ri * (1.0 - (k.transpose() * inv * k)[(0, 0)]),
            None => self.sigma2 * (1.0 - k.dot(&self.chol.solve(k))),
        };
        v.max(0.0)
    }
}

/// Eigenvalue-thresholded inverse of a symmetric matrix.
fn pseudo_inverse(m: DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
    let eig = m
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or(ModelError::Kernel(crate::error::KernelError::EigenFailure))?;
    let largest = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = largest * PINV_RELATIVE_TOL;
    let inv_vals = eig.eigenvalues.map(|v| if v.abs() > tol { 1.0 / v } else { 0.0 });
    let u = &eig.eigenvectors;
    let mut out = u * DMatrix::from_diagonal(&inv_vals) * u.transpose();
    let n = out.nrows();
    for a in 0..n {
        for b in (a + 1)..n {
            let v = 0.5 * (out[(a, b)] + out[(b, a)]);
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Dimension;
    use approx::assert_abs_diff_eq;

    fn line() -> SearchSpace {
        SearchSpace::flat(vec![Dimension::numeric("x", 0.0, 1.0)]).unwrap()
    }

    fn pts(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| Point(vec![x])).collect()
    }

    /// Dense oracle: explicit inverse and determinant, no factorization reuse.
    fn dense_likelihood(xs: &[f64], y: &[f64], theta: f64, eta: f64) -> f64 {
        let n = xs.len();
        let k = DMatrix::from_fn(n, n, |a, b| {
            (-theta * (xs[a] - xs[b]).powi(2)).exp() + if a == b { eta } else { 0.0 }
        });
        let inv = k.clone().try_inverse().unwrap();
        let one = DVector::from_element(n, 1.0);
        let yv = DVector::from_column_slice(y);
        let mu = (one.transpose() * &inv * &yv)[(0, 0)] / (one.transpose() * &inv * &one)[(0, 0)];
        let r = &yv - &one * mu;
        let s2 = (r.transpose() * &inv * &r)[(0, 0)] / n as f64;
        n as f64 * s2.ln() + k.determinant().ln()
    }

    #[test]
    fn likelihood_matches_dense_oracle() {
        let space = line();
        let p = KernelParams::with_theta(vec![1.0], 1e-6);
        let xs = [0.0, 0.5, 1.0];
        let y = [0.0, 1.0, 0.0];
        let v = neg_concentrated_log_likelihood(KernelKind::Stan, &p, &space, &pts(&xs), &y).unwrap();
        assert_abs_diff_eq!(v, dense_likelihood(&xs, &y, 1.0, 1e-6), epsilon = 1e-8);
    }

    #[test]
    fn likelihood_degenerate_and_errors() {
        let space = line();
        let p = KernelParams::with_theta(vec![2.0], 1e-4);
        let v = neg_concentrated_log_likelihood(KernelKind::Stan, &p, &space, &pts(&[0.1, 0.5, 0.9]), &[2.0; 3]).unwrap();
        assert_eq!(v, DEGENERATE_LIKELIHOOD);
        assert_eq!(
            neg_concentrated_log_likelihood(KernelKind::Stan, &p, &space, &pts(&[0.1, 0.5]), &[1.0, f64::NAN]),
            Err(ModelError::NonFiniteObservation)
        );
    }

    #[test]
    fn nugget_increases_log_det() {
        let space = line();
        let xs = pts(&[0.0, 0.2, 0.45, 0.8]);
        let y = [0.3, -0.1, 0.5, 0.2];
        let mut eta = 1e-6;
        let mut prev = f64::NEG_INFINITY;
        for _ in 0..12 {
            let p = KernelParams::with_theta(vec![3.0], eta);
            let t = likelihood_terms(KernelKind::Stan, &p, &space, &xs, &y).unwrap().unwrap();
            assert!(t.log_det > prev);
            prev = t.log_det;
            eta *= 2.0;
        }
    }

    #[test]
    fn single_point_model() {
        let space = line();
        let m = KrigingModel::with_params(
            &space,
            pts(&[0.3]),
            vec![1.7],
            KernelKind::Stan,
            KernelParams::with_theta(vec![1.0], 1e-8),
            true,
        )
        .unwrap();
        for x in [0.0, 0.3, 0.9] {
            assert_abs_diff_eq!(m.predict_mean(&Point(vec![x])), 1.7, epsilon = 1e-12);
        }
        assert_eq!(m.predict_variance(&Point(vec![0.3])), 0.0);
    }

    #[test]
    fn variance_grows_away_from_data() {
        let space = line();
        let m = KrigingModel::with_params(
            &space,
            pts(&[0.0, 0.1]),
            vec![1.0, 2.0],
            KernelKind::Stan,
            KernelParams::with_theta(vec![5.0], 1e-8),
            true,
        )
        .unwrap();
        let mut prev = m.predict_variance(&Point(vec![0.1]));
        assert!(prev <= 1e-8);
        for x in [0.2, 0.4, 0.6, 0.8, 1.0] {
            let v = m.predict_variance(&Point(vec![x]));
            assert!(v > prev, "{x}: {v} <= {prev}");
            prev = v;
        }
    }

    #[test]
    fn reinterpolated_variance_vanishes_at_training_points() {
        let space = SearchSpace::benchmark(0.4);
        let xs: Vec<Point> = [[0.1, 0.2], [0.5, 0.9], [0.8, 0.3], [0.35, 0.6], [0.95, 0.55]]
            .iter()
            .map(|v| Point(v.to_vec()))
            .collect();
        let y = vec![0.3, 0.1, 0.7, 0.2, 0.9];
        for kind in KernelKind::ALL {
            let mut p = KernelParams::with_theta(vec![4.0, 2.0], 1e-2);
            p.rho = vec![0.7, 0.8];
            p.impute = vec![0.5, 0.5];
            let m = KrigingModel::with_params(&space, xs.clone(), y.clone(), kind, p, true).unwrap();
            for x in &xs {
                let v = m.predict_variance(x);
                assert!(v <= 1e-8, "{kind}: {v}");
            }
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let space = line();
        let xs = pts(&[0.05, 0.3, 0.55, 0.7, 0.9]);
        let y: Vec<f64> = xs.iter().map(|p| (6.0 * p[0]).sin()).collect();
        let a = KrigingModel::fit(&space, xs.clone(), y.clone(), KernelKind::Stan, &FitConfig::default()).unwrap();
        let b = KrigingModel::fit(&space, xs, y, KernelKind::Stan, &FitConfig::default()).unwrap();
        assert_eq!(a.params(), b.params());
        assert!(a.likelihood_evaluations() >= 200);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let space = line();
        assert!(matches!(
            KrigingModel::fit(&space, pts(&[0.2]), vec![1.0], KernelKind::Stan, &FitConfig::default()),
            Err(ModelError::TooFewPoints { .. })
        ));
        assert!(matches!(
            KrigingModel::fit(&space, pts(&[0.2, 0.4]), vec![1.0], KernelKind::Stan, &FitConfig::default()),
            Err(ModelError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn constant_data_predicts_constant() {
        let space = line();
        let m = KrigingModel::fit(&space, pts(&[0.1, 0.5, 0.9]), vec![3.0; 3], KernelKind::Stan, &FitConfig::default())
            .unwrap();
        assert_abs_diff_eq!(m.predict_mean(&Point(vec![0.33])), 3.0, epsilon = 1e-9);
        assert!(m.predict_variance(&Point(vec![0.33])) < 1e-20);
    }
}
