//! Exponential correlation kernels for hierarchical search spaces.
//!
//! Every kernel has the form `k(x, x') = exp(-sum_i d_i(x_i, x'_i))` and the
//! variants differ only in the per-dimension distance `d_i`, which depends on
//! whether dimension `i` is active in `x` and in `x'`:
//!
//! | kind     | both inactive | one active                | both active                       |
//! |----------|---------------|---------------------------|-----------------------------------|
//! | `Stan`   | `θ·δ(x,x')`   | `θ·δ(x,x')`               | `θ·δ(x,x')`                       |
//! | `Arc`    | 0             | `θ`                       | `θ·(2 - 2cos(πρ(x-x')/(u-l)))`    |
//! | `Ico`    | 0             | `ρ`                       | `θ·δ(x,x')`                       |
//! | `Imp`    | 0             | `θ·δ(active value, ρ)`    | `θ·δ(x,x')`                       |
//! | `ImpArc` | `β1·Arc + β2·Imp`                                                             |
//!
//! `δ` is the squared deviation for numeric dimensions and the Hamming
//! distance for categorical ones. `IcoCorrected` uses the `Ico` distance and
//! repairs the training correlation matrix with a spectrum flip.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::KernelError;
use crate::space::{Dimension, DimensionKind, Point, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelKind {
    Stan,
    Arc,
    Ico,
    IcoCorrected,
    Imp,
    ImpArc,
}

impl KernelKind {
    pub const ALL: [KernelKind; 6] = [
        KernelKind::Stan,
        KernelKind::Arc,
        KernelKind::Ico,
        KernelKind::IcoCorrected,
        KernelKind::Imp,
        KernelKind::ImpArc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Stan => "stan",
            KernelKind::Arc => "arc",
            KernelKind::Ico => "ico",
            KernelKind::IcoCorrected => "icocor",
            KernelKind::Imp => "imp",
            KernelKind::ImpArc => "imparc",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        KernelKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| KernelError::UnknownKernel(s.to_string()))
    }
}

/// Kernel parameters. Vectors have one entry per dimension; entries a kind
/// does not use are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    pub theta: Vec<f64>,
    /// Arc angle scale in `[0,1]`, or the Ico mismatch distance.
    pub rho: Vec<f64>,
    /// Imputed value compared against the active side (Imp, ImpArc). For
    /// categorical dimensions this is a level index, possibly one past the
    /// declared levels.
    pub impute: Vec<f64>,
    /// `[β1, β2]` weights of the Arc and Imp parts of ImpArc.
    pub beta: Vec<[f64; 2]>,
    pub eta: f64,
}

impl KernelParams {
    /// All length scales `theta`, `rho = 1`, `impute = 0`, `beta = [1, 1]`.
    pub fn with_theta(theta: Vec<f64>, eta: f64) -> Self {
        let d = theta.len();
        Self {
            theta,
            rho: vec![1.0; d],
            impute: vec![0.0; d],
            beta: vec![[1.0, 1.0]; d],
            eta,
        }
    }

    pub fn dims(&self) -> usize {
        self.theta.len()
    }

    fn check_shape(&self, d: usize) -> Result<(), KernelError> {
        let lens = [self.theta.len(), self.rho.len(), self.impute.len(), self.beta.len()];
        if lens.iter().any(|&l| l != d) {
            return Err(KernelError::BadParams(format!(
                "expected {d} entries per vector, got {lens:?}"
            )));
        }
        Ok(())
    }
}

fn default_distance(dim: &Dimension, a: f64, b: f64) -> f64 {
    match dim.kind {
        DimensionKind::Numeric { .. } => (a - b) * (a - b),
        DimensionKind::Categorical { .. } => {
            if a == b {
                0.0
            } else {
                1.0
            }
        }
    }
}

fn arc_distance(theta: f64, rho: f64, dim: &Dimension, a: f64, b: f64, act_a: bool, act_b: bool) -> f64 {
    match (act_a, act_b) {
        (false, false) => 0.0,
        (true, true) => {
            let angle = std::f64::consts::PI * rho * (a - b) / dim.range();
            theta * (2.0 - 2.0 * angle.cos())
        }
        _ => theta,
    }
}

fn imp_distance(theta: f64, impute: f64, dim: &Dimension, a: f64, b: f64, act_a: bool, act_b: bool) -> f64 {
    match (act_a, act_b) {
        (false, false) => 0.0,
        (false, true) => theta * default_distance(dim, b, impute),
        (true, false) => theta * default_distance(dim, a, impute),
        (true, true) => theta * default_distance(dim, a, b),
    }
}

/// Distance contributed by dimension `i` for values `a` (activity `act_a`)
/// and `b` (activity `act_b`).
pub fn dim_distance(
    kind: KernelKind,
    params: &KernelParams,
    i: usize,
    dim: &Dimension,
    (a, act_a): (f64, bool),
    (b, act_b): (f64, bool),
) -> Result<f64, KernelError> {
    if matches!(kind, KernelKind::Arc | KernelKind::ImpArc) && dim.is_categorical() {
        return Err(KernelError::CategoricalArc(dim.name.clone()));
    }
    Ok(dim_distance_unchecked(kind, params, i, dim, a, b, act_a, act_b))
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn dim_distance_unchecked(
    kind: KernelKind,
    p: &KernelParams,
    i: usize,
    dim: &Dimension,
    a: f64,
    b: f64,
    act_a: bool,
    act_b: bool,
) -> f64 {
    match kind {
        KernelKind::Stan => p.theta[i] * default_distance(dim, a, b),
        KernelKind::Arc => arc_distance(p.theta[i], p.rho[i], dim, a, b, act_a, act_b),
        KernelKind::Ico | KernelKind::IcoCorrected => match (act_a, act_b) {
            (false, false) => 0.0,
            (true, true) => p.theta[i] * default_distance(dim, a, b),
            _ => p.rho[i],
        },
        KernelKind::Imp => imp_distance(p.theta[i], p.impute[i], dim, a, b, act_a, act_b),
        KernelKind::ImpArc => {
            let [b1, b2] = p.beta[i];
            b1 * arc_distance(p.theta[i], p.rho[i], dim, a, b, act_a, act_b)
                + b2 * imp_distance(p.theta[i], p.impute[i], dim, a, b, act_a, act_b)
        }
    }
}

/// Checks that `kind` is defined on `space` and that `params` fits it.
pub fn check_compatible(kind: KernelKind, params: &KernelParams, space: &SearchSpace) -> Result<(), KernelError> {
    check_kind(kind, space)?;
    params.check_shape(space.len())
}

fn check_kind(kind: KernelKind, space: &SearchSpace) -> Result<(), KernelError> {
    if matches!(kind, KernelKind::Arc | KernelKind::ImpArc) {
        if let Some(dim) = space.dims().iter().find(|d| d.is_categorical()) {
            return Err(KernelError::CategoricalArc(dim.name.clone()));
        }
    }
    Ok(())
}

#[inline]
fn correlation(
    kind: KernelKind,
    params: &KernelParams,
    dims: &[Dimension],
    x: &[f64],
    act_x: &[bool],
    y: &[f64],
    act_y: &[bool],
) -> f64 {
    let mut total = 0.0;
    for (i, dim) in dims.iter().enumerate() {
        total += dim_distance_unchecked(kind, params, i, dim, x[i], y[i], act_x[i], act_y[i]);
    }
    (-total).exp()
}

pub fn kernel_eval(
    kind: KernelKind,
    params: &KernelParams,
    space: &SearchSpace,
    x: &Point,
    y: &Point,
) -> Result<f64, KernelError> {
    check_compatible(kind, params, space)?;
    let ax = space.activity(x);
    let ay = space.activity(y);
    Ok(correlation(kind, params, space.dims(), x.values(), &ax, y.values(), &ay))
}

/// A correlation matrix ready for factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub matrix: DMatrix<f64>,
    /// Nugget added to the diagonal.
    pub nugget: f64,
    /// Whether the spectrum flip was applied before adding the nugget.
    pub flipped: bool,
}

/// Training points together with their activity vectors, so repeated kernel
/// evaluations during likelihood optimization skip recomputing activity.
#[derive(Debug, Clone)]
pub struct Design {
    points: Vec<Point>,
    activity: Vec<Vec<bool>>,
}

impl Design {
    pub fn new(space: &SearchSpace, points: Vec<Point>) -> Self {
        let activity = points.iter().map(|p| space.activity(p)).collect();
        Self { points, activity }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn activity(&self) -> &[Vec<bool>] {
        &self.activity
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Pairwise correlations before any repair or nugget; unit diagonal.
pub fn raw_kernel_matrix(
    kind: KernelKind,
    params: &KernelParams,
    space: &SearchSpace,
    design: &Design,
) -> Result<DMatrix<f64>, KernelError> {
    check_compatible(kind, params, space)?;
    Ok(raw_matrix_unchecked(kind, params, space.dims(), design))
}

pub(crate) fn raw_matrix_unchecked(
    kind: KernelKind,
    params: &KernelParams,
    dims: &[Dimension],
    design: &Design,
) -> DMatrix<f64> {
    let n = design.len();
    let mut k = DMatrix::identity(n, n);
    for a in 0..n {
        for b in (a + 1)..n {
            let v = correlation(
                kind,
                params,
                dims,
                design.points[a].values(),
                &design.activity[a],
                design.points[b].values(),
                &design.activity[b],
            );
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    k
}

/// Training correlation matrix: raw correlations, spectrum flip for
/// `IcoCorrected`, then the nugget on the diagonal.
pub fn kernel_matrix(
    kind: KernelKind,
    params: &KernelParams,
    space: &SearchSpace,
    design: &Design,
) -> Result<CorrelationMatrix, KernelError> {
    let raw = raw_kernel_matrix(kind, params, space, design)?;
    finish_matrix(kind, params.eta, raw)
}

pub(crate) fn finish_matrix(kind: KernelKind, eta: f64, raw: DMatrix<f64>) -> Result<CorrelationMatrix, KernelError> {
    let flipped = kind == KernelKind::IcoCorrected;
    let mut matrix = if flipped { spectrum_flip(&raw)? } else { raw };
    for i in 0..matrix.nrows() {
        matrix[(i, i)] += eta;
    }
    Ok(CorrelationMatrix {
        matrix,
        nugget: eta,
        flipped,
    })
}

/// Correlations between every training point and `x`. Never repaired.
pub fn cross_kernel(
    kind: KernelKind,
    params: &KernelParams,
    space: &SearchSpace,
    design: &Design,
    x: &Point,
) -> Result<DVector<f64>, KernelError> {
    check_compatible(kind, params, space)?;
    let act = space.activity(x);
    Ok(cross_unchecked(kind, params, space.dims(), design, x.values(), &act))
}

pub(crate) fn cross_unchecked(
    kind: KernelKind,
    params: &KernelParams,
    dims: &[Dimension],
    design: &Design,
    x: &[f64],
    act: &[bool],
) -> DVector<f64> {
    DVector::from_iterator(
        design.len(),
        design
            .points
            .iter()
            .zip(&design.activity)
            .map(|(p, ap)| correlation(kind, params, dims, p.values(), ap, x, act)),
    )
}

/// Replaces every eigenvalue of the symmetric matrix `k` by its absolute
/// value: `U |Λ| Uᵀ`.
pub fn spectrum_flip(k: &DMatrix<f64>) -> Result<DMatrix<f64>, KernelError> {
    let eig = k
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or(KernelError::EigenFailure)?;
    let abs = eig.eigenvalues.map(f64::abs);
    let u = &eig.eigenvectors;
    let mut out = u * DMatrix::from_diagonal(&abs) * u.transpose();
    // exact symmetry
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

// ---------------------------------------------------------------------------
// Parameter search boxes for maximum likelihood estimation

pub const LENGTH_SCALE_BOUNDS: (f64, f64) = (1e-4, 1e2);
pub const NUGGET_BOUNDS: (f64, f64) = (1e-8, 1e-2);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log10,
    /// Integer level index, searched as a continuous coordinate and rounded.
    Level,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Theta(usize),
    Rho(usize),
    Impute(usize),
    Beta1(usize),
    Beta2(usize),
    Nugget,
}

/// One searched parameter, with bounds in natural units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBound {
    pub role: ParamRole,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
}

impl ParamBound {
    /// Interval searched by the optimizer.
    pub fn search_interval(&self) -> (f64, f64) {
        match self.scale {
            Scale::Linear => (self.lower, self.upper),
            Scale::Log10 => (self.lower.log10(), self.upper.log10()),
            Scale::Level => (self.lower - 0.5, self.upper + 0.5),
        }
    }

    pub fn to_natural(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear => v,
            Scale::Log10 => 10f64.powf(v),
            Scale::Level => v.round().clamp(self.lower, self.upper),
        }
    }

    pub fn to_search(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Log10 => v.log10(),
            Scale::Linear | Scale::Level => v,
        }
    }
}

/// The searched parameters of a kernel on a space and how they map onto
/// [`KernelParams`]. Parameters a kind does not search keep fixed values:
/// `theta = 1` for ImpArc (absorbed into the weights), `rho = 1` and the
/// dimension midpoint as `impute` for dimensions that are never inactive.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    kind: KernelKind,
    base: KernelParams,
    bounds: Vec<ParamBound>,
}

impl ParamLayout {
    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn bounds(&self) -> &[ParamBound] {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn search_box(&self) -> (Vec<f64>, Vec<f64>) {
        self.bounds.iter().map(ParamBound::search_interval).unzip()
    }

    /// Kernel parameters for a point in the search box.
    pub fn decode(&self, coords: &[f64]) -> KernelParams {
        let mut p = self.base.clone();
        for (b, &v) in self.bounds.iter().zip(coords) {
            let v = b.to_natural(v);
            match b.role {
                ParamRole::Theta(i) => p.theta[i] = v,
                ParamRole::Rho(i) => p.rho[i] = v,
                ParamRole::Impute(i) => p.impute[i] = v,
                ParamRole::Beta1(i) => p.beta[i][0] = v,
                ParamRole::Beta2(i) => p.beta[i][1] = v,
                ParamRole::Nugget => p.eta = v,
            }
        }
        p
    }

    pub fn encode(&self, p: &KernelParams) -> Vec<f64> {
        self.bounds
            .iter()
            .map(|b| {
                let v = match b.role {
                    ParamRole::Theta(i) => p.theta[i],
                    ParamRole::Rho(i) => p.rho[i],
                    ParamRole::Impute(i) => p.impute[i],
                    ParamRole::Beta1(i) => p.beta[i][0],
                    ParamRole::Beta2(i) => p.beta[i][1],
                    ParamRole::Nugget => p.eta,
                };
                b.to_search(v)
            })
            .collect()
    }
}

/// Search box for maximum likelihood estimation of `kind` on `space`.
pub fn param_bounds(kind: KernelKind, space: &SearchSpace) -> Result<ParamLayout, KernelError> {
    check_kind(kind, space)?;
    let d = space.len();
    let (ls_lo, ls_hi) = LENGTH_SCALE_BOUNDS;
    let log = |role| ParamBound {
        role,
        lower: ls_lo,
        upper: ls_hi,
        scale: Scale::Log10,
    };

    let mut base = KernelParams::with_theta(vec![1.0; d], NUGGET_BOUNDS.0);
    for (i, dim) in space.dims().iter().enumerate() {
        let (l, u) = dim.box_bounds();
        base.impute[i] = if dim.is_categorical() { 0.0 } else { 0.5 * (l + u) };
    }

    let mut bounds = Vec::new();
    if kind != KernelKind::ImpArc {
        bounds.extend((0..d).map(|i| log(ParamRole::Theta(i))));
    }
    if matches!(kind, KernelKind::Arc | KernelKind::ImpArc) {
        bounds.extend((0..d).map(|i| ParamBound {
            role: ParamRole::Rho(i),
            lower: 0.0,
            upper: 1.0,
            scale: Scale::Linear,
        }));
    }
    if matches!(kind, KernelKind::Ico | KernelKind::IcoCorrected) {
        bounds.extend((0..d).filter(|&i| space.is_conditional(i)).map(|i| log(ParamRole::Rho(i))));
    }
    if matches!(kind, KernelKind::Imp | KernelKind::ImpArc) {
        for (i, dim) in space.dims().iter().enumerate() {
            if !space.is_conditional(i) {
                continue;
            }
            bounds.push(match &dim.kind {
                DimensionKind::Numeric { lower, upper } => {
                    let a = 2.0 * (upper - lower);
                    ParamBound {
                        role: ParamRole::Impute(i),
                        lower: lower - a,
                        upper: upper + a,
                        scale: Scale::Linear,
                    }
                }
                // one synthetic level past the declared ones
                DimensionKind::Categorical { levels } => ParamBound {
                    role: ParamRole::Impute(i),
                    lower: 0.0,
                    upper: levels.len() as f64,
                    scale: Scale::Level,
                },
            });
        }
    }
    if kind == KernelKind::ImpArc {
        bounds.extend((0..d).map(|i| log(ParamRole::Beta1(i))));
        bounds.extend((0..d).map(|i| log(ParamRole::Beta2(i))));
    }
    bounds.push(ParamBound {
        role: ParamRole::Nugget,
        lower: NUGGET_BOUNDS.0,
        upper: NUGGET_BOUNDS.1,
        scale: Scale::Log10,
    });

    Ok(ParamLayout { kind, base, bounds })
}
