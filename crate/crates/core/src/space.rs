//! Hierarchical search spaces.
//!
//! A space is an ordered list of dimensions, each numeric (a closed interval)
//! or categorical (a list of levels). A dimension may carry one activity rule
//! that makes it active only when a condition on a single parent dimension
//! holds. Points always store a value for every dimension; whether a value is
//! active is computed on demand with [`SearchSpace::activity`].
//!
//! Categorical values are stored as level indices (`0.0, 1.0, ...`) so that a
//! point is a plain real vector.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::SpaceError;

#[derive(Debug, Clone, PartialEq)]
pub enum DimensionKind {
    Numeric { lower: f64, upper: f64 },
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dimension {
    pub name: String,
    pub kind: DimensionKind,
}

impl Dimension {
    pub fn numeric(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            kind: DimensionKind::Numeric { lower, upper },
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: DimensionKind::Categorical {
                levels: levels.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, DimensionKind::Categorical { .. })
    }

    /// Number of levels, or `None` for numeric dimensions.
    pub fn level_count(&self) -> Option<usize> {
        match &self.kind {
            DimensionKind::Categorical { levels } => Some(levels.len()),
            DimensionKind::Numeric { .. } => None,
        }
    }

    /// Interval used for sampling and box-constrained search. Categorical
    /// dimensions map to `[0, levels]`, see [`Dimension::decode`].
    pub fn box_bounds(&self) -> (f64, f64) {
        match &self.kind {
            DimensionKind::Numeric { lower, upper } => (*lower, *upper),
            DimensionKind::Categorical { levels } => (0.0, levels.len() as f64),
        }
    }

    /// Width `u - l` of a numeric dimension.
    pub fn range(&self) -> f64 {
        let (l, u) = self.box_bounds();
        u - l
    }

    /// Maps a box coordinate to a valid stored value (clipping, and flooring
    /// to a level index for categorical dimensions).
    pub fn decode(&self, v: f64) -> f64 {
        match &self.kind {
            DimensionKind::Numeric { lower, upper } => v.clamp(*lower, *upper),
            DimensionKind::Categorical { levels } => {
                let top = (levels.len() - 1) as f64;
                v.floor().clamp(0.0, top)
            }
        }
    }

    fn contains(&self, v: f64) -> bool {
        match &self.kind {
            DimensionKind::Numeric { lower, upper } => v >= *lower && v <= *upper,
            DimensionKind::Categorical { levels } => {
                v.fract() == 0.0 && v >= 0.0 && (v as usize) < levels.len()
            }
        }
    }

    fn validate(&self) -> Result<(), SpaceError> {
        match &self.kind {
            DimensionKind::Numeric { lower, upper } => {
                if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
                    return Err(SpaceError::EmptyInterval(self.name.clone()));
                }
            }
            DimensionKind::Categorical { levels } => {
                let distinct: HashSet<&String> = levels.iter().collect();
                if levels.len() < 2 || distinct.len() != levels.len() {
                    return Err(SpaceError::TooFewLevels(self.name.clone()));
                }
            }
        }
        Ok(())
    }
}

/// Condition on the parent's stored value.
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Above(f64),
    AtLeast(f64),
    Below(f64),
    AtMost(f64),
    /// Parent is categorical and its level index is one of these.
    InLevels(Vec<usize>),
}

impl Predicate {
    fn holds(&self, v: f64) -> bool {
        match self {
            Predicate::Above(t) => v > *t,
            Predicate::AtLeast(t) => v >= *t,
            Predicate::Below(t) => v < *t,
            Predicate::AtMost(t) => v <= *t,
            Predicate::InLevels(levels) => levels.iter().any(|&l| l as f64 == v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityRule {
    pub target: usize,
    pub parent: usize,
    pub predicate: Predicate,
}

impl ActivityRule {
    pub fn new(target: usize, parent: usize, predicate: Predicate) -> Self {
        Self {
            target,
            parent,
            predicate,
        }
    }
}

/// A value for every dimension of a space, including inactive ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(values: Vec<f64>) -> Self {
        Point(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for Point {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    dims: Vec<Dimension>,
    rules: Vec<Option<ActivityRule>>,
    /// Dimension indices such that every parent precedes its children.
    order: Vec<usize>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>, rules: Vec<ActivityRule>) -> Result<Self, SpaceError> {
        let mut names = HashSet::new();
        for dim in &dims {
            dim.validate()?;
            if !names.insert(dim.name.as_str()) {
                return Err(SpaceError::DuplicateName(dim.name.clone()));
            }
        }

        let d = dims.len();
        let mut slots: Vec<Option<ActivityRule>> = vec![None; d];
        for rule in rules {
            if rule.target >= d {
                return Err(SpaceError::NoSuchDimension(rule.target));
            }
            if rule.parent >= d {
                return Err(SpaceError::NoSuchDimension(rule.parent));
            }
            if rule.parent == rule.target {
                return Err(SpaceError::SelfReference(rule.target));
            }
            let parent = &dims[rule.parent];
            match (&rule.predicate, &parent.kind) {
                (Predicate::InLevels(levels), DimensionKind::Categorical { levels: declared }) => {
                    if levels.iter().any(|&l| l >= declared.len()) {
                        return Err(SpaceError::BadPredicate {
                            target: rule.target,
                            reason: "level index out of range".into(),
                        });
                    }
                }
                (Predicate::InLevels(_), DimensionKind::Numeric { .. }) => {
                    return Err(SpaceError::BadPredicate {
                        target: rule.target,
                        reason: "level membership on a numeric parent".into(),
                    });
                }
                (_, DimensionKind::Categorical { .. }) => {
                    return Err(SpaceError::BadPredicate {
                        target: rule.target,
                        reason: "threshold comparison on a categorical parent".into(),
                    });
                }
                _ => {}
            }
            if slots[rule.target].is_some() {
                return Err(SpaceError::DuplicateRule(rule.target));
            }
            let target = rule.target;
            slots[target] = Some(rule);
        }

        let order = topological_order(&slots)?;
        Ok(Self {
            dims,
            rules: slots,
            order,
        })
    }

    /// Space without any activity rules.
    pub fn flat(dims: Vec<Dimension>) -> Result<Self, SpaceError> {
        Self::new(dims, Vec::new())
    }

    /// The two-dimensional benchmark space `[0,1]^2` where `x2` is active
    /// iff `x1 > threshold`.
    pub fn benchmark(threshold: f64) -> Self {
        Self::new(
            vec![Dimension::numeric("x1", 0.0, 1.0), Dimension::numeric("x2", 0.0, 1.0)],
            vec![ActivityRule::new(1, 0, Predicate::Above(threshold))],
        )
        .expect("benchmark space is well formed")
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn dim(&self, i: usize) -> &Dimension {
        &self.dims[i]
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn rule(&self, i: usize) -> Option<&ActivityRule> {
        self.rules[i].as_ref()
    }

    /// Whether dimension `i` can ever be inactive.
    pub fn is_conditional(&self, i: usize) -> bool {
        self.rules[i].is_some()
    }

    /// Activity of every dimension of `x`. A dimension is active when it has
    /// no rule, or when its parent is active and the predicate holds on the
    /// parent's stored value.
    pub fn activity(&self, x: &Point) -> Vec<bool> {
        let mut active = vec![true; self.dims.len()];
        for &i in &self.order {
            if let Some(rule) = &self.rules[i] {
                active[i] = active[rule.parent] && rule.predicate.holds(x[rule.parent]);
            }
        }
        active
    }

    pub fn validate(&self, x: &Point) -> Result<(), SpaceError> {
        if x.len() != self.dims.len() {
            return Err(SpaceError::WrongLength {
                expected: self.dims.len(),
                got: x.len(),
            });
        }
        for (dim, &v) in self.dims.iter().zip(x.values()) {
            if !dim.contains(v) {
                return Err(SpaceError::InvalidValue {
                    dim: dim.name.clone(),
                    value: v,
                });
            }
        }
        Ok(())
    }

    pub fn box_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.dims.iter().map(Dimension::box_bounds).unzip()
    }

    /// Turns an arbitrary box coordinate vector into a valid point.
    pub fn decode(&self, v: &[f64]) -> Point {
        Point(self.dims.iter().zip(v).map(|(dim, &x)| dim.decode(x)).collect())
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Point> {
        (0..n)
            .map(|_| {
                Point(
                    self.dims
                        .iter()
                        .map(|dim| sample_value(dim, rng))
                        .collect(),
                )
            })
            .collect()
    }

    /// Latin hypercube design: every numeric dimension has exactly one point
    /// in each of the `n` equal-width strata. Categorical dimensions are drawn
    /// uniformly.
    pub fn sample_lhs<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Point> {
        let mut values = vec![vec![0.0; self.dims.len()]; n];
        for (j, dim) in self.dims.iter().enumerate() {
            match &dim.kind {
                DimensionKind::Numeric { lower, upper } => {
                    let mut strata: Vec<usize> = (0..n).collect();
                    strata.shuffle(rng);
                    let width = (upper - lower) / n as f64;
                    for (row, &s) in values.iter_mut().zip(&strata) {
                        let u: f64 = rng.gen();
                        row[j] = (lower + (s as f64 + u) * width).min(*upper);
                    }
                }
                DimensionKind::Categorical { .. } => {
                    for row in values.iter_mut() {
                        row[j] = sample_value(dim, rng);
                    }
                }
            }
        }
        values.into_iter().map(Point).collect()
    }
}

fn sample_value<R: Rng + ?Sized>(dim: &Dimension, rng: &mut R) -> f64 {
    match &dim.kind {
        DimensionKind::Numeric { lower, upper } => rng.gen_range(*lower..=*upper),
        DimensionKind::Categorical { levels } => rng.gen_range(0..levels.len()) as f64,
    }
}

fn topological_order(rules: &[Option<ActivityRule>]) -> Result<Vec<usize>, SpaceError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Fresh,
        Visiting,
        Done,
    }

    fn visit(
        i: usize,
        rules: &[Option<ActivityRule>],
        marks: &mut [Mark],
        out: &mut Vec<usize>,
    ) -> Result<(), SpaceError> {
        match marks[i] {
            Mark::Done => return Ok(()),
            Mark::Visiting => return Err(SpaceError::CyclicRules(i)),
            Mark::Fresh => {}
        }
        marks[i] = Mark::Visiting;
        if let Some(rule) = &rules[i] {
            visit(rule.parent, rules, marks, out)?;
        }
        marks[i] = Mark::Done;
        out.push(i);
        Ok(())
    }

    let mut marks = vec![Mark::Fresh; rules.len()];
    let mut out = Vec::with_capacity(rules.len());
    for i in 0..rules.len() {
        visit(i, rules, &mut marks, &mut out)?;
    }
    Ok(out)
}
