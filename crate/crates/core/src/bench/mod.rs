//! Benchmark harness: the two-dimensional hierarchical test function, its
//! situation taxonomy, the model-quality and optimization studies, and the
//! rank-based analysis of their results.

pub mod stats;
pub mod study;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::BenchError;
use crate::kernels::KernelKind;
use crate::space::{Point, SearchSpace};

pub use stats::{
    analyze, average_ranks, friedman_test, nemenyi_posthoc, studentized_range_sf, write_edges, write_mean_ranks,
    Analysis, Edge, FriedmanResult, NemenyiResult, RankTable, Scope, SIGNIFICANCE_LEVELS,
};
pub use study::{job_seed, run_model_quality, run_smbo_study, StudyConfig};

pub const GRID_B: [f64; 2] = [0.0, 0.1];
pub const GRID_C: [f64; 4] = [0.2, 0.4, 0.6, 0.8];
pub const GRID_D: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Constants of the test function
/// `f(x) = (x1 - d)² + [x1 > c]·((x2 - 0.5)² + b)` on `[0,1]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunctionSpec {
    /// Jump height at the activation threshold.
    pub b: f64,
    /// Activation threshold for `x2`.
    pub c: f64,
    /// Location of the optimum along `x1`.
    pub d: f64,
}

impl TestFunctionSpec {
    pub fn new(b: f64, c: f64, d: f64) -> Self {
        Self { b, c, d }
    }

    /// The search space matching this instance.
    pub fn space(&self) -> SearchSpace {
        SearchSpace::benchmark(self.c)
    }
}

/// All combinations of the given constants, ordered by `b`, then `c`, then `d`.
pub fn grid(bs: &[f64], cs: &[f64], ds: &[f64]) -> Vec<TestFunctionSpec> {
    let mut out = Vec::with_capacity(bs.len() * cs.len() * ds.len());
    for &b in bs {
        for &c in cs {
            for &d in ds {
                out.push(TestFunctionSpec::new(b, c, d));
            }
        }
    }
    out
}

/// The 40-instance reference grid.
pub fn reference_grid() -> Vec<TestFunctionSpec> {
    grid(&GRID_B, &GRID_C, &GRID_D)
}

pub fn test_function(spec: &TestFunctionSpec, x: &Point) -> Result<f64, BenchError> {
    if x.len() != 2 || x.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(BenchError::OutOfDomain(x.values().to_vec()));
    }
    let (x1, x2) = (x[0], x[1]);
    let base = (x1 - spec.d) * (x1 - spec.d);
    Ok(if x1 <= spec.c {
        base
    } else {
        base + (x2 - 0.5) * (x2 - 0.5) + spec.b
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Situation {
    A,
    B,
    C,
    D,
    E,
}

impl Situation {
    pub const ALL: [Situation; 5] = [Situation::A, Situation::B, Situation::C, Situation::D, Situation::E];
}

impl fmt::Display for Situation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Situation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Situation::A),
            "B" => Ok(Situation::B),
            "C" => Ok(Situation::C),
            "D" => Ok(Situation::D),
            "E" => Ok(Situation::E),
            other => Err(format!("unknown situation `{other}`")),
        }
    }
}

/// A: optimum in the inactive region, no jump. B: inactive region, jump.
/// C: active region, no jump. D: active region, jump smaller than the
/// boundary value `(c-d)²`. E: jump larger than `(c-d)²`, so the optimum sits
/// at the threshold.
pub fn classify_situation(spec: &TestFunctionSpec) -> Result<Situation, BenchError> {
    let TestFunctionSpec { b, c, d } = *spec;
    let unclassifiable = || BenchError::Unclassifiable { b, c, d };
    if b < 0.0 || !b.is_finite() {
        return Err(unclassifiable());
    }
    if d < c {
        return Ok(if b == 0.0 { Situation::A } else { Situation::B });
    }
    if d == c {
        return Err(unclassifiable());
    }
    let edge = (c - d) * (c - d);
    if b == 0.0 {
        Ok(Situation::C)
    } else if b < edge {
        Ok(Situation::D)
    } else if b > edge {
        Ok(Situation::E)
    } else {
        Err(unclassifiable())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimum {
    pub value: f64,
    pub x1: f64,
    /// `None` when every `x2` is optimal.
    pub x2: Option<f64>,
}

pub fn global_optimum(spec: &TestFunctionSpec) -> Result<Optimum, BenchError> {
    let TestFunctionSpec { b, c, d } = *spec;
    Ok(match classify_situation(spec)? {
        Situation::A | Situation::B => Optimum {
            value: 0.0,
            x1: d,
            x2: None,
        },
        Situation::C => Optimum {
            value: 0.0,
            x1: d,
            x2: Some(0.5),
        },
        Situation::D => Optimum {
            value: b,
            x1: d,
            x2: Some(0.5),
        },
        Situation::E => Optimum {
            value: (c - d) * (c - d),
            x1: c,
            x2: None,
        },
    })
}

pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64, BenchError> {
    if predictions.len() != truths.len() {
        return Err(BenchError::LengthMismatch(predictions.len(), truths.len()));
    }
    if predictions.is_empty() {
        return Err(BenchError::Empty);
    }
    let sum: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sum / predictions.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    ModelQuality,
    Smbo,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::ModelQuality => "model_quality",
            Study::Smbo => "smbo",
        }
    }
}

/// One (study, kernel, instance, replication) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRecord {
    pub study: Study,
    pub kernel: KernelKind,
    pub spec: TestFunctionSpec,
    pub situation: Situation,
    pub replication: usize,
    /// RMSE or suboptimality; NaN when `failed`.
    pub metric: f64,
    pub seed: u64,
    pub wall_time_s: Option<f64>,
    pub failed: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    study: Study,
    kernel: String,
    b: f64,
    c: f64,
    d: f64,
    situation: Situation,
    replication: usize,
    metric: f64,
    seed: u64,
    wall_time_s: Option<f64>,
    failed: bool,
}

pub const RESULTS_HEADER: &str = "study,kernel,b,c,d,situation,replication,metric,seed,wall_time_s,failed";

pub fn write_records<W: Write>(out: W, records: &[StudyRecord]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow {
            study: r.study,
            kernel: r.kernel.name().to_string(),
            b: r.spec.b,
            c: r.spec.c,
            d: r.spec.d,
            situation: r.situation,
            replication: r.replication,
            metric: r.metric,
            seed: r.seed,
            wall_time_s: r.wall_time_s,
            failed: r.failed,
        })?;
    }
    if records.is_empty() {
        w.write_record(RESULTS_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<StudyRecord>, BenchError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != RESULTS_HEADER {
        return Err(BenchError::BadHeader(header));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row?;
        out.push(StudyRecord {
            study: row.study,
            kernel: row.kernel.parse()?,
            spec: TestFunctionSpec::new(row.b, row.c, row.d),
            situation: row.situation,
            replication: row.replication,
            metric: row.metric,
            seed: row.seed,
            wall_time_s: row.wall_time_s,
            failed: row.failed,
        });
    }
    Ok(out)
}
