//! Friedman rank test, Nemenyi post-hoc comparisons and the studentized
//! range distribution they rely on.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use super::{Situation, Study, StudyRecord};
use crate::error::BenchError;
use crate::kernels::KernelKind;

/// Significance levels at which Nemenyi edges are reported.
pub const SIGNIFICANCE_LEVELS: [f64; 4] = [1e-12, 1e-6, 0.01, 0.1];

/// Ranks in ascending order of value, starting at 1. Ties share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn tie_term(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && sorted[end] == sorted[start] {
            end += 1;
        }
        let t = (end - start) as f64;
        total += t * t * t - t;
        start = end;
    }
    total
}

/// Within-block ranks of `k` treatments over `N` blocks. Lower metrics rank better.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    treatments: Vec<String>,
    blocks: Vec<String>,
    ranks: Vec<Vec<f64>>,
    ties: f64,
}

impl RankTable {
    /// Builds the table from raw metrics. NaN entries (failed runs) take the
    /// worst finite metric of their block.
    pub fn from_metrics(treatments: Vec<String>, rows: Vec<(String, Vec<f64>)>) -> Result<Self, BenchError> {
        let k = treatments.len();
        if k < 2 || rows.len() < 2 {
            return Err(BenchError::DegenerateTable);
        }
        let mut blocks = Vec::with_capacity(rows.len());
        let mut ranks = Vec::with_capacity(rows.len());
        let mut ties = 0.0;
        for (name, metrics) in rows {
            if metrics.len() != k {
                return Err(BenchError::LengthMismatch(metrics.len(), k));
            }
            let worst = metrics
                .iter()
                .copied()
                .filter(|m| !m.is_nan())
                .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.max(m))))
                .unwrap_or(0.0);
            let imputed: Vec<f64> = metrics.iter().map(|&m| if m.is_nan() { worst } else { m }).collect();
            ties += tie_term(&imputed);
            ranks.push(average_ranks(&imputed));
            blocks.push(name);
        }
        Ok(Self {
            treatments,
            blocks,
            ranks,
            ties,
        })
    }

    pub fn treatments(&self) -> &[String] {
        &self.treatments
    }

    pub fn blocks(&self) -> &[String] {
        &self.blocks
    }

    pub fn ranks(&self) -> &[Vec<f64>] {
        &self.ranks
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_treatments(&self) -> usize {
        self.treatments.len()
    }

    pub fn rank_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_treatments()];
        for row in &self.ranks {
            for (s, r) in sums.iter_mut().zip(row) {
                *s += r;
            }
        }
        sums
    }

    pub fn mean_ranks(&self) -> Vec<f64> {
        let n = self.n_blocks() as f64;
        self.rank_sums().into_iter().map(|s| s / n).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FriedmanResult {
    /// Tie-corrected chi-squared statistic.
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

pub fn friedman_test(table: &RankTable) -> FriedmanResult {
    let k = table.n_treatments() as f64;
    let n = table.n_blocks() as f64;
    let df = table.n_treatments() - 1;
    let correction = 1.0 - table.ties / (n * k * (k * k - 1.0));
    if correction <= 1e-12 {
        return FriedmanResult {
            statistic: 0.0,
            df,
            p_value: 1.0,
        };
    }
    let center = n * (k + 1.0) / 2.0;
    let ss: f64 = table.rank_sums().iter().map(|r| (r - center) * (r - center)).sum();
    let statistic = (12.0 / (n * k * (k + 1.0)) * ss / correction).max(0.0);
    let p_value = ChiSquared::new(df as f64)
        .expect("df >= 1")
        .sf(statistic);
    FriedmanResult {
        statistic,
        df,
        p_value,
    }
}

fn upper_normal_tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `P(Q > q)` for the range of `k` independent standard normals
/// (studentized range with infinite degrees of freedom).
///
/// Integrates `k φ(z) Φ(z-q) Σ_j Φ(z)^j (Φ(z)-Φ(z-q))^(k-2-j)`, which equals
/// `1 - P(Q <= q)` without subtracting from one, so small tails keep their
/// relative accuracy.
pub fn studentized_range_sf(q: f64, k: usize) -> f64 {
    assert!(k >= 2, "the range needs at least two groups");
    if q.is_nan() {
        return f64::NAN;
    }
    if q <= 0.0 {
        return 1.0;
    }
    if q.is_infinite() {
        return 0.0;
    }
    let lo = -12.0;
    let hi = (q / 2.0 + 12.0).max(12.0);
    let steps = (((hi - lo) / 0.005).ceil() as usize).next_multiple_of(2);
    let h = (hi - lo) / steps as f64;
    let integrand = |z: f64| {
        let a = 1.0 - upper_normal_tail(z);
        let low = upper_normal_tail(q - z);
        let band = if z > 0.0 {
            upper_normal_tail(z - q) - upper_normal_tail(z)
        } else {
            a - low
        };
        let mut sum = 0.0;
        let mut a_pow = 1.0;
        for j in 0..=k - 2 {
            sum += a_pow * band.powi((k - 2 - j) as i32);
            a_pow *= a;
        }
        normal_pdf(z) * low * sum
    };
    let mut acc = integrand(lo) + integrand(hi);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(lo + i as f64 * h);
    }
    (k as f64 * acc * h / 3.0).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Treatment with the better (lower) mean rank.
    pub from: String,
    pub to: String,
    /// Smallest reported level at which the difference is significant.
    pub level: f64,
}

fn format_level(level: f64) -> String {
    if level >= 1e-3 {
        format!("{level}")
    } else {
        format!("{level:e}")
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {} level={}", self.from, self.to, format_level(self.level))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NemenyiResult {
    pub treatments: Vec<String>,
    pub mean_ranks: Vec<f64>,
    /// Symmetric matrix of pairwise p-values, 1 on the diagonal.
    pub p_values: Vec<Vec<f64>>,
    pub edges: Vec<Edge>,
}

/// All-pairs Nemenyi comparison of mean ranks. A pair gets an edge at the
/// smallest entry of `levels` exceeding its p-value.
pub fn nemenyi_posthoc(table: &RankTable, levels: &[f64]) -> NemenyiResult {
    let k = table.n_treatments();
    let n = table.n_blocks() as f64;
    let mean_ranks = table.mean_ranks();
    let se = ((k * (k + 1)) as f64 / (6.0 * n)).sqrt();
    let mut sorted_levels = levels.to_vec();
    sorted_levels.sort_by(f64::total_cmp);

    let mut p_values = vec![vec![1.0; k]; k];
    let mut edges = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let z = (mean_ranks[i] - mean_ranks[j]).abs() / se;
            let p = studentized_range_sf(z * std::f64::consts::SQRT_2, k);
            p_values[i][j] = p;
            p_values[j][i] = p;
            if let Some(&level) = sorted_levels.iter().find(|&&l| p < l) {
                let (from, to) = if mean_ranks[i] <= mean_ranks[j] { (i, j) } else { (j, i) };
                edges.push(Edge {
                    from: table.treatments()[from].clone(),
                    to: table.treatments()[to].clone(),
                    level,
                });
            }
        }
    }
    NemenyiResult {
        treatments: table.treatments().to_vec(),
        mean_ranks,
        p_values,
        edges,
    }
}

/// Subset of results an analysis ranks over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Overall,
    Situation(Situation),
}

impl Scope {
    pub const ALL: [Scope; 6] = [
        Scope::Overall,
        Scope::Situation(Situation::A),
        Scope::Situation(Situation::B),
        Scope::Situation(Situation::C),
        Scope::Situation(Situation::D),
        Scope::Situation(Situation::E),
    ];

    pub fn contains(self, record: &StudyRecord) -> bool {
        match self {
            Scope::Overall => true,
            Scope::Situation(s) => record.situation == s,
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Overall => f.write_str("overall"),
            Scope::Situation(s) => write!(f, "{s}"),
        }
    }
}

impl FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("overall") {
            Ok(Scope::Overall)
        } else {
            s.parse().map(Scope::Situation).map_err(|_| format!("unknown scope `{s}` (expected overall or A-E)"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub scope: Scope,
    pub table: RankTable,
    pub friedman: FriedmanResult,
    pub nemenyi: NemenyiResult,
}

type BlockKey = (Study, u64, u64, u64, usize);

/// Ranks kernels within each (study, instance, replication) block of the
/// selected records and runs the Friedman and Nemenyi tests.
pub fn analyze(records: &[StudyRecord], scope: Scope) -> Result<Analysis, BenchError> {
    let selected: Vec<&StudyRecord> = records.iter().filter(|r| scope.contains(r)).collect();
    if selected.is_empty() {
        return Err(BenchError::EmptyScope(scope.to_string()));
    }
    let kernels: Vec<KernelKind> = KernelKind::ALL
        .into_iter()
        .filter(|k| selected.iter().any(|r| r.kernel == *k))
        .collect();

    let mut blocks: BTreeMap<BlockKey, (String, Vec<Option<f64>>)> = BTreeMap::new();
    for r in &selected {
        let key = (r.study, r.spec.b.to_bits(), r.spec.c.to_bits(), r.spec.d.to_bits(), r.replication);
        let entry = blocks.entry(key).or_insert_with(|| {
            let name = format!(
                "{} b={} c={} d={} rep={}",
                r.study.name(),
                r.spec.b,
                r.spec.c,
                r.spec.d,
                r.replication
            );
            (name, vec![None; kernels.len()])
        });
        let slot = kernels.iter().position(|k| *k == r.kernel).expect("kernel collected above");
        entry.1[slot] = Some(if r.failed { f64::NAN } else { r.metric });
    }

    let mut rows = Vec::with_capacity(blocks.len());
    for (name, metrics) in blocks.into_values() {
        let mut row = Vec::with_capacity(kernels.len());
        for (k, m) in kernels.iter().zip(metrics) {
            row.push(m.ok_or_else(|| BenchError::IncompleteBlock(name.clone(), k.name().to_string()))?);
        }
        rows.push((name, row));
    }
    let table = RankTable::from_metrics(kernels.iter().map(|k| k.name().to_string()).collect(), rows)?;
    let friedman = friedman_test(&table);
    let nemenyi = nemenyi_posthoc(&table, &SIGNIFICANCE_LEVELS);
    Ok(Analysis {
        scope,
        table,
        friedman,
        nemenyi,
    })
}

/// Writes `scope,kernel,mean_rank,blocks` rows.
pub fn write_mean_ranks<W: Write>(out: W, analyses: &[Analysis]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scope", "kernel", "mean_rank", "blocks"])?;
    for a in analyses {
        for (kernel, rank) in a.nemenyi.treatments.iter().zip(&a.nemenyi.mean_ranks) {
            w.write_record([
                a.scope.to_string(),
                kernel.clone(),
                rank.to_string(),
                a.table.n_blocks().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes a header comment with the Friedman result, then one edge per line.
pub fn write_edges<W: Write>(mut out: W, analyses: &[Analysis]) -> Result<(), BenchError> {
    for a in analyses {
        writeln!(
            out,
            "# scope={} blocks={} friedman_chi2={} df={} p={:e}",
            a.scope,
            a.table.n_blocks(),
            a.friedman.statistic,
            a.friedman.df,
            a.friedman.p_value
        )?;
        for e in &a.nemenyi.edges {
            writeln!(out, "{e}")?;
        }
    }
    Ok(())
}
