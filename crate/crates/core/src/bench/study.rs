//! Replicated model-quality and optimization studies over a grid of test
//! function instances.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{classify_situation, global_optimum, reference_grid, rmse, test_function, Situation, Study, StudyRecord, TestFunctionSpec};
use crate::error::BenchError;
use crate::gp::{FitConfig, KrigingModel};
use crate::kernels::KernelKind;
use crate::optim::DeConfig;
use crate::smbo::{smbo_run, SmboConfig};
use crate::space::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub specs: Vec<TestFunctionSpec>,
    pub kernels: Vec<KernelKind>,
    pub replications: usize,
    pub seed: u64,
    /// Worker threads; 0 lets rayon decide.
    pub workers: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub init_size: usize,
    pub budget: usize,
    pub infill_budget: usize,
    pub fit: FitConfig,
    pub de: DeConfig,
    pub record_timing: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        let smbo = SmboConfig::default();
        Self {
            specs: reference_grid(),
            kernels: KernelKind::ALL.to_vec(),
            replications: 20,
            seed: 1,
            workers: 0,
            train_size: 10,
            test_size: 1000,
            init_size: smbo.init_size,
            budget: smbo.total_budget,
            infill_budget: smbo.infill_budget,
            fit: smbo.fit,
            de: smbo.de,
            record_timing: false,
        }
    }
}

impl StudyConfig {
    fn smbo(&self, kernel: KernelKind) -> SmboConfig {
        SmboConfig {
            init_size: self.init_size,
            total_budget: self.budget,
            kernel,
            fit: self.fit,
            infill_budget: self.infill_budget,
            de: self.de.clone(),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one (study, instance, replication). Every kernel in the same
/// replication receives the same seed.
pub fn job_seed(master: u64, study: Study, spec: &TestFunctionSpec, replication: usize) -> u64 {
    let tag = match study {
        Study::ModelQuality => 1,
        Study::Smbo => 2,
    };
    [tag, spec.b.to_bits(), spec.c.to_bits(), spec.d.to_bits(), replication as u64]
        .into_iter()
        .fold(splitmix64(master), |h, w| splitmix64(h ^ w))
}

struct Job {
    spec: TestFunctionSpec,
    situation: Situation,
    replication: usize,
    kernel: KernelKind,
    seed: u64,
}

fn jobs(config: &StudyConfig, study: Study) -> Result<Vec<Job>, BenchError> {
    if config.kernels.is_empty() || config.specs.is_empty() || config.replications == 0 {
        return Err(BenchError::Empty);
    }
    let mut out = Vec::with_capacity(config.specs.len() * config.replications * config.kernels.len());
    for spec in &config.specs {
        let situation = classify_situation(spec)?;
        for replication in 0..config.replications {
            let seed = job_seed(config.seed, study, spec, replication);
            for &kernel in &config.kernels {
                out.push(Job {
                    spec: *spec,
                    situation,
                    replication,
                    kernel,
                    seed,
                });
            }
        }
    }
    Ok(out)
}

fn execute<F>(config: &StudyConfig, study: Study, work: F) -> Result<Vec<StudyRecord>, BenchError>
where
    F: Fn(&Job, &mut ChaCha8Rng) -> Option<f64> + Sync,
{
    let jobs = jobs(config, study)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| BenchError::ThreadPool(e.to_string()))?;
    let records = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let start = Instant::now();
                let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
                let metric = work(job, &mut rng);
                StudyRecord {
                    study,
                    kernel: job.kernel,
                    spec: job.spec,
                    situation: job.situation,
                    replication: job.replication,
                    metric: metric.unwrap_or(f64::NAN),
                    seed: job.seed,
                    wall_time_s: config.record_timing.then(|| start.elapsed().as_secs_f64()),
                    failed: metric.is_none(),
                }
            })
            .collect()
    });
    Ok(records)
}

/// Fits each kernel to `train_size` uniform points and records its RMSE on
/// `test_size` fresh uniform points.
pub fn run_model_quality(config: &StudyConfig) -> Result<Vec<StudyRecord>, BenchError> {
    execute(config, Study::ModelQuality, |job, rng| {
        let space = job.spec.space();
        let train = space.sample_uniform(config.train_size, rng);
        let test = space.sample_uniform(config.test_size, rng);
        let f = |x: &Point| test_function(&job.spec, x).expect("samples lie in the unit square");
        let y: Vec<f64> = train.iter().map(f).collect();
        let truth: Vec<f64> = test.iter().map(f).collect();
        match KrigingModel::fit(&space, train, y, job.kernel, &config.fit) {
            Ok(model) => {
                let pred: Vec<f64> = test.iter().map(|x| model.predict_mean(x)).collect();
                rmse(&pred, &truth).ok()
            }
            Err(e) => {
                log::warn!("{} fit failed on {:?} rep {}: {e}", job.kernel, job.spec, job.replication);
                None
            }
        }
    })
}

/// Runs SMBO with each kernel and records the suboptimality of the best
/// evaluated value.
pub fn run_smbo_study(config: &StudyConfig) -> Result<Vec<StudyRecord>, BenchError> {
    let optima = config
        .specs
        .iter()
        .map(global_optimum)
        .collect::<Result<Vec<_>, _>>()?;
    execute(config, Study::Smbo, |job, rng| {
        let space = job.spec.space();
        let f_star = optima[config.specs.iter().position(|s| *s == job.spec).expect("job spec from config")].value;
        let objective = |x: &Point| test_function(&job.spec, x).expect("proposals lie in the unit square");
        match smbo_run(objective, &space, &config.smbo(job.kernel), rng) {
            Ok(history) => Some(history.best_value() - f_star),
            Err(e) => {
                log::warn!("{} smbo failed on {:?} rep {}: {e}", job.kernel, job.spec, job.replication);
                None
            }
        }
    })
}
