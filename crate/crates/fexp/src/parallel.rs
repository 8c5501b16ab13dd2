//! Worker-pool setup and row-parallel ODE sampling.
//!
//! Every row of an Euler-integrated batch evolves independently, so the
//! initial states are drawn serially from the seeded stream and only the
//! integration is split across threads. The output is therefore identical to
//! the serial sampler no matter how many workers run.

use fexp_core::diffcore::Tensor;
use fexp_core::expander::{measure, MetricConfig, MetricSnapshot};
use fexp_core::flowmodel::Velocity;
use fexp_core::rng::{derive_seed, tags, Rng};
use fexp_core::sampler::integrate_ode;
use fexp_core::verifier::Verifier;
use rayon::prelude::*;

use crate::error::{AppError, AppResult};

/// Rows handed to one worker at a time.
const CHUNK_ROWS: usize = 256;

/// Environment variable capping the worker count.
pub const THREADS_VAR: &str = "FEXP_THREADS";

/// Parses `FEXP_THREADS`; unset or empty means "let rayon decide".
pub fn thread_cap(value: Option<&str>) -> AppResult<Option<usize>> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(AppError::Usage(format!("{THREADS_VAR} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Configures the global pool once; later calls keep the first setting.
pub fn init_pool(cap: Option<usize>) {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cap {
        builder = builder.num_threads(n);
    }
    // An already-initialized pool (tests, repeated calls) is fine to reuse.
    let _ = builder.build_global();
}

/// Same output as `fexp_core::sampler::sample_ode` with the same arguments.
pub fn sample_ode_par<V: Velocity + Sync + ?Sized>(field: &V, n: usize, steps: usize, seed: u64) -> AppResult<Tensor> {
    if n == 0 || steps == 0 {
        return Err(AppError::Usage("ODE sampling needs at least one sample and one step".into()));
    }
    let d = field.dim();
    let mut x0 = vec![0.0; n * d];
    Rng::stream(seed, tags::ODE).fill_normal(&mut x0);
    let chunks: Vec<Vec<f64>> = x0
        .par_chunks(CHUNK_ROWS * d)
        .map(|rows| {
            let start = Tensor::matrix(rows.len() / d, d, rows.to_vec())?;
            Ok(integrate_ode(field, start, steps)?.into_data())
        })
        .collect::<Result<_, fexp_core::Error>>()?;
    Ok(Tensor::matrix(n, d, chunks.concat())?)
}

/// Parallel counterpart of `fexp_core::expander::snapshot`.
pub fn snapshot_par<V: Velocity + Sync + ?Sized>(
    field: &V,
    verifier: &Verifier,
    cfg: &MetricConfig,
) -> AppResult<(MetricSnapshot, Tensor)> {
    let samples = sample_ode_par(field, cfg.samples, cfg.ode_steps, derive_seed(cfg.seed, tags::METRICS))?;
    Ok((measure(&samples, verifier, cfg)?, samples))
}
