//! The five subcommands, written as library functions so tests can drive them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fexp_core::diffcore::Tensor;
use fexp_core::expander::{self, IterateRecord, MetricConfig, Phase, RunFailure};
use fexp_core::flowmodel::{self, VelocityField};
use fexp_core::metrics::{knn_entropy_seeded, validity, vendi, KernelSpec};
use fexp_core::oracle::{
    expand_then_project_discrete, first_variation, is_probability, md_step, run_md, DiscreteMeasure,
    Objective, SupportMask,
};
use fexp_core::rng::{derive_seed, Rng};
use rayon::prelude::*;

use crate::checkpoint;
use crate::config::Config;
use crate::csvio::{read_points, read_table, write_metrics, write_points, write_table};
use crate::error::{AppError, AppResult};
use crate::parallel::snapshot_par;
use crate::plot::{self, ScatterInput};
use crate::settings::{OracleSettings, PlotKind, RunConfig};

/// Reads a config file and applies the `--seed` / `--out` overrides.
pub fn load_run(config: &Path, seed: Option<u64>, out: Option<&Path>) -> AppResult<RunConfig> {
    let mut cfg = Config::load(config)?;
    if let Some(s) = seed {
        cfg.set("seed", s);
    }
    if let Some(o) = out {
        cfg.set("out", o.display());
    }
    Ok(RunConfig::from_config(&cfg)?)
}

fn ensure_dir(dir: &Path) -> AppResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> AppResult<()> {
    std::fs::write(path, text).map_err(|e| AppError::io(path, e))
}

/// Generates the dataset and fits the velocity field, without touching disk.
pub fn train_prior(run: &RunConfig) -> AppResult<(Tensor, Vec<usize>, flowmodel::Pretrained)> {
    let (data, labels) = run.dataset.generate(run.dataset_size, run.dataset_seed)?;
    let trained = flowmodel::pretrain(&data, &run.expander.schedule, &run.train)?;
    Ok((data, labels, trained))
}

/// `fexp pretrain`: writes `data.csv`, `train_loss.csv` and `pretrained.fexp`.
pub fn pretrain(run: &RunConfig) -> AppResult<VelocityField> {
    ensure_dir(&run.out)?;
    let (data, labels, trained) = train_prior(run)?;
    write_points(&run.out.join("data.csv"), &data, Some(&labels))?;
    write_table(
        &run.out.join("train_loss.csv"),
        &["epoch", "loss"],
        trained.epoch_losses.iter().enumerate().map(|(e, l)| vec![(e + 1).to_string(), l.to_string()]),
    )?;
    checkpoint::save(&trained.field, &run.out.join("pretrained.fexp"))?;
    Ok(trained.field)
}

/// The outcome of an expansion run.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub field: VelocityField,
    pub records: Vec<IterateRecord>,
    /// ODE samples of the final iterate used for its metrics.
    pub samples: Tensor,
}

fn is_final(run: &RunConfig, record: &IterateRecord) -> bool {
    let last = run.expander.mode.phases().last().copied();
    record.k == run.expander.iterations && Some(record.phase) == last
}

fn measured(run: &RunConfig, record: &IterateRecord) -> bool {
    record.phase == Phase::Pre
        || is_final(run, record)
        || (run.metrics_every > 0 && record.k.is_multiple_of(run.metrics_every) && Some(record.phase) == run.expander.mode.phases().last().copied())
}

pub fn checkpoint_name(record: &IterateRecord) -> String {
    format!("iterate_{:02}_{}.fexp", record.k, record.phase.name())
}

/// Runs the outer loop from `pre`. With `out` set, every iterate is
/// checkpointed there; metrics follow `metrics.every`.
pub fn expand_from(pre: &VelocityField, run: &RunConfig, out: Option<&Path>) -> AppResult<Expansion> {
    let start = Instant::now();
    let mut io_error: Option<AppError> = None;
    let mut last_samples: Option<Tensor> = None;
    let result = expander::run(pre, &run.expander, &mut |record, field| {
        if let Some(dir) = out {
            let name = checkpoint_name(record);
            if let Err(e) = checkpoint::save(field, &dir.join(&name)) {
                io_error = Some(e);
                return Err(fexp_core::Error::Capability("checkpoint write failed".into()));
            }
            record.checkpoint = Some(name);
        }
        if measured(run, record) {
            let (snap, samples) = snapshot_par(field, &run.scoring_verifier, &run.metrics).map_err(|e| match e {
                AppError::Numerical(inner) => inner,
                other => fexp_core::Error::Domain(other.to_string()),
            })?;
            record.snapshot = Some(snap);
            last_samples = Some(samples);
        }
        record.wall_seconds = Some(start.elapsed().as_secs_f64());
        Ok(())
    });
    match result {
        Ok(done) => Ok(Expansion {
            field: done.field,
            records: done.records,
            samples: last_samples.expect("the final iterate is always measured"),
        }),
        Err(RunFailure { error, records, .. }) => {
            if let Some(dir) = out {
                write_metrics(&dir.join("metrics.csv"), &records)?;
            }
            Err(io_error.unwrap_or(AppError::Numerical(error)))
        }
    }
}

/// `fexp expand`: loads (or trains) the prior, then writes iterate
/// checkpoints, `metrics.csv` and `samples.csv` (final iterate).
pub fn expand(run: &RunConfig) -> AppResult<Expansion> {
    ensure_dir(&run.out)?;
    let pre = match &run.pretrained {
        Some(path) => checkpoint::load(path)?,
        None => pretrain(run)?,
    };
    if pre.dim() != run.dataset.dim() {
        return Err(AppError::Usage(format!(
            "pretrained field has dimension {} but the dataset has {}",
            pre.dim(),
            run.dataset.dim()
        )));
    }
    let expansion = expand_from(&pre, run, Some(&run.out))?;
    write_metrics(&run.out.join("metrics.csv"), &expansion.records)?;
    write_points(&run.out.join("samples.csv"), &expansion.samples, None)?;
    Ok(expansion)
}

/// Outcome of one oracle check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub checks: Vec<Check>,
    /// (k, gap, bound) of the first rate instance, k = 0..=K.
    pub trace: Vec<(usize, f64, f64)>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        s
    }
}

/// Random positive weights spanning several orders of magnitude.
fn random_measure(rng: &mut Rng, m: usize) -> AppResult<DiscreteMeasure> {
    Ok(DiscreteMeasure::from_log_weights((0..m).map(|_| 3.0 * rng.normal()).collect())?)
}

fn random_mask(rng: &mut Rng, m: usize) -> AppResult<SupportMask> {
    let mut cells: Vec<bool> = (0..m).map(|_| rng.uniform() < 0.6).collect();
    let keep = rng.below(m);
    cells[keep] = true;
    Ok(SupportMask::new(cells)?)
}

fn tv(a: &DiscreteMeasure, b: &DiscreteMeasure) -> AppResult<f64> {
    Ok(a.total_variation(b)?)
}

/// Expand-then-project against the constrained step on random instances.
fn equivalence_sweep(o: &OracleSettings, seed: u64) -> AppResult<Check> {
    let worst = (0..o.instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::new(derive_seed(seed, i as u64));
            let m = 2 + rng.below(o.max_cells - 1);
            let q = random_measure(&mut rng, m)?;
            let grad: Vec<f64> = (0..m).map(|_| 3.0 * rng.normal()).collect();
            let gamma = rng.uniform_in(0.01, 2.0);
            let mask = random_mask(&mut rng, m)?;
            let a = md_step(&q, &grad, gamma, &mask)?;
            let b = expand_then_project_discrete(&q, &grad, gamma, &mask)?;
            if !(is_probability(&a) && is_probability(&b)) {
                return Ok(f64::INFINITY);
            }
            tv(&a, &b)
        })
        .collect::<AppResult<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(Check {
        name: "expand-then-project equals the constrained step",
        passed: worst < 1e-12,
        detail: format!("max TV {worst:.3e} over {} instances (tolerance 1e-12)", o.instances),
    })
}

/// Pure-entropy runs: one-step convergence at γ = 1 and the gap bound at `o.gamma`.
fn rate_sweep(o: &OracleSettings, seed: u64) -> AppResult<(Check, Check, Vec<(usize, f64, f64)>)> {
    let runs = (0..o.rate_instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::new(derive_seed(seed ^ 0x5241_5445, i as u64));
            let m = 2 + rng.below(o.max_cells - 1);
            let mask = random_mask(&mut rng, m)?;
            let q0 = random_measure(&mut rng, m)?;
            let unit = run_md(&q0, &Objective::Entropy, |_| 1.0, &mask, 1)?;
            let slow = run_md(&q0, &Objective::Entropy, |_| o.gamma, &mask, o.iterations)?;
            Ok((unit.gaps[1].abs(), slow))
        })
        .collect::<AppResult<Vec<_>>>()?;
    let worst_one_step = runs.iter().map(|r| r.0).fold(0.0, f64::max);
    let violations = runs.iter().filter(|r| r.1.first_violation(1e-12).is_some()).count();
    let trace = runs
        .first()
        .map(|(_, run)| run.gaps.iter().zip(&run.bounds).enumerate().map(|(k, (g, b))| (k, *g, *b)).collect())
        .unwrap_or_default();
    Ok((
        Check {
            name: "unit step size converges in one step",
            passed: worst_one_step < 1e-12,
            detail: format!("max gap(1) {worst_one_step:.3e} over {} instances", o.rate_instances),
        },
        Check {
            name: "gap stays below KL(q*|q0)/(gamma k)",
            passed: violations == 0,
            detail: format!("{violations} of {} instances violate the bound for some k <= {} at gamma = {}", o.rate_instances, o.iterations, o.gamma),
        },
        trace,
    ))
}

/// Iterating the KL-anchored step converges to q* ∝ p^{α/(1+α)}.
fn fixed_point_sweep(o: &OracleSettings, seed: u64) -> AppResult<Check> {
    let mut worst = 0.0f64;
    for (j, &alpha) in o.alphas.iter().enumerate() {
        let mut rng = Rng::new(derive_seed(seed ^ 0x4649_5850, j as u64));
        let m = 2 + rng.below(o.max_cells.min(100) - 1);
        let reference = random_measure(&mut rng, m)?;
        let beta = alpha / (1.0 + alpha);
        let target = DiscreteMeasure::from_log_weights(reference.log_weights().iter().map(|l| beta * l).collect())?;
        let objective = Objective::EntropyMinusKl { alpha, reference };
        let mask = SupportMask::full(m);
        // the anchored objective contracts by 1 − γ(1+α) per step
        let gamma = 0.5 / (1.0 + alpha);
        let mut q = DiscreteMeasure::uniform(m)?;
        for _ in 0..o.fixed_point_iterations {
            let grad = first_variation(&objective, &q, &mask)?;
            q = md_step(&q, &grad, gamma, &mask)?;
        }
        worst = worst.max(tv(&q, &target)?);
    }
    Ok(Check {
        name: "anchored iteration reaches p^(alpha/(1+alpha))",
        passed: worst < 1e-8,
        detail: format!("max TV {worst:.3e} over alphas {:?} after {} steps", o.alphas, o.fixed_point_iterations),
    })
}

/// Runs every discrete check.
pub fn oracle_report(o: &OracleSettings, seed: u64) -> AppResult<OracleReport> {
    let equivalence = equivalence_sweep(o, seed)?;
    let (one_step, bound, trace) = rate_sweep(o, seed)?;
    let fixed = fixed_point_sweep(o, seed)?;
    Ok(OracleReport { checks: vec![equivalence, one_step, bound, fixed], trace })
}

/// `fexp oracle`: writes `oracle.csv` and `oracle_summary.txt`; fails with a
/// check error when any check does not hold.
pub fn oracle(run: &RunConfig) -> AppResult<OracleReport> {
    ensure_dir(&run.out)?;
    let report = oracle_report(&run.oracle, run.seed)?;
    write_table(
        &run.out.join("oracle.csv"),
        &["k", "gap", "bound"],
        report.trace.iter().map(|(k, g, b)| vec![k.to_string(), g.to_string(), b.to_string()]),
    )?;
    write_text(&run.out.join("oracle_summary.txt"), &report.summary())?;
    if !report.passed() {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        return Err(AppError::CheckFailed(failed.join("; ")));
    }
    Ok(report)
}

/// Metrics of a standalone sample file; `None` marks a skipped metric.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub n: usize,
    pub entropy: Option<f64>,
    pub validity: Option<f64>,
    pub vendi: Option<f64>,
}

pub fn evaluate(samples: &Tensor, run: &RunConfig) -> AppResult<EvalResult> {
    let e = &run.eval;
    let n = samples.rows();
    let entropy = if e.entropy && n > e.knn_k { Some(knn_entropy_seeded(samples, e.knn_k, run.seed)?) } else { None };
    let vendi = if e.vendi {
        let m = n.min(e.vendi_points.max(1));
        let head = Tensor::matrix(m, samples.cols(), samples.data()[..m * samples.cols()].to_vec())?;
        Some(vendi(&head, &KernelSpec::median_rbf(&head))?)
    } else {
        None
    };
    Ok(EvalResult { n, entropy, validity: e.validity.then(|| validity(samples, &run.scoring_verifier)), vendi })
}

/// `fexp eval`: reads `eval.samples` and writes `eval.csv`.
pub fn eval(run: &RunConfig) -> AppResult<EvalResult> {
    let path = run.eval.samples.as_ref().ok_or_else(|| AppError::Usage("eval needs `eval.samples = PATH`".into()))?;
    let (samples, _) = read_points(path)?;
    if run.eval.validity && samples.cols() != run.dataset.dim() {
        return Err(AppError::Usage(format!(
            "{}: {} columns, but the verifier acts on dimension {}",
            path.display(),
            samples.cols(),
            run.dataset.dim()
        )));
    }
    let result = evaluate(&samples, run)?;
    ensure_dir(&run.out)?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    write_table(
        &run.out.join("eval.csv"),
        &["n", "entropy", "validity", "vendi"],
        [vec![result.n.to_string(), cell(result.entropy), cell(result.validity), cell(result.vendi)]],
    )?;
    Ok(result)
}

/// `fexp plot`: renders the configured SVG and returns its path.
pub fn plot(run: &RunConfig) -> AppResult<PathBuf> {
    let spec = run.plot.as_ref().ok_or_else(|| AppError::Usage("plot needs `plot.kind` and `plot.inputs`".into()))?;
    let svg = match spec.kind {
        PlotKind::Scatter2d => {
            let (points, labels) = read_points(&spec.inputs[0])?;
            if points.cols() != 2 {
                return Err(AppError::Usage(format!("scatter2d needs 2 columns, {} has {}", spec.inputs[0].display(), points.cols())));
            }
            let pts: Vec<[f64; 2]> = (0..points.rows()).map(|i| [points.row(i)[0], points.row(i)[1]]).collect();
            let input = ScatterInput {
                points: &pts,
                labels: labels.as_deref(),
                verifier: spec.overlay_verifier.then_some(&run.scoring_verifier),
            };
            plot::scatter2d(&input, &spec.title, &spec.x_label, &spec.y_label)
        }
        PlotKind::Histogram1d => {
            let path = &spec.inputs[0];
            let table = read_table(path)?;
            if table.rows.is_empty() {
                return Err(AppError::Usage(format!("{}: no rows to plot", path.display())));
            }
            let column = spec.column.as_deref().unwrap_or("x1");
            let values = table.floats(path, column)?;
            plot::histogram1d(&values, spec.bins, &spec.title, &spec.x_label, &spec.y_label)
        }
        PlotKind::Curve => {
            if spec.inputs.len() < 2 {
                return Err(AppError::Usage("a curve with a confidence band needs at least 2 seed runs".into()));
            }
            let column = spec.column.as_deref().unwrap_or("entropy");
            let mut xs: Option<Vec<f64>> = None;
            let mut runs = Vec::new();
            for path in &spec.inputs {
                let (k, v) = iteration_series(path, column)?;
                match &xs {
                    None => xs = Some(k),
                    Some(prev) if *prev != k => {
                        return Err(AppError::Usage(format!("{}: iterations differ from the first input", path.display())))
                    }
                    Some(_) => {}
                }
                runs.push(v);
            }
            let points = plot::band(&xs.unwrap_or_default(), &runs);
            plot::curve(&points, &spec.title, &spec.x_label, &spec.y_label)
        }
    };
    ensure_dir(&run.out)?;
    let out = run.out.join(&spec.output);
    write_text(&out, &svg)?;
    Ok(out)
}

/// Last measured value of `column` in each outer iteration of a metrics CSV.
fn iteration_series(path: &Path, column: &str) -> AppResult<(Vec<f64>, Vec<f64>)> {
    let table = read_table(path)?;
    let ks = table.floats(path, "k")?;
    let vals = table.floats(path, column)?;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k, v) in ks.into_iter().zip(vals) {
        if v.is_nan() {
            continue;
        }
        match out.last_mut() {
            Some(last) if last.0 == k => last.1 = v,
            _ => out.push((k, v)),
        }
    }
    if out.is_empty() {
        return Err(AppError::Usage(format!("{}: no measured values in `{column}`", path.display())));
    }
    Ok(out.into_iter().unzip())
}

/// Convenience for callers comparing runs: the pretrained-model metrics.
pub fn measure_field(field: &VelocityField, run: &RunConfig, metrics: &MetricConfig) -> AppResult<(expander::MetricSnapshot, Tensor)> {
    snapshot_par(field, &run.scoring_verifier, metrics)
}
