//! Run one configured experiment over N replications and collect the rows.
//!
//! Replication r draws everything from the stream (seed, r), so the
//! scheduler may run replications in any order and on any number of
//! threads; the table is order-normalized before it leaves.  A failing
//! replication becomes an `error` row instead of aborting the run.

use rayon::prelude::*;

use crate::config::{ExperimentConfig, Operation};
use crate::error::{Error, Result};
use crate::hopf::{classify, DEFAULT_RADIUS_LADDER};
use crate::kernel::{builtin_kernel, KernelDescriptor};
use crate::lattice::LatticeSpec;
use crate::lepage::{prepare_series, simulate_field};
use crate::maxima::{
    check_condition, compute_b_tau, compute_k_x, limit_law_test, partial_maxima, LimitLawSpec,
};
use crate::rng::{derive_stream, StreamKind};
use crate::stable::StableIndex;
use crate::table::{ResultRow, ResultTable};

struct RowFactory<'a> {
    experiment: &'a str,
    operation: Operation,
    seed: u64,
    hash: &'a str,
}

impl RowFactory<'_> {
    fn row(&self, replication: u64, statistic: &str, value: f64) -> ResultRow {
        ResultRow {
            experiment: self.experiment.to_string(),
            operation: self.operation,
            replication,
            tau: None,
            raw_value: None,
            normalization: None,
            statistic: statistic.to_string(),
            value,
            seed: self.seed,
            config_hash: self.hash.to_string(),
        }
    }

    fn error_row(&self, replication: u64, err: &Error) -> ResultRow {
        // The message cannot ride along in a numeric column; the exit-code
        // family at least names the kind of failure.
        self.row(replication, "error", f64::from(err.exit_code()))
    }
}

fn install<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            if n == 0 {
                return Err(Error::Config("--jobs must be at least 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Resource(format!("building the thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Execute the configured operation and return its rows, sorted by
/// replication id.  Identical configs produce bit-identical tables.
pub fn run(config: &ExperimentConfig, jobs: Option<usize>) -> Result<ResultTable> {
    let kernel = builtin_kernel(&config.kernel)?;
    let hash = config.hash();
    let factory = RowFactory {
        experiment: &config.experiment,
        operation: config.operation,
        seed: config.seed,
        hash: &hash,
    };
    let mut table = match config.operation {
        Operation::Simulate => run_simulate(config, &kernel, &factory, jobs)?,
        Operation::Classify => run_classify(config, &kernel, &factory)?,
        Operation::Maxima => run_maxima(config, &kernel, &factory, jobs)?,
        Operation::LimitTest => run_limit_test(config, &kernel, &factory, jobs)?,
        Operation::ConditionCheck => run_condition_check(config, &kernel, &factory)?,
        Operation::Report => {
            return Err(Error::Config(
                "operation 'report' reads an existing result table; use the report \
                 subcommand with the table path"
                    .into(),
            ))
        }
    };
    table.normalize_order();
    Ok(table)
}

fn run_simulate(
    config: &ExperimentConfig,
    kernel: &KernelDescriptor,
    factory: &RowFactory,
    jobs: Option<usize>,
) -> Result<ResultTable> {
    let lattice = LatticeSpec::new(kernel.index_dim(), config.level, config.window)?;
    let plan = prepare_series(kernel, &lattice, &config.series, config.seed)?;
    let rows: Vec<Vec<ResultRow>> = install(jobs, || {
        (0..config.replications as u64)
            .into_par_iter()
            .map(|rep| match simulate_field(kernel, &lattice, &plan, config.seed, rep) {
                Ok(sample) => {
                    let max = sample.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    let mut r = factory.row(rep, "max-abs", max);
                    r.raw_value = Some(max);
                    vec![r]
                }
                Err(e) => vec![factory.error_row(rep, &e)],
            })
            .collect()
    })?;
    let mut table = ResultTable::new();
    table.extend(rows.into_iter().flatten());
    Ok(table)
}

fn run_classify(
    config: &ExperimentConfig,
    kernel: &KernelDescriptor,
    factory: &RowFactory,
) -> Result<ResultTable> {
    let mut rng = derive_stream(config.seed, StreamKind::Classify, 0);
    let report = classify(
        kernel,
        config.replications,
        &DEFAULT_RADIUS_LADDER,
        config.resolution,
        config.cell_budget,
        &mut rng,
    )?;
    let mut table = ResultTable::new();
    table.push(factory.row(0, &format!("verdict/{}", report.verdict), 1.0));
    for (i, p) in report.points.iter().enumerate() {
        let mut r = factory.row(i as u64, "slope", p.slope);
        r.raw_value = p.integrals.last().copied();
        table.push(r);
        table.push(factory.row(i as u64, "last-increment", p.last_increment));
    }
    Ok(table)
}

/// Simulate N fields and push two rows per (replication, τ): the maximum
/// normalized by τ^{d/α} and by b_τ.
fn run_maxima(
    config: &ExperimentConfig,
    kernel: &KernelDescriptor,
    factory: &RowFactory,
    jobs: Option<usize>,
) -> Result<ResultTable> {
    let lattice = LatticeSpec::new(kernel.index_dim(), config.level, config.window)?;
    let plan = prepare_series(kernel, &lattice, &config.series, config.seed)?;
    let b: Vec<f64> = config
        .ladder
        .iter()
        .map(|&tau| {
            compute_b_tau(kernel, tau, config.level, config.resolution, config.cell_budget)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<ResultRow>> = install(jobs, || {
        (0..config.replications as u64)
            .into_par_iter()
            .map(|rep| {
                let recs = simulate_field(kernel, &lattice, &plan, config.seed, rep)
                    .and_then(|sample| partial_maxima(&sample, &config.ladder, &b));
                match recs {
                    Ok(recs) => recs
                        .iter()
                        .flat_map(|rec| {
                            let mut power = factory.row(rep, "m-over-power", rec.m_tau / rec.norm_power);
                            power.tau = Some(rec.tau);
                            power.raw_value = Some(rec.m_tau);
                            power.normalization = Some(rec.norm_power);
                            let mut btau = factory.row(rep, "m-over-btau", rec.m_tau / rec.norm_btau);
                            btau.tau = Some(rec.tau);
                            btau.raw_value = Some(rec.m_tau);
                            btau.normalization = Some(rec.norm_btau);
                            [power, btau]
                        })
                        .collect(),
                    Err(e) => vec![factory.error_row(rep, &e)],
                }
            })
            .collect()
    })?;
    let mut table = ResultTable::new();
    table.extend(rows.into_iter().flatten());
    Ok(table)
}

fn run_limit_test(
    config: &ExperimentConfig,
    kernel: &KernelDescriptor,
    factory: &RowFactory,
    jobs: Option<usize>,
) -> Result<ResultTable> {
    let mut table = run_maxima(config, kernel, factory, jobs)?;
    let last_tau = *config.ladder.last().expect("validated nonempty");
    let normalized: Vec<f64> = table
        .rows()
        .iter()
        .filter(|r| {
            r.statistic == "m-over-power" && r.tau == Some(last_tau) && r.value > 0.0
        })
        .map(|r| r.value)
        .collect();
    let k_x = compute_k_x(kernel, config.level, config.cell_budget)?;
    let law = LimitLawSpec::new(StableIndex::new(config.kernel.alpha)?, k_x)?;
    let ks = limit_law_test(&normalized, &law)?;
    let mut summary = |stat: &str, value: f64| {
        let mut r = factory.row(0, stat, value);
        r.tau = Some(last_tau);
        table.push(r);
    };
    summary("k-x", k_x);
    summary("frechet-scale", law.frechet_scale());
    summary("ks-statistic", ks.statistic);
    summary("ks-critical-5pct", ks.critical_5pct);
    summary("ks-critical-1pct", ks.critical_1pct);
    summary("ks-sample-size", ks.sample_size as f64);
    Ok(table)
}

fn run_condition_check(
    config: &ExperimentConfig,
    kernel: &KernelDescriptor,
    factory: &RowFactory,
) -> Result<ResultTable> {
    let mut rng = derive_stream(config.seed, StreamKind::Condition, 0);
    let report = check_condition(
        kernel,
        &config.ladder,
        config.epsilon,
        config.pairs,
        config.level,
        config.resolution,
        config.cell_budget,
        &mut rng,
    )?;
    let mut table = ResultTable::new();
    for e in &report.entries {
        let mut p = factory.row(0, "pair-probability", e.probability);
        p.tau = Some(e.tau);
        p.raw_value = Some(e.probability);
        table.push(p);
        let mut se = factory.row(0, "pair-probability-se", e.se);
        se.tau = Some(e.tau);
        table.push(se);
        let mut b = factory.row(0, "b-tau", e.b_tau);
        b.tau = Some(e.tau);
        table.push(b);
    }
    table.push(factory.row(0, "b-slope", report.b_slope));
    table.push(factory.row(
        0,
        "divergence-threshold",
        report.divergence_threshold,
    ));
    table.push(factory.row(
        0,
        "normalizer-diverges",
        f64::from(u8::from(report.normalizer_diverges)),
    ));
    Ok(table)
}
