//! Random-MPC benchmark suites and their statistics.
//!
//! A suite draws `instances_per_scale` random instances at every scale
//! `n = m`, condenses them at `x0`, and solves each one once per order `alpha`
//! from the same `mu0 = 0`. Iteration counts are deterministic; wall times are
//! not and are only reported.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::dual_pgm::{check_bounds, dual_objective, solve, QpProblem, SolverOptions, StopReason};
use crate::error::{Error, Result};
use crate::mpc_condense::condense;
use crate::oracle::reference_solution;
use crate::param_table::{envelope, LookupTable};
use crate::precondition::{recover, transform};
use crate::randgen::{random_instance, InstanceConfig};

/// Mean, sample standard deviation and paired t statistic of differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedT {
    pub m: usize,
    pub mean: f64,
    pub sd: f64,
    pub t: f64,
}

/// `t = mean / (sd / sqrt(M))` under the null hypothesis of zero mean difference.
pub fn paired_t(differences: &[f64]) -> Result<PairedT> {
    let m = differences.len();
    if m < 2 {
        return Err(Error::Statistics(format!("paired t needs at least 2 differences, got {m}")));
    }
    let mf = m as f64;
    let mean = differences.iter().sum::<f64>() / mf;
    let var = differences.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (mf - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(Error::Statistics("degenerate sample: standard deviation is zero".into()));
    }
    Ok(PairedT { m, mean, sd, t: mean / (sd / mf.sqrt()) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    pub errors: DVector<f64>,
    pub max_abs: f64,
}

/// Componentwise `xi - reference` and its infinity norm.
pub fn error_profile(xi: &DVector<f64>, reference: &DVector<f64>) -> Result<ErrorProfile> {
    if xi.len() != reference.len() {
        return Err(Error::DimensionMismatch { what: "reference", expected: xi.len(), got: reference.len() });
    }
    let errors = xi - reference;
    let max_abs = errors.amax();
    Ok(ErrorProfile { errors, max_abs })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub instance_id: String,
    pub seed: u64,
    pub scale: usize,
    pub alpha: u32,
    pub iterations: usize,
    pub elapsed_s: f64,
    pub stop_reason: StopReason,
    /// Infinity-norm error against the reference solution, when one was computed.
    pub primal_error: Option<f64>,
    /// Iterations whose primal iterate broke the worst-case bound.
    pub bound_violations: Option<usize>,
    /// Iterations whose dual gap broke the worst-case bound.
    pub dual_bound_violations: Option<usize>,
    pub reference_exact: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceRow {
    pub instance_id: String,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub n_v: usize,
    pub n_c: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub scale: usize,
    pub alpha: u32,
    pub count: usize,
    pub ave_iter: f64,
    pub ave_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TTestRow {
    pub scale: usize,
    pub baseline_alpha: u32,
    pub alpha: u32,
    pub metric: &'static str,
    /// `None` when the differences are degenerate.
    pub result: Option<PairedT>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorProfileRow {
    pub instance_id: String,
    pub alpha: u32,
    pub component: usize,
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub scales: Vec<usize>,
    pub alphas: Vec<u32>,
    pub instances_per_scale: usize,
    pub seed: u64,
    pub horizon: usize,
    pub stop_tol: f64,
    pub max_iters: usize,
    pub precondition: bool,
    /// Compute a reference per instance for errors and bound checks.
    pub reference: bool,
    /// Worker threads; 1 runs sequentially.
    pub jobs: usize,
    /// Terminal rows on `x_N`; off by default so sizes are `2N(n + m)` rows.
    pub terminal_rows: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            scales: vec![2, 4, 6, 8],
            alphas: vec![2, 20],
            instances_per_scale: 100,
            seed: 0,
            horizon: 5,
            stop_tol: 1e-3,
            max_iters: 100_000,
            precondition: false,
            reference: true,
            jobs: 1,
            terminal_rows: false,
        }
    }
}

impl SuiteConfig {
    fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.scales.contains(&0) {
            return Err(Error::domain("scales must be a non-empty list of positive sizes"));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|&a| a < 2) {
            return Err(Error::domain("alphas must be a non-empty list of orders >= 2"));
        }
        if self.instances_per_scale < 1 {
            return Err(Error::domain("instances per scale must be >= 1"));
        }
        if self.jobs < 1 {
            return Err(Error::domain("jobs must be >= 1"));
        }
        Ok(())
    }

    /// Stream index of instance `index` at `scale`.
    pub fn stream(scale: usize, index: usize) -> u64 {
        ((scale as u64) << 32) | index as u64
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub config_seed: u64,
    pub instances: Vec<InstanceRow>,
    pub records: Vec<BenchRecord>,
    pub aggregates: Vec<Aggregate>,
    pub ttests: Vec<TTestRow>,
    pub error_profiles: Vec<ErrorProfileRow>,
}

struct InstanceOutcome {
    row: InstanceRow,
    records: Vec<BenchRecord>,
    profile: Vec<ErrorProfileRow>,
}

fn run_instance(
    cfg: &SuiteConfig,
    tables: &BTreeMap<u32, Arc<LookupTable>>,
    scale: usize,
    index: usize,
) -> Result<InstanceOutcome> {
    let mut icfg = InstanceConfig::new(scale, scale, cfg.seed);
    icfg.instance = SuiteConfig::stream(scale, index);
    icfg.horizon = cfg.horizon;
    icfg.terminal_rows = cfg.terminal_rows;
    let inst = random_instance(&icfg)?;
    let instance_id = format!("n{scale}-{index:04}");
    let qp = condense(&inst.spec, &inst.x0)?;
    let problem = qp.problem;
    let reference = if cfg.reference { Some(reference_solution(&problem)?) } else { None };
    let dual_opt = match &reference {
        Some(r) => Some(dual_objective(&problem, &r.mu)?),
        None => None,
    };
    let transformed = if cfg.precondition { Some(transform(&problem)?) } else { None };
    let mu0 = DVector::zeros(problem.n_c());

    let mut records = Vec::with_capacity(cfg.alphas.len());
    let mut profile = Vec::new();
    for &alpha in &cfg.alphas {
        let table = &tables[&alpha];
        let opts = SolverOptions {
            alpha,
            stop_tol: cfg.stop_tol,
            max_iters: cfg.max_iters,
            record_history: false,
            mu0: Some(mu0.clone()),
        };
        let (xi, iterations, elapsed_s, stop_reason) = match &transformed {
            Some((tp, factor)) => {
                let r = solve(tp, table, &opts)?;
                (recover(factor, &r.xi_star)?, r.iterations, r.elapsed_s, r.stop_reason)
            }
            None => {
                let r = solve(&problem, table, &opts)?;
                (r.xi_star, r.iterations, r.elapsed_s, r.stop_reason)
            }
        };

        let mut record = BenchRecord {
            instance_id: instance_id.clone(),
            seed: cfg.seed,
            scale,
            alpha,
            iterations,
            elapsed_s,
            stop_reason,
            primal_error: None,
            bound_violations: None,
            dual_bound_violations: None,
            reference_exact: None,
        };
        if let (Some(r), Some(f_opt)) = (&reference, dual_opt) {
            let prof = error_profile(&xi, &r.xi)?;
            record.primal_error = Some(prof.max_abs);
            record.reference_exact = Some(r.exact);
            // separate run so history recording stays out of the timed solve
            let traced = solve(&problem, table, &SolverOptions { record_history: true, ..opts })?;
            if let Some(h) = traced.history.as_ref() {
                let v = check_bounds(&problem, h, alpha, &mu0, &r.mu, &r.xi, f_opt)?;
                record.bound_violations = Some(v.primal);
                record.dual_bound_violations = Some(v.dual_gap);
            }
            if index == 0 {
                profile.extend(prof.errors.iter().enumerate().map(|(component, &error)| ErrorProfileRow {
                    instance_id: instance_id.clone(),
                    alpha,
                    component,
                    error,
                }));
            }
        }
        records.push(record);
    }
    let (n_v, n_c) = (problem.n_v(), problem.n_c());
    Ok(InstanceOutcome {
        row: InstanceRow { instance_id, seed: cfg.seed, n: scale, m: scale, n_v, n_c },
        records,
        profile,
    })
}

/// Runs the suite; records are ordered by scale, instance, then alpha regardless
/// of how many worker threads are used.
pub fn run_suite(cfg: &SuiteConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mut tables = BTreeMap::new();
    for &alpha in &cfg.alphas {
        tables.insert(alpha, Arc::new(LookupTable::build(alpha, cfg.max_iters + 1)?));
    }
    let jobs: Vec<(usize, usize)> = cfg
        .scales
        .iter()
        .flat_map(|&s| (0..cfg.instances_per_scale).map(move |i| (s, i)))
        .collect();

    let outcomes: Vec<InstanceOutcome> = if cfg.jobs == 1 {
        jobs.iter().map(|&(s, i)| run_instance(cfg, &tables, s, i)).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::domain(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(|&(s, i)| run_instance(cfg, &tables, s, i)).collect::<Result<_>>())?
    };

    let mut instances = Vec::with_capacity(outcomes.len());
    let mut records = Vec::new();
    let mut error_profiles = Vec::new();
    let largest = *cfg.scales.iter().max().expect("validated non-empty");
    for o in outcomes {
        if o.row.n == largest {
            error_profiles.extend(o.profile);
        }
        instances.push(o.row);
        records.extend(o.records);
    }
    let aggregates = aggregate(&records);
    let ttests = ttests(&records, cfg);
    Ok(BenchReport { config_seed: cfg.seed, instances, records, aggregates, ttests, error_profiles })
}

/// Arithmetic means of iterations and time per `(scale, alpha)`.
pub fn aggregate(records: &[BenchRecord]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(usize, u32), (usize, f64, f64)> = BTreeMap::new();
    for r in records {
        let e = groups.entry((r.scale, r.alpha)).or_default();
        e.0 += 1;
        e.1 += r.iterations as f64;
        e.2 += r.elapsed_s;
    }
    groups
        .into_iter()
        .map(|((scale, alpha), (count, it, t))| Aggregate {
            scale,
            alpha,
            count,
            ave_iter: it / count as f64,
            ave_time_s: t / count as f64,
        })
        .collect()
}

/// Per-instance differences `baseline - alpha` of a metric at one scale.
pub fn paired_differences<F>(records: &[BenchRecord], scale: usize, baseline: u32, alpha: u32, metric: F) -> Vec<f64>
where
    F: Fn(&BenchRecord) -> f64,
{
    let pick = |a: u32| -> BTreeMap<&str, f64> {
        records
            .iter()
            .filter(|r| r.scale == scale && r.alpha == a)
            .map(|r| (r.instance_id.as_str(), metric(r)))
            .collect()
    };
    let base = pick(baseline);
    let other = pick(alpha);
    base.iter().filter_map(|(id, b)| other.get(id).map(|o| b - o)).collect()
}

type Metric = fn(&BenchRecord) -> f64;

fn ttests(records: &[BenchRecord], cfg: &SuiteConfig) -> Vec<TTestRow> {
    let baseline = if cfg.alphas.contains(&2) { 2 } else { cfg.alphas[0] };
    let mut out = Vec::new();
    for &scale in &cfg.scales {
        for &alpha in cfg.alphas.iter().filter(|&&a| a != baseline) {
            let metrics: [(&'static str, Metric); 2] =
                [("iterations", |r| r.iterations as f64), ("time_s", |r| r.elapsed_s)];
            for (metric, f) in metrics {
                let d = paired_differences(records, scale, baseline, alpha, f);
                out.push(TTestRow { scale, baseline_alpha: baseline, alpha, metric, result: paired_t(&d).ok() });
            }
        }
    }
    out
}

/// Rows `(p, alpha, U_p)` of the unit-constant bound envelope.
pub fn envelope_rows(alphas: &[u32], pmax: usize) -> Result<Vec<(usize, u32, f64)>> {
    let mut rows = Vec::with_capacity(alphas.len() * pmax);
    for &alpha in alphas {
        for p in 1..=pmax {
            rows.push((p, alpha, envelope(alpha, p)?));
        }
    }
    Ok(rows)
}

pub fn write_envelope_csv<W: std::io::Write>(alphas: &[u32], pmax: usize, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["p", "alpha", "u_p"])?;
    for (p, alpha, u) in envelope_rows(alphas, pmax)? {
        wtr.write_record([p.to_string(), alpha.to_string(), format!("{u:.17e}")])?;
    }
    wtr.flush()?;
    Ok(())
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, ToString::to_string)
}

impl BenchReport {
    pub fn aggregate_for(&self, scale: usize, alpha: u32) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.scale == scale && a.alpha == alpha)
    }

    pub fn ttest_for(&self, scale: usize, alpha: u32, metric: &str) -> Option<&TTestRow> {
        self.ttests.iter().find(|t| t.scale == scale && t.alpha == alpha && t.metric == metric)
    }

    /// Writes `records.csv`, `aggregates.csv`, `ttests.csv`, `instances.csv`
    /// and the plot-data files into `outdir`.
    pub fn write_csvs(&self, outdir: &Path, envelope_alphas: &[u32], envelope_pmax: usize) -> Result<()> {
        fs::create_dir_all(outdir)?;

        let mut w = csv::Writer::from_path(outdir.join("records.csv"))?;
        w.write_record([
            "instance_id",
            "seed",
            "scale",
            "alpha",
            "iterations",
            "elapsed_s",
            "stop_reason",
            "primal_error",
            "bound_violations",
            "dual_bound_violations",
            "reference_exact",
        ])?;
        for r in &self.records {
            w.write_record([
                r.instance_id.clone(),
                r.seed.to_string(),
                r.scale.to_string(),
                r.alpha.to_string(),
                r.iterations.to_string(),
                format!("{:e}", r.elapsed_s),
                r.stop_reason.to_string(),
                r.primal_error.map_or_else(String::new, |e| format!("{e:e}")),
                opt(&r.bound_violations),
                opt(&r.dual_bound_violations),
                opt(&r.reference_exact),
            ])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(outdir.join("instances.csv"))?;
        w.write_record(["instance_id", "seed", "n", "m", "n_v", "n_c"])?;
        for i in &self.instances {
            w.serialize(i)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(outdir.join("aggregates.csv"))?;
        w.write_record(["scale", "alpha", "ave_iter", "ave_time_s"])?;
        for a in &self.aggregates {
            w.write_record([a.scale.to_string(), a.alpha.to_string(), a.ave_iter.to_string(), format!("{:e}", a.ave_time_s)])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(outdir.join("ttests.csv"))?;
        w.write_record(["scale", "alpha_pair", "metric", "M", "mean_diff", "sd", "t"])?;
        for t in &self.ttests {
            let pair = format!("{}-{}", t.baseline_alpha, t.alpha);
            let (m, mean, sd, stat) = match &t.result {
                Some(r) => (r.m.to_string(), r.mean.to_string(), r.sd.to_string(), r.t.to_string()),
                None => (String::new(), String::new(), "0".into(), "nan".into()),
            };
            w.write_record([t.scale.to_string(), pair, t.metric.to_string(), m, mean, sd, stat])?;
        }
        w.flush()?;

        // average time against alpha, one series per scale
        let mut w = csv::Writer::from_path(outdir.join("time_vs_alpha.csv"))?;
        w.write_record(["scale", "alpha", "ave_time_s", "ave_iter"])?;
        for a in &self.aggregates {
            w.write_record([a.scale.to_string(), a.alpha.to_string(), format!("{:e}", a.ave_time_s), a.ave_iter.to_string()])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(outdir.join("time_vs_scale.csv"))?;
        w.write_record(["alpha", "scale", "ave_time_s", "ave_iter"])?;
        let mut by_alpha = self.aggregates.clone();
        by_alpha.sort_by_key(|a| (a.alpha, a.scale));
        for a in &by_alpha {
            w.write_record([a.alpha.to_string(), a.scale.to_string(), format!("{:e}", a.ave_time_s), a.ave_iter.to_string()])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(outdir.join("error_profile.csv"))?;
        w.write_record(["instance_id", "alpha", "component", "error"])?;
        for e in &self.error_profiles {
            w.write_record([e.instance_id.clone(), e.alpha.to_string(), e.component.to_string(), format!("{:e}", e.error)])?;
        }
        w.flush()?;

        write_envelope_csv(envelope_alphas, envelope_pmax, fs::File::create(outdir.join("envelope.csv"))?)?;
        Ok(())
    }
}

/// Solves a problem with and without the Cholesky transform and returns both primal solutions.
pub fn solve_both_ways(problem: &QpProblem, table: &LookupTable, opts: &SolverOptions) -> Result<(DVector<f64>, DVector<f64>)> {
    let direct = solve(problem, table, opts)?;
    let (tp, factor) = transform(problem)?;
    let pre = solve(&tp, table, opts)?;
    Ok((direct.xi_star, recover(&factor, &pre.xi_star)?))
}
