//! Repeated runs of a scenario over every suite and loss point.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::config::{LossPoint, ScenarioConfig, SuiteSelection};
use super::sim::{simulate_run, SimSettings};
use crate::engine::{plan_handshake, EngineError, PreparedHandshake};
use crate::metrics::{ecdf, order_statistic_correlation, RunRecord, SummaryStats};
use crate::suite::{CryptoSuite, OpaqueMaterial, SuiteId};

#[derive(Debug, Error)]
pub enum BatchError {
    #[error(transparent)]
    Config(#[from] super::config::ConfigError),
    #[error("suite {suite}: {source}")]
    Suite { suite: String, source: EngineError },
    #[error("cannot build thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Default)]
pub struct BatchOptions {
    pub suites: Option<SuiteSelection>,
    /// Worker threads; `None` uses the global pool.
    pub parallel: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub suite: String,
    pub runs: usize,
    pub successes: usize,
    pub failures: usize,
    pub errors: usize,
    pub zero_loss_datagrams: usize,
    pub zero_loss_bytes: u64,
    pub total_bytes: Option<SummaryStats>,
    pub setup_time_ms: Option<SummaryStats>,
    /// Setup time divided by the link RTT.
    pub setup_time_rtts: Option<SummaryStats>,
    pub datagrams: Option<SummaryStats>,
    pub retransmissions: Option<SummaryStats>,
    pub total_bytes_ecdf: Vec<(f64, f64)>,
}

/// Cost of `suite` relative to the classical baseline at one loss point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Amplification {
    pub suite: String,
    pub baseline: String,
    pub total_bytes_p95_ratio: f64,
    pub setup_time_p95_ratio: Option<f64>,
    pub total_bytes_order_correlation: Option<f64>,
    pub setup_time_order_correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultSet {
    pub scenario_id: String,
    pub loss_point: LossPoint,
    pub rtt_ms: f64,
    pub records: Vec<RunRecord>,
    pub summaries: Vec<SuiteSummary>,
    pub amplification: Vec<Amplification>,
}

impl ResultSet {
    pub fn summary(&self, suite: &str) -> Option<&SuiteSummary> {
        self.summaries.iter().find(|s| s.suite == suite)
    }

    pub fn records_for<'a>(&'a self, suite: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.records.iter().filter(move |r| r.suite == suite)
    }
}

fn prepare(
    suite: &CryptoSuite,
    config: &ScenarioConfig,
    seed: u64,
) -> Result<PreparedHandshake, EngineError> {
    let plan = plan_handshake(suite, &config.engine);
    PreparedHandshake::new(plan, &config.engine, config.link.mtu, &OpaqueMaterial, seed)
}

fn run_one(
    suite: &CryptoSuite,
    config: &ScenarioConfig,
    point: &LossPoint,
    settings: &SimSettings,
    iteration: u32,
) -> RunRecord {
    let seed = config.seed.wrapping_add(u64::from(iteration));
    let mut record = RunRecord {
        scenario_id: config.scenario_id.clone(),
        suite: suite.suite_id.as_str().to_owned(),
        iteration,
        seed,
        loss_rate: point.loss_rate,
        rtt_ms: config.link.rtt_ms,
        success: false,
        setup_time_ms: None,
        total_bytes: 0,
        datagrams: 0,
        retransmissions: 0,
        restarts: 0,
        error: None,
    };
    let outcome = prepare(suite, config, seed)
        .map_err(|e| e.to_string())
        .and_then(|script| {
            simulate_run(Arc::new(script), settings, seed).map_err(|e| e.to_string())
        });
    match outcome {
        Ok(out) => {
            record.success = out.established;
            record.setup_time_ms = out.setup_time.map(|t| t.as_ms());
            record.total_bytes = out.total_bytes;
            record.datagrams = out.datagrams;
            record.retransmissions = out.retransmissions;
            record.restarts = out.restarts;
        }
        Err(e) => record.error = Some(e),
    }
    record
}

fn summarize(
    suite: &CryptoSuite,
    config: &ScenarioConfig,
    records: &[RunRecord],
) -> Result<SuiteSummary, BatchError> {
    let name = suite.suite_id.as_str().to_owned();
    let script = prepare(suite, config, config.seed).map_err(|source| BatchError::Suite {
        suite: name.clone(),
        source,
    })?;
    let ok: Vec<&RunRecord> = records.iter().filter(|r| r.success).collect();
    let column = |f: &dyn Fn(&RunRecord) -> f64| -> Vec<f64> { ok.iter().map(|r| f(r)).collect() };
    let bytes = column(&|r| r.total_bytes as f64);
    let setup = column(&|r| r.setup_time_ms.unwrap_or(f64::NAN));
    let rtt = config.link.rtt_ms;
    let setup_rtts: Vec<f64> = if rtt > 0.0 {
        setup.iter().map(|t| t / rtt).collect()
    } else {
        Vec::new()
    };
    Ok(SuiteSummary {
        suite: name,
        runs: records.len(),
        successes: ok.len(),
        failures: records
            .iter()
            .filter(|r| !r.success && r.error.is_none())
            .count(),
        errors: records.iter().filter(|r| r.error.is_some()).count(),
        zero_loss_datagrams: script.zero_loss_datagrams(),
        zero_loss_bytes: script.zero_loss_bytes(),
        total_bytes: SummaryStats::from_samples(&bytes).ok(),
        setup_time_ms: SummaryStats::from_samples(&setup).ok(),
        setup_time_rtts: SummaryStats::from_samples(&setup_rtts).ok(),
        datagrams: SummaryStats::from_samples(&column(&|r| r.datagrams as f64)).ok(),
        retransmissions: SummaryStats::from_samples(&column(&|r| r.retransmissions as f64)).ok(),
        total_bytes_ecdf: ecdf(&bytes).unwrap_or_default(),
    })
}

fn successful(records: &[RunRecord], suite: &str, f: impl Fn(&RunRecord) -> f64) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.suite == suite && r.success)
        .map(f)
        .collect()
}

fn amplification(records: &[RunRecord], summaries: &[SuiteSummary]) -> Vec<Amplification> {
    let baseline = SuiteId::Classical.as_str();
    let Some(base) = summaries.iter().find(|s| s.suite == baseline) else {
        return Vec::new();
    };
    let Some(base_bytes) = base.total_bytes else {
        return Vec::new();
    };
    let base_b = successful(records, baseline, |r| r.total_bytes as f64);
    let base_t = successful(records, baseline, |r| r.setup_time_ms.unwrap_or(f64::NAN));
    summaries
        .iter()
        .filter(|s| s.suite != baseline)
        .filter_map(|s| {
            let bytes = s.total_bytes?;
            let b = successful(records, &s.suite, |r| r.total_bytes as f64);
            let t = successful(records, &s.suite, |r| r.setup_time_ms.unwrap_or(f64::NAN));
            let paired = |x: &[f64], y: &[f64]| {
                (x.len() == y.len())
                    .then(|| order_statistic_correlation(x, y).ok())
                    .flatten()
            };
            Some(Amplification {
                suite: s.suite.clone(),
                baseline: baseline.to_owned(),
                total_bytes_p95_ratio: bytes.p95 / base_bytes.p95,
                setup_time_p95_ratio: match (s.setup_time_ms, base.setup_time_ms) {
                    (Some(a), Some(c)) if c.p95 > 0.0 => Some(a.p95 / c.p95),
                    _ => None,
                },
                total_bytes_order_correlation: paired(&b, &base_b),
                setup_time_order_correlation: paired(&t, &base_t),
            })
        })
        .collect()
}

fn run_point(
    config: &ScenarioConfig,
    point: &LossPoint,
) -> Result<ResultSet, BatchError> {
    let mut settings = SimSettings::new(config.link, point.model);
    settings.channel_mode = config.channel_mode;
    settings.jitter_ms = config.jitter_ms;

    let jobs: Vec<(&CryptoSuite, u32)> = config
        .suites
        .iter()
        .flat_map(|s| (0..config.iterations).map(move |i| (s, i)))
        .collect();
    let records: Vec<RunRecord> = jobs
        .par_iter()
        .map(|(suite, i)| run_one(suite, config, point, &settings, *i))
        .collect();
    assemble(config, point, records)
}

/// Sorts records and computes the per-suite summaries and amplification
/// ratios for one loss point.
pub(crate) fn assemble(
    config: &ScenarioConfig,
    point: &LossPoint,
    mut records: Vec<RunRecord>,
) -> Result<ResultSet, BatchError> {
    records.sort_by(|a, b| (&a.suite, a.iteration).cmp(&(&b.suite, b.iteration)));
    let summaries = config
        .suites
        .iter()
        .map(|s| {
            let own: Vec<RunRecord> = records
                .iter()
                .filter(|r| r.suite == s.suite_id.as_str())
                .cloned()
                .collect();
            summarize(s, config, &own)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let amplification = amplification(&records, &summaries);
    Ok(ResultSet {
        scenario_id: config.scenario_id.clone(),
        loss_point: point.clone(),
        rtt_ms: config.link.rtt_ms,
        records,
        summaries,
        amplification,
    })
}

/// Runs every configured suite `iterations` times at each loss point.
/// Iteration `i` uses seed `config.seed + i` for every suite, so suites
/// see the same channel realisations. Per-run failures are kept in the
/// records rather than aborting the batch.
pub fn run_batch(
    config: &ScenarioConfig,
    options: &BatchOptions,
) -> Result<Vec<ResultSet>, BatchError> {
    let mut config = config.clone();
    if let Some(selection) = options.suites {
        config.select_suites(selection)?;
    }
    let work = || {
        config
            .loss_points
            .iter()
            .map(|p| run_point(&config, p))
            .collect::<Result<Vec<_>, _>>()
    };
    match options.parallel {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| BatchError::ThreadPool(e.to_string()))?
            .install(work),
        None => work(),
    }
}
