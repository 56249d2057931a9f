//! Per-run measurements and the distribution statistics reported over them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EndpointRole, ExchangeType, SendAction};
use crate::netsim::SimTime;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample has zero variance")]
    DegenerateSample,
    #[error("samples have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two paired observations")]
    TooFewSamples,
    #[error("percentile {0} outside 0..=100")]
    InvalidPercentile(String),
    #[error("trace has no start event")]
    MissingStart,
    #[error("run ended without establishing an SA")]
    NotEstablished,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    Started { at: SimTime },
    Sent(SendAction),
    Dropped { at: SimTime, from: EndpointRole },
    Established { at: SimTime },
    GaveUp { at: SimTime },
}

/// Time from the first IKE_SA_INIT transmission until the initiator holds
/// an established SA.
pub fn setup_time(trace: &[TraceEvent]) -> Result<SimTime, MetricsError> {
    if !trace
        .iter()
        .any(|e| matches!(e, TraceEvent::Started { .. }))
    {
        return Err(MetricsError::MissingStart);
    }
    let first = trace.iter().find_map(|e| match e {
        TraceEvent::Sent(a)
            if a.from == EndpointRole::Initiator
                && a.datagram.exchange == ExchangeType::IkeSaInit =>
        {
            Some(a.at)
        }
        _ => None,
    });
    let done = trace.iter().find_map(|e| match e {
        TraceEvent::Established { at } => Some(*at),
        _ => None,
    });
    match (first, done) {
        (Some(first), Some(done)) => Ok(done.saturating_sub(first)),
        _ => Err(MetricsError::NotEstablished),
    }
}

/// One simulated (or live) connection setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario_id: String,
    pub suite: String,
    pub iteration: u32,
    pub seed: u64,
    pub loss_rate: f64,
    pub rtt_ms: f64,
    pub success: bool,
    pub setup_time_ms: Option<f64>,
    pub total_bytes: u64,
    pub datagrams: u64,
    pub retransmissions: u64,
    pub restarts: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Empirical CDF as (value, cumulative fraction) steps, one per distinct
/// value.
pub fn ecdf(samples: &[f64]) -> Result<Vec<(f64, f64)>, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *v => last.1 = frac,
            _ => out.push((*v, frac)),
        }
    }
    Ok(out)
}

/// Nearest-rank percentile: the sorted sample at 1-based rank
/// `ceil(p / 100 * n)`.
pub fn percentile(samples: &[f64], p: f64) -> Result<f64, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, p)
}

fn percentile_sorted(sorted: &[f64], p: f64) -> Result<f64, MetricsError> {
    if !(0.0..=100.0).contains(&p) {
        return Err(MetricsError::InvalidPercentile(p.to_string()));
    }
    let n = sorted.len();
    // Guard against p * n / 100 landing a hair above an integer.
    let rank = ((p * n as f64 / 100.0) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(n) - 1])
}

/// Pearson product-moment correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricsError::TooFewSamples);
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(MetricsError::DegenerateSample);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Correlation between two distributions paired by order statistic (the
/// i-th smallest of `a` against the i-th smallest of `b`).
pub fn order_statistic_correlation(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    pearson(&sa, &sb)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub p99: f64,
    pub min: f64,
    pub max: f64,
}

impl SummaryStats {
    pub fn from_samples(samples: &[f64]) -> Result<Self, MetricsError> {
        if samples.is_empty() {
            return Err(MetricsError::EmptySample);
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        Ok(Self {
            n,
            mean: sorted.iter().sum::<f64>() / n as f64,
            median: percentile_sorted(&sorted, 50.0)?,
            p95: percentile_sorted(&sorted, 95.0)?,
            p99: percentile_sorted(&sorted, 99.0)?,
            min: sorted[0],
            max: sorted[n - 1],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ecdf_examples() {
        assert_eq!(ecdf(&[5.0]).unwrap(), [(5.0, 1.0)]);
        assert_eq!(
            ecdf(&[4.0, 2.0, 1.0, 2.0]).unwrap(),
            [(1.0, 0.25), (2.0, 0.75), (4.0, 1.0)]
        );
        assert_eq!(ecdf(&[]), Err(MetricsError::EmptySample));
    }

    #[test]
    fn percentile_examples() {
        let grid: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&grid, 95.0).unwrap(), 95.0);
        assert_eq!(percentile(&grid, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&grid, 100.0).unwrap(), 100.0);
        assert_eq!(percentile(&[1.0, 2.0, 3.0], 50.0).unwrap(), 2.0);
        for p in [0.0, 37.5, 99.0, 100.0] {
            assert_eq!(percentile(&[42.0], p).unwrap(), 42.0);
        }
        assert_eq!(percentile(&[], 50.0), Err(MetricsError::EmptySample));
        assert!(percentile(&[1.0], 101.0).is_err());
    }

    #[test]
    fn pearson_examples() {
        let a = [1.0, 2.0, 3.0];
        assert!((pearson(&a, &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&a, &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&a, &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(
            pearson(&a, &[2.0, 2.0, 2.0]),
            Err(MetricsError::DegenerateSample)
        );
        assert_eq!(pearson(&a, &[1.0]), Err(MetricsError::LengthMismatch(3, 1)));
        assert_eq!(pearson(&[1.0], &[1.0]), Err(MetricsError::TooFewSamples));
    }

    #[test]
    fn order_statistics_pairing() {
        let a = [3.0, 1.0, 2.0];
        let b = [10.0, 30.0, 20.0];
        assert!((order_statistic_correlation(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn summary_of_grid() {
        let grid: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = SummaryStats::from_samples(&grid).unwrap();
        assert_eq!((s.min, s.median, s.p95, s.p99, s.max), (1.0, 50.0, 95.0, 99.0, 100.0));
        assert_eq!(s.mean, 50.5);
    }

    #[test]
    fn setup_time_needs_start_and_establishment() {
        assert_eq!(setup_time(&[]), Err(MetricsError::MissingStart));
        assert_eq!(
            setup_time(&[TraceEvent::Started { at: SimTime::ZERO }]),
            Err(MetricsError::NotEstablished)
        );
    }

    proptest! {
        #[test]
        fn percentile_monotone_and_summary_ordered(
            xs in proptest::collection::vec(-1e6f64..1e6, 1..300),
            p in 0.0f64..100.0,
            q in 0.0f64..100.0,
        ) {
            let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
            prop_assert!(percentile(&xs, lo).unwrap() <= percentile(&xs, hi).unwrap());
            let s = SummaryStats::from_samples(&xs).unwrap();
            prop_assert!(s.min <= s.median && s.median <= s.p95 && s.p95 <= s.p99 && s.p99 <= s.max);
        }

        #[test]
        fn ecdf_nondecreasing_ends_at_one(xs in proptest::collection::vec(0u32..50, 1..200)) {
            let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
            let steps = ecdf(&xs).unwrap();
            prop_assert!(steps.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
            prop_assert_eq!(steps.last().unwrap().1, 1.0);
        }
    }
}
