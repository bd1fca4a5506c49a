//! Load-balance, scalability and speedup metrics.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::partition::RankPartition;

fn mean_over_max(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let sum: f64 = values.clone().sum();
    let max = values.fold(f64::NEG_INFINITY, f64::max);
    (sum / n) / max
}

/// Measured load balance: average over maximum of per-rank elapsed times.
pub fn lb_measured(times: &[f64]) -> Result<f64> {
    if times.is_empty() {
        return Err(invalid("no timings"));
    }
    if let Some(t) = times.iter().find(|t| !(**t > 0.0)) {
        return Err(invalid(alloc::format!("elapsed times must be positive, got {t}")));
    }
    Ok(mean_over_max(times.iter().copied()))
}

/// Theoretical load balance from per-rank weight sums.
pub fn lb_theoretical_weighted(partition: &RankPartition, weights: &[f64]) -> f64 {
    mean_over_max(partition.weight_sums(weights).into_iter())
}

/// Theoretical load balance from per-rank element counts.
pub fn lb_theoretical_counts(partition: &RankPartition) -> f64 {
    mean_over_max(partition.counts().into_iter().map(|c| c as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbReport {
    pub n_ranks: usize,
    pub weight_sums: Vec<f64>,
    pub counts: Vec<usize>,
    pub measured_lb: Option<f64>,
    pub theoretical_weighted_lb: f64,
    pub theoretical_nonweighted_lb: f64,
}

impl LbReport {
    pub fn new(partition: &RankPartition, weights: &[f64], times: Option<&[f64]>) -> Result<Self> {
        Ok(LbReport {
            n_ranks: partition.n_ranks(),
            weight_sums: partition.weight_sums(weights),
            counts: partition.counts(),
            measured_lb: times.map(lb_measured).transpose()?,
            theoretical_weighted_lb: lb_theoretical_weighted(partition, weights),
            theoretical_nonweighted_lb: lb_theoretical_counts(partition),
        })
    }
}

/// Mean phase time per (resource count, version).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingTable {
    base_resources: usize,
    baseline_version: String,
    times: BTreeMap<(usize, String), f64>,
}

impl ScalingTable {
    /// `base_resources` is the smallest resource count measured;
    /// `baseline_version` is the reference version for speedups (the pure
    /// distributed-memory run in the original study).
    pub fn new(base_resources: usize, baseline_version: &str) -> Self {
        ScalingTable { base_resources, baseline_version: baseline_version.to_string(), times: BTreeMap::new() }
    }

    pub fn insert(&mut self, resources: usize, version: &str, seconds: f64) -> Result<()> {
        if !(seconds > 0.0) {
            return Err(invalid("phase times must be positive"));
        }
        self.times.insert((resources, version.to_string()), seconds);
        Ok(())
    }

    pub fn time(&self, resources: usize, version: &str) -> Option<f64> {
        self.times.get(&(resources, version.to_string())).copied()
    }

    fn lookup(&self, resources: usize, version: &str) -> Result<f64> {
        self.time(resources, version).ok_or_else(|| invalid(alloc::format!("no entry for ({resources}, {version})")))
    }

    /// `time(base, version) / time(resources, version)`.
    pub fn scalability(&self, resources: usize, version: &str) -> Result<f64> {
        let base = self
            .time(self.base_resources, version)
            .ok_or_else(|| Error::MissingBase(alloc::format!("({}, {version})", self.base_resources)))?;
        Ok(base / self.lookup(resources, version)?)
    }

    /// `time(base, baseline) / time(resources, version)`.
    pub fn speedup(&self, resources: usize, version: &str) -> Result<f64> {
        let base = self.time(self.base_resources, &self.baseline_version).ok_or_else(|| {
            Error::MissingBase(alloc::format!("({}, {})", self.base_resources, self.baseline_version))
        })?;
        Ok(base / self.lookup(resources, version)?)
    }
}

/// Median of a non-empty sample.
pub fn median(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}
