//! Replication harness.
//!
//! Every replica draws from its own ChaCha stream: the master seed fixes the
//! key and the replica index selects the stream, so a replica's output does
//! not depend on which worker ran it or how many workers there were.
//! Estimators keep their replica values sorted, which makes pooling
//! independent of arrival order down to the last bit.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StreamRng = ChaCha8Rng;

/// Default number of standard errors used by equivalence and trend tests.
pub const DEFAULT_K_SIGMA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub master: u64,
    /// Added to every replica index; lets one master seed feed several disjoint experiments.
    #[serde(default)]
    pub stream_offset: u64,
}

impl SeedPlan {
    pub fn new(master: u64) -> Self {
        SeedPlan {
            master,
            stream_offset: 0,
        }
    }

    pub fn stream(&self, replica: usize) -> u64 {
        self.stream_offset.wrapping_add(replica as u64)
    }

    pub fn rng(&self, replica: usize) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream(replica));
        rng
    }

    /// Independent plan for a sub-experiment, keyed by `label`.
    pub fn derive(&self, label: u64) -> SeedPlan {
        SeedPlan {
            master: splitmix64(self.master ^ splitmix64(label.wrapping_add(0x9e37_79b9_7f4a_7c15))),
            stream_offset: self.stream_offset,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaFailure {
    pub index: usize,
    pub message: String,
}

/// Outputs of `n` replicas, in replica order.
#[derive(Debug, Clone)]
pub struct Replicates<T> {
    pub values: Vec<T>,
    pub failures: Vec<ReplicaFailure>,
}

impl<T> Replicates<T> {
    /// Errors with the lowest failing replica, if any.
    pub fn into_result(self) -> Result<Vec<T>> {
        match self.failures.into_iter().next() {
            Some(f) => Err(Error::Replica {
                index: f.index,
                message: f.message,
            }),
            None => Ok(self.values),
        }
    }
}

/// Runs `task(replica, rng)` for `n` replicas on `parallelism` workers
/// (0 selects the rayon default).
pub fn replicate<T, F>(n: usize, plan: SeedPlan, parallelism: usize, task: F) -> Result<Replicates<T>>
where
    T: Send,
    F: Fn(usize, &mut StreamRng) -> Result<T> + Sync,
{
    if n < 2 {
        return Err(Error::Precondition(format!("replicate needs n ≥ 2, got {n}")));
    }
    let run = || -> Vec<Result<T>> {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = plan.rng(i);
                task(i, &mut rng)
            })
            .collect()
    };
    let outputs = if parallelism == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?
            .install(run)
    };
    let mut values = Vec::with_capacity(n);
    let mut failures = Vec::new();
    for (index, out) in outputs.into_iter().enumerate() {
        match out {
            Ok(v) => values.push(v),
            Err(e) => failures.push(ReplicaFailure {
                index,
                message: e.to_string(),
            }),
        }
    }
    Ok(Replicates { values, failures })
}

/// Runs a vector-valued task and turns each coordinate into an [`Estimator`].
pub fn replicate_estimators<F>(
    names: &[&str],
    n: usize,
    plan: SeedPlan,
    parallelism: usize,
    task: F,
) -> Result<Vec<Estimator>>
where
    F: Fn(usize, &mut StreamRng) -> Result<Vec<f64>> + Sync,
{
    let rows = replicate(n, plan, parallelism, task)?.into_result()?;
    Ok(columns(names, &rows))
}

/// Builds one estimator per column of `rows`.
pub fn columns(names: &[&str], rows: &[Vec<f64>]) -> Vec<Estimator> {
    names
        .iter()
        .enumerate()
        .map(|(j, name)| Estimator::new(*name, rows.iter().map(|r| r[j]).collect()))
        .collect()
}

/// Mean and standard error of a scalar quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub se: f64,
}

impl Summary {
    pub fn exact(value: f64) -> Self {
        Summary { mean: value, se: 0.0 }
    }

    pub fn scale(self, c: f64) -> Self {
        Summary {
            mean: self.mean * c,
            se: self.se * c.abs(),
        }
    }
}

/// Replica values of one scalar statistic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimator {
    pub name: String,
    /// Sorted ascending.
    values: Vec<f64>,
}

impl Estimator {
    pub fn new(name: impl Into<String>, mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Estimator {
            name: name.into(),
            values,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        self.values.iter().sum::<f64>() / self.n() as f64
    }

    /// Sample standard deviation (n - 1 denominator).
    pub fn std_dev(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        let ss: f64 = self.values.iter().map(|v| (v - m) * (v - m)).sum();
        (ss / (n - 1) as f64).sqrt()
    }

    pub fn se(&self) -> f64 {
        if self.n() == 0 {
            return f64::NAN;
        }
        self.std_dev() / (self.n() as f64).sqrt()
    }

    pub fn summary(&self) -> Summary {
        Summary {
            mean: self.mean(),
            se: self.se(),
        }
    }

    /// Pooled estimator over both replica sets.
    pub fn merge(&self, other: &Estimator) -> Estimator {
        let mut values = Vec::with_capacity(self.n() + other.n());
        let (mut i, mut j) = (0, 0);
        while i < self.values.len() && j < other.values.len() {
            if self.values[i].total_cmp(&other.values[j]).is_le() {
                values.push(self.values[i]);
                i += 1;
            } else {
                values.push(other.values[j]);
                j += 1;
            }
        }
        values.extend_from_slice(&self.values[i..]);
        values.extend_from_slice(&other.values[j..]);
        Estimator {
            name: self.name.clone(),
            values,
        }
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.name, self.n(), self.mean(), self.se())
    }
}

pub const ESTIMATOR_CSV_HEADER: &str = "name,n,mean,se";

pub fn write_estimators_csv<W: Write>(mut out: W, estimators: &[Estimator]) -> io::Result<()> {
    writeln!(out, "{ESTIMATOR_CSV_HEADER}")?;
    for e in estimators {
        writeln!(out, "{}", e.csv_row())?;
    }
    Ok(())
}

/// Delta-method estimate of `mean(xs) / mean(ys)^power` from paired replicas.
pub fn ratio_of_means(xs: &[f64], ys: &[f64], power: f64) -> Summary {
    assert_eq!(xs.len(), ys.len(), "paired samples required");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut vxx, mut vyy, mut vxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        vxx += (x - mx) * (x - mx);
        vyy += (y - my) * (y - my);
        vxy += (x - mx) * (y - my);
    }
    let d = n - 1.0;
    let (vxx, vyy, vxy) = (vxx / d, vyy / d, vxy / d);
    let value = mx / my.powf(power);
    let gx = 1.0 / my.powf(power);
    let gy = -power * mx / my.powf(power + 1.0);
    let var = (gx * gx * vxx + gy * gy * vyy + 2.0 * gx * gy * vxy) / n;
    Summary {
        mean: value,
        se: var.max(0.0).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equivalence {
    pub pass: bool,
    pub difference: f64,
    pub combined_se: f64,
    pub k_sigma: f64,
}

impl Equivalence {
    /// |difference| / combined SE.
    pub fn z_score(&self) -> f64 {
        self.difference.abs() / self.combined_se
    }
}

/// `|a - b| ≤ k · sqrt(se_a² + se_b²)`; a constant target is a summary with zero SE.
pub fn equivalence_test(a: Summary, b: Summary, k_sigma: f64) -> Equivalence {
    let combined_se = (a.se * a.se + b.se * b.se).sqrt();
    let difference = a.mean - b.mean;
    Equivalence {
        pass: difference.abs() <= k_sigma * combined_se,
        difference,
        combined_se,
        k_sigma,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrendVerdict {
    /// The series moves in the requested direction beyond the SE bands and never against it.
    Pass,
    /// No significant movement either way.
    Inconclusive,
    /// Some step moves significantly against the requested direction.
    Fail,
}

/// Monotonicity test on a series of estimates along a grid.
///
/// Each consecutive step and the first-to-last change are compared with
/// `k_sigma` combined standard errors.
pub fn trend_test(series: &[Summary], direction: Direction, k_sigma: f64) -> Result<TrendVerdict> {
    if series.len() < 4 {
        return Err(Error::Precondition(format!(
            "trend test needs at least 4 grid points, got {}",
            series.len()
        )));
    }
    let sign = match direction {
        Direction::Increasing => 1.0,
        Direction::Decreasing => -1.0,
    };
    let band = |a: &Summary, b: &Summary| k_sigma * (a.se * a.se + b.se * b.se).sqrt();
    let against = series
        .windows(2)
        .any(|w| sign * (w[1].mean - w[0].mean) < -band(&w[0], &w[1]));
    if against {
        return Ok(TrendVerdict::Fail);
    }
    let first = &series[0];
    let last = &series[series.len() - 1];
    let change = sign * (last.mean - first.mean);
    if change > band(first, last) {
        Ok(TrendVerdict::Pass)
    } else {
        Ok(TrendVerdict::Inconclusive)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn constant_task() {
        let est = replicate_estimators(&["one"], 50, SeedPlan::new(1), 2, |_, _| Ok(vec![1.0])).unwrap();
        assert_eq!(est[0].mean(), 1.0);
        assert_eq!(est[0].se(), 0.0);
    }

    #[test]
    fn bernoulli_half() {
        let est = replicate_estimators(&["coin"], 100_000, SeedPlan::new(7), 0, |_, rng| {
            Ok(vec![if rng.random::<bool>() { 1.0 } else { 0.0 }])
        })
        .unwrap();
        let eq = equivalence_test(est[0].summary(), Summary::exact(0.5), 3.0);
        assert!(eq.pass, "{eq:?}");
    }

    #[test]
    fn determinism_across_parallelism() {
        let task = |_: usize, rng: &mut StreamRng| Ok(vec![rng.random::<f64>(), rng.random::<f64>()]);
        let a = replicate_estimators(&["u", "v"], 257, SeedPlan::new(99), 1, task).unwrap();
        let b = replicate_estimators(&["u", "v"], 257, SeedPlan::new(99), 8, task).unwrap();
        let c = replicate_estimators(&["u", "v"], 257, SeedPlan::new(99), 0, task).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a[0].mean().to_bits(), c[0].mean().to_bits());
    }

    #[test]
    fn replica_streams_are_distinct() {
        let plan = SeedPlan::new(5);
        let x: u64 = plan.rng(0).random();
        let y: u64 = plan.rng(1).random();
        let z: u64 = plan.derive(1).rng(0).random();
        assert_ne!(x, y);
        assert_ne!(x, z);
        assert_eq!(x, plan.rng(0).random::<u64>());
    }

    #[test]
    fn failures_are_reported_per_replica() {
        let out = replicate(10, SeedPlan::new(1), 3, |i, _| {
            if i % 4 == 3 {
                Err(Error::Precondition("boom".into()))
            } else {
                Ok(i)
            }
        })
        .unwrap();
        assert_eq!(out.values.len(), 8);
        let idx: Vec<usize> = out.failures.iter().map(|f| f.index).collect();
        assert_eq!(idx, vec![3, 7]);
        assert!(matches!(out.into_result(), Err(Error::Replica { index: 3, .. })));
        assert!(replicate(1, SeedPlan::new(1), 1, |_, _| Ok(0)).is_err());
    }

    #[test]
    fn equivalence_examples() {
        let a = Summary { mean: 1.0, se: 0.1 };
        assert!(equivalence_test(a, Summary::exact(1.05), 3.0).pass);
        let b = Summary { mean: 1.0, se: 0.01 };
        assert!(!equivalence_test(b, Summary::exact(1.05), 3.0).pass);
    }

    #[test]
    fn pooled_equivalence_matches_recount() {
        let xs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = Estimator::new("x", xs[..15].to_vec());
        let b = Estimator::new("x", xs[15..].to_vec());
        let pooled = a.merge(&b);
        let direct = Estimator::new("x", xs.clone());
        assert_eq!(pooled, direct);
        let m = xs.iter().sum::<f64>() / 40.0;
        let sd = (xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 39.0).sqrt();
        assert!((pooled.mean() - m).abs() < 1e-15);
        assert!((pooled.se() - sd / 40f64.sqrt()).abs() < 1e-15);
        let eq_pooled = equivalence_test(pooled.summary(), Summary::exact(0.0), 3.0);
        let eq_direct = equivalence_test(direct.summary(), Summary::exact(0.0), 3.0);
        assert_eq!(eq_pooled, eq_direct);
    }

    #[test]
    fn trend_examples() {
        let s = |m: &[f64], se: f64| m.iter().map(|&mean| Summary { mean, se }).collect::<Vec<_>>();
        assert_eq!(
            trend_test(&s(&[1.0, 2.0, 3.0, 4.0], 0.0), Direction::Increasing, 3.0).unwrap(),
            TrendVerdict::Pass
        );
        assert_eq!(
            trend_test(&s(&[1.0, 1.02, 0.99, 1.01], 0.05), Direction::Decreasing, 3.0).unwrap(),
            TrendVerdict::Inconclusive
        );
        assert_eq!(
            trend_test(&s(&[4.0, 3.0, 2.0, 1.0], 0.1), Direction::Decreasing, 3.0).unwrap(),
            TrendVerdict::Pass
        );
        assert_eq!(
            trend_test(&s(&[4.0, 3.0, 2.0, 1.0], 0.1), Direction::Increasing, 3.0).unwrap(),
            TrendVerdict::Fail
        );
        assert!(trend_test(&s(&[1.0, 2.0, 3.0], 0.0), Direction::Increasing, 3.0).is_err());
    }

    #[test]
    fn ratio_delta_method() {
        let xs = vec![2.0, 4.0, 6.0, 8.0];
        let r = ratio_of_means(&xs, &xs, 1.0);
        assert!((r.mean - 1.0).abs() < 1e-15);
        assert!(r.se < 1e-12);
    }
}
