//! Sharded Monte Carlo estimation.
//!
//! Samples are grouped into fixed-size shards, each driven by a sub-keyed
//! counter generator and combined in shard order with a fixed-tree sum.
//! The estimate is therefore a pure function of `(seed, samples)`: a driver
//! may evaluate shards sequentially or on any number of threads and the
//! result is bit-identical.

use crate::reduce::tree_sum_by;
use crate::rng::CounterRng;
use crate::{Error, Result};
use alloc::string::ToString;
use alloc::vec::Vec;

/// Samples per shard. Small enough to load-balance, large enough that
/// per-shard overhead is negligible.
pub const SHARD_SIZE: u64 = 1 << 16;

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_err: f64,
    pub samples: u64,
}

/// Raw moment sums of one shard (single estimator).
#[derive(Debug, Clone, Copy, Default)]
pub struct ShardSum {
    pub sum: f64,
    pub sum_sq: f64,
    pub count: u64,
}

/// Raw moment sums of one shard for a paired estimator (numerator,
/// denominator), keeping the cross moment for the ratio variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct ShardSum2 {
    pub sum_a: f64,
    pub sum_b: f64,
    pub sum_aa: f64,
    pub sum_bb: f64,
    pub sum_ab: f64,
    pub count: u64,
}

pub fn shard_count(samples: u64) -> u64 {
    samples.div_ceil(SHARD_SIZE)
}

pub fn shard_len(samples: u64, shard: u64) -> u64 {
    let start = shard * SHARD_SIZE;
    SHARD_SIZE.min(samples - start)
}

/// Evaluates one shard of a scalar estimator.
pub fn run_shard<F: FnMut(&mut CounterRng) -> f64>(
    seed: u64,
    samples: u64,
    shard: u64,
    mut f: F,
) -> ShardSum {
    let mut rng = CounterRng::substream(seed, shard);
    let len = shard_len(samples, shard);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..len {
        let v = f(&mut rng);
        sum += v;
        sum_sq += v * v;
    }
    ShardSum {
        sum,
        sum_sq,
        count: len,
    }
}

/// Evaluates one shard of a paired estimator.
pub fn run_shard2<F: FnMut(&mut CounterRng) -> (f64, f64)>(
    seed: u64,
    samples: u64,
    shard: u64,
    mut f: F,
) -> ShardSum2 {
    let mut rng = CounterRng::substream(seed, shard);
    let len = shard_len(samples, shard);
    let mut acc = ShardSum2::default();
    for _ in 0..len {
        let (a, b) = f(&mut rng);
        acc.sum_a += a;
        acc.sum_b += b;
        acc.sum_aa += a * a;
        acc.sum_bb += b * b;
        acc.sum_ab += a * b;
    }
    acc.count = len;
    acc
}

/// Combines shard sums (in shard order) into a mean and standard error.
pub fn combine(shards: &[ShardSum]) -> McEstimate {
    let n: u64 = shards.iter().map(|s| s.count).sum();
    let nf = n as f64;
    let sum = tree_sum_by(shards.len(), |i| shards[i].sum);
    let sum_sq = tree_sum_by(shards.len(), |i| shards[i].sum_sq);
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0);
    McEstimate {
        value: mean,
        std_err: crate::fp::sqrt(var / nf),
        samples: n,
    }
}

/// Ratio estimate `mean(a) / mean(b)` with a delta-method standard error
/// that accounts for the covariance of the paired samples.
#[derive(Debug, Clone, Copy)]
pub struct McRatio {
    pub numerator: McEstimate,
    pub denominator: McEstimate,
    pub ratio: f64,
    pub ratio_std_err: f64,
}

pub fn combine2(shards: &[ShardSum2]) -> McRatio {
    let n: u64 = shards.iter().map(|s| s.count).sum();
    let nf = n as f64;
    let sa = tree_sum_by(shards.len(), |i| shards[i].sum_a);
    let sb = tree_sum_by(shards.len(), |i| shards[i].sum_b);
    let saa = tree_sum_by(shards.len(), |i| shards[i].sum_aa);
    let sbb = tree_sum_by(shards.len(), |i| shards[i].sum_bb);
    let sab = tree_sum_by(shards.len(), |i| shards[i].sum_ab);
    let ma = sa / nf;
    let mb = sb / nf;
    let var_a = (saa / nf - ma * ma).max(0.0);
    let var_b = (sbb / nf - mb * mb).max(0.0);
    let cov = sab / nf - ma * mb;
    let ratio = ma / mb;
    // Var(a/b) ~ r^2 (va/a^2 + vb/b^2 - 2 cov/(a b)) / n
    let rel = var_a / (ma * ma) + var_b / (mb * mb) - 2.0 * cov / (ma * mb);
    let ratio_std_err = crate::fp::abs(ratio) * crate::fp::sqrt(rel.max(0.0) / nf);
    McRatio {
        numerator: McEstimate {
            value: ma,
            std_err: crate::fp::sqrt(var_a / nf),
            samples: n,
        },
        denominator: McEstimate {
            value: mb,
            std_err: crate::fp::sqrt(var_b / nf),
            samples: n,
        },
        ratio,
        ratio_std_err,
    }
}

/// Sequential driver for a scalar estimator.
pub fn estimate<F: FnMut(&mut CounterRng) -> f64>(
    seed: u64,
    samples: u64,
    mut f: F,
) -> Result<McEstimate> {
    if samples == 0 {
        return Err(Error::InvalidArgument(
            "monte carlo needs samples > 0".to_string(),
        ));
    }
    let shards: Vec<ShardSum> = (0..shard_count(samples))
        .map(|s| run_shard(seed, samples, s, &mut f))
        .collect();
    Ok(combine(&shards))
}

/// Sequential driver for a paired estimator.
pub fn estimate2<F: FnMut(&mut CounterRng) -> (f64, f64)>(
    seed: u64,
    samples: u64,
    mut f: F,
) -> Result<McRatio> {
    if samples == 0 {
        return Err(Error::InvalidArgument(
            "monte carlo needs samples > 0".to_string(),
        ));
    }
    let shards: Vec<ShardSum2> = (0..shard_count(samples))
        .map(|s| run_shard2(seed, samples, s, &mut f))
        .collect();
    Ok(combine2(&shards))
}
