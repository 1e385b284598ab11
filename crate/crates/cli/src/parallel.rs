//! Thread driver for Monte Carlo shards.
//!
//! Shards are split into contiguous ranges, one per worker, and recombined
//! in shard order, so the estimate is bit-identical for any worker count
//! (including one).

use crate::{CliError, CliResult};
use nlplab_core::mc::{shard_count, ShardSum2};
use nlplab_core::minimizers::TensorMinimizer;

/// Displacement-quotient Monte Carlo across `threads` workers.
pub fn tensor_mc_ratio(
    tensor: &TensorMinimizer,
    samples: u64,
    seed: u64,
    threads: usize,
) -> CliResult<nlplab_core::mc::McRatio> {
    let total = shard_count(samples);
    let workers = threads.max(1).min(total.max(1) as usize) as u64;
    let mut shards: Vec<ShardSum2> = Vec::with_capacity(total as usize);
    if workers <= 1 {
        shards = tensor
            .displacement_mc_shards(samples, seed, 0, total)
            .map_err(|e| CliError::Numeric(e.to_string()))?;
    } else {
        let mut results: Vec<Option<Vec<ShardSum2>>> = (0..workers).map(|_| None).collect();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for w in 0..workers {
                let lo = w * total / workers;
                let hi = (w + 1) * total / workers;
                handles.push((
                    w as usize,
                    scope.spawn(move || tensor.displacement_mc_shards(samples, seed, lo, hi)),
                ));
            }
            for (w, h) in handles {
                results[w] = Some(
                    h.join()
                        .expect("shard worker panicked")
                        .map_err(|e| e.to_string())
                        .unwrap_or_default(),
                );
            }
        });
        for chunk in results.into_iter().flatten() {
            shards.extend(chunk);
        }
        if shards.len() != total as usize {
            return Err(CliError::Numeric(
                "a Monte Carlo shard worker failed".into(),
            ));
        }
    }
    tensor
        .displacement_mc_finalize(&shards)
        .map_err(|e| CliError::Numeric(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nlplab_core::kernel::LinearMapSpec;
    use nlplab_core::minimizers::tensor_for_map;

    #[test]
    fn thread_count_does_not_change_bits() {
        let map = LinearMapSpec::scalar(2.0).unwrap();
        let tensor = tensor_for_map(&map, 2.0, 5).unwrap();
        let one = tensor_mc_ratio(&tensor, 300_000, 42, 1).unwrap();
        let four = tensor_mc_ratio(&tensor, 300_000, 42, 4).unwrap();
        assert_eq!(one.ratio.to_bits(), four.ratio.to_bits());
        assert_eq!(one.ratio_std_err.to_bits(), four.ratio_std_err.to_bits());
    }
}
