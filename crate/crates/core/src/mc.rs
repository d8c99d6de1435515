//! Chunked Monte-Carlo plumbing with per-chunk streams.
//!
//! Every chunk owns a ChaCha stream derived from `(seed, chunk index)` and the
//! per-chunk results are reduced in chunk order, so estimates do not depend on
//! the number of worker threads.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MCConfig {
    pub outer_samples: usize,
    pub inner_samples: usize,
    pub seed: u64,
    pub chunk_size: usize,
}

impl Default for MCConfig {
    fn default() -> Self {
        MCConfig { outer_samples: 10_000, inner_samples: 64, seed: 0, chunk_size: 1000 }
    }
}

impl MCConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_samples == 0 || self.inner_samples == 0 || self.chunk_size == 0 {
            return Err(Error::InvalidArgument("MC counts must be >= 1".into()));
        }
        Ok(())
    }

    /// Chunk ranges over the outer samples. At least two chunks are used when
    /// possible so that a jackknife error is always defined.
    pub fn chunks(&self) -> Vec<Range<usize>> {
        let n = self.outer_samples;
        let size = if n >= 2 && self.chunk_size >= n { n.div_ceil(2) } else { self.chunk_size };
        (0..n).step_by(size).map(|s| s..(s + size).min(n)).collect()
    }
}

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `f` on each chunk in parallel and returns the results in chunk order.
pub fn map_chunks<T, F>(cfg: &MCConfig, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>, &mut ChaCha8Rng) -> T + Sync,
{
    cfg.chunks()
        .into_par_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut rng = stream_rng(cfg.seed, i as u64);
            f(r, &mut rng)
        })
        .collect()
}

/// Per-chunk sums of several per-sample quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkSums {
    pub count: usize,
    pub sums: Vec<f64>,
}

impl ChunkSums {
    pub fn new(width: usize) -> Self {
        ChunkSums { count: 0, sums: vec![0.0; width] }
    }

    pub fn push(&mut self, values: &[f64]) {
        self.count += 1;
        for (s, v) in self.sums.iter_mut().zip(values) {
            *s += v;
        }
    }
}

/// Pooled means of all chunks.
pub fn pooled_means(chunks: &[ChunkSums]) -> Vec<f64> {
    let width = chunks.first().map_or(0, |c| c.sums.len());
    let n: usize = chunks.iter().map(|c| c.count).sum();
    (0..width)
        .map(|k| chunks.iter().map(|c| c.sums[k]).sum::<f64>() / n as f64)
        .collect()
}

/// Delete-one-chunk jackknife of a statistic of the pooled means.
/// Returns (estimate on all chunks, standard error).
pub fn jackknife<F: Fn(&[f64]) -> f64>(chunks: &[ChunkSums], stat: F) -> (f64, f64) {
    let full = stat(&pooled_means(chunks));
    let g = chunks.len();
    if g < 2 {
        return (full, f64::NAN);
    }
    let width = chunks[0].sums.len();
    let total_n: usize = chunks.iter().map(|c| c.count).sum();
    let totals: Vec<f64> = (0..width).map(|k| chunks.iter().map(|c| c.sums[k]).sum()).collect();
    let leave_out: Vec<f64> = chunks
        .iter()
        .map(|c| {
            let n = (total_n - c.count) as f64;
            let means: Vec<f64> = (0..width).map(|k| (totals[k] - c.sums[k]) / n).collect();
            stat(&means)
        })
        .collect();
    let mean = leave_out.iter().sum::<f64>() / g as f64;
    let var = leave_out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() * (g - 1) as f64 / g as f64;
    (full, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn chunks_cover_all_samples() {
        let cfg = MCConfig { outer_samples: 2503, chunk_size: 500, ..Default::default() };
        let ch = cfg.chunks();
        assert_eq!(ch.len(), 6);
        assert_eq!(ch.last().unwrap().end, 2503);
        let single = MCConfig { outer_samples: 10, chunk_size: 100, ..Default::default() };
        assert_eq!(single.chunks().len(), 2);
    }

    #[test]
    fn jackknife_of_mean_matches_chunk_mean_spread() {
        let cfg = MCConfig { outer_samples: 4000, chunk_size: 400, seed: 3, ..Default::default() };
        let chunks = map_chunks(&cfg, |r, rng| {
            let mut s = ChunkSums::new(1);
            for _ in r {
                s.push(&[rng.random::<f64>()]);
            }
            s
        });
        let (m, se) = jackknife(&chunks, |m| m[0]);
        assert!((m - 0.5).abs() < 4.0 * se);
        // uniform variance 1/12 over 4000 samples
        let expect = (1.0f64 / 12.0 / 4000.0).sqrt();
        assert!((se / expect - 1.0).abs() < 0.6, "se {se} vs {expect}");
    }

    #[test]
    fn results_do_not_depend_on_pool_size() {
        let cfg = MCConfig { outer_samples: 5000, chunk_size: 300, seed: 11, ..Default::default() };
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let chunks = map_chunks(&cfg, |r, rng| {
                    let mut s = ChunkSums::new(1);
                    for _ in r {
                        s.push(&[rng.random::<f64>().ln()]);
                    }
                    s
                });
                jackknife(&chunks, |m| m[0])
            })
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }
}
