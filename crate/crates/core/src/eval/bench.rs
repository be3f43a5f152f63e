use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::Pipeline;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub threads: usize,
    pub mentions: usize,
    pub repetitions: usize,
    /// Median over repetitions.
    pub mentions_per_sec: f64,
    pub median_wall_secs: f64,
    pub layers: usize,
    pub d: usize,
    pub kb_size: usize,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Times `pipeline.normalize_all` on a dedicated pool of `threads` workers
/// (all cores when 0).
pub fn bench_throughput<S: AsRef<str> + Sync>(
    pipeline: &Pipeline<'_>,
    mentions: &[S],
    warmup: usize,
    repetitions: usize,
    threads: usize,
) -> Result<BenchReport> {
    if mentions.is_empty() {
        return Err(Error::EmptyInput("nothing to benchmark".into()));
    }
    if repetitions == 0 {
        return Err(Error::Spec("repetitions must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    let walls = pool.install(|| -> Result<Vec<f64>> {
        for _ in 0..warmup {
            pipeline.normalize_all(mentions)?;
        }
        (0..repetitions)
            .map(|_| {
                let t = Instant::now();
                pipeline.normalize_all(mentions)?;
                Ok(t.elapsed().as_secs_f64())
            })
            .collect()
    })?;
    let wall = median(walls);
    let cfg = pipeline.mtcg.config();
    Ok(BenchReport {
        threads,
        mentions: mentions.len(),
        repetitions,
        mentions_per_sec: mentions.len() as f64 / wall.max(f64::MIN_POSITIVE),
        median_wall_secs: wall,
        layers: cfg.layers,
        d: cfg.d,
        kb_size: pipeline.kb.len(),
    })
}
