use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trajkit::MaskedTrajectory;
use crate::tvae::{ensemble_moments, predict_ensemble, TvaeModel};

/// Calls discarded before timing starts.
pub const WARMUP_CALLS: usize = 10;
pub const MIN_REPS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencyReport {
    pub median_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub samples: usize,
    pub reps: usize,
}

/// Nearest-rank summary of wall-clock times in milliseconds.
pub fn summarize(mut times_ms: Vec<f64>, samples: usize) -> LatencyReport {
    times_ms.sort_by(f64::total_cmp);
    let n = times_ms.len();
    let rank = |q: f64| times_ms[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
    LatencyReport {
        median_ms: rank(0.5),
        p95_ms: rank(0.95),
        max_ms: times_ms[n - 1],
        samples,
        reps: n,
    }
}

/// Time `reps` calls of `f` after [`WARMUP_CALLS`] untimed ones.
pub fn time_calls(mut f: impl FnMut() -> Result<()>, reps: usize, samples: usize) -> Result<LatencyReport> {
    if reps < MIN_REPS {
        return Err(Error::Config(format!("latency needs at least {MIN_REPS} repetitions, got {reps}")));
    }
    for _ in 0..WARMUP_CALLS {
        f()?;
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(summarize(times, samples))
}

/// Latency of a full prediction: encode, `samples` decodes and, for two or
/// more samples, the ensemble moments.
pub fn latency_bench(m: &TvaeModel, prefix: &MaskedTrajectory, samples: usize, reps: usize, seed: u64) -> Result<LatencyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    time_calls(
        || {
            let e = predict_ensemble(m, prefix, samples, &mut rng)?;
            if samples >= 2 {
                std::hint::black_box(ensemble_moments(&e)?);
            } else {
                std::hint::black_box(e.mean());
            }
            Ok(())
        },
        reps,
        samples,
    )
}
