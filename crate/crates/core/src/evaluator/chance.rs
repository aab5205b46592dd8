use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concept::TaskKind;
use crate::negatives::{negative_count, Scheme};
use crate::numeric::{ratio_of, Real};

use super::EvalError;

const CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChanceEstimate {
    pub correct: usize,
    pub trials: usize,
    pub candidates: usize,
}

impl ChanceEstimate {
    pub fn accuracy<T: Real>(&self) -> T {
        ratio_of(self.correct, self.trials).expect("at least one trial")
    }
}

/// Monte Carlo accuracy of a scorer that assigns i.i.d. uniform scores.
/// Chunks draw from independent ChaCha streams, so the estimate does not
/// depend on the thread count.
pub fn simulate_random_chance(
    task: TaskKind,
    n: usize,
    scheme: Scheme,
    trials: usize,
    seed: u64,
) -> Result<ChanceEstimate, EvalError> {
    if trials == 0 {
        return Err(EvalError::InvalidInput("trials must be at least 1".into()));
    }
    let negatives = negative_count(task, n, scheme)
        .map_err(|e| EvalError::InvalidInput(e.to_string()))?
        .to_usize()
        .ok_or_else(|| EvalError::InvalidInput("candidate set too large to simulate".into()))?;
    let chunks = trials.div_ceil(CHUNK);
    let correct = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let size = CHUNK.min(trials - chunk * CHUNK);
            (0..size)
                .filter(|_| {
                    let positive: f64 = rng.random();
                    (0..negatives).all(|_| rng.random::<f64>() < positive)
                })
                .count()
        })
        .sum();
    Ok(ChanceEstimate { correct, trials, candidates: negatives + 1 })
}
