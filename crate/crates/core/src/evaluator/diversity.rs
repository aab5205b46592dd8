use std::collections::HashSet;

use crate::numeric::{ratio_of, running_mean, Real};
use crate::text::words;

use super::EvalError;

/// Unique n-grams over total n-grams across the corpus, on the caption
/// tokenizer's normalized tokens.
pub fn distinct_n<T: Real, S: AsRef<str>>(captions: &[S], n: usize) -> Result<T, EvalError> {
    if n == 0 {
        return Err(EvalError::InvalidInput("n must be at least 1".into()));
    }
    let mut unique = HashSet::new();
    let mut total = 0usize;
    for caption in captions {
        let tokens = words(caption.as_ref());
        for gram in tokens.windows(n) {
            total += 1;
            unique.insert(gram.to_vec());
        }
    }
    ratio_of(unique.len(), total)
        .ok_or_else(|| EvalError::InvalidInput(format!("no caption has {n} or more tokens")))
}

/// One minus the mean strictly-upper-triangle similarity.
pub fn semantic_diversity<T: Real>(similarity: &[Vec<T>]) -> Result<T, EvalError> {
    let size = similarity.len();
    if size < 2 || similarity.iter().any(|row| row.len() != size) {
        return Err(EvalError::InvalidInput("similarity matrix must be square with at least two rows".into()));
    }
    let tolerance = T::epsilon() * T::from_f64(16.0).expect("small constant");
    for i in 0..size {
        if (similarity[i][i] - T::one()).abs() > tolerance {
            return Err(EvalError::InvalidInput(format!("diagonal entry {i} is not 1")));
        }
        for j in i + 1..size {
            if (similarity[i][j] - similarity[j][i]).abs() > tolerance {
                return Err(EvalError::InvalidInput(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    let upper = (0..size).flat_map(|i| (i + 1..size).map(move |j| (i, j))).map(|(i, j)| similarity[i][j]);
    let mean = running_mean(upper).expect("at least one pair");
    Ok(T::one() - mean)
}
