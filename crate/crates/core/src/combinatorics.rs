//! Permutations and tuples-with-replacement over index ranges.

/// All permutations of `0..n` in lexicographic order, identity first.
pub fn permutations(n: usize) -> Permutations {
    Permutations { current: Some((0..n).collect()) }
}

#[derive(Debug, Clone)]
pub struct Permutations {
    current: Option<Vec<usize>>,
}

impl Iterator for Permutations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.take()?;
        let mut next = out.clone();
        // Standard next-permutation step.
        if let Some(i) = (1..next.len()).rev().find(|&i| next[i - 1] < next[i]) {
            let pivot = i - 1;
            let j = (i..next.len()).rev().find(|&j| next[j] > next[pivot]).expect("exists");
            next.swap(pivot, j);
            next[i..].reverse();
            self.current = Some(next);
        }
        Some(out)
    }
}

/// All `len`-tuples over `0..base` in odometer order (last position fastest).
pub fn cartesian_power(base: usize, len: usize) -> CartesianPower {
    let current = if base == 0 && len > 0 { None } else { Some(vec![0; len]) };
    CartesianPower { base, current }
}

#[derive(Debug, Clone)]
pub struct CartesianPower {
    base: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for CartesianPower {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.take()?;
        let mut next = out.clone();
        for pos in (0..next.len()).rev() {
            next[pos] += 1;
            if next[pos] < self.base {
                self.current = Some(next);
                break;
            }
            next[pos] = 0;
        }
        Some(out)
    }
}

pub fn has_repeats(items: &[usize]) -> bool {
    items.iter().enumerate().any(|(i, a)| items[..i].contains(a))
}
