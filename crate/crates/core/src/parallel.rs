//! Execution strategy for the data-parallel loops.
//!
//! Every reduction goes through fixed-size chunks whose partial results are
//! combined in chunk order, so the sequential and parallel paths produce
//! bitwise-identical floating-point output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of items folded into one partial result before chunk partials are combined.
pub const REDUCTION_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise identical to `Sequential`.
    Parallel,
}

impl Default for Strategy {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Strategy::Parallel
        } else {
            Strategy::Sequential
        }
    }
}

impl Strategy {
    /// Ordered map over a slice.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Strategy::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    /// Ordered map over each `REDUCTION_CHUNK`-sized chunk of a slice.
    pub fn map_chunks<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&[T]) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Strategy::Parallel => items.par_chunks(REDUCTION_CHUNK).map(f).collect(),
            _ => items.chunks(REDUCTION_CHUNK).map(f).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree_on_chunked_sums() {
        let xs: Vec<f64> = (0..10_000).map(|i| (i as f64).sin() * 1e-3 + 1.0 / (i as f64 + 1.0)).collect();
        let sum = |s: Strategy| -> f64 {
            s.map_chunks(&xs, |c| c.iter().sum::<f64>())
                .into_iter()
                .sum()
        };
        assert_eq!(sum(Strategy::Sequential).to_bits(), sum(Strategy::Parallel).to_bits());
    }

    #[test]
    fn map_preserves_order() {
        let xs: Vec<u32> = (0..1000).collect();
        assert_eq!(Strategy::Parallel.map(&xs, |x| x * 2), Strategy::Sequential.map(&xs, |x| x * 2));
    }
}
