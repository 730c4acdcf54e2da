//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the helpers fan out over rayon's
//! global pool. Without it, or with [`Exec::Sequential`], the same work runs
//! on the calling thread. Results are always collected in input order and any
//! reductions are performed sequentially afterwards, so both paths produce
//! bit-identical output.

/// Execution policy for the data-parallel inner loops. Defaults to
/// `Parallel` when the feature is enabled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Exec {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

/// Maps `f` over `items` and collects the results in order.
pub fn map_collect<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        Exec::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
    }
}

/// Maps `f` over `0..n` and collects the results in order.
pub fn map_range<R, F>(exec: Exec, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        Exec::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
    }
}

/// Maps `f` over fixed-size chunks of `items`, collecting per-chunk results
/// in order. Chunk boundaries depend only on `chunk`, never on thread count.
pub fn map_chunks<T, R, F>(exec: Exec, items: &[T], chunk: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    match exec {
        Exec::Sequential => items.chunks(chunk).map(f).collect(),
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            items.par_chunks(chunk).map(f).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_default_agree() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let a: Vec<f64> = map_chunks(Exec::Sequential, &xs, 7, |c| c.iter().sum());
        let b: Vec<f64> = map_chunks(Exec::default(), &xs, 7, |c| c.iter().sum());
        assert_eq!(a, b);
        let c = map_range(Exec::default(), 10, |i| i * i);
        assert_eq!(c, (0..10).map(|i| i * i).collect::<Vec<_>>());
    }
}
