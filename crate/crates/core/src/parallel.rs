//! Indexed map helpers that run on rayon with the `parallel` feature and
//! sequentially without it. Results always come back in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Whether this build spreads work over rayon.
pub const ENABLED: bool = cfg!(feature = "parallel");

pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Fallible variant of [`map_indexed`]; the first error in index order wins
/// in the sequential build, any error may win in the parallel one.
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_index_order() {
        let v = map_indexed(100, |i| i * i);
        assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn propagates_errors() {
        let r: Result<Vec<usize>, String> = try_map_indexed(10, |i| if i == 3 { Err("three".into()) } else { Ok(i) });
        assert!(r.is_err());
    }
}
