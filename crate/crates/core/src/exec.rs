//! Data-parallel helpers with a sequential fallback.
//!
//! Independent work items (parameter sweeps, ensembles, quadrature slabs) go
//! through [`map_ordered`]. Results always come back in input order so that
//! downstream reductions are bit-reproducible whatever the thread count.

/// How a batch of independent items is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    /// Uses rayon when the `parallel` feature is on, otherwise sequential.
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

/// Applies `f` to every item and returns the results in input order.
pub fn map_ordered<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Sum of `f(i)` over `0..n`, split into fixed slabs and reduced in order.
pub fn sum_indexed<F>(mode: ExecMode, n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let slabs: Vec<usize> = (0..n).collect();
    map_ordered(mode, &slabs, |&i| f(i)).into_iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree_bitwise() {
        let items: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let seq = map_ordered(ExecMode::Sequential, &items, |x| x * x);
        let par = map_ordered(ExecMode::Parallel, &items, |x| x * x);
        assert_eq!(seq, par);
        let a = sum_indexed(ExecMode::Sequential, 500, |i| 1.0 / (i as f64 + 1.0));
        let b = sum_indexed(ExecMode::Parallel, 500, |i| 1.0 / (i as f64 + 1.0));
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
