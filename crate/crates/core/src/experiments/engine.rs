//! Deterministic parallel sample loop and the pointwise error statistic.

use rayon::prelude::*;

use crate::stats::MomentAccumulator;
use crate::{Error, Result};

/// Evaluates `sample(i)` for `i = 0..samples` on `workers` threads and hands
/// the results to `sink` strictly in sample order.
///
/// Samples are computed in batches of `4·workers`; since each sample depends
/// only on its index and results are consumed in order, the outcome does not
/// depend on the worker count.
pub fn mc_map<T, F, S>(samples: usize, workers: usize, sample: F, mut sink: S) -> Result<()>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
    S: FnMut(usize, T) -> Result<()>,
{
    let workers = workers.max(1);
    if workers == 1 {
        for i in 0..samples {
            sink(i, sample(i)?)?;
        }
        return Ok(());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let batch = 4 * workers;
    let mut start = 0;
    while start < samples {
        let end = (start + batch).min(samples);
        let results: Vec<Result<T>> = pool.install(|| (start..end).into_par_iter().map(&sample).collect());
        for (offset, r) in results.into_iter().enumerate() {
            sink(start + offset, r?)?;
        }
        start = end;
    }
    Ok(())
}

/// `max_p E[|ref − coarse|²]^{1/2}` over the compared points, with the
/// delta-method standard error at the maximizing point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointwiseError {
    pub error: f64,
    pub stderr: f64,
    pub argmax: usize,
}

/// Reduces accumulated squared differences to the pointwise error.
pub fn pointwise_error(acc: &MomentAccumulator) -> PointwiseError {
    let mut best = PointwiseError {
        error: 0.0,
        stderr: 0.0,
        argmax: 0,
    };
    let mut best_mse = -1.0;
    for p in 0..acc.len() {
        let m = acc.mean(p);
        if m > best_mse {
            best_mse = m;
            best.argmax = p;
        }
    }
    if best_mse > 0.0 {
        best.error = best_mse.sqrt();
        best.stderr = acc.stderr(best.argmax) / (2.0 * best.error);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_workers() {
        let run = |workers| {
            let mut seen = Vec::new();
            mc_map(37, workers, |i| Ok(i * i), |i, v| {
                seen.push((i, v));
                Ok(())
            })
            .unwrap();
            seen
        };
        let one = run(1);
        assert_eq!(one, run(3));
        assert_eq!(one, run(8));
        assert_eq!(one.len(), 37);
    }

    #[test]
    fn errors_propagate() {
        let r = mc_map(10, 2, |i| if i == 7 { Err(Error::Factorization) } else { Ok(i) }, |_, _| Ok(()));
        assert!(matches!(r, Err(Error::Factorization)));
    }

    #[test]
    fn pointwise_error_takes_max_and_delta_stderr() {
        let mut acc = MomentAccumulator::new(2);
        acc.push(&[1.0, 4.0]);
        acc.push(&[1.0, 12.0]);
        let e = pointwise_error(&acc);
        assert_eq!(e.argmax, 1);
        assert!((e.error - 8f64.sqrt()).abs() < 1e-15);
        // se of the mean of {4, 12} is 4
        assert!((e.stderr - 4.0 / (2.0 * 8f64.sqrt())).abs() < 1e-15);
        let zero = pointwise_error(&MomentAccumulator::new(3));
        assert_eq!(zero.error, 0.0);
    }
}
