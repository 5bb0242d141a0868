//! Worker pool and ordered parallel maps.

use rayon::prelude::*;

use crate::error::{LabError, LabResult};

pub const WORKERS_ENV: &str = "WIDTH_SDE_WORKERS";

/// Flag, then config, then `WIDTH_SDE_WORKERS`, then the available parallelism.
pub fn resolve_workers(flag: Option<usize>, config: Option<usize>) -> LabResult<usize> {
    if let Some(n) = flag.or(config) {
        return if n > 0 { Ok(n) } else { Err(LabError::config("workers must be positive")) };
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(LabError::config(format!("{WORKERS_ENV}={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn build_pool(workers: usize) -> LabResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| LabError::Pool(e.to_string()))
}

/// `f(0), …, f(n − 1)` evaluated on the pool, returned in index order.
pub fn ordered_map<T: Send>(pool: &rayon::ThreadPool, n: u64, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_workers() {
        let f = |i: u64| (i as f64 * 0.7).sin();
        let a = ordered_map(&build_pool(1).unwrap(), 1000, f);
        let b = ordered_map(&build_pool(4).unwrap(), 1000, f);
        assert_eq!(a, b);
    }

    #[test]
    fn explicit_workers_win() {
        assert_eq!(resolve_workers(Some(3), Some(5)).unwrap(), 3);
        assert_eq!(resolve_workers(None, Some(5)).unwrap(), 5);
        assert!(resolve_workers(Some(0), None).is_err());
    }
}
