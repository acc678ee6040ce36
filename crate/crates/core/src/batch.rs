//! Per-image batch evaluation. With the `parallel` feature images are spread
//! over a rayon pool; otherwise they run in order on the calling thread.
//! Either way results come back in input order and are identical.

use crate::error::Result;
use crate::io::Dataset;
use crate::nn::engine::{argmax, ForwardResult, ScEngine};
use crate::nn::generators::rank_phase_offsets;
use crate::nn::model::Network;
use crate::nn::spec::{normalize_weights, NormalizeOptions, ScParams};
use crate::reference::{float_forward, FloatTensor};

/// Runs `f(0..n)` on the calling thread.
pub fn map_sequential<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T>,
{
    (0..n).map(f).collect()
}

/// Runs `f(0..n)` on `workers` threads (0 means one per core).
#[cfg(feature = "parallel")]
pub fn map_parallel<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    if workers == 1 {
        return map_sequential(n, f);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| crate::error::ScError::OutOfRange(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

/// Parallel when the feature is on, sequential otherwise.
pub fn map_indexed<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_parallel(n, workers, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        map_sequential(n, f)
    }
}

/// SC forward pass on every image of `data`.
pub fn sc_forward_all(
    engine: &ScEngine,
    data: &Dataset,
    workers: usize,
) -> Result<Vec<ForwardResult>> {
    let width = engine.spec().params.width;
    map_indexed(data.len(), workers, |i| {
        engine.forward(&data.levels(i, width))
    })
}

/// Float logits for every image of `data`.
pub fn float_forward_all(net: &Network, data: &Dataset, workers: usize) -> Result<Vec<Vec<f64>>> {
    map_indexed(data.len(), workers, |i| {
        float_forward(&data.bipolar(i), net)
    })
}

/// Float pass on arbitrary tensors.
pub fn float_forward_tensors(
    net: &Network,
    images: &[FloatTensor],
    workers: usize,
) -> Result<Vec<Vec<f64>>> {
    map_indexed(images.len(), workers, |i| float_forward(&images[i], net))
}

/// Tries the `candidates` best-ranked `R_w` phase offsets (same polynomial
/// as `R_x`) and returns the seed whose SC predictions agree most often
/// with the float predictions on `data`, with that agreement count. Ties go
/// to the better-ranked seed.
pub fn select_weight_seed(
    net: &Network,
    params: ScParams,
    options: &NormalizeOptions,
    data: &Dataset,
    candidates: usize,
    workers: usize,
) -> Result<(u32, usize)> {
    let float: Vec<usize> = float_forward_all(net, data, workers)?
        .iter()
        .map(|l| argmax(l))
        .collect();
    let ranked = rank_phase_offsets(params.r_x.lfsr(params.width)?)?;
    let mut best = (params.r_w.seed, 0);
    for (rank, c) in ranked.iter().take(candidates.max(1)).enumerate() {
        let mut trial = params;
        trial.r_w.taps = params.r_x.taps;
        trial.r_w.seed = c.seed;
        let engine = ScEngine::new(normalize_weights(net, trial, options)?)?;
        let sc = sc_forward_all(&engine, data, workers)?;
        let agree = sc
            .iter()
            .zip(&float)
            .filter(|(r, &f)| r.predicted == f)
            .count();
        log::info!("R_w seed {}: {agree}/{} agreement", c.seed, data.len());
        if rank == 0 || agree > best.1 {
            best = (c.seed, agree);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ScError;

    #[test]
    fn order_preserved() {
        let out = map_indexed(50, 4, |i| Ok(i * i)).unwrap();
        assert_eq!(out, (0..50).map(|i| i * i).collect::<Vec<_>>());
        assert_eq!(map_sequential(50, |i| Ok(i * i)).unwrap(), out);
    }

    #[test]
    fn first_error_propagates() {
        let r = map_indexed(10, 2, |i| {
            if i == 7 {
                Err(ScError::EmptyDataset)
            } else {
                Ok(i)
            }
        });
        assert!(r.is_err());
    }
}
