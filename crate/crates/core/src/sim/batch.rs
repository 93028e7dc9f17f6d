use super::{run_trial, SimError, TrialLog, TrialSetup};

/// Outcome of one (condition, seed) cell of a batch.
#[derive(Debug)]
pub struct BatchEntry {
    pub condition: usize,
    pub seed: u64,
    pub result: Result<TrialLog, SimError>,
}

/// Run every condition with every seed, condition-major. The order of the
/// returned entries does not depend on `parallelism`.
pub fn run_batch(conditions: &[TrialSetup], seeds: &[u64], parallelism: usize) -> Result<Vec<BatchEntry>, SimError> {
    if conditions.is_empty() || seeds.is_empty() {
        return Err(SimError::InvalidParams("batch needs at least one condition and one seed".into()));
    }
    let cells: Vec<(usize, u64)> = (0..conditions.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let run = |&(condition, seed): &(usize, u64)| {
        let mut setup = conditions[condition].clone();
        setup.seed = seed;
        BatchEntry {
            condition,
            seed,
            result: run_trial(&setup),
        }
    };
    Ok(execute(&cells, parallelism.max(1), run))
}

/// Map `f` over `items`, in order, on up to `parallelism` worker threads.
#[cfg(feature = "parallel")]
pub fn execute<T: Sync, R: Send>(items: &[T], parallelism: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    use rayon::prelude::*;
    if parallelism <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("falling back to sequential execution: {e}");
            items.iter().map(f).collect()
        }
    }
}

/// Map `f` over `items` in order; built without the `parallel` feature.
#[cfg(not(feature = "parallel"))]
pub fn execute<T: Sync, R: Send>(items: &[T], _parallelism: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    items.iter().map(f).collect()
}
