use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::RetrievalResult;
use crate::error::{Error, Result};

/// Draws `k` distinct ids uniformly. Every result scores 0; rank follows draw
/// order.
pub fn random_retrieve(unit_ids: &[u32], k: usize, seed: u64) -> Result<Vec<RetrievalResult>> {
    if k > unit_ids.len() {
        return Err(Error::invalid(format!(
            "cannot draw {k} of {} units",
            unit_ids.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, unit_ids.len(), k)
        .into_iter()
        .enumerate()
        .map(|(i, idx)| RetrievalResult {
            unit_id: unit_ids[idx],
            score: 0.0,
            rank: i + 1,
        })
        .collect())
}
