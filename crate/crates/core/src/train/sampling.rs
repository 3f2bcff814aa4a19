use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Epoch of class-balanced mini-batches over row indices. Each batch holds
/// `ceil(b/2)` positives and `floor(b/2)` negatives, drawn by cycling through
/// per-class shuffles; the minority class is reshuffled and reused as often
/// as needed (random oversampling). The epoch has `ceil(n / b)` batches.
pub fn balanced_batches(labels: &[bool], batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 {
        return Err(Error::Config(format!("batch size {batch_size} < 2")));
    }
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Validation(format!(
            "balanced batches need both classes ({} positive, {} negative)",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_batches = labels.len().div_ceil(batch_size);
    let mut pos_stream = Cycler::new(pos);
    let mut neg_stream = Cycler::new(neg);
    let (n_pos, n_neg) = (batch_size.div_ceil(2), batch_size / 2);
    let mut batches = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        let mut batch = Vec::with_capacity(batch_size);
        for _ in 0..n_pos {
            batch.push(pos_stream.next(&mut rng));
        }
        for _ in 0..n_neg {
            batch.push(neg_stream.next(&mut rng));
        }
        batch.shuffle(&mut rng);
        batches.push(batch);
    }
    Ok(batches)
}

/// Plain shuffled mini-batches covering every row once.
pub fn shuffled_batches(n: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

struct Cycler {
    items: Vec<usize>,
    pos: usize,
}

impl Cycler {
    fn new(items: Vec<usize>) -> Self {
        let pos = items.len();
        Self { items, pos }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.pos == self.items.len() {
            self.items.shuffle(rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.items[self.pos - 1]
    }
}
