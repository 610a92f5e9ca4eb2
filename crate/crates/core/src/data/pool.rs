use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{bail, Result};
use crate::taxonomy::{ClassSet, Taxonomy, CLASS_COUNT};

pub const DEFAULT_BATCH_SIZE: usize = 4;

/// Buffer that releases a random batch whenever its occupancy exceeds the
/// batch size.
#[derive(Debug, Clone)]
pub struct ImagePool<T> {
    capacity: usize,
    batch_size: usize,
    drop_last: bool,
    active: ClassSet,
    buffer: Vec<T>,
    rng: ChaCha8Rng,
}

impl<T> ImagePool<T> {
    /// Pool sized to the number of active classes.
    pub fn for_classes(active: ClassSet, batch_size: usize, seed: u64) -> Result<Self> {
        Self::new(active.len(), active, batch_size, seed)
    }

    pub fn new(capacity: usize, active: ClassSet, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            bail!(InvalidArgument, "batch size must be positive");
        }
        if capacity < batch_size + 1 {
            bail!(InvalidArgument, "pool capacity {capacity} must be at least batch size + 1 = {}", batch_size + 1);
        }
        Ok(ImagePool {
            capacity,
            batch_size,
            drop_last: false,
            active,
            buffer: Vec::with_capacity(capacity),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn with_drop_last(mut self, drop_last: bool) -> Self {
        self.drop_last = drop_last;
        self
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn occupancy(&self) -> usize {
        self.buffer.len()
    }

    /// Admit one sample; returns a batch once occupancy surpasses the batch size.
    pub fn push(&mut self, task: usize, item: T) -> Result<Option<Vec<T>>> {
        if !self.active.contains(task) {
            let code = if task < CLASS_COUNT { Taxonomy::canonical().code(task) } else { "?" };
            bail!(InvalidSample, "task {task} ({code}) is not among the classes of this run");
        }
        self.buffer.push(item);
        if self.buffer.len() > self.batch_size {
            return Ok(Some(self.draw(self.batch_size)));
        }
        Ok(None)
    }

    /// Remaining samples as a short batch, or nothing when `drop_last` is set.
    pub fn flush(&mut self) -> Option<Vec<T>> {
        if self.buffer.is_empty() {
            return None;
        }
        let n = self.buffer.len();
        let rest = self.draw(n);
        if self.drop_last {
            None
        } else {
            Some(rest)
        }
    }

    /// Uniform selection without replacement.
    fn draw(&mut self, n: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let i = self.rng.random_range(0..self.buffer.len());
            out.push(self.buffer.swap_remove(i));
        }
        out
    }
}

/// Feed a whole stream of `(task, item)` pairs and flush at the end.
pub fn pool_feed<T>(pool: &mut ImagePool<T>, stream: impl IntoIterator<Item = (usize, T)>) -> Result<Vec<Vec<T>>> {
    let mut batches = Vec::new();
    for (task, item) in stream {
        if let Some(b) = pool.push(task, item)? {
            batches.push(b);
        }
    }
    batches.extend(pool.flush());
    Ok(batches)
}

/// Round-robin over per-class shuffled queues, classes in registry order.
pub fn interleave_by_class<T, R: Rng + ?Sized>(items: Vec<(usize, T)>, rng: &mut R) -> Vec<(usize, T)> {
    let mut queues: Vec<Vec<(usize, T)>> = (0..CLASS_COUNT).map(|_| Vec::new()).collect();
    let mut extra: Vec<(usize, T)> = Vec::new();
    let total = items.len();
    for (task, item) in items {
        match queues.get_mut(task) {
            Some(q) => q.push((task, item)),
            None => extra.push((task, item)),
        }
    }
    let mut queues: Vec<VecDeque<(usize, T)>> = queues
        .into_iter()
        .map(|mut q| {
            q.shuffle(rng);
            q.into()
        })
        .collect();
    let mut out = Vec::with_capacity(total);
    while out.len() + extra.len() < total {
        for q in queues.iter_mut() {
            if let Some(x) = q.pop_front() {
                out.push(x);
            }
        }
    }
    out.extend(extra);
    out
}
