use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use rand::Rng as _;

use crate::seed::{self, tag, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayItem {
    pub features: Vec<f64>,
    pub label: usize,
    pub task: usize,
}

#[derive(Debug, Clone)]
struct Slot {
    item: ReplayItem,
    /// Position of this item inside its task's index list.
    task_pos: usize,
}

/// Random-sampling memory with a global capacity and a per-task cap.
///
/// Within a task, items are kept by reservoir sampling over everything that
/// task has offered; when the whole buffer is full a uniformly random stored
/// item is evicted to make room.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    per_task_cap: usize,
    slots: Vec<Slot>,
    by_task: BTreeMap<usize, Vec<usize>>,
    seen: BTreeMap<usize, u64>,
    rng: Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, per_task_cap: usize, seed_value: u64) -> Result<Self> {
        if capacity == 0 || per_task_cap == 0 {
            return Err(Error::config("replay capacity and per-task cap must be >= 1"));
        }
        Ok(ReplayBuffer {
            capacity,
            per_task_cap,
            slots: Vec::new(),
            by_task: BTreeMap::new(),
            seen: BTreeMap::new(),
            rng: seed::rng(seed_value, &[tag::REPLAY]),
        })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn per_task_cap(&self) -> usize {
        self.per_task_cap
    }

    pub fn task_count(&self, task: usize) -> usize {
        self.by_task.get(&task).map_or(0, Vec::len)
    }

    pub fn items(&self) -> impl Iterator<Item = &ReplayItem> {
        self.slots.iter().map(|s| &s.item)
    }

    /// Offer every row of `features` (with its label) as an item of `task`.
    pub fn insert(&mut self, features: ArrayView2<f64>, labels: &[usize], task: usize) -> Result<()> {
        if features.nrows() != labels.len() {
            return Err(Error::config(format!(
                "{} rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        for (row, &label) in features.outer_iter().zip(labels) {
            self.offer(ReplayItem {
                features: row.to_vec(),
                label,
                task,
            });
        }
        debug_assert!(self.check_invariants().is_ok());
        Ok(())
    }

    fn offer(&mut self, item: ReplayItem) {
        let task = item.task;
        let seen = self.seen.entry(task).or_insert(0);
        *seen += 1;
        let seen = *seen;
        let count = self.task_count(task);
        if count < self.per_task_cap {
            if self.slots.len() == self.capacity {
                let victim = self.rng.random_range(0..self.slots.len());
                self.remove(victim);
            }
            self.push(item);
        } else {
            let j = self.rng.random_range(0..seen);
            if (j as usize) < count {
                let idx = self.by_task[&task][j as usize];
                self.slots[idx].item = item;
            }
        }
    }

    fn push(&mut self, item: ReplayItem) {
        let list = self.by_task.entry(item.task).or_default();
        list.push(self.slots.len());
        let task_pos = list.len() - 1;
        self.slots.push(Slot { item, task_pos });
    }

    fn remove(&mut self, idx: usize) {
        // The last slot is about to move into `idx`.
        let last = self.slots.len() - 1;
        if idx != last {
            let moving = &self.slots[last];
            self.by_task.get_mut(&moving.item.task).expect("indexed task")[moving.task_pos] = idx;
        }
        let removed = self.slots.swap_remove(idx);
        let list = self.by_task.get_mut(&removed.item.task).expect("indexed task");
        list.swap_remove(removed.task_pos);
        if let Some(&moved) = list.get(removed.task_pos) {
            self.slots[moved].task_pos = removed.task_pos;
        }
        if list.is_empty() {
            self.by_task.remove(&removed.item.task);
        }
    }

    /// Draw `n` distinct stored items uniformly at random.
    pub fn sample(&mut self, n: usize) -> Result<(Array2<f64>, Vec<usize>)> {
        if self.slots.is_empty() {
            return Err(Error::Empty("cannot sample from an empty replay buffer".into()));
        }
        if n > self.slots.len() {
            return Err(Error::OutOfRange(format!(
                "requested {n} items from a buffer holding {}",
                self.slots.len()
            )));
        }
        let picks = self.sample_indices(n);
        let dim = self.slots[0].item.features.len();
        let mut x = Array2::zeros((n, dim));
        let mut y = Vec::with_capacity(n);
        for (r, &i) in picks.iter().enumerate() {
            let item = &self.slots[i].item;
            x.row_mut(r).assign(&ndarray::ArrayView1::from(&item.features));
            y.push(item.label);
        }
        Ok((x, y))
    }

    /// Storage positions of `n` distinct items (uniform without replacement).
    pub fn sample_indices(&mut self, n: usize) -> Vec<usize> {
        index::sample(&mut self.rng, self.slots.len(), n.min(self.slots.len())).into_vec()
    }

    /// Verify the size, cap and index bookkeeping.
    pub fn check_invariants(&self) -> Result<()> {
        if self.slots.len() > self.capacity {
            return Err(Error::OutOfRange(format!(
                "buffer holds {} items, capacity {}",
                self.slots.len(),
                self.capacity
            )));
        }
        let mut total = 0;
        for (&task, list) in &self.by_task {
            if list.len() > self.per_task_cap {
                return Err(Error::OutOfRange(format!(
                    "task {task} holds {} items, cap {}",
                    list.len(),
                    self.per_task_cap
                )));
            }
            for (pos, &idx) in list.iter().enumerate() {
                let slot = &self.slots[idx];
                if slot.item.task != task || slot.task_pos != pos {
                    return Err(Error::config("replay index out of sync"));
                }
            }
            total += list.len();
        }
        if total != self.slots.len() {
            return Err(Error::config("replay index out of sync"));
        }
        Ok(())
    }
}
