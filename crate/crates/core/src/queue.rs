//! Bucketed priority queue for wave fronts.
//!
//! Priorities are small bounded integers (squared distances up to the
//! truncation threshold), so each priority gets its own FIFO bucket. Pops
//! return the lowest priority first and, among equal priorities, the oldest
//! insertion. The same coordinate may be queued any number of times.

use std::collections::VecDeque;

use crate::coord::Coord;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueueEntry {
    pub priority: u32,
    pub seq: u64,
    pub coord: Coord,
}

#[derive(Clone, Debug, Default)]
pub struct WaveQueue {
    buckets: Vec<VecDeque<(u64, Coord)>>,
    /// No bucket below this index holds an entry.
    cursor: usize,
    len: usize,
    seq: u64,
}

impl WaveQueue {
    /// A queue pre-sized for priorities in `0..=max_priority`. Larger
    /// priorities are still accepted and grow the bucket table.
    pub fn with_max_priority(max_priority: u32) -> Self {
        WaveQueue {
            buckets: vec![VecDeque::new(); max_priority as usize + 1],
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, priority: u32, coord: Coord) {
        let p = priority as usize;
        if p >= self.buckets.len() {
            self.buckets.resize_with(p + 1, VecDeque::new);
        }
        self.buckets[p].push_back((self.seq, coord));
        self.seq += 1;
        if self.len == 0 || p < self.cursor {
            self.cursor = p;
        }
        self.len += 1;
    }

    pub fn pop(&mut self) -> Option<QueueEntry> {
        if self.len == 0 {
            return None;
        }
        while self.buckets[self.cursor].is_empty() {
            self.cursor += 1;
        }
        let (seq, coord) = self.buckets[self.cursor].pop_front()?;
        self.len -= 1;
        Some(QueueEntry {
            priority: self.cursor as u32,
            seq,
            coord,
        })
    }

    pub fn clear(&mut self) {
        self.buckets.iter_mut().for_each(VecDeque::clear);
        self.cursor = 0;
        self.len = 0;
    }

    /// Total insertions since creation.
    pub fn pushes(&self) -> u64 {
        self.seq
    }
}
