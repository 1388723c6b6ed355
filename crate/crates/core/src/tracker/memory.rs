use std::collections::VecDeque;
use std::sync::Arc;

/// Backbone features harvested on one frame, stored flat (`count * dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSamples {
    pub frame: usize,
    pub pos: Vec<f32>,
    pub neg: Vec<f32>,
}

/// A bounded window of the most recent frames' samples. The oldest frame is
/// evicted first.
#[derive(Debug, Clone)]
pub struct Memory {
    capacity: usize,
    frames: VecDeque<Arc<FrameSamples>>,
}

/// Feature rows gathered from a memory, oldest frame first.
pub struct Pool<'a> {
    pub rows: Vec<&'a [f32]>,
}

impl Memory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            frames: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, s: Arc<FrameSamples>) {
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(s);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn frame_stamps(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.frame).collect()
    }

    pub fn positives(&self, dim: usize) -> Pool<'_> {
        Pool {
            rows: self.frames.iter().flat_map(|f| f.pos.chunks_exact(dim)).collect(),
        }
    }

    pub fn negatives(&self, dim: usize) -> Pool<'_> {
        Pool {
            rows: self.frames.iter().flat_map(|f| f.neg.chunks_exact(dim)).collect(),
        }
    }
}
