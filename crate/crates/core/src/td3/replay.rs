use rand::Rng;

use super::agent::Batch;
use super::Transition;

/// Fixed-capacity ring of transitions; the oldest entry is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    s: Vec<f64>,
    a: Vec<f64>,
    r: Vec<f64>,
    s_next: Vec<f64>,
    done: Vec<bool>,
    len: usize,
    next: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            obs_dim,
            act_dim,
            s: Vec::new(),
            a: Vec::new(),
            r: Vec::new(),
            s_next: Vec::new(),
            done: Vec::new(),
            len: 0,
            next: 0,
            inserted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total insertions, including evicted ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, s: &[f64], a: &[f64], r: f64, s_next: &[f64], done: bool) {
        assert_eq!(s.len(), self.obs_dim, "state dimension");
        assert_eq!(a.len(), self.act_dim, "action dimension");
        assert_eq!(s_next.len(), self.obs_dim, "next-state dimension");
        if self.len < self.capacity {
            self.s.extend_from_slice(s);
            self.a.extend_from_slice(a);
            self.r.push(r);
            self.s_next.extend_from_slice(s_next);
            self.done.push(done);
            self.len += 1;
        } else {
            let i = self.next;
            self.s[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(s);
            self.a[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(a);
            self.r[i] = r;
            self.s_next[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(s_next);
            self.done[i] = done;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    pub fn push_transition(&mut self, t: &Transition) {
        self.push(&t.s, &t.a, t.r, &t.s_next, t.done);
    }

    pub fn get(&self, i: usize) -> Transition {
        assert!(i < self.len, "index {i} outside buffer of {}", self.len);
        Transition {
            s: self.s[i * self.obs_dim..(i + 1) * self.obs_dim].to_vec(),
            a: self.a[i * self.act_dim..(i + 1) * self.act_dim].to_vec(),
            r: self.r[i],
            s_next: self.s_next[i * self.obs_dim..(i + 1) * self.obs_dim].to_vec(),
            done: self.done[i],
        }
    }

    /// Slot indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        assert!(self.len > 0, "sampling from an empty buffer");
        (0..n).map(|_| rng.random_range(0..self.len)).collect()
    }

    /// Fills `out` with `n` uniformly drawn transitions.
    pub fn sample_into<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, out: &mut Batch) {
        *out = Batch::with_dims(self.obs_dim, self.act_dim);
        for i in self.sample_indices(n, rng) {
            out.push(
                &self.s[i * self.obs_dim..(i + 1) * self.obs_dim],
                &self.a[i * self.act_dim..(i + 1) * self.act_dim],
                self.r[i],
                &self.s_next[i * self.obs_dim..(i + 1) * self.obs_dim],
                self.done[i],
            );
        }
    }
}
