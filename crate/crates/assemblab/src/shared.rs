//! Rank system storage that several lanes may scatter into at once.

use std::sync::atomic::{AtomicU64, Ordering};

use assemblab_core::kernels::ElementSystem;
use assemblab_core::sparse::{CsrMatrix, Rhs, ScatterMap};

/// How a scalar accumulation into shared storage is performed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMode {
    /// Indivisible read-modify-write.
    Indivisible,
    /// Plain read then write. Only valid when no other lane touches the slot.
    Exclusive,
    /// Read, yield, write. Loses updates under contention; used to check that
    /// the comparison harness can see races.
    Unprotected,
}

/// `f64` slots stored as bit patterns.
pub struct SharedValues(Vec<AtomicU64>);

impl SharedValues {
    pub fn zeros(n: usize) -> Self {
        SharedValues((0..n).map(|_| AtomicU64::new(0f64.to_bits())).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn add(&self, i: usize, v: f64, mode: UpdateMode) {
        let slot = &self.0[i];
        match mode {
            UpdateMode::Indivisible => {
                let mut cur = slot.load(Ordering::Relaxed);
                loop {
                    let new = (f64::from_bits(cur) + v).to_bits();
                    match slot.compare_exchange_weak(cur, new, Ordering::Relaxed, Ordering::Relaxed) {
                        Ok(_) => break,
                        Err(seen) => cur = seen,
                    }
                }
            }
            UpdateMode::Exclusive => {
                let cur = f64::from_bits(slot.load(Ordering::Relaxed));
                slot.store((cur + v).to_bits(), Ordering::Relaxed);
            }
            UpdateMode::Unprotected => {
                let cur = f64::from_bits(slot.load(Ordering::Relaxed));
                std::thread::yield_now();
                slot.store((cur + v).to_bits(), Ordering::Relaxed);
            }
        }
    }

    #[inline]
    pub fn set(&self, i: usize, v: f64) {
        self.0[i].store(v.to_bits(), Ordering::Relaxed);
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.iter().map(|a| f64::from_bits(a.load(Ordering::Relaxed))).collect()
    }
}

/// Matrix values and right-hand side of one rank during a parallel assembly.
pub struct SharedSystem {
    pub values: SharedValues,
    pub rhs: SharedValues,
}

impl SharedSystem {
    pub fn new(nnz: usize, nrows: usize) -> Self {
        SharedSystem { values: SharedValues::zeros(nnz), rhs: SharedValues::zeros(nrows) }
    }

    pub fn scatter(&self, map: &ScatterMap, sys: &ElementSystem, mode: UpdateMode) {
        for i in 0..map.n {
            for j in 0..map.n {
                self.values.add(map.pos[i][j], sys.ae[i][j], mode);
            }
            self.rhs.add(map.rows[i], sys.be[i], mode);
        }
    }

    pub fn into_system(self, pattern: &CsrMatrix) -> (CsrMatrix, Rhs) {
        let mut a = pattern.zeroed_like();
        a.values = self.values.to_vec();
        (a, Rhs(self.rhs.to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indivisible_adds_from_many_threads() {
        let v = SharedValues::zeros(1);
        std::thread::scope(|s| {
            for _ in 0..4 {
                s.spawn(|| {
                    for _ in 0..1000 {
                        v.add(0, 0.5, UpdateMode::Indivisible);
                    }
                });
            }
        });
        assert_eq!(v.to_vec(), vec![2000.0]);
    }

    #[test]
    fn exclusive_add_is_plain_accumulation() {
        let v = SharedValues::zeros(2);
        v.add(1, 1.25, UpdateMode::Exclusive);
        v.add(1, 1.25, UpdateMode::Exclusive);
        v.set(0, -3.0);
        assert_eq!(v.to_vec(), vec![-3.0, 2.5]);
    }
}
