use std::sync::atomic::{AtomicU64, Ordering};

use crate::block::{BlockLayout, BlockVector};

/// Lock-free shared iterate: one `AtomicU64` per scalar (the bits of an
/// `f64`), a version counter per block and a global update counter.
///
/// Scalar reads and writes are relaxed and individually torn-free; a block
/// read may mix scalars from different writes. Version counters and `k` use
/// release/acquire so a reader that sees a count also sees the writes that
/// preceded it.
#[derive(Debug)]
pub struct SharedIterate {
    layout: BlockLayout,
    scalars: Vec<AtomicU64>,
    versions: Vec<AtomicU64>,
    k: AtomicU64,
}

impl SharedIterate {
    pub fn new(x0: &BlockVector) -> Self {
        let layout = x0.layout().clone();
        Self {
            scalars: x0.as_slice().iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
            versions: (0..layout.blocks()).map(|_| AtomicU64::new(0)).collect(),
            layout,
            k: AtomicU64::new(0),
        }
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    /// Number of completed block updates.
    pub fn k(&self) -> u64 {
        self.k.load(Ordering::Acquire)
    }

    pub fn version(&self, j: usize) -> u64 {
        self.versions[j].load(Ordering::Acquire)
    }

    pub fn versions(&self) -> Vec<u64> {
        (0..self.versions.len()).map(|j| self.version(j)).collect()
    }

    pub fn load(&self, i: usize) -> f64 {
        f64::from_bits(self.scalars[i].load(Ordering::Relaxed))
    }

    pub fn store(&self, i: usize, v: f64) {
        self.scalars[i].store(v.to_bits(), Ordering::Relaxed);
    }

    /// Reads every scalar into `out`, one at a time.
    pub fn snapshot_into(&self, out: &mut BlockVector) {
        for (o, s) in out.as_mut_slice().iter_mut().zip(&self.scalars) {
            *o = f64::from_bits(s.load(Ordering::Relaxed));
        }
    }

    pub fn snapshot(&self) -> BlockVector {
        let mut out = BlockVector::zeros(&self.layout);
        self.snapshot_into(&mut out);
        out
    }

    /// Reads entries `range` (block-local) of block `j` into `out`.
    pub fn read_block_range(&self, j: usize, range: std::ops::Range<usize>, out: &mut [f64]) {
        let base = self.layout.range(j).start;
        for (o, s) in out.iter_mut().zip(&self.scalars[base + range.start..base + range.end]) {
            *o = f64::from_bits(s.load(Ordering::Relaxed));
        }
    }

    /// Writes `values` into block `j` starting at block-local offset `start`.
    pub fn write_block_range(&self, j: usize, start: usize, values: &[f64]) {
        let base = self.layout.range(j).start + start;
        for (s, v) in self.scalars[base..base + values.len()].iter().zip(values) {
            s.store(v.to_bits(), Ordering::Relaxed);
        }
    }

    /// Marks one update of block `j` complete and returns the new `k`.
    pub fn complete_update(&self, j: usize) -> u64 {
        self.versions[j].fetch_add(1, Ordering::AcqRel);
        self.k.fetch_add(1, Ordering::AcqRel) + 1
    }

    pub fn into_block_vector(self) -> BlockVector {
        let data = self.scalars.into_iter().map(|s| f64::from_bits(s.into_inner())).collect();
        BlockVector::from_flat(&self.layout, data).expect("scalar count matches the layout")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_counters() {
        let x0 = BlockVector::from_blocks(vec![vec![1.0, -2.0], vec![3.5]]).unwrap();
        let s = SharedIterate::new(&x0);
        assert_eq!(s.snapshot(), x0);
        s.write_block_range(0, 1, &[7.0]);
        assert_eq!(s.complete_update(0), 1);
        assert_eq!(s.complete_update(1), 2);
        assert_eq!(s.versions(), vec![1, 1]);
        let mut buf = [0.0; 2];
        s.read_block_range(0, 0..2, &mut buf);
        assert_eq!(buf, [1.0, 7.0]);
        assert_eq!(s.into_block_vector().as_slice(), &[1.0, 7.0, 3.5]);
    }

    #[test]
    fn concurrent_writers_never_tear() {
        let x0 = BlockVector::from_blocks(vec![vec![0.0; 64]]).unwrap();
        let s = SharedIterate::new(&x0);
        let patterns = [1.25f64, -3.0e10, f64::MIN_POSITIVE];
        std::thread::scope(|scope| {
            for &p in &patterns {
                let s = &s;
                scope.spawn(move || {
                    for _ in 0..2000 {
                        s.write_block_range(0, 0, &[p; 64]);
                        s.complete_update(0);
                    }
                });
            }
            let s = &s;
            scope.spawn(move || {
                for _ in 0..2000 {
                    for v in s.snapshot().as_slice() {
                        assert!(*v == 0.0 || patterns.contains(v));
                    }
                }
            });
        });
        assert_eq!(s.k(), 6000);
        assert_eq!(s.version(0), 6000);
    }
}
