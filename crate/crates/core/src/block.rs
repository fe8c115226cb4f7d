//! Block-structured iterates stored as one flat array with an offset table.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Block boundaries of an iterate `x = (x_1, ..., x_m)`.
///
/// Cheap to clone; the offset table is shared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    offsets: Arc<[usize]>,
}

impl BlockLayout {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(crate::error::param("a layout needs at least one block"));
        }
        if let Some(j) = sizes.iter().position(|&s| s == 0) {
            return Err(crate::error::param(format!("block {j} has size zero")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0);
        let mut acc = 0;
        for &s in sizes {
            acc += s;
            offsets.push(acc);
        }
        Ok(Self { offsets: offsets.into() })
    }

    /// Number of blocks `m`.
    pub fn blocks(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Total number of scalars.
    pub fn len(&self) -> usize {
        self.offsets[self.offsets.len() - 1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block_len(&self, j: usize) -> usize {
        self.offsets[j + 1] - self.offsets[j]
    }

    pub fn range(&self, j: usize) -> Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn check_block(&self, j: usize) -> Result<()> {
        if j < self.blocks() {
            Ok(())
        } else {
            Err(Error::BlockIndex { index: j, count: self.blocks() })
        }
    }
}

/// An iterate: `m` dense blocks of `f64`, contiguous in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    layout: BlockLayout,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(layout: &BlockLayout) -> Self {
        Self { layout: layout.clone(), data: vec![0.0; layout.len()] }
    }

    pub fn from_flat(layout: &BlockLayout, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.len() {
            return Err(Error::Dimension { expected: layout.len(), found: data.len() });
        }
        Ok(Self { layout: layout.clone(), data })
    }

    pub fn from_blocks(blocks: Vec<Vec<f64>>) -> Result<Self> {
        let sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
        let layout = BlockLayout::new(&sizes)?;
        Ok(Self { layout, data: blocks.concat() })
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn blocks(&self) -> usize {
        self.layout.blocks()
    }

    pub fn block(&self, j: usize) -> &[f64] {
        &self.data[self.layout.range(j)]
    }

    pub fn block_mut(&mut self, j: usize) -> &mut [f64] {
        let r = self.layout.range(j);
        &mut self.data[r]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.data
    }

    /// Copies every scalar of `other` into `self`. Layouts must agree.
    pub fn copy_from(&mut self, other: &BlockVector) {
        self.data.copy_from_slice(&other.data);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// `‖self − other‖²` over all blocks.
    pub fn dist_sq(&self, other: &BlockVector) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn conforms_to(&self, layout: &BlockLayout) -> Result<()> {
        if self.layout == *layout {
            return Ok(());
        }
        if self.layout.blocks() != layout.blocks() {
            return Err(Error::Dimension { expected: layout.blocks(), found: self.layout.blocks() });
        }
        Err(Error::Dimension { expected: layout.len(), found: self.layout.len() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_offsets() {
        let l = BlockLayout::new(&[2, 3, 1]).unwrap();
        assert_eq!(l.blocks(), 3);
        assert_eq!(l.len(), 6);
        assert_eq!(l.range(1), 2..5);
        assert_eq!(l.sizes(), vec![2, 3, 1]);
        assert!(l.check_block(3).is_err());
    }

    #[test]
    fn rejects_empty_blocks() {
        assert!(BlockLayout::new(&[]).is_err());
        assert!(BlockLayout::new(&[1, 0]).is_err());
    }

    #[test]
    fn block_views() {
        let mut x = BlockVector::from_blocks(vec![vec![1.0, 2.0], vec![3.0]]).unwrap();
        assert_eq!(x.block(1), &[3.0]);
        x.block_mut(0)[1] = -1.0;
        assert_eq!(x.as_slice(), &[1.0, -1.0, 3.0]);
        let y = BlockVector::zeros(x.layout());
        assert_eq!(x.dist_sq(&y), 11.0);
    }

    #[test]
    fn conformance() {
        let a = BlockLayout::new(&[2, 2]).unwrap();
        let b = BlockLayout::new(&[2, 3]).unwrap();
        let x = BlockVector::zeros(&a);
        assert!(x.conforms_to(&a).is_ok());
        assert!(matches!(x.conforms_to(&b), Err(Error::Dimension { .. })));
        assert!(BlockVector::from_flat(&a, vec![0.0; 3]).is_err());
    }
}
