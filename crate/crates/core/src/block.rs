//! Block partitions of the decision vector and block-addressable vectors.
//!
//! The decision variable `x` in `R^n` is split into `B` contiguous blocks of
//! sizes `n_1, ..., n_B`. Every module addresses coordinates either flat
//! (`0..n`) or by `(block, offset)`; [`BlockPartition`] owns that mapping and
//! [`BlockVector`] is a flat vector that can be read and written per block.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A partition of `{0..n}` into contiguous blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>, // length B+1, offsets[B] == total
    total: usize,
}

impl BlockPartition {
    /// Builds a partition from explicit block sizes. All sizes must be >= 1.
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidPartition("no blocks".into()));
        }
        if let Some(pos) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidPartition(format!("block {pos} has size 0")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0usize;
        offsets.push(0);
        for &s in &sizes {
            acc = acc
                .checked_add(s)
                .ok_or_else(|| Error::InvalidPartition("size overflow".into()))?;
            offsets.push(acc);
        }
        Ok(Self {
            sizes,
            offsets,
            total: acc,
        })
    }

    /// Splits `total` coordinates into `num_blocks` near-equal blocks.
    ///
    /// When `num_blocks` does not divide `total`, the remainder is spread one
    /// coordinate at a time over the leading blocks, so sizes differ by at
    /// most one.
    pub fn equal(total: usize, num_blocks: usize) -> Result<Self> {
        if num_blocks == 0 || total == 0 {
            return Err(Error::InvalidPartition(
                "total and block count must be positive".into(),
            ));
        }
        if num_blocks > total {
            return Err(Error::InvalidPartition(format!(
                "cannot split {total} coordinates into {num_blocks} blocks"
            )));
        }
        let base = total / num_blocks;
        let rem = total % num_blocks;
        let sizes = (0..num_blocks)
            .map(|l| base + usize::from(l < rem))
            .collect();
        Self::new(sizes)
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Size of block `l` (0-based).
    pub fn block_size(&self, l: usize) -> usize {
        self.check(l);
        self.sizes[l]
    }

    /// Flat index range covered by block `l` (0-based).
    pub fn range(&self, l: usize) -> Range<usize> {
        self.check(l);
        self.offsets[l]..self.offsets[l + 1]
    }

    fn check(&self, l: usize) {
        assert!(
            l < self.sizes.len(),
            "block index {l} out of range (have {} blocks)",
            self.sizes.len()
        );
    }
}

/// A flat real vector addressable by block.
#[derive(Debug, Clone)]
pub struct BlockVector {
    partition: Arc<BlockPartition>,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(partition: Arc<BlockPartition>) -> Self {
        let n = partition.total();
        Self {
            partition,
            data: vec![0.0; n],
        }
    }

    /// Wraps a flat vector; its length must match the partition total.
    pub fn from_vec(partition: Arc<BlockPartition>, data: Vec<f64>) -> Result<Self> {
        if data.len() != partition.total() {
            return Err(Error::LengthMismatch {
                expected: partition.total(),
                got: data.len(),
            });
        }
        Ok(Self { partition, data })
    }

    pub fn partition(&self) -> &Arc<BlockPartition> {
        &self.partition
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// View of block `l`'s coordinates.
    ///
    /// Panics if `l` is out of range.
    pub fn block(&self, l: usize) -> &[f64] {
        &self.data[self.partition.range(l)]
    }

    /// Mutable view of block `l`'s coordinates.
    pub fn block_mut(&mut self, l: usize) -> &mut [f64] {
        let r = self.partition.range(l);
        &mut self.data[r]
    }

    /// Overwrites block `l`; `values` must have exactly the block's size.
    pub fn set_block(&mut self, l: usize, values: &[f64]) {
        let dst = self.block_mut(l);
        assert_eq!(
            dst.len(),
            values.len(),
            "block {l} has size {}, got {} values",
            dst.len(),
            values.len()
        );
        dst.copy_from_slice(values);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.clone()
    }
}

impl PartialEq for BlockVector {
    fn eq(&self, other: &Self) -> bool {
        self.partition.sizes == other.partition.sizes && self.data == other.data
    }
}

/// Max coordinate minus min coordinate of a nonempty vector.
///
/// Zero iff all coordinates are equal. Panics on an empty slice.
pub fn spread(v: &[f64]) -> f64 {
    assert!(!v.is_empty(), "spread of an empty vector is undefined");
    let mut lo = v[0];
    let mut hi = v[0];
    for &x in &v[1..] {
        if x < lo {
            lo = x;
        }
        if x > hi {
            hi = x;
        }
    }
    hi - lo
}
