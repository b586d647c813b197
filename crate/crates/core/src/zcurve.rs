//! Morton (Z-order / Lebesgue) keys and range-query decomposition.
//!
//! Bit layout: `x` occupies the even bit positions (0, 2, 4, ...), `y` the
//! odd ones. A key range whose low `f` bits are free (all zero in `lo`, all
//! one in `hi`) covers exactly one axis-aligned block of cells, which is what
//! makes prefix splitting work.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox, Point};

pub const DEFAULT_BITS: u8 = 16;
pub const MAX_BITS: u8 = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ZCurveError {
    #[error("cell ({0}, {1}) is outside a {2}-bit grid")]
    CoordOutOfGrid(u64, u64, u8),
    #[error("key {0} is outside a {1}-bit grid")]
    KeyOutOfGrid(u64, u8),
    #[error("bits per dimension must be in 1..=32, got {0}")]
    InvalidBits(u8),
    #[error("range [{0}, {1}] holds a single key and cannot be split")]
    RangeNotSplittable(u64, u64),
    #[error("invalid extent: ({0}, {1})-({2}, {3})")]
    InvalidExtent(u32, u32, u32, u32),
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct MortonKey(pub u64);

impl MortonKey {
    pub fn value(self) -> u64 {
        self.0
    }

    pub fn to_be_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }

    pub fn from_be_bytes(bytes: [u8; 8]) -> Self {
        Self(u64::from_be_bytes(bytes))
    }
}

impl std::fmt::Display for MortonKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Spreads the 32 bits of `v` into the even bit positions of a u64.
#[inline]
pub fn spread_bits(v: u32) -> u64 {
    let mut x = v as u64;
    x = (x | (x << 16)) & 0x0000_FFFF_0000_FFFF;
    x = (x | (x << 8)) & 0x00FF_00FF_00FF_00FF;
    x = (x | (x << 4)) & 0x0F0F_0F0F_0F0F_0F0F;
    x = (x | (x << 2)) & 0x3333_3333_3333_3333;
    x = (x | (x << 1)) & 0x5555_5555_5555_5555;
    x
}

/// Inverse of [`spread_bits`]: gathers the even bits of `v`.
#[inline]
pub fn compact_bits(v: u64) -> u32 {
    let mut x = v & 0x5555_5555_5555_5555;
    x = (x | (x >> 1)) & 0x3333_3333_3333_3333;
    x = (x | (x >> 2)) & 0x0F0F_0F0F_0F0F_0F0F;
    x = (x | (x >> 4)) & 0x00FF_00FF_00FF_00FF;
    x = (x | (x >> 8)) & 0x0000_FFFF_0000_FFFF;
    x = (x | (x >> 16)) & 0x0000_0000_FFFF_FFFF;
    x as u32
}

#[inline]
pub fn interleave(ix: u32, iy: u32) -> u64 {
    spread_bits(ix) | (spread_bits(iy) << 1)
}

#[inline]
pub fn deinterleave(key: u64) -> (u32, u32) {
    (compact_bits(key), compact_bits(key >> 1))
}

/// Inclusive rectangle of cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SearchExtent {
    pub ix_min: u32,
    pub iy_min: u32,
    pub ix_max: u32,
    pub iy_max: u32,
}

impl SearchExtent {
    pub fn new(ix_min: u32, iy_min: u32, ix_max: u32, iy_max: u32) -> Result<Self, ZCurveError> {
        if ix_min > ix_max || iy_min > iy_max {
            return Err(ZCurveError::InvalidExtent(ix_min, iy_min, ix_max, iy_max));
        }
        Ok(Self {
            ix_min,
            iy_min,
            ix_max,
            iy_max,
        })
    }

    pub fn contains(&self, ix: u32, iy: u32) -> bool {
        ix >= self.ix_min && ix <= self.ix_max && iy >= self.iy_min && iy <= self.iy_max
    }

    pub fn overlaps(&self, other: &SearchExtent) -> bool {
        self.ix_min <= other.ix_max
            && other.ix_min <= self.ix_max
            && self.iy_min <= other.iy_max
            && other.iy_min <= self.iy_max
    }

    pub fn covers(&self, other: &SearchExtent) -> bool {
        self.ix_min <= other.ix_min
            && self.iy_min <= other.iy_min
            && self.ix_max >= other.ix_max
            && self.iy_max >= other.iy_max
    }

    pub fn cell_count(&self) -> u64 {
        ((self.ix_max - self.ix_min) as u64 + 1) * ((self.iy_max - self.iy_min) as u64 + 1)
    }
}

/// Contiguous key interval. `prefix_len` counts the high-order key bits
/// (out of the grid's `2 * bits` key width) that `lo` and `hi` share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyRange {
    pub lo: MortonKey,
    pub hi: MortonKey,
    pub prefix_len: u8,
}

impl KeyRange {
    pub fn key_count(&self) -> u64 {
        self.hi.0 - self.lo.0 + 1
    }

    pub fn contains(&self, key: MortonKey) -> bool {
        key >= self.lo && key <= self.hi
    }
}

/// A `2^bits x 2^bits` Morton grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MortonGrid {
    bits: u8,
}

impl Default for MortonGrid {
    fn default() -> Self {
        Self { bits: DEFAULT_BITS }
    }
}

/// Outcome of [`MortonGrid::decompose_with_stats`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub ranges: Vec<KeyRange>,
    pub splits: usize,
    /// Free bits of the starting range.
    pub start_free_bits: u8,
}

impl MortonGrid {
    pub fn new(bits: u8) -> Result<Self, ZCurveError> {
        if bits == 0 || bits > MAX_BITS {
            return Err(ZCurveError::InvalidBits(bits));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    /// Key width in bits.
    pub fn key_bits(&self) -> u8 {
        2 * self.bits
    }

    /// Cells per axis minus one.
    pub fn max_coord(&self) -> u32 {
        if self.bits == 32 {
            u32::MAX
        } else {
            (1u32 << self.bits) - 1
        }
    }

    pub fn max_key(&self) -> MortonKey {
        MortonKey(low_mask(self.key_bits()))
    }

    pub fn full_extent(&self) -> SearchExtent {
        let m = self.max_coord();
        SearchExtent {
            ix_min: 0,
            iy_min: 0,
            ix_max: m,
            iy_max: m,
        }
    }

    pub fn encode(&self, ix: u64, iy: u64) -> Result<MortonKey, ZCurveError> {
        let m = self.max_coord() as u64;
        if ix > m || iy > m {
            return Err(ZCurveError::CoordOutOfGrid(ix, iy, self.bits));
        }
        Ok(MortonKey(interleave(ix as u32, iy as u32)))
    }

    pub fn decode(&self, key: MortonKey) -> Result<(u32, u32), ZCurveError> {
        if key > self.max_key() {
            return Err(ZCurveError::KeyOutOfGrid(key.0, self.bits));
        }
        Ok(deinterleave(key.0))
    }

    fn check_extent(&self, e: &SearchExtent) -> Result<(), ZCurveError> {
        let m = self.max_coord();
        if e.ix_max > m || e.iy_max > m {
            return Err(ZCurveError::CoordOutOfGrid(
                e.ix_max as u64,
                e.iy_max as u64,
                self.bits,
            ));
        }
        Ok(())
    }

    /// Range sharing the longest common high-order prefix of `lo` and `hi`,
    /// zero-filled below for the minimum and one-filled for the maximum.
    pub fn prefix_range(&self, lo: MortonKey, hi: MortonKey) -> KeyRange {
        let free = 64 - (lo.0 ^ hi.0).leading_zeros() as u8;
        let mask = low_mask(free);
        KeyRange {
            lo: MortonKey(lo.0 & !mask),
            hi: MortonKey(lo.0 | mask),
            prefix_len: self.key_bits() - free,
        }
    }

    /// `(encode(lower-left), encode(upper-right))`: on the Z-curve these are
    /// the minimum and maximum keys of every cell in the rectangle.
    pub fn range_min_max_keys(
        &self,
        extent: &SearchExtent,
    ) -> Result<(MortonKey, MortonKey), ZCurveError> {
        self.check_extent(extent)?;
        Ok((
            MortonKey(interleave(extent.ix_min, extent.iy_min)),
            MortonKey(interleave(extent.ix_max, extent.iy_max)),
        ))
    }

    /// Smallest prefix-aligned key range containing the extent.
    pub fn starting_extent(&self, extent: &SearchExtent) -> Result<KeyRange, ZCurveError> {
        let (kmin, kmax) = self.range_min_max_keys(extent)?;
        Ok(self.prefix_range(kmin, kmax))
    }

    /// Appends 0 and 1 to the prefix of an aligned range.
    pub fn split_subquery(&self, range: &KeyRange) -> Result<(KeyRange, KeyRange), ZCurveError> {
        let free = self.key_bits().saturating_sub(range.prefix_len);
        if free == 0 || range.lo == range.hi {
            return Err(ZCurveError::RangeNotSplittable(range.lo.0, range.hi.0));
        }
        let half = 1u64 << (free - 1);
        let child0 = KeyRange {
            lo: range.lo,
            hi: MortonKey(range.lo.0 | (half - 1)),
            prefix_len: range.prefix_len + 1,
        };
        let child1 = KeyRange {
            lo: MortonKey(range.lo.0 | half),
            hi: range.hi,
            prefix_len: range.prefix_len + 1,
        };
        Ok((child0, child1))
    }

    /// Cell rectangle covered by an aligned range.
    pub fn block_of(&self, range: &KeyRange) -> SearchExtent {
        let (x0, y0) = deinterleave(range.lo.0);
        let (x1, y1) = deinterleave(range.hi.0);
        SearchExtent {
            ix_min: x0,
            iy_min: y0,
            ix_max: x1,
            iy_max: y1,
        }
    }

    pub fn decompose(
        &self,
        extent: &SearchExtent,
        max_ranges: usize,
    ) -> Result<Vec<KeyRange>, ZCurveError> {
        Ok(self.decompose_with_stats(extent, max_ranges)?.ranges)
    }

    /// Stack-driven decomposition of an extent into ascending, disjoint key
    /// ranges.
    ///
    /// The starting range is the common-prefix block of the corner keys,
    /// narrowed to `[KMin, KMax]` since no extent key lies outside the corner
    /// keys. Blocks missing the extent are dropped, blocks inside it are
    /// emitted whole, the rest are split with child 1 pushed before child 0 so
    /// ranges come off the stack in ascending order. With a finite
    /// `max_ranges` the remaining stack is emitted unsplit once splitting
    /// would exceed the budget, over-covering but never under-covering.
    pub fn decompose_with_stats(
        &self,
        extent: &SearchExtent,
        max_ranges: usize,
    ) -> Result<Decomposition, ZCurveError> {
        let max_ranges = max_ranges.max(1);
        let (kmin, kmax) = self.range_min_max_keys(extent)?;
        let start = self.prefix_range(kmin, kmax);
        let mut out: Vec<KeyRange> = Vec::new();
        let mut splits = 0usize;
        let mut stack = vec![start];
        let clamp = |r: &KeyRange| KeyRange {
            lo: r.lo.max(kmin),
            hi: r.hi.min(kmax),
            prefix_len: r.prefix_len,
        };
        while let Some(sq) = stack.pop() {
            if sq.hi < kmin || sq.lo > kmax {
                continue;
            }
            let block = self.block_of(&sq);
            if !block.overlaps(extent) {
                continue;
            }
            if extent.covers(&block) {
                push_merged(&mut out, clamp(&sq));
                continue;
            }
            if out.len() + stack.len() + 2 > max_ranges {
                push_merged(&mut out, clamp(&sq));
                while let Some(rest) = stack.pop() {
                    if rest.hi < kmin || rest.lo > kmax {
                        continue;
                    }
                    if self.block_of(&rest).overlaps(extent) {
                        push_merged(&mut out, clamp(&rest));
                    }
                }
                break;
            }
            let (c0, c1) = self.split_subquery(&sq)?;
            splits += 1;
            stack.push(c1);
            stack.push(c0);
        }
        for r in &mut out {
            r.prefix_len = self.key_bits() - (64 - (r.lo.0 ^ r.hi.0).leading_zeros() as u8);
        }
        Ok(Decomposition {
            ranges: out,
            splits,
            start_free_bits: self.key_bits() - start.prefix_len,
        })
    }
}

fn low_mask(bits: u8) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Appends `r`, coalescing with the previous range when contiguous.
fn push_merged(out: &mut Vec<KeyRange>, r: KeyRange) {
    if let Some(last) = out.last_mut() {
        if last.hi.0.checked_add(1) == Some(r.lo.0) {
            last.hi = r.hi;
            return;
        }
    }
    out.push(r);
}

/// Maps world coordinates onto a Morton grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridQuantizer {
    pub world_box: BoundingBox,
    pub grid: MortonGrid,
}

impl GridQuantizer {
    pub fn new(world_box: BoundingBox, bits: u8) -> Result<Self, ZCurveError> {
        Ok(Self {
            world_box,
            grid: MortonGrid::new(bits)?,
        })
    }

    fn cells(&self) -> f64 {
        (self.grid.max_coord() as f64) + 1.0
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (
            self.world_box.width() / self.cells(),
            self.world_box.height() / self.cells(),
        )
    }

    fn axis(&self, v: f64, lo: f64, span: f64) -> u32 {
        let t = ((v - lo) / span * self.cells()).floor();
        // max edge maps to the last cell; values outside clamp to the grid
        t.clamp(0.0, self.grid.max_coord() as f64) as u32
    }

    /// Floors a world point to its cell. Points outside the box clamp onto
    /// the border cells.
    pub fn quantize(&self, p: Point) -> (u32, u32) {
        let b = &self.world_box;
        (
            self.axis(p.x, b.min.x, b.width()),
            self.axis(p.y, b.min.y, b.height()),
        )
    }

    /// Lower-left corner of a cell.
    pub fn dequantize(&self, ix: u32, iy: u32) -> Point {
        let (cw, ch) = self.cell_size();
        Point::new(
            self.world_box.min.x + ix as f64 * cw,
            self.world_box.min.y + iy as f64 * ch,
        )
    }

    pub fn key_of(&self, p: Point) -> MortonKey {
        let (ix, iy) = self.quantize(p);
        MortonKey(interleave(ix, iy))
    }

    /// Cells touched by a world-space rectangle.
    pub fn extent_of(&self, min: Point, max: Point) -> SearchExtent {
        let (x0, y0) = self.quantize(min);
        let (x1, y1) = self.quantize(max);
        SearchExtent {
            ix_min: x0.min(x1),
            iy_min: y0.min(y1),
            ix_max: x0.max(x1),
            iy_max: y0.max(y1),
        }
    }
}
