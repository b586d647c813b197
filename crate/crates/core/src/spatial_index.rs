//! Paged, ordered Morton-key index.
//!
//! Records live in leaf pages of bounded capacity, kept in global key order.
//! `seek` answers with the first stored key at or above a probe together with
//! the last key of the page holding it; `range_search` drives the subquery
//! stack over those two values.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::ops::Bound;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, SiteId};
use crate::zcurve::{GridQuantizer, KeyRange, MortonKey, SearchExtent, ZCurveError};

pub const DEFAULT_PAGE_CAPACITY: usize = 64;
pub const SNAPSHOT_MAGIC: &[u8; 5] = b"VORX1";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("key {0} is outside the index grid")]
    KeyOutOfGrid(u64),
    #[error("payload of {0} bytes exceeds the 65535-byte record limit")]
    PayloadTooLarge(usize),
    #[error("page capacity must be at least 1")]
    InvalidCapacity,
    #[error(transparent)]
    Grid(#[from] ZCurveError),
    #[error("snapshot format error: {0}")]
    SnapshotFormat(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub key: MortonKey,
    pub site_id: SiteId,
    /// Virtual time in microseconds.
    pub timestamp_us: u64,
    pub payload: Vec<u8>,
}

impl Record {
    fn sort_key(&self) -> SortKey {
        (self.key.0, self.timestamp_us, self.site_id)
    }
}

type SortKey = (u64, u64, SiteId);
/// Page map key: minimum record sort key plus a page id for uniqueness.
type PageKey = (SortKey, u64);

#[derive(Debug, Clone, Default)]
struct LeafPage {
    records: Vec<Record>,
}

impl LeafPage {
    fn first_key(&self) -> MortonKey {
        self.records[0].key
    }

    fn last_key(&self) -> MortonKey {
        self.records[self.records.len() - 1].key
    }
}

/// Result of a seek: the smallest stored key at or above the probe and the
/// largest key on the page where it lies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeekHit {
    pub first_key: MortonKey,
    pub last_key: MortonKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub pages: usize,
    pub records: usize,
    pub fill_factor: f64,
    pub seeks_performed: u64,
    pub pages_scanned: u64,
    pub subqueries_split: u64,
}

/// Records matched by one search plus the order in which keys were read.
#[derive(Debug, Clone, Default)]
pub struct SearchTrace<'a> {
    pub records: Vec<&'a Record>,
    pub touched_keys: Vec<MortonKey>,
    pub seeks: u64,
    pub pages_scanned: u64,
    pub splits: u64,
}

#[derive(Debug, Default)]
struct Counters {
    seeks: AtomicU64,
    pages_scanned: AtomicU64,
    splits: AtomicU64,
}

/// Single-writer, multi-reader: `insert` takes `&mut self`, searches take
/// `&self` and only bump atomic counters.
#[derive(Debug)]
pub struct OrderedIndex {
    quantizer: GridQuantizer,
    capacity: usize,
    pages: BTreeMap<PageKey, LeafPage>,
    next_page_id: u64,
    records: usize,
    counters: Counters,
}

/// Position of one record: page key and slot.
type Cursor = (PageKey, usize);

impl OrderedIndex {
    pub fn new(quantizer: GridQuantizer) -> Self {
        Self::with_capacity(quantizer, DEFAULT_PAGE_CAPACITY).expect("default capacity")
    }

    pub fn with_capacity(quantizer: GridQuantizer, capacity: usize) -> Result<Self, IndexError> {
        if capacity == 0 {
            return Err(IndexError::InvalidCapacity);
        }
        Ok(Self {
            quantizer,
            capacity,
            pages: BTreeMap::new(),
            next_page_id: 0,
            records: 0,
            counters: Counters::default(),
        })
    }

    pub fn quantizer(&self) -> &GridQuantizer {
        &self.quantizer
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records == 0
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    /// Key ranges `[first, last]` of every page, in order.
    pub fn page_bounds(&self) -> Vec<(MortonKey, MortonKey)> {
        self.pages
            .values()
            .map(|p| (p.first_key(), p.last_key()))
            .collect()
    }

    /// All records in key order.
    pub fn iter(&self) -> impl Iterator<Item = &Record> {
        self.pages.values().flat_map(|p| p.records.iter())
    }

    /// Builds the record key from a world position and inserts it.
    pub fn insert_reading(
        &mut self,
        site_id: SiteId,
        position: Point,
        timestamp_us: u64,
        payload: Vec<u8>,
    ) -> Result<MortonKey, IndexError> {
        let key = self.quantizer.key_of(position);
        self.insert(Record {
            key,
            site_id,
            timestamp_us,
            payload,
        })?;
        Ok(key)
    }

    pub fn insert(&mut self, record: Record) -> Result<(), IndexError> {
        if record.key > self.quantizer.grid.max_key() {
            return Err(IndexError::KeyOutOfGrid(record.key.0));
        }
        if record.payload.len() > u16::MAX as usize {
            return Err(IndexError::PayloadTooLarge(record.payload.len()));
        }
        let sk = record.sort_key();
        let target = self
            .pages
            .range(..=(sk, u64::MAX))
            .next_back()
            .map(|(k, _)| *k);
        let page_key = match target {
            Some(k) => k,
            None => match self.pages.keys().next().copied() {
                // Smaller than everything: the first page gets a new minimum.
                Some(first) => {
                    let page = self.pages.remove(&first).expect("first page");
                    let k = (sk, first.1);
                    self.pages.insert(k, page);
                    k
                }
                None => {
                    let k = (sk, self.alloc_page_id());
                    self.pages.insert(k, LeafPage::default());
                    k
                }
            },
        };
        let page = self.pages.get_mut(&page_key).expect("target page");
        let at = page.records.partition_point(|r| r.sort_key() <= sk);
        page.records.insert(at, record);
        self.records += 1;
        if page.records.len() > self.capacity {
            let upper = page.records.split_off(page.records.len() / 2);
            let k = (upper[0].sort_key(), self.alloc_page_id());
            self.pages.insert(k, LeafPage { records: upper });
        }
        Ok(())
    }

    fn alloc_page_id(&mut self) -> u64 {
        self.next_page_id += 1;
        self.next_page_id
    }

    /// Cursor of the first record whose key is `>= key`.
    fn seek_cursor(&self, key: MortonKey) -> Option<Cursor> {
        let probe: PageKey = ((key.0, 0, 0), 0);
        if let Some((pk, page)) = self.pages.range(..probe).next_back() {
            let at = page.records.partition_point(|r| r.key < key);
            if at < page.records.len() {
                return Some((*pk, at));
            }
        }
        self.pages
            .range((Bound::Included(probe), Bound::Unbounded))
            .next()
            .map(|(pk, _)| (*pk, 0))
    }

    pub fn seek(&self, key: MortonKey) -> Option<SeekHit> {
        self.counters.seeks.fetch_add(1, AtomicOrdering::Relaxed);
        self.seek_cursor(key).map(|(pk, at)| {
            let page = &self.pages[&pk];
            SeekHit {
                first_key: page.records[at].key,
                last_key: page.last_key(),
            }
        })
    }

    pub fn stats(&self) -> IndexStats {
        let pages = self.pages.len();
        IndexStats {
            pages,
            records: self.records,
            fill_factor: if pages == 0 {
                0.0
            } else {
                self.records as f64 / (pages * self.capacity) as f64
            },
            seeks_performed: self.counters.seeks.load(AtomicOrdering::Relaxed),
            pages_scanned: self.counters.pages_scanned.load(AtomicOrdering::Relaxed),
            subqueries_split: self.counters.splits.load(AtomicOrdering::Relaxed),
        }
    }

    pub fn range_search(&self, extent: &SearchExtent) -> Result<Vec<Record>, IndexError> {
        Ok(self
            .range_search_traced(extent)?
            .records
            .into_iter()
            .cloned()
            .collect())
    }

    /// Stack-driven range search.
    ///
    /// For each popped subquery: drop it when its block misses the extent;
    /// seek its minimum key; skip it when the first stored key is past its
    /// maximum; stream it out when the block lies inside the extent; scan and
    /// filter the page when the page's last key reaches the subquery maximum
    /// (continuing across pages only for duplicates of that maximum);
    /// otherwise split and push child 1 then child 0.
    pub fn range_search_traced(
        &self,
        extent: &SearchExtent,
    ) -> Result<SearchTrace<'_>, IndexError> {
        let grid = self.quantizer.grid;
        let (kmin, kmax) = grid.range_min_max_keys(extent)?;
        let mut trace = SearchTrace::default();
        let mut stack: Vec<KeyRange> = vec![grid.prefix_range(kmin, kmax)];

        while let Some(sq) = stack.pop() {
            let lo = sq.lo.max(kmin);
            let hi = sq.hi.min(kmax);
            if lo > hi {
                continue;
            }
            let block = grid.block_of(&sq);
            if !block.overlaps(extent) {
                continue;
            }
            trace.seeks += 1;
            let Some((pk, at)) = self.seek_cursor(lo) else {
                // Nothing stored at or above `lo`; later subqueries are higher.
                break;
            };
            let page = &self.pages[&pk];
            let first = page.records[at].key;
            let last = page.last_key();
            trace.touched_keys.push(first);
            if first > hi {
                continue;
            }
            if extent.covers(&block) {
                self.stream(pk, at, hi, None, &mut trace);
                continue;
            }
            if last >= hi {
                // All of [first, hi] sits on this page; when last == hi the
                // stream also follows duplicates of `hi` onto later pages.
                self.stream(pk, at, hi, Some(extent), &mut trace);
                continue;
            }
            let (c0, c1) = grid.split_subquery(&sq)?;
            trace.splits += 1;
            stack.push(c1);
            stack.push(c0);
        }

        self.counters
            .seeks
            .fetch_add(trace.seeks, AtomicOrdering::Relaxed);
        self.counters
            .pages_scanned
            .fetch_add(trace.pages_scanned, AtomicOrdering::Relaxed);
        self.counters
            .splits
            .fetch_add(trace.splits, AtomicOrdering::Relaxed);
        Ok(trace)
    }

    /// Reads records from the cursor forward while `key <= hi`, keeping those
    /// inside `filter` (all of them when `None`).
    fn stream<'a>(
        &'a self,
        start: PageKey,
        at: usize,
        hi: MortonKey,
        filter: Option<&SearchExtent>,
        trace: &mut SearchTrace<'a>,
    ) {
        let mut offset = at;
        for (_, page) in self.pages.range((Bound::Included(start), Bound::Unbounded)) {
            let recs = &page.records[offset..];
            offset = 0;
            let end = recs.partition_point(|r| r.key <= hi);
            if end == 0 {
                break;
            }
            trace.pages_scanned += 1;
            for r in &recs[..end] {
                trace.touched_keys.push(r.key);
                let keep = filter.is_none_or(|e| {
                    let (ix, iy) = crate::zcurve::deinterleave(r.key.0);
                    e.contains(ix, iy)
                });
                if keep {
                    trace.records.push(r);
                }
            }
            if end < recs.len() {
                break;
            }
        }
    }

    /// Writes the `VORX1` snapshot: magic, u64 LE record count, then per
    /// record key u64 LE, site id u32 LE, timestamp u64 LE (microseconds),
    /// payload length u16 LE and the payload bytes.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<(), IndexError> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&(self.records as u64).to_le_bytes())?;
        for r in self.iter() {
            w.write_all(&r.key.0.to_le_bytes())?;
            w.write_all(&r.site_id.to_le_bytes())?;
            w.write_all(&r.timestamp_us.to_le_bytes())?;
            w.write_all(&(r.payload.len() as u16).to_le_bytes())?;
            w.write_all(&r.payload)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(
        mut r: R,
        quantizer: GridQuantizer,
        capacity: usize,
    ) -> Result<Self, IndexError> {
        let mut index = Self::with_capacity(quantizer, capacity)?;
        let mut magic = [0u8; 5];
        read_exact(&mut r, &mut magic, "header")?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(IndexError::SnapshotFormat(
                "bad magic, expected VORX1".into(),
            ));
        }
        let count = u64::from_le_bytes(read_array(&mut r, "record count")?);
        for i in 0..count {
            let key = u64::from_le_bytes(read_array(&mut r, "record key")?);
            let site_id = u32::from_le_bytes(read_array(&mut r, "site id")?);
            let timestamp_us = u64::from_le_bytes(read_array(&mut r, "timestamp")?);
            let len = u16::from_le_bytes(read_array(&mut r, "payload length")?) as usize;
            let mut payload = vec![0u8; len];
            read_exact(&mut r, &mut payload, "payload")?;
            index
                .insert(Record {
                    key: MortonKey(key),
                    site_id,
                    timestamp_us,
                    payload,
                })
                .map_err(|e| IndexError::SnapshotFormat(format!("record {i}: {e}")))?;
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(IndexError::SnapshotFormat(
                "trailing bytes after last record".into(),
            ));
        }
        Ok(index)
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), IndexError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => IndexError::SnapshotFormat(format!("truncated {what}")),
        _ => IndexError::Io(e),
    })
}

fn read_array<R: Read, const N: usize>(r: &mut R, what: &str) -> Result<[u8; N], IndexError> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf, what)?;
    Ok(buf)
}
