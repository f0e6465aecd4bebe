//! Shared-block sparse row (SBSR) matrices.
//!
//! SBSR keeps the BSR index arrays unchanged and adds one flag bit per stored
//! block. The first occurrence of a payload is flagged `F` and its values go
//! to the unique-block store; every later occurrence is flagged `R` and
//! carries a reference to the store index of the shared copy. References
//! always point backward in storage order.
//!
//! In memory each stored block maps to a reference-counted store slot, which
//! gives O(1) payload lookup and O(1) expected-time [`SbsrMatrix::update_block`].
//! The flag/reference/unique-block layout is derived from those slots in one
//! pass by [`SbsrMatrix::layout`]; for a freshly built matrix the slots are
//! already numbered in first-appearance order.

use std::borrow::Cow;
use std::collections::HashMap;

use bitvec::prelude::*;

use super::{check_indices, check_payload, to_u32, BlockSparse, BsrMatrix, FormatError};
use crate::matrix::Q16Matrix;

/// Flag value of a repeat occurrence; first appearances are `false`.
pub const REPEAT: bool = true;

#[derive(Debug, Clone)]
pub struct SbsrMatrix {
    rows: usize,
    cols: usize,
    block_h: usize,
    block_w: usize,
    row_ptr: Vec<u32>,
    col_idx: Vec<u32>,
    /// Store slot of every stored block.
    slots: Vec<u32>,
    /// Slot payloads back to back; freed slots keep stale values.
    store: Vec<i16>,
    refcount: Vec<u32>,
    free: Vec<u32>,
    index: HashMap<Box<[i16]>, u32>,
}

/// The on-disk view of an SBSR matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedLayout {
    /// One bit per stored block, [`REPEAT`] for repeats.
    pub flags: BitVec<u8, Msb0>,
    /// Unique-store index for each repeat, in storage order.
    pub refs: Vec<u32>,
    /// First-appearance payloads in storage order.
    pub unique_blocks: Vec<i16>,
}

/// Work counters from [`to_sbsr_with_stats`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScanStats {
    /// Stored blocks passed through the deduplication lookup.
    pub block_touches: usize,
    /// Tiles read from the dense matrix, zero tiles included.
    pub tiles_scanned: usize,
}

pub fn to_sbsr(m: &Q16Matrix, block_h: usize, block_w: usize) -> Result<SbsrMatrix, FormatError> {
    to_sbsr_with_stats(m, block_h, block_w).map(|(s, _)| s)
}

/// Builds SBSR in a single pass over the tiles of `m`, with one hash lookup
/// per nonzero tile.
pub fn to_sbsr_with_stats(
    m: &Q16Matrix,
    block_h: usize,
    block_w: usize,
) -> Result<(SbsrMatrix, ScanStats), FormatError> {
    if block_h == 0 || block_w == 0 {
        return Err(FormatError::BadBlockShape { block_h, block_w });
    }
    let block_rows = m.rows().div_ceil(block_h);
    let block_cols = m.cols().div_ceil(block_w);
    let mut s = SbsrMatrix::empty(m.rows(), m.cols(), block_h, block_w);
    s.row_ptr.reserve(block_rows);
    let mut stats = ScanStats::default();
    let mut tile = vec![0i16; block_h * block_w];
    for br in 0..block_rows {
        for bc in 0..block_cols {
            stats.tiles_scanned += 1;
            if m.read_tile(br * block_h, bc * block_w, block_h, block_w, &mut tile) {
                stats.block_touches += 1;
                let slot = s.intern(&tile);
                s.col_idx.push(to_u32(bc));
                s.slots.push(slot);
            }
        }
        s.row_ptr.push(to_u32(s.col_idx.len()));
    }
    Ok((s, stats))
}

impl SbsrMatrix {
    fn empty(rows: usize, cols: usize, block_h: usize, block_w: usize) -> Self {
        Self {
            rows,
            cols,
            block_h,
            block_w,
            row_ptr: vec![0],
            col_idx: Vec::new(),
            slots: Vec::new(),
            store: Vec::new(),
            refcount: Vec::new(),
            free: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Slot holding `payload`, allocating one if it is new. Bumps its count.
    fn intern(&mut self, payload: &[i16]) -> u32 {
        if let Some(&slot) = self.index.get(payload) {
            self.refcount[slot as usize] += 1;
            return slot;
        }
        let len = self.block_len();
        let slot = match self.free.pop() {
            Some(slot) => {
                let at = slot as usize * len;
                self.store[at..at + len].copy_from_slice(payload);
                self.refcount[slot as usize] = 1;
                slot
            }
            None => {
                self.store.extend_from_slice(payload);
                self.refcount.push(1);
                to_u32(self.refcount.len() - 1)
            }
        };
        self.index.insert(payload.into(), slot);
        slot
    }

    fn release(&mut self, slot: u32) {
        let rc = &mut self.refcount[slot as usize];
        *rc -= 1;
        if *rc == 0 {
            let len = self.block_len();
            let at = slot as usize * len;
            self.index.remove(&self.store[at..at + len]);
            self.free.push(slot);
        }
    }

    fn slot_payload(&self, slot: u32) -> &[i16] {
        let len = self.block_len();
        &self.store[slot as usize * len..(slot as usize + 1) * len]
    }

    /// Shares duplicate blocks of an existing BSR matrix. Index arrays are
    /// copied unchanged.
    pub fn from_bsr(b: &BsrMatrix) -> Self {
        let mut s = Self::empty(b.rows(), b.cols(), b.block_h(), b.block_w());
        s.row_ptr = b.row_ptr().to_vec();
        s.col_idx = b.col_idx().to_vec();
        s.slots = (0..b.num_blocks()).map(|k| s.intern(b.payload(k))).collect();
        s
    }

    /// Expands every shared payload back into a BSR matrix.
    pub fn to_bsr(&self) -> BsrMatrix {
        let blocks = (0..self.num_blocks()).flat_map(|k| self.payload(k).iter().copied()).collect();
        BsrMatrix::from_parts(
            self.rows,
            self.cols,
            self.block_h,
            self.block_w,
            self.row_ptr.clone(),
            self.col_idx.clone(),
            blocks,
        )
        .expect("SBSR invariants imply valid BSR")
    }

    /// Assembles a matrix from its on-disk layout, checking every invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn from_layout(
        rows: usize,
        cols: usize,
        block_h: usize,
        block_w: usize,
        row_ptr: Vec<u32>,
        col_idx: Vec<u32>,
        layout: SharedLayout,
    ) -> Result<Self, FormatError> {
        check_indices(rows, cols, block_h, block_w, &row_ptr, &col_idx)?;
        let SharedLayout {
            flags,
            refs,
            unique_blocks,
        } = layout;
        let n = col_idx.len();
        if flags.len() != n {
            return Err(FormatError::FlagCount {
                flags: flags.len(),
                blocks: n,
            });
        }
        let len = block_h * block_w;
        if unique_blocks.len() % len != 0 {
            return Err(FormatError::PayloadLength {
                len: unique_blocks.len(),
                expected: unique_blocks.len() / len * len,
            });
        }
        let unique = unique_blocks.len() / len;
        let repeats = flags.count_ones();
        if n - repeats != unique {
            return Err(FormatError::UniqueCount {
                firsts: n - repeats,
                unique,
            });
        }
        if repeats != refs.len() {
            return Err(FormatError::RefCount {
                repeats,
                refs: refs.len(),
            });
        }

        let mut s = Self::empty(rows, cols, block_h, block_w);
        s.row_ptr = row_ptr;
        s.col_idx = col_idx;
        s.store = unique_blocks;
        s.refcount = vec![0; unique];
        s.slots = Vec::with_capacity(n);
        let mut next_ref = refs.iter();
        let mut seen = 0usize;
        for (k, flag) in flags.iter().by_vals().enumerate() {
            let slot = if flag == REPEAT {
                let &r = next_ref.next().expect("ref count checked");
                if r as usize >= seen {
                    return Err(FormatError::RefOutOfRange {
                        entry: k,
                        reference: r,
                        available: seen,
                    });
                }
                r
            } else {
                seen += 1;
                to_u32(seen - 1)
            };
            s.refcount[slot as usize] += 1;
            s.slots.push(slot);
        }
        for br in 0..s.block_rows() {
            for k in s.row_ptr[br] as usize..s.row_ptr[br + 1] as usize {
                check_payload(
                    k,
                    s.payload(k),
                    (rows, cols),
                    (br * block_h, s.col_idx[k] as usize * block_w),
                    (block_h, block_w),
                )?;
            }
        }
        for slot in 0..unique {
            let key: Box<[i16]> = s.slot_payload(to_u32(slot)).into();
            if let Some(first) = s.index.insert(key, to_u32(slot)) {
                return Err(FormatError::DuplicateUnique {
                    first: first as usize,
                    second: slot,
                });
            }
        }
        Ok(s)
    }

    /// Flags, references and unique payloads in storage order, derived in one
    /// pass over the stored blocks.
    pub fn layout(&self) -> SharedLayout {
        let mut canon = vec![u32::MAX; self.refcount.len()];
        let mut next = 0u32;
        let mut flags = BitVec::with_capacity(self.slots.len());
        let mut refs = Vec::with_capacity(self.num_refs());
        let mut unique_blocks = Vec::with_capacity(self.num_unique() * self.block_len());
        for &slot in &self.slots {
            let c = &mut canon[slot as usize];
            if *c == u32::MAX {
                *c = next;
                next += 1;
                flags.push(!REPEAT);
                unique_blocks.extend_from_slice(self.slot_payload(slot));
            } else {
                flags.push(REPEAT);
                refs.push(*c);
            }
        }
        SharedLayout {
            flags,
            refs,
            unique_blocks,
        }
    }

    pub fn flags(&self) -> BitVec<u8, Msb0> {
        self.layout().flags
    }

    pub fn refs(&self) -> Vec<u32> {
        self.layout().refs
    }

    pub fn unique_blocks(&self) -> Vec<i16> {
        self.layout().unique_blocks
    }

    /// Distinct payloads currently referenced.
    pub fn num_unique(&self) -> usize {
        self.refcount.len() - self.free.len()
    }

    /// Stored blocks flagged as repeats.
    pub fn num_refs(&self) -> usize {
        self.num_blocks() - self.num_unique()
    }

    /// Payload of block `(br, bc)`: the shared copy for stored blocks, zeros
    /// for unstored ones.
    pub fn get_block(&self, br: usize, bc: usize) -> Result<Cow<'_, [i16]>, FormatError> {
        Ok(match self.entry_at(br, bc)? {
            Some(k) => Cow::Borrowed(self.payload(k)),
            None => Cow::Owned(vec![0; self.block_len()]),
        })
    }

    /// Replaces the payload of stored block `(br, bc)`.
    ///
    /// A payload already in the store is shared; a new one takes a fresh (or
    /// recycled) slot. The old payload is dropped once no block references it.
    pub fn update_block(
        &mut self,
        br: usize,
        bc: usize,
        payload: &[i16],
    ) -> Result<(), FormatError> {
        let k = self
            .entry_at(br, bc)?
            .ok_or(FormatError::NotStored {
                block_row: br,
                block_col: bc,
            })?;
        if payload.len() != self.block_len() {
            return Err(FormatError::PayloadLength {
                len: payload.len(),
                expected: self.block_len(),
            });
        }
        check_payload(
            k,
            payload,
            (self.rows, self.cols),
            (br * self.block_h, bc * self.block_w),
            (self.block_h, self.block_w),
        )?;
        let old = self.slots[k];
        if self.slot_payload(old) == payload {
            return Ok(());
        }
        let new = self.intern(payload);
        self.slots[k] = new;
        self.release(old);
        Ok(())
    }

    /// Consuming form of [`update_block`](Self::update_block).
    pub fn with_block(mut self, br: usize, bc: usize, payload: &[i16]) -> Result<Self, FormatError> {
        self.update_block(br, bc, payload)?;
        Ok(self)
    }
}

impl PartialEq for SbsrMatrix {
    /// Equal when the on-disk layouts are equal.
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.block_h == other.block_h
            && self.block_w == other.block_w
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
            && self.layout() == other.layout()
    }
}

impl Eq for SbsrMatrix {}

impl BlockSparse for SbsrMatrix {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn block_h(&self) -> usize {
        self.block_h
    }
    fn block_w(&self) -> usize {
        self.block_w
    }
    fn row_ptr(&self) -> &[u32] {
        &self.row_ptr
    }
    fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }
    fn payload(&self, entry: usize) -> &[i16] {
        self.slot_payload(self.slots[entry])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn repeated(rows: usize, block: [i16; 2]) -> Q16Matrix {
        Q16Matrix::from_vec(rows, 2, block.iter().copied().cycle().take(rows * 2).collect())
    }

    #[test]
    fn identical_blocks_share_one_payload() {
        let m = repeated(8, [3, -4]);
        let s = to_sbsr(&m, 1, 2).unwrap();
        let l = s.layout();
        assert!(!l.flags[0]);
        assert_eq!(l.flags.count_ones(), 7);
        assert_eq!(l.unique_blocks, vec![3, -4]);
        assert_eq!(l.refs, vec![0; 7]);
        assert_eq!(s.decode(), m);
    }

    #[test]
    fn distinct_blocks_match_bsr_payload() {
        let m = Q16Matrix::from_vec(3, 2, vec![1, 2, 3, 4, 5, 6]);
        let s = to_sbsr(&m, 1, 2).unwrap();
        let b = to_bsr_ref(&m);
        let l = s.layout();
        assert_eq!(l.flags.count_ones(), 0);
        assert!(l.refs.is_empty());
        assert_eq!(l.unique_blocks, b.blocks());
        assert_eq!(s.row_ptr(), b.row_ptr());
        assert_eq!(s.col_idx(), b.col_idx());
    }

    fn to_bsr_ref(m: &Q16Matrix) -> BsrMatrix {
        BsrMatrix::from_dense(m, 1, 2).unwrap()
    }

    #[test]
    fn scan_touches_each_stored_block_once() {
        let mut m = repeated(10, [1, 1]);
        m.set(4, 0, 0);
        m.set(4, 1, 0);
        let (s, stats) = to_sbsr_with_stats(&m, 1, 2).unwrap();
        assert_eq!(stats.block_touches, s.num_blocks());
        assert_eq!(stats.block_touches, 9);
        assert_eq!(stats.tiles_scanned, 10);
    }

    #[test]
    fn get_block_follows_references() {
        let m = Q16Matrix::from_vec(2, 4, vec![7, 8, 0, 0, 0, 0, 7, 8]);
        let s = to_sbsr(&m, 1, 2).unwrap();
        assert_eq!(&*s.get_block(0, 0).unwrap(), &[7, 8]);
        assert_eq!(&*s.get_block(1, 1).unwrap(), &[7, 8]);
        assert_eq!(&*s.get_block(0, 1).unwrap(), &[0, 0]);
        assert!(s.get_block(2, 0).is_err());
    }

    #[test]
    fn update_repeat_to_new_payload() {
        let m = repeated(4, [1, 2]);
        let mut s = to_sbsr(&m, 1, 2).unwrap();
        s.update_block(2, 0, &[9, 9]).unwrap();
        let l = s.layout();
        assert_eq!(l.unique_blocks, vec![1, 2, 9, 9]);
        assert!(!l.flags[2]);
        let mut expect = m.clone();
        expect.write_tile(2, 0, 1, 2, &[9, 9]);
        assert_eq!(s.decode(), expect);
    }

    #[test]
    fn update_unshared_first_to_existing_payload_frees_it() {
        let m = Q16Matrix::from_vec(3, 2, vec![1, 2, 5, 5, 1, 2]);
        let mut s = to_sbsr(&m, 1, 2).unwrap();
        assert_eq!(s.num_unique(), 2);
        s.update_block(1, 0, &[1, 2]).unwrap();
        assert_eq!(s.num_unique(), 1);
        let l = s.layout();
        assert_eq!(l.unique_blocks, vec![1, 2]);
        assert_eq!(l.refs, vec![0, 0]);
        assert_eq!(s.decode(), repeated(3, [1, 2]));
        // the freed slot is recycled
        s.update_block(0, 0, &[4, 4]).unwrap();
        assert_eq!(s.num_unique(), 2);
        assert_eq!(s.layout().unique_blocks, vec![4, 4, 1, 2]);
    }

    #[test]
    fn overwriting_shared_first_promotes_next_sharer() {
        let m = repeated(3, [6, 6]);
        let mut s = to_sbsr(&m, 1, 2).unwrap();
        s.update_block(0, 0, &[1, 0]).unwrap();
        let l = s.layout();
        assert_eq!(l.unique_blocks, vec![1, 0, 6, 6]);
        assert_eq!(l.flags.iter().by_vals().collect::<Vec<_>>(), vec![false, false, true]);
        assert_eq!(l.refs, vec![1]);
    }

    #[test]
    fn update_rejects_bad_targets() {
        let m = Q16Matrix::from_vec(1, 3, vec![1, 0, 0]);
        let mut s = to_sbsr(&m, 1, 2).unwrap();
        assert!(matches!(s.update_block(0, 1, &[1, 0]), Err(FormatError::NotStored { .. })));
        assert!(matches!(s.update_block(0, 0, &[0, 0]), Err(FormatError::ZeroBlock { .. })));
        assert!(matches!(s.update_block(0, 0, &[1]), Err(FormatError::PayloadLength { .. })));
        assert!(matches!(s.update_block(3, 0, &[1, 1]), Err(FormatError::OutOfRange { .. })));
    }

    #[test]
    fn from_layout_rejects_forward_reference() {
        let m = repeated(2, [1, 1]);
        let s = to_sbsr(&m, 1, 2).unwrap();
        let mut l = s.layout();
        l.refs[0] = 1;
        let err = SbsrMatrix::from_layout(2, 2, 1, 2, s.row_ptr().to_vec(), s.col_idx().to_vec(), l);
        assert!(matches!(err, Err(FormatError::RefOutOfRange { reference: 1, .. })));
    }

    #[test]
    fn from_layout_rejects_duplicate_uniques() {
        let l = SharedLayout {
            flags: bitvec![u8, Msb0; 0, 0],
            refs: vec![],
            unique_blocks: vec![1, 1, 1, 1],
        };
        let err = SbsrMatrix::from_layout(2, 2, 1, 2, vec![0, 1, 2], vec![0, 0], l);
        assert!(matches!(err, Err(FormatError::DuplicateUnique { .. })));
    }

    #[test]
    fn bsr_conversions_agree() {
        let m = Q16Matrix::from_vec(4, 4, vec![1, 2, 1, 2, 0, 0, 1, 2, 3, 0, 1, 2, 0, 0, 0, 0]);
        let b = BsrMatrix::from_dense(&m, 1, 2).unwrap();
        let s = SbsrMatrix::from_bsr(&b);
        assert_eq!(s, to_sbsr(&m, 1, 2).unwrap());
        assert_eq!(s.to_bsr(), b);
    }
}
