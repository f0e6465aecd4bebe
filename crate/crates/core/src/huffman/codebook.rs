use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use super::HuffmanError;

/// Longest code the bit-level routines handle.
pub const MAX_CODE_LEN: u8 = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeEntry {
    pub symbol: Vec<i16>,
    pub len: u8,
    /// Code bits right-aligned; the first emitted bit is bit `len - 1`.
    pub code: u64,
}

/// Canonical Huffman code over fixed-width q16 symbols.
///
/// Entries are ordered by `(code length, symbol)`, and codes are assigned
/// consecutively in that order, so the lengths alone determine every code.
#[derive(Debug, Clone)]
pub struct Codebook {
    width: usize,
    entries: Vec<CodeEntry>,
    lookup: HashMap<Vec<i16>, usize>,
    /// Per length: (first code, index of first entry, entry count).
    tables: Vec<(u64, usize, usize)>,
}

impl PartialEq for Codebook {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width && self.entries == other.entries
    }
}

impl Eq for Codebook {}

/// Optimal prefix code for the given symbol counts.
///
/// Merge ties are broken by symbol order (leaves are numbered by ascending
/// symbol, merged nodes get increasing numbers after them), which makes the
/// lengths, and therefore the canonical codes, deterministic.
pub fn build_codebook(freqs: &BTreeMap<Vec<i16>, u64>) -> Result<Codebook, HuffmanError> {
    let width = match freqs.keys().next() {
        Some(s) => s.len(),
        None => return Err(HuffmanError::EmptyAlphabet),
    };
    if let Some(s) = freqs.keys().find(|s| s.len() != width) {
        return Err(HuffmanError::MixedWidth {
            expected: width,
            found: s.len(),
        });
    }
    if let Some((s, _)) = freqs.iter().find(|(_, &c)| c == 0) {
        return Err(HuffmanError::ZeroFrequency { symbol: s.clone() });
    }
    let lens = code_lengths(&freqs.values().copied().collect::<Vec<_>>());
    let symbols = freqs.keys().cloned().zip(lens).collect();
    Codebook::from_lengths(width, symbols)
}

/// Huffman code lengths for `counts` (all positive), one per input.
fn code_lengths(counts: &[u64]) -> Vec<u8> {
    let n = counts.len();
    if n == 1 {
        return vec![1];
    }
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
        counts.iter().enumerate().map(|(i, &c)| Reverse((c, i))).collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((wa, a)) = heap.pop().unwrap();
        let Reverse((wb, b)) = heap.pop().unwrap();
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((wa + wb, next)));
        next += 1;
    }
    // Parents always have larger ids, so depths resolve top-down.
    let mut depth = vec![0u32; 2 * n - 1];
    for id in (0..2 * n - 2).rev() {
        depth[id] = depth[parent[id]] + 1;
    }
    depth[..n].iter().map(|&d| d as u8).collect()
}

impl Codebook {
    pub(crate) fn empty(width: usize) -> Self {
        Self {
            width,
            entries: Vec::new(),
            lookup: HashMap::new(),
            tables: Vec::new(),
        }
    }

    /// Canonical codebook from `(symbol, length)` pairs.
    ///
    /// The lengths must describe a complete prefix code (Kraft sum exactly 1),
    /// except that a single symbol takes a 1-bit code.
    pub fn from_lengths(width: usize, symbols: Vec<(Vec<i16>, u8)>) -> Result<Self, HuffmanError> {
        if symbols.is_empty() {
            return Ok(Self::empty(width));
        }
        let mut order = symbols;
        order.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));
        for w in order.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(HuffmanError::DuplicateSymbol {
                    symbol: w[0].0.clone(),
                });
            }
        }
        if let Some((s, _)) = order.iter().find(|(s, _)| s.len() != width) {
            return Err(HuffmanError::MixedWidth {
                expected: width,
                found: s.len(),
            });
        }
        if let Some(&(_, len)) = order.iter().find(|(_, l)| *l == 0 || *l > MAX_CODE_LEN) {
            return Err(HuffmanError::BadLength { len });
        }
        let complete = if order.len() == 1 {
            order[0].1 == 1
        } else {
            // Kraft sum scaled by 2^64: sum of 2^(64 - len) must be exactly 2^64.
            order
                .iter()
                .map(|(_, l)| 1u128 << (MAX_CODE_LEN - l))
                .sum::<u128>()
                == 1u128 << MAX_CODE_LEN
        };
        if !complete {
            return Err(HuffmanError::NotComplete);
        }

        let max_len = order.last().unwrap().1 as usize;
        let mut tables = vec![(0u64, 0usize, 0usize); max_len + 1];
        let mut entries = Vec::with_capacity(order.len());
        let mut code = 0u64;
        let mut prev_len = order[0].1;
        for (i, (symbol, len)) in order.into_iter().enumerate() {
            if i > 0 {
                code = (code + 1) << (len - prev_len);
            }
            let t = &mut tables[len as usize];
            if t.2 == 0 {
                *t = (code, i, 0);
            }
            t.2 += 1;
            prev_len = len;
            entries.push(CodeEntry { symbol, len, code });
        }
        let lookup = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.symbol.clone(), i))
            .collect();
        Ok(Self {
            width,
            entries,
            lookup,
            tables,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn entries(&self) -> &[CodeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, symbol: &[i16]) -> Option<&CodeEntry> {
        self.lookup.get(symbol).map(|&i| &self.entries[i])
    }

    pub fn max_len(&self) -> u8 {
        self.entries.last().map_or(0, |e| e.len)
    }

    /// Entry matching a `len`-bit prefix `code`, if any.
    pub(crate) fn resolve(&self, code: u64, len: u8) -> Option<&CodeEntry> {
        let &(first, start, count) = self.tables.get(len as usize)?;
        if count == 0 || code < first {
            return None;
        }
        let off = (code - first) as usize;
        (off < count).then(|| &self.entries[start + off])
    }

    /// Total payload bits for the given symbol counts.
    pub fn payload_bits<'a, I>(&self, counts: I) -> u64
    where
        I: IntoIterator<Item = (&'a Vec<i16>, &'a u64)>,
    {
        counts
            .into_iter()
            .map(|(s, c)| self.get(s).map_or(0, |e| e.len as u64) * c)
            .sum()
    }
}
