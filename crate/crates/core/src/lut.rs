//! Construction, size accounting and on-disk format of the three LUT kinds.
//!
//! * [`PackedLut`]: rows are packed weight vectors, columns packed activation
//!   vectors, entries the `p`-term inner product.
//! * [`CanonicalLut`]: same rows, but one column per multiset of activation
//!   codes (sorted representative), indexed by multiset rank.
//! * [`ReorderingLut`]: rows are packed weight vectors, columns permutation
//!   ranks; an entry is the weight vector permuted into the order of the
//!   sorted activations, repacked.
//!
//! For any weights `w` and activations `a`,
//! `packed[pack(w)][pack(a)] == canonical[reorder[pack(w)][rank(pi_a)]][mrank(sort(a))]`.

use std::borrow::Cow;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::{
    check_pack_width, factorial, multiset_count, next_multiset, pack_bits, perm_unrank, unpack_into, Code, CodeTable,
    CodeTables,
};

/// Upper bound on entries materialized by a single build.
pub const MAX_TABLE_ENTRIES: u128 = 1 << 28;

pub const DEFAULT_ENTRY_BYTES: u8 = 2;

/// Reordering tables are limited to `p <= 8` (`8! = 40320` columns).
pub const MAX_REORDER_P: usize = 8;

pub const FILE_MAGIC: &[u8; 4] = b"LCLT";
pub const FILE_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LutKind {
    Packed = 0,
    Canonical = 1,
    Reordering = 2,
}

impl LutKind {
    fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(LutKind::Packed),
            1 => Ok(LutKind::Canonical),
            2 => Ok(LutKind::Reordering),
            other => Err(Error::Malformed(format!("unknown LUT kind {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    #[default]
    RowMajor = 0,
    ColumnMajor = 1,
}

impl Layout {
    fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Layout::RowMajor),
            1 => Ok(Layout::ColumnMajor),
            other => Err(Error::Malformed(format!("unknown layout {other}"))),
        }
    }
}

/// Dense 2-D table with a selectable storage order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table<E> {
    rows: usize,
    cols: usize,
    layout: Layout,
    entries: Vec<E>,
}

impl<E: Copy + Send + Sync> Table<E> {
    fn row_major(rows: usize, cols: usize, entries: Vec<E>) -> Self {
        debug_assert_eq!(entries.len(), rows * cols);
        Self {
            rows,
            cols,
            layout: Layout::RowMajor,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Entries in storage order.
    pub fn entries(&self) -> &[E] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> E {
        match self.layout {
            Layout::RowMajor => self.entries[row * self.cols + col],
            Layout::ColumnMajor => self.entries[col * self.rows + row],
        }
    }

    /// One column; contiguous (borrowed) under column-major storage.
    pub fn column(&self, col: usize) -> Cow<'_, [E]> {
        match self.layout {
            Layout::ColumnMajor => Cow::Borrowed(&self.entries[col * self.rows..(col + 1) * self.rows]),
            Layout::RowMajor => Cow::Owned((0..self.rows).map(|r| self.get(r, col)).collect()),
        }
    }

    fn last_mut(&mut self) -> Option<&mut E> {
        self.entries.last_mut()
    }

    pub fn with_layout(&self, layout: Layout) -> Self {
        if layout == self.layout {
            return self.clone();
        }
        let (outer, inner) = match layout {
            Layout::RowMajor => (self.rows, self.cols),
            Layout::ColumnMajor => (self.cols, self.rows),
        };
        let mut entries = Vec::with_capacity(self.entries.len());
        for o in 0..outer {
            for i in 0..inner {
                entries.push(match layout {
                    Layout::RowMajor => self.get(o, i),
                    Layout::ColumnMajor => self.get(i, o),
                });
            }
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            layout,
            entries,
        }
    }
}

/// Operation-packed LUT.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedLut {
    p: usize,
    entry_bytes: u8,
    weight_table: CodeTable,
    act_table: CodeTable,
    table: Table<i32>,
}

/// Canonical LUT: activation columns deduplicated to one per multiset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalLut {
    p: usize,
    entry_bytes: u8,
    weight_table: CodeTable,
    act_table: CodeTable,
    table: Table<i32>,
}

/// Maps (packed weights, permutation rank) to the permuted, repacked weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReorderingLut {
    p: usize,
    b_w: u8,
    table: Table<u32>,
}

macro_rules! value_lut_accessors {
    ($t:ty) => {
        impl $t {
            pub fn p(&self) -> usize {
                self.p
            }
            pub fn b_w(&self) -> u8 {
                self.weight_table.bitwidth()
            }
            pub fn b_a(&self) -> u8 {
                self.act_table.bitwidth()
            }
            /// Entry width `b_o` in bytes.
            pub fn entry_bytes(&self) -> u8 {
                self.entry_bytes
            }
            pub fn weight_table(&self) -> &CodeTable {
                &self.weight_table
            }
            pub fn act_table(&self) -> &CodeTable {
                &self.act_table
            }
            pub fn rows(&self) -> usize {
                self.table.rows
            }
            pub fn cols(&self) -> usize {
                self.table.cols
            }
            pub fn table(&self) -> &Table<i32> {
                &self.table
            }
            #[inline]
            pub fn get(&self, row: usize, col: usize) -> i32 {
                self.table.get(row, col)
            }
            pub fn size_bytes(&self) -> u128 {
                self.entry_bytes as u128 * self.table.entries.len() as u128
            }
            pub fn with_layout(&self, layout: Layout) -> Self {
                Self {
                    table: self.table.with_layout(layout),
                    ..self.clone()
                }
            }
        }
    };
}

value_lut_accessors!(PackedLut);
value_lut_accessors!(CanonicalLut);

impl CanonicalLut {
    /// Perturbs one stored entry; only used by the self-test fault injection.
    pub(crate) fn corrupt_entry(&mut self) {
        if let Some(e) = self.table.last_mut() {
            *e = e.wrapping_add(1);
        }
    }
}

impl ReorderingLut {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn b_w(&self) -> u8 {
        self.b_w
    }

    pub fn rows(&self) -> usize {
        self.table.rows
    }

    pub fn cols(&self) -> usize {
        self.table.cols
    }

    pub fn table(&self) -> &Table<u32> {
        &self.table
    }

    /// Bytes per stored entry, `ceil(p * b_w / 8)`, at least 1.
    pub fn entry_bytes(&self) -> u8 {
        reorder_entry_bytes(self.b_w, self.p)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.table.get(row, col)
    }

    pub fn size_bytes(&self) -> u128 {
        self.entry_bytes() as u128 * self.table.entries.len() as u128
    }

    pub fn with_layout(&self, layout: Layout) -> Self {
        Self {
            table: self.table.with_layout(layout),
            ..self.clone()
        }
    }

    /// Redirects one entry to a different row; self-test fault injection only.
    pub(crate) fn corrupt_entry(&mut self) {
        let rows = self.table.rows as u32;
        if let Some(e) = self.table.last_mut() {
            *e = (*e + 1) % rows;
        }
    }
}

pub fn reorder_entry_bytes(b_w: u8, p: usize) -> u8 {
    (p * b_w as usize).div_ceil(8).max(1) as u8
}

fn check_entry_bytes(b_o: u8) -> Result<()> {
    match b_o {
        1 | 2 | 4 => Ok(()),
        other => Err(Error::InvalidEntryWidth(other)),
    }
}

fn entry_range(b_o: u8) -> (i64, i64) {
    let bits = 8 * b_o as u32;
    (-(1i64 << (bits - 1)), (1i64 << (bits - 1)) - 1)
}

/// Every entry is a sum of `p` products `v_w * v_a`, so it lies within
/// `[p * min_product, p * max_product]`, and both ends are attained.
fn check_entry_bound(wt: &CodeTable, at: &CodeTable, p: usize, b_o: u8) -> Result<()> {
    let (lo, hi) = entry_range(b_o);
    let mut min_prod = i64::MAX;
    let mut max_prod = i64::MIN;
    for &w in wt.values() {
        for &a in at.values() {
            let prod = w as i64 * a as i64;
            min_prod = min_prod.min(prod);
            max_prod = max_prod.max(prod);
        }
    }
    let (min_e, max_e) = (min_prod * p as i64, max_prod * p as i64);
    if max_e > hi {
        return Err(Error::EntryOverflow {
            value: max_e,
            bytes: b_o,
        });
    }
    if min_e < lo {
        return Err(Error::EntryOverflow {
            value: min_e,
            bytes: b_o,
        });
    }
    Ok(())
}

fn check_table_size(rows: u128, cols: u128) -> Result<()> {
    let entries = rows.saturating_mul(cols);
    if entries > MAX_TABLE_ENTRIES {
        return Err(Error::TableTooLarge { entries });
    }
    Ok(())
}

/// Decoded weight vectors for every packed row index.
fn decoded_rows(wt: &CodeTable, p: usize) -> Vec<Vec<i32>> {
    let b_w = wt.bitwidth();
    let rows = 1usize << (b_w as usize * p);
    let mut codes = vec![0 as Code; p];
    (0..rows)
        .map(|r| {
            unpack_into(r as u64, b_w, &mut codes);
            codes.iter().map(|&c| wt.decode(c)).collect()
        })
        .collect()
}

fn fill_dot_table(weights: &[Vec<i32>], acts: &[Vec<i32>]) -> Vec<i32> {
    let cols = acts.len();
    let mut entries = vec![0i32; weights.len() * cols];
    if cols == 0 {
        return entries;
    }
    entries
        .par_chunks_mut(cols)
        .zip(weights.par_iter())
        .for_each(|(row, w)| {
            for (slot, a) in row.iter_mut().zip(acts) {
                *slot = w.iter().zip(a).map(|(&x, &y)| x * y).sum();
            }
        });
    entries
}

pub fn build_packed_lut(weight_table: &CodeTable, act_table: &CodeTable, p: usize, b_o: u8) -> Result<PackedLut> {
    check_entry_bytes(b_o)?;
    let (b_w, b_a) = (weight_table.bitwidth(), act_table.bitwidth());
    check_pack_width(p, b_w + b_a)?;
    check_entry_bound(weight_table, act_table, p, b_o)?;
    check_table_size(pow2(b_w as usize * p), pow2(b_a as usize * p))?;

    let weights = decoded_rows(weight_table, p);
    let acts = decoded_rows(act_table, p);
    let entries = fill_dot_table(&weights, &acts);
    Ok(PackedLut {
        p,
        entry_bytes: b_o,
        weight_table: weight_table.clone(),
        act_table: act_table.clone(),
        table: Table::row_major(weights.len(), acts.len(), entries),
    })
}

pub fn build_canonical_lut(weight_table: &CodeTable, act_table: &CodeTable, p: usize, b_o: u8) -> Result<CanonicalLut> {
    check_entry_bytes(b_o)?;
    let (b_w, b_a) = (weight_table.bitwidth(), act_table.bitwidth());
    check_pack_width(p, b_w)?;
    check_pack_width(p, b_a)?;
    check_entry_bound(weight_table, act_table, p, b_o)?;
    let alphabet = 1u32 << b_a;
    let cols = multiset_count(alphabet, p).map_or(u128::MAX, |c| c as u128);
    check_table_size(pow2(b_w as usize * p), cols)?;

    let weights = decoded_rows(weight_table, p);
    let mut acts = Vec::with_capacity(cols as usize);
    let mut tuple = vec![0 as Code; p];
    loop {
        acts.push(tuple.iter().map(|&c| act_table.decode(c)).collect::<Vec<_>>());
        if !next_multiset(&mut tuple, alphabet) {
            break;
        }
    }
    debug_assert_eq!(acts.len() as u128, cols);
    let entries = fill_dot_table(&weights, &acts);
    Ok(CanonicalLut {
        p,
        entry_bytes: b_o,
        weight_table: weight_table.clone(),
        act_table: act_table.clone(),
        table: Table::row_major(weights.len(), acts.len(), entries),
    })
}

pub fn build_reordering_lut(b_w: u8, p: usize) -> Result<ReorderingLut> {
    if !(1..=8).contains(&b_w) {
        return Err(Error::InvalidBitwidth(b_w));
    }
    check_pack_width(p, b_w)?;
    if p > MAX_REORDER_P {
        return Err(Error::PTooLarge { p });
    }
    let rows = 1usize << (b_w as usize * p);
    let cols = factorial(p).unwrap() as usize;
    check_table_size(rows as u128, cols as u128)?;

    let perms: Vec<Vec<usize>> = (0..cols as u64).map(|c| perm_unrank(c, p)).collect::<Result<_>>()?;
    let mut entries = vec![0u32; rows * cols];
    entries.par_chunks_mut(cols).enumerate().for_each(|(r, row)| {
        let mut codes = vec![0 as Code; p];
        let mut permuted = vec![0 as Code; p];
        unpack_into(r as u64, b_w, &mut codes);
        for (slot, pi) in row.iter_mut().zip(&perms) {
            for (dst, &src) in permuted.iter_mut().zip(pi) {
                *dst = codes[src];
            }
            *slot = pack_bits(&permuted, b_w) as u32;
        }
    });
    Ok(ReorderingLut {
        p,
        b_w,
        table: Table::row_major(rows, cols, entries),
    })
}

fn pow2(bits: usize) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        1u128 << bits
    }
}

/// Exact byte counts for one `(b_w, b_a, p, b_o)` configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub b_w: u8,
    pub b_a: u8,
    pub p: usize,
    pub b_o: u8,
    pub reorder_entry_bytes: u8,
    pub rows: u128,
    pub packed_cols: u128,
    pub canonical_cols: u128,
    pub reordering_cols: u128,
    pub packed_bytes: u128,
    pub canonical_bytes: u128,
    pub reordering_bytes: u128,
    pub column_reduction: f64,
    pub total_reduction: f64,
}

impl SizeReport {
    /// Canonical plus reordering bytes.
    pub fn canonicalized_bytes(&self) -> u128 {
        self.canonical_bytes.saturating_add(self.reordering_bytes)
    }
}

pub fn compute_sizes(b_w: u8, b_a: u8, p: usize, b_o: u8) -> SizeReport {
    let rows = pow2(b_w as usize * p);
    let packed_cols = pow2(b_a as usize * p);
    let canonical_cols = if b_a >= 32 {
        u128::MAX
    } else {
        multiset_count(1u32 << b_a, p).map_or(u128::MAX, |c| c as u128)
    };
    let reordering_cols = factorial(p).map_or(u128::MAX, |c| c as u128);
    let rw = reorder_entry_bytes(b_w, p);
    let bytes = |width: u8, cols: u128| (width as u128).saturating_mul(rows).saturating_mul(cols);
    let packed_bytes = bytes(b_o, packed_cols);
    let canonical_bytes = bytes(b_o, canonical_cols);
    let reordering_bytes = bytes(rw, reordering_cols);
    SizeReport {
        b_w,
        b_a,
        p,
        b_o,
        reorder_entry_bytes: rw,
        rows,
        packed_cols,
        canonical_cols,
        reordering_cols,
        packed_bytes,
        canonical_bytes,
        reordering_bytes,
        column_reduction: packed_cols as f64 / canonical_cols as f64,
        total_reduction: packed_bytes as f64 / canonical_bytes.saturating_add(reordering_bytes) as f64,
    }
}

/// Any of the three table kinds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lut {
    Packed(PackedLut),
    Canonical(CanonicalLut),
    Reordering(ReorderingLut),
}

impl Lut {
    pub fn kind(&self) -> LutKind {
        match self {
            Lut::Packed(_) => LutKind::Packed,
            Lut::Canonical(_) => LutKind::Canonical,
            Lut::Reordering(_) => LutKind::Reordering,
        }
    }

    pub fn header(&self) -> LutHeader {
        let (b_w, b_a, p, b_o, layout, rows, cols) = match self {
            Lut::Packed(l) => (l.b_w(), l.b_a(), l.p, l.entry_bytes, l.table.layout, l.rows(), l.cols()),
            Lut::Canonical(l) => (l.b_w(), l.b_a(), l.p, l.entry_bytes, l.table.layout, l.rows(), l.cols()),
            Lut::Reordering(l) => (l.b_w, 0, l.p, l.entry_bytes(), l.table.layout, l.rows(), l.cols()),
        };
        LutHeader {
            version: FILE_VERSION,
            kind: self.kind(),
            b_w,
            b_a,
            p: p as u8,
            b_o,
            layout,
            rows: rows as u64,
            cols: cols as u64,
            crc32: crc32fast::hash(&self.payload()),
        }
    }

    /// Raw little-endian entries in storage order.
    fn payload(&self) -> Vec<u8> {
        match self {
            Lut::Packed(PackedLut { table, entry_bytes, .. })
            | Lut::Canonical(CanonicalLut { table, entry_bytes, .. }) => {
                let w = *entry_bytes as usize;
                let mut out = Vec::with_capacity(table.entries.len() * w);
                for &e in &table.entries {
                    out.extend_from_slice(&e.to_le_bytes()[..w]);
                }
                out
            }
            Lut::Reordering(l) => {
                let w = l.entry_bytes() as usize;
                let mut out = Vec::with_capacity(l.table.entries.len() * w);
                for &e in &l.table.entries {
                    let bytes = (e as u64).to_le_bytes();
                    out.extend_from_slice(&bytes[..w]);
                }
                out
            }
        }
    }
}

/// Fixed 32-byte file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LutHeader {
    pub version: u16,
    pub kind: LutKind,
    pub b_w: u8,
    pub b_a: u8,
    pub p: u8,
    pub b_o: u8,
    pub layout: Layout,
    pub rows: u64,
    pub cols: u64,
    pub crc32: u32,
}

impl LutHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(FILE_MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6] = self.kind as u8;
        b[7] = self.b_w;
        b[8] = self.b_a;
        b[9] = self.p;
        b[10] = self.b_o;
        b[11] = self.layout as u8;
        b[12..20].copy_from_slice(&self.rows.to_le_bytes());
        b[20..28].copy_from_slice(&self.cols.to_le_bytes());
        b[28..32].copy_from_slice(&self.crc32.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN]) -> Result<Self> {
        if &b[0..4] != FILE_MAGIC {
            return Err(Error::BadMagic);
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != FILE_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FILE_VERSION,
            });
        }
        Ok(Self {
            version,
            kind: LutKind::from_u8(b[6])?,
            b_w: b[7],
            b_a: b[8],
            p: b[9],
            b_o: b[10],
            layout: Layout::from_u8(b[11])?,
            rows: u64::from_le_bytes(b[12..20].try_into().unwrap()),
            cols: u64::from_le_bytes(b[20..28].try_into().unwrap()),
            crc32: u32::from_le_bytes(b[28..32].try_into().unwrap()),
        })
    }

    pub fn payload_len(&self) -> Option<u64> {
        self.rows.checked_mul(self.cols)?.checked_mul(self.b_o as u64)
    }
}

/// Code tables stored as JSON next to a packed or canonical LUT file.
pub type TableSidecar = CodeTables;

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".tables.json");
    PathBuf::from(s)
}

/// Encodes header and payload. Code tables are not part of the byte stream.
pub fn encode_lut(lut: &Lut) -> Vec<u8> {
    let payload = lut.payload();
    let mut header = lut.header();
    header.crc32 = crc32fast::hash(&payload);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&header.to_bytes());
    out.extend_from_slice(&payload);
    out
}

/// Decodes a LUT; `tables` is required for packed and canonical kinds.
pub fn decode_lut(bytes: &[u8], tables: Option<&TableSidecar>) -> Result<Lut> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[0..4] != FILE_MAGIC {
            return Err(Error::BadMagic);
        }
        return Err(Error::Malformed("file shorter than header".into()));
    }
    let header = LutHeader::from_bytes(bytes[..HEADER_LEN].try_into().unwrap())?;
    let payload = &bytes[HEADER_LEN..];
    let expected = header
        .payload_len()
        .ok_or_else(|| Error::Malformed("dimensions overflow".into()))?;
    if (payload.len() as u64) < expected {
        return Err(Error::ChecksumMismatch);
    }
    if payload.len() as u64 > expected {
        return Err(Error::Malformed(format!(
            "{} trailing bytes after payload",
            payload.len() as u64 - expected
        )));
    }
    if crc32fast::hash(payload) != header.crc32 {
        return Err(Error::ChecksumMismatch);
    }
    let (rows, cols) = (header.rows as usize, header.cols as usize);
    let p = header.p as usize;
    let width = header.b_o as usize;
    let check_dims = |want_rows: u128, want_cols: u128| -> Result<()> {
        if want_rows != rows as u128 || want_cols != cols as u128 {
            return Err(Error::Malformed(format!(
                "dimensions {rows}x{cols} do not match kind/bitwidths (expected {want_rows}x{want_cols})"
            )));
        }
        Ok(())
    };

    match header.kind {
        LutKind::Reordering => {
            if width != reorder_entry_bytes(header.b_w, p) as usize {
                return Err(Error::Malformed(format!("reordering entry width {width}")));
            }
            check_dims(pow2(header.b_w as usize * p), factorial(p).unwrap_or(0) as u128)?;
            let entries = payload
                .chunks_exact(width)
                .map(|c| {
                    let mut b = [0u8; 8];
                    b[..width].copy_from_slice(c);
                    u64::from_le_bytes(b) as u32
                })
                .collect();
            Ok(Lut::Reordering(ReorderingLut {
                p,
                b_w: header.b_w,
                table: Table {
                    rows,
                    cols,
                    layout: header.layout,
                    entries,
                },
            }))
        }
        kind => {
            check_entry_bytes(header.b_o)?;
            let tables = tables
                .ok_or_else(|| Error::Malformed("packed/canonical LUT requires its code-table sidecar".into()))?;
            if tables.weight.bitwidth() != header.b_w || tables.activation.bitwidth() != header.b_a {
                return Err(Error::Malformed("sidecar bitwidths do not match header".into()));
            }
            let want_cols = if kind == LutKind::Packed {
                pow2(header.b_a as usize * p)
            } else {
                multiset_count(1u32 << header.b_a, p).map_or(u128::MAX, |c| c as u128)
            };
            check_dims(pow2(header.b_w as usize * p), want_cols)?;
            let entries = payload
                .chunks_exact(width)
                .map(|c| {
                    let fill = if c[width - 1] & 0x80 != 0 { 0xff } else { 0 };
                    let mut b = [fill; 4];
                    b[..width].copy_from_slice(c);
                    i32::from_le_bytes(b)
                })
                .collect();
            let table = Table {
                rows,
                cols,
                layout: header.layout,
                entries,
            };
            let (weight_table, act_table) = (tables.weight.clone(), tables.activation.clone());
            Ok(if kind == LutKind::Packed {
                Lut::Packed(PackedLut {
                    p,
                    entry_bytes: header.b_o,
                    weight_table,
                    act_table,
                    table,
                })
            } else {
                Lut::Canonical(CanonicalLut {
                    p,
                    entry_bytes: header.b_o,
                    weight_table,
                    act_table,
                    table,
                })
            })
        }
    }
}

/// Writes the LUT file and, for packed/canonical kinds, its JSON sidecar.
pub fn serialize_lut(lut: &Lut, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_lut(lut))?;
    w.flush()?;
    let tables = match lut {
        Lut::Packed(l) => Some((l.weight_table.clone(), l.act_table.clone())),
        Lut::Canonical(l) => Some((l.weight_table.clone(), l.act_table.clone())),
        Lut::Reordering(_) => None,
    };
    if let Some((weight, activation)) = tables {
        let sidecar = TableSidecar { weight, activation };
        std::fs::write(sidecar_path(path), serde_json::to_vec_pretty(&sidecar)?)?;
    }
    Ok(())
}

pub fn deserialize_lut(path: &Path) -> Result<Lut> {
    let bytes = std::fs::read(path)?;
    let side = sidecar_path(path);
    let tables = if side.exists() {
        Some(serde_json::from_slice::<TableSidecar>(&std::fs::read(side)?)?)
    } else {
        None
    };
    decode_lut(&bytes, tables.as_ref())
}

/// Reads only the fixed header.
pub fn read_header(path: &Path) -> Result<LutHeader> {
    let mut buf = [0u8; HEADER_LEN];
    let mut r = BufReader::new(File::open(path)?);
    r.read_exact(&mut buf)?;
    LutHeader::from_bytes(&buf)
}
