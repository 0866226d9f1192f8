//! Code tables, bit-packing, activation canonicalization and the
//! combinatorial ranking of permutations and multisets.
//!
//! Codes are unsigned indices into a [`CodeTable`]; the table decodes them to
//! signed integers. Everything downstream (LUT construction, lookups,
//! reordering) works on codes only, so the number of table entries depends on
//! bitwidths and never on the numeric format behind the codes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A `b`-bit code, `b <= 8`.
pub type Code = u8;

/// Largest `p` for which `p!` fits in a `u64`.
pub const MAX_PERM_LEN: usize = 20;

fn check_bitwidth(bitwidth: u8) -> Result<()> {
    if (1..=8).contains(&bitwidth) {
        Ok(())
    } else {
        Err(Error::InvalidBitwidth(bitwidth))
    }
}

/// Decode map from `b`-bit codes to signed integer values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCodeTable")]
pub struct CodeTable {
    bitwidth: u8,
    values: Vec<i32>,
    zero_code: Option<u32>,
}

#[derive(Deserialize)]
struct RawCodeTable {
    bitwidth: u8,
    values: Vec<i32>,
    #[serde(default)]
    zero_code: Option<u32>,
}

impl TryFrom<RawCodeTable> for CodeTable {
    type Error = Error;

    fn try_from(raw: RawCodeTable) -> Result<Self> {
        CodeTable::new(raw.bitwidth, raw.values, raw.zero_code)
    }
}

impl CodeTable {
    pub fn new(bitwidth: u8, values: Vec<i32>, zero_code: Option<u32>) -> Result<Self> {
        check_bitwidth(bitwidth)?;
        let expected = 1usize << bitwidth;
        if values.len() != expected {
            return Err(Error::InvalidCodeTable(format!(
                "{} values given, {bitwidth}-bit table needs {expected}",
                values.len()
            )));
        }
        if let Some(z) = zero_code {
            match values.get(z as usize) {
                Some(0) => {}
                Some(v) => return Err(Error::InvalidCodeTable(format!("zero_code {z} decodes to {v}, not 0"))),
                None => return Err(Error::InvalidCodeTable(format!("zero_code {z} out of range"))),
            }
        }
        Ok(Self {
            bitwidth,
            values,
            zero_code,
        })
    }

    /// Builds a table and picks the first code decoding to 0 as `zero_code`.
    pub fn from_values(bitwidth: u8, values: Vec<i32>) -> Result<Self> {
        let zero = values.iter().position(|&v| v == 0).map(|z| z as u32);
        Self::new(bitwidth, values, zero)
    }

    /// `code -> code`, zero at code 0.
    pub fn unsigned_identity(bitwidth: u8) -> Result<Self> {
        check_bitwidth(bitwidth)?;
        let values = (0..1i32 << bitwidth).collect();
        Self::new(bitwidth, values, Some(0))
    }

    /// Two's-complement range `[-2^(b-1), 2^(b-1) - 1]` in ascending code
    /// order, so `code -> code - 2^(b-1)`.
    pub fn symmetric_signed(bitwidth: u8) -> Result<Self> {
        check_bitwidth(bitwidth)?;
        let half = 1i32 << (bitwidth - 1);
        let values = (0..1i32 << bitwidth).map(|c| c - half).collect();
        Self::new(bitwidth, values, Some(half as u32))
    }

    pub fn bitwidth(&self) -> u8 {
        self.bitwidth
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    pub fn zero_code(&self) -> Option<u32> {
        self.zero_code
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn decode(&self, code: Code) -> i32 {
        self.values[code as usize]
    }

    pub fn max_abs(&self) -> i64 {
        self.values.iter().map(|&v| (v as i64).abs()).max().unwrap_or(0)
    }
}

/// Weight and activation code tables used together for one GEMM.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeTables {
    pub weight: CodeTable,
    pub activation: CodeTable,
}

impl CodeTables {
    pub fn new(weight: CodeTable, activation: CodeTable) -> Self {
        Self { weight, activation }
    }

    pub fn unsigned_identity(b_w: u8, b_a: u8) -> Result<Self> {
        Ok(Self::new(
            CodeTable::unsigned_identity(b_w)?,
            CodeTable::unsigned_identity(b_a)?,
        ))
    }

    pub fn symmetric_signed(b_w: u8, b_a: u8) -> Result<Self> {
        Ok(Self::new(
            CodeTable::symmetric_signed(b_w)?,
            CodeTable::symmetric_signed(b_a)?,
        ))
    }
}

/// Row-major matrix of `bitwidth`-bit codes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeMatrix {
    rows: usize,
    cols: usize,
    bitwidth: u8,
    data: Vec<Code>,
}

impl CodeMatrix {
    pub fn new(rows: usize, cols: usize, bitwidth: u8, data: Vec<Code>) -> Result<Self> {
        check_bitwidth(bitwidth)?;
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} codes for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(&bad) = data.iter().find(|&&c| (c as u32) >> bitwidth != 0) {
            return Err(Error::CodeOutOfRange {
                code: bad as u32,
                bitwidth,
            });
        }
        Ok(Self {
            rows,
            cols,
            bitwidth,
            data,
        })
    }

    pub fn filled(rows: usize, cols: usize, bitwidth: u8, code: Code) -> Result<Self> {
        Self::new(rows, cols, bitwidth, vec![code; rows * cols])
    }

    pub fn from_fn(rows: usize, cols: usize, bitwidth: u8, mut f: impl FnMut(usize, usize) -> Code) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::new(rows, cols, bitwidth, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bitwidth(&self) -> u8 {
        self.bitwidth
    }

    pub fn data(&self) -> &[Code] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Code {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[Code] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copy of rows `start..start + len`.
    pub fn row_block(&self, start: usize, len: usize) -> CodeMatrix {
        let data = self.data[start * self.cols..(start + len) * self.cols].to_vec();
        CodeMatrix {
            rows: len,
            cols: self.cols,
            bitwidth: self.bitwidth,
            data,
        }
    }

    /// Copy of columns `start..start + len`.
    pub fn col_block(&self, start: usize, len: usize) -> CodeMatrix {
        let mut data = Vec::with_capacity(self.rows * len);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + len]);
        }
        CodeMatrix {
            rows: self.rows,
            cols: len,
            bitwidth: self.bitwidth,
            data,
        }
    }
}

/// `p` codes of `bitwidth` bits packed into one word, element 0 in the most
/// significant position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PackedVector {
    pub p: usize,
    pub bitwidth: u8,
    pub bits: u64,
}

pub(crate) fn check_pack_width(p: usize, bitwidth: u8) -> Result<()> {
    if p == 0 {
        return Err(Error::InfeasibleP("packing degree must be at least 1".into()));
    }
    if p * bitwidth as usize > 64 {
        return Err(Error::PackTooWide { p, bitwidth });
    }
    Ok(())
}

/// Unchecked packing for hot loops; callers validate widths up front.
#[inline]
pub(crate) fn pack_bits(codes: &[Code], bitwidth: u8) -> u64 {
    codes.iter().fold(0u64, |acc, &c| (acc << bitwidth) | c as u64)
}

#[inline]
pub(crate) fn unpack_into(bits: u64, bitwidth: u8, out: &mut [Code]) {
    let mask = (1u64 << bitwidth) - 1;
    let p = out.len();
    for (i, slot) in out.iter_mut().enumerate() {
        let shift = (p - 1 - i) * bitwidth as usize;
        *slot = ((bits >> shift) & mask) as Code;
    }
}

pub fn pack(codes: &[Code], bitwidth: u8) -> Result<PackedVector> {
    check_bitwidth(bitwidth)?;
    check_pack_width(codes.len(), bitwidth)?;
    if let Some(&bad) = codes.iter().find(|&&c| (c as u32) >> bitwidth != 0) {
        return Err(Error::CodeOutOfRange {
            code: bad as u32,
            bitwidth,
        });
    }
    Ok(PackedVector {
        p: codes.len(),
        bitwidth,
        bits: pack_bits(codes, bitwidth),
    })
}

pub fn unpack(v: &PackedVector) -> Vec<Code> {
    let mut out = vec![0; v.p];
    unpack_into(v.bits, v.bitwidth, &mut out);
    out
}

/// A sorted activation vector with its multiset rank (canonical LUT column)
/// and the rank of the sorting permutation (reordering LUT column).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CanonVector {
    pub sorted_codes: Vec<Code>,
    pub multiset_rank: u64,
    pub perm_rank: u64,
}

impl CanonVector {
    /// The permutation `pi` with `sorted_codes[j] == original[pi[j]]`.
    pub fn permutation(&self) -> Vec<usize> {
        perm_unrank(self.perm_rank, self.sorted_codes.len()).expect("perm_rank produced by canonicalize is in range")
    }
}

/// Stable ascending sort of `codes`, recording the sorting permutation.
pub fn canonicalize(codes: &[Code], bitwidth: u8) -> Result<CanonVector> {
    check_bitwidth(bitwidth)?;
    if let Some(&bad) = codes.iter().find(|&&c| (c as u32) >> bitwidth != 0) {
        return Err(Error::CodeOutOfRange {
            code: bad as u32,
            bitwidth,
        });
    }
    let mut perm: Vec<usize> = (0..codes.len()).collect();
    perm.sort_by_key(|&i| codes[i]);
    let sorted_codes: Vec<Code> = perm.iter().map(|&i| codes[i]).collect();
    let multiset_rank = multiset_rank(&sorted_codes, 1u32 << bitwidth)?;
    let perm_rank = perm_rank(&perm)?;
    Ok(CanonVector {
        sorted_codes,
        multiset_rank,
        perm_rank,
    })
}

pub fn factorial(n: usize) -> Option<u64> {
    (1..=n as u64).try_fold(1u64, |acc, k| acc.checked_mul(k))
}

/// Lexicographic (Lehmer code) rank of a permutation of `0..p`.
pub fn perm_rank(perm: &[usize]) -> Result<u64> {
    let p = perm.len();
    if p > MAX_PERM_LEN {
        return Err(Error::NotAPermutation(p));
    }
    let mut seen = vec![false; p];
    for &x in perm {
        if x >= p || seen[x] {
            return Err(Error::NotAPermutation(p));
        }
        seen[x] = true;
    }
    let mut rank = 0u64;
    for i in 0..p {
        let smaller_after = perm[i + 1..].iter().filter(|&&x| x < perm[i]).count() as u64;
        rank += smaller_after * factorial(p - 1 - i).unwrap();
    }
    Ok(rank)
}

pub fn perm_unrank(rank: u64, p: usize) -> Result<Vec<usize>> {
    let limit = if p > MAX_PERM_LEN {
        return Err(Error::NotAPermutation(p));
    } else {
        factorial(p).unwrap()
    };
    if rank >= limit {
        return Err(Error::RankOutOfRange { rank, limit });
    }
    let mut pool: Vec<usize> = (0..p).collect();
    let mut rest = rank;
    let mut out = Vec::with_capacity(p);
    for i in 0..p {
        let f = factorial(p - 1 - i).unwrap();
        let idx = (rest / f) as usize;
        rest %= f;
        out.push(pool.remove(idx));
    }
    Ok(out)
}

/// `C(n, k)`, or `None` when it does not fit in a `u64`.
pub fn binomial(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        acc = acc * (n as u128 - k as u128 + i) / i;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// Number of size-`p` multisets over an alphabet of `alphabet` symbols.
pub fn multiset_count(alphabet: u32, p: usize) -> Option<u64> {
    if alphabet == 0 {
        return Some(u64::from(p == 0));
    }
    binomial(alphabet as u64 + p as u64 - 1, p as u64)
}

fn binom_or_err(n: u64, k: u64) -> Result<u64> {
    binomial(n, k).ok_or_else(|| Error::InfeasibleP(format!("C({n},{k}) overflows u64")))
}

/// Lexicographic rank of a non-decreasing code tuple among all such tuples
/// over `alphabet` symbols.
///
/// The tuple `s` maps to the strictly increasing `c_i = s_i + i` drawn from
/// `0..alphabet + p - 1`, and is ranked with the combinatorial number system.
pub fn multiset_rank(sorted: &[Code], alphabet: u32) -> Result<u64> {
    let p = sorted.len();
    if sorted.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::NotSorted);
    }
    if let Some(&bad) = sorted.iter().find(|&&c| c as u32 >= alphabet) {
        return Err(Error::CodeOutOfRange {
            code: bad as u32,
            bitwidth: (32 - alphabet.saturating_sub(1).leading_zeros()) as u8,
        });
    }
    if p == 0 {
        return Ok(0);
    }
    let n = alphabet as u64 + p as u64 - 1;
    let mut rank = 0u64;
    let mut lo = 0u64;
    for (i, &s) in sorted.iter().enumerate() {
        let c = s as u64 + i as u64;
        let r = (p - i) as u64;
        // combinations whose i-th element is in lo..c with the same prefix
        rank += binom_or_err(n - lo, r)? - binom_or_err(n - c, r)?;
        lo = c + 1;
    }
    Ok(rank)
}

pub fn multiset_unrank(rank: u64, p: usize, alphabet: u32) -> Result<Vec<Code>> {
    let limit =
        multiset_count(alphabet, p).ok_or_else(|| Error::InfeasibleP(format!("multiset count overflows for p={p}")))?;
    if rank >= limit {
        return Err(Error::RankOutOfRange { rank, limit });
    }
    let n = alphabet as u64 + p as u64 - 1;
    let mut rest = rank;
    let mut out = Vec::with_capacity(p);
    let mut v = 0u64;
    for i in 0..p {
        loop {
            let count = binom_or_err(n - 1 - v, (p - 1 - i) as u64)?;
            if rest >= count {
                rest -= count;
                v += 1;
            } else {
                break;
            }
        }
        out.push((v - i as u64) as Code);
        v += 1;
    }
    Ok(out)
}

/// Advances a non-decreasing tuple to its lexicographic successor.
/// Returns `false` after the last tuple.
pub fn next_multiset(codes: &mut [Code], alphabet: u32) -> bool {
    let top = (alphabet - 1) as Code;
    let Some(i) = codes.iter().rposition(|&c| c < top) else {
        return false;
    };
    let next = codes[i] + 1;
    codes[i..].iter_mut().for_each(|c| *c = next);
    true
}

/// `code = clamp(round(x / scale) + zero_point, 0, 2^b - 1)`, rounding half
/// away from zero.
pub fn uniform_quantize<T: Real>(
    values: &[T],
    rows: usize,
    cols: usize,
    bitwidth: u8,
    scale: T,
    zero_point: i32,
) -> Result<CodeMatrix> {
    check_bitwidth(bitwidth)?;
    if !(scale.is_finite() && scale > T::zero()) {
        return Err(Error::InvalidScale);
    }
    if values.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a {rows}x{cols} matrix",
            values.len()
        )));
    }
    let max_code = (1i64 << bitwidth) - 1;
    let data = values
        .iter()
        .map(|&x| {
            let q = (x / scale).round();
            let q = if q.is_nan() {
                0
            } else {
                q.max(T::of(i64::MIN / 2)).min(T::of(i64::MAX / 2)).to_i64().unwrap()
            };
            (q + zero_point as i64).clamp(0, max_code) as Code
        })
        .collect();
    CodeMatrix::new(rows, cols, bitwidth, data)
}

pub fn dequantize<T: Real>(m: &CodeMatrix, scale: T, zero_point: i32) -> Result<Vec<T>> {
    if !(scale.is_finite() && scale > T::zero()) {
        return Err(Error::InvalidScale);
    }
    Ok(m.data().iter().map(|&c| T::of(c as i32 - zero_point) * scale).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pack_examples() {
        assert_eq!(pack(&[0, 0, 1], 1).unwrap().bits, 1);
        assert_eq!(pack(&[0, 0, 0], 1).unwrap().bits, 0);
        assert_eq!(pack(&[0, 0, 0], 5).unwrap().bits, 0);
        assert_eq!(pack(&[3, 0, 2], 3).unwrap().bits, 0b011_000_010);
        assert_eq!(pack(&[3, 0, 2], 3).unwrap().bits, 194);
    }

    #[test]
    fn unpack_examples() {
        let v = PackedVector {
            p: 3,
            bitwidth: 1,
            bits: 1,
        };
        assert_eq!(unpack(&v), vec![0, 0, 1]);
        let v = PackedVector {
            p: 4,
            bitwidth: 2,
            bits: 0,
        };
        assert_eq!(unpack(&v), vec![0; 4]);
        let v = PackedVector {
            p: 3,
            bitwidth: 3,
            bits: 194,
        };
        assert_eq!(unpack(&v), vec![3, 0, 2]);
    }

    #[test]
    fn pack_errors() {
        assert!(matches!(pack(&[2], 1), Err(Error::CodeOutOfRange { code: 2, .. })));
        assert!(matches!(pack(&[0; 9], 8), Err(Error::PackTooWide { p: 9, .. })));
        assert!(pack(&[0; 8], 8).is_ok());
        assert!(pack(&[0; 16], 4).is_ok());
    }

    #[test]
    fn pack_roundtrip_exhaustive_small() {
        for bitwidth in 1..=8u8 {
            for p in 1..=(16 / bitwidth as usize) {
                let total = 1u64 << (p * bitwidth as usize);
                let step = (total / 4096).max(1);
                let mut bits = 0;
                while bits < total {
                    let v = PackedVector { p, bitwidth, bits };
                    assert_eq!(pack(&unpack(&v), bitwidth).unwrap(), v);
                    bits += step;
                }
            }
        }
    }

    #[test]
    fn canonicalize_examples() {
        let c = canonicalize(&[3, 0, 2], 3).unwrap();
        assert_eq!(c.sorted_codes, vec![0, 2, 3]);
        assert_eq!(c.permutation(), vec![1, 2, 0]);

        let c = canonicalize(&[0, 0, 0], 3).unwrap();
        assert_eq!(c.sorted_codes, vec![0, 0, 0]);
        assert_eq!(c.perm_rank, 0);
        assert_eq!(c.multiset_rank, 0);

        let c = canonicalize(&[2, 2, 1], 2).unwrap();
        assert_eq!(c.sorted_codes, vec![1, 2, 2]);
        assert_eq!(c.permutation(), vec![2, 0, 1]);

        assert!(matches!(
            canonicalize(&[4], 2),
            Err(Error::CodeOutOfRange { code: 4, .. })
        ));
    }

    /// All permutations of 0..p in lexicographic order, by recursion.
    fn lex_perms(p: usize) -> Vec<Vec<usize>> {
        fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
            if prefix.len() == used.len() {
                out.push(prefix.clone());
                return;
            }
            for x in 0..used.len() {
                if !used[x] {
                    used[x] = true;
                    prefix.push(x);
                    go(prefix, used, out);
                    prefix.pop();
                    used[x] = false;
                }
            }
        }
        let mut out = Vec::new();
        go(&mut Vec::new(), &mut vec![false; p], &mut out);
        out
    }

    #[test]
    fn perm_rank_matches_enumeration() {
        assert_eq!(perm_rank(&[0, 1, 2]).unwrap(), 0);
        assert_eq!(perm_rank(&[2, 1, 0]).unwrap(), 5);
        for p in 0..=6 {
            for (i, perm) in lex_perms(p).iter().enumerate() {
                assert_eq!(perm_rank(perm).unwrap(), i as u64);
                assert_eq!(&perm_unrank(i as u64, p).unwrap(), perm);
            }
        }
    }

    #[test]
    fn perm_errors() {
        assert!(matches!(perm_rank(&[0, 0]), Err(Error::NotAPermutation(2))));
        assert!(matches!(perm_rank(&[0, 2]), Err(Error::NotAPermutation(2))));
        assert!(matches!(
            perm_unrank(6, 3),
            Err(Error::RankOutOfRange { rank: 6, limit: 6 })
        ));
    }

    fn lex_multisets(alphabet: u32, p: usize) -> Vec<Vec<Code>> {
        let mut all = Vec::new();
        let total = (alphabet as usize).pow(p as u32);
        for mut idx in 0..total {
            let mut t = vec![0 as Code; p];
            for slot in t.iter_mut().rev() {
                *slot = (idx % alphabet as usize) as Code;
                idx /= alphabet as usize;
            }
            if t.windows(2).all(|w| w[0] <= w[1]) {
                all.push(t);
            }
        }
        // base-S enumeration is already lexicographic
        all
    }

    #[test]
    fn multiset_rank_matches_enumeration() {
        assert_eq!(lex_multisets(8, 3).len(), 120);
        for alphabet in 1..=8u32 {
            for p in 0..=4 {
                let all = lex_multisets(alphabet, p);
                assert_eq!(multiset_count(alphabet, p).unwrap(), all.len() as u64);
                for (i, t) in all.iter().enumerate() {
                    assert_eq!(multiset_rank(t, alphabet).unwrap(), i as u64);
                    assert_eq!(&multiset_unrank(i as u64, p, alphabet).unwrap(), t);
                }
            }
        }
    }

    #[test]
    fn next_multiset_walks_lex_order() {
        let mut t = vec![0; 3];
        let mut seen = vec![t.clone()];
        while next_multiset(&mut t, 4) {
            seen.push(t.clone());
        }
        assert_eq!(seen, lex_multisets(4, 3));
    }

    #[test]
    fn multiset_errors() {
        assert!(matches!(multiset_rank(&[2, 1], 4), Err(Error::NotSorted)));
        assert!(matches!(
            multiset_unrank(120, 3, 8),
            Err(Error::RankOutOfRange { rank: 120, limit: 120 })
        ));
    }

    #[test]
    fn code_tables() {
        let t = CodeTable::symmetric_signed(3).unwrap();
        assert_eq!(t.values(), &[-4, -3, -2, -1, 0, 1, 2, 3]);
        assert_eq!(t.zero_code(), Some(4));
        assert!(CodeTable::new(2, vec![1, 2, 3], None).is_err());
        assert!(CodeTable::new(1, vec![1, 2], Some(0)).is_err());
        assert_eq!(CodeTable::from_values(1, vec![-1, 1]).unwrap().zero_code(), None);
        let json = serde_json::to_string(&t).unwrap();
        let back: CodeTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<CodeTable>(r#"{"bitwidth":1,"values":[3,4],"zero_code":1}"#).is_err());
    }

    #[test]
    fn quantize_examples() {
        let m = uniform_quantize(&[0.0f64, 0.75, 100.0, -3.0], 2, 2, 3, 0.25, 0).unwrap();
        assert_eq!(m.data(), &[0, 3, 7, 0]);
        // half away from zero
        let m = uniform_quantize(&[0.5f64, 1.5, -0.5], 1, 3, 3, 1.0, 2).unwrap();
        assert_eq!(m.data(), &[3, 4, 1]);
        assert!(matches!(
            uniform_quantize(&[0.0f32], 1, 1, 2, 0.0, 0),
            Err(Error::InvalidScale)
        ));
        let back = dequantize(&m, 1.0f64, 2).unwrap();
        assert_eq!(back, vec![1.0, 2.0, -1.0]);
    }

    proptest! {
        #[test]
        fn pack_roundtrip_random(bitwidth in 1u8..=8, seed in any::<u64>()) {
            let p = 64 / bitwidth as usize;
            let mask = (1u64 << bitwidth) - 1;
            let codes: Vec<Code> = (0..p).map(|i| ((seed.rotate_left(i as u32 * 7) ^ i as u64) & mask) as Code).collect();
            let v = pack(&codes, bitwidth).unwrap();
            prop_assert_eq!(unpack(&v), codes);
        }

        #[test]
        fn canonicalize_sorts_and_permutes(codes in proptest::collection::vec(0u8..16, 1..9)) {
            let c = canonicalize(&codes, 4).unwrap();
            prop_assert!(c.sorted_codes.windows(2).all(|w| w[0] <= w[1]));
            let pi = c.permutation();
            let applied: Vec<Code> = pi.iter().map(|&i| codes[i]).collect();
            prop_assert_eq!(&applied, &c.sorted_codes);
            prop_assert_eq!(c.multiset_rank, multiset_rank(&c.sorted_codes, 16).unwrap());
        }

        #[test]
        fn equal_activations_commute(
            acts in proptest::collection::vec(0u8..4, 2..8),
            weights in proptest::collection::vec(0u8..4, 8),
            i in 0usize..8, j in 0usize..8,
        ) {
            let p = acts.len();
            let (i, j) = (i % p, j % p);
            let mut acts = acts;
            acts[j] = acts[i];
            let wt = CodeTable::symmetric_signed(2).unwrap();
            let at = CodeTable::symmetric_signed(2).unwrap();
            let dot = |w: &[Code]| -> i64 {
                (0..p).map(|k| wt.decode(w[k]) as i64 * at.decode(acts[k]) as i64).sum()
            };
            let mut swapped = weights[..p].to_vec();
            swapped.swap(i, j);
            prop_assert_eq!(dot(&weights[..p]), dot(&swapped));
        }
    }
}
