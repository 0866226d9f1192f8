//! Quantized GEMM `Out = W * A` (`W: M x K` weight codes, `A: K x N`
//! activation codes) under several LUT strategies, each bit-exact to
//! [`gemm_reference`] and each counting the events the time model charges.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost_model::make_plan;
use crate::error::{Error, Result};
use crate::lut::{
    build_canonical_lut, build_packed_lut, build_reordering_lut, CanonicalLut, Layout, PackedLut, ReorderingLut,
};
use crate::pim_sim::{check_fit, modeled_time, DeviceConfig};
use crate::quantizer::{
    canonicalize, check_pack_width, pack_bits, CanonVector, Code, CodeMatrix, CodeTable, CodeTables,
};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Plain integer multiply-accumulate, no LUT.
    NaiveMac,
    /// Operation-packed LUT resident in the DRAM bank.
    PackedDram,
    /// Operation-packed LUT resident in the local buffer.
    PackedBuffer,
    /// Canonical + reordering LUTs fully resident in the local buffer.
    CanonicalBuffer,
    /// Canonical + reordering LUTs in the bank, column slices streamed.
    SliceStream,
    /// Resolved to `CanonicalBuffer` or `SliceStream` by the planner.
    Auto,
}

impl Strategy {
    pub const CONCRETE: [Strategy; 5] = [
        Strategy::NaiveMac,
        Strategy::PackedDram,
        Strategy::PackedBuffer,
        Strategy::CanonicalBuffer,
        Strategy::SliceStream,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::NaiveMac => "naive-mac",
            Strategy::PackedDram => "packed-dram",
            Strategy::PackedBuffer => "packed-buffer",
            Strategy::CanonicalBuffer => "canonical-buffer",
            Strategy::SliceStream => "slice-stream",
            Strategy::Auto => "auto",
        }
    }

    pub fn uses_packed_lut(self) -> bool {
        matches!(self, Strategy::PackedDram | Strategy::PackedBuffer)
    }

    pub fn uses_canonical_lut(self) -> bool {
        matches!(self, Strategy::CanonicalBuffer | Strategy::SliceStream)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Strategy::CONCRETE
            .iter()
            .chain(std::iter::once(&Strategy::Auto))
            .find(|st| st.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown strategy '{s}'"))
    }
}

/// Dense row-major `i32` matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> i32 {
        self.data[r * self.cols + c]
    }

    /// CRC-32 of the little-endian entries.
    pub fn checksum(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for v in &self.data {
            h.update(&v.to_le_bytes());
        }
        h.finalize()
    }

    /// Writes `block` with its top-left corner at `(row0, col0)`.
    pub fn paste(&mut self, row0: usize, col0: usize, block: &Matrix) {
        for r in 0..block.rows {
            let dst = (row0 + r) * self.cols + col0;
            self.data[dst..dst + block.cols].copy_from_slice(&block.data[r * block.cols..(r + 1) * block.cols]);
        }
    }
}

/// Event counters for one execution (one bank, or a sum over banks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct ExecReport<T> {
    pub strategy: Strategy,
    pub p: usize,
    pub k_slices: usize,
    /// (canonical, reordering) entry pairs streamed bank -> buffer.
    pub dram_entry_loads: u64,
    /// Buffered lookups; for `CanonicalBuffer`/`SliceStream` each is a
    /// reordering lookup + canonical lookup + accumulate.
    pub local_lookups: u64,
    /// Scalar multiply-adds (`NaiveMac`).
    pub mac_ops: u64,
    /// Lookups served directly from a bank-resident LUT (`PackedDram`).
    pub dram_lut_lookups: u64,
    pub passes: u64,
    /// Output values written back to the bank; not part of the time model.
    pub output_writebacks: u64,
    pub modeled_time_s: T,
}

impl<T: Real> ExecReport<T> {
    pub fn new(strategy: Strategy, p: usize, k_slices: usize) -> Self {
        Self {
            strategy,
            p,
            k_slices,
            dram_entry_loads: 0,
            local_lookups: 0,
            mac_ops: 0,
            dram_lut_lookups: 0,
            passes: 0,
            output_writebacks: 0,
            modeled_time_s: T::zero(),
        }
    }

    /// Adds counters and modeled time; order-independent.
    pub fn absorb(&mut self, other: &ExecReport<T>) {
        self.dram_entry_loads += other.dram_entry_loads;
        self.local_lookups += other.local_lookups;
        self.mac_ops += other.mac_ops;
        self.dram_lut_lookups += other.dram_lut_lookups;
        self.passes += other.passes;
        self.output_writebacks += other.output_writebacks;
        self.modeled_time_s = self.modeled_time_s + other.modeled_time_s;
    }
}

/// Canonicalized activation vectors, `ceil(K/p)` groups by `N` columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationPlan {
    pub p: usize,
    pub groups: usize,
    pub cols: usize,
    /// Zero-code slots appended to each column to reach a multiple of `p`.
    pub pad_count: usize,
    /// Row-major by group: `grid[g * cols + n]`.
    pub grid: Vec<CanonVector>,
}

impl ActivationPlan {
    #[inline]
    pub fn get(&self, group: usize, col: usize) -> &CanonVector {
        &self.grid[group * self.cols + col]
    }
}

fn pad_code(act_table: &CodeTable, k: usize, p: usize) -> Result<Code> {
    if k.is_multiple_of(p) {
        return Ok(act_table.zero_code().unwrap_or(0) as Code);
    }
    act_table
        .zero_code()
        .map(|z| z as Code)
        .ok_or(Error::NoZeroCode { k, p })
}

/// Activation codes of group `g`, column `n`, padded with `pad`.
fn act_group(a: &CodeMatrix, g: usize, n: usize, p: usize, pad: Code, out: &mut [Code]) {
    for (i, slot) in out.iter_mut().enumerate().take(p) {
        let k = g * p + i;
        *slot = if k < a.rows() { a.get(k, n) } else { pad };
    }
}

pub fn build_activation_plan(a: &CodeMatrix, p: usize, act_table: &CodeTable) -> Result<ActivationPlan> {
    check_pack_width(p, act_table.bitwidth())?;
    if a.bitwidth() != act_table.bitwidth() {
        return Err(Error::DimensionMismatch(format!(
            "activation codes are {}-bit, table is {}-bit",
            a.bitwidth(),
            act_table.bitwidth()
        )));
    }
    let pad = pad_code(act_table, a.rows(), p)?;
    let groups = a.rows().div_ceil(p);
    let mut grid = Vec::with_capacity(groups * a.cols());
    let mut codes = vec![0 as Code; p];
    for g in 0..groups {
        for n in 0..a.cols() {
            act_group(a, g, n, p, pad, &mut codes);
            grid.push(canonicalize(&codes, act_table.bitwidth())?);
        }
    }
    Ok(ActivationPlan {
        p,
        groups,
        cols: a.cols(),
        pad_count: groups * p - a.rows(),
        grid,
    })
}

fn check_operands(w: &CodeMatrix, a: &CodeMatrix, tables: &CodeTables) -> Result<()> {
    if w.cols() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "W is {}x{}, A is {}x{}",
            w.rows(),
            w.cols(),
            a.rows(),
            a.cols()
        )));
    }
    if w.bitwidth() != tables.weight.bitwidth() || a.bitwidth() != tables.activation.bitwidth() {
        return Err(Error::DimensionMismatch(
            "matrix bitwidths do not match their code tables".into(),
        ));
    }
    Ok(())
}

fn finish(acc: Vec<i64>, rows: usize, cols: usize) -> Result<Matrix> {
    let data = acc
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            i32::try_from(v).map_err(|_| Error::AccumulatorOverflow {
                row: i / cols.max(1),
                col: i % cols.max(1),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Matrix { rows, cols, data })
}

/// Direct integer GEMM on decoded values; the correctness oracle.
pub fn gemm_reference(w: &CodeMatrix, a: &CodeMatrix, tables: &CodeTables) -> Result<Matrix> {
    check_operands(w, a, tables)?;
    let (m, k, n) = (w.rows(), w.cols(), a.cols());
    let mut acc = vec![0i64; m * n];
    for i in 0..m {
        for kk in 0..k {
            let wv = tables.weight.decode(w.get(i, kk)) as i64;
            for j in 0..n {
                acc[i * n + j] += wv * tables.activation.decode(a.get(kk, j)) as i64;
            }
        }
    }
    finish(acc, m, n)
}

/// Packing degree, slice count and LUT entry width for one execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecParams {
    pub p: usize,
    /// Activation vectors whose slices are co-resident (`SliceStream`).
    pub k: usize,
    pub b_o: u8,
}

impl Default for ExecParams {
    fn default() -> Self {
        Self {
            p: 1,
            k: 1,
            b_o: crate::lut::DEFAULT_ENTRY_BYTES,
        }
    }
}

/// Tables one strategy needs, built once and shared read-only across banks.
#[derive(Debug, Clone)]
pub struct LutSet {
    strategy: Strategy,
    p: usize,
    packed: Option<PackedLut>,
    canonical: Option<CanonicalLut>,
    reordering: Option<ReorderingLut>,
}

impl LutSet {
    /// `strategy` must be concrete. Slice streaming keeps column-major copies
    /// so a slice is a contiguous range.
    pub fn build(strategy: Strategy, tables: &CodeTables, p: usize, b_o: u8) -> Result<Self> {
        let mut set = Self {
            strategy,
            p,
            packed: None,
            canonical: None,
            reordering: None,
        };
        match strategy {
            Strategy::Auto => {
                return Err(Error::InvalidConfig(
                    "Auto must be resolved before building LUTs".into(),
                ))
            }
            Strategy::NaiveMac => {}
            Strategy::PackedDram | Strategy::PackedBuffer => {
                set.packed = Some(build_packed_lut(&tables.weight, &tables.activation, p, b_o)?);
            }
            Strategy::CanonicalBuffer | Strategy::SliceStream => {
                let layout = if strategy == Strategy::SliceStream {
                    Layout::ColumnMajor
                } else {
                    Layout::RowMajor
                };
                set.canonical =
                    Some(build_canonical_lut(&tables.weight, &tables.activation, p, b_o)?.with_layout(layout));
                set.reordering = Some(build_reordering_lut(tables.weight.bitwidth(), p)?.with_layout(layout));
            }
        }
        Ok(set)
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn packed(&self) -> Option<&PackedLut> {
        self.packed.as_ref()
    }

    pub fn canonical(&self) -> Option<&CanonicalLut> {
        self.canonical.as_ref()
    }

    pub fn reordering(&self) -> Option<&ReorderingLut> {
        self.reordering.as_ref()
    }
}

/// Packed weight groups, `M x ceil(K/p)`, tail padded with code 0.
fn pack_weights(w: &CodeMatrix, p: usize) -> Vec<u64> {
    let groups = w.cols().div_ceil(p);
    let mut out = Vec::with_capacity(w.rows() * groups);
    let mut codes = vec![0 as Code; p];
    for r in 0..w.rows() {
        let row = w.row(r);
        for g in 0..groups {
            for (i, slot) in codes.iter_mut().enumerate() {
                *slot = row.get(g * p + i).copied().unwrap_or(0);
            }
            out.push(pack_bits(&codes, w.bitwidth()));
        }
    }
    out
}

/// Runs one strategy, checking LUT placement against `device` first.
/// `Auto` is resolved through the planner, which also picks `p`.
pub fn execute<T: Real>(
    strategy: Strategy,
    w: &CodeMatrix,
    a: &CodeMatrix,
    tables: &CodeTables,
    device: &DeviceConfig<T>,
    params: ExecParams,
) -> Result<(Matrix, ExecReport<T>)> {
    check_operands(w, a, tables)?;
    let (b_w, b_a) = (tables.weight.bitwidth(), tables.activation.bitwidth());
    let (strategy, p) = if strategy == Strategy::Auto {
        let plan = make_plan(w.rows(), w.cols(), a.cols(), b_w, b_a, params.b_o, device)?;
        (plan.strategy, plan.chosen_p())
    } else {
        (strategy, params.p)
    };
    check_fit(strategy, b_w, b_a, params.b_o, p, params.k, device)?;
    let luts = LutSet::build(strategy, tables, p, params.b_o)?;
    execute_with(&luts, w, a, tables, device, params.k)
}

/// Runs with prebuilt LUTs; placement is assumed to have been checked.
pub fn execute_with<T: Real>(
    luts: &LutSet,
    w: &CodeMatrix,
    a: &CodeMatrix,
    tables: &CodeTables,
    device: &DeviceConfig<T>,
    k_slices: usize,
) -> Result<(Matrix, ExecReport<T>)> {
    check_operands(w, a, tables)?;
    let (m, k, n) = (w.rows(), w.cols(), a.cols());
    let p = luts.p;
    let mut report = ExecReport::new(luts.strategy, p, k_slices);
    let mut acc = vec![0i64; m * n];

    match luts.strategy {
        Strategy::Auto => return Err(Error::InvalidConfig("Auto must be resolved before execution".into())),
        Strategy::NaiveMac => {
            for i in 0..m {
                for kk in 0..k {
                    let wv = tables.weight.decode(w.get(i, kk)) as i64;
                    for j in 0..n {
                        acc[i * n + j] += wv * tables.activation.decode(a.get(kk, j)) as i64;
                    }
                }
            }
            report.mac_ops = (m * k * n) as u64;
            report.passes = u64::from(m * k * n > 0);
        }
        Strategy::PackedDram | Strategy::PackedBuffer => {
            let lut = luts.packed.as_ref().expect("packed LUT built");
            let groups = k.div_ceil(p);
            let pad = pad_code(&tables.activation, k, p)?;
            let pw = pack_weights(w, p);
            let mut codes = vec![0 as Code; p];
            let mut pa = Vec::with_capacity(groups * n);
            for g in 0..groups {
                for j in 0..n {
                    act_group(a, g, j, p, pad, &mut codes);
                    pa.push(pack_bits(&codes, tables.activation.bitwidth()) as usize);
                }
            }
            for i in 0..m {
                for g in 0..groups {
                    let row = pw[i * groups + g] as usize;
                    for j in 0..n {
                        acc[i * n + j] += lut.get(row, pa[g * n + j]) as i64;
                    }
                }
            }
            let lookups = (m * groups * n) as u64;
            if luts.strategy == Strategy::PackedDram {
                report.dram_lut_lookups = lookups;
            } else {
                report.local_lookups = lookups;
            }
            report.passes = u64::from(lookups > 0);
        }
        Strategy::CanonicalBuffer => {
            let canon = luts.canonical.as_ref().expect("canonical LUT built");
            let reorder = luts.reordering.as_ref().expect("reordering LUT built");
            let plan = build_activation_plan(a, p, &tables.activation)?;
            let groups = plan.groups;
            let pw = pack_weights(w, p);
            for i in 0..m {
                for g in 0..groups {
                    let row = pw[i * groups + g] as usize;
                    for j in 0..n {
                        let cv = plan.get(g, j);
                        let canon_row = reorder.get(row, cv.perm_rank as usize) as usize;
                        acc[i * n + j] += canon.get(canon_row, cv.multiset_rank as usize) as i64;
                    }
                }
            }
            report.local_lookups = (m * groups * n) as u64;
            report.passes = u64::from(report.local_lookups > 0);
        }
        Strategy::SliceStream => {
            let canon = luts.canonical.as_ref().expect("canonical LUT built");
            let reorder = luts.reordering.as_ref().expect("reordering LUT built");
            if k_slices == 0 {
                return Err(Error::InfeasibleP("slice streaming needs k >= 1".into()));
            }
            let plan = build_activation_plan(a, p, &tables.activation)?;
            let groups = plan.groups;
            let pw = pack_weights(w, p);
            let slice_len = canon.rows() as u64;
            let mut canon_slices: Vec<Vec<i32>> = Vec::with_capacity(k_slices);
            let mut reorder_slices: Vec<Vec<u32>> = Vec::with_capacity(k_slices);
            let vectors: Vec<(usize, usize)> = (0..groups).flat_map(|g| (0..n).map(move |j| (g, j))).collect();
            for chunk in vectors.chunks(k_slices) {
                // stream k slices of both tables into the buffer
                canon_slices.clear();
                reorder_slices.clear();
                for &(g, j) in chunk {
                    let cv = plan.get(g, j);
                    canon_slices.push(canon.table().column(cv.multiset_rank as usize).into_owned());
                    reorder_slices.push(reorder.table().column(cv.perm_rank as usize).into_owned());
                    report.dram_entry_loads += slice_len;
                }
                // weights stream past the stationary slices
                for i in 0..m {
                    for (s, &(g, j)) in chunk.iter().enumerate() {
                        let row = pw[i * groups + g] as usize;
                        let canon_row = reorder_slices[s][row] as usize;
                        acc[i * n + j] += canon_slices[s][canon_row] as i64;
                    }
                }
                report.local_lookups += (m * chunk.len()) as u64;
                report.passes += 1;
            }
        }
    }
    report.output_writebacks = (m * n) as u64;
    report.modeled_time_s = modeled_time(&report, device);
    Ok((finish(acc, m, n)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pim_sim::DeviceConfig;

    fn fig2() -> (CodeMatrix, CodeMatrix, CodeTables) {
        let w = CodeMatrix::new(1, 3, 1, vec![0, 0, 1]).unwrap();
        let a = CodeMatrix::new(3, 1, 3, vec![3, 0, 2]).unwrap();
        (w, a, CodeTables::unsigned_identity(1, 3).unwrap())
    }

    #[test]
    fn reference_worked_example() {
        let (w, a, t) = fig2();
        assert_eq!(gemm_reference(&w, &a, &t).unwrap().data, vec![2]);
        let zeros = CodeMatrix::filled(3, 4, 3, 0).unwrap();
        assert!(gemm_reference(&w, &zeros, &t).unwrap().data.iter().all(|&v| v == 0));
        let bad = CodeMatrix::filled(2, 1, 3, 0).unwrap();
        assert!(matches!(gemm_reference(&w, &bad, &t), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn all_strategies_on_worked_example() {
        let (w, a, t) = fig2();
        let dev = DeviceConfig::<f64>::default();
        for s in Strategy::CONCRETE.into_iter().chain([Strategy::Auto]) {
            let params = ExecParams { p: 3, k: 1, b_o: 2 };
            let (out, rep) = execute(s, &w, &a, &t, &dev, params).unwrap();
            assert_eq!(out.data, vec![2], "{s}");
            assert_ne!(rep.strategy, Strategy::Auto);
        }
    }

    #[test]
    fn slice_stream_counters() {
        let w = CodeMatrix::from_fn(4, 3, 1, |r, c| ((r + c) % 2) as Code).unwrap();
        let a = CodeMatrix::new(3, 1, 3, vec![5, 1, 7]).unwrap();
        let t = CodeTables::unsigned_identity(1, 3).unwrap();
        let dev = DeviceConfig::<f64>::default();
        let (out, rep) = execute(
            Strategy::SliceStream,
            &w,
            &a,
            &t,
            &dev,
            ExecParams { p: 3, k: 1, b_o: 2 },
        )
        .unwrap();
        assert_eq!(out, gemm_reference(&w, &a, &t).unwrap());
        assert_eq!(rep.dram_entry_loads, 8);
        assert_eq!(rep.local_lookups, 4);
        assert_eq!(rep.passes, 1);
    }

    #[test]
    fn activation_plan_shapes() {
        let at = CodeTable::unsigned_identity(2).unwrap();
        let a = CodeMatrix::from_fn(3, 2, 2, |r, c| ((r * 3 + c) % 4) as Code).unwrap();
        let plan = build_activation_plan(&a, 3, &at).unwrap();
        assert_eq!((plan.groups, plan.cols, plan.pad_count), (1, 2, 0));
        let a4 = CodeMatrix::from_fn(4, 2, 2, |r, c| ((r + c) % 4) as Code).unwrap();
        let plan = build_activation_plan(&a4, 3, &at).unwrap();
        assert_eq!((plan.groups, plan.pad_count), (2, 2));
        let same = CodeMatrix::filled(3, 1, 2, 2).unwrap();
        assert_eq!(build_activation_plan(&same, 3, &at).unwrap().get(0, 0).perm_rank, 0);
    }

    #[test]
    fn padding_needs_zero_code() {
        let at = CodeTable::from_values(1, vec![-1, 1]).unwrap();
        let a = CodeMatrix::filled(4, 1, 1, 1).unwrap();
        assert!(matches!(
            build_activation_plan(&a, 3, &at),
            Err(Error::NoZeroCode { k: 4, p: 3 })
        ));
        assert!(build_activation_plan(&a, 2, &at).is_ok());
    }

    #[test]
    fn padded_k_matches_reference() {
        let t = CodeTables::symmetric_signed(2, 3).unwrap();
        let w = CodeMatrix::from_fn(5, 5, 2, |r, c| ((r * 7 + c * 3) % 4) as Code).unwrap();
        let a = CodeMatrix::from_fn(5, 3, 3, |r, c| ((r * 5 + c * 11) % 8) as Code).unwrap();
        let dev = DeviceConfig::<f64>::default();
        let want = gemm_reference(&w, &a, &t).unwrap();
        for s in Strategy::CONCRETE {
            let (out, _) = execute(s, &w, &a, &t, &dev, ExecParams { p: 2, k: 2, b_o: 2 }).unwrap();
            assert_eq!(out, want, "{s}");
        }
    }

    #[test]
    fn accumulator_overflow_is_an_error() {
        let t = CodeTables::new(
            CodeTable::new(1, vec![0, i32::MAX], Some(0)).unwrap(),
            CodeTable::new(1, vec![0, 1], Some(0)).unwrap(),
        );
        let w = CodeMatrix::filled(1, 2, 1, 1).unwrap();
        let a = CodeMatrix::filled(2, 1, 1, 1).unwrap();
        assert!(matches!(
            gemm_reference(&w, &a, &t),
            Err(Error::AccumulatorOverflow { row: 0, col: 0 })
        ));
    }

    #[test]
    fn strategy_names_roundtrip() {
        for s in Strategy::CONCRETE.into_iter().chain([Strategy::Auto]) {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!("bogus".parse::<Strategy>().is_err());
    }
}
