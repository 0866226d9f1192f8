//! Exhaustive small-space checks run by `pimlut selftest`.
//!
//! Each check recomputes its expectation by brute force (enumeration,
//! direct dot products) instead of going through the ranking or LUT code it
//! is checking.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::Serialize;

use crate::engine::{execute, gemm_reference, ExecParams, Strategy};
use crate::lut::{
    build_canonical_lut, build_packed_lut, build_reordering_lut, compute_sizes, CanonicalLut, ReorderingLut,
};
use crate::pim_sim::{check_fit, DeviceConfig};
use crate::quantizer::{
    canonicalize, multiset_rank, multiset_unrank, perm_rank, perm_unrank, Code, CodeMatrix, CodeTable, CodeTables,
};

/// Deliberate corruption used to demonstrate that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Adds 1 to one canonical LUT entry.
    CanonicalEntry,
    /// Points one reordering entry at the wrong row.
    ReorderingEntry,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub millis: u128,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CheckResult {
        name,
        passed,
        detail,
        millis: start.elapsed().as_millis(),
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// `C(n, k)` via factorials in u128, independent of the quantizer's binomial.
fn choose(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let fact = |x: u32| (1..=x as u128).product::<u128>();
    fact(n) / (fact(k) * fact(n - k))
}

fn digits(mut v: usize, base: usize, len: usize) -> Vec<Code> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = (v % base) as Code;
        v /= base;
    }
    out
}

fn perm_roundtrip() -> Result<String, String> {
    let mut total = 0;
    for p in 0..=6usize {
        // lexicographic enumeration: all base-p digit strings that are bijections
        let mut expected_rank = 0u64;
        for idx in 0..p.pow(p as u32).max(1) {
            let cand: Vec<usize> = digits(idx, p.max(1), p).iter().map(|&d| d as usize).collect();
            let distinct: BTreeSet<_> = cand.iter().collect();
            if distinct.len() != p {
                continue;
            }
            let r = perm_rank(&cand).map_err(|e| e.to_string())?;
            ensure(r == expected_rank, || {
                format!("rank({cand:?}) = {r}, expected {expected_rank}")
            })?;
            let back = perm_unrank(r, p).map_err(|e| e.to_string())?;
            ensure(back == cand, || format!("unrank({r}, {p}) = {back:?}"))?;
            expected_rank += 1;
            total += 1;
        }
    }
    Ok(format!("{total} permutations, p <= 6"))
}

fn multiset_roundtrip() -> Result<String, String> {
    let mut total = 0;
    for s in 1..=8usize {
        for p in 0..=4usize {
            let mut expected_rank = 0u64;
            for idx in 0..s.pow(p as u32) {
                let t = digits(idx, s, p);
                if t.windows(2).any(|w| w[0] > w[1]) {
                    continue;
                }
                let r = multiset_rank(&t, s as u32).map_err(|e| e.to_string())?;
                ensure(r == expected_rank, || {
                    format!("rank({t:?}, S={s}) = {r}, expected {expected_rank}")
                })?;
                let back = multiset_unrank(r, p, s as u32).map_err(|e| e.to_string())?;
                ensure(back == t, || format!("unrank({r}) = {back:?}"))?;
                expected_rank += 1;
                total += 1;
            }
            ensure(expected_rank as u128 == choose((s + p - 1) as u32, p as u32), || {
                format!("S={s} p={p}: {expected_rank} tuples")
            })?;
        }
    }
    Ok(format!("{total} sorted tuples, S <= 8, p <= 4"))
}

/// Number of distinct packed-LUT columns once columns that differ only by a
/// joint permutation of weights and activations are identified.
pub fn dedup_class_count(b_a: u8, p: usize) -> Result<usize, String> {
    let wt = CodeTable::unsigned_identity(1).map_err(|e| e.to_string())?;
    let at = CodeTable::unsigned_identity(b_a).map_err(|e| e.to_string())?;
    let packed = build_packed_lut(&wt, &at, p, 4).map_err(|e| e.to_string())?;
    let mut by_sorted: BTreeMap<Vec<Code>, Vec<i32>> = BTreeMap::new();
    let mut classes: BTreeSet<Vec<i32>> = BTreeSet::new();
    for c in 0..packed.cols() {
        let acts = digits(c, 1 << b_a, p);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by_key(|&i| acts[i]);
        let sorted: Vec<Code> = order.iter().map(|&i| acts[i]).collect();
        // column re-indexed by the weights in sorted-activation order
        let mut induced = vec![0i32; packed.rows()];
        for (w_sorted, slot) in induced.iter_mut().enumerate() {
            let ws = digits(w_sorted, 2, p);
            let mut w = vec![0 as Code; p];
            for (j, &i) in order.iter().enumerate() {
                w[i] = ws[j];
            }
            let row = w.iter().fold(0usize, |acc, &b| acc * 2 + b as usize);
            *slot = packed.get(row, c);
        }
        if let Some(prev) = by_sorted.get(&sorted) {
            if *prev != induced {
                return Err(format!("columns with activations sorted to {sorted:?} disagree"));
            }
        } else {
            by_sorted.insert(sorted, induced.clone());
        }
        classes.insert(induced);
    }
    Ok(classes.len())
}

fn canonical_dedup() -> Result<String, String> {
    let mut checked = Vec::new();
    for b_a in 1..=3u8 {
        for p in 1..=4usize {
            let classes = dedup_class_count(b_a, p)?;
            let want = choose((1u32 << b_a) + p as u32 - 1, p as u32);
            let built = build_canonical_lut(
                &CodeTable::unsigned_identity(1).unwrap(),
                &CodeTable::unsigned_identity(b_a).unwrap(),
                p,
                2,
            )
            .map_err(|e| e.to_string())?;
            ensure(classes as u128 == want && built.cols() as u128 == want, || {
                format!(
                    "b_a={b_a} p={p}: {classes} classes, {} canonical columns, expected {want}",
                    built.cols()
                )
            })?;
            checked.push(format!("({b_a},{p})={want}"));
        }
    }
    Ok(checked.join(" "))
}

fn apply_fault(fault: Option<Fault>, canon: &mut CanonicalLut, reorder: &mut ReorderingLut) {
    match fault {
        Some(Fault::CanonicalEntry) => canon.corrupt_entry(),
        Some(Fault::ReorderingEntry) => reorder.corrupt_entry(),
        None => {}
    }
}

fn lookup_equivalence(fault: Option<Fault>) -> Result<String, String> {
    let mut cases = 0u64;
    for (wt, at) in [
        (
            CodeTable::unsigned_identity(1).unwrap(),
            CodeTable::unsigned_identity(2).unwrap(),
        ),
        (
            CodeTable::from_values(1, vec![-1, 1]).unwrap(),
            CodeTable::symmetric_signed(2).unwrap(),
        ),
    ] {
        for p in 1..=3usize {
            let packed = build_packed_lut(&wt, &at, p, 2).map_err(|e| e.to_string())?;
            let mut canon = build_canonical_lut(&wt, &at, p, 2).map_err(|e| e.to_string())?;
            let mut reorder = build_reordering_lut(1, p).map_err(|e| e.to_string())?;
            apply_fault(fault, &mut canon, &mut reorder);
            for w in 0..packed.rows() {
                let wcodes = digits(w, 2, p);
                for a in 0..packed.cols() {
                    let acodes = digits(a, 4, p);
                    let direct: i32 = (0..p).map(|i| wt.decode(wcodes[i]) * at.decode(acodes[i])).sum();
                    ensure(packed.get(w, a) == direct, || format!("packed[{w}][{a}] != {direct}"))?;
                    let cv = canonicalize(&acodes, 2).map_err(|e| e.to_string())?;
                    let row = reorder.get(w, cv.perm_rank as usize) as usize;
                    let via = canon.get(row, cv.multiset_rank as usize);
                    ensure(via == direct, || {
                        format!("p={p} w={wcodes:?} a={acodes:?}: reordered lookup {via}, direct {direct}")
                    })?;
                    cases += 1;
                }
            }
        }
    }
    Ok(format!("{cases} (w, a) pairs, b_w=1 b_a=2 p <= 3"))
}

/// SplitMix64; keeps the self-test free of RNG dependencies.
struct Mix(u64);

impl Mix {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }
}

fn strategy_equivalence() -> Result<String, String> {
    let dev = DeviceConfig::<f64>::default();
    let mut rng = Mix(0x5eed);
    let mut runs = 0;
    for case in 0..24 {
        let b_w = [1u8, 2, 4][case % 3];
        let b_a = [1u8, 2, 3, 4][case % 4];
        let tables = if case % 2 == 0 {
            CodeTables::unsigned_identity(b_w, b_a)
        } else {
            CodeTables::symmetric_signed(b_w, b_a)
        }
        .map_err(|e| e.to_string())?;
        let (m, k, n) = (
            1 + rng.below(12) as usize,
            1 + rng.below(12) as usize,
            1 + rng.below(6) as usize,
        );
        let w = CodeMatrix::from_fn(m, k, b_w, |_, _| rng.below(1 << b_w) as Code).map_err(|e| e.to_string())?;
        let a = CodeMatrix::from_fn(k, n, b_a, |_, _| rng.below(1 << b_a) as Code).map_err(|e| e.to_string())?;
        let want = gemm_reference(&w, &a, &tables).map_err(|e| e.to_string())?;
        for s in Strategy::CONCRETE {
            for p in 1..=3usize {
                let params = ExecParams { p, k: 2, b_o: 2 };
                let sz = compute_sizes(b_w, b_a, p, 2);
                if sz.rows * sz.packed_cols > 1 << 16 || check_fit(s, b_w, b_a, 2, p, 2, &dev).is_err() {
                    continue;
                }
                let (out, _) = execute(s, &w, &a, &tables, &dev, params).map_err(|e| e.to_string())?;
                ensure(out == want, || {
                    format!("{s} p={p} differs from reference on {m}x{k}x{n}")
                })?;
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} strategy runs bit-exact"))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SelftestOptions {
    pub fault: Option<Fault>,
}

pub fn run(opts: SelftestOptions) -> Vec<CheckResult> {
    vec![
        check("perm_rank_roundtrip", perm_roundtrip),
        check("multiset_rank_roundtrip", multiset_roundtrip),
        check("canonical_dedup", canonical_dedup),
        check("lookup_equivalence", || lookup_equivalence(opts.fault)),
        check("strategy_equivalence", strategy_equivalence),
    ]
}
