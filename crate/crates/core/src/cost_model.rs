//! First-order time model for LUT access, and the planner built on it.
//!
//! Only LUT traffic is modeled: streaming slices from the bank into the
//! buffer (`L_D` per canonical + reordering entry pair) and buffered lookups
//! (`L_local` per reordering lookup + canonical lookup + accumulate).
//! Weight, activation and output movement is deliberately left out.
//!
//! Wherever the model divides `K` by `p`, `ceil(K / p)` is used so that
//! predictions match the number of activation vectors actually processed.

use serde::{Deserialize, Serialize};

use crate::engine::Strategy;
use crate::error::{Error, Result, Tier};
use crate::pim_sim::{max_feasible_p, DeviceConfig};
use crate::scalar::Real;

pub const DEFAULT_L_D_SECONDS: f64 = 1.36e-9;
pub const DEFAULT_L_LOCAL_SECONDS: f64 = 3.27e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"), deny_unknown_fields)]
pub struct LatencyConstants<T> {
    /// Seconds per (canonical entry + reordering entry) streamed bank -> buffer.
    #[serde(rename = "l_d_seconds")]
    pub l_d: T,
    /// Seconds per (reordering lookup + canonical lookup + accumulate).
    #[serde(rename = "l_local_seconds")]
    pub l_local: T,
}

impl<T: Real> Default for LatencyConstants<T> {
    fn default() -> Self {
        Self {
            l_d: T::of(DEFAULT_L_D_SECONDS),
            l_local: T::of(DEFAULT_L_LOCAL_SECONDS),
        }
    }
}

impl<T: Real> LatencyConstants<T> {
    pub fn new(l_d: T, l_local: T) -> Result<Self> {
        let c = Self { l_d, l_local };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: T| v.is_finite() && v > T::zero();
        if ok(self.l_d) && ok(self.l_local) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "latency constants must be finite and positive".into(),
            ))
        }
    }
}

fn groups(k: usize, p: usize) -> usize {
    k.div_ceil(p)
}

/// `2^(b_w p) * ceil(K/p) * N * L_D + M * ceil(K/p) * N * L_local`.
pub fn predict_slice_time<T: Real>(p: usize, m: usize, k: usize, n: usize, b_w: u8, consts: &LatencyConstants<T>) -> T {
    let vectors = T::of(groups(k, p)) * T::of(n);
    let slice = T::of(2.0).powi((b_w as usize * p) as i32);
    slice * vectors * consts.l_d + T::of(m) * vectors * consts.l_local
}

/// Per-activation-vector cost of streaming at degree `p`:
/// `(2^(b_w p) * L_D + M * L_local) / p`.
pub fn slice_objective<T: Real>(p: usize, m: usize, b_w: u8, consts: &LatencyConstants<T>) -> T {
    let slice = T::of(2.0).powi((b_w as usize * p) as i32);
    (slice * consts.l_d + T::of(m) * consts.l_local) / T::of(p)
}

/// Argmin of [`slice_objective`] over `lo..=hi`; ties go to the smaller `p`.
pub fn select_p_star_in<T: Real>(m: usize, b_w: u8, lo: usize, hi: usize, consts: &LatencyConstants<T>) -> usize {
    let lo = lo.max(1);
    let mut best = lo;
    let mut best_cost = slice_objective(lo, m, b_w, consts);
    for p in lo + 1..=hi {
        let cost = slice_objective(p, m, b_w, consts);
        if cost < best_cost {
            best = p;
            best_cost = cost;
        }
    }
    best
}

/// Optimal packing degree for slice streaming over `1..=p_dram`.
pub fn select_p_star<T: Real>(m: usize, b_w: u8, p_dram: usize, consts: &LatencyConstants<T>) -> usize {
    select_p_star_in(m, b_w, 1, p_dram, consts)
}

/// `M * ceil(K / p_local) * N * L_local`.
pub fn predict_local_time<T: Real>(p_local: usize, m: usize, k: usize, n: usize, consts: &LatencyConstants<T>) -> T {
    T::of(m) * T::of(groups(k, p_local)) * T::of(n) * consts.l_local
}

/// Largest `M` for which the buffer-resident canonical LUT still wins:
/// `2^(b_w p*) * (L_D / L_local) * p_local / (p* - p_local)`.
/// `None` means unbounded (`p* <= p_local`).
pub fn decision_threshold<T: Real>(b_w: u8, p_star: usize, p_local: usize, consts: &LatencyConstants<T>) -> Option<T> {
    if p_star <= p_local {
        return None;
    }
    let slice = T::of(2.0).powi((b_w as usize * p_star) as i32);
    Some(slice * (consts.l_d / consts.l_local) * T::of(p_local) / T::of(p_star - p_local))
}

pub fn placement_decision<T: Real>(
    m: usize,
    b_w: u8,
    p_star: usize,
    p_local: usize,
    consts: &LatencyConstants<T>,
) -> Strategy {
    match decision_threshold(b_w, p_star, p_local, consts) {
        Some(t) if T::of(m) >= t => Strategy::SliceStream,
        _ => Strategy::CanonicalBuffer,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct PTime<T> {
    pub p: usize,
    /// Streaming time at this `p`.
    pub slice_time_s: T,
    /// Per-vector streaming objective used for selecting `p*`.
    pub objective: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct Plan<T> {
    pub strategy: Strategy,
    pub p_star: usize,
    pub p_local: usize,
    pub p_dram: usize,
    pub predicted_time_s: T,
    /// `None` when the threshold is unbounded.
    pub decision_threshold_m: Option<T>,
    /// Buffer-resident time at `p_local`.
    pub local_time_s: T,
    pub table: Vec<PTime<T>>,
}

impl<T: Real> Plan<T> {
    /// Packing degree the chosen strategy runs at.
    pub fn chosen_p(&self) -> usize {
        match self.strategy {
            Strategy::SliceStream => self.p_star,
            _ => self.p_local,
        }
    }
}

/// Picks `p*` and the LUT placement for an `M x K x N` problem.
///
/// `p_dram` and `p_local` are the largest degrees whose canonical plus
/// reordering LUTs fit the bank and buffer LUT budgets. `p*` is searched over
/// `p_local..=p_dram`: a degree below `p_local` is always beaten by the fully
/// buffered LUT at `p_local`, so restricting the range never changes the
/// outcome and keeps `p_local <= p* <= p_dram`.
pub fn make_plan<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    b_w: u8,
    b_a: u8,
    b_o: u8,
    device: &DeviceConfig<T>,
) -> Result<Plan<T>> {
    device.validate()?;
    let consts = &device.latency;
    let p_dram = max_feasible_p(device.bank_budget(), b_w, b_a, b_o, true, true).ok_or_else(|| {
        Error::InfeasibleP(format!(
            "no packing degree fits the {} LUT budget of {} bytes",
            Tier::Bank,
            device.bank_budget()
        ))
    })?;
    let p_local = max_feasible_p(device.buffer_budget(), b_w, b_a, b_o, true, true).ok_or_else(|| {
        Error::InfeasibleP(format!(
            "no packing degree fits the {} LUT budget of {} bytes",
            Tier::Buffer,
            device.buffer_budget()
        ))
    })?;
    let p_local = p_local.min(p_dram);
    let p_star = select_p_star_in(m, b_w, p_local, p_dram, consts);
    let strategy = placement_decision(m, b_w, p_star, p_local, consts);
    let local_time_s = predict_local_time(p_local, m, k, n, consts);
    let predicted_time_s = match strategy {
        Strategy::SliceStream => predict_slice_time(p_star, m, k, n, b_w, consts),
        _ => local_time_s,
    };
    let table = (1..=p_dram)
        .map(|p| PTime {
            p,
            slice_time_s: predict_slice_time(p, m, k, n, b_w, consts),
            objective: slice_objective(p, m, b_w, consts),
        })
        .collect();
    Ok(Plan {
        strategy,
        p_star,
        p_local,
        p_dram,
        predicted_time_s,
        decision_threshold_m: decision_threshold(b_w, p_star, p_local, consts),
        local_time_s,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> LatencyConstants<f64> {
        LatencyConstants::default()
    }

    #[test]
    fn smallest_instance() {
        let c = defaults();
        let t = predict_slice_time(1, 1, 1, 1, 1, &c);
        assert_eq!(t, 2.0 * c.l_d + c.l_local);
        assert_eq!(predict_local_time(1, 1, 1, 1, &c), c.l_local);
    }

    #[test]
    fn doubling_m_doubles_second_term_only() {
        let c = defaults();
        let first = predict_slice_time(3, 0, 768, 768, 4, &c);
        let t1 = predict_slice_time(3, 100, 768, 768, 4, &c);
        let t2 = predict_slice_time(3, 200, 768, 768, 4, &c);
        assert!(((t2 - first) / (t1 - first) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn w4a4_large_m_prefers_three() {
        let c = defaults();
        let t = |p| predict_slice_time(p, 3072, 768, 768, 4, &c);
        assert!(t(3) < t(2) && t(3) < t(4));
        // hand-evaluated objective values
        let f = |p| slice_objective(p, 3072, 4, &c);
        assert!((f(2) - 5.04e-5).abs() < 0.01e-5);
        assert!((f(3) - 3.53e-5).abs() < 0.01e-5);
        assert!((f(4) - 4.73e-5).abs() < 0.02e-5);
        assert_eq!(select_p_star(3072, 4, 8, &c), 3);
        assert_eq!(select_p_star(768, 4, 8, &c), 3);
        assert_eq!(select_p_star(1 << 40, 1, 6, &c), 6);
    }

    #[test]
    fn local_time_inverse_in_p() {
        let c = defaults();
        let t2 = predict_local_time(2, 64, 96, 8, &c);
        let t4 = predict_local_time(4, 64, 96, 8, &c);
        assert!((t2 / t4 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_examples() {
        let c = defaults();
        let t = decision_threshold(4, 3, 2, &c).unwrap();
        assert!((t - 340.7).abs() < 0.5, "{t}");
        assert_eq!(placement_decision(128, 4, 3, 2, &c), Strategy::CanonicalBuffer);
        assert_eq!(placement_decision(768, 4, 3, 2, &c), Strategy::SliceStream);
        assert_eq!(decision_threshold(4, 2, 2, &c), None);
        assert_eq!(placement_decision(usize::MAX, 4, 2, 2, &c), Strategy::CanonicalBuffer);
        let slower = LatencyConstants { l_d: c.l_d * 2.0, ..c };
        assert!(decision_threshold(4, 3, 2, &slower).unwrap() > t);
    }

    #[test]
    fn generic_over_f32() {
        let c = LatencyConstants::<f32>::default();
        assert_eq!(select_p_star(3072, 4, 8, &c), 3);
        let t = decision_threshold(4, 3, 2, &c).unwrap();
        assert!((t - 340.7).abs() < 0.5);
    }

    #[test]
    fn latency_validation() {
        assert!(LatencyConstants::new(0.0f64, 1.0).is_err());
        assert!(LatencyConstants::new(1.0f64, f64::NAN).is_err());
        let c: LatencyConstants<f64> =
            serde_json::from_str(r#"{"l_d_seconds": 2e-9, "l_local_seconds": 4e-8}"#).unwrap();
        assert_eq!(c.l_d, 2e-9);
    }
}
