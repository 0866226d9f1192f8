//! Parameter sweeps. Every point becomes one CSV row; failures are recorded
//! in the `status` column and the sweep carries on.

use anyhow::bail;
use pimlut::cost_model::{make_plan, predict_local_time, predict_slice_time};
use pimlut::engine::{gemm_reference, Strategy};
use pimlut::pim_sim::{plan_tiling, simulate, TilingOptions};
use pimlut::{DeviceConfig, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{default_p, load_tables, random_codes, TableMode, FORMAT_VERSION};

/// Parses `"1..6"`, `"1,2,4"`, a mix of both, or `""` (no values).
pub fn parse_list(s: &str) -> anyhow::Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, hi)) = part.split_once("..") {
            let (lo, hi): (usize, usize) = (lo.parse()?, hi.trim_start_matches('=').parse()?);
            if lo > hi {
                bail!("empty range {part}");
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse()?);
        }
    }
    Ok(out)
}

pub fn parse_strategies(s: &str) -> anyhow::Result<Vec<Strategy>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<Strategy>().map_err(anyhow::Error::msg))
        .collect()
}

/// Values for each swept axis. `p: None` lets each point pick its own.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub strategies: Vec<Strategy>,
    pub m: Vec<usize>,
    pub k: Vec<usize>,
    pub n: Vec<usize>,
    pub b_w: Vec<u8>,
    pub b_a: Vec<u8>,
    pub p: Option<Vec<usize>>,
    pub k_slices: Vec<usize>,
    pub b_o: u8,
    pub seed: u64,
    pub tables: TableMode,
    pub device: DeviceConfig,
    pub verify: bool,
}

#[derive(Debug, Clone, Copy)]
struct Point {
    strategy: Strategy,
    m: usize,
    k: usize,
    n: usize,
    b_w: u8,
    b_a: u8,
    p: Option<usize>,
    k_slices: usize,
}

impl Sweep {
    fn points(&self) -> Vec<Point> {
        let ps: Vec<Option<usize>> = match &self.p {
            Some(list) => list.iter().copied().map(Some).collect(),
            None => vec![None],
        };
        let mut out = Vec::new();
        for &strategy in &self.strategies {
            for &b_w in &self.b_w {
                for &b_a in &self.b_a {
                    for &m in &self.m {
                        for &k in &self.k {
                            for &n in &self.n {
                                for &p in &ps {
                                    for &k_slices in &self.k_slices {
                                        out.push(Point {
                                            strategy,
                                            m,
                                            k,
                                            n,
                                            b_w,
                                            b_a,
                                            p,
                                            k_slices,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// One sweep point. Column order is the CSV schema.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Row {
    pub format_version: u32,
    pub point: usize,
    pub strategy: String,
    pub resolved_strategy: Option<String>,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub b_w: u8,
    pub b_a: u8,
    pub b_o: u8,
    pub p: Option<usize>,
    pub k_slices: usize,
    pub seed: u64,
    /// `ok`, `infeasible`, `mismatch` or `error`.
    pub status: String,
    pub banks_used: Option<usize>,
    pub dram_entry_loads: Option<u64>,
    pub local_lookups: Option<u64>,
    pub dram_lut_lookups: Option<u64>,
    pub mac_ops: Option<u64>,
    pub passes: Option<u64>,
    pub output_writebacks: Option<u64>,
    /// Sum of per-bank modeled times.
    pub total_time_s: Option<f64>,
    /// Slowest bank.
    pub wall_time_s: Option<f64>,
    /// Cost-model prediction for the whole problem on one bank.
    pub predicted_time_s: Option<f64>,
    pub bank_lut_bytes: Option<u128>,
    pub buffer_lut_bytes: Option<u128>,
    pub output_crc32: Option<String>,
    pub verified: Option<bool>,
    pub error: Option<String>,
}

pub const CSV_COLUMNS: &[&str] = &[
    "format_version",
    "point",
    "strategy",
    "resolved_strategy",
    "m",
    "k",
    "n",
    "b_w",
    "b_a",
    "b_o",
    "p",
    "k_slices",
    "seed",
    "status",
    "banks_used",
    "dram_entry_loads",
    "local_lookups",
    "dram_lut_lookups",
    "mac_ops",
    "passes",
    "output_writebacks",
    "total_time_s",
    "wall_time_s",
    "predicted_time_s",
    "bank_lut_bytes",
    "buffer_lut_bytes",
    "output_crc32",
    "verified",
    "error",
];

fn status_of(err: &Error) -> &'static str {
    match err {
        Error::InfeasibleP(_) | Error::CapacityExceeded { .. } => "infeasible",
        _ => "error",
    }
}

fn run_point(idx: usize, pt: Point, sweep: &Sweep) -> Row {
    let seed = sweep.seed.wrapping_add(idx as u64);
    let mut row = Row {
        format_version: FORMAT_VERSION,
        point: idx,
        strategy: pt.strategy.to_string(),
        m: pt.m,
        k: pt.k,
        n: pt.n,
        b_w: pt.b_w,
        b_a: pt.b_a,
        b_o: sweep.b_o,
        p: pt.p,
        k_slices: pt.k_slices,
        seed,
        ..Default::default()
    };
    match try_point(pt, sweep, seed, &mut row) {
        Ok(()) => {}
        Err(e) => {
            row.status = match e.downcast_ref::<Error>() {
                Some(err) => status_of(err),
                None => "error",
            }
            .into();
            row.error = Some(format!("{e:#}"));
        }
    }
    row
}

fn try_point(pt: Point, sweep: &Sweep, seed: u64, row: &mut Row) -> anyhow::Result<()> {
    let dev = &sweep.device;
    let tables = load_tables(&sweep.tables, pt.b_w, pt.b_a)?;
    let (b_w, b_a) = (tables.weight.bitwidth(), tables.activation.bitwidth());
    let (strategy, p, k_slices) = if pt.strategy == Strategy::Auto {
        let plan = make_plan(pt.m, pt.k, pt.n, b_w, b_a, sweep.b_o, dev)?;
        (plan.strategy, pt.p.unwrap_or(plan.chosen_p()), pt.k_slices)
    } else {
        let p = match pt.p {
            Some(p) => p,
            None => default_p(pt.strategy, b_w, b_a, sweep.b_o, pt.k_slices, dev)
                .ok_or_else(|| Error::InfeasibleP(format!("no p in 1..=8 places the {} LUTs", pt.strategy)))?,
        };
        (pt.strategy, p, pt.k_slices)
    };
    row.resolved_strategy = Some(strategy.to_string());
    row.p = Some(p);
    row.predicted_time_s = match strategy {
        Strategy::SliceStream => Some(predict_slice_time(p, pt.m, pt.k, pt.n, b_w, &dev.latency)),
        Strategy::CanonicalBuffer => Some(predict_local_time(p, pt.m, pt.k, pt.n, &dev.latency)),
        _ => None,
    };

    let plan = plan_tiling(
        pt.m,
        pt.k,
        pt.n,
        b_w,
        b_a,
        sweep.b_o,
        p,
        k_slices,
        strategy,
        dev,
        TilingOptions::default(),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_codes(&mut rng, pt.m, pt.k, b_w);
    let a = random_codes(&mut rng, pt.k, pt.n, b_a);
    let (out, rep) = simulate(&plan, &w, &a, &tables, dev)?;
    let agg = &rep.aggregate;
    row.banks_used = Some(rep.banks_used);
    row.dram_entry_loads = Some(agg.dram_entry_loads);
    row.local_lookups = Some(agg.local_lookups);
    row.dram_lut_lookups = Some(agg.dram_lut_lookups);
    row.mac_ops = Some(agg.mac_ops);
    row.passes = Some(agg.passes);
    row.output_writebacks = Some(agg.output_writebacks);
    row.total_time_s = Some(agg.modeled_time_s);
    row.wall_time_s = Some(rep.wall_time_s);
    row.bank_lut_bytes = Some(plan.footprint.bank);
    row.buffer_lut_bytes = Some(plan.footprint.buffer);
    row.output_crc32 = Some(format!("{:08x}", out.checksum()));
    row.status = "ok".into();
    if sweep.verify {
        let ok = out == gemm_reference(&w, &a, &tables)?;
        row.verified = Some(ok);
        if !ok {
            row.status = "mismatch".into();
        }
    }
    Ok(())
}

/// Runs every point, concurrently, returning rows in sweep order.
pub fn run(sweep: &Sweep) -> Vec<Row> {
    let points = sweep.points();
    points
        .into_par_iter()
        .enumerate()
        .map(|(i, pt)| run_point(i, pt, sweep))
        .collect()
}

pub fn write_csv<W: std::io::Write>(rows: &[Row], out: W) -> anyhow::Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    wtr.write_record(CSV_COLUMNS)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sweep() -> Sweep {
        Sweep {
            strategies: vec![Strategy::PackedBuffer, Strategy::PackedDram],
            m: vec![16],
            k: vec![12],
            n: vec![4],
            b_w: vec![1],
            b_a: vec![1],
            p: Some((1..=6).collect()),
            k_slices: vec![1],
            b_o: 2,
            seed: 5,
            tables: TableMode::UnsignedIdentity,
            device: DeviceConfig {
                num_banks: 1,
                ..Default::default()
            },
            verify: true,
        }
    }

    #[test]
    fn list_syntax() {
        assert_eq!(parse_list("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_list("2, 5,7..=8").unwrap(), vec![2, 5, 7, 8]);
        assert!(parse_list("").unwrap().is_empty());
        assert!(parse_list("4..2").is_err());
        assert!(parse_list("x").is_err());
    }

    #[test]
    fn buffer_beats_dram_at_every_p() {
        let rows = run(&sweep());
        assert_eq!(rows.len(), 12);
        for p in 1..=6 {
            let time = |s: &str| {
                let r = rows.iter().find(|r| r.strategy == s && r.p == Some(p)).unwrap();
                assert_eq!(r.status, "ok", "{r:?}");
                assert_eq!(r.verified, Some(true));
                r.wall_time_s.unwrap()
            };
            assert!(time("packed-buffer") < time("packed-dram"), "p={p}");
        }
    }

    #[test]
    fn larger_k_runs_out_of_buffer() {
        let mut s = sweep();
        s.strategies = vec![Strategy::SliceStream];
        s.b_w = vec![2];
        s.b_a = vec![2];
        s.p = Some(vec![5]);
        s.k_slices = vec![1, 2, 8, 16];
        let rows = run(&s);
        let status: Vec<&str> = rows.iter().map(|r| r.status.as_str()).collect();
        // one slice pair at p=5 is 1024 * (2 + 2) bytes; k=8 fills the 32 KiB budget
        assert_eq!(status, vec!["ok", "ok", "ok", "infeasible"]);
    }

    #[test]
    fn empty_sweep_is_header_only() {
        let mut s = sweep();
        s.p = Some(vec![]);
        let rows = run(&s);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text.trim_end(), CSV_COLUMNS.join(","));
    }

    #[test]
    fn header_matches_row_fields() {
        let rows = run(&sweep());
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.serialize(&rows[0]).unwrap();
        let text = String::from_utf8(wtr.into_inner().unwrap()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
    }
}
