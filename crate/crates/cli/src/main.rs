mod bench;
mod config;

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pimlut::cost_model::make_plan;
use pimlut::engine::{gemm_reference, Strategy};
use pimlut::lut::{
    build_canonical_lut, build_packed_lut, build_reordering_lut, compute_sizes, deserialize_lut, read_header,
    serialize_lut, sidecar_path, Layout, Lut, SizeReport,
};
use pimlut::pim_sim::{plan_tiling, simulate, TilingOptions};
use pimlut::selftest::{self, Fault, SelftestOptions};
use pimlut::{Error, Plan};
use serde::Serialize;
use serde_json::json;

use crate::config::{load_tables, ConfigFile, RunConfig, TableMode, FORMAT_VERSION};

#[derive(Parser, Debug)]
#[command(
    name = "pimlut",
    version,
    about = "LUT-based low-bit GEMM for processing-in-memory banks"
)]
struct Cli {
    /// Run configuration (JSON); command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for generated operands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Emit JSON.
    #[arg(long, global = true, conflicts_with = "csv")]
    json: bool,
    /// Emit CSV.
    #[arg(long, global = true)]
    csv: bool,
    /// Check results against the direct integer GEMM.
    #[arg(long, global = true)]
    verify: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// LUT byte counts for p = 1..=p_max (CSV unless --json).
    Sizes {
        #[arg(long, default_value_t = 1)]
        b_w: u8,
        #[arg(long, default_value_t = 3)]
        b_a: u8,
        #[arg(long, default_value_t = 2)]
        b_o: u8,
        #[arg(long, default_value_t = 7)]
        p_max: usize,
    },
    /// Build a LUT file, or inspect one with --inspect.
    Build(BuildArgs),
    /// Run one GEMM on the simulated device.
    Gemm(ProblemArgs),
    /// Cost-model plan: per-p predicted times, p_local/p_dram and placement.
    Plan(ProblemArgs),
    /// Sweep parameters; one CSV row per point (CSV unless --json).
    Bench(BenchArgs),
    /// Exhaustive small-space correctness checks.
    Selftest {
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FaultArg {
    CanonicalEntry,
    ReorderingEntry,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum KindArg {
    Packed,
    Canonical,
    Reordering,
}

#[derive(Args, Debug)]
struct BuildArgs {
    /// Read and validate an existing LUT file instead of building one.
    #[arg(long, value_name = "PATH", conflicts_with = "out")]
    inspect: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "canonical")]
    kind: KindArg,
    #[arg(long, default_value_t = 1)]
    b_w: u8,
    #[arg(long, default_value_t = 3)]
    b_a: u8,
    #[arg(long, default_value_t = 2)]
    b_o: u8,
    #[arg(long, default_value_t = 3)]
    p: usize,
    /// unsigned-identity, symmetric-signed, or a code-table JSON file.
    #[arg(long, default_value = "unsigned-identity")]
    tables: String,
    /// Store column-major (slice-friendly) instead of row-major.
    #[arg(long)]
    column_major: bool,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct ProblemArgs {
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    b_w: Option<u8>,
    #[arg(long)]
    b_a: Option<u8>,
    #[arg(long)]
    b_o: Option<u8>,
    /// naive-mac, packed-dram, packed-buffer, canonical-buffer, slice-stream or auto.
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    p: Option<usize>,
    /// Activation vectors whose slices are co-resident (slice-stream).
    #[arg(long)]
    k_slices: Option<usize>,
    /// unsigned-identity, symmetric-signed, or a code-table JSON file.
    #[arg(long)]
    tables: Option<String>,
    /// Device configuration JSON.
    #[arg(long, value_name = "PATH")]
    device: Option<PathBuf>,
    /// Override the device's bank count.
    #[arg(long)]
    banks: Option<usize>,
    /// JSON file with explicit `w` and `a` code matrices.
    #[arg(long, value_name = "PATH")]
    operands: Option<PathBuf>,
    /// Include the output matrix in the report.
    #[arg(long)]
    print_output: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Comma-separated strategies.
    #[arg(long, default_value = "canonical-buffer,slice-stream")]
    strategies: String,
    /// Lists accept `a..b`, `a,b,c` or a mix; an empty list gives an empty sweep.
    #[arg(long, default_value = "64")]
    m: String,
    #[arg(long, default_value = "64")]
    k: String,
    #[arg(long, default_value = "64")]
    n: String,
    #[arg(long, default_value = "1")]
    b_w: String,
    #[arg(long, default_value = "3")]
    b_a: String,
    /// Packing degrees; omitted means each point picks its own.
    #[arg(long)]
    p: Option<String>,
    #[arg(long, default_value = "1")]
    k_slices: String,
    #[arg(long, default_value_t = 2)]
    b_o: u8,
    #[arg(long, default_value = "unsigned-identity")]
    tables: String,
    #[arg(long, value_name = "PATH")]
    device: Option<PathBuf>,
    #[arg(long)]
    banks: Option<usize>,
}

/// Output mismatch found by `--verify` or the self-test.
#[derive(Debug)]
struct VerificationFailed(String);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for VerificationFailed {}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

impl Cli {
    fn format(&self, default: Format) -> Format {
        if self.json {
            Format::Json
        } else if self.csv {
            Format::Csv
        } else {
            default
        }
    }

    fn base_config(&self) -> anyhow::Result<ConfigFile> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        Ok(file.overlay(ConfigFile {
            seed: self.seed,
            ..Default::default()
        }))
    }
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn problem_config(cli: &Cli, args: &ProblemArgs) -> anyhow::Result<config::Resolved> {
    let flags = ConfigFile {
        m: args.m,
        k: args.k,
        n: args.n,
        b_w: args.b_w,
        b_a: args.b_a,
        b_o: args.b_o,
        strategy: args.strategy,
        p: args.p,
        k_slices: args.k_slices,
        device_path: args.device.clone(),
        tables: args.tables.as_deref().map(TableMode::parse),
        operands: args.operands.clone(),
        ..Default::default()
    };
    let mut merged = cli.base_config()?.overlay(flags);
    if args.device.is_some() {
        // a device file on the command line beats an inline device in --config
        merged.device = None;
    }
    let mut resolved = merged.resolve()?;
    if let Some(b) = args.banks {
        resolved.config.device.num_banks = b;
        resolved.config.device.validate()?;
    }
    Ok(resolved)
}

fn cmd_sizes(cli: &Cli, b_w: u8, b_a: u8, b_o: u8, p_max: usize) -> anyhow::Result<()> {
    if !(1..=8).contains(&b_w) || !(1..=8).contains(&b_a) || !(1..=8).contains(&b_o) {
        bail!("bit widths must be in 1..=8 and b_o in 1..=8 bytes");
    }
    let rows: Vec<SizeReport> = (1..=p_max).map(|p| compute_sizes(b_w, b_a, p, b_o)).collect();
    match cli.format(Format::Csv) {
        Format::Json => print_json(&json!({ "format_version": FORMAT_VERSION, "sizes": rows })),
        Format::Csv => {
            let mut wtr = csv::Writer::from_writer(io::stdout().lock());
            for r in &rows {
                wtr.serialize(r)?;
            }
            if rows.is_empty() {
                wtr.write_record(SIZE_COLUMNS)?;
            }
            wtr.flush()?;
            Ok(())
        }
    }
}

/// Column order of [`SizeReport`], for an empty `sizes` table.
const SIZE_COLUMNS: [&str; 14] = [
    "b_w",
    "b_a",
    "p",
    "b_o",
    "reorder_entry_bytes",
    "rows",
    "packed_cols",
    "canonical_cols",
    "reordering_cols",
    "packed_bytes",
    "canonical_bytes",
    "reordering_bytes",
    "column_reduction",
    "total_reduction",
];

fn cmd_build(cli: &Cli, args: &BuildArgs) -> anyhow::Result<()> {
    if let Some(path) = &args.inspect {
        let header = read_header(path)?;
        let lut = deserialize_lut(path)?;
        let (size_bytes, tables) = match &lut {
            Lut::Packed(l) => (
                l.size_bytes(),
                Some(json!({"weight": l.weight_table(), "activation": l.act_table()})),
            ),
            Lut::Canonical(l) => (
                l.size_bytes(),
                Some(json!({"weight": l.weight_table(), "activation": l.act_table()})),
            ),
            Lut::Reordering(l) => (l.size_bytes(), None),
        };
        return print_json(&json!({
            "format_version": FORMAT_VERSION,
            "path": path,
            "header": header,
            "payload_bytes": size_bytes,
            "checksum_ok": true,
            "tables": tables,
        }));
    }
    let Some(out) = &args.out else {
        bail!("build needs --out PATH (or --inspect PATH)");
    };
    let layout = if args.column_major {
        Layout::ColumnMajor
    } else {
        Layout::RowMajor
    };
    let tables = load_tables(&TableMode::parse(&args.tables), args.b_w, args.b_a)?;
    let lut = match args.kind {
        KindArg::Packed => {
            Lut::Packed(build_packed_lut(&tables.weight, &tables.activation, args.p, args.b_o)?.with_layout(layout))
        }
        KindArg::Canonical => Lut::Canonical(
            build_canonical_lut(&tables.weight, &tables.activation, args.p, args.b_o)?.with_layout(layout),
        ),
        KindArg::Reordering => {
            Lut::Reordering(build_reordering_lut(tables.weight.bitwidth(), args.p)?.with_layout(layout))
        }
    };
    serialize_lut(&lut, out)?;
    let sidecar = (lut.kind() != pimlut::LutKind::Reordering).then(|| sidecar_path(out));
    if cli.verify && deserialize_lut(out)? != lut {
        return Err(VerificationFailed(format!("{} does not read back identically", out.display())).into());
    }
    print_json(&json!({
        "format_version": FORMAT_VERSION,
        "path": out,
        "sidecar": sidecar,
        "header": lut.header(),
        "verified": cli.verify.then_some(true),
    }))
}

#[derive(Serialize)]
struct OutputSummary {
    rows: usize,
    cols: usize,
    crc32: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<Vec<i32>>,
}

#[derive(Serialize)]
struct GemmReport {
    format_version: u32,
    config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    plan: Option<Plan>,
    output: OutputSummary,
    banks_used: usize,
    aggregate: pimlut::ExecReport,
    wall_time_s: f64,
    capacity_utilization: pimlut::pim_sim::Utilization<f64>,
    host_bytes_in: u128,
    host_bytes_out: u128,
    #[serde(skip_serializing_if = "Option::is_none")]
    verified: Option<bool>,
}

fn cmd_gemm(cli: &Cli, args: &ProblemArgs) -> anyhow::Result<()> {
    if cli.format(Format::Json) == Format::Csv {
        bail!("gemm reports are JSON only; use bench for CSV");
    }
    let mut r = problem_config(cli, args)?;
    let (w, a) = r.operands();
    let c = &mut r.config;
    let mut plan = None;
    if c.strategy == Strategy::Auto {
        let pl = make_plan(c.m, c.k, c.n, c.b_w, c.b_a, c.b_o, &c.device)?;
        c.strategy = pl.strategy;
        c.p = pl.chosen_p();
        plan = Some(pl);
    }
    let tiling = plan_tiling(
        c.m,
        c.k,
        c.n,
        c.b_w,
        c.b_a,
        c.b_o,
        c.p,
        c.k_slices,
        c.strategy,
        &c.device,
        TilingOptions::default(),
    )?;
    let (out, rep) = simulate(&tiling, &w, &a, &r.tables, &c.device)?;
    let verified = if cli.verify {
        Some(out == gemm_reference(&w, &a, &r.tables)?)
    } else {
        None
    };
    print_json(&GemmReport {
        format_version: FORMAT_VERSION,
        config: r.config.clone(),
        plan,
        output: OutputSummary {
            rows: out.rows,
            cols: out.cols,
            crc32: format!("{:08x}", out.checksum()),
            data: args.print_output.then(|| out.data.clone()),
        },
        banks_used: rep.banks_used,
        aggregate: rep.aggregate,
        wall_time_s: rep.wall_time_s,
        capacity_utilization: rep.capacity_utilization,
        host_bytes_in: rep.host_bytes_in,
        host_bytes_out: rep.host_bytes_out,
        verified,
    })?;
    if verified == Some(false) {
        return Err(VerificationFailed("output differs from the reference GEMM".into()).into());
    }
    Ok(())
}

fn cmd_plan(cli: &Cli, args: &ProblemArgs) -> anyhow::Result<()> {
    let r = problem_config(cli, args)?;
    let c = &r.config;
    let plan = make_plan(c.m, c.k, c.n, c.b_w, c.b_a, c.b_o, &c.device)?;
    match cli.format(Format::Json) {
        Format::Json => print_json(&json!({
            "format_version": FORMAT_VERSION,
            "config": c,
            "plan": plan,
        })),
        Format::Csv => {
            let mut wtr = csv::Writer::from_writer(io::stdout().lock());
            wtr.write_record([
                "p",
                "slice_time_s",
                "objective",
                "p_star",
                "p_local",
                "p_dram",
                "strategy",
            ])?;
            for row in &plan.table {
                wtr.write_record([
                    row.p.to_string(),
                    row.slice_time_s.to_string(),
                    row.objective.to_string(),
                    plan.p_star.to_string(),
                    plan.p_local.to_string(),
                    plan.p_dram.to_string(),
                    plan.strategy.to_string(),
                ])?;
            }
            wtr.flush()?;
            Ok(())
        }
    }
}

fn cmd_bench(cli: &Cli, args: &BenchArgs) -> anyhow::Result<()> {
    let base = cli.base_config()?;
    let device_path = args.device.clone().or(base.device_path.clone());
    let mut device = match (&args.device, &base.device) {
        (None, Some(d)) => d.clone(),
        _ => match &device_path {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                pimlut::DeviceConfig::from_json(&text)?
            }
            None => pimlut::DeviceConfig::default(),
        },
    };
    if let Some(b) = args.banks {
        device.num_banks = b;
    }
    device.validate()?;
    let bits = |s: &str| -> anyhow::Result<Vec<u8>> {
        bench::parse_list(s)?
            .into_iter()
            .map(|v| u8::try_from(v).context("bit width out of range"))
            .collect()
    };
    let sweep = bench::Sweep {
        strategies: bench::parse_strategies(&args.strategies)?,
        m: bench::parse_list(&args.m)?,
        k: bench::parse_list(&args.k)?,
        n: bench::parse_list(&args.n)?,
        b_w: bits(&args.b_w)?,
        b_a: bits(&args.b_a)?,
        p: args.p.as_deref().map(bench::parse_list).transpose()?,
        k_slices: bench::parse_list(&args.k_slices)?,
        b_o: args.b_o,
        seed: base.seed.unwrap_or(0),
        tables: TableMode::parse(&args.tables),
        device: device.resolved(),
        verify: cli.verify,
    };
    let rows = bench::run(&sweep);
    match cli.format(Format::Csv) {
        Format::Csv => bench::write_csv(&rows, io::stdout().lock())?,
        Format::Json => print_json(&json!({
            "format_version": FORMAT_VERSION,
            "seed": sweep.seed,
            "device": sweep.device,
            "rows": rows,
        }))?,
    }
    let mismatches = rows.iter().filter(|r| r.status == "mismatch").count();
    if mismatches > 0 {
        return Err(VerificationFailed(format!("{mismatches} sweep points differ from the reference GEMM")).into());
    }
    Ok(())
}

fn cmd_selftest(cli: &Cli, fault: Option<FaultArg>) -> anyhow::Result<()> {
    let fault = fault.map(|f| match f {
        FaultArg::CanonicalEntry => Fault::CanonicalEntry,
        FaultArg::ReorderingEntry => Fault::ReorderingEntry,
    });
    let results = selftest::run(SelftestOptions { fault });
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if cli.format(Format::Csv) == Format::Json {
        print_json(&json!({
            "format_version": FORMAT_VERSION,
            "passed": failed.is_empty(),
            "checks": results,
        }))?;
    } else {
        for r in &results {
            let tag = if r.passed { "PASS" } else { "FAIL" };
            println!("{tag} {} ({}) [{} ms]", r.name, r.detail, r.millis);
        }
        println!(
            "selftest: {} passed, {} failed",
            results.len() - failed.len(),
            failed.len()
        );
    }
    if !failed.is_empty() {
        return Err(VerificationFailed(format!("failed checks: {}", failed.join(", "))).into());
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.cmd {
        Command::Sizes { b_w, b_a, b_o, p_max } => cmd_sizes(cli, *b_w, *b_a, *b_o, *p_max),
        Command::Build(args) => cmd_build(cli, args),
        Command::Gemm(args) => cmd_gemm(cli, args),
        Command::Plan(args) => cmd_plan(cli, args),
        Command::Bench(args) => cmd_bench(cli, args),
        Command::Selftest { inject_fault } => cmd_selftest(cli, *inject_fault),
    }
}

/// 1: verification mismatch, 2: infeasible placement, 3: usage or input error.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<VerificationFailed>().is_some() {
        return 1;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::InfeasibleP(_) | Error::CapacityExceeded { .. }) => 2,
        Some(Error::ChecksumMismatch) => 1,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
