//! Run configuration: defaults, then `--config` file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use pimlut::engine::Strategy;
use pimlut::lut::compute_sizes;
use pimlut::pim_sim::check_fit;
use pimlut::quantizer::{Code, CodeMatrix, CodeTables};
use pimlut::DeviceConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Version stamped into every JSON report and CSV row. Bump it when a field
/// or column is added, removed or changes meaning.
pub const FORMAT_VERSION: u32 = 1;

/// Largest table (entries) the CLI will build when it picks `p` itself.
const AUTO_P_ENTRY_CAP: u128 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableMode {
    UnsignedIdentity,
    SymmetricSigned,
    /// JSON file holding `{"weight": ..., "activation": ...}` code tables.
    File(PathBuf),
}

impl TableMode {
    pub fn parse(s: &str) -> Self {
        match s {
            "unsigned" | "unsigned-identity" => TableMode::UnsignedIdentity,
            "signed" | "symmetric-signed" => TableMode::SymmetricSigned,
            path => TableMode::File(PathBuf::from(path)),
        }
    }
}

/// Fields a `--config` file may set; anything absent keeps its default.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub n: Option<usize>,
    pub b_w: Option<u8>,
    pub b_a: Option<u8>,
    pub b_o: Option<u8>,
    pub strategy: Option<Strategy>,
    pub p: Option<usize>,
    pub k_slices: Option<usize>,
    pub seed: Option<u64>,
    pub device_path: Option<PathBuf>,
    pub device: Option<DeviceConfig>,
    pub tables: Option<TableMode>,
    pub operands: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// `other` wins wherever it is set.
    pub fn overlay(self, other: ConfigFile) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigFile { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            m,
            k,
            n,
            b_w,
            b_a,
            b_o,
            strategy,
            p,
            k_slices,
            seed,
            device_path,
            device,
            tables,
            operands
        )
    }
}

/// Fully resolved configuration, echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub format_version: u32,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub b_w: u8,
    pub b_a: u8,
    pub b_o: u8,
    pub strategy: Strategy,
    pub p: usize,
    pub k_slices: usize,
    pub seed: u64,
    pub device_path: Option<PathBuf>,
    pub device: DeviceConfig,
    pub tables: TableMode,
    pub operands: Option<PathBuf>,
}

/// Explicit `W` and `A` codes, row by row.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperandsFile {
    pub w: Vec<Vec<Code>>,
    pub a: Vec<Vec<Code>>,
}

fn to_matrix(rows: &[Vec<Code>], bits: u8, name: &str) -> anyhow::Result<CodeMatrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        bail!("operand {name} has rows of different lengths");
    }
    Ok(CodeMatrix::new(rows.len(), cols, bits, rows.concat())?)
}

pub fn load_tables(mode: &TableMode, b_w: u8, b_a: u8) -> anyhow::Result<CodeTables> {
    Ok(match mode {
        TableMode::UnsignedIdentity => CodeTables::unsigned_identity(b_w, b_a)?,
        TableMode::SymmetricSigned => CodeTables::symmetric_signed(b_w, b_a)?,
        TableMode::File(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing code tables {}", path.display()))?
        }
    })
}

/// Seeded uniform codes over `[0, 2^bits)`.
pub fn random_codes(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bits: u8) -> CodeMatrix {
    CodeMatrix::from_fn(rows, cols, bits, |_, _| rng.gen_range(0..1u32 << bits) as Code)
        .expect("generated codes are in range")
}

/// Largest `p <= 8` whose LUTs fit the strategy's tier, with a bounded table.
pub fn default_p(
    strategy: Strategy,
    b_w: u8,
    b_a: u8,
    b_o: u8,
    k_slices: usize,
    device: &DeviceConfig,
) -> Option<usize> {
    if strategy == Strategy::NaiveMac {
        return Some(1);
    }
    (1..=8).rev().find(|&p| {
        let s = compute_sizes(b_w, b_a, p, b_o);
        let entries = if strategy.uses_packed_lut() {
            s.rows.saturating_mul(s.packed_cols)
        } else {
            s.rows
                .saturating_mul(s.canonical_cols.saturating_add(s.reordering_cols))
        };
        entries <= AUTO_P_ENTRY_CAP && check_fit(strategy, b_w, b_a, b_o, p, k_slices, device).is_ok()
    })
}

pub struct Resolved {
    pub config: RunConfig,
    pub tables: CodeTables,
    explicit: Option<(CodeMatrix, CodeMatrix)>,
}

impl Resolved {
    /// `W` and `A`: from the operands file, or seeded random codes.
    pub fn operands(&self) -> (CodeMatrix, CodeMatrix) {
        if let Some(ops) = &self.explicit {
            return ops.clone();
        }
        let c = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let w = random_codes(&mut rng, c.m, c.k, c.b_w);
        (w, random_codes(&mut rng, c.k, c.n, c.b_a))
    }
}

impl ConfigFile {
    /// Applies defaults and loads tables, device and any operands file. `p` stays
    /// unset (0) for `auto`; the caller fills it in from the plan.
    pub fn resolve(self) -> anyhow::Result<Resolved> {
        let device = match (&self.device, &self.device_path) {
            (Some(d), _) => d.clone(),
            (None, Some(path)) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                DeviceConfig::from_json(&text).with_context(|| format!("device config {}", path.display()))?
            }
            (None, None) => DeviceConfig::default(),
        };
        device.validate()?;
        let mode = self.tables.clone().unwrap_or(TableMode::UnsignedIdentity);
        let (mut b_w, mut b_a) = (self.b_w.unwrap_or(1), self.b_a.unwrap_or(3));
        let tables = load_tables(&mode, b_w, b_a)?;
        if let TableMode::File(_) = mode {
            b_w = tables.weight.bitwidth();
            b_a = tables.activation.bitwidth();
        }
        let b_o = self.b_o.unwrap_or(pimlut::lut::DEFAULT_ENTRY_BYTES);
        let seed = self.seed.unwrap_or(0);

        let explicit = match &self.operands {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let ops: OperandsFile =
                    serde_json::from_str(&text).with_context(|| format!("parsing operands {}", path.display()))?;
                let (w, a) = (to_matrix(&ops.w, b_w, "w")?, to_matrix(&ops.a, b_a, "a")?);
                if w.cols() != a.rows() {
                    bail!("W is {}x{} but A is {}x{}", w.rows(), w.cols(), a.rows(), a.cols());
                }
                for (name, given, actual) in [
                    ("m", self.m, w.rows()),
                    ("k", self.k, w.cols()),
                    ("n", self.n, a.cols()),
                ] {
                    if let Some(g) = given.filter(|&g| g != actual) {
                        bail!("{name}={g} conflicts with the operands file ({actual})");
                    }
                }
                Some((w, a))
            }
            None => None,
        };
        let (m, k, n) = match &explicit {
            Some((w, a)) => (w.rows(), w.cols(), a.cols()),
            None => (self.m.unwrap_or(64), self.k.unwrap_or(64), self.n.unwrap_or(64)),
        };

        let strategy = self.strategy.unwrap_or(Strategy::Auto);
        let k_slices = self.k_slices.unwrap_or(1);
        if k_slices == 0 {
            bail!("k must be at least 1");
        }
        let p = match (self.p, strategy) {
            (Some(0), _) => bail!("p must be at least 1"),
            (Some(p), _) => p,
            (None, Strategy::Auto) => 0,
            (None, s) => default_p(s, b_w, b_a, b_o, k_slices, &device).ok_or_else(|| {
                pimlut::Error::InfeasibleP(format!("no p in 1..=8 places the {s} LUTs on this device"))
            })?,
        };
        let config = RunConfig {
            format_version: FORMAT_VERSION,
            m,
            k,
            n,
            b_w,
            b_a,
            b_o,
            strategy,
            p,
            k_slices,
            seed,
            device_path: self.device_path,
            device: device.resolved(),
            tables: mode,
            operands: self.operands,
        };
        Ok(Resolved {
            config,
            tables,
            explicit,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = ConfigFile {
            m: Some(8),
            seed: Some(3),
            ..Default::default()
        };
        let flags = ConfigFile {
            m: Some(16),
            ..Default::default()
        };
        let merged = file.overlay(flags);
        assert_eq!((merged.m, merged.seed), (Some(16), Some(3)));
    }

    #[test]
    fn defaults_are_concrete() {
        let r = ConfigFile {
            strategy: Some(Strategy::PackedBuffer),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert_eq!((r.config.m, r.config.k, r.config.n), (64, 64, 64));
        assert_eq!(r.config.p, 3);
        assert!(r.config.device.dram_lookup_seconds.is_some());
    }

    #[test]
    fn same_seed_same_operands() {
        let make = |seed| {
            ConfigFile {
                seed: Some(seed),
                m: Some(5),
                ..Default::default()
            }
            .resolve()
            .unwrap()
            .operands()
        };
        assert_eq!(make(9), make(9));
        assert_ne!(make(9).0, make(10).0);
    }

    #[test]
    fn unknown_config_fields_are_rejected() {
        assert!(serde_json::from_str::<ConfigFile>(r#"{"mm": 3}"#).is_err());
        let c: ConfigFile =
            serde_json::from_str(r#"{"tables": {"file": "t.json"}, "strategy": "slice-stream"}"#).unwrap();
        assert_eq!(c.tables, Some(TableMode::File("t.json".into())));
    }
}
