//! Experiment configuration.
//!
//! Files are TOML written as flat dotted keys (`lattice_a.omega = 1.55`).
//! Parsing goes through a permissive raw layer and then [`ExperimentConfig::resolve`],
//! which fills every default explicitly so the resolved value can be echoed
//! verbatim into the run metadata.

use std::path::{Path, PathBuf};

use glocal_core::lattice::{Alpha, CouplingKind, CouplingTopology, LatticeSpec};
use glocal_core::quench::Side;
use glocal_core::thermometry::Bracket;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    lattice_a: RawLattice,
    lattice_b: RawLattice,
    coupling: RawCoupling,
    initial: RawInitial,
    time: RawTime,
    #[serde(default)]
    subsystem: IndexMap<String, RawSubsystem>,
    #[serde(default)]
    profile: RawProfile,
    #[serde(default)]
    diagnostics: RawDiagnostics,
    #[serde(default)]
    tolerances: RawTolerances,
    #[serde(default)]
    ttm: RawTtm,
    #[serde(default)]
    output: RawOutput,
    scan: Option<RawScan>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLattice {
    sites: Option<usize>,
    rows: Option<usize>,
    cols: Option<usize>,
    omega: f64,
    g: Option<f64>,
    g_ratio: Option<f64>,
    alpha: AlphaValue,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoupling {
    kind: KindName,
    lambda: Option<f64>,
    lambda_ratio: Option<f64>,
    edge_row: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    t_a: f64,
    t_b: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    t_max: f64,
    samples: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubsystem {
    lattice: LatticeName,
    sites: Option<Vec<usize>>,
    centered: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    times: Option<Vec<f64>>,
    sliding_size: Option<usize>,
    growing_max: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiagnostics {
    global_thermality: Option<bool>,
    global_stride: Option<usize>,
    canonical: Option<bool>,
    gge: Option<bool>,
    energetics: Option<bool>,
    ttm: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    degeneracy: Option<f64>,
    epsilon: Option<f64>,
    sustain_window: Option<usize>,
    bracket_lo: Option<f64>,
    bracket_hi: Option<f64>,
    optimizer: Option<f64>,
    prescan_points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTtm {
    subsystem_a: Option<String>,
    subsystem_b: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScan {
    parameter: ScanParameter,
    values: Vec<f64>,
    time: f64,
}

/// `α` as written in a config: a positive number or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaValue {
    Finite(f64),
    Named(AlphaName),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlphaName {
    #[serde(rename = "inf")]
    Inf,
}

impl AlphaValue {
    fn to_alpha(self) -> Alpha {
        match self {
            AlphaValue::Finite(a) => Alpha::from(a),
            AlphaValue::Named(AlphaName::Inf) => Alpha::NearestNeighbor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    FullBody,
    EdgeEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatticeName {
    A,
    B,
}

impl LatticeName {
    pub fn side(self) -> Side {
        match self {
            LatticeName::A => Side::A,
            LatticeName::B => Side::B,
        }
    }
}

/// Scalar that `scan` sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanParameter {
    Lambda,
    LambdaRatio,
    TA,
    TB,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeConfig {
    pub shape: String,
    pub rows: usize,
    pub cols: usize,
    pub sites: usize,
    pub omega: f64,
    pub g: f64,
    pub g_ratio: f64,
    pub alpha: AlphaValue,
}

impl LatticeConfig {
    pub fn spec(&self) -> LatticeSpec {
        let alpha = self.alpha.to_alpha();
        if self.shape == "chain" {
            LatticeSpec::chain(self.sites, self.omega, self.g, alpha)
        } else {
            LatticeSpec::grid(self.rows, self.cols, self.omega, self.g, alpha)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingConfig {
    pub kind: KindName,
    pub lambda: f64,
    pub lambda_ratio: f64,
    pub edge_row: usize,
}

impl CouplingConfig {
    pub fn topology(&self) -> CouplingTopology {
        let kind = match self.kind {
            KindName::FullBody => CouplingKind::FullBody,
            KindName::EdgeEdge => CouplingKind::EdgeEdge,
        };
        CouplingTopology { kind, lambda: self.lambda, edge_row: self.edge_row }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialConfig {
    pub t_a: f64,
    pub t_b: f64,
}

/// Uniform grid in units of `1/ω_A`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeConfig {
    pub t_max: f64,
    pub samples: usize,
}

impl TimeConfig {
    /// Sample times as `ω_A t`.
    pub fn grid(&self) -> Vec<f64> {
        let last = (self.samples - 1) as f64;
        (0..self.samples).map(|k| self.t_max * k as f64 / last).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsystemConfig {
    pub name: String,
    pub lattice: LatticeName,
    pub sites: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileConfig {
    pub times: Vec<f64>,
    pub sliding_size: usize,
    pub growing_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsConfig {
    pub global_thermality: bool,
    pub global_stride: usize,
    pub canonical: bool,
    pub gge: bool,
    pub energetics: bool,
    pub ttm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TolerancesConfig {
    pub degeneracy: f64,
    pub epsilon: f64,
    pub sustain_window: usize,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub optimizer: f64,
    pub prescan_points: usize,
}

impl TolerancesConfig {
    pub fn bracket(&self) -> Bracket {
        Bracket { lo: self.bracket_lo, hi: self.bracket_hi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TtmConfig {
    pub subsystem_a: Option<String>,
    pub subsystem_b: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanConfig {
    pub parameter: ScanParameter,
    pub values: Vec<f64>,
    pub time: f64,
}

/// Fully resolved experiment: every default is explicit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub lattice_a: LatticeConfig,
    pub lattice_b: LatticeConfig,
    pub coupling: CouplingConfig,
    pub initial: InitialConfig,
    pub time: TimeConfig,
    pub subsystems: Vec<SubsystemConfig>,
    pub profile: ProfileConfig,
    pub diagnostics: DiagnosticsConfig,
    pub tolerances: TolerancesConfig,
    pub ttm: TtmConfig,
    pub output: OutputConfig,
    pub scan: Option<ScanConfig>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(format!("{name} must be a positive number, got {v}")))
    }
}

fn resolve_lattice(name: &str, raw: RawLattice) -> Result<LatticeConfig, CliError> {
    let (shape, rows, cols) = match (raw.sites, raw.rows, raw.cols) {
        (Some(n), None, None) => ("chain", 1, n),
        (None, Some(r), Some(c)) => ("grid", r, c),
        _ => return Err(invalid(format!("{name}: give either `sites` (chain) or both `rows` and `cols` (grid)"))),
    };
    let omega = positive(&format!("{name}.omega"), raw.omega)?;
    let g = match (raw.g, raw.g_ratio) {
        (Some(g), None) => g,
        (None, Some(r)) => r * omega * omega,
        _ => return Err(invalid(format!("{name}: give exactly one of `g` and `g_ratio`"))),
    };
    if !g.is_finite() {
        return Err(invalid(format!("{name}.g must be finite")));
    }
    if let AlphaValue::Finite(a) = raw.alpha {
        if !(a > 0.0) {
            return Err(invalid(format!("{name}.alpha must be positive or \"inf\", got {a}")));
        }
    }
    let cfg = LatticeConfig {
        shape: shape.to_string(),
        rows,
        cols,
        sites: rows * cols,
        omega,
        g,
        g_ratio: g / (omega * omega),
        alpha: raw.alpha,
    };
    cfg.spec().validate().map_err(|e| invalid(format!("{name}: {e}")))?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        Self::resolve(raw)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn resolve(raw: RawConfig) -> Result<Self, CliError> {
        let lattice_a = resolve_lattice("lattice_a", raw.lattice_a)?;
        let lattice_b = resolve_lattice("lattice_b", raw.lattice_b)?;
        if (lattice_a.rows, lattice_a.cols) != (lattice_b.rows, lattice_b.cols) || lattice_a.shape != lattice_b.shape {
            return Err(invalid("lattice_a and lattice_b must have the same shape"));
        }

        let scale = lattice_a.omega * lattice_b.omega;
        let lambda = match (raw.coupling.lambda, raw.coupling.lambda_ratio) {
            (Some(l), None) => l,
            (None, Some(r)) => r * scale,
            _ => return Err(invalid("coupling: give exactly one of `lambda` and `lambda_ratio`")),
        };
        if !lambda.is_finite() {
            return Err(invalid("coupling.lambda must be finite"));
        }
        let edge_row = raw.coupling.edge_row.unwrap_or(0);
        if edge_row >= lattice_a.rows {
            return Err(invalid(format!("coupling.edge_row {edge_row} outside {} rows", lattice_a.rows)));
        }
        let coupling = CouplingConfig { kind: raw.coupling.kind, lambda, lambda_ratio: lambda / scale, edge_row };

        let initial = InitialConfig { t_a: raw.initial.t_a, t_b: raw.initial.t_b };
        if !(initial.t_a.is_finite() && initial.t_a >= 0.0 && initial.t_b.is_finite() && initial.t_b >= 0.0) {
            return Err(invalid("initial temperatures must be finite and non-negative"));
        }
        let t_scale = initial.t_a.max(initial.t_b);

        let time = TimeConfig { t_max: positive("time.t_max", raw.time.t_max)?, samples: raw.time.samples };
        if time.samples < 2 {
            return Err(invalid(format!("time.samples must be at least 2, got {}", time.samples)));
        }

        let mut subsystems = Vec::with_capacity(raw.subsystem.len());
        for (name, s) in raw.subsystem {
            let lat = match s.lattice {
                LatticeName::A => &lattice_a,
                LatticeName::B => &lattice_b,
            };
            let sites = match (s.sites, s.centered) {
                (Some(sites), None) => sites,
                (None, Some(size)) if size >= 1 && size <= lat.sites => lat.spec().centered_window(size),
                (None, Some(size)) => {
                    return Err(invalid(format!("subsystem {name}: centered size {size} outside 1..={}", lat.sites)))
                }
                _ => return Err(invalid(format!("subsystem {name}: give exactly one of `sites` and `centered`"))),
            };
            if sites.is_empty() {
                return Err(invalid(format!("subsystem {name} has no sites")));
            }
            if let Some(&bad) = sites.iter().find(|&&i| i >= lat.sites) {
                return Err(invalid(format!("subsystem {name}: site {bad} out of range for {} sites", lat.sites)));
            }
            let mut sorted = sites.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != sites.len() {
                return Err(invalid(format!("subsystem {name} repeats a site")));
            }
            subsystems.push(SubsystemConfig { name, lattice: s.lattice, sites });
        }

        let profile = ProfileConfig {
            times: raw.profile.times.unwrap_or_default(),
            sliding_size: raw.profile.sliding_size.unwrap_or(1),
            growing_max: raw.profile.growing_max.unwrap_or(0),
        };
        if let Some(&t) = profile.times.iter().find(|&&t| !(t.is_finite() && t >= 0.0)) {
            return Err(invalid(format!("profile time {t} must be finite and non-negative")));
        }
        if profile.sliding_size == 0 || profile.sliding_size > lattice_a.sites {
            return Err(invalid(format!("profile.sliding_size must be in 1..={}", lattice_a.sites)));
        }
        if profile.growing_max > lattice_a.sites {
            return Err(invalid(format!("profile.growing_max must not exceed {}", lattice_a.sites)));
        }

        let diagnostics = DiagnosticsConfig {
            global_thermality: raw.diagnostics.global_thermality.unwrap_or(false),
            global_stride: raw.diagnostics.global_stride.unwrap_or(1),
            canonical: raw.diagnostics.canonical.unwrap_or(true),
            gge: raw.diagnostics.gge.unwrap_or(true),
            energetics: raw.diagnostics.energetics.unwrap_or(true),
            ttm: raw.diagnostics.ttm.unwrap_or(true),
        };
        if diagnostics.global_stride == 0 {
            return Err(invalid("diagnostics.global_stride must be at least 1"));
        }
        if diagnostics.energetics && time.samples < 3 {
            return Err(invalid("energetics needs at least 3 time samples"));
        }

        let tolerances = TolerancesConfig {
            degeneracy: positive("tolerances.degeneracy", raw.tolerances.degeneracy.unwrap_or(1e-8))?,
            epsilon: positive("tolerances.epsilon", raw.tolerances.epsilon.unwrap_or(0.02))?,
            sustain_window: raw.tolerances.sustain_window.unwrap_or(16),
            bracket_lo: raw.tolerances.bracket_lo.unwrap_or(1e-3 * t_scale),
            bracket_hi: raw.tolerances.bracket_hi.unwrap_or(1e3 * t_scale),
            optimizer: positive("tolerances.optimizer", raw.tolerances.optimizer.unwrap_or(1e-6))?,
            prescan_points: raw.tolerances.prescan_points.unwrap_or(32),
        };
        if tolerances.sustain_window == 0 {
            return Err(invalid("tolerances.sustain_window must be at least 1"));
        }
        if tolerances.prescan_points < 3 {
            return Err(invalid("tolerances.prescan_points must be at least 3"));
        }
        Bracket::new(tolerances.bracket_lo, tolerances.bracket_hi).map_err(|e| invalid(e.to_string()))?;

        let first_on = |l: LatticeName| subsystems.iter().find(|s| s.lattice == l).map(|s| s.name.clone());
        let pick = |given: Option<String>, l: LatticeName| -> Result<Option<String>, CliError> {
            match given {
                None => Ok(first_on(l)),
                Some(n) => match subsystems.iter().find(|s| s.name == n) {
                    Some(s) if s.lattice == l => Ok(Some(n)),
                    Some(_) => Err(invalid(format!("ttm subsystem {n} is not on lattice {l:?}"))),
                    None => Err(invalid(format!("ttm refers to unknown subsystem {n}"))),
                },
            }
        };
        let ttm = TtmConfig {
            subsystem_a: pick(raw.ttm.subsystem_a, LatticeName::A)?,
            subsystem_b: pick(raw.ttm.subsystem_b, LatticeName::B)?,
        };

        let output = OutputConfig { dir: raw.output.dir.unwrap_or_else(|| PathBuf::from("output")) };

        let scan = match raw.scan {
            None => None,
            Some(s) => {
                if s.values.is_empty() || s.values.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("scan.values must be a non-empty list of finite numbers"));
                }
                if !(s.time.is_finite() && s.time >= 0.0) {
                    return Err(invalid("scan.time must be finite and non-negative"));
                }
                if matches!(s.parameter, ScanParameter::TA | ScanParameter::TB) && s.values.iter().any(|&v| v < 0.0) {
                    return Err(invalid("scanned temperatures must be non-negative"));
                }
                Some(ScanConfig { parameter: s.parameter, values: s.values, time: s.time })
            }
        };

        Ok(Self {
            lattice_a,
            lattice_b,
            coupling,
            initial,
            time,
            subsystems,
            profile,
            diagnostics,
            tolerances,
            ttm,
            output,
            scan,
        })
    }

    pub fn lattice(&self, side: Side) -> &LatticeConfig {
        match side {
            Side::A => &self.lattice_a,
            Side::B => &self.lattice_b,
        }
    }

    /// Copy with one scalar replaced, as used by `scan`.
    pub fn with_parameter(&self, parameter: ScanParameter, value: f64) -> Self {
        let mut c = self.clone();
        let scale = c.lattice_a.omega * c.lattice_b.omega;
        match parameter {
            ScanParameter::Lambda => {
                c.coupling.lambda = value;
                c.coupling.lambda_ratio = value / scale;
            }
            ScanParameter::LambdaRatio => {
                c.coupling.lambda_ratio = value;
                c.coupling.lambda = value * scale;
            }
            ScanParameter::TA => c.initial.t_a = value,
            ScanParameter::TB => c.initial.t_b = value,
        }
        c
    }

    /// Physical time for a grid value `ω_A t`.
    pub fn physical_time(&self, omega_a_t: f64) -> f64 {
        omega_a_t / self.lattice_a.omega
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
lattice_a.sites = 10
lattice_a.omega = 1.55
lattice_a.g_ratio = 0.16
lattice_a.alpha = 0.5
lattice_b.sites = 10
lattice_b.omega = 1.5
lattice_b.g = 0.4275
lattice_b.alpha = "inf"
coupling.kind = "full_body"
coupling.lambda_ratio = 0.14
initial.t_a = 0.1
initial.t_b = 1.0
time.t_max = 30.0
time.samples = 11
subsystem.mid_b.lattice = "B"
subsystem.mid_b.centered = 2
subsystem.mid_a.lattice = "A"
subsystem.mid_a.sites = [4, 5]
"#;

    #[test]
    fn defaults_are_resolved() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.lattice_a.shape, "chain");
        assert!((c.lattice_a.g - 0.16 * 1.55 * 1.55).abs() < 1e-15);
        assert!((c.lattice_b.g_ratio - 0.19).abs() < 1e-12);
        assert_eq!(c.lattice_b.alpha, AlphaValue::Named(AlphaName::Inf));
        assert!((c.coupling.lambda - 0.14 * 1.55 * 1.5).abs() < 1e-15);
        assert_eq!(c.tolerances.bracket_lo, 1e-3);
        assert_eq!(c.tolerances.bracket_hi, 1e3);
        assert_eq!(c.time.grid()[10], 30.0);
        // declaration order is kept
        assert_eq!(c.subsystems[0].name, "mid_b");
        assert_eq!(c.subsystems[0].sites, vec![4, 5]);
        assert_eq!(c.ttm.subsystem_a.as_deref(), Some("mid_a"));
        assert_eq!(c.ttm.subsystem_b.as_deref(), Some("mid_b"));
    }

    #[test]
    fn echo_is_json_clean() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(v["lattice_b"]["alpha"], "inf");
        assert_eq!(v["lattice_a"]["alpha"], 0.5);
        assert_eq!(v["diagnostics"]["global_stride"], 1);
    }

    #[test]
    fn rejections() {
        let bad = [
            MINIMAL.replace("time.samples = 11", "time.samples = 1"),
            MINIMAL.replace("sites = [4, 5]", "sites = [4, 10]"),
            MINIMAL.replace("lattice_a.g_ratio = 0.16", "lattice_a.g_ratio = 0.16\nlattice_a.g = 1.0"),
            MINIMAL.replace("lattice_b.sites = 10", "lattice_b.sites = 12"),
            MINIMAL.replace("coupling.kind = \"full_body\"", "coupling.kind = \"diagonal\""),
            MINIMAL.replace("initial.t_a = 0.1", "initial.t_a = 0.1\ninitial.colour = 3"),
            MINIMAL.replace("lattice_a.alpha = 0.5", "lattice_a.alpha = -1.0"),
            MINIMAL.replace("sites = [4, 5]", "sites = [4, 4]"),
            format!("{MINIMAL}\nttm.subsystem_a = \"mid_b\"\n"),
            "lattice_a.omega = ".to_string(),
        ];
        for text in bad {
            assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn scan_substitution() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let d = c.with_parameter(ScanParameter::LambdaRatio, 0.3);
        assert!((d.coupling.lambda - 0.3 * 1.55 * 1.5).abs() < 1e-15);
        assert_eq!(c.with_parameter(ScanParameter::TB, 2.0).initial.t_b, 2.0);
    }
}
