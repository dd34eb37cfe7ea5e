//! The `run`, `spectrum`, `gge`, `scan` and `validate` pipelines.
//!
//! Every pipeline computes all of its results in memory and returns an
//! [`OutputSet`]; nothing touches the output directory until the computation
//! has succeeded.

use glocal_core::energetics::{predict_teq, ttm_consistency, EnergyLedger, EnergySplit};
use glocal_core::equilibration::{detect_equilibration, EquilibrationReport};
use glocal_core::gaussian::{
    bures_distance, propagator, symplectic_eigenvalues, williamson_residual, CovarianceMatrix,
};
use glocal_core::gge::{build_gge, detect_degeneracies, gge_marginal, GgeSpec};
use glocal_core::lattice::validate_stability;
use glocal_core::linalg::{max_abs, symplectic_residual};
use glocal_core::optimize::ScanSettings;
use glocal_core::quench::{CoupledSystem, Quench, Side};
use glocal_core::thermometry::{growing_windows, sliding_windows, Bracket, Thermometer, ThermometryReading};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, ScanParameter};
use crate::error::CliError;
use crate::output::{fmt_float, OutputSet};

const SIDES: [Side; 2] = [Side::A, Side::B];

fn side_name(side: Side) -> &'static str {
    match side {
        Side::A => "A",
        Side::B => "B",
    }
}

/// A configured system with its thermometers, ready to be quenched.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub system: CoupledSystem,
    thermometers: [Thermometer; 2],
}

impl Experiment {
    pub fn build(config: ExperimentConfig) -> Result<Self, CliError> {
        let system = CoupledSystem::new(config.lattice_a.spec(), config.lattice_b.spec(), config.coupling.topology())?;
        let settings = ScanSettings {
            prescan_points: config.tolerances.prescan_points,
            tolerance: config.tolerances.optimizer,
            ..ScanSettings::default()
        };
        let thermometers = [
            Thermometer::from_basis(system.basis_a.clone()).with_settings(settings),
            Thermometer::from_basis(system.basis_b.clone()).with_settings(settings),
        ];
        Ok(Self { config, system, thermometers })
    }

    pub fn thermometer(&self, side: Side) -> &Thermometer {
        match side {
            Side::A => &self.thermometers[0],
            Side::B => &self.thermometers[1],
        }
    }

    pub fn quench(&self) -> Result<Quench, CliError> {
        Ok(self.system.quench(self.config.initial.t_a, self.config.initial.t_b)?)
    }

    pub fn gge(&self) -> Result<GgeSpec, CliError> {
        let sigma0 = self.system.initial_state(self.config.initial.t_a, self.config.initial.t_b);
        Ok(build_gge(&self.system.basis_total, &sigma0, self.config.tolerances.degeneracy)?)
    }

    /// Subsystem reading, retried once on a wider bracket if the optimum is pinned.
    pub fn read(&self, side: Side, sigma: &CovarianceMatrix, sites: &[usize]) -> Result<ThermometryReading, CliError> {
        let th = self.thermometer(side);
        Ok(widened(|b| th.estimate(sigma, sites, b), self.config.tolerances.bracket())?)
    }

    pub fn read_global(&self, side: Side, sigma_x: &CovarianceMatrix) -> Result<ThermometryReading, CliError> {
        let th = self.thermometer(side);
        Ok(widened(|b| th.global(sigma_x, b), self.config.tolerances.bracket())?)
    }

    pub fn spectrum(&self) -> Result<SpectrumSummary, CliError> {
        let tol = self.config.tolerances.degeneracy;
        let omega = &self.system.basis_total.omega;
        let range = |w: &ndarray::Array1<f64>| LatticeSpectrum { omega_min: w[0], omega_max: w[w.len() - 1] };
        let blocks: Vec<Vec<usize>> = detect_degeneracies(omega, tol).into_iter().filter(|b| b.len() > 1).collect();
        Ok(SpectrumSummary {
            modes: omega.len(),
            omega_min: omega[0],
            omega_max: omega[omega.len() - 1],
            lattice_a: range(&self.system.basis_a.omega),
            lattice_b: range(&self.system.basis_b.omega),
            min_potential_eigenvalue: validate_stability(&self.system.v_total.entries)?,
            degeneracy_tolerance: tol,
            max_degeneracy: blocks.iter().map(Vec::len).max().unwrap_or(1),
            degeneracy_blocks: blocks,
        })
    }

    pub fn predicted_t_eq(&self) -> Result<f64, CliError> {
        Ok(predict_teq(
            &self.system.basis_a.omega,
            &self.system.basis_b.omega,
            self.config.initial.t_a,
            self.config.initial.t_b,
        )?)
    }
}

fn widened<F>(f: F, bracket: Bracket) -> glocal_core::Result<ThermometryReading>
where
    F: Fn(Bracket) -> glocal_core::Result<ThermometryReading>,
{
    let r = f(bracket)?;
    if !r.pinned {
        return Ok(r);
    }
    let wider = if (r.t_eff / bracket.lo).ln() < (bracket.hi / r.t_eff).ln() {
        Bracket { lo: bracket.lo * 1e-3, hi: bracket.hi }
    } else {
        Bracket { lo: bracket.lo, hi: bracket.hi * 1e3 }
    };
    f(wider)
}

#[derive(Debug, Clone, Serialize)]
pub struct LatticeSpectrum {
    pub omega_min: f64,
    pub omega_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub modes: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    pub lattice_a: LatticeSpectrum,
    pub lattice_b: LatticeSpectrum,
    pub min_potential_eigenvalue: f64,
    pub degeneracy_tolerance: f64,
    pub max_degeneracy: usize,
    /// Groups of normal modes sharing a frequency; singletons omitted.
    pub degeneracy_blocks: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GgeSummary {
    pub beta: Vec<f64>,
    pub mode_energy: Vec<f64>,
    pub capped: Vec<usize>,
    pub charge_residual: f64,
    pub antisymmetric_residual: f64,
    pub max_mode_energy: f64,
}

impl From<&GgeSpec> for GgeSummary {
    fn from(g: &GgeSpec) -> Self {
        Self {
            beta: g.beta.to_vec(),
            mode_energy: g.mode_energy.to_vec(),
            capped: g.capped.clone(),
            charge_residual: g.charge_residual,
            antisymmetric_residual: g.antisymmetric_residual,
            max_mode_energy: g.max_mode_energy(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct EnergeticsSummary {
    conservation_error: f64,
    /// Fraction of samples with `|Ė_int| < max(|Q̇_A|, |Q̇_B|)`.
    interaction_flow_below_heat_flow: f64,
    /// Samples where `Q̇_A` has the sign that heats the hotter side.
    backflow_samples: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
struct EquilibrationSummary {
    subsystem: String,
    t_eq: Option<f64>,
    t_rec: Option<f64>,
    window_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
struct TtmSummary {
    subsystem_a: String,
    subsystem_b: String,
    monotone: bool,
    degenerate: bool,
    negative_rate_samples: usize,
}

#[derive(Debug, Clone, Serialize)]
struct ThermometrySummary {
    readings: usize,
    pinned: usize,
}

#[derive(Debug, Clone, Serialize)]
struct ProfileEntry {
    file: String,
    lattice: &'static str,
    family: &'static str,
    time: f64,
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    time_unit: &'static str,
    config: &'a ExperimentConfig,
    spectrum: SpectrumSummary,
    predicted_t_eq: f64,
    gge: Option<GgeSummary>,
    energetics: Option<EnergeticsSummary>,
    equilibration: Vec<EquilibrationSummary>,
    ttm: Option<TtmSummary>,
    thermometry: ThermometrySummary,
    profiles: Vec<ProfileEntry>,
    outputs: Vec<String>,
}

const TOOL: &str = "glocal";
const VERSION: &str = env!("CARGO_PKG_VERSION");
const TIME_UNIT: &str = "omega_a * t";

/// Everything measured at one grid time.
struct Sample {
    readings: Vec<ThermometryReading>,
    canonical: [f64; 2],
    global: [Option<ThermometryReading>; 2],
    energy: EnergySplit,
    d_gge: Vec<f64>,
}

/// Per-subsystem global site lists and GGE marginals.
struct Probes {
    global_sites: Vec<Vec<usize>>,
    gge_marginals: Option<Vec<CovarianceMatrix>>,
}

fn sample(exp: &Experiment, quench: &Quench, probes: &Probes, k: usize, wt: f64) -> Result<Sample, CliError> {
    let cfg = &exp.config;
    let t = cfg.physical_time(wt);
    let mut readings = Vec::with_capacity(cfg.subsystems.len());
    let mut d_gge = Vec::with_capacity(cfg.subsystems.len());
    for (i, s) in cfg.subsystems.iter().enumerate() {
        let sigma = quench.evolution().marginal_at(t, &probes.global_sites[i])?;
        readings.push(exp.read(s.lattice.side(), &sigma, &s.sites)?);
        d_gge.push(match &probes.gge_marginals {
            Some(m) => bures_distance(&sigma, &m[i])?,
            None => f64::NAN,
        });
    }
    let energy = quench.energies(t);
    let mut canonical = [f64::NAN; 2];
    let mut global = [None, None];
    for (j, side) in SIDES.into_iter().enumerate() {
        if cfg.diagnostics.canonical {
            let e = if side == Side::A { energy.e_a } else { energy.e_b };
            canonical[j] = exp.thermometer(side).canonical_from_energy(e)?;
        }
        if cfg.diagnostics.global_thermality && k % cfg.diagnostics.global_stride == 0 {
            global[j] = Some(exp.read_global(side, &quench.lattice_state(t, side)?)?);
        }
    }
    Ok(Sample { readings, canonical, global, energy, d_gge })
}

fn trajectory_header(cfg: &ExperimentConfig) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for s in &cfg.subsystems {
        for q in ["f_max", "t_eff", "d_min"] {
            h.push(format!("{q}_{}", s.name));
        }
    }
    for side in SIDES {
        h.push(format!("t_eff_can_{}", side_name(side)));
        h.push(format!("f_global_{}", side_name(side)));
    }
    for c in ["E_A", "E_B", "E_int", "Qdot_A", "Qdot_B", "Edot_int"] {
        h.push(c.to_string());
    }
    for s in &cfg.subsystems {
        h.push(format!("d_gge_{}", s.name));
    }
    h
}

fn series_index(cfg: &ExperimentConfig, name: &Option<String>) -> Option<usize> {
    name.as_ref().and_then(|n| cfg.subsystems.iter().position(|s| &s.name == n))
}

/// The full pipeline behind `run`.
pub fn run(config: ExperimentConfig) -> Result<OutputSet, CliError> {
    let exp = Experiment::build(config)?;
    let cfg = &exp.config;
    let spectrum = exp.spectrum()?;
    info!(
        "{} normal modes, Ω ∈ [{:.6}, {:.6}], largest degeneracy {}",
        spectrum.modes, spectrum.omega_min, spectrum.omega_max, spectrum.max_degeneracy
    );
    let quench = exp.quench()?;
    let gge = if cfg.diagnostics.gge { Some(exp.gge()?) } else { None };

    let global_sites = cfg
        .subsystems
        .iter()
        .map(|s| exp.system.global_sites(s.lattice.side(), &s.sites))
        .collect::<Result<Vec<_>, _>>()?;
    let gge_marginals = match &gge {
        Some(g) => Some(global_sites.iter().map(|s| gge_marginal(g, s)).collect::<Result<Vec<_>, _>>()?),
        None => None,
    };
    let probes = Probes { global_sites, gge_marginals };

    let grid = cfg.time.grid();
    info!("sampling {} times up to ω_A t = {}", grid.len(), cfg.time.t_max);
    let samples: Vec<Sample> = grid
        .par_iter()
        .enumerate()
        .map(|(k, &wt)| sample(&exp, &quench, &probes, k, wt))
        .collect::<Result<_, _>>()?;

    let physical: Vec<f64> = grid.iter().map(|&wt| cfg.physical_time(wt)).collect();
    let splits: Vec<EnergySplit> = samples.iter().map(|s| s.energy).collect();
    let ledger = if cfg.diagnostics.energetics { Some(EnergyLedger::from_splits(&physical, &splits)?) } else { None };

    let (ia, ib) = (series_index(cfg, &cfg.ttm.subsystem_a), series_index(cfg, &cfg.ttm.subsystem_b));
    let teff = |i: usize| -> Vec<f64> { samples.iter().map(|s| s.readings[i].t_eff).collect() };

    let mut out = OutputSet::default();

    let mut rows = Vec::with_capacity(samples.len());
    for (k, s) in samples.iter().enumerate() {
        let mut row = vec![fmt_float(grid[k])];
        for r in &s.readings {
            row.extend([fmt_float(r.f_max), fmt_float(r.t_eff), fmt_float(r.d_min)]);
        }
        for j in 0..2 {
            row.push(fmt_float(s.canonical[j]));
            row.push(fmt_float(s.global[j].map_or(f64::NAN, |g| g.f_max)));
        }
        row.extend([fmt_float(s.energy.e_a), fmt_float(s.energy.e_b), fmt_float(s.energy.e_int)]);
        match &ledger {
            Some(l) => row.extend([fmt_float(l.qdot_a[k]), fmt_float(l.qdot_b[k]), fmt_float(l.edot_int[k])]),
            None => row.extend(std::iter::repeat_n(fmt_float(f64::NAN), 3)),
        }
        row.extend(s.d_gge.iter().map(|&d| fmt_float(d)));
        rows.push(row);
    }
    out.add_csv("trajectory.csv", &trajectory_header(cfg), &rows)?;

    let mut profiles = Vec::new();
    for (i, &wt) in cfg.profile.times.iter().enumerate() {
        let t = cfg.physical_time(wt);
        for side in SIDES {
            let spec = if side == Side::A { &exp.system.spec_a } else { &exp.system.spec_b };
            let sigma_x = quench.lattice_state(t, side)?;
            let n = spec.num_sites();
            let families: [(&'static str, &'static str, Vec<Vec<usize>>); 2] = [
                ("sites", "nu", sliding_windows(n, cfg.profile.sliding_size)),
                ("sizes", "n_s", growing_windows(spec, cfg.profile.growing_max)),
            ];
            for (family, key, windows) in families {
                if windows.is_empty() {
                    continue;
                }
                let readings: Vec<ThermometryReading> = windows
                    .par_iter()
                    .map(|w| {
                        let m = glocal_core::gaussian::marginal(&sigma_x, w)?;
                        exp.read(side, &m, w)
                    })
                    .collect::<Result<_, _>>()?;
                let rows: Vec<Vec<String>> = windows
                    .iter()
                    .zip(&readings)
                    .map(|(w, r)| {
                        let id = if family == "sites" { w[0] } else { w.len() };
                        vec![id.to_string(), fmt_float(r.f_max), fmt_float(r.t_eff)]
                    })
                    .collect();
                let file = format!("profile_{}_{family}_{i}.csv", side_name(side));
                out.add_csv(&file, &[key.to_string(), "f_max".into(), "t_eff".into()], &rows)?;
                profiles.push(ProfileEntry { file, lattice: side_name(side), family, time: wt });
            }
        }
    }

    let mut equilibration = Vec::new();
    if gge.is_some() && !cfg.subsystems.is_empty() {
        let mut reports: Vec<(String, EquilibrationReport)> = Vec::new();
        for (i, s) in cfg.subsystems.iter().enumerate() {
            let d: Vec<f64> = samples.iter().map(|x| x.d_gge[i]).collect();
            let r = detect_equilibration(&d, &grid, cfg.tolerances.epsilon, cfg.tolerances.sustain_window)?;
            equilibration.push(EquilibrationSummary {
                subsystem: s.name.clone(),
                t_eq: r.t_eq,
                t_rec: r.t_rec,
                window_fraction: r.window_fraction,
            });
            reports.push((s.name.clone(), r));
        }
        #[derive(Serialize)]
        struct Entry<'a> {
            subsystem: &'a str,
            report: &'a EquilibrationReport,
        }
        let entries: Vec<Entry> = reports.iter().map(|(n, r)| Entry { subsystem: n, report: r }).collect();
        out.add_json("equilibration.json", &entries)?;
    }

    let mut ttm = None;
    let mut backflow = Vec::new();
    if let (Some(ia), Some(ib)) = (ia, ib) {
        let (ta, tb) = (teff(ia), teff(ib));
        if let Some(l) = &ledger {
            backflow = (0..grid.len())
                .filter(|&k| l.qdot_a[k] * (tb[k] - ta[k]) < 0.0 && (tb[k] - ta[k]).abs() > 0.0)
                .collect();
        }
        if cfg.diagnostics.ttm {
            let th_a = exp.thermometer(Side::A);
            let th_b = exp.thermometer(Side::B);
            let d = ttm_consistency(&physical, &ta, &tb, |x| th_a.heat_capacity(x), |x| th_b.heat_capacity(x))?;
            let rows: Vec<Vec<String>> = (0..grid.len())
                .map(|k| {
                    let (j, kk) = if d.degenerate { (f64::NAN, f64::NAN) } else { (d.j[k], d.k[k]) };
                    vec![fmt_float(grid[k]), fmt_float(ta[k]), fmt_float(tb[k]), fmt_float(j), fmt_float(kk)]
                })
                .collect();
            let header: Vec<String> = ["t", "t_a", "t_b", "j", "k"].map(String::from).to_vec();
            out.add_csv("ttm.csv", &header, &rows)?;
            ttm = Some(TtmSummary {
                subsystem_a: cfg.subsystems[ia].name.clone(),
                subsystem_b: cfg.subsystems[ib].name.clone(),
                monotone: d.monotone,
                degenerate: d.degenerate,
                negative_rate_samples: d.negative.len(),
            });
        }
    }

    let energetics = ledger.as_ref().map(|l| {
        let below = (0..grid.len())
            .filter(|&k| l.edot_int[k].abs() < l.qdot_a[k].abs().max(l.qdot_b[k].abs()))
            .count();
        EnergeticsSummary {
            conservation_error: l.conservation_error(),
            interaction_flow_below_heat_flow: below as f64 / grid.len() as f64,
            backflow_samples: backflow.clone(),
        }
    });

    let all_readings: Vec<&ThermometryReading> = samples
        .iter()
        .flat_map(|s| s.readings.iter().chain(s.global.iter().flatten()))
        .collect();
    let pinned = all_readings.iter().filter(|r| r.pinned).count();
    if pinned > 0 {
        warn!("{pinned} thermometry readings stayed pinned to the bracket after widening");
    }

    let mut outputs = out.names();
    outputs.push("run_metadata.json".into());
    let meta = RunMetadata {
        tool: TOOL,
        version: VERSION,
        command: "run",
        time_unit: TIME_UNIT,
        config: cfg,
        spectrum,
        predicted_t_eq: exp.predicted_t_eq()?,
        gge: gge.as_ref().map(GgeSummary::from),
        energetics,
        equilibration,
        ttm,
        thermometry: ThermometrySummary { readings: all_readings.len(), pinned },
        profiles,
        outputs,
    };
    out.add_json("run_metadata.json", &meta)?;
    Ok(out)
}

/// `spectrum`: normal modes and degeneracy report only.
pub fn spectrum(config: ExperimentConfig) -> Result<OutputSet, CliError> {
    let exp = Experiment::build(config)?;
    #[derive(Serialize)]
    struct Doc<'a> {
        tool: &'static str,
        version: &'static str,
        command: &'static str,
        config: &'a ExperimentConfig,
        spectrum: SpectrumSummary,
        omega: Vec<f64>,
        omega_a: Vec<f64>,
        omega_b: Vec<f64>,
    }
    let doc = Doc {
        tool: TOOL,
        version: VERSION,
        command: "spectrum",
        config: &exp.config,
        spectrum: exp.spectrum()?,
        omega: exp.system.basis_total.omega.to_vec(),
        omega_a: exp.system.basis_a.omega.to_vec(),
        omega_b: exp.system.basis_b.omega.to_vec(),
    };
    let mut out = OutputSet::default();
    out.add_json("spectrum.json", &doc)?;
    Ok(out)
}

/// `gge`: generalized temperatures and charge residuals only.
pub fn gge(config: ExperimentConfig) -> Result<OutputSet, CliError> {
    let exp = Experiment::build(config)?;
    let g = exp.gge()?;
    #[derive(Serialize)]
    struct Doc<'a> {
        tool: &'static str,
        version: &'static str,
        command: &'static str,
        config: &'a ExperimentConfig,
        spectrum: SpectrumSummary,
        omega: Vec<f64>,
        gge: GgeSummary,
    }
    let doc = Doc {
        tool: TOOL,
        version: VERSION,
        command: "gge",
        config: &exp.config,
        spectrum: exp.spectrum()?,
        omega: g.basis.omega.to_vec(),
        gge: GgeSummary::from(&g),
    };
    let mut out = OutputSet::default();
    out.add_json("gge.json", &doc)?;
    Ok(out)
}

/// `scan`: global and subsystem thermometry at one time for each value of a parameter.
pub fn scan(config: ExperimentConfig) -> Result<OutputSet, CliError> {
    let Some(sc) = config.scan.clone() else {
        return Err(CliError::Config("the scan command needs a [scan] section".into()));
    };
    let mut header = vec![scan_column(sc.parameter).to_string()];
    for side in SIDES {
        header.push(format!("f_global_{}", side_name(side)));
        header.push(format!("t_global_{}", side_name(side)));
    }
    for s in &config.subsystems {
        header.push(format!("f_max_{}", s.name));
        header.push(format!("t_eff_{}", s.name));
    }
    #[derive(Serialize)]
    struct Point {
        value: f64,
        stable: bool,
        omega_min: Option<f64>,
        omega_max: Option<f64>,
    }
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &value in &sc.values {
        let cfg = config.with_parameter(sc.parameter, value);
        info!("scan {} = {value}", scan_column(sc.parameter));
        let exp = match Experiment::build(cfg) {
            Ok(e) => e,
            Err(CliError::Numeric(glocal_core::Error::Unstable { min_eigenvalue })) => {
                warn!("skipping unstable point {value} (λ_min(V) = {min_eigenvalue:e})");
                let mut row = vec![fmt_float(value)];
                row.extend(std::iter::repeat_n(fmt_float(f64::NAN), header.len() - 1));
                rows.push(row);
                points.push(Point { value, stable: false, omega_min: None, omega_max: None });
                continue;
            }
            Err(e) => return Err(e),
        };
        let quench = exp.quench()?;
        let t = exp.config.physical_time(sc.time);
        let globals: Vec<ThermometryReading> = SIDES
            .par_iter()
            .map(|&side| exp.read_global(side, &quench.lattice_state(t, side)?))
            .collect::<Result<_, _>>()?;
        let locals: Vec<ThermometryReading> = exp
            .config
            .subsystems
            .par_iter()
            .map(|s| exp.read(s.lattice.side(), &quench.marginal(t, s.lattice.side(), &s.sites)?, &s.sites))
            .collect::<Result<_, _>>()?;
        let mut row = vec![fmt_float(value)];
        for r in globals.iter().chain(&locals) {
            row.push(fmt_float(r.f_max));
            row.push(fmt_float(r.t_eff));
        }
        rows.push(row);
        let w = &exp.system.basis_total.omega;
        points.push(Point { value, stable: true, omega_min: Some(w[0]), omega_max: Some(w[w.len() - 1]) });
    }
    let mut out = OutputSet::default();
    out.add_csv("scan.csv", &header, &rows)?;
    #[derive(Serialize)]
    struct Doc<'a> {
        tool: &'static str,
        version: &'static str,
        command: &'static str,
        time_unit: &'static str,
        config: &'a ExperimentConfig,
        points: Vec<Point>,
        outputs: Vec<String>,
    }
    let mut outputs = out.names();
    outputs.push("run_metadata.json".into());
    let doc =
        Doc { tool: TOOL, version: VERSION, command: "scan", time_unit: TIME_UNIT, config: &config, points, outputs };
    out.add_json("run_metadata.json", &doc)?;
    Ok(out)
}

fn scan_column(p: ScanParameter) -> &'static str {
    match p {
        ScanParameter::Lambda => "lambda",
        ScanParameter::LambdaRatio => "lambda_ratio",
        ScanParameter::TA => "t_a",
        ScanParameter::TB => "t_b",
    }
}

/// One line of the invariant suite.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, pass: value <= threshold }
    }
}

/// Structural invariants of the configured system and its quench.
pub fn invariant_checks(exp: &Experiment, times: &[f64]) -> Result<Vec<Check>, CliError> {
    let sys = &exp.system;
    let v = &sys.v_total.entries;
    let v_norm = max_abs(&v.view());
    let mut checks = vec![
        Check::new("symplectic residual of S", symplectic_residual(&sys.basis_total.symplectic.view()), 1e-10),
        Check::new(
            "Williamson residual / max|V|",
            williamson_residual(&sys.basis_total, v) / v_norm,
            1e-10,
        ),
    ];
    let quench = exp.quench()?;
    let e0 = quench.energies(0.0).total();
    let spec0 = symplectic_eigenvalues(&quench.state(0.0))?;
    let mut prop = 0.0_f64;
    let mut energy = 0.0_f64;
    let mut spectrum = 0.0_f64;
    for &t in times {
        prop = prop.max(symplectic_residual(&propagator(&sys.basis_total, t).view()));
        energy = energy.max((quench.energies(t).total() - e0).abs() / e0.abs());
        let nu = symplectic_eigenvalues(&quench.state(t))?;
        spectrum = spectrum.max(nu.iter().zip(&spec0).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())));
    }
    checks.push(Check::new("symplectic residual of E(t)", prop, 1e-10));
    checks.push(Check::new("relative energy drift", energy, 1e-10));
    checks.push(Check::new("symplectic spectrum drift", spectrum, 1e-9));
    Ok(checks)
}

/// `validate`: the invariant suite on the configured system.
pub fn validate(config: ExperimentConfig) -> Result<(OutputSet, bool), CliError> {
    let exp = Experiment::build(config)?;
    let grid = exp.config.time.grid();
    let picks = [0, grid.len() / 2, grid.len() - 1];
    let times: Vec<f64> = picks.iter().map(|&k| exp.config.physical_time(grid[k])).collect();
    let checks = invariant_checks(&exp, &times)?;
    let ok = checks.iter().all(|c| c.pass);
    for c in &checks {
        info!("{} {}: {:e} (limit {:e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
    }
    #[derive(Serialize)]
    struct Doc<'a> {
        tool: &'static str,
        version: &'static str,
        command: &'static str,
        config: &'a ExperimentConfig,
        checks: &'a [Check],
        pass: bool,
    }
    let mut out = OutputSet::default();
    out.add_json(
        "validate.json",
        &Doc { tool: TOOL, version: VERSION, command: "validate", config: &exp.config, checks: &checks, pass: ok },
    )?;
    Ok((out, ok))
}
