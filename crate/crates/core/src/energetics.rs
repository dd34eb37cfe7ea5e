//! Energy bookkeeping, heat flows, the energy-balance equilibrium
//! temperature, and two-temperature-model rate diagnostics.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::CovarianceMatrix;
use crate::thermometry::{excess_thermal_energy, temperature_for_excess_energy};

/// Gap floor below which `|T_A − T_B|` counts as zero.
pub const DEGENERATE_GAP: f64 = 1e-12;

/// Tolerance on `|ΔT|` increases before a trajectory counts as non-monotone.
pub const MONOTONE_NOISE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergySplit {
    pub e_a: f64,
    pub e_b: f64,
    pub e_int: f64,
}

impl EnergySplit {
    pub fn total(&self) -> f64 {
        self.e_a + self.e_b + self.e_int
    }
}

/// `E_X = ½(tr(V_X σ_qq,X) + tr σ_pp,X)` and `E_int = tr(V_int σ_qq,AB)`.
/// The interaction energy is not shared out between the lattices.
pub fn energy_split(
    sigma: &CovarianceMatrix,
    v_a: &Array2<f64>,
    v_b: &Array2<f64>,
    v_int: &Array2<f64>,
) -> Result<EnergySplit> {
    let (na, nb) = (v_a.nrows(), v_b.nrows());
    let n = na + nb;
    if sigma.modes() != n || v_int.dim() != (na, nb) {
        return Err(Error::DimensionMismatch(format!(
            "state with {} modes for blocks {na} + {nb}, interaction {:?}",
            sigma.modes(),
            v_int.dim()
        )));
    }
    let m = sigma.as_array();
    let frob = |a: &Array2<f64>, b: ndarray::ArrayView2<f64>| -> f64 { a.iter().zip(b.iter()).map(|(x, y)| x * y).sum() };
    let e_a = 0.5 * (frob(v_a, m.slice(s![..na, ..na])) + m.slice(s![n..n + na, n..n + na]).diag().sum());
    let e_b = 0.5 * (frob(v_b, m.slice(s![na..n, na..n])) + m.slice(s![n + na.., n + na..]).diag().sum());
    let e_int = frob(v_int, m.slice(s![..na, na..n]));
    Ok(EnergySplit { e_a, e_b, e_int })
}

/// Finite-difference derivative on a uniform grid: centred second order in
/// the interior and second-order one-sided at the ends.
pub fn derivative(times: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    let n = times.len();
    if values.len() != n {
        return Err(Error::DimensionMismatch(format!("{} values on {n} times", values.len())));
    }
    if n < 3 {
        return Err(Error::InvalidSpec(format!("need at least 3 samples to differentiate, got {n}")));
    }
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(h > 0.0) || times.iter().enumerate().any(|(i, &t)| (t - times[0] - h * i as f64).abs() > 1e-9 * h.max(times[n - 1].abs())) {
        return Err(Error::InvalidSpec("finite differences need a uniform ascending grid".into()));
    }
    let mut out = vec![0.0; n];
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
    out[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h);
    for i in 1..n - 1 {
        out[i] = (values[i + 1] - values[i - 1]) / (2.0 * h);
    }
    Ok(out)
}

/// Energies and their rates along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    pub e_a: Vec<f64>,
    pub e_b: Vec<f64>,
    pub e_int: Vec<f64>,
    pub e_total: Vec<f64>,
    pub qdot_a: Vec<f64>,
    pub qdot_b: Vec<f64>,
    pub edot_int: Vec<f64>,
}

impl EnergyLedger {
    pub fn from_splits(times: &[f64], splits: &[EnergySplit]) -> Result<Self> {
        let e_a: Vec<f64> = splits.iter().map(|s| s.e_a).collect();
        let e_b: Vec<f64> = splits.iter().map(|s| s.e_b).collect();
        let e_int: Vec<f64> = splits.iter().map(|s| s.e_int).collect();
        Ok(Self {
            times: times.to_vec(),
            qdot_a: derivative(times, &e_a)?,
            qdot_b: derivative(times, &e_b)?,
            edot_int: derivative(times, &e_int)?,
            e_total: splits.iter().map(EnergySplit::total).collect(),
            e_a,
            e_b,
            e_int,
        })
    }

    /// Largest `|E_total(t) − E_total(0)| / |E_total(0)|`.
    pub fn conservation_error(&self) -> f64 {
        let e0 = self.e_total.first().copied().unwrap_or(0.0);
        self.e_total.iter().fold(0.0_f64, |m, e| m.max((e - e0).abs())) / e0.abs().max(f64::MIN_POSITIVE)
    }
}

/// Common temperature at which both lattices' Gibbs energies add up to the
/// initial total, `⟨H_A⟩_{T_eq} + ⟨H_B⟩_{T_eq} = ⟨H_A⟩_{T_A} + ⟨H_B⟩_{T_B}`.
/// The zero-point energies cancel, so only the excess energies enter.
pub fn predict_teq(omega_a: &Array1<f64>, omega_b: &Array1<f64>, t_a: f64, t_b: f64) -> Result<f64> {
    if !(t_a >= 0.0 && t_b >= 0.0) {
        return Err(Error::InvalidSpec(format!("temperatures must be non-negative, got {t_a}, {t_b}")));
    }
    let target = excess_thermal_energy(omega_a, t_a) + excess_thermal_energy(omega_b, t_b);
    let both = concatenate![Axis(0), omega_a.view(), omega_b.view()];
    temperature_for_excess_energy(&both, target)
}

/// Rate-equation diagnostics for measured temperature trajectories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TtmDiagnostics {
    /// `|T_A − T_B|` never grows by more than the noise floor.
    pub monotone: bool,
    /// `J(t) = −d ln|T_A − T_B| / dt`.
    pub j: Vec<f64>,
    /// `k(t) = J / (1/C_A + 1/C_B)`.
    pub k: Vec<f64>,
    /// Sample indices where `J < 0`, which no positive rate can produce.
    pub negative: Vec<usize>,
    /// `T_A = T_B` throughout: `J` is undefined.
    pub degenerate: bool,
}

/// Reverse-engineers the two-temperature-model rates from `T_A(t)`, `T_B(t)`.
pub fn ttm_consistency(
    times: &[f64],
    t_a: &[f64],
    t_b: &[f64],
    c_a: impl Fn(f64) -> f64,
    c_b: impl Fn(f64) -> f64,
) -> Result<TtmDiagnostics> {
    if t_a.len() != times.len() || t_b.len() != times.len() {
        return Err(Error::DimensionMismatch("temperature series must match the time grid".into()));
    }
    let gap: Vec<f64> = t_a.iter().zip(t_b).map(|(a, b)| (a - b).abs()).collect();
    if gap.iter().all(|&g| g <= DEGENERATE_GAP) {
        return Ok(TtmDiagnostics { monotone: true, j: Vec::new(), k: Vec::new(), negative: Vec::new(), degenerate: true });
    }
    let monotone = gap.windows(2).all(|w| w[1] <= w[0] + MONOTONE_NOISE_FLOOR);
    let ln_gap: Vec<f64> = gap.iter().map(|g| g.max(DEGENERATE_GAP).ln()).collect();
    let j: Vec<f64> = derivative(times, &ln_gap)?.into_iter().map(|d| -d).collect();
    let k: Vec<f64> = j
        .iter()
        .zip(t_a.iter().zip(t_b))
        .map(|(&j, (&ta, &tb))| j / (1.0 / c_a(ta) + 1.0 / c_b(tb)))
        .collect();
    let negative = j.iter().enumerate().filter(|(_, &v)| v < 0.0).map(|(i, _)| i).collect();
    Ok(TtmDiagnostics { monotone, j, k, negative, degenerate: false })
}
