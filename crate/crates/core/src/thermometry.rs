//! g-local thermometry: distances of subsystem states to mean-force Gibbs
//! marginals, the temperature that minimises them, and related estimators.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{
    gaussian_ln_root_fidelity, mean_energy, thermal_covariance, thermal_marginal, williamson_from_potential,
    CovarianceMatrix, NormalModeBasis,
};
use crate::lattice::LatticeSpec;
use crate::linalg::symmetrize;
use crate::optimize::{minimize, ScanSettings};

/// Temperature search interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::InvalidSpec(format!("temperature bracket must satisfy 0 < lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// `[1e-3, 1e3] · t`.
    pub fn around(t: f64) -> Result<Self> {
        Self::new(1e-3 * t, 1e3 * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermometryReading {
    pub t_eff: f64,
    pub d_min: f64,
    pub f_max: f64,
    pub iterations: usize,
    pub bracket: Bracket,
    /// The optimum sits on an end of the bracket; widen it and retry.
    pub pinned: bool,
}

impl ThermometryReading {
    fn from_root_fidelity(t: f64, root: f64, iterations: usize, bracket: Bracket, pinned: bool) -> Self {
        let root = root.clamp(0.0, 1.0);
        Self {
            t_eff: t,
            d_min: (2.0 - 2.0 * root).max(0.0).sqrt(),
            f_max: root * root,
            iterations,
            bracket,
            pinned,
        }
    }
}

/// Mean-force marginal `τ_s^MF(T)` of the Gibbs state of `V_X`.
pub fn mean_force_covariance(v_x: &Array2<f64>, temperature: f64, sites: &[usize]) -> Result<CovarianceMatrix> {
    let basis = williamson_from_potential(v_x)?;
    thermal_marginal(&basis, temperature, sites)
}

/// `C(T) = Σ (Ω/2T)² / sinh²(Ω/2T)`.
pub fn heat_capacity(omega: &Array1<f64>, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    omega
        .iter()
        .map(|&w| {
            let x = w / (2.0 * temperature);
            if x > 30.0 {
                4.0 * x * x * (-2.0 * x).exp()
            } else {
                (x / x.sinh()).powi(2)
            }
        })
        .sum()
}

/// Thermal energy above the zero point, `Σ Ω / (e^{Ω/T} − 1)`.
pub fn excess_thermal_energy(omega: &Array1<f64>, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    omega.iter().map(|&w| w / (w / temperature).exp_m1()).sum()
}

/// Temperature at which the Gibbs state of `omega` holds `excess` energy
/// above its zero point. Bisection in `ln T`.
pub fn temperature_for_excess_energy(omega: &Array1<f64>, excess: f64) -> Result<f64> {
    if !excess.is_finite() {
        return Err(Error::Numeric(format!("energy {excess} is not finite")));
    }
    let scale = omega.iter().fold(0.0_f64, |m, w| m.max(*w));
    if excess < -1e-12 * scale * omega.len() as f64 {
        return Err(Error::Unphysical(format!("energy lies {} below the zero point", -excess)));
    }
    if excess <= 0.0 {
        return Ok(0.0);
    }
    let mut hi = scale.max(excess);
    while excess_thermal_energy(omega, hi) < excess {
        hi *= 2.0;
    }
    let mut lo = hi;
    while excess_thermal_energy(omega, lo) > excess {
        lo *= 0.5;
        if lo < 1e-300 {
            return Ok(0.0);
        }
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        let e = excess_thermal_energy(omega, mid.exp());
        if (e - excess).abs() <= 1e-13 * excess {
            return Ok(mid.exp());
        }
        if e < excess {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// Effective canonical temperature: the Gibbs temperature of `V_X` whose
/// mean energy equals that of `σ_X`.
pub fn canonical_t_eff(sigma_x: &CovarianceMatrix, v_x: &Array2<f64>) -> Result<f64> {
    Thermometer::new(v_x)?.canonical(sigma_x)
}

/// Contiguous windows of `size` sites, sliding by one along the site order.
pub fn sliding_windows(n_sites: usize, size: usize) -> Vec<Vec<usize>> {
    if size == 0 || size > n_sites {
        return Vec::new();
    }
    (0..=n_sites - size).map(|s| (s..s + size).collect()).collect()
}

/// Centred windows of sizes `1..=max_size`.
pub fn growing_windows(spec: &LatticeSpec, max_size: usize) -> Vec<Vec<usize>> {
    (1..=max_size.min(spec.num_sites())).map(|k| spec.centered_window(k)).collect()
}

/// Thermometer for one lattice: holds the normal modes of `V_X` so that
/// mean-force marginals are cheap to re-evaluate.
#[derive(Debug, Clone)]
pub struct Thermometer {
    basis: Arc<NormalModeBasis>,
    settings: ScanSettings,
}

impl Thermometer {
    pub fn new(v_x: &Array2<f64>) -> Result<Self> {
        Ok(Self::from_basis(Arc::new(williamson_from_potential(v_x)?)))
    }

    pub fn from_basis(basis: Arc<NormalModeBasis>) -> Self {
        Self { basis, settings: ScanSettings::default() }
    }

    pub fn with_settings(mut self, settings: ScanSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn basis(&self) -> &NormalModeBasis {
        &self.basis
    }

    pub fn mean_force(&self, temperature: f64, sites: &[usize]) -> Result<CovarianceMatrix> {
        thermal_marginal(&self.basis, temperature, sites)
    }

    /// `T_eff = argmin_T D[σ_s, τ_s^MF(T)]`, searched over `ln T`.
    pub fn estimate(&self, sigma_s: &CovarianceMatrix, sites: &[usize], bracket: Bracket) -> Result<ThermometryReading> {
        if sigma_s.modes() != sites.len() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} modes but the subsystem lists {} sites",
                sigma_s.modes(),
                sites.len()
            )));
        }
        let rows = self.basis.rows_for(sites)?;
        let objective = |ln_t: f64| -> Result<f64> {
            let r = self.basis.omega.mapv(|w| crate::gaussian::thermal_occupation(w, ln_t.exp()));
            let d = ndarray::concatenate![ndarray::Axis(0), r, r];
            let mut tau = (&rows * &d.view().insert_axis(ndarray::Axis(0))).dot(&rows.t());
            symmetrize(&mut tau);
            let tau = CovarianceMatrix::new(tau)?;
            Ok(-gaussian_ln_root_fidelity(sigma_s, &tau)?)
        };
        let m = minimize(objective, bracket.lo.ln(), bracket.hi.ln(), self.settings)?;
        Ok(ThermometryReading::from_root_fidelity(m.x.exp(), (-m.value).exp(), m.evaluations, bracket, m.pinned))
    }

    /// Best Gibbs-state fidelity for the whole lattice. The state is moved to
    /// the normal frame of `V_X` first, where every Gibbs state is diagonal.
    pub fn global(&self, sigma_x: &CovarianceMatrix, bracket: Bracket) -> Result<ThermometryReading> {
        let n = self.basis.modes();
        if sigma_x.modes() != n {
            return Err(Error::DimensionMismatch(format!("state has {} modes, lattice has {n}", sigma_x.modes())));
        }
        let s_inv = self.basis.inverse_symplectic();
        let mut normal = s_inv.dot(sigma_x.as_array()).dot(&s_inv.t());
        symmetrize(&mut normal);
        let normal = CovarianceMatrix::new(normal)?;
        let objective = |ln_t: f64| -> Result<f64> {
            let r = self.basis.omega.mapv(|w| crate::gaussian::thermal_occupation(w, ln_t.exp()));
            let d = ndarray::concatenate![ndarray::Axis(0), r, r];
            let tau = CovarianceMatrix::new(Array2::from_diag(&d))?;
            Ok(-gaussian_ln_root_fidelity(&normal, &tau)?)
        };
        let m = minimize(objective, bracket.lo.ln(), bracket.hi.ln(), self.settings)?;
        Ok(ThermometryReading::from_root_fidelity(m.x.exp(), (-m.value).exp(), m.evaluations, bracket, m.pinned))
    }

    /// Effective canonical temperature of a full-lattice state.
    pub fn canonical(&self, sigma_x: &CovarianceMatrix) -> Result<f64> {
        let n = self.basis.modes();
        if sigma_x.modes() != n {
            return Err(Error::DimensionMismatch(format!("state has {} modes, lattice has {n}", sigma_x.modes())));
        }
        // energy in the normal frame avoids re-deriving V from the basis
        let s_inv = self.basis.inverse_symplectic();
        let normal = s_inv.dot(sigma_x.as_array()).dot(&s_inv.t());
        let energy: f64 = (0..n).map(|k| 0.5 * self.basis.omega[k] * (normal[[k, k]] + normal[[n + k, n + k]])).sum();
        self.canonical_from_energy(energy)
    }

    /// Temperature whose Gibbs state of this lattice has mean energy `energy`.
    pub fn canonical_from_energy(&self, energy: f64) -> Result<f64> {
        temperature_for_excess_energy(&self.basis.omega, energy - self.basis.zero_point_energy())
    }

    /// One reading per subsystem of `family`, each from the marginal of `σ_X`.
    pub fn profile(
        &self,
        sigma_x: &CovarianceMatrix,
        family: &[Vec<usize>],
        bracket: Bracket,
    ) -> Result<Vec<ThermometryReading>> {
        family
            .iter()
            .map(|sites| self.estimate(&crate::gaussian::marginal(sigma_x, sites)?, sites, bracket))
            .collect()
    }

    pub fn heat_capacity(&self, temperature: f64) -> f64 {
        heat_capacity(&self.basis.omega, temperature)
    }
}

/// Global Gibbs fidelity and its optimal temperature.
pub fn global_thermality(sigma_x: &CovarianceMatrix, v_x: &Array2<f64>, bracket: Bracket) -> Result<(f64, f64)> {
    let r = Thermometer::new(v_x)?.global(sigma_x, bracket)?;
    Ok((r.f_max, r.t_eff))
}

/// Thermometry of a subsystem of a lattice with potential `V_X`.
pub fn estimate_t_eff(
    sigma_s: &CovarianceMatrix,
    v_x: &Array2<f64>,
    sites: &[usize],
    bracket: Bracket,
) -> Result<ThermometryReading> {
    Thermometer::new(v_x)?.estimate(sigma_s, sites, bracket)
}

/// `⟨H_X⟩` of the Gibbs state, used as a cross-check by callers.
pub fn gibbs_energy(v_x: &Array2<f64>, temperature: f64) -> Result<f64> {
    let basis = williamson_from_potential(v_x)?;
    mean_energy(&thermal_covariance(&basis, temperature), v_x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{symplectic_eigenvalues, thermal_energy};
    use crate::lattice::{build_intra_potential, Alpha};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn chain(n: usize, g_ratio: f64) -> Array2<f64> {
        let w: f64 = 1.55;
        build_intra_potential(&LatticeSpec::chain(n, w, g_ratio * w * w, Alpha::Finite(0.5))).unwrap().entries
    }

    #[test]
    fn uncoupled_lattice_reduces_to_local_gibbs() {
        let v = Array2::from_diag(&array![4.0, 4.0, 4.0]);
        let tau = mean_force_covariance(&v, 0.8, &[1]).unwrap();
        let single = thermal_covariance(&williamson_from_potential(&array![[4.0]]).unwrap(), 0.8);
        assert!(crate::linalg::max_abs_diff(&tau.view(), &single.view()) < 1e-14);
    }

    #[test]
    fn whole_lattice_marginal_is_global_state() {
        let v = chain(5, 0.16);
        let b = williamson_from_potential(&v).unwrap();
        let all: Vec<usize> = (0..5).collect();
        let tau = mean_force_covariance(&v, 1.3, &all).unwrap();
        assert!(crate::linalg::max_abs_diff(&tau.view(), &thermal_covariance(&b, 1.3).view()) < 1e-13);
    }

    #[test]
    fn central_pair_of_ten_site_chain_is_physical() {
        let v = chain(10, 0.16);
        let tau = mean_force_covariance(&v, 1.0, &[4, 5]).unwrap();
        assert!(symplectic_eigenvalues(&tau).unwrap().iter().all(|&nu| nu >= 0.5 - 1e-12));
    }

    #[test]
    fn exact_marginal_is_recovered() {
        let v = chain(12, 0.16);
        let th = Thermometer::new(&v).unwrap();
        for (t, sites) in [(1.0, vec![5, 6]), (0.1, vec![0]), (3.7, vec![2, 3, 4])] {
            let sigma = th.mean_force(t, &sites).unwrap();
            let r = th.estimate(&sigma, &sites, Bracket::around(1.0).unwrap()).unwrap();
            assert!((r.t_eff / t - 1.0).abs() < 1e-4, "{t}: {}", r.t_eff);
            assert!(r.d_min <= 1e-6);
            assert!(r.f_max >= 1.0 - 1e-10);
            assert!(!r.pinned);
            let x = 1.0 - 0.5 * r.d_min * r.d_min;
            assert!((r.f_max - x * x).abs() < 1e-12);
        }
    }

    #[test]
    fn global_reading_of_gibbs_state() {
        let v = chain(8, 0.16);
        let th = Thermometer::new(&v).unwrap();
        let sigma = thermal_covariance(th.basis(), 0.4);
        let r = th.global(&sigma, Bracket::around(1.0).unwrap()).unwrap();
        assert!(r.f_max >= 1.0 - 1e-9);
        assert!((r.t_eff - 0.4).abs() < 1e-5);
        assert!((th.canonical(&sigma).unwrap() - 0.4).abs() < 1e-9);
    }

    #[test]
    fn out_of_bracket_temperature_is_pinned() {
        let v = chain(4, 0.16);
        let th = Thermometer::new(&v).unwrap();
        let sigma = th.mean_force(50.0, &[1]).unwrap();
        let r = th.estimate(&sigma, &[1], Bracket::new(0.01, 1.0).unwrap()).unwrap();
        assert!(r.pinned);
    }

    #[test]
    fn readings_are_bit_reproducible() {
        let v = chain(6, 0.16);
        let th = Thermometer::new(&v).unwrap();
        let sigma = th.mean_force(0.7, &[2, 3]).unwrap();
        let b = Bracket::around(1.0).unwrap();
        assert_eq!(th.estimate(&sigma, &[2, 3], b).unwrap(), th.estimate(&sigma, &[2, 3], b).unwrap());
    }

    #[test]
    fn canonical_temperature_limits() {
        let omega = array![0.7, 1.1, 2.0];
        assert_eq!(temperature_for_excess_energy(&omega, 0.0).unwrap(), 0.0);
        assert!(temperature_for_excess_energy(&omega, -1.0).is_err());
        for t in [0.05, 0.3, 2.0, 40.0] {
            let e = excess_thermal_energy(&omega, t);
            assert!((temperature_for_excess_energy(&omega, e).unwrap() / t - 1.0).abs() < 1e-10);
            // excess plus zero point is the full mode sum
            assert!((e + 0.5 * omega.sum() - thermal_energy(&omega, t)).abs() < 1e-12);
        }
    }

    #[test]
    fn heat_capacity_limits_and_finite_difference() {
        let omega = array![0.7, 1.1, 2.0];
        assert!((heat_capacity(&omega, 1e4) - 3.0).abs() < 1e-6);
        assert_eq!(heat_capacity(&omega, 0.0), 0.0);
        assert!(heat_capacity(&array![1.0], 0.01) < 1e-38);
        for t in [0.2, 1.0, 5.0] {
            let h = 1e-4 * t;
            let fd = (thermal_energy(&omega, t + h) - thermal_energy(&omega, t - h)) / (2.0 * h);
            assert!((fd / heat_capacity(&omega, t) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sliding_and_growing_windows() {
        assert_eq!(sliding_windows(4, 2), vec![vec![0, 1], vec![1, 2], vec![2, 3]]);
        assert!(sliding_windows(2, 3).is_empty());
        let spec = LatticeSpec::chain(6, 1.0, 0.1, Alpha::NearestNeighbor);
        assert_eq!(growing_windows(&spec, 3), vec![vec![2], vec![2, 3], vec![1, 2, 3]]);
    }

    #[test]
    fn uniform_gibbs_profile() {
        let v = chain(9, 0.16);
        let th = Thermometer::new(&v).unwrap();
        let sigma = thermal_covariance(th.basis(), 0.6);
        let readings = th.profile(&sigma, &sliding_windows(9, 2), Bracket::around(1.0).unwrap()).unwrap();
        for r in readings {
            assert!((r.t_eff - 0.6).abs() < 1e-4);
            assert!(r.f_max > 1.0 - 1e-10);
        }
        assert_abs_diff_eq!(gibbs_energy(&v, 0.6).unwrap(), thermal_energy(&th.basis().omega, 0.6), epsilon = 1e-12);
    }
}
