//! Generalized Gibbs ensemble of the post-quench Hamiltonian.
//!
//! In normal coordinates the conserved charges are `h_κ = Ω_κ (Q_κ² + P_κ²)/2`.
//! When frequencies coincide, the pair charges `I_kj = Ω (Q_k Q_j + P_k P_j)`
//! are conserved as well; rotating each degenerate block so that the initial
//! state carries no pair charge lets the ensemble keep its product form.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gaussian::{thermal_occupation, CovarianceMatrix, NormalModeBasis};
use crate::linalg::{max_abs, symmetrize};

pub const DEFAULT_DEGENERACY_TOLERANCE: f64 = 1e-8;

/// Mode energies closer than this (relative to `Ω/2`) count as vacuum.
pub const VACUUM_TOLERANCE: f64 = 1e-12;

/// `β_κ Ω_κ` assigned to vacuum-saturated modes.
pub const BETA_CAP: f64 = 1e12;

/// Groups consecutive indices of an ascending spectrum whose neighbouring gaps
/// are at most `tol · max Ω`.
pub fn detect_degeneracies(omega: &Array1<f64>, tol: f64) -> Vec<Vec<usize>> {
    let scale = omega.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for (i, &w) in omega.iter().enumerate() {
        match blocks.last_mut() {
            Some(b) if (w - omega[*b.last().unwrap()]).abs() <= tol * scale => b.push(i),
            _ => blocks.push(vec![i]),
        }
    }
    blocks
}

/// Covariance of the state in the normal coordinates of `basis`.
pub fn normal_covariance(basis: &NormalModeBasis, sigma: &CovarianceMatrix) -> Result<Array2<f64>> {
    if sigma.modes() != basis.modes() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} modes, basis has {}",
            sigma.modes(),
            basis.modes()
        )));
    }
    let s_inv = basis.inverse_symplectic();
    let mut out = s_inv.dot(sigma.as_array()).dot(&s_inv.t());
    symmetrize(&mut out);
    Ok(out)
}

/// Largest `|⟨I_kj⟩|` and `|⟨Ω(Q_k P_j − Q_j P_k)⟩|` over pairs inside degenerate blocks.
pub fn pair_charge_residuals(basis: &NormalModeBasis, normal: &Array2<f64>) -> (f64, f64) {
    let n = basis.modes();
    let (mut sym, mut anti) = (0.0_f64, 0.0_f64);
    for block in basis.degeneracy_partition.iter().filter(|b| b.len() > 1) {
        for (a, &k) in block.iter().enumerate() {
            for &j in &block[a + 1..] {
                let w = 0.5 * (basis.omega[k] + basis.omega[j]);
                sym = sym.max((w * (normal[[k, j]] + normal[[n + k, n + j]])).abs());
                anti = anti.max((w * (normal[[k, n + j]] - normal[[j, n + k]])).abs());
            }
        }
    }
    (sym, anti)
}

/// Rotates each degenerate block so that `σ0` carries no pair charges.
///
/// With `a_k = (Q_k + i P_k)/√2`, the block matrix `C_kj = ⟨a_k† a_j⟩` is
/// Hermitian; diagonalising it as `U D U†` and switching to `ã = Uᵀ a`
/// (real and imaginary parts of `U` acting jointly on the `(Q, P)` pairs)
/// makes both the symmetric and antisymmetric pair charges vanish.
pub fn rotate_degenerate_modes(basis: &NormalModeBasis, sigma0: &CovarianceMatrix) -> Result<NormalModeBasis> {
    let mut out = basis.clone();
    if basis.max_degeneracy() < 2 {
        return Ok(out);
    }
    let n = basis.modes();
    let normal = normal_covariance(basis, sigma0)?;
    let scale = max_abs(&normal.view()).max(1.0);
    for block in basis.degeneracy_partition.iter().filter(|b| b.len() > 1) {
        let m = block.len();
        let mut c = Array2::<Complex64>::zeros((m, m));
        for (a, &k) in block.iter().enumerate() {
            for (b, &j) in block.iter().enumerate() {
                let re = 0.5 * (normal[[k, j]] + normal[[n + k, n + j]]);
                let im = 0.5 * (normal[[k, n + j]] - normal[[j, n + k]]);
                c[[a, b]] = Complex64::new(re, im);
            }
        }
        let herm = c.iter().zip(c.t().iter()).fold(0.0_f64, |acc, (x, y)| acc.max((x - y.conj()).norm()));
        if herm > 1e-10 * scale {
            return Err(Error::Consistency(format!("pair-charge matrix is not Hermitian ({herm:e})")));
        }
        let (_, u) = c.eigh(UPLO::Lower)?;
        // new columns of S:  S̃_Q[:, l] = Σ_k S_Q[:, k] X_kl − S_P[:, k] Y_kl,
        //                    S̃_P[:, l] = Σ_k S_Q[:, k] Y_kl + S_P[:, k] X_kl
        let x = u.mapv(|z| z.re);
        let y = u.mapv(|z| z.im);
        let sq = basis.symplectic.select(ndarray::Axis(1), block);
        let p_idx: Vec<usize> = block.iter().map(|&k| n + k).collect();
        let sp = basis.symplectic.select(ndarray::Axis(1), &p_idx);
        let new_q = sq.dot(&x) - sp.dot(&y);
        let new_p = sq.dot(&y) + sp.dot(&x);
        for (l, &k) in block.iter().enumerate() {
            out.symplectic.column_mut(k).assign(&new_q.column(l));
            out.symplectic.column_mut(n + k).assign(&new_p.column(l));
        }
    }
    Ok(out)
}

/// Generalized inverse temperatures of a (possibly rotated) basis.
#[derive(Debug, Clone)]
pub struct GeneralizedTemperatures {
    pub beta: Array1<f64>,
    /// Initial mode energies `⟨h_κ⟩`.
    pub mode_energy: Array1<f64>,
    /// Modes whose `β` was capped because they sit in their ground state.
    pub capped: Vec<usize>,
}

/// `β_κ = (2/Ω_κ) artanh(Ω_κ / 2⟨h_κ⟩)`.
pub fn generalized_temperatures(basis: &NormalModeBasis, sigma0: &CovarianceMatrix) -> Result<GeneralizedTemperatures> {
    let normal = normal_covariance(basis, sigma0)?;
    temperatures_from_normal(basis, &normal)
}

fn temperatures_from_normal(basis: &NormalModeBasis, normal: &Array2<f64>) -> Result<GeneralizedTemperatures> {
    let n = basis.modes();
    let mut beta = Array1::zeros(n);
    let mut mode_energy = Array1::zeros(n);
    let mut capped = Vec::new();
    for (k, &w) in basis.omega.iter().enumerate() {
        let h = 0.5 * w * (normal[[k, k]] + normal[[n + k, n + k]]);
        mode_energy[k] = h;
        let excess = h - 0.5 * w;
        if excess < -1e-10 * w {
            return Err(Error::Unphysical(format!("mode {k} has energy {h} below its zero-point {}", 0.5 * w)));
        }
        if excess <= VACUUM_TOLERANCE * w.max(1.0) {
            beta[k] = BETA_CAP / w;
            capped.push(k);
        } else {
            beta[k] = 2.0 / w * (0.5 * w / h).atanh();
        }
    }
    Ok(GeneralizedTemperatures { beta, mode_energy, capped })
}

/// Everything needed to evaluate the GGE and its marginals.
#[derive(Debug, Clone)]
pub struct GgeSpec {
    /// Basis after rotation of the degenerate blocks.
    pub basis: NormalModeBasis,
    pub beta: Array1<f64>,
    pub mode_energy: Array1<f64>,
    pub capped: Vec<usize>,
    /// Largest `|⟨Ĩ_kj⟩|` on the initial state after rotation.
    pub charge_residual: f64,
    /// Largest antisymmetric partner charge after rotation.
    pub antisymmetric_residual: f64,
    pub degeneracy_tolerance: f64,
}

impl GgeSpec {
    /// `R̃_κ = ½ coth(β_κ Ω_κ / 2)`.
    pub fn occupations(&self) -> Array1<f64> {
        Array1::from_iter(
            self.beta
                .iter()
                .zip(self.basis.omega.iter())
                .map(|(&b, &w)| thermal_occupation(w, 1.0 / b)),
        )
    }

    pub fn max_mode_energy(&self) -> f64 {
        self.mode_energy.iter().fold(0.0_f64, |m, &h| m.max(h))
    }
}

/// Detects degeneracies at `tol`, rotates, and fixes the `β_κ`.
pub fn build_gge(basis: &NormalModeBasis, sigma0: &CovarianceMatrix, tol: f64) -> Result<GgeSpec> {
    let mut base = basis.clone();
    base.degeneracy_partition = detect_degeneracies(&base.omega, tol);
    let rotated = rotate_degenerate_modes(&base, sigma0)?;
    let normal = normal_covariance(&rotated, sigma0)?;
    let (charge_residual, antisymmetric_residual) = pair_charge_residuals(&rotated, &normal);
    let temps = temperatures_from_normal(&rotated, &normal)?;
    Ok(GgeSpec {
        basis: rotated,
        beta: temps.beta,
        mode_energy: temps.mode_energy,
        capped: temps.capped,
        charge_residual,
        antisymmetric_residual,
        degeneracy_tolerance: tol,
    })
}

fn gge_diagonal(spec: &GgeSpec) -> Array1<f64> {
    let r = spec.occupations();
    ndarray::concatenate![ndarray::Axis(0), r, r]
}

/// Full GGE covariance `S̃ (R̃ ⊕ R̃) S̃ᵀ`.
pub fn gge_covariance(spec: &GgeSpec) -> CovarianceMatrix {
    let d = gge_diagonal(spec);
    let s_mat = &spec.basis.symplectic;
    let scaled = s_mat * &d.view().insert_axis(ndarray::Axis(0));
    let mut out = scaled.dot(&s_mat.t());
    symmetrize(&mut out);
    CovarianceMatrix::new(out).expect("congruence of a diagonal matrix is symmetric")
}

/// Marginal of the GGE on `sites`, using only the matching rows of `S̃`.
pub fn gge_marginal(spec: &GgeSpec, sites: &[usize]) -> Result<CovarianceMatrix> {
    let rows = spec.basis.rows_for(sites)?;
    let d = gge_diagonal(spec);
    let scaled = &rows * &d.view().insert_axis(ndarray::Axis(0));
    let mut out = scaled.dot(&rows.t());
    symmetrize(&mut out);
    CovarianceMatrix::new(out)
}

/// Mode energies `tr[h_κ σ]` in the rotated basis.
pub fn mode_energies(basis: &NormalModeBasis, sigma: &CovarianceMatrix) -> Result<Array1<f64>> {
    let normal = normal_covariance(basis, sigma)?;
    let n = basis.modes();
    Ok(Array1::from_iter(
        (0..n).map(|k| 0.5 * basis.omega[k] * (normal[[k, k]] + normal[[n + k, n + k]])),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{propagator, evolve, thermal_covariance, williamson_from_potential, product_initial_state};
    use crate::linalg::max_abs_diff;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn degeneracy_partition_examples() {
        assert_eq!(detect_degeneracies(&array![1.0, 2.0, 3.0], 1e-8), vec![vec![0], vec![1], vec![2]]);
        assert_eq!(detect_degeneracies(&array![1.0, 1.0], 1e-8), vec![vec![0, 1]]);
        assert_eq!(detect_degeneracies(&array![1.0, 1.0 + 1e-12, 2.0, 2.0, 2.0], 1e-8), vec![vec![0, 1], vec![2, 3, 4]]);
    }

    #[test]
    fn thermal_state_has_uniform_beta() {
        let v = array![[2.0, 0.4, 0.1], [0.4, 1.5, 0.2], [0.1, 0.2, 1.8]];
        let b = williamson_from_potential(&v).unwrap();
        let sigma = thermal_covariance(&b, 0.7);
        let g = generalized_temperatures(&b, &sigma).unwrap();
        for &beta in g.beta.iter() {
            assert_abs_diff_eq!(beta, 1.0 / 0.7, epsilon = 1e-10);
        }
        let spec = build_gge(&b, &sigma, DEFAULT_DEGENERACY_TOLERANCE).unwrap();
        assert!(max_abs_diff(&gge_covariance(&spec).view(), &sigma.view()) < 1e-12);
    }

    #[test]
    fn closed_form_round_trip() {
        let b = williamson_from_potential(&array![[1.0]]).unwrap();
        let r = 0.5 / (0.5f64).tanh();
        let sigma = CovarianceMatrix::new(array![[r, 0.0], [0.0, r]]).unwrap();
        let g = generalized_temperatures(&b, &sigma).unwrap();
        assert_abs_diff_eq!(g.mode_energy[0], 0.5 / 0.5f64.tanh() , epsilon = 1e-15);
        assert_abs_diff_eq!(g.beta[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn vacuum_mode_is_capped_and_subvacuum_rejected() {
        let b = williamson_from_potential(&array![[4.0]]).unwrap();
        let vac = thermal_covariance(&b, 0.0);
        let g = generalized_temperatures(&b, &vac).unwrap();
        assert_eq!(g.capped, vec![0]);
        assert_abs_diff_eq!(g.beta[0], BETA_CAP / 2.0);
        let squeezed = CovarianceMatrix::new(array![[0.1, 0.0], [0.0, 0.5]]).unwrap();
        assert!(matches!(generalized_temperatures(&b, &squeezed), Err(Error::Unphysical(_))));
    }

    #[test]
    fn identical_oscillators_block_rotation_zeroes_pair_charges() {
        // two identical uncoupled oscillators prepared in a correlated state
        let b = williamson_from_potential(&array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(b.degeneracy_partition, vec![vec![0, 1]]);
        let pre = williamson_from_potential(&array![[1.0, 0.3], [0.3, 1.2]]).unwrap();
        let sigma0 = evolve(&thermal_covariance(&pre, 0.4), &propagator(&pre, 0.37)).unwrap();
        let before = pair_charge_residuals(&b, &normal_covariance(&b, &sigma0).unwrap());
        assert!(before.0 > 1e-3);
        let spec = build_gge(&b, &sigma0, DEFAULT_DEGENERACY_TOLERANCE).unwrap();
        let scale = spec.max_mode_energy();
        assert!(spec.charge_residual <= 1e-10 * scale);
        assert!(spec.antisymmetric_residual <= 1e-10 * scale);
        // rotated basis still symplectic and still diagonalises the Hamiltonian
        assert!(crate::linalg::symplectic_residual(&spec.basis.symplectic.view()) < 1e-12);
        assert!(crate::gaussian::williamson_residual(&spec.basis, &array![[1.0, 0.0], [0.0, 1.0]]) < 1e-12);
        // charge matching and stationarity
        let gge = gge_covariance(&spec);
        let h_gge = mode_energies(&spec.basis, &gge).unwrap();
        for k in 0..2 {
            assert!((h_gge[k] - spec.mode_energy[k]).abs() <= 1e-9 * spec.mode_energy[k]);
        }
        let moved = evolve(&gge, &propagator(&b, 2.3)).unwrap();
        assert!(max_abs_diff(&moved.view(), &gge.view()) < 1e-12);
    }

    #[test]
    fn already_diagonal_block_is_left_alone() {
        let b = williamson_from_potential(&array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let s0 = product_initial_state(
            &thermal_covariance(&williamson_from_potential(&array![[1.0]]).unwrap(), 0.3),
            &thermal_covariance(&williamson_from_potential(&array![[1.0]]).unwrap(), 0.9),
        );
        let spec = build_gge(&b, &s0, DEFAULT_DEGENERACY_TOLERANCE).unwrap();
        let gge = gge_covariance(&spec);
        assert!(max_abs_diff(&gge.view(), &s0.view()) < 1e-12);
    }

    #[test]
    fn nondegenerate_basis_unchanged() {
        let v = array![[2.0, 0.4], [0.4, 1.5]];
        let b = williamson_from_potential(&v).unwrap();
        let s0 = thermal_covariance(&williamson_from_potential(&array![[2.0, 0.0], [0.0, 1.0]]).unwrap(), 0.5);
        let r = rotate_degenerate_modes(&b, &s0).unwrap();
        assert_eq!(r.symplectic, b.symplectic);
    }
}
