//! Phase-space machinery for zero-mean Gaussian states of quadratic
//! Hamiltonians `H = ½ xᵀ (V ⊕ I) x`.
//!
//! Conventions:
//! * q–p ordering `x = (q_1..q_N, p_1..p_N)`; for two coupled lattices the
//!   total ordering is `(q_A, q_B, p_A, p_B)`.
//! * covariance `σ_jk = ½⟨x_j x_k + x_k x_j⟩`, vacuum of a unit oscillator is `½·I`.
//! * `S` maps normal coordinates to q–p coordinates, `x = S X`, and
//!   `Sᵀ (V ⊕ I) S = Ω ⊕ Ω`.
//! * fidelity is Uhlmann's `F = (tr √(√ρ₁ ρ₂ √ρ₁))²` and the Bures distance is
//!   `D = √(2 − 2√F)`.

use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{EigVals, Inverse};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gge::{detect_degeneracies, DEFAULT_DEGENERACY_TOLERANCE};
use crate::linalg::{
    ln_det_spd, max_abs, max_abs_diff, principal_submatrix, select_rows, sym_eigen, sym_matrix_fn,
    symmetrize, upsilon_left, upsilon_right,
};

/// Eigenvalue clamp used inside matrix functions.
pub const MATRIX_FN_CLAMP: f64 = 1e-12;

/// Second-moment matrix of a zero-mean Gaussian state in q–p ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    entries: Array2<f64>,
}

impl CovarianceMatrix {
    /// Wraps a `2n × 2n` matrix, which must be symmetric to `1e-12` relative.
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c || r % 2 != 0 || r == 0 {
            return Err(Error::DimensionMismatch(format!("covariance must be 2n x 2n, got {r} x {c}")));
        }
        let asym = max_abs_diff(&entries.view(), &entries.t());
        if asym > 1e-12 * max_abs(&entries.view()).max(1.0) {
            return Err(Error::Unphysical(format!("covariance is not symmetric (max asymmetry {asym:e})")));
        }
        Ok(Self { entries })
    }

    pub(crate) fn from_symmetric(mut entries: Array2<f64>) -> Self {
        symmetrize(&mut entries);
        Self { entries }
    }

    pub fn modes(&self) -> usize {
        self.entries.nrows() / 2
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn into_array(self) -> Array2<f64> {
        self.entries
    }

    pub fn qq(&self) -> ArrayView2<'_, f64> {
        let n = self.modes();
        self.entries.slice(s![..n, ..n])
    }

    pub fn pp(&self) -> ArrayView2<'_, f64> {
        let n = self.modes();
        self.entries.slice(s![n.., n..])
    }

    /// Physical iff every symplectic eigenvalue is at least `½ − tol`.
    pub fn is_physical(&self, tol: f64) -> Result<bool> {
        Ok(symplectic_eigenvalues(self)?.iter().all(|&nu| nu >= 0.5 - tol))
    }
}

/// Normal-mode data of a stable quadratic Hamiltonian.
#[derive(Debug, Clone)]
pub struct NormalModeBasis {
    /// `2N × 2N` symplectic matrix `S`.
    pub symplectic: Array2<f64>,
    /// Normal frequencies, ascending.
    pub omega: Array1<f64>,
    /// Orthogonal `O` with `V = O Ω² Oᵀ`.
    pub orthogonal: Array2<f64>,
    /// Groups of mode indices sharing a frequency.
    pub degeneracy_partition: Vec<Vec<usize>>,
}

impl NormalModeBasis {
    pub fn modes(&self) -> usize {
        self.omega.len()
    }

    /// `S⁻¹ = −Υ Sᵀ Υ`.
    pub fn inverse_symplectic(&self) -> Array2<f64> {
        let st = self.symplectic.t().to_owned();
        upsilon_left(&upsilon_right(&st.view()).view()).mapv(|v| -v)
    }

    /// Rows of `S` that produce the q's and p's of `sites`, in q–p order.
    pub fn rows_for(&self, sites: &[usize]) -> Result<Array2<f64>> {
        let idx = phase_space_indices(sites, self.modes())?;
        Ok(select_rows(&self.symplectic.view(), &idx))
    }

    /// Largest degeneracy block size.
    pub fn max_degeneracy(&self) -> usize {
        self.degeneracy_partition.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Zero-point energy `Σ Ω/2`.
    pub fn zero_point_energy(&self) -> f64 {
        0.5 * self.omega.sum()
    }
}

/// q and p indices of a site list in the q–p ordering of an `n`-mode system.
pub fn phase_space_indices(sites: &[usize], n: usize) -> Result<Vec<usize>> {
    let mut seen = vec![false; n];
    for &i in sites {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidSpec(format!("site {i} listed twice")));
        }
    }
    Ok(sites.iter().copied().chain(sites.iter().map(|&i| i + n)).collect())
}

/// Williamson normal form of `V ⊕ I` from the orthogonal diagonalisation `V = O Ω² Oᵀ`.
pub fn williamson_from_potential(v: &Array2<f64>) -> Result<NormalModeBasis> {
    let n = v.nrows();
    if v.ncols() != n || n == 0 {
        return Err(Error::DimensionMismatch(format!("potential must be square, got {:?}", v.dim())));
    }
    let (vals, o) = sym_eigen(&v.view())?;
    let norm = vals.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if vals[0] <= crate::lattice::STABILITY_TOLERANCE * norm {
        return Err(Error::Unstable { min_eigenvalue: vals[0] });
    }
    let omega = vals.mapv(f64::sqrt);
    let mut sym = Array2::zeros((2 * n, 2 * n));
    let inv_sqrt = omega.mapv(|w| w.powf(-0.5));
    let sqrt = omega.mapv(f64::sqrt);
    sym.slice_mut(s![..n, ..n]).assign(&(&o * &inv_sqrt.view().insert_axis(Axis(0))));
    sym.slice_mut(s![n.., n..]).assign(&(&o * &sqrt.view().insert_axis(Axis(0))));
    let degeneracy_partition = detect_degeneracies(&omega, DEFAULT_DEGENERACY_TOLERANCE);
    Ok(NormalModeBasis { symplectic: sym, omega, orthogonal: o, degeneracy_partition })
}

/// `‖Sᵀ (V ⊕ I) S − Ω ⊕ Ω‖_max`.
pub fn williamson_residual(basis: &NormalModeBasis, v: &Array2<f64>) -> f64 {
    let n = basis.modes();
    let s_mat = &basis.symplectic;
    let mut fs = s_mat.clone();
    let vq = v.dot(&s_mat.slice(s![..n, ..]));
    fs.slice_mut(s![..n, ..]).assign(&vq);
    let d = s_mat.t().dot(&fs);
    let mut target = Array2::zeros((2 * n, 2 * n));
    for (i, &w) in basis.omega.iter().enumerate() {
        target[[i, i]] = w;
        target[[n + i, n + i]] = w;
    }
    max_abs_diff(&d.view(), &target.view())
}

/// `½ coth(Ω / 2T)`, with the vacuum value ½ at `T = 0`.
pub fn thermal_occupation(omega: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.5;
    }
    0.5 / (omega / (2.0 * temperature)).tanh()
}

/// `S · diag(d) · Sᵀ` for a subset of rows of `S`.
fn congruence_diag(rows: &Array2<f64>, d: &Array1<f64>) -> Array2<f64> {
    let scaled = rows * &d.view().insert_axis(Axis(0));
    scaled.dot(&rows.t())
}

fn thermal_diagonal(basis: &NormalModeBasis, temperature: f64) -> Array1<f64> {
    let r = basis.omega.mapv(|w| thermal_occupation(w, temperature));
    ndarray::concatenate![Axis(0), r, r]
}

/// Gibbs state `S (R ⊕ R) Sᵀ` at temperature `T ≥ 0`.
pub fn thermal_covariance(basis: &NormalModeBasis, temperature: f64) -> CovarianceMatrix {
    let d = thermal_diagonal(basis, temperature);
    CovarianceMatrix::from_symmetric(congruence_diag(&basis.symplectic, &d))
}

/// Marginal of the Gibbs state on `sites`, without forming the full covariance.
pub fn thermal_marginal(basis: &NormalModeBasis, temperature: f64, sites: &[usize]) -> Result<CovarianceMatrix> {
    let rows = basis.rows_for(sites)?;
    let d = thermal_diagonal(basis, temperature);
    Ok(CovarianceMatrix::from_symmetric(congruence_diag(&rows, &d)))
}

/// Uncorrelated product `σ_A ⊗ σ_B` in the total ordering `(q_A, q_B, p_A, p_B)`.
pub fn product_initial_state(sigma_a: &CovarianceMatrix, sigma_b: &CovarianceMatrix) -> CovarianceMatrix {
    let (na, nb) = (sigma_a.modes(), sigma_b.modes());
    let n = na + nb;
    let a_idx: Vec<usize> = (0..na).chain(n..n + na).collect();
    let b_idx: Vec<usize> = (na..n).chain(n + na..2 * n).collect();
    let mut out = Array2::zeros((2 * n, 2 * n));
    for (i, &gi) in a_idx.iter().enumerate() {
        for (j, &gj) in a_idx.iter().enumerate() {
            out[[gi, gj]] = sigma_a.entries[[i, j]];
        }
    }
    for (i, &gi) in b_idx.iter().enumerate() {
        for (j, &gj) in b_idx.iter().enumerate() {
            out[[gi, gj]] = sigma_b.entries[[i, j]];
        }
    }
    CovarianceMatrix { entries: out }
}

/// Normal-coordinate rotation applied column-wise: returns `M · R(t)` where
/// `R = [[cos Ωt, sin Ωt], [−sin Ωt, cos Ωt]]`.
fn rotate_columns(m: &ArrayView2<f64>, omega: &Array1<f64>, t: f64) -> Array2<f64> {
    let n = omega.len();
    let mut out = Array2::zeros(m.raw_dim());
    for (j, &w) in omega.iter().enumerate() {
        let (sn, c) = (w * t).sin_cos();
        let q = m.column(j);
        let p = m.column(n + j);
        out.column_mut(j).assign(&(&q * c - &p * sn));
        out.column_mut(n + j).assign(&(&q * sn + &p * c));
    }
    out
}

/// `E(t) = S R(t) S⁻¹ = exp(ΥFt)`.
pub fn propagator(basis: &NormalModeBasis, t: f64) -> Array2<f64> {
    let sr = rotate_columns(&basis.symplectic.view(), &basis.omega, t);
    sr.dot(&basis.inverse_symplectic())
}

/// `E σ₀ Eᵀ`, re-symmetrised.
pub fn evolve(sigma0: &CovarianceMatrix, e: &Array2<f64>) -> Result<CovarianceMatrix> {
    if e.dim() != sigma0.entries.dim() {
        return Err(Error::DimensionMismatch(format!(
            "propagator {:?} vs covariance {:?}",
            e.dim(),
            sigma0.entries.dim()
        )));
    }
    Ok(CovarianceMatrix::from_symmetric(e.dot(&sigma0.entries).dot(&e.t())))
}

/// Reduced covariance on `sites` (ordered, distinct), in the subsystem's own q–p order.
pub fn marginal(sigma: &CovarianceMatrix, sites: &[usize]) -> Result<CovarianceMatrix> {
    let idx = phase_space_indices(sites, sigma.modes())?;
    Ok(CovarianceMatrix { entries: principal_submatrix(&sigma.entries.view(), &idx) })
}

/// Symplectic eigenvalues `ν_k` (ascending), from the spectrum of
/// `σ^{1/2} Υᵀ σ Υ σ^{1/2}`, which is `ν_k²` with multiplicity two.
pub fn symplectic_eigenvalues(sigma: &CovarianceMatrix) -> Result<Array1<f64>> {
    let root = sym_matrix_fn(&sigma.view(), 0.0, |v| v.max(0.0).sqrt())?;
    let usu = upsilon_left(&upsilon_right(&sigma.view()).view()).mapv(|v| -v);
    let m = root.dot(&usu).dot(&root);
    let (vals, _) = sym_eigen(&m.view())?;
    let n = sigma.modes();
    Ok(Array1::from_iter((0..n).map(|k| (0.5 * (vals[2 * k] + vals[2 * k + 1])).max(0.0).sqrt())))
}

/// Square root of the Uhlmann fidelity, `(M / det(σ₁+σ₂))^{1/4}` with
/// `M = det[2(√(I + ¼(CΥ)⁻²) + I) C]` and
/// `C = −Υ(σ₁+σ₂)⁻¹(Υ/4 + σ₂Υσ₁)`.
///
/// The determinant is evaluated on the spectrum `μ_k` of `A = CΥ`: since
/// `det Υ = 1`, `det C = det A = Π μ_k`, and the matrix square root acts on
/// each eigenvalue, giving `M = Π_k 2μ_k (1 + √(1 + 1/(4μ_k²)))`.
/// Everything is accumulated in log space so 10³-mode states do not overflow.
pub fn gaussian_root_fidelity(sigma1: &CovarianceMatrix, sigma2: &CovarianceMatrix) -> Result<f64> {
    Ok(gaussian_ln_root_fidelity(sigma1, sigma2)?.exp())
}

/// `ln √F ≤ 0`. Unlike the fidelity itself it does not underflow for
/// far-apart many-mode states, which keeps optimisers well informed.
pub fn gaussian_ln_root_fidelity(sigma1: &CovarianceMatrix, sigma2: &CovarianceMatrix) -> Result<f64> {
    if sigma1.entries.dim() != sigma2.entries.dim() {
        return Err(Error::DimensionMismatch(format!(
            "fidelity between {:?} and {:?}",
            sigma1.entries.dim(),
            sigma2.entries.dim()
        )));
    }
    if sigma1.modes() == 1 {
        return Ok(single_mode_ln_root_fidelity(&sigma1.entries, &sigma2.entries));
    }
    let sum = &sigma1.entries + &sigma2.entries;
    let ln_det_sum = ln_det_spd(&sum.view())
        .map_err(|_| Error::Numeric("σ₁ + σ₂ is singular; states are not physical".into()))?;
    let sum_inv = sum.inv()?;
    let s2u = upsilon_right(&sigma2.view());
    let mut inner = s2u.dot(&sigma1.entries);
    let n = sigma1.modes();
    for i in 0..n {
        inner[[i, n + i]] += 0.25;
        inner[[n + i, i]] -= 0.25;
    }
    let c = upsilon_left(&sum_inv.dot(&inner).view()).mapv(|v| -v);
    let a = upsilon_right(&c.view());
    let mu = a.eigvals()?;

    let mut ln_m = Complex64::new(0.0, 0.0);
    for &m in mu.iter() {
        if m.norm() == 0.0 {
            return Err(Error::Numeric("auxiliary matrix CΥ is singular".into()));
        }
        // z = 1 + 1/(4μ²) is tiny for nearly pure states; only roundoff
        // that pushes it negative is clamped
        let four_mu2 = m * m * 4.0;
        let mut z = (four_mu2 + 1.0) / four_mu2;
        if z.re < 0.0 && z.norm() < MATRIX_FN_CLAMP {
            z = Complex64::new(0.0, z.im);
        }
        let factor = m * 2.0 * (Complex64::new(1.0, 0.0) + z.sqrt());
        ln_m += factor.ln();
    }
    let ln_f = 0.25 * (ln_m.re - ln_det_sum);
    if ln_f.is_nan() {
        return Err(Error::Numeric("fidelity evaluated to NaN".into()));
    }
    Ok(ln_f.min(0.0))
}

/// One-mode closed form `F = 1 / (√(Δ + δ) − √δ)` with `Δ = det(σ₁ + σ₂)` and
/// `δ = 4 (det σ₁ − ¼)(det σ₂ − ¼)`. Free of eigenvalue round-off, so it stays
/// accurate for nearly pure states where the general route loses digits.
fn single_mode_ln_root_fidelity(s1: &Array2<f64>, s2: &Array2<f64>) -> f64 {
    let det = |m: &Array2<f64>| m[[0, 0]] * m[[1, 1]] - m[[0, 1]] * m[[1, 0]];
    let excess = |m: &Array2<f64>| {
        // det σ − ¼ without cancelling against the ¼
        let (a, b, c) = (m[[0, 0]], m[[0, 1]], m[[1, 1]]);
        let x = (a - 0.5) * c + 0.5 * (c - 0.5) - b * b;
        // a pure state's excess is pure round-off, and √δ would amplify it
        if x <= 8.0 * f64::EPSILON * (a * c).abs().max(b * b) {
            0.0
        } else {
            x
        }
    };
    let sum = s1 + s2;
    let big = det(&sum);
    let small = 4.0 * excess(s1) * excess(s2);
    (-0.5 * ((big + small).sqrt() - small.sqrt()).ln()).min(0.0)
}

/// Uhlmann fidelity `F ∈ [0, 1]` between two zero-mean Gaussian states.
pub fn gaussian_fidelity(sigma1: &CovarianceMatrix, sigma2: &CovarianceMatrix) -> Result<f64> {
    let root = gaussian_root_fidelity(sigma1, sigma2)?;
    Ok(root * root)
}

/// `D = √(2 − 2√F)`.
pub fn distance_from_fidelity(f: f64) -> f64 {
    (2.0 - 2.0 * f.clamp(0.0, 1.0).sqrt()).max(0.0).sqrt()
}

/// `F = (1 − D²/2)²`.
pub fn fidelity_from_distance(d: f64) -> f64 {
    let x = 1.0 - 0.5 * d * d;
    x * x
}

/// Bures distance `D ∈ [0, √2]`.
pub fn bures_distance(sigma1: &CovarianceMatrix, sigma2: &CovarianceMatrix) -> Result<f64> {
    let root = gaussian_root_fidelity(sigma1, sigma2)?;
    Ok((2.0 - 2.0 * root).max(0.0).sqrt())
}

/// `⟨H⟩ = ½ (tr(V σ_qq) + tr σ_pp)`.
pub fn mean_energy(sigma: &CovarianceMatrix, v: &Array2<f64>) -> Result<f64> {
    let n = sigma.modes();
    if v.dim() != (n, n) {
        return Err(Error::DimensionMismatch(format!("potential {:?} for {n} modes", v.dim())));
    }
    let qq = sigma.qq();
    let tr_vq: f64 = v.iter().zip(qq.t().iter()).map(|(a, b)| a * b).sum();
    Ok(0.5 * (tr_vq + sigma.pp().diag().sum()))
}

/// Thermal energy `Σ (Ω/2) coth(Ω/2T)`.
pub fn thermal_energy(omega: &Array1<f64>, temperature: f64) -> f64 {
    omega.iter().map(|&w| w * thermal_occupation(w, temperature)).sum()
}

/// A quenched state propagated exactly in the normal-mode frame of the
/// post-quench Hamiltonian.
///
/// Holds `Σ₀ = S⁻¹ σ₀ S⁻ᵀ`. At time `t`, `Σ(t) = R(t) Σ₀ R(t)ᵀ` only mixes the
/// `(Q_j, P_j)` pairs, so reduced covariances and quadratic expectation values
/// cost `O(N²)` per time point instead of `O(N³)`.
#[derive(Debug, Clone)]
pub struct NormalModeEvolution {
    basis: Arc<NormalModeBasis>,
    sigma0_normal: Array2<f64>,
}

impl NormalModeEvolution {
    pub fn new(basis: Arc<NormalModeBasis>, sigma0: &CovarianceMatrix) -> Result<Self> {
        if sigma0.modes() != basis.modes() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} modes, basis has {}",
                sigma0.modes(),
                basis.modes()
            )));
        }
        let s_inv = basis.inverse_symplectic();
        let mut sigma0_normal = s_inv.dot(sigma0.as_array()).dot(&s_inv.t());
        symmetrize(&mut sigma0_normal);
        Ok(Self { basis, sigma0_normal })
    }

    pub fn basis(&self) -> &NormalModeBasis {
        &self.basis
    }

    /// Initial covariance in normal coordinates.
    pub fn initial_normal(&self) -> &Array2<f64> {
        &self.sigma0_normal
    }

    /// `Σ(t)` in normal coordinates.
    pub fn normal_covariance_at(&self, t: f64) -> Array2<f64> {
        let n = self.basis.modes();
        let cs: Vec<(f64, f64)> = self.basis.omega.iter().map(|&w| (w * t).sin_cos()).collect();
        let s0 = &self.sigma0_normal;
        let mut out = Array2::zeros((2 * n, 2 * n));
        for j in 0..n {
            let (sj, cj) = cs[j];
            for k in 0..n {
                let (sk, ck) = cs[k];
                let qq = s0[[j, k]];
                let qp = s0[[j, n + k]];
                let pq = s0[[n + j, k]];
                let pp = s0[[n + j, n + k]];
                // rows: Q_j(t) = c Q + s P,  P_j(t) = −s Q + c P
                let rq = (cj * qq + sj * pq, cj * qp + sj * pp);
                let rp = (-sj * qq + cj * pq, -sj * qp + cj * pp);
                out[[j, k]] = rq.0 * ck + rq.1 * sk;
                out[[j, n + k]] = -rq.0 * sk + rq.1 * ck;
                out[[n + j, k]] = rp.0 * ck + rp.1 * sk;
                out[[n + j, n + k]] = -rp.0 * sk + rp.1 * ck;
            }
        }
        out
    }

    /// Reduced q–p covariance of `sites` at time `t`.
    pub fn marginal_at(&self, t: f64, sites: &[usize]) -> Result<CovarianceMatrix> {
        let rows = self.basis.rows_for(sites)?;
        let w = rotate_columns(&rows.view(), &self.basis.omega, t);
        Ok(CovarianceMatrix::from_symmetric(w.dot(&self.sigma0_normal).dot(&w.t())))
    }

    /// Full q–p covariance at time `t`.
    pub fn covariance_at(&self, t: f64) -> CovarianceMatrix {
        let w = rotate_columns(&self.basis.symplectic.view(), &self.basis.omega, t);
        CovarianceMatrix::from_symmetric(w.dot(&self.sigma0_normal).dot(&w.t()))
    }

    /// Pulls a q–p quadratic form `K` into the normal frame: `Sᵀ K S`.
    pub fn to_normal_frame(&self, k: &Array2<f64>) -> Array2<f64> {
        let s_mat = &self.basis.symplectic;
        s_mat.t().dot(k).dot(s_mat)
    }

    /// `tr(K_normal Σ(t))` for a form already in the normal frame, i.e.
    /// `tr(K σ(t))` in q–p coordinates.
    pub fn trace_with(&self, k_normal: &Array2<f64>, t: f64) -> f64 {
        let sigma_t = self.normal_covariance_at(t);
        k_normal.iter().zip(sigma_t.t().iter()).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{symplectic_form, symplectic_residual};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn single_mode(omega: f64) -> NormalModeBasis {
        williamson_from_potential(&array![[omega * omega]]).unwrap()
    }

    #[test]
    fn diagonal_potential_gives_diagonal_symplectic() {
        let b = williamson_from_potential(&array![[4.0, 0.0], [0.0, 9.0]]).unwrap();
        assert_abs_diff_eq!(b.omega[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b.omega[1], 3.0, epsilon = 1e-14);
        let off: f64 = b.symplectic.indexed_iter().filter(|((i, j), _)| i != j).map(|(_, v)| v.abs()).sum();
        assert!(off < 1e-14);
    }

    #[test]
    fn two_site_frequencies() {
        let v = array![[1.0, 0.5], [0.5, 1.0]];
        let b = williamson_from_potential(&v).unwrap();
        assert_abs_diff_eq!(b.omega[0], 0.5f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(b.omega[1], 1.5f64.sqrt(), epsilon = 1e-14);
        assert!(symplectic_residual(&b.symplectic.view()) < 1e-14);
        assert!(williamson_residual(&b, &v) < 1e-14);
    }

    #[test]
    fn unstable_potential_rejected() {
        assert!(matches!(
            williamson_from_potential(&array![[1.0, 2.0], [2.0, 1.0]]),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn vacuum_of_single_oscillator() {
        let sigma = thermal_covariance(&single_mode(2.0), 0.0);
        assert_abs_diff_eq!(sigma.as_array()[[0, 0]], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(sigma.as_array()[[1, 1]], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sigma.as_array()[[0, 1]], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn unit_oscillator_at_unit_temperature() {
        let sigma = thermal_covariance(&single_mode(1.0), 1.0);
        // ½ coth(½) evaluated independently through exponentials
        let expected = 0.5 * (0.5f64.exp() + (-0.5f64).exp()) / (0.5f64.exp() - (-0.5f64).exp());
        assert_abs_diff_eq!(expected, 1.081_976_706_869_326, epsilon = 1e-12);
        assert_abs_diff_eq!(sigma.as_array()[[0, 0]], expected, epsilon = 1e-14);
        assert_abs_diff_eq!(sigma.as_array()[[1, 1]], expected, epsilon = 1e-14);
    }

    #[test]
    fn high_temperature_equipartition() {
        let v = array![[2.0, 0.3, 0.1], [0.3, 2.0, 0.3], [0.1, 0.3, 2.0]];
        let b = williamson_from_potential(&v).unwrap();
        let t = 1e4;
        let e = mean_energy(&thermal_covariance(&b, t), &v).unwrap();
        assert!((e / (3.0 * t) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn single_mode_propagator_is_analytic() {
        let w = 1.7;
        let b = single_mode(w);
        for t in [0.0, 0.3, 2.1] {
            let e = propagator(&b, t);
            let (s, c) = (w * t).sin_cos();
            assert_abs_diff_eq!(e[[0, 0]], c, epsilon = 1e-14);
            assert_abs_diff_eq!(e[[0, 1]], s / w, epsilon = 1e-14);
            assert_abs_diff_eq!(e[[1, 0]], -w * s, epsilon = 1e-14);
            assert_abs_diff_eq!(e[[1, 1]], c, epsilon = 1e-14);
        }
        let period = propagator(&b, 2.0 * std::f64::consts::PI / w);
        assert!(max_abs_diff(&period.view(), &Array2::eye(2).view()) < 1e-13);
    }

    #[test]
    fn propagator_matches_matrix_exponential_series() {
        let v = array![[2.0, 0.4, 0.1], [0.4, 1.5, 0.2], [0.1, 0.2, 1.8]];
        let b = williamson_from_potential(&v).unwrap();
        let t = 0.7;
        // ΥF with F = V ⊕ I, exponentiated by a long Taylor series
        let mut f = Array2::<f64>::eye(6);
        f.slice_mut(s![..3, ..3]).assign(&v);
        let gen = symplectic_form(3).dot(&f) * t;
        let mut term = Array2::<f64>::eye(6);
        let mut sum = term.clone();
        for k in 1..60 {
            term = term.dot(&gen) / k as f64;
            sum = sum + &term;
        }
        let e = propagator(&b, t);
        assert!(max_abs_diff(&e.view(), &sum.view()) < 1e-12);
    }

    #[test]
    fn product_of_vacua_and_stationarity() {
        let b = single_mode(1.0);
        let vac = thermal_covariance(&b, 0.0);
        let prod = product_initial_state(&vac, &vac);
        assert!(max_abs_diff(&prod.view(), &(Array2::eye(4) * 0.5).view()) < 1e-15);

        let va = array![[1.5, 0.2], [0.2, 1.5]];
        let vb = array![[2.0, -0.1], [-0.1, 2.0]];
        let (ba, bb) = (williamson_from_potential(&va).unwrap(), williamson_from_potential(&vb).unwrap());
        let s0 = product_initial_state(&thermal_covariance(&ba, 0.3), &thermal_covariance(&bb, 1.2));
        // cross blocks vanish
        for &(i, j) in &[(0, 2), (1, 3), (0, 6), (4, 3), (5, 7)] {
            assert_eq!(s0.as_array()[[i, j]], 0.0);
        }
        // decoupled evolution leaves the product of Gibbs states invariant
        let mut vt = Array2::zeros((4, 4));
        vt.slice_mut(s![..2, ..2]).assign(&va);
        vt.slice_mut(s![2.., 2..]).assign(&vb);
        let bt = williamson_from_potential(&vt).unwrap();
        for t in [0.5, 3.0, 40.0] {
            let st = evolve(&s0, &propagator(&bt, t)).unwrap();
            assert!(max_abs_diff(&st.view(), &s0.view()) < 1e-12);
        }
    }

    #[test]
    fn marginal_selection_and_errors() {
        let v = array![[2.0, 0.4, 0.1], [0.4, 1.5, 0.2], [0.1, 0.2, 1.8]];
        let b = williamson_from_potential(&v).unwrap();
        let sigma = thermal_covariance(&b, 0.8);
        assert_eq!(marginal(&sigma, &[0, 1, 2]).unwrap(), sigma);
        let m = marginal(&sigma, &[2, 0]).unwrap();
        assert_eq!(m.as_array()[[0, 0]], sigma.as_array()[[2, 2]]);
        assert_eq!(m.as_array()[[1, 3]], sigma.as_array()[[0, 3]]);
        assert!(m.is_physical(1e-9).unwrap());
        let nus = symplectic_eigenvalues(&m).unwrap();
        assert!(nus.iter().all(|&x| x >= 0.5));
        assert!(matches!(marginal(&sigma, &[3]), Err(Error::IndexOutOfRange { .. })));
        assert!(marginal(&sigma, &[1, 1]).is_err());
        // fast thermal marginal agrees
        let fast = thermal_marginal(&b, 0.8, &[2, 0]).unwrap();
        assert!(max_abs_diff(&fast.view(), &m.view()) < 1e-14);
    }

    #[test]
    fn fidelity_identities() {
        let v = array![[2.0, 0.4], [0.4, 1.5]];
        let b = williamson_from_potential(&v).unwrap();
        let s1 = thermal_covariance(&b, 0.7);
        assert_abs_diff_eq!(gaussian_fidelity(&s1, &s1).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bures_distance(&s1, &s1).unwrap(), 0.0, epsilon = 1e-6);
        let s2 = evolve(&thermal_covariance(&b, 0.2), &propagator(&williamson_from_potential(&array![[1.0, 0.1], [0.1, 3.0]]).unwrap(), 1.3)).unwrap();
        let f12 = gaussian_fidelity(&s1, &s2).unwrap();
        let f21 = gaussian_fidelity(&s2, &s1).unwrap();
        assert!((f12 - f21).abs() < 1e-10);
        assert!(f12 > 0.0 && f12 < 1.0);
        let d = bures_distance(&s1, &s2).unwrap();
        assert!((fidelity_from_distance(d) - f12).abs() < 1e-12);
        assert!((distance_from_fidelity(f12) - d).abs() < 1e-12);
        assert_abs_diff_eq!(distance_from_fidelity(0.0), 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn one_mode_closed_form_agrees_with_general_route() {
        let pre = williamson_from_potential(&array![[1.0, 0.3], [0.3, 1.2]]).unwrap();
        let post = williamson_from_potential(&array![[1.4, -0.2], [-0.2, 0.9]]).unwrap();
        for (t1, t2, tau) in [(0.4, 1.0, 0.3), (2.0, 0.7, 5.1), (1.0, 1.0, 0.0)] {
            let a = marginal(&evolve(&thermal_covariance(&pre, t1), &propagator(&post, tau)).unwrap(), &[1]).unwrap();
            let b = marginal(&thermal_covariance(&pre, t2), &[0]).unwrap();
            let direct = single_mode_ln_root_fidelity(a.as_array(), b.as_array()).exp();
            // embed each one-mode state next to a shared mixed mode so the general route runs
            let other = CovarianceMatrix::new(Array2::eye(2) * 1.3).unwrap();
            let general = gaussian_root_fidelity(&product_initial_state(&a, &other), &product_initial_state(&b, &other)).unwrap();
            assert!((direct - general).abs() < 1e-10, "{direct} vs {general}");
        }
    }

    #[test]
    fn vacuum_versus_thermal_closed_form() {
        let b = single_mode(1.3);
        let vac = thermal_covariance(&b, 0.0);
        for t in [0.2, 1.0, 4.0] {
            let th = thermal_covariance(&b, t);
            let nbar = 1.0 / ((1.3 / t).exp() - 1.0);
            assert_abs_diff_eq!(gaussian_fidelity(&vac, &th).unwrap(), 1.0 / (1.0 + nbar), epsilon = 1e-12);
        }
    }

    #[test]
    fn mean_energy_of_vacuum_and_thermal_state() {
        let b = single_mode(2.5);
        assert_abs_diff_eq!(mean_energy(&thermal_covariance(&b, 0.0), &array![[6.25]]).unwrap(), 1.25, epsilon = 1e-14);
        let v = array![[2.0, 0.4, 0.1], [0.4, 1.5, 0.2], [0.1, 0.2, 1.8]];
        let bb = williamson_from_potential(&v).unwrap();
        let e = mean_energy(&thermal_covariance(&bb, 0.9), &v).unwrap();
        assert!((e - thermal_energy(&bb.omega, 0.9)).abs() < 1e-13);
    }

    #[test]
    fn normal_mode_evolution_matches_dense_route() {
        let v = array![[2.0, 0.4, 0.1, 0.3], [0.4, 1.5, 0.2, 0.0], [0.1, 0.2, 1.8, 0.2], [0.3, 0.0, 0.2, 2.2]];
        let b = Arc::new(williamson_from_potential(&v).unwrap());
        let pre = williamson_from_potential(&Array2::from_diag(&array![1.0, 2.0, 1.5, 2.5])).unwrap();
        let s0 = thermal_covariance(&pre, 0.6);
        let evo = NormalModeEvolution::new(b.clone(), &s0).unwrap();
        for t in [0.0, 0.9, 13.7] {
            let dense = evolve(&s0, &propagator(&b, t)).unwrap();
            assert!(max_abs_diff(&evo.covariance_at(t).view(), &dense.view()) < 1e-12);
            let m = evo.marginal_at(t, &[3, 1]).unwrap();
            assert!(max_abs_diff(&m.view(), &marginal(&dense, &[3, 1]).unwrap().view()) < 1e-12);
            let mut f = Array2::<f64>::eye(8);
            f.slice_mut(s![..4, ..4]).assign(&v);
            let kn = evo.to_normal_frame(&f);
            let e_fast = 0.5 * evo.trace_with(&kn, t);
            assert!((e_fast - mean_energy(&dense, &v).unwrap()).abs() < 1e-12);
        }
    }
}
