//! Two lattices prepared in Gibbs states at `T_A`, `T_B` and coupled at `t = 0`.

use std::sync::Arc;

use ndarray::{s, Array2};

use crate::energetics::EnergySplit;
use crate::error::{Error, Result};
use crate::gaussian::{
    product_initial_state, thermal_covariance, williamson_from_potential, CovarianceMatrix, NormalModeBasis,
    NormalModeEvolution,
};
use crate::lattice::{
    assemble_total, build_interaction_potential, build_intra_potential, ensure_stable, CouplingTopology, LatticeSpec,
    PotentialMatrix,
};
use crate::linalg::symmetrize;

/// Which of the two lattices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    A,
    B,
}

/// Pre- and post-quench Hamiltonians of a coupled pair of lattices.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    pub spec_a: LatticeSpec,
    pub spec_b: LatticeSpec,
    pub topology: CouplingTopology,
    pub v_a: PotentialMatrix,
    pub v_b: PotentialMatrix,
    pub v_int: Array2<f64>,
    pub v_total: PotentialMatrix,
    pub basis_a: Arc<NormalModeBasis>,
    pub basis_b: Arc<NormalModeBasis>,
    pub basis_total: Arc<NormalModeBasis>,
}

impl CoupledSystem {
    pub fn new(spec_a: LatticeSpec, spec_b: LatticeSpec, topology: CouplingTopology) -> Result<Self> {
        let v_a = build_intra_potential(&spec_a)?;
        let v_b = build_intra_potential(&spec_b)?;
        let v_int = build_interaction_potential(&spec_a, &spec_b, &topology)?;
        let v_total = assemble_total(&v_a, &v_b, &v_int)?;
        ensure_stable(&v_total.entries)?;
        Ok(Self {
            basis_a: Arc::new(williamson_from_potential(&v_a.entries)?),
            basis_b: Arc::new(williamson_from_potential(&v_b.entries)?),
            basis_total: Arc::new(williamson_from_potential(&v_total.entries)?),
            spec_a,
            spec_b,
            topology,
            v_a,
            v_b,
            v_int,
            v_total,
        })
    }

    pub fn n_a(&self) -> usize {
        self.v_a.dim()
    }

    pub fn n_b(&self) -> usize {
        self.v_b.dim()
    }

    pub fn potential(&self, side: Side) -> &PotentialMatrix {
        match side {
            Side::A => &self.v_a,
            Side::B => &self.v_b,
        }
    }

    pub fn lattice_basis(&self, side: Side) -> &Arc<NormalModeBasis> {
        match side {
            Side::A => &self.basis_a,
            Side::B => &self.basis_b,
        }
    }

    /// Global indices of lattice-local sites.
    pub fn global_sites(&self, side: Side, local: &[usize]) -> Result<Vec<usize>> {
        let (offset, n) = match side {
            Side::A => (0, self.n_a()),
            Side::B => (self.n_a(), self.n_b()),
        };
        local
            .iter()
            .map(|&i| if i < n { Ok(offset + i) } else { Err(Error::IndexOutOfRange { index: i, len: n }) })
            .collect()
    }

    /// `τ_A(T_A) ⊗ τ_B(T_B)`.
    pub fn initial_state(&self, t_a: f64, t_b: f64) -> CovarianceMatrix {
        product_initial_state(&thermal_covariance(&self.basis_a, t_a), &thermal_covariance(&self.basis_b, t_b))
    }

    pub fn quench(&self, t_a: f64, t_b: f64) -> Result<Quench> {
        Quench::new(self, &self.initial_state(t_a, t_b))
    }
}

/// Quadratic form `½ xᵀ K x` on the total phase space.
fn embed_lattice_hamiltonian(v: &Array2<f64>, offset: usize, n_total: usize) -> Array2<f64> {
    let n = v.nrows();
    let mut k = Array2::zeros((2 * n_total, 2 * n_total));
    k.slice_mut(s![offset..offset + n, offset..offset + n]).assign(v);
    for i in 0..n {
        k[[n_total + offset + i, n_total + offset + i]] = 1.0;
    }
    k
}

/// The evolving state of a [`CoupledSystem`], sampled on demand.
#[derive(Debug, Clone)]
pub struct Quench {
    evolution: NormalModeEvolution,
    n_a: usize,
    n_b: usize,
    form_a: Array2<f64>,
    form_b: Array2<f64>,
    form_int: Array2<f64>,
}

impl Quench {
    pub fn new(system: &CoupledSystem, sigma0: &CovarianceMatrix) -> Result<Self> {
        let evolution = NormalModeEvolution::new(system.basis_total.clone(), sigma0)?;
        let (n_a, n_b) = (system.n_a(), system.n_b());
        let n = n_a + n_b;
        let mut k_int = Array2::zeros((2 * n, 2 * n));
        k_int.slice_mut(s![..n_a, n_a..n]).assign(&system.v_int);
        k_int.slice_mut(s![n_a..n, ..n_a]).assign(&system.v_int.t());
        let mut form_a = evolution.to_normal_frame(&embed_lattice_hamiltonian(&system.v_a.entries, 0, n));
        let mut form_b = evolution.to_normal_frame(&embed_lattice_hamiltonian(&system.v_b.entries, n_a, n));
        let mut form_int = evolution.to_normal_frame(&k_int);
        for f in [&mut form_a, &mut form_b, &mut form_int] {
            symmetrize(f);
        }
        Ok(Self { evolution, n_a, n_b, form_a, form_b, form_int })
    }

    pub fn evolution(&self) -> &NormalModeEvolution {
        &self.evolution
    }

    /// Full covariance of both lattices.
    pub fn state(&self, t: f64) -> CovarianceMatrix {
        self.evolution.covariance_at(t)
    }

    /// Reduced state of lattice-local `sites` on one side.
    pub fn marginal(&self, t: f64, side: Side, sites: &[usize]) -> Result<CovarianceMatrix> {
        let global = self.global(side, sites)?;
        self.evolution.marginal_at(t, &global)
    }

    /// Reduced state of a whole lattice.
    pub fn lattice_state(&self, t: f64, side: Side) -> Result<CovarianceMatrix> {
        let n = match side {
            Side::A => self.n_a,
            Side::B => self.n_b,
        };
        let all: Vec<usize> = (0..n).collect();
        self.marginal(t, side, &all)
    }

    fn global(&self, side: Side, local: &[usize]) -> Result<Vec<usize>> {
        let (offset, n) = match side {
            Side::A => (0, self.n_a),
            Side::B => (self.n_a, self.n_b),
        };
        local
            .iter()
            .map(|&i| if i < n { Ok(offset + i) } else { Err(Error::IndexOutOfRange { index: i, len: n }) })
            .collect()
    }

    /// `E_A`, `E_B`, `E_int` at time `t`, from the normal-frame covariance.
    pub fn energies(&self, t: f64) -> EnergySplit {
        let sigma = self.evolution.normal_covariance_at(t);
        let tr = |k: &Array2<f64>| -> f64 { k.iter().zip(sigma.iter()).map(|(a, b)| a * b).sum() };
        EnergySplit { e_a: 0.5 * tr(&self.form_a), e_b: 0.5 * tr(&self.form_b), e_int: 0.5 * tr(&self.form_int) }
    }
}
