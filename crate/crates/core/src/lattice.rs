//! Potential matrices for open-boundary harmonic lattices.
//!
//! A lattice `X` with `N` sites has Hamiltonian `H = ½ xᵀ (V ⊕ I) x` with unit
//! masses. The diagonal of `V` is the on-site `ω²`. Off-diagonal entries carry
//! the pair coupling `G(ν, ν') = g / dist(ν, ν')^α` *directly* on both mirror
//! entries: in `½ qᵀVq` each unordered pair appears twice, so the energy of a
//! pair is `G q_ν q_ν'`. The same convention holds for the inter-lattice block,
//! which puts `λ` on `V_int[ν, ν]` and yields `λ q_{A,ν} q_{B,ν}`.
//!
//! Sites are enumerated row-major: in a `rows × cols` grid the site at
//! `(r, c)` has index `r * cols + c`. Distances are Manhattan distances on the
//! open lattice.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen;

/// Interaction-range exponent. `NearestNeighbor` is the `α = ∞` limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub enum Alpha {
    Finite(f64),
    NearestNeighbor,
}

impl From<f64> for Alpha {
    fn from(v: f64) -> Self {
        if v.is_infinite() && v > 0.0 {
            Alpha::NearestNeighbor
        } else {
            Alpha::Finite(v)
        }
    }
}

impl From<Alpha> for f64 {
    fn from(a: Alpha) -> f64 {
        match a {
            Alpha::Finite(v) => v,
            Alpha::NearestNeighbor => f64::INFINITY,
        }
    }
}

/// Lattice geometry: a chain of `n` sites or a `rows × cols` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Chain(usize),
    Grid { rows: usize, cols: usize },
}

impl Shape {
    pub fn dim(&self) -> usize {
        match self {
            Shape::Chain(_) => 1,
            Shape::Grid { .. } => 2,
        }
    }

    pub fn num_sites(&self) -> usize {
        match *self {
            Shape::Chain(n) => n,
            Shape::Grid { rows, cols } => rows * cols,
        }
    }

    /// `(row, col)` of a site index; chains live in row 0.
    pub fn coords(&self, index: usize) -> (usize, usize) {
        match *self {
            Shape::Chain(_) => (0, index),
            Shape::Grid { cols, .. } => (index / cols, index % cols),
        }
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        match *self {
            Shape::Chain(_) => col,
            Shape::Grid { cols, .. } => row * cols + col,
        }
    }

    pub fn distance(&self, a: usize, b: usize) -> usize {
        manhattan(self.coords(a), self.coords(b))
    }
}

pub fn manhattan(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub shape: Shape,
    pub omega: f64,
    pub g: f64,
    pub alpha: Alpha,
}

impl LatticeSpec {
    pub fn chain(n: usize, omega: f64, g: f64, alpha: Alpha) -> Self {
        Self { shape: Shape::Chain(n), omega, g, alpha }
    }

    pub fn grid(rows: usize, cols: usize, omega: f64, g: f64, alpha: Alpha) -> Self {
        Self { shape: Shape::Grid { rows, cols }, omega, g, alpha }
    }

    pub fn num_sites(&self) -> usize {
        self.shape.num_sites()
    }

    pub fn validate(&self) -> Result<()> {
        match self.shape {
            Shape::Chain(n) if n < 2 => {
                return Err(Error::InvalidSpec(format!("chain needs at least 2 sites, got {n}")))
            }
            Shape::Grid { rows, cols } if rows < 2 || cols < 2 => {
                return Err(Error::InvalidSpec(format!(
                    "grid needs at least 2 sites per dimension, got {rows}x{cols}"
                )))
            }
            _ => {}
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidSpec(format!("on-site frequency must be positive, got {}", self.omega)));
        }
        if !self.g.is_finite() {
            return Err(Error::InvalidSpec(format!("coupling g must be finite, got {}", self.g)));
        }
        if let Alpha::Finite(a) = self.alpha {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidSpec(format!("range exponent must be positive, got {a}")));
            }
        }
        Ok(())
    }

    /// Pair coupling `G` between two distinct sites at Manhattan distance `dist`.
    pub fn pair_coupling(&self, dist: usize) -> f64 {
        debug_assert!(dist > 0);
        match self.alpha {
            Alpha::NearestNeighbor => {
                if dist == 1 {
                    self.g
                } else {
                    0.0
                }
            }
            Alpha::Finite(a) => self.g / (dist as f64).powf(a),
        }
    }

    /// Contiguous window of `size` sites centred in the site ordering.
    pub fn centered_window(&self, size: usize) -> Vec<usize> {
        let n = self.num_sites();
        let size = size.min(n);
        match self.shape {
            Shape::Chain(_) => {
                let start = (n - size) / 2;
                (start..start + size).collect()
            }
            Shape::Grid { rows, cols } => {
                // centred along the middle row, wrapping into the next rows if needed
                let row = (rows - 1) / 2;
                let start_col = cols.saturating_sub(size) / 2;
                let start = row * cols + start_col;
                (start..(start + size).min(n)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CouplingKind {
    #[serde(rename = "EE")]
    EdgeEdge,
    #[serde(rename = "FB")]
    FullBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingTopology {
    pub kind: CouplingKind,
    pub lambda: f64,
    /// Row carrying the edge–edge contact in 2D lattices. Chains always use site 0.
    #[serde(default)]
    pub edge_row: usize,
}

impl CouplingTopology {
    pub fn full_body(lambda: f64) -> Self {
        Self { kind: CouplingKind::FullBody, lambda, edge_row: 0 }
    }

    pub fn edge_edge(lambda: f64) -> Self {
        Self { kind: CouplingKind::EdgeEdge, lambda, edge_row: 0 }
    }
}

/// Position of a row of `V` in the physical system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SiteRef {
    /// 0 for lattice A (or a standalone lattice), 1 for lattice B.
    pub lattice: usize,
    pub row: usize,
    pub col: usize,
}

/// Symmetric potential matrix together with its site ↔ row map.
#[derive(Debug, Clone)]
pub struct PotentialMatrix {
    pub entries: Array2<f64>,
    pub sites: Vec<SiteRef>,
}

impl PotentialMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }
}

pub fn build_intra_potential(spec: &LatticeSpec) -> Result<PotentialMatrix> {
    spec.validate()?;
    let n = spec.num_sites();
    let mut v = Array2::zeros((n, n));
    let omega_sq = spec.omega * spec.omega;
    for i in 0..n {
        v[[i, i]] = omega_sq;
        for j in (i + 1)..n {
            let c = spec.pair_coupling(spec.shape.distance(i, j));
            v[[i, j]] = c;
            v[[j, i]] = c;
        }
    }
    let sites = (0..n)
        .map(|i| {
            let (row, col) = spec.shape.coords(i);
            SiteRef { lattice: 0, row, col }
        })
        .collect();
    Ok(PotentialMatrix { entries: v, sites })
}

/// The `N_A × N_B` inter-lattice block.
pub fn build_interaction_potential(
    spec_a: &LatticeSpec,
    spec_b: &LatticeSpec,
    topo: &CouplingTopology,
) -> Result<Array2<f64>> {
    if spec_a.shape != spec_b.shape {
        return Err(Error::DimensionMismatch(format!(
            "coupled lattices must share a shape, got {:?} and {:?}",
            spec_a.shape, spec_b.shape
        )));
    }
    if !topo.lambda.is_finite() {
        return Err(Error::InvalidSpec(format!("coupling λ must be finite, got {}", topo.lambda)));
    }
    let n = spec_a.num_sites();
    let mut block = Array2::zeros((n, n));
    for site in contact_sites(&spec_a.shape, topo)? {
        block[[site, site]] = topo.lambda;
    }
    Ok(block)
}

/// Sites that carry the inter-lattice coupling.
pub fn contact_sites(shape: &Shape, topo: &CouplingTopology) -> Result<Vec<usize>> {
    Ok(match (topo.kind, *shape) {
        (CouplingKind::FullBody, _) => (0..shape.num_sites()).collect(),
        (CouplingKind::EdgeEdge, Shape::Chain(_)) => vec![0],
        (CouplingKind::EdgeEdge, Shape::Grid { rows, cols }) => {
            if topo.edge_row >= rows {
                return Err(Error::InvalidSpec(format!(
                    "edge row {} outside a grid with {rows} rows",
                    topo.edge_row
                )));
            }
            (0..cols).map(|c| shape.index(topo.edge_row, c)).collect()
        }
    })
}

/// `[[V_A, V_int], [V_intᵀ, V_B]]`, with all A sites before all B sites.
pub fn assemble_total(
    v_a: &PotentialMatrix,
    v_b: &PotentialMatrix,
    v_int: &Array2<f64>,
) -> Result<PotentialMatrix> {
    let (na, nb) = (v_a.dim(), v_b.dim());
    if v_int.dim() != (na, nb) {
        return Err(Error::DimensionMismatch(format!(
            "interaction block is {:?}, expected ({na}, {nb})",
            v_int.dim()
        )));
    }
    let mut v = Array2::zeros((na + nb, na + nb));
    v.slice_mut(s![..na, ..na]).assign(&v_a.entries);
    v.slice_mut(s![na.., na..]).assign(&v_b.entries);
    v.slice_mut(s![..na, na..]).assign(v_int);
    v.slice_mut(s![na.., ..na]).assign(&v_int.t());
    let sites = v_a
        .sites
        .iter()
        .map(|s| SiteRef { lattice: 0, ..*s })
        .chain(v_b.sites.iter().map(|s| SiteRef { lattice: 1, ..*s }))
        .collect();
    Ok(PotentialMatrix { entries: v, sites })
}

/// Smallest eigenvalue of `V`.
pub fn validate_stability(v: &Array2<f64>) -> Result<f64> {
    let (vals, _) = sym_eigen(&v.view())?;
    Ok(vals[0])
}

/// Relative tolerance below which `λ_min(V)` counts as non-positive.
pub const STABILITY_TOLERANCE: f64 = 1e-12;

/// Fails with [`Error::Unstable`] unless `V` is strictly positive definite.
pub fn ensure_stable(v: &Array2<f64>) -> Result<f64> {
    let (vals, _) = sym_eigen(&v.view())?;
    let min = vals[0];
    let norm = vals.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if min <= STABILITY_TOLERANCE * norm {
        return Err(Error::Unstable { min_eigenvalue: min });
    }
    Ok(min)
}
