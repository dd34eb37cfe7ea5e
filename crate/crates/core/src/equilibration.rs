//! Distance of subsystem states to their GGE marginals and detection of the
//! equilibration window.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{bures_distance, CovarianceMatrix};

pub const DEFAULT_SUSTAIN_WINDOW: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibrationReport {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub epsilon: f64,
    pub sustain_window: usize,
    pub t_eq: Option<f64>,
    pub t_rec: Option<f64>,
    pub t_eq_index: Option<usize>,
    pub t_rec_index: Option<usize>,
    /// Fraction of samples with `D ≤ ε`.
    pub window_fraction: f64,
}

/// `D[σ_s(t), σ_s^GGE]` on the grid.
pub fn distance_trajectory<F>(mut sampler: F, gge_marginal: &CovarianceMatrix, times: &[f64]) -> Result<Vec<f64>>
where
    F: FnMut(f64) -> Result<CovarianceMatrix>,
{
    check_ascending(times)?;
    times.iter().map(|&t| bures_distance(&sampler(t)?, gge_marginal)).collect()
}

fn check_ascending(times: &[f64]) -> Result<()> {
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidSpec("time grid must be strictly ascending".into()));
    }
    Ok(())
}

/// First index `i ≥ from` that starts a run of at least `len` samples all
/// satisfying `pred`.
fn first_sustained_run(values: &[f64], from: usize, len: usize, pred: impl Fn(f64) -> bool) -> Option<usize> {
    let mut run_start = None;
    for (i, &v) in values.iter().enumerate().skip(from) {
        if pred(v) {
            let start = *run_start.get_or_insert(i);
            if i + 1 - start >= len {
                return Some(start);
            }
        } else {
            run_start = None;
        }
    }
    None
}

/// Scans a distance trajectory for the first sustained entry into the
/// `ε`-band and the first sustained exit after it. A run counts as sustained
/// once it spans `sustain_window` samples, or the whole grid if that is shorter.
pub fn detect_equilibration(
    distances: &[f64],
    times: &[f64],
    epsilon: f64,
    sustain_window: usize,
) -> Result<EquilibrationReport> {
    if distances.len() != times.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} distances for {} times",
            distances.len(),
            times.len()
        )));
    }
    if !(epsilon > 0.0) || sustain_window == 0 {
        return Err(Error::InvalidSpec("epsilon must be positive and the sustain window at least one sample".into()));
    }
    if distances.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::InvalidSpec("distances must be non-negative numbers".into()));
    }
    check_ascending(times)?;
    let len = sustain_window.min(distances.len()).max(1);
    let t_eq_index = first_sustained_run(distances, 0, len, |d| d <= epsilon);
    let t_rec_index = t_eq_index.and_then(|k| first_sustained_run(distances, k + 1, len, |d| d > epsilon));
    let inside = distances.iter().filter(|&&d| d <= epsilon).count();
    Ok(EquilibrationReport {
        times: times.to_vec(),
        distances: distances.to_vec(),
        epsilon,
        sustain_window,
        t_eq: t_eq_index.map(|k| times[k]),
        t_rec: t_rec_index.map(|k| times[k]),
        t_eq_index,
        t_rec_index,
        window_fraction: if distances.is_empty() { 0.0 } else { inside as f64 / distances.len() as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 * 0.5).collect()
    }

    #[test]
    fn all_inside() {
        let r = detect_equilibration(&[0.01; 40], &grid(40), 0.02, 16).unwrap();
        assert_eq!(r.t_eq, Some(0.0));
        assert_eq!(r.t_rec, None);
        assert_eq!(r.window_fraction, 1.0);
    }

    #[test]
    fn monotone_crossing() {
        let d: Vec<f64> = (0..50).map(|i| 0.1 * (-(i as f64) / 5.0).exp()).collect();
        let k = d.iter().position(|&x| x <= 0.02).unwrap();
        let r = detect_equilibration(&d, &grid(50), 0.02, 16).unwrap();
        assert_eq!(r.t_eq_index, Some(k));
        assert_eq!(r.t_eq, Some(grid(50)[k]));
    }

    #[test]
    fn brief_dips_are_ignored_and_recurrence_found() {
        let mut d = vec![0.1; 100];
        d[3] = 0.0;
        for x in d.iter_mut().take(70).skip(20) {
            *x = 0.01;
        }
        d[40] = 0.05;
        let r = detect_equilibration(&d, &grid(100), 0.02, 5).unwrap();
        assert_eq!(r.t_eq_index, Some(20));
        assert_eq!(r.t_rec_index, Some(70));
        assert!(r.t_eq < r.t_rec);
    }

    #[test]
    fn never_equilibrates() {
        let r = detect_equilibration(&[0.5; 30], &grid(30), 0.02, 4).unwrap();
        assert_eq!(r.t_eq, None);
        assert_eq!(r.window_fraction, 0.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(detect_equilibration(&[0.1], &grid(2), 0.02, 4).is_err());
        assert!(detect_equilibration(&[0.1, 0.1], &grid(2), 0.0, 4).is_err());
        assert!(detect_equilibration(&[0.1, 0.1], &[1.0, 1.0], 0.1, 4).is_err());
    }

    #[test]
    fn refinement_moves_entry_by_at_most_one_coarse_step() {
        let f = |t: f64| 0.3 * (-t / 7.0).exp() * (1.0 + 0.3 * (2.0 * t).cos());
        let coarse: Vec<f64> = (0..200).map(|i| i as f64 * 0.4).collect();
        let fine: Vec<f64> = (0..400).map(|i| i as f64 * 0.2).collect();
        let dc: Vec<f64> = coarse.iter().map(|&t| f(t)).collect();
        let df: Vec<f64> = fine.iter().map(|&t| f(t)).collect();
        let rc = detect_equilibration(&dc, &coarse, 0.02, 8).unwrap();
        let rf = detect_equilibration(&df, &fine, 0.02, 16).unwrap();
        assert!((rc.t_eq.unwrap() - rf.t_eq.unwrap()).abs() <= 0.4 + 1e-12);
    }

    proptest! {
        #[test]
        fn larger_epsilon_never_delays_entry(d in proptest::collection::vec(0.0f64..0.1, 10..80), e1 in 0.001f64..0.05, de in 0.0f64..0.05, w in 1usize..8) {
            let t = grid(d.len());
            let a = detect_equilibration(&d, &t, e1, w).unwrap();
            let b = detect_equilibration(&d, &t, e1 + de, w).unwrap();
            if let Some(ta) = a.t_eq {
                prop_assert!(b.t_eq.unwrap() <= ta);
            }
        }

        #[test]
        fn samples_inside_window_respect_band(d in proptest::collection::vec(0.0f64..0.1, 10..80), w in 1usize..6) {
            let eps = 0.04;
            let r = detect_equilibration(&d, &grid(d.len()), eps, w).unwrap();
            if let Some(k) = r.t_eq_index {
                let end = r.t_rec_index.unwrap_or(d.len());
                // any excursion inside the window is shorter than the sustain window
                let mut run = 0;
                for &x in &d[k..end] {
                    run = if x > eps { run + 1 } else { 0 };
                    prop_assert!(run < w.min(d.len()));
                }
            }
        }
    }
}
