//! Bracketed scalar minimisation: a coarse uniform pre-scan picks the best
//! basin, then Brent's method (golden section with parabolic steps) refines it.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    /// Function evaluations, pre-scan included.
    pub evaluations: usize,
    /// The minimum sits on an end of the search interval.
    pub pinned: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSettings {
    pub prescan_points: usize,
    /// Absolute tolerance on `x`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self { prescan_points: 32, tolerance: 1e-6, max_iterations: 200 }
    }
}

const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Minimises `f` on `[lo, hi]`.
pub fn minimize<F>(mut f: F, lo: f64, hi: f64, settings: ScanSettings) -> Result<Minimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidSpec(format!("empty search interval [{lo}, {hi}]")));
    }
    let n = settings.prescan_points.max(3);
    let step = (hi - lo) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| if i == n - 1 { hi } else { lo + step * i as f64 }).collect();
    let mut values = Vec::with_capacity(n);
    for &x in &grid {
        values.push(f(x)?);
    }
    let best = (0..n).fold(0, |b, i| if values[i] < values[b] { i } else { b });
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(n - 1)];
    let mut m = brent(&mut f, a, b, grid[best], values[best], settings)?;
    m.evaluations += n;
    if m.value > values[best] {
        m.x = grid[best];
        m.value = values[best];
    }
    let tol = settings.tolerance;
    m.pinned = (m.x - lo).abs() <= 2.0 * tol || (hi - m.x).abs() <= 2.0 * tol;
    Ok(m)
}

fn brent<F>(f: &mut F, mut a: f64, mut b: f64, x0: f64, f0: f64, settings: ScanSettings) -> Result<Minimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut x, mut w, mut v) = (x0, x0, x0);
    let (mut fx, mut fw, mut fv) = (f0, f0, f0);
    let (mut d, mut e) = (0.0_f64, 0.0_f64);
    let mut evaluations = 0;
    for _ in 0..settings.max_iterations {
        let xm = 0.5 * (a + b);
        let tol1 = settings.tolerance * 0.5 + 1e-14 * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u)?;
        evaluations += 1;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            (v, w, x) = (w, x, u);
            (fv, fw, fx) = (fw, fx, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, w) = (w, u);
                (fv, fw) = (fw, fu);
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok(Minimum { x, value: fx, evaluations, pinned: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola() {
        let m = minimize(|x| Ok((x - 0.3).powi(2) + 1.0), -5.0, 5.0, ScanSettings::default()).unwrap();
        assert!((m.x - 0.3).abs() < 1e-6);
        assert!(!m.pinned);
    }

    #[test]
    fn prescan_picks_global_basin() {
        // shallow local minimum near −3, deeper one near 2.5
        let f = |x: f64| Ok(-(-(x + 3.0).powi(2)).exp() - 2.0 * (-(x - 2.5).powi(2) * 4.0).exp());
        let m = minimize(f, -6.0, 6.0, ScanSettings::default()).unwrap();
        assert!((m.x - 2.5).abs() < 1e-5);
    }

    #[test]
    fn monotone_function_is_pinned() {
        let m = minimize(|x| Ok(x), 0.0, 1.0, ScanSettings::default()).unwrap();
        assert!(m.pinned);
        assert!(m.x < 1e-5);
    }

    #[test]
    fn deterministic() {
        let f = |x: f64| Ok((x.sin() + 0.1 * x).powi(2));
        let a = minimize(f, -2.0, 2.0, ScanSettings::default()).unwrap();
        let b = minimize(f, -2.0, 2.0, ScanSettings::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors_propagate() {
        let r = minimize(|_| Err(Error::Numeric("boom".into())), 0.0, 1.0, ScanSettings::default());
        assert!(r.is_err());
        assert!(minimize(|x| Ok(x), 1.0, 1.0, ScanSettings::default()).is_err());
    }
}
