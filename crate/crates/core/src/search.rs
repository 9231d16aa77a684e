//! One-dimensional minimization helpers.

use crate::scalar::Scalar;

/// Golden-section search for a minimum of a unimodal `f` on `[lo, hi]`,
/// stopping once the bracket is shorter than `tol`.
pub fn golden_section<T: Scalar>(mut f: impl FnMut(T) -> T, lo: T, hi: T, tol: T) -> (T, T) {
    let inv_phi = (T::c(5.0).sqrt() - T::one()) / T::c(2.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Golden-section search driven by `diff(x, y) = f(x) - f(y)` instead of
/// values of `f`, for objectives whose differences can be evaluated more
/// accurately than the objective itself. Returns the final midpoint.
pub fn golden_section_by_diff<T: Scalar>(mut diff: impl FnMut(T, T) -> T, lo: T, hi: T, tol: T) -> T {
    let inv_phi = (T::c(5.0).sqrt() - T::one()) / T::c(2.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    for _ in 0..400 {
        if (b - a).abs() <= tol {
            break;
        }
        if diff(c, d) < T::zero() {
            b = d;
            d = c;
            c = b - inv_phi * (b - a);
        } else {
            a = c;
            c = d;
            d = a + inv_phi * (b - a);
        }
    }
    (a + b) / T::c(2.0)
}

/// Minimum over `points` evenly spaced nodes of `[lo, hi]`, refined by golden
/// section on the two neighbouring cells.
pub fn grid_then_golden<T: Scalar>(mut f: impl FnMut(T) -> T, lo: T, hi: T, points: usize, tol: T) -> (T, T) {
    let points = points.max(3);
    let h = (hi - lo) / T::c((points - 1) as f64);
    let mut best = (lo, f(lo));
    let mut best_k = 0;
    for k in 1..points {
        let x = lo + h * T::c(k as f64);
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
            best_k = k;
        }
    }
    let a = lo + h * T::c(best_k.saturating_sub(1) as f64);
    let b = lo + h * T::c((best_k + 1).min(points - 1) as f64);
    let refined = golden_section(&mut f, a, b, tol);
    if refined.1 < best.1 {
        refined
    } else {
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimum() {
        let (x, fx) = golden_section(|x: f64| (x - 0.3) * (x - 0.3) + 1.0, -2.0, 5.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((fx - 1.0).abs() < 1e-12);
    }

    #[test]
    fn difference_driven_search() {
        let x = golden_section_by_diff(|a: f64, b: f64| (a - b) * (a + b - 2.0 * 0.3), -4.0, 4.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-11);
    }

    #[test]
    fn grid_finds_global_basin() {
        let f = |x: f64| (3.0 * x).cos() + 0.1 * x;
        let (x, _) = grid_then_golden(f, -4.0, 4.0, 200, 1e-10);
        assert!((x + std::f64::consts::PI).abs() < 0.05);
        assert!(f(x) <= f(-std::f64::consts::PI));
    }
}
