//! Real polynomial helpers: evaluation, products and roots.
//!
//! Coefficient slices are in *descending* powers unless a function says
//! otherwise. A filter polynomial `a0 + a1 z^-1 + ... + an z^-n` has the same
//! coefficient order as the descending polynomial `a0 z^n + ... + an` whose
//! roots are the filter's zeros (or poles).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Horner evaluation of a descending-power polynomial at a complex point.
pub fn eval_descending(coeffs: &[f64], x: Complex64) -> Complex64 {
    coeffs
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// Evaluates `c0 + c1 q + c2 q^2 + ...` at `q`.
pub fn eval_ascending(coeffs: &[f64], q: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * q + c)
}

/// Coefficient convolution. Works for either ordering as long as both
/// operands use the same one.
pub fn multiply(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Expands `gain * prod (x - r_i)` into real descending coefficients.
///
/// Conjugate pairs are expected; the imaginary residue is discarded.
pub fn from_roots(roots: &[Complex64], gain: f64) -> Vec<f64> {
    let mut acc = vec![Complex64::new(gain, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); acc.len() + 1];
        for (i, &c) in acc.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        acc = next;
    }
    acc.into_iter().map(|c| c.re).collect()
}

/// All complex roots of a descending-power polynomial.
///
/// Leading zeros are ignored. Roots come from the eigenvalues of the
/// companion matrix and are then refined by a few Newton steps on the
/// original polynomial.
pub fn roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let start = coeffs
        .iter()
        .position(|&c| c != 0.0)
        .ok_or_else(|| Error::Domain("zero polynomial has no well-defined roots".into()))?;
    let c = &coeffs[start..];
    let degree = c.len() - 1;
    if degree == 0 {
        return Ok(Vec::new());
    }
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("polynomial has non-finite coefficients".into()));
    }

    // trailing zeros are exact roots at the origin
    let trailing = c.iter().rev().take_while(|&&x| x == 0.0).count();
    let core = &c[..c.len() - trailing];
    let core_degree = core.len() - 1;

    let mut out: Vec<Complex64> = Vec::with_capacity(degree);
    if core_degree == 1 {
        out.push(Complex64::new(-core[1] / core[0], 0.0));
    } else if core_degree > 1 {
        let lead = core[0];
        let mut companion = DMatrix::<f64>::zeros(core_degree, core_degree);
        for j in 0..core_degree {
            companion[(0, j)] = -core[j + 1] / lead;
        }
        for i in 1..core_degree {
            companion[(i, i - 1)] = 1.0;
        }
        let schur = companion
            .try_schur(f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Numerical("companion-matrix Schur iteration did not converge".into()))?;
        for z in schur.complex_eigenvalues().iter() {
            out.push(polish(core, *z));
        }
    }
    out.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), trailing));
    Ok(out)
}

fn polish(coeffs: &[f64], mut z: Complex64) -> Complex64 {
    let deriv: Vec<f64> = {
        let n = coeffs.len() - 1;
        coeffs[..n]
            .iter()
            .enumerate()
            .map(|(i, &c)| c * (n - i) as f64)
            .collect()
    };
    for _ in 0..4 {
        let f = eval_descending(coeffs, z);
        let df = eval_descending(&deriv, z);
        if df.norm() == 0.0 {
            break;
        }
        let step = f / df;
        let candidate = z - step;
        if !candidate.re.is_finite() || !candidate.im.is_finite() {
            break;
        }
        if eval_descending(coeffs, candidate).norm() <= f.norm() {
            z = candidate;
        } else {
            break;
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_re(mut v: Vec<Complex64>) -> Vec<f64> {
        v.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        v.into_iter().map(|z| z.re).collect()
    }

    #[test]
    fn real_roots() {
        // (x - 1)(x - 2)(x + 3)
        let c = from_roots(
            &[1.0, 2.0, -3.0].map(|r| Complex64::new(r, 0.0)),
            2.0,
        );
        let r = sorted_re(roots(&c).unwrap());
        assert!((r[0] + 3.0).abs() < 1e-12);
        assert!((r[1] - 1.0).abs() < 1e-12);
        assert!((r[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn complex_pair_and_origin() {
        // x^2 (x^2 + 1)
        let r = roots(&[1.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.len(), 4);
        assert_eq!(r.iter().filter(|z| z.norm() == 0.0).count(), 2);
        assert!(r.iter().any(|z| (z - Complex64::new(0.0, 1.0)).norm() < 1e-12));
    }

    #[test]
    fn leading_zeros_and_constants() {
        assert!(roots(&[0.0, 0.0, 3.0]).unwrap().is_empty());
        assert!(roots(&[0.0, 0.0]).is_err());
        let r = roots(&[0.0, 2.0, -1.0]).unwrap();
        assert_eq!(r, vec![Complex64::new(0.5, 0.0)]);
    }

    #[test]
    fn multiply_matches_expansion() {
        assert_eq!(multiply(&[1.0, 1.0], &[1.0, -1.0]), vec![1.0, 0.0, -1.0]);
        assert!(multiply(&[], &[1.0]).is_empty());
    }
}
