//! Realizable noise-shaping filters.
//!
//! Two routes are provided:
//!
//! * [`yule_walker_fit`] matches a target amplitude (normally `r_opt`) with a
//!   stable ARMA filter and rescales it to a unit impulse-response head.
//! * [`norm_constrained_fir`] minimizes `||P R||^2` over FIR `R` with
//!   `R[inf] = 1` and `||R||^2 <= budget`, which is a trust-region subproblem
//!   in the free taps solved through its secular equation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::design::{self, DesignProblem};
use crate::error::{Error, Result};
use crate::poly;
use crate::spectral::{self, AmplitudeResponse, RationalDiscreteTF};

/// Upper limit on impulse-response truncation.
pub const MAX_IMPULSE_LENGTH: usize = 16384;
/// Relative tail energy at which impulse responses are truncated.
pub const TAIL_ENERGY_TOL: f64 = 1e-14;
/// Roots closer than this to the unit circle are pulled inside.
pub const ROOT_SNAP: f64 = 1e-8;

/// FIR noise shaper `h0 + h1 z^-1 + ... + hM z^-M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirFilter {
    pub taps: Vec<f64>,
}

impl FirFilter {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::Parameter("FIR filter needs at least one tap".into()));
        }
        Ok(Self { taps })
    }

    pub fn to_tf(&self) -> RationalDiscreteTF {
        RationalDiscreteTF::fir(self.taps.clone()).expect("taps are finite and nonempty")
    }

    pub fn norm_sq(&self) -> f64 {
        self.taps.iter().map(|h| h * h).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    /// Yule-Walker magnitude fit of `r_opt`.
    Yw,
    /// Norm-constrained FIR least squares.
    Qcqp,
}

/// Evaluation of a realizable shaper against the ideal design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub filter: RationalDiscreteTF,
    /// `||p R||^2 / (nu - ||R||^2)`; infinite when infeasible.
    pub achieved_mse: f64,
    /// `alpha_opt` of the same problem.
    pub ideal_mse: f64,
    pub norm_sq: f64,
    pub feasible: bool,
    /// Lagrange multiplier of the norm constraint (FIR route only).
    pub kkt_multiplier: Option<f64>,
}

impl FitReport {
    /// `10 log10(achieved / ideal)`.
    pub fn loss_db(&self) -> f64 {
        design::db(self.achieved_mse) - design::db(self.ideal_mse)
    }
}

/// Objective of the shaping problem for an arbitrary amplitude `r`:
/// returns `(mse, ||r||^2)`, with `mse = inf` when `||r||^2 >= nu`.
pub fn shaped_mse(r: &AmplitudeResponse, p: &AmplitudeResponse, gamma: f64) -> Result<(f64, f64)> {
    let nu = gamma + 1.0;
    let norm_sq = spectral::l2_norm_sq(r);
    let pr = p.zip_with(r, |a, b| a * b)?;
    let mse = if norm_sq < nu {
        spectral::l2_norm_sq(&pr) / (nu - norm_sq)
    } else {
        f64::INFINITY
    };
    Ok((mse, norm_sq))
}

/// Evaluates a stable filter `R` against the plant magnitude `p`.
///
/// `|R|` is evaluated exactly at every node and at the band edge of `p`.
pub fn evaluate_fit(
    filter: &RationalDiscreteTF,
    p: &AmplitudeResponse,
    gamma: f64,
) -> Result<FitReport> {
    filter.ensure_stable()?;
    let prob = DesignProblem::new(p.clone(), gamma)?;
    let ideal = design::solve_alpha_opt(&prob)?;
    let nu = prob.nu();

    let r = spectral::amplitude_of_tf(filter, p.grid());
    let norm_sq = spectral::l2_norm_sq(&r);
    let pr = p.map_with_omega(|w, v| v * filter.eval(w).norm())?;
    let feasible = norm_sq < nu;
    let achieved_mse = if feasible {
        spectral::l2_norm_sq(&pr) / (nu - norm_sq)
    } else {
        f64::INFINITY
    };
    Ok(FitReport {
        filter: filter.clone(),
        achieved_mse,
        ideal_mse: ideal.distortion,
        norm_sq,
        feasible,
        kkt_multiplier: None,
    })
}

/// Impulse response by direct recursion.
pub fn impulse_response(filter: &RationalDiscreteTF, length: usize) -> Vec<f64> {
    let num = filter.num();
    let den = filter.den();
    let mut h = Vec::with_capacity(length);
    for n in 0..length {
        let mut y = num.get(n).copied().unwrap_or(0.0);
        for (k, &a) in den.iter().enumerate().skip(1) {
            if k > n {
                break;
            }
            y -= a * h[n - k];
        }
        h.push(y);
    }
    h
}

/// Impulse response truncated where the geometric tail estimate from the
/// largest pole radius falls below [`TAIL_ENERGY_TOL`] of the accumulated
/// energy, capped at [`MAX_IMPULSE_LENGTH`].
pub fn truncated_impulse_response(filter: &RationalDiscreteTF) -> Result<Vec<f64>> {
    filter.ensure_stable()?;
    if filter.is_fir() {
        return Ok(filter.num().to_vec());
    }
    let rho = filter.pole_radius()?;
    let q = filter.den().len() - 1;
    let decay = rho * rho / (1.0 - rho * rho);
    let min_len = filter.num().len().max(q + 1);

    let mut h = Vec::with_capacity(1024);
    let mut energy = 0.0;
    let num = filter.num();
    let den = filter.den();
    for n in 0..MAX_IMPULSE_LENGTH {
        let mut y = num.get(n).copied().unwrap_or(0.0);
        for (k, &a) in den.iter().enumerate().skip(1) {
            if k > n {
                break;
            }
            y -= a * h[n - k];
        }
        h.push(y);
        energy += y * y;
        if n + 1 >= min_len {
            // recent-window peak times the geometric tail of the slowest mode
            let window = h[n + 1 - q.min(n + 1)..]
                .iter()
                .map(|x| x * x)
                .fold(0.0, f64::max);
            let tail = window * decay * (q as f64 + 1.0);
            if tail <= TAIL_ENERGY_TOL * energy {
                break;
            }
        }
    }
    Ok(h)
}

/// Squared norm of a stable filter from its truncated impulse response.
pub fn filter_norm_sq(filter: &RationalDiscreteTF) -> Result<f64> {
    Ok(truncated_impulse_response(filter)?.iter().map(|x| x * x).sum())
}

/// Scales the numerator so the impulse response starts with exactly 1.
pub fn normalize_head(filter: &RationalDiscreteTF) -> Result<RationalDiscreteTF> {
    let head = filter.head();
    if head == 0.0 || !head.is_finite() {
        return Err(Error::DegenerateFilter(format!(
            "impulse-response head is {head}"
        )));
    }
    if head == 1.0 {
        return Ok(filter.clone());
    }
    let mut num: Vec<f64> = filter.num().iter().map(|c| c / head).collect();
    num[0] = 1.0;
    RationalDiscreteTF::new(num, filter.den().to_vec())
}

/// Levinson-Durbin recursion on autocorrelation `r[0..=order]`.
///
/// Returns the monic prediction polynomial and the final prediction error.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<(Vec<f64>, f64)> {
    if r.len() <= order {
        return Err(Error::Parameter(format!(
            "need {} autocorrelation lags, got {}",
            order + 1,
            r.len()
        )));
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    if err <= 0.0 {
        return Err(Error::Numerical(format!(
            "nonpositive zero-lag autocorrelation {err}"
        )));
    }
    for m in 1..=order {
        let acc: f64 = (0..m).map(|i| a[i] * r[m - i]).sum();
        let k = -acc / err;
        if k.is_nan() || k.abs() >= 1.0 {
            return Err(Error::Numerical(format!(
                "reflection coefficient {k} at stage {m} is not inside (-1, 1)"
            )));
        }
        let prev = a.clone();
        for i in 1..m {
            a[i] = prev[i] + k * prev[m - i];
        }
        a[m] = k;
        err *= 1.0 - k * k;
        if err <= 0.0 {
            return Err(Error::Numerical(format!(
                "prediction error vanished at stage {m}"
            )));
        }
    }
    Ok((a, err))
}

/// `c_k = (1/2pi) int s(omega) cos(k omega)`, `k = 0..=order`, for a power
/// spectrum given on the grid.
fn autocorrelation(power: &AmplitudeResponse, order: usize) -> Vec<f64> {
    (0..=order)
        .map(|k| power.mean_of(|w, v| v * (k as f64 * w).cos()))
        .collect()
}

/// Minimum-phase monic factor `B` and gain `g` with `g^2 |B|^2 = S`, where
/// `S(omega) = c_0 + 2 sum c_k cos(k omega)`.
///
/// If `S` dips below zero on the grid it is raised by a constant first.
fn spectral_factor(c: &[f64], grid: spectral::FrequencyGrid) -> Result<(Vec<f64>, f64)> {
    let q = c.len() - 1;
    let mut c = c.to_vec();
    let eval = |c: &[f64], w: f64| {
        c[0] + 2.0 * (1..c.len()).map(|k| c[k] * (k as f64 * w).cos()).sum::<f64>()
    };
    let floor = 1e-9 * c[0].abs().max(f64::MIN_POSITIVE);
    let min = grid.omegas().map(|w| eval(&c, w)).fold(f64::INFINITY, f64::min);
    if min < floor {
        c[0] += floor - min;
    }
    if q == 0 {
        return Ok((vec![1.0], c[0].sqrt()));
    }

    // z^q S(z) = c_q z^2q + ... + c_0 z^q + ... + c_q
    let mut desc: Vec<f64> = c.iter().rev().copied().collect();
    desc.extend(c[1..].iter().copied());
    let mut roots = poly::roots(&desc)?;
    roots.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let inside: Vec<Complex64> = roots
        .into_iter()
        .take(q)
        .map(|z| {
            let m = z.norm();
            if m > 1.0 - ROOT_SNAP {
                z * ((1.0 - ROOT_SNAP) / m)
            } else {
                z
            }
        })
        .collect();
    let b = poly::from_roots(&inside, 1.0);

    // monic minimum-phase B has zero mean log-magnitude
    let s = AmplitudeResponse::from_fn(grid, |w| eval(&c, w).max(floor))?;
    let gain = (0.5 * spectral::log_geometric_mean(&s)?).exp();
    Ok((b, gain))
}

/// Alternations of the AR and MA steps in [`yule_walker_fit`].
pub const YW_MAX_SWEEPS: usize = 60;

/// Stable IIR filter of the given order whose magnitude matches `target`.
///
/// 1. Autocorrelation of `target^2 / |B|^2` and Levinson-Durbin give the
///    denominator `A` (with `B = 1` on the first sweep).
/// 2. The residual spectrum `target^2 |A|^2` is fitted by a moving-average
///    spectrum of the same order, which is spectrally factored with all
///    zeros reflected inside the unit circle, giving `B`.
/// 3. Steps 1 and 2 alternate; the sweep with the smallest least-squares
///    magnitude error is kept and normalized to a unit impulse-response head.
///
/// An exact ARMA target of the same order is a fixed point of the sweeps.
pub fn yule_walker_fit(target: &AmplitudeResponse, order: usize) -> Result<RationalDiscreteTF> {
    let grid = target.grid();
    if order < 1 || order > grid.len() / 4 {
        return Err(Error::Parameter(format!(
            "order must be in 1..={}, got {order}",
            grid.len() / 4
        )));
    }
    if let Some((index, &value)) = target.values().iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::NonPositiveSample { index, value });
    }

    let power = target.map(|v| v * v)?;
    let mut ma = RationalDiscreteTF::identity();
    let mut best: Option<(f64, RationalDiscreteTF)> = None;
    for _ in 0..YW_MAX_SWEEPS {
        let ar_input = power.map_with_omega(|w, v| v / ma.eval(w).norm_sqr())?;
        let (a, _) = levinson_durbin(&autocorrelation(&ar_input, order), order)?;
        let inv_ar = RationalDiscreteTF::new(vec![1.0], a.clone())?;

        let residual = power.map_with_omega(|w, v| v / inv_ar.eval(w).norm_sqr())?;
        let (b, gain) = spectral_factor(&autocorrelation(&residual, order), grid)?;
        ma = RationalDiscreteTF::fir(b.clone())?;

        let num: Vec<f64> = b.iter().map(|x| x * gain).collect();
        let candidate = RationalDiscreteTF::new(num, a)?;
        let err = target.mean_of(|w, v| (candidate.eval(w).norm() - v).powi(2));
        let improved = best.as_ref().map_or(f64::INFINITY, |(e, _)| *e);
        if err < improved {
            let converged = improved - err <= 1e-12 * err.max(f64::MIN_POSITIVE);
            best = Some((err, candidate));
            if converged {
                break;
            }
        } else {
            break;
        }
    }
    let (_, fitted) = best.expect("at least one sweep runs");
    let fitted = normalize_head(&fitted)?;
    fitted.ensure_stable()?;
    Ok(fitted)
}

/// Solution of the norm-constrained FIR problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcqpSolution {
    pub fir: FirFilter,
    /// `||P R||^2`.
    pub objective: f64,
    /// `||R||^2`.
    pub norm_sq: f64,
    /// Multiplier `mu >= 0`; infinite when the budget pins every free tap to
    /// zero.
    pub kkt_multiplier: f64,
    /// `||(A + mu I) x + b||`.
    pub stationarity_residual: f64,
    /// `||b||`, the scale of the stationarity residual.
    pub gradient_norm: f64,
    /// `budget - 1 - ||x||^2`.
    pub slack: f64,
}

/// Gram matrix `G[j][k] = <z^-j P, z^-k P>`, `j, k = 0..=order`, from the
/// truncated impulse response of `P`.
pub fn gram_from_impulse(p: &RationalDiscreteTF, order: usize) -> Result<DMatrix<f64>> {
    let h = truncated_impulse_response(p)?;
    let lag = |d: usize| -> f64 {
        if d >= h.len() {
            0.0
        } else {
            h[..h.len() - d].iter().zip(&h[d..]).map(|(a, b)| a * b).sum()
        }
    };
    let rho: Vec<f64> = (0..=order).map(lag).collect();
    Ok(toeplitz(&rho))
}

/// The same Gram matrix from the plant magnitude,
/// `G[j][k] = (1/2pi) int p^2 cos((j - k) omega)`.
pub fn gram_from_spectrum(p: &AmplitudeResponse, order: usize) -> Result<DMatrix<f64>> {
    let power = p.map(|v| v * v)?;
    Ok(toeplitz(&autocorrelation(&power, order)))
}

fn toeplitz(rho: &[f64]) -> DMatrix<f64> {
    let n = rho.len();
    DMatrix::from_fn(n, n, |i, j| rho[i.abs_diff(j)])
}

/// Condition number above which the unconstrained minimizer is not trusted.
pub const MAX_CONDITION: f64 = 1e13;

/// Minimizes `h' G h` over `h = (1, x)` subject to `||h||^2 <= budget`.
pub fn solve_norm_constrained(gram: &DMatrix<f64>, budget: f64) -> Result<QcqpSolution> {
    let m = gram.nrows() - 1;
    if !(budget.is_finite() && budget >= 1.0) {
        return Err(Error::Domain(format!(
            "norm budget must be at least 1, got {budget}"
        )));
    }
    let g00 = gram[(0, 0)];
    let a = gram.view((1, 1), (m, m)).into_owned();
    let b = gram.view((1, 0), (m, 1)).column(0).into_owned();
    let radius_sq = budget - 1.0;
    let b_norm = b.norm();

    let finish = |x: DVector<f64>, mu: f64| -> QcqpSolution {
        let objective = g00 + 2.0 * b.dot(&x) + x.dot(&(&a * &x));
        let residual = if mu.is_finite() {
            (&a * &x + &x * mu + &b).norm()
        } else {
            0.0
        };
        let mut taps = vec![1.0];
        taps.extend(x.iter());
        QcqpSolution {
            norm_sq: 1.0 + x.norm_squared(),
            slack: radius_sq - x.norm_squared(),
            fir: FirFilter { taps },
            objective,
            kkt_multiplier: mu,
            stationarity_residual: residual,
            gradient_norm: b_norm,
        }
    };

    if m == 0 || b_norm == 0.0 {
        return Ok(finish(DVector::zeros(m), 0.0));
    }
    if radius_sq == 0.0 {
        return Ok(finish(DVector::zeros(m), f64::INFINITY));
    }

    let eig = SymmetricEigen::new(a.clone());
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if lmax <= 0.0 || lmin < -1e-10 * lmax {
        return Err(Error::Numerical(format!(
            "Gram matrix is indefinite (eigenvalues in [{lmin:e}, {lmax:e}])"
        )));
    }
    let cond = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };

    // coordinates of b in the eigenbasis
    let beta = eig.eigenvectors.transpose() * &b;
    let lam = eig.eigenvalues.clone();
    let step_sq = |mu: f64| -> f64 {
        beta.iter()
            .zip(lam.iter())
            .map(|(bi, li)| (bi / (li.max(0.0) + mu)).powi(2))
            .sum()
    };
    let solve = |mu: f64| -> Result<DVector<f64>> {
        let shifted = &a + DMatrix::identity(m, m) * mu;
        let chol = shifted.cholesky().ok_or_else(|| {
            Error::Numerical(format!(
                "shifted Gram matrix not positive definite (mu = {mu:e}, condition {cond:e})"
            ))
        })?;
        Ok(-chol.solve(&b))
    };

    if cond < MAX_CONDITION {
        let x0 = solve(0.0)?;
        if x0.norm_squared() <= radius_sq {
            return Ok(finish(x0, 0.0));
        }
    } else if step_sq(lmax * 1e-15) <= radius_sq {
        return Err(Error::Numerical(format!(
            "ill-conditioned Gram matrix (condition estimate {cond:e}) with an interior minimizer"
        )));
    }

    // ||x(mu)||^2 decreases from above radius_sq at 0+ to 0 at infinity
    let mut lo = 0.0;
    let mut hi = b_norm / radius_sq.sqrt();
    while step_sq(hi) > radius_sq {
        hi *= 2.0;
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let s = step_sq(mid);
        if (s - radius_sq).abs() <= 1e-14 * radius_sq.max(1.0) {
            lo = mid;
            hi = mid;
            break;
        }
        if s > radius_sq {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let mut x = solve(mu)?;
    // land exactly on the sphere; the rescale is within rounding of 1
    let scale = (radius_sq / x.norm_squared()).sqrt();
    if (scale - 1.0).abs() < 1e-6 {
        x *= scale;
    }
    Ok(finish(x, mu))
}

/// Exact minimizer of `||P R||^2` over FIR `R` of the given order with unit
/// head and `||R||^2 <= norm_budget`, Gram matrix from the impulse response.
pub fn norm_constrained_fir(
    p: &RationalDiscreteTF,
    order: usize,
    norm_budget: f64,
) -> Result<QcqpSolution> {
    solve_norm_constrained(&gram_from_impulse(p, order)?, norm_budget)
}

/// As [`norm_constrained_fir`], with the Gram matrix computed from a plant
/// magnitude on the grid (band-limited plants included).
pub fn norm_constrained_fir_spectral(
    p: &AmplitudeResponse,
    order: usize,
    norm_budget: f64,
) -> Result<QcqpSolution> {
    solve_norm_constrained(&gram_from_spectrum(p, order)?, norm_budget)
}

/// Fits a realizable shaper for `prob` by the chosen method and evaluates it.
///
/// The FIR route uses `||r_opt||^2` as its norm budget.
pub fn fit_design(prob: &DesignProblem, method: FitMethod, order: usize) -> Result<FitReport> {
    let ideal = design::solve_alpha_opt(prob)?;
    match method {
        FitMethod::Yw => {
            let filter = yule_walker_fit(&ideal.r_opt, order)?;
            evaluate_fit(&filter, prob.p(), prob.gamma())
        }
        FitMethod::Qcqp => {
            let sol = norm_constrained_fir_spectral(prob.p(), order, ideal.norm_r_sq)?;
            let mut report = evaluate_fit(&sol.fir.to_tf(), prob.p(), prob.gamma())?;
            report.kkt_multiplier = Some(sol.kkt_multiplier);
            Ok(report)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::FrequencyGrid;
    use proptest::prelude::*;

    fn grid() -> FrequencyGrid {
        FrequencyGrid::new(4096).unwrap()
    }

    #[test]
    fn impulse_examples() {
        let ar = RationalDiscreteTF::new(vec![1.0], vec![1.0, -0.5]).unwrap();
        assert_eq!(impulse_response(&ar, 3), vec![1.0, 0.5, 0.25]);
        let fir = RationalDiscreteTF::fir(vec![1.0, -1.0]).unwrap();
        assert_eq!(impulse_response(&fir, 4), vec![1.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn truncation_tail_is_negligible() {
        let filters = [
            RationalDiscreteTF::new(vec![1.0], vec![1.0, -0.5]).unwrap(),
            RationalDiscreteTF::new(vec![1.0, 0.4], vec![1.0, -1.8, 0.9]).unwrap(),
            // double pole
            RationalDiscreteTF::new(vec![1.0], vec![1.0, -1.9, 0.9025]).unwrap(),
            crate::simulate::discretize_plant(&crate::example_plant(), 1).unwrap(),
            crate::simulate::discretize_plant(&crate::example_plant(), 4).unwrap(),
        ];
        for f in &filters {
            let h = truncated_impulse_response(f).unwrap();
            assert!(h.len() < MAX_IMPULSE_LENGTH);
            let long = impulse_response(f, 4 * h.len() + 2000);
            let total: f64 = long.iter().map(|x| x * x).sum();
            let tail: f64 = long[h.len()..].iter().map(|x| x * x).sum();
            assert!(tail < 1e-12 * total, "tail {tail} total {total}");
        }
    }

    #[test]
    fn normalize_head_examples() {
        let f = RationalDiscreteTF::new(vec![2.0, 1.0], vec![1.0, 0.5]).unwrap();
        let n = normalize_head(&f).unwrap();
        assert_eq!(n.num(), &[1.0, 0.5]);
        assert_eq!(normalize_head(&n).unwrap(), n);
        assert_eq!(impulse_response(&n, 1)[0], 1.0);
        let zero = RationalDiscreteTF::new(vec![0.0, 1.0], vec![1.0]).unwrap();
        assert!(matches!(normalize_head(&zero), Err(Error::DegenerateFilter(_))));
    }

    #[test]
    fn levinson_recovers_ar1() {
        // autocorrelation of 1/(1 - 0.6 z^-1): r_k = 0.6^k / (1 - 0.36)
        let r: Vec<f64> = (0..4).map(|k| 0.6f64.powi(k) / 0.64).collect();
        let (a, e) = levinson_durbin(&r, 3).unwrap();
        assert!((a[1] + 0.6).abs() < 1e-12);
        assert!(a[2].abs() < 1e-12 && a[3].abs() < 1e-12);
        assert!((e - 1.0).abs() < 1e-12);
        assert!(levinson_durbin(&[1.0, 1.0], 1).is_err());
    }

    #[test]
    fn yule_walker_constant_target() {
        let g = grid();
        let one = AmplitudeResponse::constant(g, 1.0).unwrap();
        for order in [1, 3, 4] {
            let f = yule_walker_fit(&one, order).unwrap();
            assert_eq!(impulse_response(&f, 1)[0], 1.0);
            let amp = spectral::amplitude_of_tf(&f, g);
            assert!(amp.values().iter().all(|v| (v - 1.0).abs() < 1e-6));
        }
    }

    #[test]
    fn yule_walker_recovers_pole() {
        let g = grid();
        let known = RationalDiscreteTF::new(vec![1.0], vec![1.0, -0.5]).unwrap();
        let target = spectral::amplitude_of_tf(&known, g);
        let f = yule_walker_fit(&target, 1).unwrap();
        let poles = f.poles().unwrap();
        assert_eq!(poles.len(), 1);
        assert!((poles[0].re - 0.5).abs() < 1e-3 && poles[0].im.abs() < 1e-9);
    }

    #[test]
    fn yule_walker_self_consistency() {
        let g = grid();
        let known = RationalDiscreteTF::new(vec![1.0, -0.3, 0.2], vec![1.0, -1.2, 0.5]).unwrap();
        let target = spectral::amplitude_of_tf(&known, g);
        for order in [2, 3, 4] {
            let f = yule_walker_fit(&target, order).unwrap();
            assert!(f.is_stable());
            let amp = spectral::amplitude_of_tf(&f, g);
            let rms = (amp
                .zip_with(&target, |a, b| (a - b) * (a - b))
                .unwrap()
                .mean())
            .sqrt();
            assert!(rms < 1e-3, "order {order}: rms {rms}");
        }
    }

    #[test]
    fn yule_walker_parameter_errors() {
        let g = FrequencyGrid::new(64).unwrap();
        let one = AmplitudeResponse::constant(g, 1.0).unwrap();
        assert!(matches!(yule_walker_fit(&one, 17), Err(Error::Parameter(_))));
        assert!(matches!(yule_walker_fit(&one, 0), Err(Error::Parameter(_))));
        let zero = AmplitudeResponse::constant(g, 0.0).unwrap();
        assert!(yule_walker_fit(&zero, 2).is_err());
    }

    #[test]
    fn qcqp_identity_plant() {
        let p = RationalDiscreteTF::identity();
        for budget in [1.0, 1.5, 10.0] {
            let s = norm_constrained_fir(&p, 3, budget).unwrap();
            assert_eq!(s.fir.taps, vec![1.0, 0.0, 0.0, 0.0]);
            assert_eq!(s.kkt_multiplier, 0.0);
        }
    }

    #[test]
    fn qcqp_first_difference_plant() {
        // minimize 1 + (1 + h1)^2 + h1^2: h1 = -1/2 when allowed
        let p = RationalDiscreteTF::fir(vec![1.0, 1.0]).unwrap();
        for budget in [1.25, 2.0] {
            let s = norm_constrained_fir(&p, 1, budget).unwrap();
            assert!((s.fir.taps[1] + 0.5).abs() < 1e-12);
            assert!((s.norm_sq - 1.25).abs() < 1e-12);
            assert_eq!(s.kkt_multiplier, 0.0);
            assert!((s.objective - 1.5).abs() < 1e-12);
        }
        let s = norm_constrained_fir(&p, 1, 1.0).unwrap();
        assert_eq!(s.fir.taps, vec![1.0, 0.0]);

        // active constraint: h1 = -0.3 on the boundary 1 + h1^2 = 1.09
        let s = norm_constrained_fir(&p, 1, 1.09).unwrap();
        assert!((s.fir.taps[1] + 0.3).abs() < 1e-9);
        assert!(s.kkt_multiplier > 0.0);
        // 2 (1 + mu) x + 2 b ... with A = 2, b = 1: (2 + mu) x = -1
        assert!((s.kkt_multiplier - (1.0 / 0.3 - 2.0)).abs() < 1e-7);
    }

    #[test]
    fn gram_routes_agree() {
        let g = FrequencyGrid::new(8192).unwrap();
        let p = RationalDiscreteTF::new(vec![0.5, 0.2, -0.1], vec![1.0, -1.1, 0.3]).unwrap();
        let from_h = gram_from_impulse(&p, 4).unwrap();
        let from_s = gram_from_spectrum(&spectral::amplitude_of_tf(&p, g), 4).unwrap();
        assert!((from_h - from_s).abs().max() < 1e-10);
    }

    #[test]
    fn qcqp_rejects_bad_budget() {
        let p = RationalDiscreteTF::fir(vec![1.0, 1.0]).unwrap();
        assert!(norm_constrained_fir(&p, 1, 0.5).is_err());
    }

    #[test]
    fn evaluate_examples() {
        let g = FrequencyGrid::new(8192).unwrap();
        let p = spectral::ct_frequency_map(&crate::example_plant(), 1, g).unwrap();
        let gamma = 30.0;
        let uniform = evaluate_fit(&RationalDiscreteTF::identity(), &p, gamma).unwrap();
        let want = spectral::l2_norm_sq(&p) / gamma;
        assert!((uniform.achieved_mse - want).abs() < 1e-12 * want);
        assert!(uniform.feasible);

        let ideal = design::solve_alpha_opt(&DesignProblem::new(p.clone(), gamma).unwrap()).unwrap();
        let (mse, _) = shaped_mse(&ideal.r_opt, &p, gamma).unwrap();
        assert!((mse - ideal.alpha_opt).abs() < 1e-8 * mse);

        // ||R||^2 = 1 + 36 >= nu = 31
        let loud = RationalDiscreteTF::fir(vec![1.0, 6.0]).unwrap();
        let r = evaluate_fit(&loud, &p, gamma).unwrap();
        assert!(!r.feasible);
        assert!(r.achieved_mse.is_infinite());
    }

    #[test]
    fn fit_design_methods() {
        let g = FrequencyGrid::new(4096).unwrap();
        let p = spectral::ct_frequency_map(&crate::example_plant(), 1, g).unwrap();
        let prob = DesignProblem::new(p, design::gamma_from_bits(4, 4.0)).unwrap();
        for method in [FitMethod::Yw, FitMethod::Qcqp] {
            let r = fit_design(&prob, method, 4).unwrap();
            assert!(r.feasible);
            assert!(r.achieved_mse >= r.ideal_mse - 1e-9);
            assert_eq!(impulse_response(&r.filter, 1)[0], 1.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn qcqp_kkt(
            c1 in -0.9f64..0.9, c2 in -0.9f64..0.9, n1 in -1.0f64..1.0,
            order in 1usize..6, budget in 1.001f64..3.0,
        ) {
            let den = poly::multiply(&[1.0, -c1], &[1.0, -c2]);
            let p = RationalDiscreteTF::new(vec![1.0, n1], den).unwrap();
            let s = norm_constrained_fir(&p, order, budget).unwrap();
            prop_assert!(s.stationarity_residual <= 1e-8 * s.gradient_norm.max(1e-300));
            prop_assert!(s.slack >= -1e-8);
            if s.kkt_multiplier > 0.0 {
                prop_assert!(s.slack.abs() <= 1e-8);
            }
            prop_assert_eq!(s.fir.taps[0], 1.0);
        }

        #[test]
        fn qcqp_objective_monotone_in_budget(c1 in -0.95f64..0.95, n1 in -1.0f64..1.0) {
            let p = RationalDiscreteTF::new(vec![1.0, n1], vec![1.0, -c1]).unwrap();
            let mut last = f64::INFINITY;
            for budget in [1.0, 1.01, 1.1, 1.5, 2.0, 4.0, 16.0] {
                let s = norm_constrained_fir(&p, 4, budget).unwrap();
                prop_assert!(s.objective <= last + 1e-12);
                last = s.objective;
            }
        }
    }
}
