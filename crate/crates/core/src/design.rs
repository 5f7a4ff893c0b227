//! Optimal noise-shaping amplitude and the rate-distortion quantities
//! derived from it.
//!
//! For a plant magnitude `p` and `nu = gamma + 1`, the optimal shaping
//! amplitude is `r_alpha = theta(alpha) / sqrt(p^2 + alpha)` where `theta`
//! normalizes `r_alpha` to zero mean log-amplitude. The optimal `alpha` is the
//! unique root of `theta^2(alpha) / alpha = nu`, and the minimum output MSE
//! per unit input variance equals that root.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, AmplitudeResponse};

/// Tolerance of the degenerate (almost-constant plant) branch.
pub const ALMOST_CONSTANT_TOL: f64 = 1e-9;

const BRACKET_LIMIT: usize = 200;
const BISECTION_REL_WIDTH: f64 = 1e-12;

/// `10 log10(x)`.
pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignProblem {
    p: AmplitudeResponse,
    gamma: f64,
}

impl DesignProblem {
    pub fn new(p: AmplitudeResponse, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Domain(format!(
                "gamma must be positive (nu > 1), got gamma = {gamma}"
            )));
        }
        if p.is_zero() {
            return Err(Error::Domain("plant magnitude is identically zero".into()));
        }
        Ok(Self { p, gamma })
    }

    pub fn from_nu(p: AmplitudeResponse, nu: f64) -> Result<Self> {
        Self::new(p, nu - 1.0)
    }

    pub fn p(&self) -> &AmplitudeResponse {
        &self.p
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn nu(&self) -> f64 {
        self.gamma + 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalDesign {
    pub alpha_opt: f64,
    pub theta_opt: f64,
    pub r_opt: AmplitudeResponse,
    /// Minimum output MSE per unit input variance, `Phi(alpha_opt)`.
    pub distortion: f64,
    /// `C(alpha_opt) = ||r_opt||^2`.
    pub norm_r_sq: f64,
    /// `N(alpha_opt) = ||p r_opt||^2`.
    pub n_of_alpha: f64,
    pub nu: f64,
    /// Set when the plant was almost constant and `r_opt = 1` was returned.
    pub degenerate: bool,
}

impl OptimalDesign {
    /// `nu - C(alpha_opt)`, positive for every feasible design.
    pub fn feasibility_margin(&self) -> f64 {
        self.nu - self.norm_r_sq
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must be positive, got {alpha}")))
    }
}

/// `ln theta^2(alpha) = (1/2pi) int ln(p^2 + alpha)`.
fn log_theta_sq(alpha: f64, p: &AmplitudeResponse) -> f64 {
    p.mean_of(|_, v| (v * v + alpha).ln())
}

pub fn theta(alpha: f64, p: &AmplitudeResponse) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((0.5 * log_theta_sq(alpha, p)).exp())
}

/// `N(alpha) = theta^2 (1/2pi) int p^2 / (p^2 + alpha)`.
pub fn capital_n(alpha: f64, p: &AmplitudeResponse) -> Result<f64> {
    let t = theta(alpha, p)?;
    Ok(t * t * p.mean_of(|_, v| v * v / (v * v + alpha)))
}

/// `C(alpha) = ||r_alpha||^2 = theta^2 (1/2pi) int 1 / (p^2 + alpha)`.
pub fn capital_c(alpha: f64, p: &AmplitudeResponse) -> Result<f64> {
    let t = theta(alpha, p)?;
    Ok(t * t * p.mean_of(|_, v| 1.0 / (v * v + alpha)))
}

/// Objective `N / (nu - C)` along the optimal family.
pub fn phi(alpha: f64, prob: &DesignProblem) -> Result<f64> {
    let c = capital_c(alpha, prob.p())?;
    if c >= prob.nu() {
        return Err(Error::Infeasible {
            norm_sq: c,
            nu: prob.nu(),
        });
    }
    Ok(capital_n(alpha, prob.p())? / (prob.nu() - c))
}

/// `r_alpha(omega) = theta(alpha) / sqrt(p^2 + alpha)`.
pub fn optimal_r(alpha: f64, p: &AmplitudeResponse) -> Result<AmplitudeResponse> {
    let t = theta(alpha, p)?;
    p.map(|v| t / (v * v + alpha).sqrt())
}

/// Root of `theta^2(alpha)/alpha = nu` by geometric bisection, plus the
/// quantities of the resulting design.
pub fn solve_alpha_opt(prob: &DesignProblem) -> Result<OptimalDesign> {
    let p = prob.p();
    let nu = prob.nu();

    if spectral::is_almost_constant(p, ALMOST_CONSTANT_TOL) {
        let energy = spectral::l2_norm_sq(p);
        let alpha = energy / prob.gamma();
        let r_opt = AmplitudeResponse::constant(p.grid(), 1.0)?;
        return Ok(OptimalDesign {
            alpha_opt: alpha,
            theta_opt: (energy + alpha).sqrt(),
            r_opt,
            distortion: alpha,
            norm_r_sq: 1.0,
            n_of_alpha: energy,
            nu,
            degenerate: true,
        });
    }

    let ln_nu = nu.ln();
    // decreasing in alpha: +inf at 0+, 0 at infinity
    let gap = |alpha: f64| log_theta_sq(alpha, p) - alpha.ln() - ln_nu;

    let mut lo = 1e-12;
    let mut hi = 1.0;
    let mut steps = 0;
    while gap(hi) > 0.0 {
        hi *= 2.0;
        steps += 1;
        if steps > BRACKET_LIMIT || !hi.is_finite() {
            return Err(Error::Numerical(format!(
                "could not bracket alpha_opt from above for nu = {nu}"
            )));
        }
    }
    steps = 0;
    while gap(lo) < 0.0 {
        lo *= 0.5;
        steps += 1;
        if steps > BRACKET_LIMIT || lo == 0.0 {
            return Err(Error::Numerical(format!(
                "could not bracket alpha_opt from below for nu = {nu}"
            )));
        }
    }

    while hi / lo - 1.0 > BISECTION_REL_WIDTH {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = (lo * hi).sqrt();

    let theta_opt = theta(alpha, p)?;
    let r_opt = optimal_r(alpha, p)?;
    let norm_r_sq = capital_c(alpha, p)?;
    let n_of_alpha = capital_n(alpha, p)?;
    if norm_r_sq >= nu {
        return Err(Error::Infeasible { norm_sq: norm_r_sq, nu });
    }
    Ok(OptimalDesign {
        alpha_opt: alpha,
        theta_opt,
        r_opt,
        distortion: n_of_alpha / (nu - norm_r_sq),
        norm_r_sq,
        n_of_alpha,
        nu,
        degenerate: false,
    })
}

/// `gamma = 3 (2^b - 1)^2 / L_f^2` for a mid-rise quantizer with white
/// uniform error of variance `d^2 / 12` and saturation `L = L_f sigma_u`.
pub fn gamma_from_bits(bits: u32, loading_factor: f64) -> f64 {
    let levels_minus_one = (2f64).powi(bits as i32) - 1.0;
    3.0 * levels_minus_one * levels_minus_one / (loading_factor * loading_factor)
}

/// Bit budget and loading of a mid-rise quantizer sized for an input of
/// standard deviation `sigma_u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub bits: u32,
    pub loading_factor: f64,
    /// Quantization interval `d`.
    pub step: f64,
    /// Saturation level `L`.
    pub saturation: f64,
    pub gamma: f64,
}

impl QuantizerSpec {
    pub fn new(bits: u32, loading_factor: f64, sigma_u: f64) -> Result<Self> {
        if !(1..=52).contains(&bits) {
            return Err(Error::Parameter(format!("bits must be in 1..=52, got {bits}")));
        }
        if !(loading_factor.is_finite() && loading_factor > 0.0) {
            return Err(Error::Parameter(format!(
                "loading factor must be positive, got {loading_factor}"
            )));
        }
        if !(sigma_u.is_finite() && sigma_u > 0.0) {
            return Err(Error::Parameter(format!(
                "quantizer input deviation must be positive, got {sigma_u}"
            )));
        }
        let saturation = loading_factor * sigma_u;
        let step = 2.0 * saturation / ((2f64).powi(bits as i32) - 1.0);
        Ok(Self {
            bits,
            loading_factor,
            step,
            saturation,
            gamma: gamma_from_bits(bits, loading_factor),
        })
    }

    pub fn levels(&self) -> u64 {
        1u64 << self.bits
    }
}

/// `sigma_w^2 = sigma_x^2 / (nu - ||R||^2)`.
pub fn sigma_w_sq_for_norm(norm_r_sq: f64, nu: f64, sigma_x_sq: f64) -> Result<f64> {
    if norm_r_sq >= nu {
        return Err(Error::Infeasible { norm_sq: norm_r_sq, nu });
    }
    Ok(sigma_x_sq / (nu - norm_r_sq))
}

pub fn predicted_sigma_w_sq(
    design: &OptimalDesign,
    sigma_x_sq: f64,
    prob: &DesignProblem,
) -> Result<f64> {
    sigma_w_sq_for_norm(design.norm_r_sq, prob.nu(), sigma_x_sq)
}

/// `||p r||^2 sigma_x^2 / (nu - ||r||^2)`.
pub fn predicted_output_mse(
    design: &OptimalDesign,
    p: &AmplitudeResponse,
    sigma_x_sq: f64,
) -> Result<f64> {
    let sigma_w_sq = sigma_w_sq_for_norm(design.norm_r_sq, design.nu, sigma_x_sq)?;
    let shaped = p.zip_with(&design.r_opt, |a, b| a * b)?;
    Ok(spectral::l2_norm_sq(&shaped) * sigma_w_sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub gamma: f64,
    pub nu: f64,
    pub distortion: f64,
    pub alpha: f64,
}

/// `D(nu, lambda)` for a bit budget: gamma from bits, oversampled plant,
/// optimal alpha.
pub fn rd_point(
    p_base: &AmplitudeResponse,
    lambda: usize,
    bits: u32,
    loading_factor: f64,
) -> Result<RdPoint> {
    let gamma = gamma_from_bits(bits, loading_factor);
    let p = spectral::oversample_response(p_base, lambda)?;
    let design = solve_alpha_opt(&DesignProblem::new(p, gamma)?)?;
    Ok(RdPoint {
        gamma,
        nu: gamma + 1.0,
        distortion: design.distortion,
        alpha: design.alpha_opt,
    })
}

/// `D(nu, lambda)` for an explicit `nu`.
pub fn distortion_for_nu(p_base: &AmplitudeResponse, nu: f64, lambda: usize) -> Result<f64> {
    let p = spectral::oversample_response(p_base, lambda)?;
    Ok(solve_alpha_opt(&DesignProblem::from_nu(p, nu)?)?.distortion)
}

/// `||p||^2 / (nu^lambda - 1)` with `||p||` the non-oversampled norm.
pub fn upper_bound(nu: f64, lambda: usize, p: &AmplitudeResponse) -> Result<f64> {
    if !(nu.is_finite() && nu > 1.0) {
        return Err(Error::Domain(format!("nu must exceed 1, got {nu}")));
    }
    Ok(spectral::l2_norm_sq(p) / (nu.powi(lambda as i32) - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdRow {
    pub bits: u32,
    pub lambda: usize,
    pub gamma: f64,
    pub nu: f64,
    pub alpha: f64,
    /// Optimal feedback quantizer MSE.
    pub distortion: f64,
    /// Plain uniform quantizer MSE, `||p_lambda||^2 / gamma`.
    pub d_uniform: f64,
    pub bound: f64,
    /// `|D(nu, lambda) - D(nu^lambda, 1)| / D(nu, lambda)`.
    pub oversampling_residual: f64,
}

impl RdRow {
    pub fn distortion_db(&self) -> f64 {
        db(self.distortion)
    }
    pub fn d_uniform_db(&self) -> f64 {
        db(self.d_uniform)
    }
    pub fn bound_db(&self) -> f64 {
        db(self.bound)
    }
    pub fn gain_db(&self) -> f64 {
        self.d_uniform_db() - self.distortion_db()
    }
}

/// One row per `(bits, lambda)`, ordered by bits then lambda.
pub fn rd_curve(
    p_base: &AmplitudeResponse,
    bits_list: &[u32],
    lambda_list: &[usize],
    loading_factor: f64,
) -> Result<Vec<RdRow>> {
    if bits_list.is_empty() || lambda_list.is_empty() {
        return Err(Error::Parameter("bits and lambda lists must be nonempty".into()));
    }
    let mut cells: Vec<(u32, usize)> = bits_list
        .iter()
        .flat_map(|&b| lambda_list.iter().map(move |&l| (b, l)))
        .collect();
    cells.sort_unstable();
    cells.dedup();
    let energy = spectral::l2_norm_sq(p_base);

    cells
        .par_iter()
        .map(|&(bits, lambda)| {
            let point = rd_point(p_base, lambda, bits, loading_factor)?;
            let p_lambda = spectral::oversample_response(p_base, lambda)?;
            let single = distortion_for_nu(p_base, point.nu.powi(lambda as i32), 1)?;
            Ok(RdRow {
                bits,
                lambda,
                gamma: point.gamma,
                nu: point.nu,
                alpha: point.alpha,
                distortion: point.distortion,
                d_uniform: spectral::l2_norm_sq(&p_lambda) / point.gamma,
                bound: energy / (point.nu.powi(lambda as i32) - 1.0),
                oversampling_residual: (point.distortion - single).abs() / point.distortion,
            })
        })
        .collect()
}
