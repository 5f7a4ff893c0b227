//! Time-domain simulation of the error-feedback quantizer loop
//! `u = x + (R - 1) w`, `v = Q(u)`, `w = v - u`, followed by the plant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::QuantizerSpec;
use crate::error::{Error, Result};
use crate::fit;
use crate::poly;
use crate::spectral::{ContinuousTF, RationalDiscreteTF};

/// Uniform mid-rise quantizer with output levels at odd multiples of `d/2`,
/// saturating at `+-L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MidRiseQuantizer {
    pub step: f64,
    pub saturation: f64,
}

impl MidRiseQuantizer {
    pub fn new(step: f64, saturation: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0 && saturation.is_finite() && saturation > 0.0) {
            return Err(Error::Parameter(format!(
                "quantizer needs positive step and saturation, got d = {step}, L = {saturation}"
            )));
        }
        Ok(Self { step, saturation })
    }

    /// Returns the output level and whether `xi` lies beyond `L + d/2`.
    pub fn quantize(&self, xi: f64) -> (f64, bool) {
        let d = self.step;
        let l = self.saturation;
        let overloaded = xi.abs() > l + 0.5 * d;
        let level = ((xi / d).floor() + 0.5) * d;
        (level.clamp(-l, l), overloaded)
    }
}

impl From<QuantizerSpec> for MidRiseQuantizer {
    fn from(q: QuantizerSpec) -> Self {
        Self {
            step: q.step,
            saturation: q.saturation,
        }
    }
}

/// Free-function form of [`MidRiseQuantizer::quantize`].
pub fn quantize_midrise(xi: f64, q: &MidRiseQuantizer) -> (f64, bool) {
    q.quantize(xi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// First-order autoregressive input, the sampled `c / |j w + a|^2`.
    Colored,
    White,
}

/// Stationary Gaussian input description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    pub kind: InputKind,
    /// Continuous-time pole `a` of the colored spectrum.
    pub ct_pole: f64,
    pub seed: u64,
    pub length: usize,
    pub variance: f64,
}

impl SignalModel {
    fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::Parameter(format!(
                "signal length must be at least 2, got {}",
                self.length
            )));
        }
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(Error::Parameter(format!(
                "signal variance must be positive, got {}",
                self.variance
            )));
        }
        if self.kind == InputKind::Colored && !(self.ct_pole.is_finite() && self.ct_pole > 0.0) {
            return Err(Error::Parameter(format!(
                "colored input pole must be positive, got {}",
                self.ct_pole
            )));
        }
        Ok(())
    }
}

fn gaussian_stream(seed: u64) -> impl Iterator<Item = f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::iter::repeat_with(move || rng.sample::<f64, _>(StandardNormal))
}

/// Zero-mean Gaussian white sequence with the model variance.
pub fn gen_white_input(model: &SignalModel) -> Result<Vec<f64>> {
    model.validate()?;
    let s = model.variance.sqrt();
    Ok(gaussian_stream(model.seed).take(model.length).map(|e| s * e).collect())
}

/// AR(1) sequence with pole `exp(-a T)`, started in its stationary
/// distribution and scaled to the model variance exactly.
pub fn gen_colored_input(model: &SignalModel, sample_period: f64) -> Result<Vec<f64>> {
    model.validate()?;
    if !(sample_period.is_finite() && sample_period > 0.0) {
        return Err(Error::Parameter(format!(
            "sample period must be positive, got {sample_period}"
        )));
    }
    let a = (-model.ct_pole * sample_period).exp();
    let mut noise = gaussian_stream(model.seed);
    let mut prev = noise.next().expect("infinite stream") / (1.0 - a * a).sqrt();
    let mut x = Vec::with_capacity(model.length);
    x.push(prev);
    for e in noise.take(model.length - 1) {
        prev = a * prev + e;
        x.push(prev);
    }
    let var = sample_variance(&x);
    let s = (model.variance / var).sqrt();
    x.iter_mut().for_each(|v| *v *= s);
    Ok(x)
}

/// Dispatches on the model kind.
pub fn generate_input(model: &SignalModel, sample_period: f64) -> Result<Vec<f64>> {
    match model.kind {
        InputKind::White => gen_white_input(model),
        InputKind::Colored => gen_colored_input(model, sample_period),
    }
}

pub fn sample_mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population variance about the sample mean.
pub fn sample_variance(x: &[f64]) -> f64 {
    let m = sample_mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

/// Bilinear transform of `p_s` at period `T_s / lambda`.
pub fn discretize_plant(p_s: &ContinuousTF, lambda: usize) -> Result<RationalDiscreteTF> {
    if lambda < 1 {
        return Err(Error::Domain("oversampling ratio must be at least 1".into()));
    }
    let t = p_s.sample_period() / lambda as f64;
    let n = p_s.den().len() - 1;
    let k2t = 2.0 / t;

    // s^k -> k2t^k (1 - q)^k (1 + q)^(n - k), ascending powers of q = z^-1
    let map = |desc: &[f64]| -> Vec<f64> {
        let deg = desc.len() - 1;
        let mut out = vec![0.0; n + 1];
        for (i, &c) in desc.iter().enumerate() {
            let k = deg - i;
            let mut term = vec![c * k2t.powi(k as i32)];
            for _ in 0..k {
                term = poly::multiply(&term, &[1.0, -1.0]);
            }
            for _ in 0..n - k {
                term = poly::multiply(&term, &[1.0, 1.0]);
            }
            out.iter_mut().zip(&term).for_each(|(o, t)| *o += t);
        }
        out
    };
    let tf = RationalDiscreteTF::new(map(p_s.num()), map(p_s.den()))?;
    tf.ensure_stable()?;
    Ok(tf)
}

/// Direct-form II transposed filtering from zero initial state.
pub fn filter_signal(h: &RationalDiscreteTF, x: &[f64]) -> Vec<f64> {
    let k = h.num().len().max(h.den().len());
    let mut b = h.num().to_vec();
    let mut a = h.den().to_vec();
    b.resize(k, 0.0);
    a.resize(k, 0.0);
    let mut state = vec![0.0; k];
    x.iter()
        .map(|&xi| {
            let y = b[0] * xi + state[0];
            for i in 0..k - 1 {
                state[i] = b[i + 1] * xi - a[i + 1] * y + state[i + 1];
            }
            y
        })
        .collect()
}

/// Recorded signals of one loop run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoopTrace {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub overload: Vec<bool>,
}

impl LoopTrace {
    pub fn overload_count(&self) -> usize {
        self.overload.iter().filter(|o| **o).count()
    }
}

/// Runs the feedback loop. `R - 1` is realized in transposed direct form
/// with a zero leading coefficient, so each `u_k` depends on `w_0..w_{k-1}`
/// only.
pub fn run_feedback_loop(
    x: &[f64],
    r: &RationalDiscreteTF,
    q: &MidRiseQuantizer,
) -> Result<LoopTrace> {
    r.ensure_stable()?;
    if r.head() != 1.0 {
        return Err(Error::DegenerateFilter(format!(
            "feedback filter must have unit head, got {}",
            r.head()
        )));
    }
    let k = r.num().len().max(r.den().len());
    let mut a = r.den().to_vec();
    a.resize(k, 0.0);
    let mut c = r.num().to_vec();
    c.resize(k, 0.0);
    // numerator of (num - den) / den
    c.iter_mut().zip(&a).for_each(|(ci, ai)| *ci -= ai);
    c[0] = 0.0;

    let n = x.len();
    let mut trace = LoopTrace {
        x: x.to_vec(),
        u: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        w: Vec::with_capacity(n),
        overload: Vec::with_capacity(n),
    };
    let mut state = vec![0.0; k];
    for &xk in x {
        let feedback = state[0];
        let u = xk + feedback;
        let (v, ov) = q.quantize(u);
        let w = v - u;
        for i in 0..k - 1 {
            state[i] = c[i + 1] * w - a[i + 1] * feedback + state[i + 1];
        }
        trace.u.push(u);
        trace.v.push(v);
        trace.w.push(w);
        trace.overload.push(ov);
    }
    Ok(trace)
}

/// Largest per-sample deviation of `v - x` from `R w` recomputed offline.
pub fn loop_identity_error(trace: &LoopTrace, r: &RationalDiscreteTF) -> f64 {
    let rw = filter_signal(r, &trace.w);
    trace
        .v
        .iter()
        .zip(&trace.x)
        .zip(&rw)
        .map(|((v, x), e)| (v - x - e).abs())
        .fold(0.0, f64::max)
}

/// Samples discarded before variance estimates:
/// `max(1000, 20 ceil(1 / (1 - rho)))` over the largest pole radius.
pub fn burn_in(filters: &[&RationalDiscreteTF]) -> Result<usize> {
    let mut memory = 1.0f64;
    for f in filters {
        if f.is_fir() {
            memory = memory.max(f.num().len() as f64);
        } else {
            let rho = f.pole_radius()?;
            memory = memory.max((1.0 / (1.0 - rho)).ceil());
        }
    }
    Ok(1000.max((20.0 * memory) as usize))
}

/// Mean square of `P (v - x)` after the given burn-in.
pub fn empirical_mse_after(
    v: &[f64],
    x: &[f64],
    p_d: &RationalDiscreteTF,
    burn_in: usize,
) -> Result<f64> {
    if v.len() != x.len() {
        return Err(Error::Parameter(format!(
            "length mismatch: {} vs {}",
            v.len(),
            x.len()
        )));
    }
    if v.len() <= burn_in {
        return Err(Error::Parameter(format!(
            "{} samples do not exceed the burn-in of {burn_in}",
            v.len()
        )));
    }
    let e: Vec<f64> = v.iter().zip(x).map(|(a, b)| a - b).collect();
    let y = filter_signal(p_d, &e);
    Ok(sample_variance(&y[burn_in..]))
}

/// [`empirical_mse_after`] with the burn-in of `p_d`.
pub fn empirical_mse(v: &[f64], x: &[f64], p_d: &RationalDiscreteTF) -> Result<f64> {
    empirical_mse_after(v, x, p_d, burn_in(&[p_d])?)
}

/// Normalized sample autocorrelation at lags `1..=max_lag`.
pub fn whiteness_stat(w: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if w.len() <= max_lag {
        return Err(Error::Parameter(format!(
            "need more than {max_lag} samples, got {}",
            w.len()
        )));
    }
    let m = sample_mean(w);
    let c: Vec<f64> = w.iter().map(|v| v - m).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    if c0 == 0.0 {
        return Ok(vec![0.0; max_lag]);
    }
    Ok((1..=max_lag)
        .map(|k| c.iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect())
}

/// Parameters of one simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub bits: u32,
    pub loading_factor: f64,
    pub input: SignalModel,
    /// Sampling period of the loop, `T_s / lambda`.
    pub sample_period: f64,
    pub whiteness_lags: usize,
}

/// Summary of one run next to the analytic predictions for the same `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub seed: u64,
    pub length: usize,
    pub burn_in: usize,
    pub empirical_mse: f64,
    pub predicted_mse: f64,
    pub overload_count: usize,
    pub overload_rate: f64,
    pub w_variance: f64,
    pub predicted_w_variance: f64,
    /// Lags `0..=K`.
    pub w_autocorr: Vec<f64>,
    pub sigma_u_sq: f64,
    pub predicted_sigma_u_sq: f64,
    /// Largest per-sample deviation from `v - x = R w`.
    pub loop_identity_error: f64,
    pub quantizer: MidRiseQuantizer,
}

impl SimulationResult {
    pub fn relative_error(&self) -> f64 {
        (self.empirical_mse - self.predicted_mse).abs() / self.predicted_mse
    }
}

/// Analytic loop statistics for a stable unit-head `R`:
/// `(sigma_w^2, sigma_u^2, output MSE)`.
pub fn predict(
    p_d: &RationalDiscreteTF,
    r: &RationalDiscreteTF,
    bits: u32,
    loading_factor: f64,
    sigma_x_sq: f64,
) -> Result<(f64, f64, f64)> {
    let nu = crate::design::gamma_from_bits(bits, loading_factor) + 1.0;
    let norm_r = fit::filter_norm_sq(r)?;
    let sigma_w_sq = crate::design::sigma_w_sq_for_norm(norm_r, nu, sigma_x_sq)?;
    let sigma_u_sq = sigma_x_sq + (norm_r - 1.0) * sigma_w_sq;
    let shaped = fit::filter_norm_sq(&p_d.cascade(r))?;
    Ok((sigma_w_sq, sigma_u_sq, shaped * sigma_w_sq))
}

/// One seeded run: the quantizer step is sized from the predicted
/// `sigma_u`, the loop is run and the plant output error is measured.
pub fn run_simulation(
    p_d: &RationalDiscreteTF,
    r: &RationalDiscreteTF,
    cfg: &SimulationConfig,
) -> Result<(SimulationResult, LoopTrace)> {
    p_d.ensure_stable()?;
    let (sigma_w_sq, sigma_u_sq, predicted_mse) =
        predict(p_d, r, cfg.bits, cfg.loading_factor, cfg.input.variance)?;
    let quantizer: MidRiseQuantizer =
        QuantizerSpec::new(cfg.bits, cfg.loading_factor, sigma_u_sq.sqrt())?.into();

    let x = generate_input(&cfg.input, cfg.sample_period)?;
    let trace = run_feedback_loop(&x, r, &quantizer)?;
    let skip = burn_in(&[p_d, r])?;
    let empirical = empirical_mse_after(&trace.v, &trace.x, p_d, skip)?;
    let lags = whiteness_stat(&trace.w[skip..], cfg.whiteness_lags)?;
    let overload_count = trace.overload_count();

    let result = SimulationResult {
        seed: cfg.input.seed,
        length: x.len(),
        burn_in: skip,
        empirical_mse: empirical,
        predicted_mse,
        overload_count,
        overload_rate: overload_count as f64 / x.len() as f64,
        w_variance: sample_variance(&trace.w[skip..]),
        predicted_w_variance: sigma_w_sq,
        w_autocorr: std::iter::once(1.0).chain(lags).collect(),
        sigma_u_sq: sample_variance(&trace.u[skip..]),
        predicted_sigma_u_sq: sigma_u_sq,
        loop_identity_error: loop_identity_error(&trace, r),
        quantizer,
    };
    Ok((result, trace))
}

pub fn simulate(
    p_d: &RationalDiscreteTF,
    r: &RationalDiscreteTF,
    cfg: &SimulationConfig,
) -> Result<SimulationResult> {
    run_simulation(p_d, r, cfg).map(|(res, _)| res)
}

/// Runs the given seeds in parallel; results are in seed order.
pub fn simulate_seeds(
    p_d: &RationalDiscreteTF,
    r: &RationalDiscreteTF,
    cfg: &SimulationConfig,
    seeds: &[u64],
) -> Result<Vec<SimulationResult>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut c = *cfg;
            c.input.seed = seed;
            simulate(p_d, r, &c)
        })
        .collect()
}

/// Mean and normal-approximation 95% half-width of a sample.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (m, f64::NAN);
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, 1.96 * (var / n).sqrt())
}
