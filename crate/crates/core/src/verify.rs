//! Numerical invariant checks shared by the acceptance suite and the
//! `verify` command.
//!
//! Each check returns a [`Check`] with the measured value next to its
//! tolerance; none of them panic on a failed comparison.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{self, DesignProblem};
use crate::error::Result;
use crate::fit::{self, FitMethod};
use crate::poly;
use crate::simulate::{self, InputKind, MidRiseQuantizer, SignalModel, SimulationConfig};
use crate::spectral::{self, AmplitudeResponse, ContinuousTF, FrequencyGrid, RationalDiscreteTF};

/// Outcome of one invariant check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    /// Measured values against their tolerances.
    pub summary: String,
    /// Extra diagnostics that do not affect the verdict.
    pub notes: Vec<String>,
}

impl Check {
    fn new(id: u32, name: &str, passed: bool, summary: String) -> Self {
        Self {
            id,
            name: name.to_string(),
            passed,
            summary,
            notes: Vec::new(),
        }
    }

    fn failed_with(id: u32, name: &str, err: crate::Error) -> Self {
        Self::new(id, name, false, format!("error: {err}"))
    }

    pub fn line(&self) -> String {
        format!(
            "{} [{:>2}] {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.summary
        )
    }
}

/// Inputs of the check suite. The defaults reproduce the example plant
/// study: `T_s = 0.1`, loading factor 4, bits 1..=8, oversampling 1..=4,
/// order-4 fits and a colored input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySettings {
    pub plant: ContinuousTF,
    pub grid_points: usize,
    pub bits: Vec<u32>,
    pub lambdas: Vec<usize>,
    pub loading_factor: f64,
    pub extra_nu: Vec<f64>,
    pub fit_order: usize,
    pub sim_bits: u32,
    pub sim_length: usize,
    pub sim_seeds: Vec<u64>,
    pub sim_input: InputKind,
    pub ct_pole: f64,
    pub random_plants: usize,
    pub random_kkt: usize,
    pub rng_seed: u64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            plant: crate::example_plant(),
            grid_points: FrequencyGrid::DEFAULT_POINTS,
            bits: (1..=8).collect(),
            lambdas: (1..=4).collect(),
            loading_factor: 4.0,
            extra_nu: vec![1.2, 5.0, 17.0],
            fit_order: 4,
            sim_bits: 8,
            sim_length: 1_000_000,
            sim_seeds: (1..=5).collect(),
            sim_input: InputKind::Colored,
            ct_pole: crate::EXAMPLE_INPUT_POLE,
            random_plants: 100,
            random_kkt: 50,
            rng_seed: 20_170_301,
        }
    }
}

impl VerifySettings {
    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.grid_points)
    }

    /// Plant magnitude at the base rate.
    pub fn base_response(&self) -> Result<AmplitudeResponse> {
        spectral::ct_frequency_map(&self.plant, 1, self.grid()?)
    }

    fn cells(&self) -> Vec<(u32, usize)> {
        let mut cells: Vec<(u32, usize)> = self
            .bits
            .iter()
            .flat_map(|&b| self.lambdas.iter().map(move |&l| (b, l)))
            .collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }
}

fn fmt_e(x: f64) -> String {
    format!("{x:.3e}")
}

/// The optimal alpha satisfies `theta^2(alpha)/alpha = nu` to `1e-10 nu` on
/// every cell, and the whole sweep finishes within 10 s.
pub fn root_condition(s: &VerifySettings) -> Check {
    const ID: u32 = 1;
    const NAME: &str = "root condition";
    let run = || -> Result<(f64, f64)> {
        let start = Instant::now();
        let base = s.base_response()?;
        let worst = s
            .cells()
            .par_iter()
            .map(|&(bits, lambda)| {
                let p = spectral::oversample_response(&base, lambda)?;
                let prob = DesignProblem::new(p, design::gamma_from_bits(bits, s.loading_factor))?;
                let d = design::solve_alpha_opt(&prob)?;
                let t = design::theta(d.alpha_opt, prob.p())?;
                Ok((t * t / d.alpha_opt - prob.nu()).abs() / prob.nu())
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        Ok((worst, start.elapsed().as_secs_f64()))
    };
    match run() {
        Ok((worst, secs)) => Check::new(
            ID,
            NAME,
            worst <= 1e-10 && secs < 10.0,
            format!(
                "max |theta^2/alpha - nu|/nu = {} (tol 1e-10) over {} cells; sweep {secs:.2} s (limit 10 s)",
                fmt_e(worst),
                s.cells().len()
            ),
        ),
        Err(e) => Check::failed_with(ID, NAME, e),
    }
}

/// `D(nu, lambda) = D(nu^lambda, 1)` to `1e-6` relative on the sweep cells
/// and on the extra `nu` values.
pub fn oversampling_identity(s: &VerifySettings) -> Check {
    const ID: u32 = 2;
    const NAME: &str = "oversampling identity";
    let run = || -> Result<(f64, usize)> {
        let base = s.base_response()?;
        let rows = design::rd_curve(&base, &s.bits, &s.lambdas, s.loading_factor)?;
        let mut worst = rows.iter().map(|r| r.oversampling_residual).fold(0.0, f64::max);
        let mut count = rows.len();
        let extra: Vec<(f64, usize)> = s
            .extra_nu
            .iter()
            .flat_map(|&nu| s.lambdas.iter().map(move |&l| (nu, l)))
            .collect();
        let residuals = extra
            .par_iter()
            .map(|&(nu, lambda)| {
                let d = design::distortion_for_nu(&base, nu, lambda)?;
                let single = design::distortion_for_nu(&base, nu.powi(lambda as i32), 1)?;
                Ok((d - single).abs() / d)
            })
            .collect::<Result<Vec<f64>>>()?;
        count += residuals.len();
        worst = residuals.into_iter().fold(worst, f64::max);
        Ok((worst, count))
    };
    match run() {
        Ok((worst, count)) => Check::new(
            ID,
            NAME,
            worst <= 1e-6,
            format!(
                "max |D(nu,lambda) - D(nu^lambda,1)|/D = {} (tol 1e-6) over {count} cases",
                fmt_e(worst)
            ),
        ),
        Err(e) => Check::failed_with(ID, NAME, e),
    }
}

/// `D(nu, lambda) <= ||p||^2 / (nu^lambda - 1)` on every cell, with equality
/// for a constant plant at `lambda = 1`.
pub fn distortion_bound(s: &VerifySettings) -> Check {
    const ID: u32 = 3;
    const NAME: &str = "distortion bound";
    let run = || -> Result<(f64, f64)> {
        let base = s.base_response()?;
        let rows = design::rd_curve(&base, &s.bits, &s.lambdas, s.loading_factor)?;
        // positive when the bound is violated
        let worst_excess = rows
            .iter()
            .map(|r| (r.distortion - r.bound) / r.bound)
            .fold(f64::NEG_INFINITY, f64::max);
        let flat = AmplitudeResponse::constant(s.grid()?, 1.7)?;
        let mut equality = 0.0f64;
        for &bits in &s.bits {
            let nu = design::gamma_from_bits(bits, s.loading_factor) + 1.0;
            let d = design::distortion_for_nu(&flat, nu, 1)?;
            let b = design::upper_bound(nu, 1, &flat)?;
            equality = equality.max((d - b).abs() / b);
        }
        Ok((worst_excess, equality))
    };
    match run() {
        Ok((excess, equality)) => Check::new(
            ID,
            NAME,
            excess <= 0.0 && equality <= 1e-9,
            format!(
                "max (D - bound)/bound = {} (must be <= 0); constant-plant equality gap {} (tol 1e-9)",
                fmt_e(excess),
                fmt_e(equality)
            ),
        ),
        Err(e) => Check::failed_with(ID, NAME, e),
    }
}

/// Closed forms: `alpha_opt = c^2/(nu - 1)` for a constant plant and
/// `theta^2 = (b + sqrt(b^2 - a^2))/2` for `p^2 = 2 + 2 cos w`, `b = 2 + alpha`,
/// `a = 2`.
pub fn closed_form_oracles(s: &VerifySettings) -> Check {
    const ID: u32 = 4;
    const NAME: &str = "closed-form oracles";
    let run = || -> Result<(f64, f64)> {
        let grid = s.grid()?;
        let mut constant_err = 0.0f64;
        for &c in &[0.3, 1.0, 4.5] {
            let flat = AmplitudeResponse::constant(grid, c)?;
            for &nu in &[1.2, 5.0, 17.0, 1e4] {
                let d = design::solve_alpha_opt(&DesignProblem::from_nu(flat.clone(), nu)?)?;
                let want = c * c / (nu - 1.0);
                constant_err = constant_err.max((d.alpha_opt - want).abs() / want);
            }
        }
        let cosine = AmplitudeResponse::from_fn(grid, |w| (2.0 + 2.0 * w.cos()).max(0.0).sqrt())?;
        let mut theta_err = 0.0f64;
        for alpha in [1e-3f64, 0.1, 1.0, 10.0, 1e3] {
            let b = 2.0 + alpha;
            let want = ((b + (b * b - 4.0).sqrt()) / 2.0).sqrt();
            let got = design::theta(alpha, &cosine)?;
            theta_err = theta_err.max((got - want).abs() / want);
        }
        Ok((constant_err, theta_err))
    };
    match run() {
        Ok((c, t)) => Check::new(
            ID,
            NAME,
            c <= 1e-10 && t <= 1e-8,
            format!(
                "constant plant alpha rel err {} (tol 1e-10); cosine plant theta rel err {} (tol 1e-8) at n = {}",
                fmt_e(c),
                fmt_e(t),
                s.grid_points
            ),
        ),
        Err(e) => Check::failed_with(ID, NAME, e),
    }
}

/// Analytic feedback-vs-uniform gain at `lambda = 1` lies in `[8, 12]` dB
/// for every bit count.
pub fn feedback_gain(s: &VerifySettings) -> Check {
    const ID: u32 = 5;
    const NAME: &str = "feedback gain";
    let run = || -> Result<Vec<(u32, f64)>> {
        let base = s.base_response()?;
        let rows = design::rd_curve(&base, &s.bits, &[1], s.loading_factor)?;
        Ok(rows.iter().map(|r| (r.bits, r.gain_db())).collect())
    };
    match run() {
        Ok(gains) => {
            let outside: Vec<String> = gains
                .iter()
                .filter(|(_, g)| !(8.0..=12.0).contains(g))
                .map(|(b, g)| format!("b={b}: {g:.2} dB"))
                .collect();
            let lo = gains.iter().map(|g| g.1).fold(f64::INFINITY, f64::min);
            let hi = gains.iter().map(|g| g.1).fold(f64::NEG_INFINITY, f64::max);
            let mut c = Check::new(
                ID,
                NAME,
                outside.is_empty(),
                format!(
                    "gain range [{lo:.2}, {hi:.2}] dB over b = {:?} (target [8, 12] dB){}",
                    s.bits,
                    if outside.is_empty() {
                        String::new()
                    } else {
                        format!("; outside: {}", outside.join(", "))
                    }
                ),
            );
            c.notes = gains
                .iter()
                .map(|(b, g)| format!("b={b}: gain {g:.3} dB"))
                .collect();
            c
        }
        Err(e) => Check::failed_with(ID, NAME, e),
    }
}

/// Loss of one fitted filter on one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitCell {
    pub bits: u32,
    pub lambda: usize,
    pub method: FitMethod,
    pub loss_db: f64,
    pub feasible: bool,
    pub unit_head: bool,
}

/// Fits every cell with both methods.
pub fn fit_cells(s: &VerifySettings) -> Result<Vec<FitCell>> {
    let base = s.base_response()?;
    let jobs: Vec<(u32, usize, FitMethod)> = s
        .cells()
        .into_iter()
        .flat_map(|(b, l)| [FitMethod::Qcqp, FitMethod::Yw].map(|m| (b, l, m)))
        .collect();
    jobs.par_iter()
        .map(|&(bits, lambda, method)| {
            let p = spectral::oversample_response(&base, lambda)?;
            let prob = DesignProblem::new(p, design::gamma_from_bits(bits, s.loading_factor))?;
            let report = fit::fit_design(&prob, method, s.fit_order)?;
            Ok(FitCell {
                bits,
                lambda,
                method,
                loss_db: report.loss_db(),
                feasible: report.feasible,
                unit_head: fit::impulse_response(&report.filter, 1)[0] == 1.0,
            })
        })
        .collect()
}

/// Order-`M` FIR fits within 0.5 dB and Yule-Walker fits within 2 dB of the
/// ideal on every cell, feasible and with a unit head.
pub fn filter_fits(s: &VerifySettings) -> Check {
    const ID: u32 = 6;
    const NAME: &str = "filter fits";
    let cells = match fit_cells(s) {
        Ok(c) => c,
        Err(e) => return Check::failed_with(ID, NAME, e),
    };
    let limit = |m: FitMethod| match m {
        FitMethod::Qcqp => 0.5,
        FitMethod::Yw => 2.0,
    };
    let ok = |c: &FitCell| c.feasible && c.unit_head && c.loss_db <= limit(c.method);
    let mut parts = Vec::new();
    for method in [FitMethod::Qcqp, FitMethod::Yw] {
        let mine: Vec<&FitCell> = cells.iter().filter(|c| c.method == method).collect();
        let good = mine.iter().filter(|c| ok(c)).count();
        let worst = mine
            .iter()
            .max_by(|a, b| a.loss_db.total_cmp(&b.loss_db))
            .expect("at least one cell");
        let infeasible = mine.iter().filter(|c| !c.feasible).count();
        parts.push(format!(
            "{}: {good}/{} cells within {} dB, worst {:.3} dB at b={} lambda={}, {infeasible} infeasible",
            match method {
                FitMethod::Qcqp => "qcqp",
                FitMethod::Yw => "yw",
            },
            mine.len(),
            limit(method),
            worst.loss_db,
            worst.bits,
            worst.lambda
        ));
    }
    let mut c = Check::new(ID, NAME, cells.iter().all(ok), parts.join("; "));
    c.notes = cells
        .iter()
        .map(|c| {
            format!(
                "b={} lambda={} {:?}: loss {:.3} dB feasible={} unit_head={}",
                c.bits, c.lambda, c.method, c.loss_db, c.feasible, c.unit_head
            )
        })
        .collect();
    c
}

/// Outcome of the seeded loop runs behind [`simulation_agreement`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub runs: Vec<simulate::SimulationResult>,
    pub mean_empirical: f64,
    pub ci95: f64,
    pub predicted: f64,
    pub relative_error: f64,
    pub max_overload_rate: f64,
    pub max_identity_error: f64,
    /// Relative error of the same runs with the saturation removed.
    pub unsaturated_relative_error: f64,
    pub seconds: f64,
}

/// Shaping filter used by the simulation check: the order-`M` FIR solution
/// on the discretized plant with the ideal norm as budget.
pub fn simulation_filter(
    p_d: &RationalDiscreteTF,
    bits: u32,
    s: &VerifySettings,
) -> Result<RationalDiscreteTF> {
    let p = spectral::amplitude_of_tf(p_d, s.grid()?);
    let prob = DesignProblem::new(p, design::gamma_from_bits(bits, s.loading_factor))?;
    let ideal = design::solve_alpha_opt(&prob)?;
    Ok(fit::norm_constrained_fir(p_d, s.fit_order, ideal.norm_r_sq)?.fir.to_tf())
}

pub fn run_simulation_study(s: &VerifySettings) -> Result<SimulationSummary> {
    let start = Instant::now();
    let p_d = simulate::discretize_plant(&s.plant, 1)?;
    let r = simulation_filter(&p_d, s.sim_bits, s)?;
    let cfg = SimulationConfig {
        bits: s.sim_bits,
        loading_factor: s.loading_factor,
        input: SignalModel {
            kind: s.sim_input,
            ct_pole: s.ct_pole,
            seed: 0,
            length: s.sim_length,
            variance: 1.0,
        },
        sample_period: s.plant.sample_period(),
        whiteness_lags: 10,
    };
    let runs = simulate::simulate_seeds(&p_d, &r, &cfg, &s.sim_seeds)?;

    // identical runs without saturation isolate the overload contribution
    let unsaturated = s
        .sim_seeds
        .par_iter()
        .map(|&seed| {
            let model = SignalModel { seed, ..cfg.input };
            let x = simulate::generate_input(&model, cfg.sample_period)?;
            let step = runs[0].quantizer.step;
            let q = MidRiseQuantizer::new(step, 1e6 * step)?;
            let trace = simulate::run_feedback_loop(&x, &r, &q)?;
            simulate::empirical_mse_after(&trace.v, &trace.x, &p_d, runs[0].burn_in)
        })
        .collect::<Result<Vec<f64>>>()?;

    let empirical: Vec<f64> = runs.iter().map(|r| r.empirical_mse).collect();
    let (mean_empirical, ci95) = simulate::mean_ci95(&empirical);
    let predicted = runs[0].predicted_mse;
    let (mean_unsat, _) = simulate::mean_ci95(&unsaturated);
    Ok(SimulationSummary {
        mean_empirical,
        ci95,
        predicted,
        relative_error: (mean_empirical - predicted).abs() / predicted,
        max_overload_rate: runs.iter().map(|r| r.overload_rate).fold(0.0, f64::max),
        max_identity_error: runs.iter().map(|r| r.loop_identity_error).fold(0.0, f64::max),
        unsaturated_relative_error: (mean_unsat - predicted).abs() / predicted,
        seconds: start.elapsed().as_secs_f64(),
        runs,
    })
}

/// Seed-averaged empirical output MSE within 20% of the prediction, overload
/// rate below 0.05, loop identity to `1e-10` and runtime under 60 s.
pub fn simulation_agreement(s: &VerifySettings) -> Check {
    const ID: u32 = 7;
    const NAME: &str = "simulation agreement";
    let sum = match run_simulation_study(s) {
        Ok(v) => v,
        Err(e) => return Check::failed_with(ID, NAME, e),
    };
    let passed = sum.relative_error <= 0.2
        && sum.max_overload_rate < 0.05
        && sum.max_identity_error <= 1e-10
        && sum.seconds < 60.0;
    let mut c = Check::new(
        ID,
        NAME,
        passed,
        format!(
            "b={} {:?} input, {} x {} samples: empirical {} +- {} vs predicted {} (rel err {:.3}, tol 0.2); \
             max overload rate {} (< 0.05); identity err {} (tol 1e-10); {:.1} s (limit 60 s)",
            s.sim_bits,
            s.sim_input,
            s.sim_seeds.len(),
            s.sim_length,
            fmt_e(sum.mean_empirical),
            fmt_e(sum.ci95),
            fmt_e(sum.predicted),
            sum.relative_error,
            fmt_e(sum.max_overload_rate),
            fmt_e(sum.max_identity_error),
            sum.seconds
        ),
    );
    c.notes.push(format!(
        "same seeds without saturation: rel err {:.4}",
        sum.unsaturated_relative_error
    ));
    for r in &sum.runs {
        c.notes.push(format!(
            "seed {}: empirical {} rel err {:.4} overloads {} lag-1 autocorr of w {:.4}",
            r.seed,
            fmt_e(r.empirical_mse),
            r.relative_error(),
            r.overload_count,
            r.w_autocorr.get(1).copied().unwrap_or(f64::NAN)
        ));
    }
    c
}

/// Random stable filter of order 1..=4 with poles of radius below 0.95.
pub fn random_stable_filter(rng: &mut impl Rng) -> RationalDiscreteTF {
    let order = rng.random_range(1..=4usize);
    let mut poles = Vec::new();
    let mut zeros = Vec::new();
    while poles.len() < order {
        let rad = rng.random_range(0.0..0.95);
        if order - poles.len() >= 2 && rng.random_bool(0.5) {
            let ang = rng.random_range(0.0..PI);
            let z = Complex64::from_polar(rad, ang);
            poles.extend([z, z.conj()]);
        } else {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            poles.push(Complex64::new(sign * rad, 0.0));
        }
    }
    for _ in 0..rng.random_range(0..=order) {
        zeros.push(Complex64::new(rng.random_range(-1.2..1.2), 0.0));
    }
    let gain = rng.random_range(0.2..3.0);
    RationalDiscreteTF::new(poly::from_roots(&zeros, gain), poly::from_roots(&poles, 1.0))
        .expect("finite coefficients")
}

/// `theta^2(alpha)/alpha` strictly decreasing and the normalized finite
/// difference `alpha Phi'(alpha_opt) / Phi` at most `1e-5`, on random plants.
pub fn monotonicity(s: &VerifySettings) -> Check {
    const ID: u32 = 8;
    const NAME: &str = "monotonicity and stationarity";
    let run = || -> Result<(usize, f64, usize)> {
        let grid = s.grid()?;
        let mut rng = ChaCha8Rng::seed_from_u64(s.rng_seed);
        let cases: Vec<(RationalDiscreteTF, f64)> = (0..s.random_plants)
            .map(|_| (random_stable_filter(&mut rng), 10f64.powf(rng.random_range(0.1..4.0))))
            .collect();
        let out = cases
            .par_iter()
            .map(|(h, nu)| {
                let p = spectral::amplitude_of_tf(h, grid);
                let ratio = |a: f64| -> Result<f64> {
                    let t = design::theta(a, &p)?;
                    Ok(t * t / a)
                };
                let mut decreasing = true;
                let mut prev = f64::INFINITY;
                for k in 0..=80 {
                    let a = 10f64.powf(-6.0 + 0.1 * k as f64);
                    let v = ratio(a)?;
                    decreasing &= v < prev;
                    prev = v;
                }
                let prob = DesignProblem::from_nu(p, *nu)?;
                let d = design::solve_alpha_opt(&prob)?;
                let fd = if d.degenerate {
                    0.0
                } else {
                    let h = 1e-4;
                    let a = d.alpha_opt;
                    let up = design::phi(a * (1.0 + h), &prob)?;
                    let dn = design::phi(a * (1.0 - h), &prob)?;
                    ((up - dn) / (2.0 * h * d.distortion)).abs()
                };
                Ok((decreasing, fd))
            })
            .collect::<Result<Vec<(bool, f64)>>>()?;
        let broken = out.iter().filter(|(d, _)| !d).count();
        let worst = out.iter().map(|o| o.1).fold(0.0, f64::max);
        Ok((broken, worst, out.len()))
    };
    match run() {
        Ok((broken, worst, n)) => Check::new(
            ID,
            NAME,
            broken == 0 && worst <= 1e-5,
            format!(
                "{n} random plants: {broken} with non-decreasing theta^2/alpha; max |alpha Phi'/Phi| at optimum {} (tol 1e-5)",
                fmt_e(worst)
            ),
        ),
        Err(e) => Check::failed_with(ID, NAME, e),
    }
}

/// Stationarity and complementary slackness of the FIR solver on random
/// instances, half of them with an active norm constraint.
pub fn kkt_certificate(s: &VerifySettings) -> Check {
    const ID: u32 = 9;
    const NAME: &str = "KKT certificate";
    let run = || -> Result<(f64, f64, usize, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(s.rng_seed ^ 0x9e37_79b9);
        let mut stat = 0.0f64;
        let mut slack = 0.0f64;
        let mut active = 0;
        for i in 0..s.random_kkt {
            let p = random_stable_filter(&mut rng);
            let order = rng.random_range(1..=6usize);
            let gram = fit::gram_from_impulse(&p, order)?;
            let free = fit::solve_norm_constrained(&gram, 1e9)?;
            let reach = free.norm_sq - 1.0;
            // even instances cut the unconstrained solution off
            let budget = if i % 2 == 0 {
                1.0 + reach * rng.random_range(0.05..0.9)
            } else {
                1.0 + reach * rng.random_range(1.0..3.0) + 1e-6
            };
            let sol = fit::solve_norm_constrained(&gram, budget)?;
            stat = stat.max(sol.stationarity_residual / sol.gradient_norm.max(f64::MIN_POSITIVE));
            let comp = if sol.kkt_multiplier > 0.0 {
                active += 1;
                sol.slack.abs()
            } else {
                (-sol.slack).max(0.0)
            };
            slack = slack.max(comp);
        }
        Ok((stat, slack, active, s.random_kkt))
    };
    match run() {
        Ok((stat, slack, active, n)) => Check::new(
            ID,
            NAME,
            stat <= 1e-8 && slack <= 1e-8,
            format!(
                "{n} instances ({active} active): max stationarity residual/||b|| {} (tol 1e-8); max complementarity gap {} (tol 1e-8)",
                fmt_e(stat),
                fmt_e(slack)
            ),
        ),
        Err(e) => Check::failed_with(ID, NAME, e),
    }
}

/// Relative change of `alpha_opt` when the grid is doubled, on every cell.
pub fn grid_convergence(s: &VerifySettings) -> Check {
    const ID: u32 = 10;
    const NAME: &str = "grid convergence";
    let run = || -> Result<f64> {
        let coarse = s.base_response()?;
        let fine = spectral::ct_frequency_map(
            &s.plant,
            1,
            FrequencyGrid::new(2 * s.grid_points)?,
        )?;
        let a = design::rd_curve(&coarse, &s.bits, &s.lambdas, s.loading_factor)?;
        let b = design::rd_curve(&fine, &s.bits, &s.lambdas, s.loading_factor)?;
        Ok(a.iter()
            .zip(&b)
            .map(|(x, y)| (x.alpha - y.alpha).abs() / y.alpha)
            .fold(0.0, f64::max))
    };
    match run() {
        Ok(delta) => Check::new(
            ID,
            NAME,
            delta < 1e-6,
            format!(
                "max relative alpha_opt change {} from n = {} to n = {} (tol 1e-6)",
                fmt_e(delta),
                s.grid_points,
                2 * s.grid_points
            ),
        ),
        Err(e) => Check::failed_with(ID, NAME, e),
    }
}

/// Runs every check in order.
pub fn run_all(s: &VerifySettings) -> Vec<Check> {
    vec![
        root_condition(s),
        oversampling_identity(s),
        distortion_bound(s),
        closed_form_oracles(s),
        feedback_gain(s),
        filter_fits(s),
        simulation_agreement(s),
        monotonicity(s),
        kkt_certificate(s),
        grid_convergence(s),
    ]
}
