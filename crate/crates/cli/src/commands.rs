use std::path::Path;

use efq::design::{self, DesignProblem};
use efq::fit::{self, FitMethod};
use efq::simulate::{self, SignalModel, SimulationConfig, SimulationResult};
use efq::spectral::{self, AmplitudeResponse, RationalDiscreteTF};
use efq::verify::{self, Check, VerifySettings};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{self, num, OutDir};

pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub out: OutDir,
    pub quiet: bool,
}

impl Context<'_> {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }

    fn hash(&self) -> String {
        self.cfg.hash()
    }

    fn base_response(&self) -> CliResult<AmplitudeResponse> {
        Ok(spectral::ct_frequency_map(&self.cfg.plant_tf()?, 1, self.cfg.grid()?)?)
    }

    fn problem(&self, base: &AmplitudeResponse, bits: u32, lambda: usize) -> CliResult<DesignProblem> {
        let p = spectral::oversample_response(base, lambda)?;
        Ok(DesignProblem::new(p, design::gamma_from_bits(bits, self.cfg.loading_factor))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignCell {
    pub bits: u32,
    pub lambda: usize,
    pub gamma: f64,
    pub nu: f64,
    pub alpha_opt: f64,
    pub theta: f64,
    pub distortion: f64,
    pub distortion_db: f64,
    pub norm_r_sq: f64,
    /// `nu - ||r_opt||^2`.
    pub feasibility_margin: f64,
    /// Mean log-amplitude of `r_opt`; zero up to quadrature error.
    pub r_log_mean: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignArtifact {
    pub grid_points: usize,
    pub cells: Vec<DesignCell>,
}

pub fn design(ctx: &Context) -> CliResult<()> {
    let base = ctx.base_response()?;
    let results = ctx
        .cfg
        .cells()
        .par_iter()
        .map(|&(bits, lambda)| {
            let prob = ctx.problem(&base, bits, lambda)?;
            let d = design::solve_alpha_opt(&prob)?;
            let cell = DesignCell {
                bits,
                lambda,
                gamma: prob.gamma(),
                nu: prob.nu(),
                alpha_opt: d.alpha_opt,
                theta: d.theta_opt,
                distortion: d.distortion,
                distortion_db: design::db(d.distortion),
                norm_r_sq: d.norm_r_sq,
                feasibility_margin: d.feasibility_margin(),
                r_log_mean: spectral::log_geometric_mean(&d.r_opt)?,
                degenerate: d.degenerate,
            };
            Ok((cell, d.r_opt))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let grid = ctx.cfg.grid()?;
    let mut header = vec!["omega".to_string()];
    header.extend(results.iter().map(|(c, _)| format!("r_b{}_l{}", c.bits, c.lambda)));
    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|i| {
            std::iter::once(num(grid.omega(i)))
                .chain(results.iter().map(|(_, r)| num(r.values()[i])))
                .collect()
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    ctx.out.write_csv("design_r_opt.csv", &header_refs, &rows)?;

    let cells: Vec<DesignCell> = results.into_iter().map(|(c, _)| c).collect();
    let table: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                c.bits.to_string(),
                c.lambda.to_string(),
                num(c.gamma),
                num(c.alpha_opt),
                num(c.theta),
                num(c.distortion),
                num(c.distortion_db),
                num(c.feasibility_margin),
                num(c.r_log_mean),
            ]
        })
        .collect();
    ctx.out.write_csv(
        "design.csv",
        &["bits", "lambda", "gamma", "alpha_opt", "theta", "D", "D_db", "feasibility_margin", "r_log_mean"],
        &table,
    )?;
    let path = ctx.out.write_json(
        "design.json",
        DesignArtifact {
            grid_points: ctx.cfg.grid_points,
            cells: cells.clone(),
        },
    )?;
    for c in &cells {
        ctx.say(format!(
            "b={:<2} lambda={} alpha_opt={:.6e} D={:.3} dB margin={:.4e}",
            c.bits, c.lambda, c.alpha_opt, c.distortion_db, c.feasibility_margin
        ));
    }
    ctx.say(format!("wrote {}", path.display()));
    Ok(())
}

pub fn rd_curve(ctx: &Context) -> CliResult<()> {
    let base = ctx.base_response()?;
    let rows = design::rd_curve(&base, &ctx.cfg.bits, &ctx.cfg.lambdas, ctx.cfg.loading_factor)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.bits.to_string(),
                r.lambda.to_string(),
                num(r.gamma),
                num(r.distortion_db()),
                num(r.d_uniform_db()),
                num(r.bound_db()),
                num(r.oversampling_residual),
            ]
        })
        .collect();
    let path = ctx.out.write_csv(
        "rd_curve.csv",
        &["bits", "lambda", "gamma", "D_db", "D_uniform_db", "bound_db", "oversampling_residual"],
        &table,
    )?;
    for r in &rows {
        ctx.say(format!(
            "b={:<2} lambda={} D={:>9.3} dB uniform={:>8.3} dB bound={:>9.3} dB gain={:>7.3} dB",
            r.bits,
            r.lambda,
            r.distortion_db(),
            r.d_uniform_db(),
            r.bound_db(),
            r.gain_db()
        ));
    }
    ctx.say(format!("wrote {}", path.display()));
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCell {
    pub bits: u32,
    pub lambda: usize,
    pub filter: RationalDiscreteTF,
    pub achieved_mse: f64,
    pub ideal_mse: f64,
    pub loss_db: f64,
    pub norm_sq: f64,
    pub nu: f64,
    pub feasible: bool,
    pub kkt_multiplier: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub method: FitMethod,
    pub order: usize,
    pub cells: Vec<FitCell>,
}

pub fn fit(ctx: &Context, design_path: &Path) -> CliResult<()> {
    let artifact: DesignArtifact = output::read_artifact(design_path, &ctx.hash())?;
    let base = ctx.base_response()?;
    let method = ctx.cfg.fit.method;
    let order = ctx.cfg.fit.order;

    let cells = artifact
        .cells
        .par_iter()
        .map(|cell| {
            let prob = ctx.problem(&base, cell.bits, cell.lambda)?;
            let (filter, multiplier) = match method {
                FitMethod::Yw => {
                    let target = design::optimal_r(cell.alpha_opt, prob.p())?;
                    (fit::yule_walker_fit(&target, order)?, None)
                }
                FitMethod::Qcqp => {
                    let sol = fit::norm_constrained_fir_spectral(prob.p(), order, cell.norm_r_sq)?;
                    (sol.fir.to_tf(), Some(sol.kkt_multiplier))
                }
            };
            let report = fit::evaluate_fit(&filter, prob.p(), prob.gamma())?;
            Ok(FitCell {
                bits: cell.bits,
                lambda: cell.lambda,
                filter,
                achieved_mse: report.achieved_mse,
                ideal_mse: report.ideal_mse,
                loss_db: report.loss_db(),
                norm_sq: report.norm_sq,
                nu: prob.nu(),
                feasible: report.feasible,
                kkt_multiplier: multiplier,
            })
        })
        .collect::<CliResult<Vec<FitCell>>>()?;

    let table: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                c.bits.to_string(),
                c.lambda.to_string(),
                num(design::db(c.achieved_mse)),
                num(design::db(c.ideal_mse)),
                num(c.loss_db),
                num(c.norm_sq),
                num(c.nu),
                c.feasible.to_string(),
            ]
        })
        .collect();
    ctx.out.write_csv(
        "fit_report.csv",
        &["bits", "lambda", "achieved_db", "ideal_db", "loss_db", "norm_sq", "nu", "feasible"],
        &table,
    )?;
    for c in &cells {
        ctx.say(format!(
            "b={:<2} lambda={} {:?}: achieved {:.3} dB ideal {:.3} dB loss {:.3} dB{}",
            c.bits,
            c.lambda,
            method,
            design::db(c.achieved_mse),
            design::db(c.ideal_mse),
            c.loss_db,
            if c.feasible { "" } else { " (infeasible)" }
        ));
    }
    let path = ctx.out.write_json("fit.json", FitArtifact { method, order, cells })?;
    ctx.say(format!("wrote {}", path.display()));
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationCell {
    pub bits: u32,
    pub lambda: usize,
    pub runs: Vec<SimulationResult>,
    pub mean_empirical_mse: f64,
    /// Half-width of the normal-approximation 95% interval over seeds.
    pub ci95: f64,
    pub predicted_mse: f64,
    pub relative_error: f64,
    pub max_overload_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationArtifact {
    pub seeds: Vec<u64>,
    pub cells: Vec<SimulationCell>,
}

pub fn simulate(ctx: &Context, fit_path: &Path) -> CliResult<()> {
    let artifact: FitArtifact = output::read_artifact(fit_path, &ctx.hash())?;
    let sim = &ctx.cfg.sim;
    let plant = ctx.cfg.plant_tf()?;
    let chosen: Vec<&FitCell> = artifact
        .cells
        .iter()
        .filter(|c| sim.bits.as_ref().is_none_or(|b| b.contains(&c.bits)))
        .filter(|c| sim.lambdas.as_ref().is_none_or(|l| l.contains(&c.lambda)))
        .collect();
    if chosen.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no fitted cell matches sim.bits / sim.lambdas",
            fit_path.display()
        )));
    }
    let seeds = sim.seed_list();
    let config_for = |lambda: usize| SimulationConfig {
        bits: 0,
        loading_factor: ctx.cfg.loading_factor,
        input: SignalModel {
            kind: sim.input,
            ct_pole: sim.ct_pole,
            seed: 0,
            length: sim.length,
            variance: 1.0,
        },
        sample_period: plant.sample_period() / lambda as f64,
        whiteness_lags: sim.whiteness_lags,
    };

    let mut cells = Vec::with_capacity(chosen.len());
    for c in &chosen {
        let p_d = simulate::discretize_plant(&plant, c.lambda)?;
        let cfg = SimulationConfig {
            bits: c.bits,
            ..config_for(c.lambda)
        };
        let runs = simulate::simulate_seeds(&p_d, &c.filter, &cfg, &seeds)?;
        let empirical: Vec<f64> = runs.iter().map(|r| r.empirical_mse).collect();
        let (mean, ci95) = simulate::mean_ci95(&empirical);
        let predicted = runs[0].predicted_mse;
        if sim.trace_length > 0 {
            let mut short = cfg;
            short.input.seed = seeds[0];
            let x = simulate::generate_input(&short.input, short.sample_period)?;
            let q = runs[0].quantizer;
            let trace = simulate::run_feedback_loop(&x[..sim.trace_length], &c.filter, &q)?;
            let rows: Vec<Vec<String>> = (0..trace.x.len())
                .map(|k| {
                    vec![
                        k.to_string(),
                        num(trace.x[k]),
                        num(trace.u[k]),
                        num(trace.v[k]),
                        num(trace.w[k]),
                        (trace.overload[k] as u8).to_string(),
                    ]
                })
                .collect();
            ctx.out.write_csv(
                &format!("trace_b{}_l{}.csv", c.bits, c.lambda),
                &["k", "x", "u", "v", "w", "overload"],
                &rows,
            )?;
        }
        ctx.say(format!(
            "b={:<2} lambda={} empirical {:.4e} +- {:.1e} predicted {:.4e} rel err {:.3} overload {:.2e}",
            c.bits,
            c.lambda,
            mean,
            ci95,
            predicted,
            (mean - predicted).abs() / predicted,
            runs.iter().map(|r| r.overload_rate).fold(0.0, f64::max)
        ));
        cells.push(SimulationCell {
            bits: c.bits,
            lambda: c.lambda,
            mean_empirical_mse: mean,
            ci95,
            predicted_mse: predicted,
            relative_error: (mean - predicted).abs() / predicted,
            max_overload_rate: runs.iter().map(|r| r.overload_rate).fold(0.0, f64::max),
            runs,
        });
    }

    let table: Vec<Vec<String>> = cells
        .iter()
        .flat_map(|c| {
            c.runs.iter().map(move |r| {
                vec![
                    c.bits.to_string(),
                    c.lambda.to_string(),
                    r.seed.to_string(),
                    num(r.empirical_mse),
                    num(r.predicted_mse),
                    num(r.relative_error()),
                    num(r.overload_rate),
                    num(r.sigma_u_sq),
                    num(r.predicted_sigma_u_sq),
                    num(r.w_autocorr.get(1).copied().unwrap_or(f64::NAN)),
                ]
            })
        })
        .collect();
    ctx.out.write_csv(
        "simulate.csv",
        &[
            "bits",
            "lambda",
            "seed",
            "empirical_mse",
            "predicted_mse",
            "relative_error",
            "overload_rate",
            "sigma_u_sq",
            "predicted_sigma_u_sq",
            "w_lag1",
        ],
        &table,
    )?;
    let path = ctx.out.write_json("simulate.json", SimulationArtifact { seeds, cells })?;
    ctx.say(format!("wrote {}", path.display()));
    Ok(())
}

pub fn verify_settings(cfg: &ExperimentConfig) -> CliResult<VerifySettings> {
    let sim_bits = cfg
        .sim
        .bits
        .as_ref()
        .and_then(|b| b.first().copied())
        .unwrap_or_else(|| *cfg.bits.iter().max().expect("bits validated nonempty"));
    Ok(VerifySettings {
        plant: cfg.plant_tf()?,
        grid_points: cfg.grid_points,
        bits: cfg.bits.clone(),
        lambdas: cfg.lambdas.clone(),
        loading_factor: cfg.loading_factor,
        extra_nu: cfg.extra_nu.clone(),
        fit_order: cfg.fit.order,
        sim_bits,
        sim_length: cfg.sim.length,
        sim_seeds: cfg.sim.seed_list(),
        sim_input: cfg.sim.input,
        ct_pole: cfg.sim.ct_pole,
        ..VerifySettings::default()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyArtifact {
    pub passed: usize,
    pub total: usize,
    pub checks: Vec<Check>,
}

pub fn verify(ctx: &Context) -> CliResult<()> {
    let settings = verify_settings(ctx.cfg)?;
    let checks = verify::run_all(&settings);
    for c in &checks {
        ctx.say(c.line());
    }
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("[{}] {}: {}", c.id, c.name, c.summary))
        .collect();
    let total = checks.len();
    let path = ctx.out.write_json(
        "verify.json",
        VerifyArtifact {
            passed: total - failed.len(),
            total,
            checks,
        },
    )?;
    ctx.say(format!("{}/{total} checks passed; wrote {}", total - failed.len(), path.display()));
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(format!(
            "{} of {total} checks failed:\n  {}",
            failed.len(),
            failed.join("\n  ")
        )))
    }
}
