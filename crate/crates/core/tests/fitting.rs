use efq::design::{self, DesignProblem};
use efq::fit::{self, FitMethod, FitReport};
use efq::spectral::{self, FrequencyGrid, RationalDiscreteTF};

fn problem(bits: u32, lambda: usize) -> DesignProblem {
    let base = spectral::ct_frequency_map(&efq::example_plant(), 1, FrequencyGrid::default()).unwrap();
    let p = spectral::oversample_response(&base, lambda).unwrap();
    DesignProblem::new(p, design::gamma_from_bits(bits, 4.0)).unwrap()
}

#[test]
fn fits_at_base_rate_are_close_to_ideal() {
    for bits in 2..=8 {
        let prob = problem(bits, 1);
        let q = fit::fit_design(&prob, FitMethod::Qcqp, 4).unwrap();
        let y = fit::fit_design(&prob, FitMethod::Yw, 4).unwrap();
        assert!(q.feasible && y.feasible);
        assert!(q.loss_db() < 0.5, "b={bits} qcqp {}", q.loss_db());
        assert!(y.loss_db() < 2.0, "b={bits} yw {}", y.loss_db());
        assert!(q.kkt_multiplier.unwrap() >= 0.0);
    }
}

#[test]
fn oversampled_yule_walker_fit_is_feasible_but_lossy() {
    // the ideal response is discontinuous at the band edge; an order-4 fit
    // stays feasible and never beats the ideal
    let prob = problem(4, 2);
    let r = fit::fit_design(&prob, FitMethod::Yw, 4).unwrap();
    assert!(r.feasible);
    assert!(r.norm_sq < prob.nu());
    assert!(r.achieved_mse >= r.ideal_mse - 1e-9);
    assert!(r.filter.is_stable());
    assert_eq!(fit::impulse_response(&r.filter, 1)[0], 1.0);
}

#[test]
fn achieved_never_beats_ideal() {
    for (bits, lambda) in [(1, 1), (3, 2), (6, 3), (8, 4)] {
        let prob = problem(bits, lambda);
        for m in [FitMethod::Qcqp, FitMethod::Yw] {
            let r = fit::fit_design(&prob, m, 4).unwrap();
            assert!(r.achieved_mse >= r.ideal_mse - 1e-9);
        }
    }
}

#[test]
fn fitted_filter_round_trips_through_json() {
    let prob = problem(5, 1);
    let r = fit::fit_design(&prob, FitMethod::Yw, 4).unwrap();
    let text = serde_json::to_string(&r).unwrap();
    let back: FitReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);
    let again = fit::evaluate_fit(&back.filter, prob.p(), prob.gamma()).unwrap();
    assert_eq!(again.achieved_mse, r.achieved_mse);

    let f: RationalDiscreteTF = serde_json::from_str(r#"{"num":[1.0,0.1],"den":[1.0,-0.5]}"#).unwrap();
    assert_eq!(f.den(), &[1.0, -0.5]);
}

#[test]
fn fir_solution_on_discretized_plant_matches_spectral_route() {
    let pd = efq::simulate::discretize_plant(&efq::example_plant(), 1).unwrap();
    let p = spectral::amplitude_of_tf(&pd, FrequencyGrid::default());
    let budget = 2.5;
    let a = fit::norm_constrained_fir(&pd, 4, budget).unwrap();
    let b = fit::norm_constrained_fir_spectral(&p, 4, budget).unwrap();
    for (x, y) in a.fir.taps.iter().zip(&b.fir.taps) {
        assert!((x - y).abs() < 1e-6, "{x} vs {y}");
    }
}
