//! Frequency-grid representations of amplitude responses and the integrals
//! that every design step runs over.
//!
//! Only the half band `[0, pi]` is stored. All responses are even in `omega`
//! (real-coefficient filters), so the normalized full-circle integral
//! `(1/2pi) * int_{-pi}^{pi} f` equals `(1/pi) * int_0^pi f`, evaluated here by
//! composite trapezoid quadrature.
//!
//! Oversampled responses are zero above the band edge `pi/lambda`. The jump
//! there is carried explicitly as a [`BandEdge`] so quadrature splits the
//! interval at the discontinuity instead of smearing it across one grid cell.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly;

/// Uniform grid `omega_i = i * pi / (n - 1)`, `i = 0..n`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrequencyGrid {
    n_points: usize,
}

impl FrequencyGrid {
    pub const MIN_POINTS: usize = 64;
    pub const DEFAULT_POINTS: usize = 8192;

    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < Self::MIN_POINTS {
            return Err(Error::Parameter(format!(
                "frequency grid needs at least {} points, got {n_points}",
                Self::MIN_POINTS
            )));
        }
        Ok(Self { n_points })
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        PI / (self.n_points - 1) as f64
    }

    pub fn omega(&self, i: usize) -> f64 {
        if i == self.n_points - 1 {
            PI
        } else {
            i as f64 * PI / (self.n_points - 1) as f64
        }
    }

    pub fn omegas(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.omega(i))
    }

    /// The same band at twice the resolution (every old node is kept).
    pub fn refined(&self) -> Self {
        Self {
            n_points: 2 * self.n_points - 1,
        }
    }
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self {
            n_points: Self::DEFAULT_POINTS,
        }
    }
}

/// A jump discontinuity of an amplitude response at `omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandEdge {
    pub omega: f64,
    /// Limit from below.
    pub left: f64,
    /// Limit from above.
    pub right: f64,
}

/// Nonnegative magnitude samples on a [`FrequencyGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeResponse {
    grid: FrequencyGrid,
    values: Vec<f64>,
    edge: Option<BandEdge>,
}

// Grid nodes closer than this (in index units) to a band edge are treated as
// sitting on it.
const EDGE_SNAP: f64 = 1e-9;

impl AmplitudeResponse {
    pub fn new(grid: FrequencyGrid, values: Vec<f64>) -> Result<Self> {
        Self::with_edge(grid, values, None)
    }

    /// Builds a response with an optional jump discontinuity. Grid nodes on
    /// the open interval above `edge.omega` are expected to follow `edge.right`.
    pub fn with_edge(
        grid: FrequencyGrid,
        values: Vec<f64>,
        edge: Option<BandEdge>,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Parameter(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Domain(format!(
                "amplitude sample {value} at index {index} is not a finite nonnegative number"
            )));
        }
        if let Some(e) = edge {
            if !(e.omega > 0.0 && e.omega < PI) {
                return Err(Error::Domain(format!(
                    "band edge {} must lie strictly inside (0, pi)",
                    e.omega
                )));
            }
            if !(e.left.is_finite() && e.left >= 0.0 && e.right.is_finite() && e.right >= 0.0) {
                return Err(Error::Domain("band edge limits must be finite and nonnegative".into()));
            }
        }
        Ok(Self { grid, values, edge })
    }

    pub fn from_fn(grid: FrequencyGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.omegas().map(f).collect())
    }

    pub fn constant(grid: FrequencyGrid, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.len()])
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn band_edge(&self) -> Option<BandEdge> {
        self.edge
    }

    /// Pointwise transform; band-edge limits are transformed as well.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.map_with_omega(|_, v| f(v))
    }

    /// Pointwise transform with access to the frequency of each sample.
    pub fn map_with_omega(&self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| f(self.grid.omega(i), v))
            .collect();
        let edge = self.edge.map(|e| BandEdge {
            omega: e.omega,
            left: f(e.omega, e.left),
            right: f(e.omega, e.right),
        });
        Self::with_edge(self.grid, values, edge)
    }

    /// Pointwise combination of two responses on the same grid.
    ///
    /// If only one operand carries a band edge, the other one is taken to be
    /// continuous there and is linearly interpolated at the edge.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::Parameter("responses live on different grids".into()));
        }
        let edge = match (self.edge, other.edge) {
            (None, None) => None,
            (Some(a), None) => {
                let b = other.sample(a.omega);
                Some(BandEdge {
                    omega: a.omega,
                    left: f(a.left, b),
                    right: f(a.right, b),
                })
            }
            (None, Some(b)) => {
                let a = self.sample(b.omega);
                Some(BandEdge {
                    omega: b.omega,
                    left: f(a, b.left),
                    right: f(a, b.right),
                })
            }
            (Some(a), Some(b)) => {
                if (a.omega - b.omega).abs() > EDGE_SNAP * self.grid.spacing() {
                    return Err(Error::Parameter(
                        "cannot combine responses with different band edges".into(),
                    ));
                }
                Some(BandEdge {
                    omega: a.omega,
                    left: f(a.left, b.left),
                    right: f(a.right, b.right),
                })
            }
        };
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::with_edge(self.grid, values, edge)
    }

    /// Linear interpolation of the stored samples at `omega` in `[0, pi]`.
    pub fn sample(&self, omega: f64) -> f64 {
        let n = self.values.len();
        let x = (omega / self.grid.spacing()).clamp(0.0, (n - 1) as f64);
        let i = (x.floor() as usize).min(n - 2);
        let t = x - i as f64;
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    /// `(1/pi) * int_0^pi f(omega, r(omega)) d omega` by composite trapezoid,
    /// split at the band edge when there is one.
    pub fn mean_of(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let g = self.grid;
        let h = g.spacing();
        let n = self.values.len();
        let node = |i: usize| f(g.omega(i), self.values[i]);

        let Some(edge) = self.edge else {
            return trapezoid_nodes(0, n - 1, h, node) / PI;
        };

        let pos = edge.omega / h;
        // last node strictly left of the edge, first node strictly right
        let il = ((pos - EDGE_SNAP).ceil() as usize).saturating_sub(1);
        let ir = ((pos + EDGE_SNAP).floor() as usize + 1).min(n);

        let f_left = f(edge.omega, edge.left);
        let f_right = f(edge.omega, edge.right);

        let mut total = trapezoid_nodes(0, il, h, node);
        let wl = edge.omega - g.omega(il);
        total += 0.5 * wl * (node(il) + f_left);
        if ir < n {
            let wr = g.omega(ir) - edge.omega;
            total += 0.5 * wr * (f_right + node(ir));
            total += trapezoid_nodes(ir, n - 1, h, node);
        }
        total / PI
    }

    /// Mean of the samples themselves, `(1/pi) int_0^pi r`.
    pub fn mean(&self) -> f64 {
        self.mean_of(|_, v| v)
    }

    pub fn max_value(&self) -> f64 {
        let m = self.values.iter().copied().fold(0.0, f64::max);
        match self.edge {
            Some(e) => m.max(e.left).max(e.right),
            None => m,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.max_value() == 0.0
    }
}

fn trapezoid_nodes(first: usize, last: usize, h: f64, node: impl Fn(usize) -> f64) -> f64 {
    if last <= first {
        return 0.0;
    }
    let mut acc = NeumaierSum::default();
    acc.add(0.5 * node(first));
    acc.add(0.5 * node(last));
    for i in first + 1..last {
        acc.add(node(i));
    }
    acc.total() * h
}

/// Compensated summation.
#[derive(Default)]
struct NeumaierSum {
    sum: f64,
    carry: f64,
}

impl NeumaierSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Continuous-time rational transfer function `P(s)`, coefficients in
/// descending powers of `s`, together with its nominal sampling period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousTF {
    num: Vec<f64>,
    den: Vec<f64>,
    sample_period: f64,
}

impl ContinuousTF {
    /// Validates properness and stability.
    pub fn new(num: Vec<f64>, den: Vec<f64>, sample_period: f64) -> Result<Self> {
        let num = trim_leading(num);
        let den = trim_leading(den);
        if den.is_empty() {
            return Err(Error::Domain("denominator is identically zero".into()));
        }
        if num.is_empty() {
            return Err(Error::Domain("numerator is identically zero".into()));
        }
        if num.len() > den.len() {
            return Err(Error::Domain(format!(
                "improper transfer function: numerator degree {} exceeds denominator degree {}",
                num.len() - 1,
                den.len() - 1
            )));
        }
        if !(sample_period.is_finite() && sample_period > 0.0) {
            return Err(Error::Domain(format!(
                "sampling period must be positive, got {sample_period}"
            )));
        }
        let worst = poly::roots(&den)?
            .iter()
            .map(|r| r.re)
            .fold(f64::NEG_INFINITY, f64::max);
        if worst >= 0.0 {
            return Err(Error::Domain(format!(
                "unstable continuous-time system: pole with real part {worst}"
            )));
        }
        Ok(Self {
            num,
            den,
            sample_period,
        })
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly::eval_descending(&self.num, s) / poly::eval_descending(&self.den, s)
    }

    /// `|P(j w)|` at angular frequency `w` in rad/s.
    pub fn magnitude(&self, w: f64) -> f64 {
        self.eval(Complex64::new(0.0, w)).norm()
    }

    pub fn poles(&self) -> Result<Vec<Complex64>> {
        poly::roots(&self.den)
    }
}

fn trim_leading(mut c: Vec<f64>) -> Vec<f64> {
    let lead = c.iter().position(|&x| x != 0.0).unwrap_or(c.len());
    c.drain(..lead);
    c
}

/// Discrete-time transfer function in powers of `z^-1`, normalized so that
/// `den[0] == 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTF", into = "RawTF")]
pub struct RationalDiscreteTF {
    num: Vec<f64>,
    den: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTF {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl TryFrom<RawTF> for RationalDiscreteTF {
    type Error = Error;
    fn try_from(raw: RawTF) -> Result<Self> {
        Self::new(raw.num, raw.den)
    }
}

impl From<RationalDiscreteTF> for RawTF {
    fn from(tf: RationalDiscreteTF) -> Self {
        RawTF {
            num: tf.num,
            den: tf.den,
        }
    }
}

/// Poles at or beyond this radius count as unstable.
pub const STABILITY_MARGIN: f64 = 1e-9;

impl RationalDiscreteTF {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if num.is_empty() || den.is_empty() {
            return Err(Error::Parameter("coefficient lists must be nonempty".into()));
        }
        if num.iter().chain(&den).any(|c| !c.is_finite()) {
            return Err(Error::Domain("non-finite filter coefficient".into()));
        }
        let d0 = den[0];
        if d0 == 0.0 {
            return Err(Error::Domain("leading denominator coefficient is zero".into()));
        }
        let num = num.into_iter().map(|c| c / d0).collect();
        let den = den.into_iter().map(|c| c / d0).collect();
        Ok(Self { num, den })
    }

    pub fn fir(taps: Vec<f64>) -> Result<Self> {
        Self::new(taps, vec![1.0])
    }

    pub fn identity() -> Self {
        Self {
            num: vec![1.0],
            den: vec![1.0],
        }
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn order(&self) -> usize {
        self.num.len().max(self.den.len()) - 1
    }

    pub fn is_fir(&self) -> bool {
        self.den[1..].iter().all(|&c| c == 0.0)
    }

    /// `H(e^{j omega})`.
    pub fn eval(&self, omega: f64) -> Complex64 {
        let q = Complex64::from_polar(1.0, -omega);
        poly::eval_ascending(&self.num, q) / poly::eval_ascending(&self.den, q)
    }

    pub fn poles(&self) -> Result<Vec<Complex64>> {
        poly::roots(&self.den)
    }

    pub fn zeros(&self) -> Result<Vec<Complex64>> {
        poly::roots(&self.num)
    }

    /// Largest pole magnitude (0 for FIR filters).
    pub fn pole_radius(&self) -> Result<f64> {
        Ok(self.poles()?.iter().map(|p| p.norm()).fold(0.0, f64::max))
    }

    pub fn is_stable(&self) -> bool {
        self.pole_radius()
            .map(|r| r < 1.0 - STABILITY_MARGIN)
            .unwrap_or(false)
    }

    pub fn ensure_stable(&self) -> Result<()> {
        let radius = self.pole_radius()?;
        if radius < 1.0 - STABILITY_MARGIN {
            Ok(())
        } else {
            Err(Error::Unstable { radius })
        }
    }

    /// Series connection `self * other`.
    pub fn cascade(&self, other: &Self) -> Self {
        Self {
            num: poly::multiply(&self.num, &other.num),
            den: poly::multiply(&self.den, &other.den),
        }
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            num: self.num.iter().map(|c| c * gain).collect(),
            den: self.den.clone(),
        }
    }

    /// First impulse-response sample, `num[0] / den[0]`.
    pub fn head(&self) -> f64 {
        self.num[0]
    }
}

/// Squared L2 norm `(1/2pi) int |p|^2` of an even amplitude response.
pub fn l2_norm_sq(p: &AmplitudeResponse) -> f64 {
    p.mean_of(|_, v| v * v)
}

/// `(1/2pi) int ln p`, the log of the geometric mean.
pub fn log_geometric_mean(p: &AmplitudeResponse) -> Result<f64> {
    if let Some((index, &value)) = p.values().iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::NonPositiveSample { index, value });
    }
    if let Some(e) = p.band_edge() {
        if e.left <= 0.0 || e.right <= 0.0 {
            return Err(Error::NonPositiveSample {
                index: (e.omega / p.grid().spacing()).round() as usize,
                value: e.left.min(e.right),
            });
        }
    }
    Ok(p.mean_of(|_, v| v.ln()))
}

/// `|H(e^{j omega})|` on the grid.
pub fn amplitude_of_tf(h: &RationalDiscreteTF, grid: FrequencyGrid) -> AmplitudeResponse {
    let values = grid.omegas().map(|w| h.eval(w).norm()).collect();
    AmplitudeResponse {
        grid,
        values,
        edge: None,
    }
}

/// Index of the last grid node inside the band `[0, pi/lambda]`.
fn band_limit_index(grid: FrequencyGrid, lambda: usize) -> usize {
    (grid.len() - 1) / lambda
}

fn band_edge_for(lambda: usize, left: f64) -> Option<BandEdge> {
    (lambda > 1).then(|| BandEdge {
        omega: PI / lambda as f64,
        left,
        right: 0.0,
    })
}

/// Discrete-time amplitude of a plant sampled `lambda` times faster than its
/// Nyquist period: `|P(j lambda omega / T_s)|` below `pi/lambda`, zero above.
pub fn ct_frequency_map(
    p_s: &ContinuousTF,
    lambda: usize,
    grid: FrequencyGrid,
) -> Result<AmplitudeResponse> {
    if lambda < 1 {
        return Err(Error::Domain("oversampling ratio must be at least 1".into()));
    }
    let ts = p_s.sample_period();
    let last = band_limit_index(grid, lambda);
    let values = (0..grid.len())
        .map(|i| {
            if i <= last {
                p_s.magnitude(lambda as f64 * grid.omega(i) / ts)
            } else {
                0.0
            }
        })
        .collect();
    let edge = band_edge_for(lambda, p_s.magnitude(PI / ts));
    AmplitudeResponse::with_edge(grid, values, edge)
}

/// `p_lambda(omega) = p(lambda omega)` for `omega <= pi/lambda`, zero above,
/// on the same grid as `p`.
pub fn oversample_response(p: &AmplitudeResponse, lambda: usize) -> Result<AmplitudeResponse> {
    if lambda < 1 {
        return Err(Error::Domain("oversampling ratio must be at least 1".into()));
    }
    if p.band_edge().is_some() {
        return Err(Error::Domain("response is already band-limited".into()));
    }
    if lambda == 1 {
        return Ok(p.clone());
    }
    let grid = p.grid();
    let last = band_limit_index(grid, lambda);
    let values = (0..grid.len())
        .map(|i| {
            if i <= last {
                p.sample((lambda as f64 * grid.omega(i)).min(PI))
            } else {
                0.0
            }
        })
        .collect();
    let edge = band_edge_for(lambda, *p.values().last().expect("grid is nonempty"));
    AmplitudeResponse::with_edge(grid, values, edge)
}

/// Normalized discrete form of `int |psi - mean(psi)| psi`, divided by
/// `int psi^2`, compared against `tol`.
pub fn is_almost_constant(p: &AmplitudeResponse, tol: f64) -> bool {
    let energy = l2_norm_sq(p);
    if energy == 0.0 {
        return true;
    }
    let m = p.mean();
    p.mean_of(|_, v| (v - m).abs() * v) / energy < tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> FrequencyGrid {
        FrequencyGrid::new(n).unwrap()
    }

    fn cosine_plant(g: FrequencyGrid) -> AmplitudeResponse {
        AmplitudeResponse::from_fn(g, |w| (2.0 + 2.0 * w.cos()).max(0.0).sqrt()).unwrap()
    }

    #[test]
    fn grid_rejects_small() {
        assert!(FrequencyGrid::new(63).is_err());
        let g = grid(64);
        assert_eq!(g.omega(63), PI);
        assert_eq!(g.refined().len(), 127);
    }

    #[test]
    fn norm_examples() {
        let g = grid(4096);
        let two = AmplitudeResponse::constant(g, 2.0).unwrap();
        assert!((l2_norm_sq(&two) - 4.0).abs() < 1e-12);
        let zero = AmplitudeResponse::constant(g, 0.0).unwrap();
        assert_eq!(l2_norm_sq(&zero), 0.0);
        assert!((l2_norm_sq(&cosine_plant(g)) - 2.0).abs() < 1e-12);
        // same value as the tap energy of 1 + z^-1
        let fir = RationalDiscreteTF::fir(vec![1.0, 1.0]).unwrap();
        assert!((l2_norm_sq(&amplitude_of_tf(&fir, g)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn log_mean_examples() {
        let g = grid(4096);
        let e = AmplitudeResponse::constant(g, std::f64::consts::E).unwrap();
        assert!((log_geometric_mean(&e).unwrap() - 1.0).abs() < 1e-14);
        let one = AmplitudeResponse::constant(g, 1.0).unwrap();
        assert_eq!(log_geometric_mean(&one).unwrap(), 0.0);

        // |1 + a e^{-jw}| with the zero inside the disk integrates to ln 1 = 0
        let near = RationalDiscreteTF::fir(vec![1.0, 0.99]).unwrap();
        let lg = log_geometric_mean(&amplitude_of_tf(&near, g)).unwrap();
        assert!(lg.abs() < 1e-10, "{lg}");
    }

    #[test]
    fn log_mean_reports_offending_index() {
        let g = grid(4096);
        match log_geometric_mean(&cosine_plant(g)) {
            Err(Error::NonPositiveSample { index, .. }) => assert_eq!(index, 4095),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tf_amplitudes() {
        let g = grid(512);
        let delay = RationalDiscreteTF::fir(vec![0.0, 1.0]).unwrap();
        let a = amplitude_of_tf(&delay, g);
        assert!(a.values().iter().all(|v| (v - 1.0).abs() < 1e-15));

        let sum = RationalDiscreteTF::fir(vec![1.0, 1.0]).unwrap();
        let a = amplitude_of_tf(&sum, g);
        for (i, v) in a.values().iter().enumerate() {
            let w = g.omega(i);
            assert!((v - (2.0 + 2.0 * w.cos()).max(0.0).sqrt()).abs() < 1e-7);
        }

        let ar = RationalDiscreteTF::new(vec![1.0], vec![1.0, -0.5]).unwrap();
        assert!((amplitude_of_tf(&ar, g).values()[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn cascade_amplitude_is_product() {
        let g = grid(1024);
        let a = RationalDiscreteTF::new(vec![1.0, 0.3], vec![1.0, -0.7, 0.1]).unwrap();
        let b = RationalDiscreteTF::new(vec![0.5, -0.2, 0.1], vec![1.0, 0.4]).unwrap();
        let ab = amplitude_of_tf(&a.cascade(&b), g);
        let prod = amplitude_of_tf(&a, g)
            .zip_with(&amplitude_of_tf(&b, g), |x, y| x * y)
            .unwrap();
        for (x, y) in ab.values().iter().zip(prod.values()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn ct_map_examples() {
        let g = grid(1025);
        let p = ContinuousTF::new(vec![1.0], vec![1.0, 1.0], 1.0).unwrap();
        let full = ct_frequency_map(&p, 1, g).unwrap();
        assert!(full.band_edge().is_none());
        assert!(full.values().iter().all(|&v| v > 0.0));
        // omega = 1 is not a node; check the analytic value directly
        assert!((p.magnitude(1.0) - 0.5f64.sqrt()).abs() < 1e-15);

        let half = ct_frequency_map(&p, 2, g).unwrap();
        let i = 512; // omega = pi/2 exactly
        assert!(half.values()[i] > 0.0);
        assert_eq!(half.values()[i + 1], 0.0);
    }

    #[test]
    fn ct_rejects_unstable_and_improper() {
        assert!(ContinuousTF::new(vec![1.0], vec![1.0, -1.0], 0.1).is_err());
        assert!(ContinuousTF::new(vec![1.0, 0.0, 0.0], vec![1.0, 1.0], 0.1).is_err());
        assert!(ContinuousTF::new(vec![1.0], vec![1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn oversample_constant() {
        let g = grid(8192);
        let c = AmplitudeResponse::constant(g, 3.0).unwrap();
        assert_eq!(oversample_response(&c, 1).unwrap(), c);
        let o = oversample_response(&c, 4).unwrap();
        for (i, &v) in o.values().iter().enumerate() {
            if g.omega(i) <= PI / 4.0 {
                assert_eq!(v, 3.0);
            } else {
                assert_eq!(v, 0.0);
            }
        }
        assert!(oversample_response(&c, 0).is_err());
        assert!(oversample_response(&o, 2).is_err());
        assert!((l2_norm_sq(&o) - 9.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn oversample_norm_scaling_smooth() {
        let g = grid(8192);
        let p = ContinuousTF::new(vec![1.0, 2.0], vec![1.0, 3.0, 2.5], 0.2).unwrap();
        let base = ct_frequency_map(&p, 1, g).unwrap();
        let n1 = l2_norm_sq(&base);
        for lambda in 1..=4 {
            let o = oversample_response(&base, lambda).unwrap();
            let rel = (l2_norm_sq(&o) - n1 / lambda as f64).abs() / (n1 / lambda as f64);
            assert!(rel < 1e-6, "lambda {lambda}: {rel}");
        }
    }

    #[test]
    fn almost_constant() {
        let g = grid(2048);
        assert!(is_almost_constant(&AmplitudeResponse::constant(g, 2.0).unwrap(), 1e-9));
        let cp = cosine_plant(g);
        let m = cp.mean();
        let ratio = cp.mean_of(|_, v| (v - m).abs() * v) / l2_norm_sq(&cp);
        assert!(ratio > 0.1, "{ratio}");
        assert!(!is_almost_constant(&cp, 1e-3));
        let mut v = vec![1.0; g.len()];
        v[17] += 1e-12;
        assert!(is_almost_constant(&AmplitudeResponse::new(g, v).unwrap(), 1e-6));
    }

    #[test]
    fn full_circle_reference() {
        // trapezoid over [-pi, pi] on the mirrored grid, divided by 2 pi
        let g = grid(1000);
        let p = AmplitudeResponse::from_fn(g, |w| 1.3 + 0.4 * w.cos() + 0.2 * (2.0 * w).cos())
            .unwrap();
        let n = g.len();
        let h = g.spacing();
        let mut full = Vec::with_capacity(2 * n - 1);
        for i in (1..n).rev() {
            full.push(p.values()[i]);
        }
        full.extend_from_slice(p.values());
        let sq: Vec<f64> = full.iter().map(|v| v * v).collect();
        let reference = (sq.iter().sum::<f64>() - 0.5 * (sq[0] + sq[sq.len() - 1])) * h / (2.0 * PI);
        assert!((reference - l2_norm_sq(&p)).abs() < 1e-10);
        // exact value: 1.3^2 + (0.4^2 + 0.2^2) / 2
        assert!((l2_norm_sq(&p) - (1.69 + 0.1)).abs() < 1e-10);
    }

    #[test]
    fn discrete_tf_normalizes_and_serializes() {
        let tf = RationalDiscreteTF::new(vec![2.0, 1.0], vec![2.0, 1.0]).unwrap();
        assert_eq!(tf.den(), &[1.0, 0.5]);
        let json = serde_json::to_string(&tf).unwrap();
        let back: RationalDiscreteTF = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tf);
        assert!(serde_json::from_str::<RationalDiscreteTF>(r#"{"num":[1],"den":[0]}"#).is_err());
    }

    #[test]
    fn stability() {
        assert!(RationalDiscreteTF::new(vec![1.0], vec![1.0, -0.5]).unwrap().is_stable());
        let marginal = RationalDiscreteTF::new(vec![1.0], vec![1.0, -1.0]).unwrap();
        assert!(matches!(marginal.ensure_stable(), Err(Error::Unstable { .. })));
    }

    proptest! {
        // trapezoid is exact for trigonometric polynomials of low degree
        #[test]
        fn quadrature_exact_for_cosine_polys(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0) {
            let g = FrequencyGrid::new(4096).unwrap();
            let p = AmplitudeResponse::from_fn(g, |w| (a + b * w.cos() + c * (2.0 * w).cos()).abs()).unwrap();
            let exact = a * a + 0.5 * (b * b + c * c);
            prop_assert!((l2_norm_sq(&p) - exact).abs() < 1e-10);
        }

        #[test]
        fn band_edge_split_is_consistent(lambda in 2usize..6, n in 64usize..3000) {
            // constant c oversampled has energy c^2 / lambda regardless of
            // where the edge lands between nodes
            let g = FrequencyGrid::new(n).unwrap();
            let c = AmplitudeResponse::constant(g, 1.7).unwrap();
            let o = oversample_response(&c, lambda).unwrap();
            prop_assert!((l2_norm_sq(&o) - 1.7 * 1.7 / lambda as f64).abs() < 1e-12);
        }
    }
}
