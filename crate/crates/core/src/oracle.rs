//! Reference values of `I = ∫_Ω exp(2πi t F(x)) dx` and empirical decay
//! rates of `|I(t)|`.
//!
//! In one dimension the integral comes from adaptive Gauss-Kronrod alone. In
//! two and three dimensions an iterated adaptive rule is cross-checked
//! against randomized Sobol sampling and the reported error is the larger of
//! the rule discrepancy and the disagreement between the two.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::domain::BoxDomain;
use crate::poly::{CompiledPoly, Polynomial};
use crate::qmc::{ShiftedSobol, Sobol, MAX_DIM};
use crate::quadrature::{adaptive, iterated};
use crate::rng::CounterRng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("oracle supports 1 <= n <= 3, got n = {0}")]
    Dimension(usize),
    #[error("phase has {got} variables, domain has {expected}")]
    VariableMismatch { expected: usize, got: usize },
    #[error("target error must be positive, got {0}")]
    Target(f64),
    #[error("t grid needs >= 5 positive points spanning >= 2 decades")]
    Grid,
    #[error("every |I(t)| on the grid is below 10x its error estimate; slope undefined")]
    FitUndefined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    Adaptive,
    Qmc,
    Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexValue {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

impl From<ComplexValue> for Complex64 {
    fn from(z: ComplexValue) -> Self {
        Complex64::new(z.re, z.im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub value: ComplexValue,
    pub modulus: f64,
    pub abs_error_estimate: f64,
    pub method: OracleMethod,
    pub evaluations: usize,
    pub converged: bool,
    /// Adaptive-rule discrepancy on its own.
    pub rule_error: f64,
    /// Randomized Sobol estimate and its replicate standard error (n >= 2).
    pub qmc_value: Option<ComplexValue>,
    pub qmc_std_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleConfig {
    /// Total evaluation budget of the adaptive rule.
    pub max_evaluations: usize,
    /// log2 of the Sobol points per replicate.
    pub qmc_log2_points: u32,
    pub qmc_replicates: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            max_evaluations: 10_000_000,
            qmc_log2_points: 15,
            qmc_replicates: 16,
            seed: 0x05ee_d0c1,
        }
    }
}

/// `exp(2πi t F(x))` with the phase reduced modulo 1 before scaling by 2π.
#[derive(Debug, Clone)]
struct Integrand {
    phase: CompiledPoly,
    t: f64,
}

impl Integrand {
    fn eval(&self, x: &[f64]) -> Complex64 {
        let u = self.t * self.phase.eval(x);
        let frac = u - u.round();
        let (s, c) = (2.0 * PI * frac).sin_cos();
        Complex64::new(c, s)
    }
}

/// Initial subdivision per axis: roughly one piece per unit of phase
/// variation seen along that axis.
fn initial_pieces(f: &Integrand, domain: &BoxDomain) -> Vec<usize> {
    let n = domain.dim();
    const PROBE: usize = 64;
    (0..n)
        .map(|axis| {
            let mut worst = 0.0f64;
            // probe lines through the box centre and corners along `axis`
            for anchor in [0.0, 0.5, 1.0] {
                let mut x: Vec<f64> = (0..n)
                    .map(|a| domain.lower()[a] + anchor * domain.width(a))
                    .collect();
                let mut prev: Option<f64> = None;
                let mut variation = 0.0;
                for i in 0..=PROBE {
                    x[axis] = domain.lower()[axis] + domain.width(axis) * i as f64 / PROBE as f64;
                    let v = f.t * f.phase.eval(&x);
                    if let Some(p) = prev {
                        variation += (v - p).abs();
                    }
                    prev = Some(v);
                }
                worst = worst.max(variation);
            }
            (worst.ceil() as usize).clamp(1, 1 << 20)
        })
        .collect()
}

fn check_inputs(phase: &Polynomial, domain: &BoxDomain) -> Result<(), OracleError> {
    let n = domain.dim();
    if n == 0 || n > MAX_DIM {
        return Err(OracleError::Dimension(n));
    }
    if phase.num_vars() != n {
        return Err(OracleError::VariableMismatch {
            expected: n,
            got: phase.num_vars(),
        });
    }
    Ok(())
}

/// Randomized Sobol estimate: (mean over replicates, standard error).
fn qmc_estimate(f: &Integrand, domain: &BoxDomain, cfg: &OracleConfig) -> (Complex64, f64) {
    let n = domain.dim();
    let sobol = Sobol::new(n);
    let rng = CounterRng::new(cfg.seed);
    let points = 1u32 << cfg.qmc_log2_points;
    let vol = domain.box_volume();
    let reps: Vec<Complex64> = (0..cfg.qmc_replicates)
        .into_par_iter()
        .map(|rep| {
            let seq = ShiftedSobol::new(&sobol, &rng, rep as u64);
            let mut u = vec![0.0; n];
            let mut x = vec![0.0; n];
            let mut re = crate::ddouble::CompensatedSum::default();
            let mut im = crate::ddouble::CompensatedSum::default();
            for i in 0..points {
                seq.point(i, &mut u);
                domain.from_unit(&u, &mut x);
                if domain.satisfies_constraints(&x) {
                    let z = f.eval(&x);
                    re.add(z.re);
                    im.add(z.im);
                }
            }
            Complex64::new(re.value(), im.value()) * (vol / points as f64)
        })
        .collect();
    let r = reps.len() as f64;
    let mean = reps.iter().sum::<Complex64>() / r;
    let var = reps.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (r - 1.0).max(1.0);
    (mean, (var / r).sqrt())
}

/// Integral of `exp(2πi t F)` over the domain; `t = 1` gives the plain
/// oscillatory integral.
pub fn oscillatory_integral_scaled(
    phase: &Polynomial,
    t: f64,
    domain: &BoxDomain,
    target_error: f64,
    cfg: &OracleConfig,
) -> Result<OracleResult, OracleError> {
    check_inputs(phase, domain)?;
    if !(target_error > 0.0) {
        return Err(OracleError::Target(target_error));
    }
    let f = Integrand {
        phase: phase.compile(),
        t,
    };
    let n = domain.dim();
    let initial = initial_pieces(&f, domain);
    let masked = |x: &[f64]| {
        if domain.satisfies_constraints(x) {
            f.eval(x)
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    let rule = if n == 1 {
        adaptive(
            |x| masked(&[x]),
            domain.lower()[0],
            domain.upper()[0],
            initial[0],
            target_error,
            cfg.max_evaluations,
        )
    } else {
        iterated(
            &masked,
            domain.lower(),
            domain.upper(),
            &initial,
            target_error,
            cfg.max_evaluations,
        )
    };

    let mut result = OracleResult {
        value: rule.value.into(),
        modulus: rule.value.norm(),
        abs_error_estimate: rule.error,
        method: if n == 1 {
            OracleMethod::Adaptive
        } else {
            OracleMethod::Tensor
        },
        evaluations: rule.evaluations,
        converged: rule.converged,
        rule_error: rule.error,
        qmc_value: None,
        qmc_std_error: None,
    };
    if n >= 2 {
        let (q, se) = qmc_estimate(&f, domain, cfg);
        result.abs_error_estimate = rule.error.max((rule.value - q).norm());
        result.evaluations += cfg.qmc_replicates << cfg.qmc_log2_points;
        result.qmc_value = Some(q.into());
        result.qmc_std_error = Some(se);
    }
    // Ω has measure at most the box volume; for constrained domains the
    // box volume is the bound that needs no estimation.
    assert!(
        result.modulus <= domain.box_volume() + result.abs_error_estimate + 1e-12,
        "oracle modulus {} exceeds vol(Ω) = {}",
        result.modulus,
        domain.box_volume()
    );
    Ok(result)
}

pub fn oscillatory_integral(
    phase: &Polynomial,
    domain: &BoxDomain,
    target_error: f64,
) -> Result<OracleResult, OracleError> {
    oscillatory_integral_scaled(phase, 1.0, domain, target_error, &OracleConfig::default())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecaySample {
    pub t: f64,
    pub abs_i: f64,
    pub error: f64,
    pub used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    pub samples: Vec<DecaySample>,
}

/// Least-squares slope of `log|I(t)|` against `log t`.
pub fn decay_fit(
    phase: &Polynomial,
    domain: &BoxDomain,
    t_grid: &[f64],
    target_error: f64,
    cfg: &OracleConfig,
) -> Result<DecayFit, OracleError> {
    if !fit_grid_ok(t_grid) {
        return Err(OracleError::Grid);
    }
    let ts: Vec<f64> = t_grid.iter().copied().filter(|&t| t > 0.0).collect();
    let mut samples = Vec::with_capacity(ts.len());
    for &t in &ts {
        let r = oscillatory_integral_scaled(phase, t, domain, target_error, cfg)?;
        samples.push(DecaySample {
            t,
            abs_i: r.modulus,
            error: r.abs_error_estimate,
            used: r.modulus > 10.0 * r.abs_error_estimate,
        });
    }
    fit_decay(samples)
}

/// Fits `log|I|` against `log t` over the samples marked `used`.
pub fn fit_decay(samples: Vec<DecaySample>) -> Result<DecayFit, OracleError> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.used)
        .map(|s| (s.t.ln(), s.abs_i.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(OracleError::FitUndefined);
    }
    let (slope, intercept) = least_squares(&pts);
    let residual = (pts
        .iter()
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum::<f64>()
        / pts.len() as f64)
        .sqrt();
    Ok(DecayFit {
        slope,
        intercept,
        residual,
        samples,
    })
}

/// Whether `t_grid` supports a decay fit: at least 5 positive points
/// spanning at least two decades.
pub fn fit_grid_ok(t_grid: &[f64]) -> bool {
    let ts: Vec<f64> = t_grid.iter().copied().filter(|&t| t > 0.0).collect();
    let (lo, hi) = ts
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
    ts.len() >= 5 && hi / lo >= 100.0
}

pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Geometric grid of `count` points from `lo` to `hi`.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let ratio = (hi / lo).ln();
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                lo * (ratio * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}
