//! Level profiles of a phase: the distribution `V(u) = vol{x in Ω : F(x) <= u}`,
//! its derivative `φ(u)` (the co-area density `∫_{F=u} ds / |∇F|`), a
//! split of `φ` into monotone pieces, and the one-dimensional reduction
//! `∫_Ω exp(2πi F) dx = ∫_m^M φ(u) exp(2πi u) du`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::domain::BoxDomain;
use crate::measure::{FieldSamples, MeasureError};
use crate::optimize::{optimize_on_box, SamplingPlan, Sense};
use crate::poly::Polynomial;

pub const MIN_GRID_POINTS: usize = 16;

/// Sampled gradient norms below this raise the degenerate-gradient warning.
pub const GRADIENT_WARNING: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoareaError {
    #[error("grid_points must be >= {MIN_GRID_POINTS}, got {0}")]
    GridTooSmall(usize),
    #[error("phase is constant on the domain (m = M = {0}); profile is degenerate")]
    ConstantPhase(f64),
    #[error("phase has {got} variables, domain has {expected}")]
    VariableMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelProfile {
    pub u_grid: Vec<f64>,
    /// `V(u)` at each grid point.
    pub v: Vec<f64>,
    /// Standard error of each `V(u)`.
    pub v_std_error: Vec<f64>,
    /// `φ(u)`: central differences inside, one-sided at the two ends.
    pub phi: Vec<f64>,
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub step: f64,
    /// Largest standard error of `V` divided by the grid step.
    pub noise_scale: f64,
    pub vol_omega: f64,
    pub samples: usize,
    pub min_gradient_norm: f64,
    pub gradient_warning: bool,
}

impl LevelProfile {
    /// Trapezoid integral of `φ` over `[m, M]`.
    pub fn phi_integral(&self) -> f64 {
        trapezoid(&self.phi, self.step)
    }
}

fn trapezoid(values: &[f64], step: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    step * (0.5 * (values[0] + values[n - 1]) + inner)
}

pub fn level_profile(
    phase: &Polynomial,
    domain: &BoxDomain,
    grid_points: usize,
    samples: usize,
    seed: u64,
) -> Result<LevelProfile, CoareaError> {
    if grid_points < MIN_GRID_POINTS {
        return Err(CoareaError::GridTooSmall(grid_points));
    }
    if phase.num_vars() != domain.dim() {
        return Err(CoareaError::VariableMismatch {
            expected: domain.dim(),
            got: phase.num_vars(),
        });
    }
    let f = phase.compile();
    let plan = SamplingPlan::default_for(domain.dim());
    let set = FieldSamples::draw(|x| f.eval(x), domain, samples, seed)?;

    let lo = optimize_on_box(|x| f.eval(x), domain, &plan, Sense::Minimize)
        .map_err(MeasureError::from)?;
    let hi = optimize_on_box(|x| f.eval(x), domain, &plan, Sense::Maximize)
        .map_err(MeasureError::from)?;
    let finite = || set.values().iter().copied().filter(|v| !v.is_nan());
    let m0 = finite().fold(lo.value, f64::min);
    let big_m0 = finite().fold(hi.value, f64::max);
    if !(big_m0 > m0) {
        return Err(CoareaError::ConstantPhase(m0));
    }

    let grad: Vec<_> = phase.gradient().iter().map(Polynomial::compile).collect();
    let gnorm = |x: &[f64]| grad.iter().map(|g| g.eval(x).powi(2)).sum::<f64>().sqrt();
    let min_gradient_norm = optimize_on_box(gnorm, domain, &plan, Sense::Minimize)
        .map_err(MeasureError::from)?
        .value;

    // widen the sampled range by one grid step on each side
    let g = grid_points;
    let step = (big_m0 - m0) / (g - 3) as f64;
    let m = m0 - step;
    let big_m = big_m0 + step;
    let u_grid: Vec<f64> = (0..g)
        .map(|j| if j + 1 == g { big_m } else { m + step * j as f64 })
        .collect();

    let (v, v_std_error) = distribution(&set, &u_grid, m, step);
    let mut phi = vec![0.0; g];
    phi[0] = (v[1] - v[0]) / step;
    phi[g - 1] = (v[g - 1] - v[g - 2]) / step;
    for j in 1..g - 1 {
        phi[j] = (v[j + 1] - v[j - 1]) / (2.0 * step);
    }
    let noise_scale = v_std_error.iter().fold(0.0f64, |a, &b| a.max(b)) / step;
    let vol_omega = set.volume_where(|_| true).value;

    Ok(LevelProfile {
        u_grid,
        v,
        v_std_error,
        phi,
        m,
        big_m,
        step,
        noise_scale,
        vol_omega,
        samples: set.len(),
        min_gradient_norm,
        gradient_warning: min_gradient_norm < GRADIENT_WARNING,
    })
}

/// Stratified `V(u_j)` and its standard error from one pass over the
/// samples. Everything is accumulated in integers, so the result is exact
/// with respect to summation order.
fn distribution(set: &FieldSamples, u_grid: &[f64], m: f64, step: f64) -> (Vec<f64>, Vec<f64>) {
    let g = u_grid.len();
    let q = set.strata().per_cell;
    // bin(v) = first grid index j with v <= u_j
    let bin = |v: f64| -> usize {
        let mut j = ((v - m) / step).ceil().max(0.0) as usize;
        j = j.min(g - 1);
        while j > 0 && v <= u_grid[j - 1] {
            j -= 1;
        }
        while j + 1 < g && v > u_grid[j] {
            j += 1;
        }
        j
    };
    let mut hist = vec![0u64; g + 1];
    // active[k][j]: strata whose in-stratum count at u_j is exactly k+1 of q
    // (only 0 < count < q contributes variance)
    let mut active = vec![vec![0i64; g + 1]; q.saturating_sub(1)];
    let mut bins = Vec::with_capacity(q);
    for chunk in set.values().chunks(q) {
        bins.clear();
        bins.extend(chunk.iter().filter(|v| !v.is_nan()).map(|&v| bin(v)));
        bins.sort_unstable();
        for &b in &bins {
            hist[b] += 1;
        }
        for k in 0..bins.len() {
            if k + 1 >= q {
                break;
            }
            let start = bins[k];
            let end = if k + 1 < bins.len() { bins[k + 1] } else { g };
            if start < end {
                active[k][start] += 1;
                active[k][end] -= 1;
            }
        }
    }
    let cell = set.cell_volume();
    let qf = q as f64;
    let mut v = Vec::with_capacity(g);
    let mut se = Vec::with_capacity(g);
    let mut cum = 0u64;
    let mut running = vec![0i64; active.len()];
    for j in 0..g {
        cum += hist[j];
        v.push(cum as f64 * cell / qf);
        let mut var = 0.0;
        for (k, r) in running.iter_mut().enumerate() {
            *r += active[k][j];
            if *r > 0 {
                let p = (k + 1) as f64 / qf;
                var += *r as f64 * p * (1.0 - p) / (qf - 1.0);
            }
        }
        se.push((var * cell * cell).sqrt());
    }
    (v, se)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Nondecreasing,
    Nonincreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonePieces {
    /// Grid index where each piece starts; consecutive pieces share their
    /// boundary point.
    pub breakpoints: Vec<usize>,
    pub directions: Vec<Direction>,
    /// `K_0`, the number of pieces.
    pub count: usize,
    pub tolerance: f64,
}

impl MonotonePieces {
    /// Piece owning grid index `j` (a shared boundary belongs to the later
    /// piece).
    pub fn piece_of(&self, j: usize) -> usize {
        self.breakpoints.partition_point(|&b| b <= j).saturating_sub(1)
    }
}

/// `2·noise_scale` inflated by `sqrt(2 ln G)`, the typical maximum of `G`
/// independent unit Gaussian deviations.
pub fn default_tolerance(profile: &LevelProfile) -> f64 {
    let g = profile.phi.len().max(2) as f64;
    2.0 * profile.noise_scale * (2.0 * g.ln()).sqrt()
}

/// Greedy change-point scan: a piece ends at its running extremum once the
/// sequence moves back from it by more than `tolerance`.
pub fn monotone_split(phi: &[f64], tolerance: f64) -> MonotonePieces {
    let tol = tolerance.max(0.0);
    let mut breakpoints = vec![0];
    let mut directions = Vec::new();
    if phi.is_empty() {
        return MonotonePieces {
            breakpoints,
            directions: vec![Direction::Nondecreasing],
            count: 1,
            tolerance: tol,
        };
    }
    let mut dir: Option<Direction> = None;
    let (mut lo, mut hi) = (phi[0], phi[0]);
    let (mut ext, mut ext_idx) = (phi[0], 0usize);
    for (j, &v) in phi.iter().enumerate().skip(1) {
        match dir {
            None => {
                lo = lo.min(v);
                hi = hi.max(v);
                if v - lo > tol {
                    dir = Some(Direction::Nondecreasing);
                    (ext, ext_idx) = (v, j);
                } else if hi - v > tol {
                    dir = Some(Direction::Nonincreasing);
                    (ext, ext_idx) = (v, j);
                }
            }
            Some(Direction::Nondecreasing) => {
                if v >= ext {
                    (ext, ext_idx) = (v, j);
                } else if ext - v > tol {
                    directions.push(Direction::Nondecreasing);
                    breakpoints.push(ext_idx);
                    dir = Some(Direction::Nonincreasing);
                    (ext, ext_idx) = lowest(phi, ext_idx, j);
                }
            }
            Some(Direction::Nonincreasing) => {
                if v <= ext {
                    (ext, ext_idx) = (v, j);
                } else if v - ext > tol {
                    directions.push(Direction::Nonincreasing);
                    breakpoints.push(ext_idx);
                    dir = Some(Direction::Nondecreasing);
                    (ext, ext_idx) = highest(phi, ext_idx, j);
                }
            }
        }
    }
    directions.push(dir.unwrap_or(Direction::Nondecreasing));
    MonotonePieces {
        count: directions.len(),
        breakpoints,
        directions,
        tolerance: tol,
    }
}

/// Last index of the minimum over `phi[from..=to]`.
fn lowest(phi: &[f64], from: usize, to: usize) -> (f64, usize) {
    (from..=to).fold((f64::INFINITY, from), |(b, bi), i| {
        if phi[i] <= b {
            (phi[i], i)
        } else {
            (b, bi)
        }
    })
}

fn highest(phi: &[f64], from: usize, to: usize) -> (f64, usize) {
    (from..=to).fold((f64::NEG_INFINITY, from), |(b, bi), i| {
        if phi[i] >= b {
            (phi[i], i)
        } else {
            (b, bi)
        }
    })
}

/// Trapezoid quadrature of `φ(u) exp(2πi u)` over the profile grid.
pub fn oscillatory_from_profile(profile: &LevelProfile) -> Complex64 {
    let g = profile.phi.len();
    let mut re = crate::ddouble::CompensatedSum::default();
    let mut im = crate::ddouble::CompensatedSum::default();
    for (j, (&u, &phi)) in profile.u_grid.iter().zip(&profile.phi).enumerate() {
        let w = if j == 0 || j + 1 == g { 0.5 } else { 1.0 };
        let frac = u - u.round();
        let (s, c) = (2.0 * PI * frac).sin_cos();
        re.add(w * phi * c);
        im.add(w * phi * s);
    }
    Complex64::new(re.value(), im.value()) * profile.step
}
