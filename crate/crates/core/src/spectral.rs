//! Singular-value quantities of derivative-chain levels.
//!
//! At a point `x`, `G_j(x)` is the product of the `r` smallest singular
//! values of `A_j(x)` and `L_j(x)` is its Frobenius norm. Domain extrema
//! `G_j = min G_j(x)` and `L = max_j max L_j(x)` are sampled with
//! [`optimize_on_box`] and are therefore heuristic.

use serde::Serialize;
use thiserror::Error;

use crate::chain::{DerivativeChain, PolyMatrix};
use crate::domain::{BoxDomain, DomainError};
use crate::linalg::{self, LinalgError, Matrix};
use crate::optimize::{optimize_on_box, SamplingPlan, Sense};
use crate::poly::CompiledPoly;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("r = {r} out of range 1..={max}")]
    RankOutOfRange { r: usize, max: usize },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralSummary {
    pub singular_values: Vec<f64>,
    pub g_product: f64,
    pub frobenius: f64,
}

pub fn singular_values(m: &Matrix) -> Result<Vec<f64>, SpectralError> {
    Ok(linalg::singular_values(m)?)
}

fn product_of_smallest(sv: &[f64], r: usize) -> Result<f64, SpectralError> {
    if r == 0 || r > sv.len() {
        return Err(SpectralError::RankOutOfRange { r, max: sv.len() });
    }
    Ok(sv[sv.len() - r..].iter().product())
}

pub fn smallest_r_product(m: &Matrix, r: usize) -> Result<f64, SpectralError> {
    let max = m.rows().min(m.cols());
    if r == 0 || r > max {
        return Err(SpectralError::RankOutOfRange { r, max });
    }
    product_of_smallest(&singular_values(m)?, r)
}

pub fn frobenius_norm(m: &Matrix) -> f64 {
    m.data().iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `sqrt(det(M M^T))`, the Gram-determinant route to the product of all
/// singular values of a matrix with at most as many rows as columns.
pub fn gram_root(m: &Matrix) -> f64 {
    linalg::gram_determinant_root(m)
}

pub fn summarize(m: &Matrix, r: usize) -> Result<SpectralSummary, SpectralError> {
    let sv = singular_values(m)?;
    let g_product = product_of_smallest(&sv, r)?;
    Ok(SpectralSummary {
        singular_values: sv,
        g_product,
        frobenius: frobenius_norm(m),
    })
}

/// Number of singular values entering `G_j` for a level of the given shape:
/// the requested `r`, capped by the level's smaller dimension.
pub fn r_effective(r: usize, rows: usize, cols: usize) -> usize {
    r.min(rows).min(cols)
}

/// A polynomial matrix prepared for repeated point evaluation.
#[derive(Debug, Clone)]
pub struct CompiledMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<CompiledPoly>,
}

impl CompiledMatrix {
    pub fn new(m: &PolyMatrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            entries: m.entries().iter().map(|p| p.compile()).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn eval(&self, x: &[f64]) -> Matrix {
        let data = self.entries.iter().map(|p| p.eval(x)).collect();
        Matrix::new(self.rows, self.cols, data).expect("shape preserved")
    }
}

#[derive(Debug, Clone)]
pub struct CompiledChain {
    levels: Vec<CompiledMatrix>,
}

impl CompiledChain {
    pub fn new(chain: &DerivativeChain) -> Self {
        Self {
            levels: chain.levels().iter().map(CompiledMatrix::new).collect(),
        }
    }

    pub fn level(&self, j: usize) -> &CompiledMatrix {
        &self.levels[j]
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// `G_j(x)` with `r` capped per [`r_effective`]; NaN if the level cannot
    /// be evaluated (non-finite entries).
    pub fn g_at(&self, j: usize, r: usize, x: &[f64]) -> f64 {
        let level = &self.levels[j];
        let re = r_effective(r, level.rows, level.cols);
        smallest_r_product(&level.eval(x), re).unwrap_or(f64::NAN)
    }

    pub fn smallest_singular_at(&self, j: usize, x: &[f64]) -> f64 {
        singular_values(&self.levels[j].eval(x))
            .ok()
            .and_then(|sv| sv.last().copied())
            .unwrap_or(f64::NAN)
    }

    pub fn frobenius_at(&self, j: usize, x: &[f64]) -> f64 {
        frobenius_norm(&self.levels[j].eval(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainExtrema {
    /// `G_0 .. G_k`
    pub g_min: Vec<f64>,
    pub g_argmin: Vec<Vec<f64>>,
    /// Singular values multiplied into `G_j` at each level.
    pub r_levels: Vec<usize>,
    pub l_max: f64,
    pub l_argmax: Vec<f64>,
    /// Chain level at which `L` was attained.
    pub l_level: usize,
    pub sample_resolution: usize,
    pub refine_rounds: usize,
    pub evaluations: usize,
    /// Always true: extrema are sampled, not certified.
    pub heuristic: bool,
}

pub fn chain_extrema(
    chain: &DerivativeChain,
    domain: &BoxDomain,
    plan: &SamplingPlan,
    r: usize,
) -> Result<ChainExtrema, SpectralError> {
    if r == 0 {
        return Err(SpectralError::RankOutOfRange { r, max: 0 });
    }
    let compiled = CompiledChain::new(chain);
    let mut g_min = Vec::new();
    let mut g_argmin = Vec::new();
    let mut r_levels = Vec::new();
    let mut evaluations = 0;
    let mut l_best: Option<(f64, Vec<f64>, usize)> = None;
    for j in 0..=compiled.depth() {
        let level = compiled.level(j);
        r_levels.push(r_effective(r, level.rows(), level.cols()));
        let g = optimize_on_box(|x| compiled.g_at(j, r, x), domain, plan, Sense::Minimize)?;
        evaluations += g.evaluations;
        g_min.push(g.value);
        g_argmin.push(g.point);
        let l = optimize_on_box(|x| compiled.frobenius_at(j, x), domain, plan, Sense::Maximize)?;
        evaluations += l.evaluations;
        if l_best.as_ref().is_none_or(|(v, _, _)| l.value > *v) {
            l_best = Some((l.value, l.point, j));
        }
    }
    let (l_max, l_argmax, l_level) = l_best.expect("chain has at least one level");
    Ok(ChainExtrema {
        g_min,
        g_argmin,
        r_levels,
        l_max,
        l_argmax,
        l_level,
        sample_resolution: plan.resolution,
        refine_rounds: plan.refine_rounds,
        evaluations,
        heuristic: true,
    })
}
