//! Explicit right-hand sides of the surface-measure and oscillatory-integral
//! bounds, evaluated from spectral and measure inputs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::DerivativeChain;
use crate::domain::BoxDomain;
use crate::optimize::{optimize_on_box, SamplingPlan, Sense};
use crate::spectral::{CompiledChain, SpectralError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("case {case:?} does not apply to k = {k}, r = {r}")]
    WrongCase { case: Theorem4Case, k: usize, r: usize },
    #[error("{0}")]
    Undefined(&'static str),
    #[error("missing input {0}")]
    Missing(&'static str),
    #[error("{0} levels supplied, {1} required")]
    TooFewLevels(usize, usize),
    #[error("lambda vanishes at the sampled minimum (x = {0:?}); bound undefined")]
    LambdaZero(Vec<f64>),
    #[error("derivative chain: {0}")]
    Chain(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Unspecified constants of the bounds. All default to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsConfig {
    #[serde(rename = "F_charts")]
    pub f_charts: f64,
    #[serde(rename = "T0")]
    pub t0: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub c_dprime: f64,
    pub c_n: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self {
            f_charts: 1.0,
            t0: 1.0,
            k: 1.0,
            c_dprime: 1.0,
            c_n: 1.0,
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            c4: 1.0,
        }
    }
}

impl ConstantsConfig {
    pub fn validate(&self) -> Result<(), BoundError> {
        for (name, value) in [
            ("F_charts", self.f_charts),
            ("T0", self.t0),
            ("K", self.k),
            ("c_dprime", self.c_dprime),
            ("c_n", self.c_n),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
        ] {
            positive(name, value)?;
        }
        Ok(())
    }

    pub fn with_k(self, k: f64) -> Self {
        Self { k, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: usize,
    pub r: usize,
    pub k: usize,
    /// Threshold; `NaN` (written as `null`) where no threshold applies.
    #[serde(rename = "H", deserialize_with = "nan_when_null")]
    pub h: f64,
    /// Spectral minima `G_1 .. G_k`.
    #[serde(rename = "G_levels")]
    pub g_levels: Vec<f64>,
    /// Recursion values `G_(1) .. G_(k)`.
    #[serde(rename = "G_paren")]
    pub g_paren: Vec<f64>,
    #[serde(rename = "L")]
    pub l: f64,
    /// Maximum of `|∇F|` over the domain.
    #[serde(rename = "H_tilde")]
    pub h_tilde: f64,
    /// Minimum of `|∇F|` over the domain.
    #[serde(rename = "H_1")]
    pub h_1: f64,
    /// Largest level-surface area.
    #[serde(rename = "Pi_area")]
    pub pi_area: Option<f64>,
    #[serde(rename = "vol_omega")]
    pub vol_omega: f64,
    /// Minimum over the domain of `sqrt(det(A_{k-1} A_{k-1}^t))`.
    #[serde(rename = "G_gram")]
    pub g_gram: Option<f64>,
}

fn nan_when_null<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

fn positive(name: &'static str, value: f64) -> Result<f64, BoundError> {
    if !value.is_finite() {
        Err(BoundError::NonFinite { name, value })
    } else if value <= 0.0 {
        Err(BoundError::NonPositive { name, value })
    } else {
        Ok(value)
    }
}

pub fn h(a: f64) -> Result<f64, BoundError> {
    positive("a", a)?;
    Ok(a + 1.0 / a)
}

/// `π^{-r/2} Γ(1 + r/2)`.
pub fn c0(r: usize) -> f64 {
    // Γ(1 + r/2) by the half-integer recurrence
    let mut gamma = if r.is_multiple_of(2) { 1.0 } else { 0.5 * PI.sqrt() };
    let mut s = if r.is_multiple_of(2) { 1.0 } else { 1.5 };
    while s < 1.0 + r as f64 / 2.0 - 0.25 {
        gamma *= s;
        s += 1.0;
    }
    gamma / PI.powf(r as f64 / 2.0)
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `G_(1) .. G_(k)` from `G_(k) = G_k` and `G_(j-1) = H^{1/j} G_(j)^{(j-1)/j}`.
pub fn g_paren_chain(h_value: f64, g_k: f64, k: usize) -> Result<Vec<f64>, BoundError> {
    positive("H", h_value)?;
    positive("G_k", g_k)?;
    if k == 0 {
        return Err(BoundError::Undefined("k must be at least 1"));
    }
    let mut out = vec![0.0; k];
    out[k - 1] = g_k;
    for j in (2..=k).rev() {
        let jf = j as f64;
        out[j - 2] = h_value.powf(1.0 / jf) * out[j - 1].powf((jf - 1.0) / jf);
    }
    Ok(out)
}

/// Logarithmic factor of the first bound: `r² log(h(G_(1)) h(H) h(L))`.
pub fn theorem1_log_factor(r: usize, g1: f64, h_value: f64, l: f64) -> Result<f64, BoundError> {
    let r2 = (r.max(1) * r.max(1)) as f64;
    Ok(r2 * (h(g1)? * h(h_value)? * h(l)?).ln())
}

pub fn theorem1_bound(inputs: &BoundInputs, cfg: &ConstantsConfig) -> Result<f64, BoundError> {
    cfg.validate()?;
    let g1 = positive("G_(1)", *inputs.g_paren.first().ok_or(BoundError::Missing("G_(1)"))?)?;
    let hv = positive("H", inputs.h)?;
    let l = positive("L", inputs.l)?;
    let (n, r) = (inputs.n, inputs.r);
    let rf = r as f64;
    let log = theorem1_log_factor(r, g1, hv, l)?;
    let value = cfg.f_charts
        * cfg.t0
        * 2f64.powi(r as i32 + 3)
        * rf.powf(3.0 * rf)
        * c0(r).powi(2)
        * binomial(n * r, r).sqrt()
        * binomial(n, r).powf(1.5)
        * hv
        / g1
        * log.powi(r as i32);
    Ok(value)
}

/// `H̃ = max{h(H), h(G_(1)), .., h(G_(k)), h(L)}` with `G_(k)` replaced by
/// `g_last`.
fn theorem2_h_tilde(inputs: &BoundInputs, k: usize, g_last: f64) -> Result<f64, BoundError> {
    let mut best = h(inputs.h)?.max(h(inputs.l)?);
    for &g in &inputs.g_paren[..k - 1] {
        best = best.max(h(positive("G_(j)", g)?)?);
    }
    Ok(best.max(h(g_last)?))
}

fn theorem2_shape(inputs: &BoundInputs, cfg: &ConstantsConfig, k: usize, g: f64) -> Result<f64, BoundError> {
    cfg.validate()?;
    if k == 0 {
        return Err(BoundError::Undefined("k must be at least 1"));
    }
    if inputs.g_paren.len() < k {
        return Err(BoundError::TooFewLevels(inputs.g_paren.len(), k));
    }
    let hv = positive("H", inputs.h)?;
    positive("L", inputs.l)?;
    let (n, r) = (inputs.n as f64, inputs.r as i32);
    let rf = inputs.r as f64;
    let kf = k as f64;
    let h_tilde = theorem2_h_tilde(inputs, k, g)?;
    let log = 3.0 * rf * rf * h_tilde.ln();
    let value = c0(inputs.r).powi(2)
        * (1.0 + 4.0 * n.powi(r) * cfg.c_n).powi(k as i32 - 1)
        * 2f64.powi(r + 3)
        * (n * rf * rf).powf(2.0 * rf)
        * cfg.f_charts
        * cfg.t0
        * hv.powf(1.0 / kf)
        * g.powf(-1.0 / kf)
        * log.powi(r);
    Ok(value)
}

pub fn theorem2_bound(inputs: &BoundInputs, cfg: &ConstantsConfig, k: usize) -> Result<f64, BoundError> {
    let g = *inputs
        .g_paren
        .get(k.wrapping_sub(1))
        .ok_or(BoundError::TooFewLevels(inputs.g_paren.len(), k))?;
    theorem2_shape(inputs, cfg, k, positive("G_(k)", g)?)
}

pub fn theorem3_bound(inputs: &BoundInputs, cfg: &ConstantsConfig, k: usize) -> Result<f64, BoundError> {
    let g = *inputs
        .g_levels
        .get(k.wrapping_sub(1))
        .ok_or(BoundError::TooFewLevels(inputs.g_levels.len(), k))?;
    theorem2_shape(inputs, cfg, k, positive("G_k", g)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem4Case {
    KGeR,
    KLtRA,
    KLtRB,
}

/// The cases that apply to `(k, r)`.
pub fn theorem4_cases(k: usize, r: usize) -> &'static [Theorem4Case] {
    if k >= r {
        &[Theorem4Case::KGeR]
    } else {
        &[Theorem4Case::KLtRA, Theorem4Case::KLtRB]
    }
}

/// `L_0 = max(L, 1/L, H̃, 1/H_1, G_{k-1}, 1/G_{k-1})`.
pub fn l_zero(inputs: &BoundInputs, g_km1: f64) -> Result<f64, BoundError> {
    let l = positive("L", inputs.l)?;
    let ht = positive("H_tilde", inputs.h_tilde)?;
    let h1 = positive("H_1", inputs.h_1)?;
    let g = positive("G_{k-1}", g_km1)?;
    Ok([l, 1.0 / l, ht, 1.0 / h1, g, 1.0 / g].into_iter().fold(0.0, f64::max))
}

/// Raw case formulas, without checking that the case suits `(k, r)`.
/// `log_term` is `log(L_0 + 1/L_0)`.
#[allow(clippy::too_many_arguments)]
pub fn theorem4_formula(
    case: Theorem4Case,
    r: usize,
    k: usize,
    cfg: &ConstantsConfig,
    g_km1: f64,
    gram: f64,
    h_tilde: f64,
    pi_area: f64,
    log_term: f64,
) -> f64 {
    let (rf, kf) = (r as f64, k as f64);
    match case {
        Theorem4Case::KGeR => {
            cfg.c1
                * cfg.k
                * gram.powf((rf - kf) / (kf * (kf - 1.0)))
                * g_km1.powf(rf / (kf * (kf - 1.0)))
                * log_term.powf(rf - 1.0)
        }
        Theorem4Case::KLtRA => {
            cfg.c2
                * cfg.k
                * h_tilde.powf((rf - kf) / (kf - 1.0))
                * g_km1.powf(-1.0 / (kf - 1.0))
                * log_term.powf(rf + 1.0)
        }
        Theorem4Case::KLtRB => {
            cfg.c3
                * cfg.k
                * pi_area.powf((rf - kf) / (kf - 1.0))
                * g_km1.powf(-1.0 / (rf - 1.0))
                * log_term.powf(rf - 1.0)
        }
    }
}

pub fn theorem4_bound(case: Theorem4Case, inputs: &BoundInputs, cfg: &ConstantsConfig) -> Result<f64, BoundError> {
    cfg.validate()?;
    let (k, r) = (inputs.k, inputs.r);
    if k < 2 {
        return Err(BoundError::Undefined("k-1 division undefined: k must be at least 2"));
    }
    if !theorem4_cases(k, r).contains(&case) {
        return Err(BoundError::WrongCase { case, k, r });
    }
    if case == Theorem4Case::KLtRB && r < 2 {
        return Err(BoundError::Undefined("r-1 division undefined: r must be at least 2"));
    }
    if inputs.g_levels.len() < k - 1 {
        return Err(BoundError::TooFewLevels(inputs.g_levels.len(), k - 1));
    }
    let g_km1 = inputs.g_levels[k - 2];
    let log_term = h(l_zero(inputs, g_km1)?)?.ln();
    let (mut gram, mut pi_area) = (f64::NAN, f64::NAN);
    match case {
        Theorem4Case::KGeR => {
            gram = positive("G", inputs.g_gram.ok_or(BoundError::Missing("G_gram"))?)?;
        }
        Theorem4Case::KLtRA => {}
        Theorem4Case::KLtRB => {
            pi_area = positive("Pi_area", inputs.pi_area.ok_or(BoundError::Missing("Pi_area"))?)?;
        }
    }
    Ok(theorem4_formula(case, r, k, cfg, g_km1, gram, inputs.h_tilde, pi_area, log_term))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsequenceResult {
    pub lambda: f64,
    pub lambda_argmin: Vec<f64>,
    pub log_factor: f64,
    pub bound: f64,
}

/// `λ` by sampled minimization and the bound `c4 K λ^{-1} ℘_k^{r+1}` with
/// `℘_k = 3 r² log H̃`. `h_tilde` is the largest of the h-values entering
/// the logarithm.
pub fn consequence_lambda(
    chain: &DerivativeChain,
    domain: &BoxDomain,
    k: usize,
    r: usize,
    plan: &SamplingPlan,
    h_tilde: f64,
    cfg: &ConstantsConfig,
) -> Result<ConsequenceResult, BoundError> {
    cfg.validate()?;
    if k == 0 || r == 0 {
        return Err(BoundError::Undefined("k and r must be at least 1"));
    }
    let needed = if k <= r { r } else { k };
    if chain.depth() + 1 < needed {
        return Err(BoundError::TooFewLevels(chain.depth() + 1, needed));
    }
    let compiled = CompiledChain::new(chain);
    let field = |x: &[f64]| {
        if k <= r {
            (0..r).map(|i| compiled.smallest_singular_at(i, x)).sum::<f64>()
        } else {
            compiled.smallest_singular_at(k - 1, x).powf(r as f64 / k as f64)
        }
    };
    let best = optimize_on_box(field, domain, plan, Sense::Minimize).map_err(SpectralError::from)?;
    if !(best.value > 0.0) {
        return Err(BoundError::LambdaZero(best.point));
    }
    let bound = consequence_bound(best.value, r, h_tilde, cfg)?;
    let log_factor = 3.0 * (r * r) as f64 * h_tilde.ln();
    Ok(ConsequenceResult {
        lambda: best.value,
        lambda_argmin: best.point,
        log_factor,
        bound,
    })
}

pub fn consequence_bound(lambda: f64, r: usize, h_tilde: f64, cfg: &ConstantsConfig) -> Result<f64, BoundError> {
    positive("lambda", lambda)?;
    positive("H_tilde", h_tilde)?;
    let log = 3.0 * (r * r) as f64 * h_tilde.ln();
    Ok(cfg.c4 * cfg.k / lambda * log.powi(r as i32 + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_chain, PolyMatrix};
    use crate::poly::Polynomial;

    fn unit_inputs(n: usize, r: usize, k: usize) -> BoundInputs {
        BoundInputs {
            n,
            r,
            k,
            h: 1.0,
            g_levels: vec![1.0; k],
            g_paren: vec![1.0; k],
            l: 1.0,
            h_tilde: 1.0,
            h_1: 1.0,
            pi_area: Some(1.0),
            vol_omega: 1.0,
            g_gram: Some(1.0),
        }
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn h_values() {
        assert_eq!(h(1.0).unwrap(), 2.0);
        assert_eq!(h(2.0).unwrap(), 2.5);
        assert_eq!(h(0.5).unwrap(), 2.5);
        assert!(h(0.0).is_err());
        assert!(h(-1.0).is_err());
    }

    #[test]
    fn c0_values() {
        assert_eq!(c0(0), 1.0);
        assert!(close(c0(1), 0.5, 1e-15));
        assert!(close(c0(2), 1.0 / PI, 1e-15));
        // Γ(5/2) = 3√π/4
        assert!(close(c0(3), 0.75 * PI.sqrt() / PI.powf(1.5), 1e-15));
        // Γ(3) = 2
        assert!(close(c0(4), 2.0 / (PI * PI), 1e-15));
    }

    #[test]
    fn paren_chain() {
        assert_eq!(g_paren_chain(1.0, 1.0, 4).unwrap(), vec![1.0; 4]);
        assert_eq!(g_paren_chain(4.0, 1.0, 2).unwrap(), vec![2.0, 1.0]);
        let g = g_paren_chain(1.0, 8.0, 3).unwrap();
        assert!(close(g[1], 4.0, 1e-15) && close(g[0], 2.0, 1e-15), "{g:?}");
        assert_eq!(g_paren_chain(3.0, 5.0, 1).unwrap(), vec![5.0]);
        assert!(g_paren_chain(0.0, 1.0, 2).is_err());
        assert!(g_paren_chain(1.0, 0.0, 2).is_err());
    }

    #[test]
    fn first_bound_hand_value() {
        let b = theorem1_bound(&unit_inputs(1, 1, 1), &ConstantsConfig::default()).unwrap();
        assert!(close(b, 4.0 * 8f64.ln(), 1e-14), "{b}");
        assert!((b - 8.318).abs() < 1e-3);
    }

    #[test]
    fn first_bound_scales_linearly_outside_log() {
        let cfg = ConstantsConfig::default();
        let mut a = unit_inputs(2, 1, 1);
        a.h = 3.0;
        let mut b = a.clone();
        b.h = 6.0;
        let (ba, bb) = (theorem1_bound(&a, &cfg).unwrap(), theorem1_bound(&b, &cfg).unwrap());
        let la = theorem1_log_factor(1, 1.0, 3.0, 1.0).unwrap();
        let lb = theorem1_log_factor(1, 1.0, 6.0, 1.0).unwrap();
        let ratio = bb / ba;
        assert!(ratio >= 2.0 && ratio <= 2.0 * lb / la + 1e-12, "{ratio}");
        let mut tiny = a.clone();
        tiny.h = 1e-12;
        assert!(theorem1_bound(&tiny, &cfg).unwrap() < 1e-9);
    }

    #[test]
    fn second_bound_hand_value() {
        let mut inputs = unit_inputs(1, 1, 2);
        inputs.h = 4.0;
        inputs.g_levels = vec![1.0, 1.0];
        inputs.g_paren = g_paren_chain(4.0, 1.0, 2).unwrap();
        let cfg = ConstantsConfig::default();
        let expect = 0.25 * 5.0 * 16.0 * 2.0 * 3.0 * 4.25f64.ln();
        let b2 = theorem2_bound(&inputs, &cfg, 2).unwrap();
        assert!(close(b2, expect, 1e-14), "{b2} vs {expect}");
        assert!((b2 - 173.6).abs() < 0.05);
        assert_eq!(theorem3_bound(&inputs, &cfg, 2).unwrap(), b2);
    }

    #[test]
    fn second_bound_with_k_one_matches_linear_h() {
        let cfg = ConstantsConfig::default();
        let mut a = unit_inputs(2, 1, 1);
        a.h = 2.0;
        let mut b = a.clone();
        b.h = 0.5;
        // h(2) = h(1/2), so the log factor is the same for both
        a.g_paren = vec![0.5];
        b.g_paren = vec![0.5];
        let ratio = theorem2_bound(&a, &cfg, 1).unwrap() / theorem2_bound(&b, &cfg, 1).unwrap();
        assert!(close(ratio, 4.0, 1e-14));
    }

    #[test]
    fn third_bound_is_monotone_in_g() {
        let cfg = ConstantsConfig::default();
        let mut inputs = unit_inputs(2, 1, 2);
        inputs.h = 3.0;
        inputs.g_paren = g_paren_chain(3.0, 2.0, 2).unwrap();
        inputs.g_levels = vec![1.0, 1.5];
        assert!(theorem3_bound(&inputs, &cfg, 2).unwrap() >= theorem2_bound(&inputs, &cfg, 2).unwrap());
    }

    #[test]
    fn golden_unit_values() {
        let cfg = ConstantsConfig::default();
        // n = 2, r = 1: 16 · (1/4) · √2 · 2^{3/2} · log 8
        let b1 = theorem1_bound(&unit_inputs(2, 1, 1), &cfg).unwrap();
        assert!(close(b1, 16.0 * 0.25 * 2f64.sqrt() * 2f64.powf(1.5) * 8f64.ln(), 1e-14));
        // n = 2, r = 1, k = 2: (1/4) · 9 · 16 · 4 · 3 log 2
        let b2 = theorem2_bound(&unit_inputs(2, 1, 2), &cfg, 2).unwrap();
        assert!(close(b2, 0.25 * 9.0 * 16.0 * 4.0 * 3.0 * 2f64.ln(), 1e-14));
        // n = r = 2, k = 3: case k >= r, log term log 2
        let b4 = theorem4_bound(Theorem4Case::KGeR, &unit_inputs(2, 2, 3), &cfg).unwrap();
        assert!(close(b4, 2f64.ln(), 1e-14));
    }

    #[test]
    fn fourth_bound_case_selection() {
        assert_eq!(theorem4_cases(3, 2), &[Theorem4Case::KGeR]);
        assert_eq!(theorem4_cases(2, 3), &[Theorem4Case::KLtRA, Theorem4Case::KLtRB]);
        let cfg = ConstantsConfig::default();
        assert!(matches!(
            theorem4_bound(Theorem4Case::KLtRA, &unit_inputs(2, 2, 2), &cfg),
            Err(BoundError::WrongCase { .. })
        ));
        assert!(matches!(
            theorem4_bound(Theorem4Case::KGeR, &unit_inputs(2, 2, 1), &cfg),
            Err(BoundError::Undefined(_))
        ));
        let mut no_grad = unit_inputs(2, 2, 2);
        no_grad.h_1 = 0.0;
        assert!(matches!(
            theorem4_bound(Theorem4Case::KGeR, &no_grad, &cfg),
            Err(BoundError::NonPositive { name: "H_1", .. })
        ));
    }

    #[test]
    fn fourth_bound_case_a_hand_value() {
        let cfg = ConstantsConfig::default().with_k(3.0);
        let v = theorem4_formula(Theorem4Case::KLtRA, 2, 2, &cfg, 1.0, f64::NAN, 1.0, f64::NAN, 2f64.ln());
        assert!(close(v, 3.0 * 2f64.ln().powi(3), 1e-15));
        assert!((v / 3.0 - 0.333).abs() < 1e-3);
        let big = theorem4_formula(Theorem4Case::KLtRA, 3, 2, &cfg, 1e12, f64::NAN, 1.0, f64::NAN, 2f64.ln());
        assert!(big < 1e-11);
        let ok = theorem4_bound(Theorem4Case::KLtRA, &unit_inputs(3, 3, 2), &cfg).unwrap();
        assert!(close(ok, 3.0 * 2f64.ln().powi(4), 1e-14));
        let b = theorem4_bound(Theorem4Case::KLtRB, &unit_inputs(3, 3, 2), &cfg).unwrap();
        assert!(close(b, 3.0 * 2f64.ln().powi(2), 1e-14));
    }

    fn theorem4_chain(src: &str, k: usize) -> DerivativeChain {
        build_chain(PolyMatrix::gradient_row(&Polynomial::parse(src, 2).unwrap()), k).unwrap()
    }

    #[test]
    fn lambda_for_product_phase() {
        let chain = theorem4_chain("x0*x1", 2);
        let plan = SamplingPlan::default_for(2).with_resolution(256);
        let cfg = ConstantsConfig::default();
        let res = consequence_lambda(&chain, &BoxDomain::unit(2), 2, 2, &plan, 2.5, &cfg).unwrap();
        assert!((res.lambda - 1.0).abs() < 1e-9, "{res:?}");
        let expect = 1.0 / res.lambda * (12.0 * 2.5f64.ln()).powi(3);
        assert!(close(res.bound, expect, 1e-14));
    }

    #[test]
    fn lambda_for_linear_phase() {
        let chain = theorem4_chain("x0 + x1", 2);
        let plan = SamplingPlan::default_for(2);
        let res = consequence_lambda(&chain, &BoxDomain::unit(2), 2, 2, &plan, 2.0, &ConstantsConfig::default()).unwrap();
        assert!((res.lambda - 2f64.sqrt()).abs() < 1e-12);
        assert!(res.bound.is_finite());
        let half = consequence_bound(2.0 * res.lambda, 2, 2.0, &ConstantsConfig::default()).unwrap();
        assert!(close(half, res.bound / 2.0, 1e-14));
    }

    #[test]
    fn lambda_zero_is_signalled() {
        let chain = theorem4_chain("x0*x1", 3);
        let plan = SamplingPlan::default_for(2);
        let err = consequence_lambda(&chain, &BoxDomain::unit(2), 3, 2, &plan, 2.0, &ConstantsConfig::default());
        assert!(matches!(err, Err(BoundError::LambdaZero(_))));
    }

    #[test]
    fn constants_parse_with_defaults() {
        let cfg: ConstantsConfig = serde_json::from_str(r#"{"K": 4, "c1": 0.5}"#).unwrap();
        assert_eq!(cfg.k, 4.0);
        assert_eq!(cfg.c1, 0.5);
        assert_eq!(cfg.t0, 1.0);
        assert!(ConstantsConfig { c3: 0.0, ..cfg }.validate().is_err());
    }
}
