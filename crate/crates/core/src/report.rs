//! Problem documents, the end-to-end verification pipeline, bound reports,
//! plot data and the deterministic JSON writer.

use std::fmt::Write as _;
use std::io;

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use thiserror::Error;

use crate::bounds::{
    consequence_bound, consequence_lambda, g_paren_chain, h, theorem1_bound, theorem2_bound, theorem3_bound,
    theorem4_bound, theorem4_cases, BoundError, BoundInputs, ConstantsConfig, Theorem4Case,
};
use crate::chain::{build_chain, DerivativeChain, PolyMatrix};
use crate::coarea::{default_tolerance, level_profile, monotone_split, oscillatory_from_profile, LevelProfile, MonotonePieces};
use crate::domain::{BoxDomain, Relation};
use crate::measure::{surface_measure, FieldSamples, MeasureEstimate, Restriction, SurfaceSystem};
use crate::optimize::{optimize_on_box, SamplingPlan, Sense};
use crate::oracle::{
    fit_decay, fit_grid_ok, oscillatory_integral_scaled, ComplexValue, DecayFit, DecaySample, OracleConfig,
    OracleResult,
};
use crate::poly::{Polynomial, TermRecord};
use crate::spectral::{chain_extrema, gram_root, ChainExtrema, CompiledChain};

pub const SCHEMA: &str = "oscbound/1";

/// Number of points in the automatic `H` grid.
pub const AUTO_H_POINTS: usize = 16;

/// Levels scanned when estimating the largest level-surface area.
const PI_AREA_LEVELS: usize = 32;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("input error: {0}")]
    Input(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("report has no {0} section")]
    MissingSection(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ReportError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Input(_) | ReportError::MissingSection(_) | ReportError::Io(_) => 2,
            ReportError::Stage { .. } => 3,
        }
    }

    fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        ReportError::Stage {
            stage,
            message: e.to_string(),
        }
    }
}

fn input(e: impl std::fmt::Display) -> ReportError {
    ReportError::Input(e.to_string())
}

/// A polynomial given as text or as a list of term records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolySpec {
    Text(String),
    Records(Vec<TermRecord>),
}

impl PolySpec {
    pub fn resolve(&self, n: usize) -> Result<Polynomial, ReportError> {
        match self {
            PolySpec::Text(s) => Polynomial::parse(s, n).map_err(input),
            PolySpec::Records(r) => Polynomial::from_records(n, r).map_err(input),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub poly: PolySpec,
    pub relation: Relation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<ConstraintSpec>,
}

impl DomainSpec {
    pub fn unit(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            upper: vec![1.0; n],
            constraints: Vec::new(),
        }
    }

    pub fn resolve(&self, n: usize) -> Result<BoxDomain, ReportError> {
        if self.lower.len() != n {
            return Err(input(format!("domain has {} axes, n = {n}", self.lower.len())));
        }
        let mut d = BoxDomain::new(self.lower.clone(), self.upper.clone()).map_err(input)?;
        for c in &self.constraints {
            d = d
                .with_constraint(c.poly.resolve(n)?, c.relation)
                .map_err(input)?;
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub equations: Vec<PolySpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseChoice {
    #[default]
    Auto,
    KGeR,
    KLtRA,
    KLtRB,
}

impl CaseChoice {
    fn explicit(self) -> Option<Theorem4Case> {
        match self {
            CaseChoice::Auto => None,
            CaseChoice::KGeR => Some(Theorem4Case::KGeR),
            CaseChoice::KLtRA => Some(Theorem4Case::KLtRA),
            CaseChoice::KLtRB => Some(Theorem4Case::KLtRB),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSpec {
    pub seed: u64,
    pub samples: usize,
    pub grid_points: usize,
    /// Marching grid resolution for surface measures.
    pub resolution: usize,
    /// Target absolute error of the oracle.
    pub oracle_tol: f64,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            samples: 1_000_000,
            grid_points: 512,
            resolution: 512,
            oracle_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub schema: String,
    pub n: usize,
    pub k: usize,
    pub phase: PolySpec,
    pub domain: DomainSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<SurfaceSpec>,
    /// Empty means the automatic grid.
    #[serde(rename = "H_grid", default)]
    pub h_grid: Vec<f64>,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    #[serde(default)]
    pub theorem4_case: CaseChoice,
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default)]
    pub sampling: SamplingSpec,
}

impl ProblemDocument {
    pub fn new(n: usize, k: usize, phase: &str, domain: DomainSpec) -> Self {
        Self {
            schema: SCHEMA.into(),
            n,
            k,
            phase: PolySpec::Text(phase.into()),
            domain,
            surface: None,
            h_grid: Vec::new(),
            t_grid: Vec::new(),
            theorem4_case: CaseChoice::Auto,
            constants: ConstantsConfig::default(),
            sampling: SamplingSpec::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        serde_json::from_str(text).map_err(input)
    }

    /// Bundled example: the product phase on `[1,2]²`.
    pub fn sample() -> Self {
        Self::from_json(SAMPLE_DOCUMENT).expect("bundled sample document parses")
    }
}

pub const SAMPLE_DOCUMENT: &str = include_str!("../data/sample.json");

/// Parsed and validated document.
#[derive(Debug, Clone)]
pub struct Problem {
    pub doc: ProblemDocument,
    pub phase: Polynomial,
    pub domain: BoxDomain,
    /// Explicit surface equation, if the document gives one.
    pub surface: Option<Polynomial>,
    pub case: Option<Theorem4Case>,
}

impl Problem {
    pub fn new(doc: ProblemDocument) -> Result<Self, ReportError> {
        if doc.schema != SCHEMA {
            return Err(input(format!("schema must be \"{SCHEMA}\", got \"{}\"", doc.schema)));
        }
        let n = doc.n;
        if !(1..=3).contains(&n) {
            return Err(input(format!("n must be 1, 2 or 3, got {n}")));
        }
        if doc.k == 0 {
            return Err(input("k must be at least 1"));
        }
        let phase = doc.phase.resolve(n)?;
        let domain = doc.domain.resolve(n)?;
        let surface = match &doc.surface {
            None => None,
            Some(s) => {
                if s.equations.len() != 1 {
                    return Err(input(format!(
                        "surface must be a single equation, got {}",
                        s.equations.len()
                    )));
                }
                Some(s.equations[0].resolve(n)?)
            }
        };
        if doc.h_grid.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(input("H_grid values must be positive and finite"));
        }
        if doc.t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(input("t_grid values must be positive and finite"));
        }
        if doc.sampling.samples == 0 {
            return Err(input("sampling.samples must be positive"));
        }
        if !(doc.sampling.oracle_tol > 0.0) {
            return Err(input("sampling.oracle_tol must be positive"));
        }
        doc.constants.validate().map_err(input)?;
        let case = doc.theorem4_case.explicit();
        if let Some(c) = case {
            if doc.k < 2 {
                return Err(input(format!("case {c:?}: k-1 division undefined for k = {}", doc.k)));
            }
            if !theorem4_cases(doc.k, n).contains(&c) {
                return Err(input(format!("case {c:?} does not apply to k = {}, r = {n}", doc.k)));
            }
        }
        Ok(Self {
            doc,
            phase,
            domain,
            surface,
            case,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub check: String,
    pub holds: bool,
    pub bound: f64,
    pub measured: f64,
    pub margin: f64,
}

impl Verdict {
    fn upper(check: impl Into<String>, bound: f64, measured: f64) -> Self {
        Self {
            check: check.into(),
            holds: measured <= bound,
            bound,
            measured,
            margin: bound - measured,
        }
    }
}

/// One evaluated bound with everything needed to recompute it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundEntry {
    pub theorem: String,
    pub order: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<Theorem4Case>,
    pub inputs: BoundInputs,
    pub constants: ConstantsConfig,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inadmissible {
    pub theorem: String,
    pub order: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Computed {
    /// Surface chain minima `G_0 .. G_k`.
    #[serde(rename = "G_levels")]
    pub g_levels: Vec<f64>,
    /// `G_(1) .. G_(k)` of the recursion at the largest `H`, when `G_k > 0`.
    #[serde(rename = "G_paren")]
    pub g_paren: Option<Vec<f64>>,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "H_tilde")]
    pub h_tilde: f64,
    #[serde(rename = "H_1")]
    pub h_1: f64,
    #[serde(rename = "K0")]
    pub k0: Option<usize>,
    pub vol_omega: Option<f64>,
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub surface_level: Option<f64>,
    #[serde(rename = "Pi_area")]
    pub pi_area: Option<f64>,
    #[serde(rename = "G_gram")]
    pub g_gram: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralSection {
    pub surface_equation: String,
    pub r_surface: usize,
    pub r_theorem4: usize,
    pub surface_chain: ChainExtrema,
    pub theorem4_chain: ChainExtrema,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureRow {
    #[serde(rename = "H")]
    pub h: f64,
    pub surface: MeasureEstimate,
    pub sublevel_volume: MeasureEstimate,
    pub bounds: Vec<BoundEntry>,
    pub inadmissible: Vec<Inadmissible>,
}

impl MeasureRow {
    fn tightest(&self, theorem: &str) -> Option<f64> {
        self.bounds
            .iter()
            .filter(|b| b.theorem == theorem)
            .map(|b| b.value)
            .reduce(f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureSection {
    #[serde(rename = "H_grid")]
    pub h_grid: Vec<f64>,
    pub resolution: usize,
    pub rows: Vec<MeasureRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoareaSection {
    pub profile: LevelProfile,
    pub pieces: MonotonePieces,
    pub reconstruction: ComplexValue,
    pub reconstruction_error: Option<f64>,
    pub reconstruction_tolerance: f64,
    pub normalization_error: f64,
    pub normalization_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsequenceEntry {
    pub k: usize,
    pub r: usize,
    pub lambda: f64,
    pub lambda_argmin: Vec<f64>,
    #[serde(rename = "H_tilde")]
    pub h_tilde: f64,
    pub constants: ConstantsConfig,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsSection {
    pub theorem4: Vec<BoundEntry>,
    pub consequence: Vec<ConsequenceEntry>,
    pub inadmissible: Vec<Inadmissible>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub t: f64,
    #[serde(rename = "abs_I")]
    pub abs_i: f64,
    pub error: f64,
    pub converged: bool,
    pub bound: Option<BoundEntry>,
    /// Informational comparison of `|I(t)|` with the bound for the scaled
    /// phase; not a verdict.
    pub within_bound: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSection {
    pub integral: OracleResult,
    pub decay: Vec<DecayRow>,
    pub decay_fit: Option<DecayFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Flags {
    pub heuristic_extrema: bool,
    pub not_converged: bool,
    pub corrected_recursion: bool,
    pub log_factor_convention: String,
    pub gradient_warning: bool,
    pub k_substitution: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Missing {
    pub section: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub schema: String,
    pub document: ProblemDocument,
    pub computed: Option<Computed>,
    pub spectral: Option<SpectralSection>,
    pub measure: Option<MeasureSection>,
    pub coarea: Option<CoareaSection>,
    pub bounds: Option<BoundsSection>,
    pub oracle: Option<OracleSection>,
    pub verdicts: Vec<Verdict>,
    pub flags: Flags,
    pub missing: Vec<Missing>,
}

impl BoundReport {
    fn empty(doc: ProblemDocument) -> Self {
        Self {
            schema: SCHEMA.into(),
            document: doc,
            computed: None,
            spectral: None,
            measure: None,
            coarea: None,
            bounds: None,
            oracle: None,
            verdicts: Vec::new(),
            flags: Flags {
                heuristic_extrema: true,
                not_converged: false,
                corrected_recursion: true,
                log_factor_convention: "3 r^2 log H~ (largest h-value) for the order-k surface bounds and the consequence".into(),
                gradient_warning: false,
                k_substitution: "the integral bound and the consequence are reported under constants.K and under measured K0".into(),
            },
            missing: Vec::new(),
        }
    }

    pub fn all_hold(&self) -> bool {
        self.verdicts.iter().all(|v| v.holds)
    }

    /// 0 if every verdict holds, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_hold() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        to_json_string(self)
    }

    fn mark_missing(&mut self, reason: &str) {
        let sections = [
            ("computed", self.computed.is_none()),
            ("spectral", self.spectral.is_none()),
            ("measure", self.measure.is_none()),
            ("coarea", self.coarea.is_none()),
            ("bounds", self.bounds.is_none()),
            ("oracle", self.oracle.is_none()),
        ];
        for (name, absent) in sections {
            if absent && !self.missing.iter().any(|m| m.section == name) {
                self.missing.push(Missing {
                    section: name.into(),
                    reason: reason.into(),
                });
            }
        }
    }
}

/// Quantities shared by the pipeline stages.
struct Context {
    problem: Problem,
    plan: SamplingPlan,
    surface_eq: Option<Polynomial>,
    surface_level: Option<f64>,
    surface_chain: DerivativeChain,
    t4_chain: DerivativeChain,
    r_surface: usize,
    surface_ext: ChainExtrema,
    t4_ext: ChainExtrema,
    m: f64,
    big_m: f64,
    h_tilde: f64,
    h_1: f64,
    g_gram: Option<f64>,
    pi_area: Option<f64>,
}

fn f64_to_rational(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap_or_else(BigRational::zero)
}

fn spectral_stage(problem: Problem) -> Result<Context, ReportError> {
    const STAGE: &str = "spectral";
    let n = problem.doc.n;
    let k = problem.doc.k;
    let plan = SamplingPlan::default_for(n);
    let f = problem.phase.compile();
    let lo = optimize_on_box(|x| f.eval(x), &problem.domain, &plan, Sense::Minimize)
        .map_err(|e| ReportError::stage(STAGE, e))?;
    let hi = optimize_on_box(|x| f.eval(x), &problem.domain, &plan, Sense::Maximize)
        .map_err(|e| ReportError::stage(STAGE, e))?;
    let (m, big_m) = (lo.value, hi.value);

    let (surface_eq, surface_level) = match &problem.surface {
        Some(s) => (Some(s.clone()), None),
        None if n >= 2 => {
            let c = 0.5 * (m + big_m);
            let eq = problem.phase.sub(&Polynomial::constant(n, f64_to_rational(c)));
            (Some(eq), Some(c))
        }
        None => (None, None),
    };
    let r_surface = n.saturating_sub(1).max(1);
    let surface_seed = PolyMatrix::gradient_row(surface_eq.as_ref().unwrap_or(&problem.phase));
    let surface_chain = build_chain(surface_seed, k).map_err(|e| ReportError::stage("chain", e))?;
    let t4_chain = build_chain(PolyMatrix::gradient_row(&problem.phase), k).map_err(|e| ReportError::stage("chain", e))?;
    let surface_ext =
        chain_extrema(&surface_chain, &problem.domain, &plan, r_surface).map_err(|e| ReportError::stage(STAGE, e))?;
    let t4_ext = chain_extrema(&t4_chain, &problem.domain, &plan, n).map_err(|e| ReportError::stage(STAGE, e))?;

    let compiled = CompiledChain::new(&t4_chain);
    let grad_norm = |x: &[f64]| compiled.frobenius_at(0, x);
    let h_tilde = optimize_on_box(grad_norm, &problem.domain, &plan, Sense::Maximize)
        .map_err(|e| ReportError::stage(STAGE, e))?
        .value;
    let h_1 = optimize_on_box(grad_norm, &problem.domain, &plan, Sense::Minimize)
        .map_err(|e| ReportError::stage(STAGE, e))?
        .value;
    let g_gram = if k >= 2 {
        let level = compiled.level(k - 1);
        Some(
            optimize_on_box(|x| gram_root(&level.eval(x)), &problem.domain, &plan, Sense::Minimize)
                .map_err(|e| ReportError::stage(STAGE, e))?
                .value,
        )
    } else {
        None
    };
    // largest level-surface area, only needed by the k < r cases
    let pi_area = if k < n && n >= 2 && big_m > m {
        let mut best = 0.0f64;
        for i in 0..PI_AREA_LEVELS {
            let u = m + (big_m - m) * (i as f64 + 0.5) / PI_AREA_LEVELS as f64;
            let eq = problem.phase.sub(&Polynomial::constant(n, f64_to_rational(u)));
            let sys = SurfaceSystem::hypersurface(eq, problem.domain.clone());
            let est = surface_measure(&sys, None, problem.doc.sampling.resolution)
                .map_err(|e| ReportError::stage("measure", e))?;
            best = best.max(est.value);
        }
        Some(best)
    } else {
        None
    };
    Ok(Context {
        problem,
        plan,
        surface_eq,
        surface_level,
        surface_chain,
        t4_chain,
        r_surface,
        surface_ext,
        t4_ext,
        m,
        big_m,
        h_tilde,
        h_1,
        g_gram,
        pi_area,
    })
}

impl Context {
    fn n(&self) -> usize {
        self.problem.doc.n
    }

    fn k(&self) -> usize {
        self.problem.doc.k
    }

    fn cfg(&self) -> ConstantsConfig {
        self.problem.doc.constants
    }

    fn h_grid(&self) -> Vec<f64> {
        if !self.problem.doc.h_grid.is_empty() {
            return self.problem.doc.h_grid.clone();
        }
        auto_h_grid(self.surface_ext.g_min[0], self.surface_ext.l_max)
    }

    fn surface_inputs(&self, h_value: f64, order: usize, g_paren: Vec<f64>) -> BoundInputs {
        BoundInputs {
            n: self.n(),
            r: self.r_surface,
            k: order,
            h: h_value,
            g_levels: self.surface_ext.g_min[1..=order].to_vec(),
            g_paren,
            l: self.surface_ext.l_max,
            h_tilde: self.h_tilde,
            h_1: self.h_1,
            pi_area: self.pi_area,
            vol_omega: self.problem.domain.box_volume(),
            g_gram: None,
        }
    }

    /// First-order bound and, for each order with a positive minimum, the
    /// order-k bounds, at one threshold.
    fn surface_bounds(&self, h_value: f64) -> (Vec<BoundEntry>, Vec<Inadmissible>) {
        let cfg = self.cfg();
        let mut entries = Vec::new();
        let mut bad = Vec::new();
        let g1 = self.surface_ext.g_min[1];
        let t1 = if g1 > 0.0 {
            let inputs = self.surface_inputs(h_value, 1, vec![g1]);
            theorem1_bound(&inputs, &cfg).map(|v| (inputs, v))
        } else {
            Err(BoundError::NonPositive { name: "G_(1)", value: g1 })
        };
        match t1 {
            Ok((inputs, value)) => entries.push(BoundEntry {
                theorem: "theorem1".into(),
                order: 1,
                case: None,
                inputs,
                constants: cfg,
                value,
            }),
            Err(e) => bad.push(Inadmissible {
                theorem: "theorem1".into(),
                order: 1,
                reason: e.to_string(),
            }),
        }
        for order in 1..=self.k() {
            let gk = self.surface_ext.g_min[order];
            let computed = g_paren_chain(h_value, gk, order).and_then(|paren| {
                let inputs = self.surface_inputs(h_value, order, paren);
                let b2 = theorem2_bound(&inputs, &cfg, order)?;
                let b3 = theorem3_bound(&inputs, &cfg, order)?;
                Ok((inputs, b2, b3))
            });
            match computed {
                Ok((inputs, b2, b3)) => {
                    for (name, value) in [("theorem2", b2), ("theorem3", b3)] {
                        entries.push(BoundEntry {
                            theorem: name.into(),
                            order,
                            case: None,
                            inputs: inputs.clone(),
                            constants: cfg,
                            value,
                        });
                    }
                }
                Err(e) => {
                    for name in ["theorem2", "theorem3"] {
                        bad.push(Inadmissible {
                            theorem: name.into(),
                            order,
                            reason: e.to_string(),
                        });
                    }
                }
            }
        }
        (entries, bad)
    }

    fn theorem4_case(&self) -> Theorem4Case {
        self.problem.case.unwrap_or(theorem4_cases(self.k(), self.n())[0])
    }

    /// Integral-bound inputs for the phase scaled by `t`.
    fn theorem4_inputs(&self, t: f64) -> BoundInputs {
        let ext = &self.t4_ext;
        let k = self.k();
        let g_levels = (1..=k).map(|j| ext.g_min[j] * t.powi(ext.r_levels[j] as i32)).collect();
        let rows = self.t4_chain.level(k - 1).rows();
        BoundInputs {
            n: self.n(),
            r: self.n(),
            k,
            h: f64::NAN,
            g_levels,
            g_paren: Vec::new(),
            l: ext.l_max * t,
            h_tilde: self.h_tilde * t,
            h_1: self.h_1 * t,
            pi_area: self.pi_area,
            vol_omega: self.problem.domain.box_volume(),
            g_gram: self.g_gram.map(|g| g * t.powi(rows as i32)),
        }
    }

    fn theorem4_entry(&self, t: f64, k_const: f64) -> Result<BoundEntry, BoundError> {
        if self.k() < 2 {
            return Err(BoundError::Undefined("k-1 division undefined: k must be at least 2"));
        }
        let case = self.theorem4_case();
        let inputs = self.theorem4_inputs(t);
        let cfg = self.cfg().with_k(k_const);
        let value = theorem4_bound(case, &inputs, &cfg)?;
        Ok(BoundEntry {
            theorem: "theorem4".into(),
            order: self.k(),
            case: Some(case),
            inputs,
            constants: cfg,
            value,
        })
    }

    /// Largest h-value among the gradient maximum, the positive chain
    /// minima and `L`.
    fn consequence_h_tilde(&self) -> f64 {
        let mut vals = vec![self.h_tilde, self.t4_ext.l_max];
        vals.extend(self.t4_ext.g_min[1..].iter().copied());
        vals.into_iter()
            .filter(|v| *v > 0.0 && v.is_finite())
            .filter_map(|v| h(v).ok())
            .fold(2.0, f64::max)
    }
}

/// `16` points over `[1.1 G_0, L]`, or `L i / 16` when `G_0 = 0`. The upper
/// end is raised to `2.2 G_0` when `L` is below the lower end.
pub fn auto_h_grid(g0: f64, l: f64) -> Vec<f64> {
    let count = AUTO_H_POINTS;
    if g0 <= 0.0 {
        return (1..=count).map(|i| l * i as f64 / count as f64).collect();
    }
    let a = 1.1 * g0;
    let b = l.max(2.0 * a);
    (0..count)
        .map(|i| a + (b - a) * i as f64 / (count - 1) as f64)
        .collect()
}

fn measure_stage(ctx: &Context) -> Result<MeasureSection, ReportError> {
    let doc = &ctx.problem.doc;
    let eq = ctx
        .surface_eq
        .clone()
        .ok_or_else(|| ReportError::stage("measure", "surface measure needs n >= 2"))?;
    let system = SurfaceSystem::hypersurface(eq, ctx.problem.domain.clone());
    let chain = CompiledChain::new(&ctx.surface_chain);
    let r = ctx.r_surface;
    let g0 = |x: &[f64]| chain.g_at(0, r, x);
    let field = FieldSamples::draw(g0, &ctx.problem.domain, doc.sampling.samples, doc.sampling.seed)
        .map_err(|e| ReportError::stage("measure", e))?;
    let h_grid = ctx.h_grid();
    let mut rows = Vec::with_capacity(h_grid.len());
    for &hv in &h_grid {
        let restriction = Restriction { g0: &g0, h: hv };
        let surface = surface_measure(&system, Some(&restriction), doc.sampling.resolution)
            .map_err(|e| ReportError::stage("measure", e))?;
        let (bounds, inadmissible) = ctx.surface_bounds(hv);
        rows.push(MeasureRow {
            h: hv,
            surface,
            sublevel_volume: field.sublevel(hv),
            bounds,
            inadmissible,
        });
    }
    Ok(MeasureSection {
        h_grid,
        resolution: doc.sampling.resolution,
        rows,
    })
}

fn coarea_stage(ctx: &Context) -> Result<CoareaSection, ReportError> {
    let s = &ctx.problem.doc.sampling;
    let profile = level_profile(&ctx.problem.phase, &ctx.problem.domain, s.grid_points, s.samples, s.seed)
        .map_err(|e| ReportError::stage("coarea", e))?;
    let pieces = monotone_split(&profile.phi, default_tolerance(&profile));
    let recon = oscillatory_from_profile(&profile);
    Ok(CoareaSection {
        reconstruction: recon.into(),
        reconstruction_error: None,
        reconstruction_tolerance: 10.0 * profile.noise_scale + 1.0 / s.grid_points as f64,
        normalization_error: (profile.phi_integral() - profile.vol_omega).abs(),
        normalization_tolerance: 5.0 * profile.noise_scale,
        profile,
        pieces,
    })
}

fn bounds_stage(ctx: &Context, k0: Option<usize>) -> BoundsSection {
    let mut theorem4 = Vec::new();
    let mut consequence = Vec::new();
    let mut inadmissible = Vec::new();
    let mut ks = vec![ctx.cfg().k];
    if let Some(k0) = k0 {
        ks.push(k0 as f64);
    }
    for &kc in &ks {
        match ctx.theorem4_entry(1.0, kc) {
            Ok(e) => theorem4.push(e),
            Err(e) => inadmissible.push(Inadmissible {
                theorem: "theorem4".into(),
                order: ctx.k(),
                reason: e.to_string(),
            }),
        }
    }
    let (k, r) = (ctx.k(), ctx.n());
    let depth = k.max(r);
    let chain = if depth == ctx.t4_chain.depth() {
        Ok(ctx.t4_chain.clone())
    } else {
        build_chain(PolyMatrix::gradient_row(&ctx.problem.phase), depth)
    };
    let h_tilde = ctx.consequence_h_tilde();
    let lam = chain
        .map_err(|e| BoundError::Chain(e.to_string()))
        .and_then(|c| consequence_lambda(&c, &ctx.problem.domain, k, r, &ctx.plan, h_tilde, &ctx.cfg()));
    match lam {
        Ok(res) => {
            for &kc in &ks {
                let cfg = ctx.cfg().with_k(kc);
                if let Ok(value) = consequence_bound(res.lambda, r, h_tilde, &cfg) {
                    consequence.push(ConsequenceEntry {
                        k,
                        r,
                        lambda: res.lambda,
                        lambda_argmin: res.lambda_argmin.clone(),
                        h_tilde,
                        constants: cfg,
                        value,
                    });
                }
            }
        }
        Err(e) => inadmissible.push(Inadmissible {
            theorem: "consequence".into(),
            order: k,
            reason: e.to_string(),
        }),
    }
    BoundsSection {
        theorem4,
        consequence,
        inadmissible,
    }
}

fn oracle_config(doc: &ProblemDocument) -> OracleConfig {
    OracleConfig {
        seed: doc.sampling.seed,
        ..OracleConfig::default()
    }
}

/// Decay fit over already computed rows, when the grid supports one.
fn fit_rows(t_grid: &[f64], rows: &[DecayRow]) -> Option<DecayFit> {
    if !fit_grid_ok(t_grid) {
        return None;
    }
    let samples = rows
        .iter()
        .map(|r| DecaySample {
            t: r.t,
            abs_i: r.abs_i,
            error: r.error,
            used: r.abs_i > 10.0 * r.error,
        })
        .collect();
    fit_decay(samples).ok()
}

fn oracle_stage(ctx: &Context, k0: Option<usize>) -> Result<OracleSection, ReportError> {
    let doc = &ctx.problem.doc;
    let cfg = oracle_config(doc);
    let tol = doc.sampling.oracle_tol;
    let integral = oscillatory_integral_scaled(&ctx.problem.phase, 1.0, &ctx.problem.domain, tol, &cfg)
        .map_err(|e| ReportError::stage("oracle", e))?;
    let k_const = k0.map(|k| k as f64).unwrap_or(ctx.cfg().k);
    let mut decay = Vec::with_capacity(doc.t_grid.len());
    for &t in &doc.t_grid {
        let r = oscillatory_integral_scaled(&ctx.problem.phase, t, &ctx.problem.domain, tol, &cfg)
            .map_err(|e| ReportError::stage("oracle", e))?;
        let bound = ctx.theorem4_entry(t, k_const).ok();
        decay.push(DecayRow {
            t,
            abs_i: r.modulus,
            error: r.abs_error_estimate,
            converged: r.converged,
            within_bound: bound.as_ref().map(|b| r.modulus <= b.value),
            bound,
        });
    }
    let decay_fit = fit_rows(&doc.t_grid, &decay);
    Ok(OracleSection {
        integral,
        decay,
        decay_fit,
    })
}

fn computed_section(ctx: &Context, coarea: Option<&CoareaSection>, h_grid: &[f64]) -> Computed {
    let k = ctx.k();
    let gk = ctx.surface_ext.g_min[k];
    let h_max = h_grid.iter().copied().fold(f64::NAN, f64::max);
    Computed {
        g_levels: ctx.surface_ext.g_min.clone(),
        g_paren: g_paren_chain(h_max, gk, k).ok(),
        l: ctx.surface_ext.l_max,
        h_tilde: ctx.h_tilde,
        h_1: ctx.h_1,
        k0: coarea.map(|c| c.pieces.count),
        vol_omega: coarea.map(|c| c.profile.vol_omega),
        m: ctx.m,
        big_m: ctx.big_m,
        surface_level: ctx.surface_level,
        pi_area: ctx.pi_area,
        g_gram: ctx.g_gram,
    }
}

fn verdicts(report: &BoundReport) -> Vec<Verdict> {
    let mut out = Vec::new();
    if let Some(ms) = &report.measure {
        for row in &ms.rows {
            for b in &row.bounds {
                out.push(Verdict::upper(
                    format!("{} order {} H={}", b.theorem, b.order, row.h),
                    b.value,
                    row.surface.value,
                ));
            }
        }
    }
    if let Some(c) = &report.coarea {
        if let Some(err) = c.reconstruction_error {
            out.push(Verdict::upper("coarea reconstruction", c.reconstruction_tolerance, err));
        }
        out.push(Verdict::upper(
            "coarea normalization",
            c.normalization_tolerance,
            c.normalization_error,
        ));
    }
    if let (Some(b), Some(o)) = (&report.bounds, &report.oracle) {
        let measured = o.integral.modulus;
        for e in &b.theorem4 {
            out.push(Verdict::upper(format!("theorem4 K={}", e.constants.k), e.value, measured));
        }
        for e in &b.consequence {
            out.push(Verdict::upper(format!("consequence K={}", e.constants.k), e.value, measured));
        }
    }
    out
}

/// Runs every stage, stopping at the first failing one. The returned report
/// holds everything computed so far; the error names the failing stage.
pub fn run_verify_partial(doc: ProblemDocument) -> (BoundReport, Option<ReportError>) {
    let mut report = BoundReport::empty(doc.clone());
    let problem = match Problem::new(doc) {
        Ok(p) => p,
        Err(e) => {
            report.mark_missing(&e.to_string());
            return (report, Some(e));
        }
    };
    let ctx = match spectral_stage(problem) {
        Ok(c) => c,
        Err(e) => {
            report.mark_missing(&e.to_string());
            return (report, Some(e));
        }
    };
    report.spectral = Some(SpectralSection {
        surface_equation: ctx
            .surface_eq
            .as_ref()
            .map(|p| p.to_string())
            .unwrap_or_default(),
        r_surface: ctx.r_surface,
        r_theorem4: ctx.n(),
        surface_chain: ctx.surface_ext.clone(),
        theorem4_chain: ctx.t4_ext.clone(),
    });
    let h_grid = ctx.h_grid();
    report.computed = Some(computed_section(&ctx, None, &h_grid));

    if ctx.surface_eq.is_some() {
        match measure_stage(&ctx) {
            Ok(m) => report.measure = Some(m),
            Err(e) => {
                report.mark_missing(&e.to_string());
                return (report, Some(e));
            }
        }
    } else {
        report.missing.push(Missing {
            section: "measure".into(),
            reason: "surface measure needs n >= 2".into(),
        });
    }

    let coarea = match coarea_stage(&ctx) {
        Ok(c) => c,
        Err(e) => {
            report.mark_missing(&e.to_string());
            return (report, Some(e));
        }
    };
    report.flags.gradient_warning = coarea.profile.gradient_warning;
    let k0 = coarea.pieces.count;
    report.computed = Some(computed_section(&ctx, Some(&coarea), &h_grid));
    report.coarea = Some(coarea);
    report.bounds = Some(bounds_stage(&ctx, Some(k0)));

    match oracle_stage(&ctx, Some(k0)) {
        Ok(o) => {
            report.flags.not_converged = !o.integral.converged || o.decay.iter().any(|r| !r.converged);
            if let Some(c) = report.coarea.as_mut() {
                let recon: Complex64 = c.reconstruction.into();
                c.reconstruction_error = Some((recon - Complex64::from(o.integral.value)).norm());
            }
            report.oracle = Some(o);
        }
        Err(e) => {
            report.verdicts = verdicts(&report);
            report.mark_missing(&e.to_string());
            return (report, Some(e));
        }
    }
    report.verdicts = verdicts(&report);
    (report, None)
}

pub fn run_verify(doc: ProblemDocument) -> Result<BoundReport, ReportError> {
    match run_verify_partial(doc) {
        (report, None) => Ok(report),
        (_, Some(e)) => Err(e),
    }
}

/// Oracle value (and decay rows, without bounds) for a document.
pub fn run_oracle(doc: ProblemDocument) -> Result<serde_json::Value, ReportError> {
    let p = Problem::new(doc)?;
    let cfg = oracle_config(&p.doc);
    let tol = p.doc.sampling.oracle_tol;
    let integral =
        oscillatory_integral_scaled(&p.phase, 1.0, &p.domain, tol, &cfg).map_err(|e| ReportError::stage("oracle", e))?;
    let mut decay = Vec::new();
    for &t in &p.doc.t_grid {
        let r = oscillatory_integral_scaled(&p.phase, t, &p.domain, tol, &cfg).map_err(|e| ReportError::stage("oracle", e))?;
        decay.push(DecayRow {
            t,
            abs_i: r.modulus,
            error: r.abs_error_estimate,
            converged: r.converged,
            bound: None,
            within_bound: None,
        });
    }
    let fit = fit_rows(&p.doc.t_grid, &decay);
    Ok(serde_json::json!({
        "schema": SCHEMA,
        "integral": integral,
        "decay": decay,
        "decay_fit": fit,
    }))
}

pub fn run_profile(doc: ProblemDocument) -> Result<CoareaSection, ReportError> {
    let p = Problem::new(doc)?;
    let s = &p.doc.sampling;
    let profile = level_profile(&p.phase, &p.domain, s.grid_points, s.samples, s.seed)
        .map_err(|e| ReportError::stage("coarea", e))?;
    let pieces = monotone_split(&profile.phi, default_tolerance(&profile));
    let recon = oscillatory_from_profile(&profile);
    Ok(CoareaSection {
        reconstruction: recon.into(),
        reconstruction_error: None,
        reconstruction_tolerance: 10.0 * profile.noise_scale + 1.0 / s.grid_points as f64,
        normalization_error: (profile.phi_integral() - profile.vol_omega).abs(),
        normalization_tolerance: 5.0 * profile.noise_scale,
        profile,
        pieces,
    })
}

pub fn run_measure(doc: ProblemDocument) -> Result<MeasureSection, ReportError> {
    let ctx = spectral_stage(Problem::new(doc)?)?;
    measure_stage(&ctx)
}

/// Spectral quantities and all bound values, without measures or oracle.
pub fn run_bound(doc: ProblemDocument) -> Result<serde_json::Value, ReportError> {
    let ctx = spectral_stage(Problem::new(doc)?)?;
    let h_grid = ctx.h_grid();
    let rows: Vec<_> = h_grid
        .iter()
        .map(|&hv| {
            let (bounds, inadmissible) = ctx.surface_bounds(hv);
            serde_json::json!({ "H": hv, "bounds": bounds, "inadmissible": inadmissible })
        })
        .collect();
    Ok(serde_json::json!({
        "schema": SCHEMA,
        "computed": computed_section(&ctx, None, &h_grid),
        "surface_bounds": rows,
        "bounds": bounds_stage(&ctx, None),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Decay,
    Profile,
    Measure,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// CSV plot data with a header row.
pub fn emit_plot_data(report: &BoundReport, kind: PlotKind) -> Result<String, ReportError> {
    match kind {
        PlotKind::Decay => Ok(decay_csv(report.oracle.as_ref().ok_or(ReportError::MissingSection("oracle"))?)),
        PlotKind::Profile => {
            let c = report.coarea.as_ref().ok_or(ReportError::MissingSection("coarea"))?;
            Ok(profile_csv(&c.profile, &c.pieces))
        }
        PlotKind::Measure => Ok(measure_csv(report.measure.as_ref().ok_or(ReportError::MissingSection("measure"))?)),
    }
}

pub fn decay_csv(oracle: &OracleSection) -> String {
    let mut out = String::from("t,abs_I,bound\n");
    for r in &oracle.decay {
        let _ = writeln!(out, "{},{},{}", r.t, r.abs_i, cell(r.bound.as_ref().map(|b| b.value)));
    }
    out
}

/// One row per threshold; the theorem columns hold the smallest admissible
/// bound over the orders evaluated, empty when none is admissible.
pub fn measure_csv(measure: &MeasureSection) -> String {
    let mut out = String::from("H,mu_est,thm1,thm2,thm3\n");
    for r in &measure.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.h,
            r.surface.value,
            cell(r.tightest("theorem1")),
            cell(r.tightest("theorem2")),
            cell(r.tightest("theorem3"))
        );
    }
    out
}

pub fn profile_csv(profile: &LevelProfile, pieces: &MonotonePieces) -> String {
    let mut out = String::from("u,V,phi,piece\n");
    for j in 0..profile.u_grid.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            profile.u_grid[j],
            profile.v[j],
            profile.phi[j],
            pieces.piece_of(j)
        );
    }
    out
}

/// Pretty JSON with every float written to 17 significant digits.
struct SigDigits(PrettyFormatter<'static>);

impl Formatter for SigDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("report types serialize");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}
