//! Volume of sublevel sets `E(H) = {x in Ω : g0(x) <= H}`, dyadic shells of
//! it, and the measure of a hypersurface `{f = 0}` optionally restricted to
//! `E(H)`.
//!
//! Volumes use stratified Monte Carlo: the box is cut into `s^n` equal cells
//! with `q` jittered samples each, and the standard error comes from the
//! per-cell binomial variances. Surface measure uses marching squares in 2-D
//! and marching tetrahedra in 3-D.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ddouble::compensated_sum;
use crate::domain::{BoxDomain, DomainError};
use crate::poly::{CompiledPoly, Polynomial};
use crate::rng::CounterRng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("threshold H must be >= 0, got {0}")]
    NegativeThreshold(f64),
    #[error("need at least one sample")]
    NoSamples,
    #[error("need at least one dyadic shell")]
    NoShells,
    #[error("surface measure supports n in {{2, 3}}, got n = {0}")]
    UnsupportedDimension(usize),
    #[error("surface measure supports a single equation (hypersurface), got {0}")]
    UnsupportedCodimension(usize),
    #[error("equation has {got} variables, ambient domain has {expected}")]
    VariableMismatch { expected: usize, got: usize },
    #[error("resolution must be at least 2, got {0}")]
    Resolution(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MonteCarlo,
    Grid,
    Marching,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub method: Method,
    /// Surface pieces skipped because the gradient vanished at their midpoint.
    pub degenerate: usize,
}

/// Strata layout for `samples` points in `n` dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Strata {
    pub per_axis: usize,
    pub per_cell: usize,
}

impl Strata {
    pub fn for_samples(n: usize, samples: usize) -> Self {
        // At least four points per cell so per-cell variances are usable.
        let mut per_axis = ((samples as f64 / 4.0).powf(1.0 / n as f64)).floor() as usize;
        per_axis = per_axis.max(1);
        while per_axis > 1 && per_axis.pow(n as u32) * 4 > samples {
            per_axis -= 1;
        }
        let cells = per_axis.pow(n as u32);
        Self {
            per_axis,
            per_cell: (samples / cells).max(1),
        }
    }

    pub fn cells(&self, n: usize) -> usize {
        self.per_axis.pow(n as u32)
    }

    pub fn total(&self, n: usize) -> usize {
        self.cells(n) * self.per_cell
    }
}

/// Sample point `j` of stratum `cell`, written into `out` (box coordinates).
pub fn stratified_point(
    domain: &BoxDomain,
    strata: &Strata,
    rng: &CounterRng,
    cell: usize,
    j: usize,
    out: &mut [f64],
) {
    let n = domain.dim();
    let global = (cell * strata.per_cell + j) as u64;
    let mut rem = cell;
    for (axis, o) in out.iter_mut().enumerate().take(n) {
        let ci = rem % strata.per_axis;
        rem /= strata.per_axis;
        let u = (ci as f64 + rng.uniform(global, axis as u32)) / strata.per_axis as f64;
        *o = domain.lower()[axis] + u * domain.width(axis);
    }
}

/// Field values on a fixed stratified sample set; `NaN` marks samples
/// outside the domain's constraints.
#[derive(Debug, Clone)]
pub struct FieldSamples {
    strata: Strata,
    cell_volume: f64,
    values: Vec<f64>,
}

impl FieldSamples {
    pub fn draw<F>(field: F, domain: &BoxDomain, samples: usize, seed: u64) -> Result<Self, MeasureError>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        if samples == 0 {
            return Err(MeasureError::NoSamples);
        }
        let n = domain.dim();
        let strata = Strata::for_samples(n, samples);
        let rng = CounterRng::new(seed);
        let cells = strata.cells(n);
        let values: Vec<f64> = (0..cells)
            .into_par_iter()
            .flat_map_iter(|cell| {
                let mut x = vec![0.0; n];
                (0..strata.per_cell)
                    .map(|j| {
                        stratified_point(domain, &strata, &rng, cell, j, &mut x);
                        if domain.satisfies_constraints(&x) {
                            let v = field(&x);
                            // keep NaN reserved for "outside Ω"
                            if v.is_nan() {
                                f64::INFINITY
                            } else {
                                v
                            }
                        } else {
                            f64::NAN
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        if values.iter().all(|v| v.is_nan()) {
            return Err(MeasureError::Domain(DomainError::Empty));
        }
        Ok(Self {
            strata,
            cell_volume: domain.box_volume() / cells as f64,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn strata(&self) -> Strata {
        self.strata
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Stratified estimate of the volume of `{x in Ω : pred(g0(x))}`.
    pub fn volume_where<P>(&self, pred: P) -> MeasureEstimate
    where
        P: Fn(f64) -> bool + Sync,
    {
        let q = self.strata.per_cell;
        let per_cell: Vec<(f64, f64)> = self
            .values
            .par_chunks(q)
            .map(|chunk| {
                let hits = chunk.iter().filter(|v| !v.is_nan() && pred(**v)).count();
                let p = hits as f64 / q as f64;
                let var = if q > 1 {
                    p * (1.0 - p) / (q - 1) as f64
                } else {
                    0.25
                };
                (p * self.cell_volume, var * self.cell_volume * self.cell_volume)
            })
            .collect();
        let value = compensated_sum(per_cell.iter().map(|c| c.0));
        let var = compensated_sum(per_cell.iter().map(|c| c.1));
        MeasureEstimate {
            value,
            std_error: var.max(0.0).sqrt(),
            samples: self.values.len(),
            method: Method::MonteCarlo,
            degenerate: 0,
        }
    }

    pub fn sublevel(&self, h: f64) -> MeasureEstimate {
        self.volume_where(|v| v <= h)
    }

    /// Shells `2^-j H <= g0 < 2^(1-j) H`, `j = 1..=count`.
    pub fn dyadic_shells(&self, h: f64, count: usize) -> Vec<MeasureEstimate> {
        (1..=count)
            .map(|j| {
                let lo = h * 0.5f64.powi(j as i32);
                let hi = 2.0 * lo;
                self.volume_where(|v| v >= lo && v < hi)
            })
            .collect()
    }
}

pub fn sublevel_measure<F>(
    g0: F,
    domain: &BoxDomain,
    h: f64,
    samples: usize,
    seed: u64,
) -> Result<MeasureEstimate, MeasureError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if h < 0.0 || h.is_nan() {
        return Err(MeasureError::NegativeThreshold(h));
    }
    Ok(FieldSamples::draw(g0, domain, samples, seed)?.sublevel(h))
}

pub fn dyadic_shell_measures<F>(
    g0: F,
    domain: &BoxDomain,
    h: f64,
    shells: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<MeasureEstimate>, MeasureError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if h < 0.0 || h.is_nan() {
        return Err(MeasureError::NegativeThreshold(h));
    }
    if shells == 0 {
        return Err(MeasureError::NoShells);
    }
    Ok(FieldSamples::draw(g0, domain, samples, seed)?.dyadic_shells(h, shells))
}

/// Hypersurface `{f_1 = 0}` inside a box.
#[derive(Debug, Clone)]
pub struct SurfaceSystem {
    pub equations: Vec<Polynomial>,
    pub ambient: BoxDomain,
}

impl SurfaceSystem {
    pub fn hypersurface(f: Polynomial, ambient: BoxDomain) -> Self {
        Self {
            equations: vec![f],
            ambient,
        }
    }
}

/// Keep only surface pieces whose midpoint satisfies `g0 <= h`.
pub struct Restriction<'a> {
    pub g0: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    pub h: f64,
}

struct Extractor<'a> {
    f: CompiledPoly,
    grad: Vec<CompiledPoly>,
    domain: &'a BoxDomain,
    restriction: Option<&'a Restriction<'a>>,
}

impl Extractor<'_> {
    /// Measure contribution of one piece with the given midpoint, or `None`
    /// when the gradient degenerates there.
    fn accept(&self, mid: &[f64], size: f64) -> Option<f64> {
        if !self.domain.satisfies_constraints(mid) {
            return Some(0.0);
        }
        if let Some(r) = self.restriction {
            if !((r.g0)(mid) <= r.h) {
                return Some(0.0);
            }
        }
        let gn: f64 = self.grad.iter().map(|g| g.eval(mid).powi(2)).sum::<f64>().sqrt();
        if size > 0.0 && gn < 1e-12 {
            return None;
        }
        Some(size)
    }
}

fn lerp_zero(pa: &[f64], va: f64, pb: &[f64], vb: f64) -> Vec<f64> {
    let t = if va == vb { 0.5 } else { va / (va - vb) };
    pa.iter().zip(pb).map(|(a, b)| a + t * (b - a)).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn midpoint(pts: &[&[f64]]) -> Vec<f64> {
    let n = pts[0].len();
    (0..n)
        .map(|i| pts.iter().map(|p| p[i]).sum::<f64>() / pts.len() as f64)
        .collect()
}

fn node_coord(domain: &BoxDomain, res: usize, axis: usize, i: usize) -> f64 {
    if i == res {
        domain.upper()[axis]
    } else {
        domain.lower()[axis] + domain.width(axis) * i as f64 / res as f64
    }
}

/// Marching squares; returns (length, degenerate pieces).
fn contour_length_2d(ex: &Extractor<'_>, res: usize) -> (f64, usize) {
    let d = ex.domain;
    let xs: Vec<f64> = (0..=res).map(|i| node_coord(d, res, 0, i)).collect();
    let ys: Vec<f64> = (0..=res).map(|i| node_coord(d, res, 1, i)).collect();
    let vals: Vec<f64> = (0..=res)
        .into_par_iter()
        .flat_map_iter(|j| {
            let y = ys[j];
            xs.iter().map(move |&x| (x, y)).collect::<Vec<_>>()
        })
        .map(|(x, y)| ex.f.eval(&[x, y]))
        .collect();
    let at = |i: usize, j: usize| vals[j * (res + 1) + i];

    let rows: Vec<(f64, usize)> = (0..res)
        .into_par_iter()
        .map(|j| {
            let mut pieces = Vec::new();
            let mut degenerate = 0;
            for i in 0..res {
                // corners counter-clockwise from lower-left
                let p = [
                    [xs[i], ys[j]],
                    [xs[i + 1], ys[j]],
                    [xs[i + 1], ys[j + 1]],
                    [xs[i], ys[j + 1]],
                ];
                let v = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
                let inside: Vec<bool> = v.iter().map(|&x| x >= 0.0).collect();
                let crossing = |e: usize| -> Option<Vec<f64>> {
                    let (a, b) = (e, (e + 1) % 4);
                    (inside[a] != inside[b]).then(|| lerp_zero(&p[a], v[a], &p[b], v[b]))
                };
                let edges: Vec<(usize, Vec<f64>)> =
                    (0..4).filter_map(|e| crossing(e).map(|q| (e, q))).collect();
                let segments: Vec<(Vec<f64>, Vec<f64>)> = match edges.len() {
                    2 => vec![(edges[0].1.clone(), edges[1].1.clone())],
                    4 => {
                        // saddle: decide connectivity from the cell-centre value
                        let centre = ex.f.eval(&[0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])]);
                        let c_in = centre >= 0.0;
                        let e = |k: usize| edges[k].1.clone();
                        if c_in == inside[0] {
                            // corner 0's region connects through the centre:
                            // cut off corners 1 and 3
                            vec![(e(0), e(1)), (e(2), e(3))]
                        } else {
                            vec![(e(3), e(0)), (e(1), e(2))]
                        }
                    }
                    _ => Vec::new(),
                };
                for (a, b) in segments {
                    let len = dist(&a, &b);
                    match ex.accept(&midpoint(&[&a, &b]), len) {
                        Some(l) => pieces.push(l),
                        None => degenerate += 1,
                    }
                }
            }
            (compensated_sum(pieces), degenerate)
        })
        .collect();
    (
        compensated_sum(rows.iter().map(|r| r.0)),
        rows.iter().map(|r| r.1).sum(),
    )
}

fn triangle_area(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let u: Vec<f64> = (0..3).map(|i| b[i] - a[i]).collect();
    let v: Vec<f64> = (0..3).map(|i| c[i] - a[i]).collect();
    let cx = u[1] * v[2] - u[2] * v[1];
    let cy = u[2] * v[0] - u[0] * v[2];
    let cz = u[0] * v[1] - u[1] * v[0];
    0.5 * (cx * cx + cy * cy + cz * cz).sqrt()
}

/// Cube corner offsets, bit i of the index selects axis i.
const CUBE: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// Six tetrahedra sharing the 0-7 diagonal.
const TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 3, 2, 7],
    [0, 2, 6, 7],
    [0, 6, 4, 7],
    [0, 4, 5, 7],
    [0, 5, 1, 7],
];

/// Marching tetrahedra; returns (area, degenerate pieces).
fn surface_area_3d(ex: &Extractor<'_>, res: usize) -> (f64, usize) {
    let d = ex.domain;
    let coords: Vec<Vec<f64>> = (0..3)
        .map(|a| (0..=res).map(|i| node_coord(d, res, a, i)).collect())
        .collect();
    let stride = res + 1;
    let vals: Vec<f64> = (0..stride * stride * stride)
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = (idx % stride, (idx / stride) % stride, idx / (stride * stride));
            ex.f.eval(&[coords[0][i], coords[1][j], coords[2][k]])
        })
        .collect();

    let slabs: Vec<(f64, usize)> = (0..res)
        .into_par_iter()
        .map(|k| {
            let mut pieces = Vec::new();
            let mut degenerate = 0;
            for j in 0..res {
                for i in 0..res {
                    let corner = |c: usize| -> ([f64; 3], f64) {
                        let o = CUBE[c];
                        let (ii, jj, kk) = (i + o[0], j + o[1], k + o[2]);
                        (
                            [coords[0][ii], coords[1][jj], coords[2][kk]],
                            vals[(kk * stride + jj) * stride + ii],
                        )
                    };
                    for tet in TETS {
                        let pv: Vec<([f64; 3], f64)> = tet.iter().map(|&c| corner(c)).collect();
                        let (ins, outs): (Vec<usize>, Vec<usize>) =
                            (0..4).partition(|&t| pv[t].1 >= 0.0);
                        let cut = |a: usize, b: usize| lerp_zero(&pv[a].0, pv[a].1, &pv[b].0, pv[b].1);
                        let tris: Vec<[Vec<f64>; 3]> = match (ins.len(), outs.len()) {
                            (1, 3) | (3, 1) => {
                                let (lone, others) = if ins.len() == 1 { (ins[0], &outs) } else { (outs[0], &ins) };
                                vec![[cut(lone, others[0]), cut(lone, others[1]), cut(lone, others[2])]]
                            }
                            (2, 2) => {
                                let (a, b, c, e) = (ins[0], ins[1], outs[0], outs[1]);
                                let (p0, p1, p2, p3) = (cut(a, c), cut(a, e), cut(b, e), cut(b, c));
                                vec![[p0.clone(), p1, p2.clone()], [p0, p2, p3]]
                            }
                            _ => Vec::new(),
                        };
                        for [a, b, c] in tris {
                            let area = triangle_area(&a, &b, &c);
                            match ex.accept(&midpoint(&[&a, &b, &c]), area) {
                                Some(s) => pieces.push(s),
                                None => degenerate += 1,
                            }
                        }
                    }
                }
            }
            (compensated_sum(pieces), degenerate)
        })
        .collect();
    (
        compensated_sum(slabs.iter().map(|r| r.0)),
        slabs.iter().map(|r| r.1).sum(),
    )
}

/// Length (2-D) or area (3-D) of `{f_1 = 0}` at the given resolution, with
/// the resolution-halving discrepancy reported as `std_error`.
pub fn surface_measure(
    system: &SurfaceSystem,
    restriction: Option<&Restriction<'_>>,
    resolution: usize,
) -> Result<MeasureEstimate, MeasureError> {
    let n = system.ambient.dim();
    if n != 2 && n != 3 {
        return Err(MeasureError::UnsupportedDimension(n));
    }
    if system.equations.len() != 1 {
        return Err(MeasureError::UnsupportedCodimension(system.equations.len()));
    }
    let f = &system.equations[0];
    if f.num_vars() != n {
        return Err(MeasureError::VariableMismatch {
            expected: n,
            got: f.num_vars(),
        });
    }
    if resolution < 2 {
        return Err(MeasureError::Resolution(resolution));
    }
    let ex = Extractor {
        f: f.compile(),
        grad: f.gradient().iter().map(Polynomial::compile).collect(),
        domain: &system.ambient,
        restriction,
    };
    let run = |res: usize| {
        if n == 2 {
            contour_length_2d(&ex, res)
        } else {
            surface_area_3d(&ex, res)
        }
    };
    let (value, degenerate) = run(resolution);
    let (coarse, _) = run(resolution / 2);
    Ok(MeasureEstimate {
        value,
        std_error: (value - coarse).abs(),
        samples: resolution.pow(n as u32),
        method: Method::Marching,
        degenerate,
    })
}
