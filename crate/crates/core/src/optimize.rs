//! Heuristic global extrema of a scalar field over a box: a uniform grid
//! followed by a few rounds of shrinking local pattern search around the
//! incumbent. Nothing here is certified.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{BoxDomain, DomainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    /// Grid intervals per axis; the grid has `resolution + 1` points per axis.
    pub resolution: usize,
    /// Local refinement rounds, each shrinking the search cell by 4x.
    pub refine_rounds: usize,
}

/// Points per axis of the local search stencil.
const LOCAL_POINTS: usize = 5;

impl SamplingPlan {
    pub fn default_for(n: usize) -> Self {
        Self {
            resolution: if n <= 2 { 64 } else { 16 },
            refine_rounds: 3,
        }
    }

    pub fn with_resolution(self, resolution: usize) -> Self {
        Self { resolution, ..self }
    }

    pub fn grid_only(self) -> Self {
        Self {
            refine_rounds: 0,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extremum {
    pub value: f64,
    pub point: Vec<f64>,
    pub evaluations: usize,
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Candidate ordering: better value first, ties to the lexicographically
/// smallest point. NaN values always lose.
fn better(sense: Sense, a: &(f64, Vec<f64>), b: &(f64, Vec<f64>)) -> bool {
    let key = |v: f64| -> f64 {
        if v.is_nan() {
            return f64::INFINITY;
        }
        match sense {
            Sense::Minimize => v,
            Sense::Maximize => -v,
        }
    };
    match key(a.0).total_cmp(&key(b.0)) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => lex_cmp(&a.1, &b.1) == Ordering::Less,
    }
}

fn pick(sense: Sense, a: Option<(f64, Vec<f64>)>, b: Option<(f64, Vec<f64>)>) -> Option<(f64, Vec<f64>)> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if better(sense, &y, &x) { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Best value of `field` over the tensor grid with `points[axis]` nodes per
/// axis; nodes outside the domain's constraints are skipped.
fn search_grid<F>(
    field: &F,
    domain: &BoxDomain,
    sense: Sense,
    lower: &[f64],
    upper: &[f64],
    points: usize,
) -> (Option<(f64, Vec<f64>)>, usize)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = lower.len();
    let total = points.pow(n as u32);
    let node = |idx: usize| -> Vec<f64> {
        let mut rem = idx;
        (0..n)
            .map(|axis| {
                let i = rem % points;
                rem /= points;
                if points == 1 {
                    0.5 * (lower[axis] + upper[axis])
                } else if i == points - 1 {
                    upper[axis]
                } else {
                    lower[axis] + (upper[axis] - lower[axis]) * i as f64 / (points - 1) as f64
                }
            })
            .collect()
    };
    let best = (0..total)
        .into_par_iter()
        .filter_map(|idx| {
            let x = node(idx);
            domain.satisfies_constraints(&x).then(|| (field(&x), x))
        })
        .map(Some)
        .reduce(|| None, |a, b| pick(sense, a, b));
    (best, total)
}

/// Grid search plus local refinement; the reduction is order independent,
/// so the result does not depend on the worker count.
pub fn optimize_on_box<F>(
    field: F,
    domain: &BoxDomain,
    plan: &SamplingPlan,
    sense: Sense,
) -> Result<Extremum, DomainError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = domain.dim();
    let res = plan.resolution.max(1);
    let (best, mut evaluations) =
        search_grid(&field, domain, sense, domain.lower(), domain.upper(), res + 1);
    let mut best = best.ok_or(DomainError::Empty)?;

    let mut half: Vec<f64> = (0..n).map(|i| domain.width(i) / res as f64).collect();
    for _ in 0..plan.refine_rounds {
        let lo: Vec<f64> = (0..n)
            .map(|i| (best.1[i] - half[i]).max(domain.lower()[i]))
            .collect();
        let hi: Vec<f64> = (0..n)
            .map(|i| (best.1[i] + half[i]).min(domain.upper()[i]))
            .collect();
        let (cand, evals) = search_grid(&field, domain, sense, &lo, &hi, LOCAL_POINTS);
        evaluations += evals;
        if let Some(c) = cand {
            if better(sense, &c, &best) {
                best = c;
            }
        }
        for h in half.iter_mut() {
            *h /= 4.0;
        }
    }
    Ok(Extremum {
        value: best.0,
        point: best.1,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_minimum() {
        let d = BoxDomain::unit(2);
        let f = |x: &[f64]| (x[0] - 0.3137).powi(2) + (x[1] - 0.7213).powi(2);
        let plan = SamplingPlan::default_for(2);
        let e = optimize_on_box(f, &d, &plan, Sense::Minimize).unwrap();
        assert!(e.value < 1e-7, "{e:?}");
        let g = optimize_on_box(f, &d, &plan.grid_only(), Sense::Minimize).unwrap();
        assert!(e.value <= g.value);
    }

    #[test]
    fn ties_go_to_smallest_point() {
        let d = BoxDomain::unit(2);
        let e = optimize_on_box(|_: &[f64]| 1.0, &d, &SamplingPlan::default_for(2), Sense::Maximize)
            .unwrap();
        assert_eq!(e.point, vec![0.0, 0.0]);
    }

    #[test]
    fn maximizes_on_corner() {
        let d = BoxDomain::new(vec![-1.0, 0.0], vec![2.0, 1.0]).unwrap();
        let e = optimize_on_box(|x: &[f64]| x[0] + x[1], &d, &SamplingPlan::default_for(2), Sense::Maximize)
            .unwrap();
        assert_eq!(e.value, 3.0);
        assert_eq!(e.point, vec![2.0, 1.0]);
    }

    #[test]
    fn empty_constrained_domain() {
        use crate::domain::Relation;
        use crate::poly::Polynomial;
        let d = BoxDomain::unit(2)
            .with_constraint(Polynomial::parse("x0 + x1 + 1", 2).unwrap(), Relation::Le0)
            .unwrap();
        assert_eq!(
            optimize_on_box(|x: &[f64]| x[0], &d, &SamplingPlan::default_for(2), Sense::Minimize)
                .unwrap_err(),
            DomainError::Empty
        );
    }
}
