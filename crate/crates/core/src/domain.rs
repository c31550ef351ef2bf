//! Integration domains: axis-aligned boxes, optionally cut down by
//! polynomial inequalities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{CompiledPoly, Polynomial};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("lower and upper bounds have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty box: need lower[{axis}] < upper[{axis}]")]
    Degenerate { axis: usize },
    #[error("non-finite bound on axis {axis}")]
    NonFinite { axis: usize },
    #[error("constraint polynomial has {got} variables, domain has {expected}")]
    ConstraintDimension { expected: usize, got: usize },
    #[error("domain has no points satisfying its constraints")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `p(x) <= 0`
    Le0,
    /// `p(x) >= 0`
    Ge0,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub poly: Polynomial,
    pub relation: Relation,
    compiled: CompiledPoly,
}

impl Constraint {
    pub fn new(poly: Polynomial, relation: Relation) -> Self {
        let compiled = poly.compile();
        Self {
            poly,
            relation,
            compiled,
        }
    }

    pub fn holds(&self, point: &[f64]) -> bool {
        let v = self.compiled.eval(point);
        match self.relation {
            Relation::Le0 => v <= 0.0,
            Relation::Ge0 => v >= 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    constraints: Vec<Constraint>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, DomainError> {
        if lower.len() != upper.len() {
            return Err(DomainError::LengthMismatch(lower.len(), upper.len()));
        }
        for (axis, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(DomainError::NonFinite { axis });
            }
            if lo >= hi {
                return Err(DomainError::Degenerate { axis });
            }
        }
        Ok(Self {
            lower,
            upper,
            constraints: Vec::new(),
        })
    }

    /// The unit cube `[0,1]^n`.
    pub fn unit(n: usize) -> Self {
        Self::new(vec![0.0; n], vec![1.0; n]).expect("unit cube is valid")
    }

    pub fn with_constraint(
        mut self,
        poly: Polynomial,
        relation: Relation,
    ) -> Result<Self, DomainError> {
        if poly.num_vars() != self.dim() {
            return Err(DomainError::ConstraintDimension {
                expected: self.dim(),
                got: poly.num_vars(),
            });
        }
        self.constraints.push(Constraint::new(poly, relation));
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn has_constraints(&self) -> bool {
        !self.constraints.is_empty()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn box_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    pub fn in_box(&self, point: &[f64]) -> bool {
        point
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&x, (&lo, &hi))| x >= lo && x <= hi)
    }

    pub fn satisfies_constraints(&self, point: &[f64]) -> bool {
        self.constraints.iter().all(|c| c.holds(point))
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        self.in_box(point) && self.satisfies_constraints(point)
    }

    /// Maps a point of the unit cube affinely onto the box.
    pub fn from_unit(&self, unit: &[f64], out: &mut [f64]) {
        for (i, (&u, o)) in unit.iter().zip(out.iter_mut()).enumerate() {
            *o = self.lower[i] + u * self.width(i);
        }
    }

    /// Same box with every axis shifted by `offset`; constraints are dropped.
    pub fn translated(&self, offset: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|x| x + offset).collect(),
            upper: self.upper.iter().map(|x| x + offset).collect(),
            constraints: Vec::new(),
        }
    }
}
