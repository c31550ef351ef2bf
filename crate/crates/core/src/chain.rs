//! Iterated derivative matrices.
//!
//! Starting from a seed matrix of polynomials `A_0`, each next matrix is the
//! transposed Jacobian of the column-major flattening of the previous one:
//! with entries listed as `g_1 .. g_N` (down the first column, then the
//! second, ...), the successor has shape `n x N` and entry `(i, s)` equal to
//! `d g_s / d x_i`.

use thiserror::Error;

use crate::poly::Polynomial;

/// Default resource guard on the column count of a chain level.
pub const DEFAULT_MAX_COLUMNS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("matrix entries count {entries} does not match shape {rows}x{cols}")]
    Shape {
        rows: usize,
        cols: usize,
        entries: usize,
    },
    #[error("matrix must be nonempty")]
    Empty,
    #[error("entries disagree on the number of variables")]
    MixedVariables,
    #[error("chain too large: level {level} would have {columns} columns (cap {cap})")]
    TooLarge {
        level: usize,
        columns: usize,
        cap: usize,
    },
}

/// A dense row-major matrix of polynomials sharing one variable count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Polynomial>,
}

impl PolyMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<Polynomial>) -> Result<Self, ChainError> {
        if rows == 0 || cols == 0 {
            return Err(ChainError::Empty);
        }
        if entries.len() != rows * cols {
            return Err(ChainError::Shape {
                rows,
                cols,
                entries: entries.len(),
            });
        }
        let n = entries[0].num_vars();
        if entries.iter().any(|p| p.num_vars() != n) {
            return Err(ChainError::MixedVariables);
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    /// The `1 x n` row of first partials of `f`.
    pub fn gradient_row(f: &Polynomial) -> Self {
        let g = f.gradient();
        Self::new(1, g.len(), g).expect("gradient of a polynomial in n>=1 variables")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_vars(&self) -> usize {
        self.entries[0].num_vars()
    }

    pub fn get(&self, row: usize, col: usize) -> &Polynomial {
        &self.entries[row * self.cols + col]
    }

    pub fn entries(&self) -> &[Polynomial] {
        &self.entries
    }

    /// Entries listed column by column, top to bottom within a column.
    pub fn column_major(&self) -> Vec<&Polynomial> {
        (0..self.cols)
            .flat_map(|c| (0..self.rows).map(move |r| (r, c)))
            .map(|(r, c)| self.get(r, c))
            .collect()
    }

    pub fn max_degree(&self) -> u32 {
        self.entries.iter().map(Polynomial::total_degree).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Polynomial::is_zero)
    }
}

pub fn next_matrix(a: &PolyMatrix) -> PolyMatrix {
    let n = a.num_vars();
    let flat = a.column_major();
    let cols = flat.len();
    let mut entries = Vec::with_capacity(n * cols);
    for i in 0..n {
        for g in &flat {
            entries.push(g.partial_derivative(i).expect("variable index below num_vars"));
        }
    }
    PolyMatrix::new(n, cols, entries).expect("shape is n x rows*cols")
}

#[derive(Debug, Clone)]
pub struct DerivativeChain {
    matrices: Vec<PolyMatrix>,
}

impl DerivativeChain {
    pub fn num_vars(&self) -> usize {
        self.matrices[0].num_vars()
    }

    /// Seed shape `(r, m)`.
    pub fn seed_shape(&self) -> (usize, usize) {
        (self.matrices[0].rows(), self.matrices[0].cols())
    }

    /// Highest level index `k`.
    pub fn depth(&self) -> usize {
        self.matrices.len() - 1
    }

    pub fn level(&self, j: usize) -> &PolyMatrix {
        &self.matrices[j]
    }

    pub fn levels(&self) -> &[PolyMatrix] {
        &self.matrices
    }
}

/// Column count of level `j` for an `r x m` seed over `n` variables.
pub fn level_columns(n: usize, r: usize, m: usize, j: usize) -> Option<usize> {
    if j == 0 {
        return Some(m);
    }
    let exp = u32::try_from(j - 1).ok()?;
    n.checked_pow(exp)?.checked_mul(r)?.checked_mul(m)
}

pub fn build_chain(seed: PolyMatrix, k: usize) -> Result<DerivativeChain, ChainError> {
    build_chain_capped(seed, k, DEFAULT_MAX_COLUMNS)
}

pub fn build_chain_capped(
    seed: PolyMatrix,
    k: usize,
    max_columns: usize,
) -> Result<DerivativeChain, ChainError> {
    let (n, r, m) = (seed.num_vars(), seed.rows(), seed.cols());
    for j in 1..=k {
        match level_columns(n, r, m, j) {
            Some(c) if c <= max_columns => {}
            other => {
                return Err(ChainError::TooLarge {
                    level: j,
                    columns: other.unwrap_or(usize::MAX),
                    cap: max_columns,
                })
            }
        }
    }
    let mut matrices = Vec::with_capacity(k + 1);
    matrices.push(seed);
    for _ in 0..k {
        let next = next_matrix(matrices.last().expect("nonempty"));
        matrices.push(next);
    }
    Ok(DerivativeChain { matrices })
}
