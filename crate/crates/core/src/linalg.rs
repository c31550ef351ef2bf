//! Small dense real matrices and a one-sided Jacobi SVD.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix has a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("data length {len} does not match shape {rows}x{cols}")]
    Shape { rows: usize, cols: usize, len: usize },
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Shape {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(rows.len(), cols, data).expect("ragged rows")
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// `M * M^T`
    pub fn gram_rows(&self) -> Self {
        let mut g = Self::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in 0..=i {
                let s: f64 = (0..self.cols).map(|c| self.get(i, c) * self.get(j, c)).sum();
                g.set(i, j, s);
                g.set(j, i, s);
            }
        }
        g
    }

    pub fn check_finite(&self) -> Result<(), LinalgError> {
        match self.data.iter().position(|x| !x.is_finite()) {
            Some(idx) => Err(LinalgError::NonFinite {
                row: idx / self.cols,
                col: idx % self.cols,
            }),
            None => Ok(()),
        }
    }
}

/// Determinant of a square matrix by Gaussian elimination with partial
/// pivoting.
pub fn determinant(m: &Matrix) -> f64 {
    assert_eq!(m.rows(), m.cols(), "determinant of a non-square matrix");
    let n = m.rows();
    let mut a = m.data().to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("nonempty range");
        let pv = a[pivot * n + col];
        if pv == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for c in 0..n {
                a.swap(pivot * n + c, col * n + c);
            }
            det = -det;
        }
        det *= pv;
        for r in col + 1..n {
            let f = a[r * n + col] / pv;
            if f != 0.0 {
                for c in col..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
            }
        }
    }
    det
}

/// `sqrt(det(M M^T))` for `rows <= cols` as `|det L|` of the Householder
/// factorization `M = L Q`; zero when `rows > cols`.
pub fn gram_determinant_root(m: &Matrix) -> f64 {
    let (rows, cols) = (m.rows(), m.cols());
    if rows > cols {
        return 0.0;
    }
    let mut a = m.data().to_vec();
    let mut prod = 1.0;
    for i in 0..rows {
        let norm = a[i * cols + i..(i + 1) * cols].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let lead = a[i * cols + i];
        let alpha = if lead >= 0.0 { -norm } else { norm };
        let mut v = a[i * cols + i..(i + 1) * cols].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        for r in i..rows {
            let row = &mut a[r * cols + i..(r + 1) * cols];
            let f = 2.0 * row.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>() / vv;
            for (x, y) in row.iter_mut().zip(&v) {
                *x -= f * y;
            }
        }
        prod *= alpha.abs();
    }
    prod
}

const JACOBI_TOL: f64 = 1e-13;
const MAX_SWEEPS: usize = 80;

/// Singular values in nonincreasing order, `min(rows, cols)` of them.
///
/// One-sided Jacobi (Hestenes): the short dimension's vectors are rotated
/// pairwise until mutually orthogonal, then their norms are the singular
/// values.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>, LinalgError> {
    m.check_finite()?;
    // Rows of `w` are the vectors to orthogonalize: columns of M when M is
    // tall, rows of M when it is wide.
    let (count, len, mut w) = if m.rows() >= m.cols() {
        (m.cols(), m.rows(), m.transpose().data)
    } else {
        (m.rows(), m.cols(), m.data.clone())
    };
    if count == 0 {
        return Ok(Vec::new());
    }
    // Rescale so huge or tiny entries cannot overflow the squared norms.
    let scale = w.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if scale == 0.0 {
        return Ok(vec![0.0; count]);
    }
    for x in w.iter_mut() {
        *x /= scale;
    }

    let dot = |w: &[f64], i: usize, j: usize| -> f64 {
        let (a, b) = (&w[i * len..(i + 1) * len], &w[j * len..(j + 1) * len]);
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    };

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..count {
            for j in i + 1..count {
                let a = dot(&w, i, i);
                let b = dot(&w, j, j);
                let d = dot(&w, i, j);
                if d == 0.0 || d.abs() <= JACOBI_TOL * (a * b).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (b - a) / (2.0 * d);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..len {
                    let xi = w[i * len + k];
                    let xj = w[j * len + k];
                    w[i * len + k] = c * xi - s * xj;
                    w[j * len + k] = s * xi + c * xj;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<f64> = (0..count).map(|i| dot(&w, i, i).sqrt() * scale).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}
