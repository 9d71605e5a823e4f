use serde::{Deserialize, Serialize};

/// Small dense square matrix, row-major.
///
/// Transition matrices use column = previous state, row = next state, so a
/// column-stochastic matrix maps a state distribution forward by `mul_vec`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn filled(n: usize, value: f64) -> Self {
        Self { n, data: vec![value; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::filled(n, 0.0);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds from rows; panics on a ragged or non-square input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "matrix must be square");
            data.extend_from_slice(row);
        }
        Self { n, data }
    }

    pub fn outer(rows: &[f64], cols: &[f64]) -> Self {
        assert_eq!(rows.len(), cols.len());
        let n = rows.len();
        let data = rows
            .iter()
            .flat_map(|r| cols.iter().map(move |c| r * c))
            .collect();
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.n + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, col)).collect()
    }

    pub fn set_column(&mut self, col: usize, values: &[f64]) {
        for (r, v) in values.iter().enumerate() {
            self.set(r, col, *v);
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        self.data
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn add_scaled(&mut self, other: &Matrix, scale: f64) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn normalize_columns(&self) -> Matrix {
        let mut out = self.clone();
        for c in 0..self.n {
            let col = self.column(c);
            let total: f64 = col.iter().sum();
            out.set_column(c, &col.iter().map(|x| x / total).collect::<Vec<_>>());
        }
        out
    }

    pub fn is_column_stochastic(&self, tol: f64) -> bool {
        (0..self.n).all(|c| {
            let col = self.column(c);
            col.iter().all(|&x| x >= 0.0) && (col.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }
}
