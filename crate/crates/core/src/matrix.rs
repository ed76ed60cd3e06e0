//! Numerical kernels shared by the factor, reliability and index stages:
//! column standardization, Pearson correlation, a cyclic Jacobi symmetric
//! eigensolver, SPD inversion and squared multiple correlations.
//!
//! Matrices are `nalgebra::DMatrix<f64>` with observations in rows and
//! variables in columns.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Relative tolerance used when checking that an input is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted by [`invert_spd`].
pub const SPD_MIN_EIGENVALUE: f64 = 1e-10;

const JACOBI_MAX_SWEEPS: usize = 100;

pub fn column_mean(data: &DMatrix<f64>, j: usize) -> f64 {
    data.column(j).sum() / data.nrows() as f64
}

/// Sample standard deviation (n - 1 denominator) of column `j`.
pub fn column_sd(data: &DMatrix<f64>, j: usize) -> f64 {
    let n = data.nrows();
    if n < 2 {
        return 0.0;
    }
    let mean = column_mean(data, j);
    let ss: f64 = data.column(j).iter().map(|x| (x - mean).powi(2)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Standardizes a slice to mean 0 and sample sd 1. Returns `None` for a
/// constant (or too short) input.
pub fn standardize(values: &[f64]) -> Option<Vec<f64>> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|x| (x - mean).powi(2)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return None;
    }
    Some(values.iter().map(|x| (x - mean) / sd).collect())
}

fn variable_name(variables: &[String], j: usize) -> String {
    variables.get(j).cloned().unwrap_or_else(|| format!("column {j}"))
}

/// Column-wise z-scores using the sample standard deviation.
pub fn zscore(data: &DMatrix<f64>, variables: &[String]) -> Result<DMatrix<f64>> {
    if data.nrows() < 2 {
        return Err(invalid!("z-scores need at least 2 rows, got {}", data.nrows()));
    }
    let mut out = DMatrix::zeros(data.nrows(), data.ncols());
    for j in 0..data.ncols() {
        let col: Vec<f64> = data.column(j).iter().copied().collect();
        let z = standardize(&col).ok_or_else(|| Error::ConstantColumn {
            variable: variable_name(variables, j),
        })?;
        out.set_column(j, &DVector::from_vec(z));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub variables: Vec<String>,
    #[serde(with = "rows")]
    pub values: DMatrix<f64>,
}

impl CorrelationMatrix {
    /// Wraps an existing matrix after checking it is square, symmetric and
    /// has a unit diagonal.
    pub fn from_matrix(values: DMatrix<f64>, variables: Vec<String>) -> Result<Self> {
        let p = values.nrows();
        if values.ncols() != p || variables.len() != p {
            return Err(invalid!("correlation matrix must be square with one name per variable"));
        }
        check_symmetric(&values)?;
        for i in 0..p {
            if (values[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(invalid!(
                    "correlation matrix diagonal entry {} is {}",
                    variables[i],
                    values[(i, i)]
                ));
            }
        }
        Ok(Self { variables, values })
    }

    /// Unnamed variables `V1..Vp`; convenient for tests and fixtures.
    pub fn unnamed(values: DMatrix<f64>) -> Result<Self> {
        let names = (1..=values.nrows()).map(|i| format!("V{i}")).collect();
        Self::from_matrix(values, names)
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    /// Square CSV with a header row and a leading name column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variable");
        for v in &self.variables {
            out.push(',');
            out.push_str(v);
        }
        out.push('\n');
        for (i, v) in self.variables.iter().enumerate() {
            out.push_str(v);
            for j in 0..self.dim() {
                out.push(',');
                out.push_str(&crate::report::fmt_num(self.values[(i, j)]));
            }
            out.push('\n');
        }
        out
    }

    /// Submatrix over the given variable indices, in that order.
    pub fn select(&self, indices: &[usize]) -> CorrelationMatrix {
        let k = indices.len();
        let values = DMatrix::from_fn(k, k, |a, b| self.values[(indices[a], indices[b])]);
        CorrelationMatrix {
            variables: indices.iter().map(|&i| self.variables[i].clone()).collect(),
            values,
        }
    }
}

/// Pearson correlation of the columns of `data`.
pub fn pearson_corr(data: &DMatrix<f64>, variables: &[String]) -> Result<CorrelationMatrix> {
    let z = zscore(data, variables)?;
    let n = data.nrows() as f64;
    let mut r = z.transpose() * &z / (n - 1.0);
    let p = r.nrows();
    for i in 0..p {
        r[(i, i)] = 1.0;
        for j in (i + 1)..p {
            let v = (0.5 * (r[(i, j)] + r[(j, i)])).clamp(-1.0, 1.0);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    let names = (0..p).map(|j| variable_name(variables, j)).collect();
    Ok(CorrelationMatrix {
        variables: names,
        values: r,
    })
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(invalid!("matrix is {}x{}, expected square", a.nrows(), a.ncols()));
    }
    let scale = a.amax().max(1.0);
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if worst > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry: worst });
    }
    Ok(())
}

/// Eigenvalues in descending order with matching unit eigenvectors as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenSystem {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.eigenvectors * DMatrix::from_diagonal(&self.eigenvalues) * self.eigenvectors.transpose()
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues are sorted descending. Each eigenvector is signed so that
/// its largest-magnitude component is positive (first such index on ties).
pub fn sym_eigen(matrix: &DMatrix<f64>) -> Result<EigenSystem> {
    check_symmetric(matrix)?;
    let n = matrix.nrows();
    let mut a = matrix.clone();
    // work on the exactly symmetric part
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let mut v = DMatrix::<f64>::identity(n, n);
    let norm = a.norm();

    let mut converged = n < 2 || norm == 0.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * norm {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).into_owned();
        let mut lead = 0;
        for k in 1..n {
            if col[k].abs() > col[lead].abs() {
                lead = k;
            }
        }
        if col[lead] < 0.0 {
            col.neg_mut();
        }
        eigenvectors.set_column(dst, &col);
    }
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
    })
}

/// Inverse of a symmetric positive definite matrix.
pub fn invert_spd(matrix: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(matrix)?;
    let smallest = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smallest > SPD_MIN_EIGENVALUE) {
        return Err(Error::Singular {
            smallest_eigenvalue: smallest,
        });
    }
    let chol = matrix.clone().cholesky().ok_or(Error::Singular {
        smallest_eigenvalue: smallest,
    })?;
    let mut inv = chol.inverse();
    let n = inv.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = v;
            inv[(j, i)] = v;
        }
    }
    Ok(inv)
}

/// Natural log of the determinant of an SPD matrix, via Cholesky.
pub fn ln_det_spd(matrix: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(matrix)?;
    match matrix.clone().cholesky() {
        Some(chol) => Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>()),
        None => {
            let smallest = sym_eigen(matrix)?
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            Err(Error::Singular {
                smallest_eigenvalue: smallest,
            })
        }
    }
}

/// Squared multiple correlation of each variable with all the others:
/// `1 - 1 / (R^-1)_jj`.
pub fn smc(corr: &CorrelationMatrix) -> Result<DVector<f64>> {
    let inv = invert_spd(&corr.values)?;
    Ok(DVector::from_iterator(
        corr.dim(),
        (0..corr.dim()).map(|j| (1.0 - 1.0 / inv[(j, j)]).max(0.0)),
    ))
}

/// Serde adapter writing a matrix as a list of rows.
pub mod rows {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return None;
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Some(DMatrix::from_row_slice(rows.len(), ncols, &flat))
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).ok_or_else(|| D::Error::custom("ragged matrix rows"))
    }
}
