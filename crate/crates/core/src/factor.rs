//! Exploratory factor analysis: sampling adequacy (KMO), Bartlett's test of
//! sphericity, scree data, iterated principal-axis extraction, varimax
//! rotation, the loading table and regression (Thurstone) factor scores.
//!
//! The loading table's `com` column is the ratio `h2 / u2`, not the Hoffman
//! row-complexity index reported by most factor-analysis packages.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Error, Result};
use crate::matrix::{invert_spd, ln_det_spd, rows, smc, standardize, sym_eigen, CorrelationMatrix};
use crate::panel::{DataDictionary, GroupHint};

/// Kaiser-Meyer-Olkin measure of sampling adequacy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Msa {
    pub overall: f64,
    pub per_variable: Vec<f64>,
}

pub fn kmo(corr: &CorrelationMatrix) -> Result<Msa> {
    let p = corr.dim();
    let r = &corr.values;
    let inv = invert_spd(r)?;
    let partial = |i: usize, j: usize| -inv[(i, j)] / (inv[(i, i)] * inv[(j, j)]).sqrt();

    let mut r2_total = 0.0;
    let mut q2_total = 0.0;
    let mut per_variable = Vec::with_capacity(p);
    for i in 0..p {
        let mut r2 = 0.0;
        let mut q2 = 0.0;
        for j in (0..p).filter(|&j| j != i) {
            r2 += r[(i, j)].powi(2);
            q2 += partial(i, j).powi(2);
        }
        r2_total += r2;
        q2_total += q2;
        per_variable.push(if r2 + q2 > 0.0 { r2 / (r2 + q2) } else { 0.0 });
    }
    if r2_total + q2_total == 0.0 {
        return Err(Error::NoCorrelations);
    }
    Ok(Msa {
        overall: r2_total / (r2_total + q2_total),
        per_variable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bartlett {
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Bartlett's test that the population correlation matrix is the identity:
/// `chi2 = -((n - 1) - (2p + 5) / 6) ln det R` on `p(p-1)/2` degrees of freedom.
pub fn bartlett(corr: &CorrelationMatrix, n: usize) -> Result<Bartlett> {
    let p = corr.dim();
    if p < 2 {
        return Err(invalid!("Bartlett's test needs at least 2 variables"));
    }
    if n <= p {
        return Err(invalid!("Bartlett's test needs n > p (n = {n}, p = {p})"));
    }
    let ln_det = ln_det_spd(&corr.values)?;
    let factor = (n as f64 - 1.0) - (2.0 * p as f64 + 5.0) / 6.0;
    // + 0.0 turns -0.0 (identity input) into 0.0
    let chi2 = (-factor * ln_det).max(0.0) + 0.0;
    let df = p * (p - 1) / 2;
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(Bartlett {
        chi2,
        df,
        p_value: dist.sf(chi2),
    })
}

/// Field names are part of the JSON output contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdequacyReport {
    pub variables: Vec<String>,
    pub n: usize,
    pub overall_msa: f64,
    pub per_variable_msa: Vec<f64>,
    pub bartlett_chi2: f64,
    pub bartlett_df: usize,
    pub bartlett_p: f64,
}

pub fn adequacy(corr: &CorrelationMatrix, n: usize) -> Result<AdequacyReport> {
    let msa = kmo(corr)?;
    let b = bartlett(corr, n)?;
    Ok(AdequacyReport {
        variables: corr.variables.clone(),
        n,
        overall_msa: msa.overall,
        per_variable_msa: msa.per_variable,
        bartlett_chi2: b.chi2,
        bartlett_df: b.df,
        bartlett_p: b.p_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeReport {
    pub eigenvalues: Vec<f64>,
    pub cumulative_variance_proportion: Vec<f64>,
    /// Number of eigenvalues strictly greater than 1.
    pub n_factors_kaiser: usize,
}

pub fn scree(corr: &CorrelationMatrix) -> Result<ScreeReport> {
    let eig = sym_eigen(&corr.values)?;
    let p = corr.dim() as f64;
    let eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let mut running = 0.0;
    let cumulative_variance_proportion = eigenvalues
        .iter()
        .map(|l| {
            running += l;
            running / p
        })
        .collect();
    Ok(ScreeReport {
        n_factors_kaiser: eigenvalues.iter().filter(|&&l| l > 1.0).count(),
        eigenvalues,
        cumulative_variance_proportion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PafOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PafOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 200,
        }
    }
}

const HEYWOOD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct PafSolution {
    pub loadings: DMatrix<f64>,
    pub communalities: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Sorts columns by sum of squared loadings (descending) and flips signs so
/// every column sum is non-negative. Returns the signed permutation applied.
fn canonical_columns(loadings: &DMatrix<f64>) -> (DMatrix<f64>, Vec<(usize, f64)>) {
    let k = loadings.ncols();
    let ss: Vec<f64> = (0..k).map(|f| loadings.column(f).norm_squared()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| ss[b].total_cmp(&ss[a]).then(a.cmp(&b)));
    let mut out = DMatrix::zeros(loadings.nrows(), k);
    let mut perm = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let sign = if loadings.column(src).sum() < 0.0 { -1.0 } else { 1.0 };
        out.set_column(dst, &(loadings.column(src) * sign));
        perm.push((src, sign));
    }
    (out, perm)
}

/// Iterated principal-axis factoring starting from squared multiple
/// correlations.
pub fn extract_paf(corr: &CorrelationMatrix, k: usize, opts: &PafOptions) -> Result<PafSolution> {
    let p = corr.dim();
    if k == 0 || k >= p {
        return Err(invalid!("number of factors must satisfy 1 <= k < p (k = {k}, p = {p})"));
    }
    let mut h2 = smc(corr)?;
    let mut reduced = corr.values.clone();
    let mut loadings = DMatrix::zeros(p, k);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        for j in 0..p {
            reduced[(j, j)] = h2[j];
        }
        let eig = sym_eigen(&reduced)?;
        for f in 0..k {
            let scale = eig.eigenvalues[f].max(0.0).sqrt();
            loadings.set_column(f, &(eig.eigenvectors.column(f) * scale));
        }
        let next = DVector::from_iterator(p, loadings.row_iter().map(|r| r.norm_squared()));
        if let Some(j) = (0..p).find(|&j| next[j] > 1.0 + HEYWOOD_TOL) {
            return Err(Error::Heywood {
                variable: corr.variables[j].clone(),
                communality: next[j],
            });
        }
        let change = (&next - &h2).amax();
        h2 = next;
        if change < opts.tolerance {
            converged = true;
            break;
        }
    }
    let (loadings, _) = canonical_columns(&loadings);
    Ok(PafSolution {
        loadings,
        communalities: h2,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarimaxOptions {
    pub kaiser_normalization: bool,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for VarimaxOptions {
    fn default() -> Self {
        Self {
            kaiser_normalization: true,
            tolerance: 1e-6,
            max_sweeps: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarimaxSolution {
    pub rotated: DMatrix<f64>,
    pub rotation: DMatrix<f64>,
    /// Criterion before rotation followed by its value after each sweep,
    /// evaluated on the (possibly normalized) loadings being rotated.
    pub criterion_history: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Varimax criterion `sum_f [ sum_j l^4 / p - (sum_j l^2 / p)^2 ]`.
pub fn varimax_criterion(loadings: &DMatrix<f64>) -> f64 {
    let p = loadings.nrows() as f64;
    loadings
        .column_iter()
        .map(|col| {
            let s2: f64 = col.iter().map(|x| x * x).sum::<f64>() / p;
            let s4: f64 = col.iter().map(|x| x.powi(4)).sum::<f64>() / p;
            s4 - s2 * s2
        })
        .sum()
}

/// Orthogonal varimax rotation by successive planar rotations of factor
/// pairs, each at the angle that maximizes the criterion for that pair.
pub fn varimax(loadings: &DMatrix<f64>, opts: &VarimaxOptions) -> VarimaxSolution {
    let (p, k) = loadings.shape();
    if k < 2 {
        return VarimaxSolution {
            rotated: loadings.clone(),
            rotation: DMatrix::identity(k, k),
            criterion_history: vec![varimax_criterion(loadings)],
            sweeps: 0,
            converged: true,
        };
    }
    let weights: Vec<f64> = loadings
        .row_iter()
        .map(|r| if opts.kaiser_normalization { r.norm() } else { 1.0 })
        .map(|w| if w > 0.0 { w } else { 1.0 })
        .collect();
    let mut a = DMatrix::from_fn(p, k, |i, f| loadings[(i, f)] / weights[i]);
    let mut t = DMatrix::<f64>::identity(k, k);
    let pf = p as f64;

    let mut history = vec![varimax_criterion(&a)];
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        for f1 in 0..k {
            for f2 in (f1 + 1)..k {
                let (mut sa, mut sb, mut sc, mut sd) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..p {
                    let (x, y) = (a[(i, f1)], a[(i, f2)]);
                    let u = x * x - y * y;
                    let v = 2.0 * x * y;
                    sa += u;
                    sb += v;
                    sc += u * u - v * v;
                    sd += 2.0 * u * v;
                }
                let num = sd - 2.0 * sa * sb / pf;
                let den = sc - (sa * sa - sb * sb) / pf;
                let phi = 0.25 * num.atan2(den);
                if phi == 0.0 {
                    continue;
                }
                let (s, c) = phi.sin_cos();
                for i in 0..p {
                    let (x, y) = (a[(i, f1)], a[(i, f2)]);
                    a[(i, f1)] = c * x + s * y;
                    a[(i, f2)] = -s * x + c * y;
                }
                for i in 0..k {
                    let (x, y) = (t[(i, f1)], t[(i, f2)]);
                    t[(i, f1)] = c * x + s * y;
                    t[(i, f2)] = -s * x + c * y;
                }
            }
        }
        let crit = varimax_criterion(&a);
        let gain = crit - history.last().copied().unwrap_or(crit);
        history.push(crit);
        if gain < opts.tolerance {
            converged = true;
            break;
        }
    }

    let rotated = loadings * &t;
    let (rotated, perm) = canonical_columns(&rotated);
    let mut rotation = DMatrix::zeros(k, k);
    for (dst, &(src, sign)) in perm.iter().enumerate() {
        rotation.set_column(dst, &(t.column(src) * sign));
    }
    VarimaxSolution {
        rotated,
        rotation,
        criterion_history: history,
        sweeps,
        converged,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub variables: Vec<String>,
    #[serde(with = "rows")]
    pub unrotated_loadings: DMatrix<f64>,
    #[serde(with = "rows")]
    pub rotated_loadings: DMatrix<f64>,
    #[serde(with = "rows")]
    pub rotation_matrix: DMatrix<f64>,
    pub communalities: Vec<f64>,
    pub uniqueness: Vec<f64>,
    #[serde(with = "finite_or_inf")]
    pub complexity: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub rotation_sweeps: usize,
    pub rotation_converged: bool,
    pub kaiser_normalization: bool,
}

impl FactorModel {
    pub fn n_factors(&self) -> usize {
        self.rotated_loadings.ncols()
    }

    /// For each factor, the indices of variables whose largest absolute
    /// loading falls on it.
    pub fn item_sets(&self) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); self.n_factors()];
        for (j, row) in self.rotated_loadings.row_iter().enumerate() {
            let best = (0..row.len())
                .max_by(|&a, &b| row[a].abs().total_cmp(&row[b].abs()).then(b.cmp(&a)))
                .unwrap_or(0);
            sets[best].push(j);
        }
        sets
    }

    /// Picks which factor is capacity and which is governance by majority
    /// vote of the dictionary group hints over each factor's item set.
    /// Falls back to (0, 1) when the vote is tied or empty.
    pub fn label_factors(&self, dict: &DataDictionary) -> Result<(usize, usize)> {
        if self.n_factors() < 2 {
            return Err(invalid!("capacity and governance need at least 2 factors"));
        }
        let sets = self.item_sets();
        let votes = |group: GroupHint| -> Vec<usize> {
            sets.iter()
                .map(|items| {
                    items
                        .iter()
                        .filter(|&&j| dict.get(&self.variables[j]).map(|s| s.group_hint) == Some(group))
                        .count()
                })
                .collect()
        };
        let argmax = |v: &[usize]| (0..v.len()).max_by(|&a, &b| v[a].cmp(&v[b]).then(b.cmp(&a)));
        let cap = argmax(&votes(GroupHint::Capacity)).unwrap_or(0);
        let mut gov_votes = votes(GroupHint::Governance);
        gov_votes[cap] = 0;
        let gov = argmax(&gov_votes)
            .filter(|&g| g != cap)
            .unwrap_or(if cap == 0 { 1 } else { 0 });
        Ok((cap, gov))
    }
}

/// Principal-axis extraction followed by varimax rotation.
pub fn fit_efa(corr: &CorrelationMatrix, k: usize, paf: &PafOptions, rot: &VarimaxOptions) -> Result<FactorModel> {
    let solution = extract_paf(corr, k, paf)?;
    let rotation = varimax(&solution.loadings, rot);
    let table = loading_table(&corr.variables, &rotation.rotated);
    Ok(FactorModel {
        variables: corr.variables.clone(),
        unrotated_loadings: solution.loadings,
        rotated_loadings: rotation.rotated,
        rotation_matrix: rotation.rotation,
        communalities: table.rows.iter().map(|r| r.h2).collect(),
        uniqueness: table.rows.iter().map(|r| r.u2).collect(),
        complexity: table.rows.iter().map(|r| r.com).collect(),
        iterations: solution.iterations,
        converged: solution.converged,
        rotation_sweeps: rotation.sweeps,
        rotation_converged: rotation.converged,
        kaiser_normalization: rot.kaiser_normalization,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingRow {
    pub variable: String,
    pub loadings: Vec<f64>,
    pub h2: f64,
    pub u2: f64,
    #[serde(with = "finite_or_inf::scalar")]
    pub com: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingTable {
    pub rows: Vec<LoadingRow>,
    pub warnings: Vec<String>,
}

impl LoadingTable {
    pub fn relabel(mut self, dict: &DataDictionary) -> Self {
        for row in &mut self.rows {
            row.variable = dict.label(&row.variable);
        }
        self
    }

    pub fn to_csv(&self) -> String {
        use crate::report::fmt_num;
        let k = self.rows.first().map_or(0, |r| r.loadings.len());
        let mut out = String::from("variable");
        for f in 1..=k {
            out.push_str(&format!(",factor{f}"));
        }
        out.push_str(",h2,u2,com\n");
        for r in &self.rows {
            out.push_str(&r.variable);
            for l in &r.loadings {
                out.push(',');
                out.push_str(&fmt_num(*l));
            }
            out.push_str(&format!(",{},{},{}\n", fmt_num(r.h2), fmt_num(r.u2), fmt_num(r.com)));
        }
        out
    }
}

/// Communality `h2` (row sum of squared loadings), uniqueness `u2 = 1 - h2`
/// and the ratio `com = h2 / u2`, one row per variable in input order.
/// A zero uniqueness gives `com = +inf` and a warning.
pub fn loading_table(variables: &[String], loadings: &DMatrix<f64>) -> LoadingTable {
    let mut warnings = Vec::new();
    let rows = loadings
        .row_iter()
        .enumerate()
        .map(|(j, row)| {
            let variable = variables.get(j).cloned().unwrap_or_else(|| format!("V{}", j + 1));
            let h2: f64 = row.iter().map(|l| l * l).sum();
            let u2 = 1.0 - h2;
            let com = if u2 > 0.0 {
                h2 / u2
            } else {
                warnings.push(format!("{variable}: uniqueness {u2} <= 0, complexity reported as +inf"));
                f64::INFINITY
            };
            LoadingRow {
                variable,
                loadings: row.iter().copied().collect(),
                h2,
                u2,
                com,
            }
        })
        .collect();
    LoadingTable { rows, warnings }
}

/// Regression (Thurstone) factor scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorScores {
    /// n x k, each column standardized to mean 0 and sd 1.
    #[serde(with = "rows")]
    pub scores: DMatrix<f64>,
    /// p x k weights `R^-1 L`.
    #[serde(with = "rows")]
    pub weights: DMatrix<f64>,
}

/// `S = Z R^-1 L`, then each column of `S` standardized.
pub fn regression_scores(z: &DMatrix<f64>, corr: &CorrelationMatrix, loadings: &DMatrix<f64>) -> Result<FactorScores> {
    if z.ncols() != corr.dim() || loadings.nrows() != corr.dim() {
        return Err(invalid!(
            "shape mismatch: Z has {} columns, R is {}x{}, loadings have {} rows",
            z.ncols(),
            corr.dim(),
            corr.dim(),
            loadings.nrows()
        ));
    }
    let weights = invert_spd(&corr.values)? * loadings;
    let raw = z * &weights;
    let mut scores = DMatrix::zeros(raw.nrows(), raw.ncols());
    for f in 0..raw.ncols() {
        let col: Vec<f64> = raw.column(f).iter().copied().collect();
        let s = standardize(&col).ok_or_else(|| Error::Numerical(format!("factor {} scores are constant", f + 1)))?;
        scores.set_column(f, &DVector::from_vec(s));
    }
    Ok(FactorScores { scores, weights })
}

/// Serializes non-finite values as the strings "Infinity" / "-Infinity" / "NaN".
mod finite_or_inf {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn to_repr(x: f64) -> Repr {
        if x.is_finite() {
            Repr::Num(x)
        } else if x.is_nan() {
            Repr::Text("NaN".into())
        } else if x > 0.0 {
            Repr::Text("Infinity".into())
        } else {
            Repr::Text("-Infinity".into())
        }
    }

    fn from_repr(r: Repr) -> f64 {
        match r {
            Repr::Num(x) => x,
            Repr::Text(t) => match t.as_str() {
                "Infinity" => f64::INFINITY,
                "-Infinity" => f64::NEG_INFINITY,
                _ => f64::NAN,
            },
        }
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|&x| to_repr(x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Repr>::deserialize(d)?.into_iter().map(from_repr).collect())
    }

    pub mod scalar {
        use super::*;

        pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
            to_repr(*v).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            Ok(from_repr(Repr::deserialize(d)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn corr(values: &[f64], p: usize) -> CorrelationMatrix {
        CorrelationMatrix::unnamed(DMatrix::from_row_slice(p, p, values)).unwrap()
    }

    /// R = L L' + diag(1 - rowsums(L^2)).
    fn implied(l: &DMatrix<f64>) -> CorrelationMatrix {
        let mut r = l * l.transpose();
        for i in 0..r.nrows() {
            r[(i, i)] = 1.0;
        }
        CorrelationMatrix::unnamed(r).unwrap()
    }

    #[test]
    fn kmo_two_variables_is_half() {
        for r in [0.1, 0.5, -0.7, 0.95] {
            let m = kmo(&corr(&[1.0, r, r, 1.0], 2)).unwrap();
            assert_abs_diff_eq!(m.overall, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn kmo_identity_is_degenerate() {
        let r = CorrelationMatrix::unnamed(DMatrix::identity(3, 3)).unwrap();
        assert!(matches!(kmo(&r), Err(Error::NoCorrelations)));
    }

    #[test]
    fn kmo_matches_direct_formula_on_one_factor_fixture() {
        // all loadings 0.8: r_ij = 0.64. Oracle: explicit partials from a
        // hand-built inverse of the equicorrelation matrix.
        let p = 4;
        let rho: f64 = 0.64;
        let r = implied(&DMatrix::from_element(p, 1, 0.8));
        // inverse of equicorrelation: a on diagonal, b off diagonal
        let denom = (1.0 - rho) * (1.0 + (p as f64 - 1.0) * rho);
        let a = (1.0 + (p as f64 - 2.0) * rho) / denom;
        let b = -rho / denom;
        let q = -b / a;
        let sum_r2 = (p * (p - 1)) as f64 * rho * rho;
        let sum_q2 = (p * (p - 1)) as f64 * q * q;
        let expected = sum_r2 / (sum_r2 + sum_q2);
        let m = kmo(&r).unwrap();
        assert!((m.overall - expected).abs() < 1e-10);
        for v in m.per_variable {
            assert!((v - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn bartlett_closed_forms() {
        let b = bartlett(&corr(&[1.0, 0.5, 0.5, 1.0], 2), 100).unwrap();
        let expected = -(99.0 - 1.5) * 0.75f64.ln();
        assert_abs_diff_eq!(b.chi2, expected, epsilon = 1e-10);
        assert_eq!(b.df, 1);

        let id = CorrelationMatrix::unnamed(DMatrix::identity(4, 4)).unwrap();
        let b = bartlett(&id, 50).unwrap();
        assert_eq!(b.chi2, 0.0);
        assert_eq!(b.p_value, 1.0);
        assert_eq!(b.df, 6);

        let near = bartlett(&corr(&[1.0, 0.999999, 0.999999, 1.0], 2), 200).unwrap();
        assert!(near.chi2 > 2000.0);
        assert!(near.p_value < 1e-100);
    }

    #[test]
    fn bartlett_rejects_collinear_and_small_n() {
        let r = corr(&[1.0, 1.0, 1.0, 1.0], 2);
        assert!(matches!(bartlett(&r, 10), Err(Error::Singular { .. })));
        assert!(bartlett(&corr(&[1.0, 0.5, 0.5, 1.0], 2), 2).is_err());
    }

    #[test]
    fn scree_identity() {
        let s = scree(&CorrelationMatrix::unnamed(DMatrix::identity(5, 5)).unwrap()).unwrap();
        assert!(s.eigenvalues.iter().all(|&l| (l - 1.0).abs() < 1e-15));
        assert_eq!(s.n_factors_kaiser, 0);
        assert_abs_diff_eq!(*s.cumulative_variance_proportion.last().unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn paf_recovers_one_factor_loadings() {
        let truth = DMatrix::from_column_slice(4, 1, &[0.9, 0.8, 0.7, 0.6]);
        let sol = extract_paf(&implied(&truth), 1, &PafOptions::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.loadings - truth).amax() < 1e-4);
    }

    #[test]
    fn paf_identity_has_no_common_variance() {
        let r = CorrelationMatrix::unnamed(DMatrix::identity(4, 4)).unwrap();
        let sol = extract_paf(&r, 1, &PafOptions::default()).unwrap();
        assert!(sol.loadings.amax() < 1e-6);
        assert!(sol.communalities.amax() < 1e-6);
    }

    #[test]
    fn paf_rejects_bad_k() {
        let r = CorrelationMatrix::unnamed(DMatrix::identity(3, 3)).unwrap();
        assert!(extract_paf(&r, 3, &PafOptions::default()).is_err());
        assert!(extract_paf(&r, 0, &PafOptions::default()).is_err());
    }

    #[test]
    fn paf_flags_heywood_case() {
        // one factor implies h1^2 = r12 * r13 / r23 = 1.28
        let r = corr(&[1.0, 0.8, 0.8, 0.8, 1.0, 0.5, 0.8, 0.5, 1.0], 3);
        match extract_paf(&r, 1, &PafOptions::default()) {
            Err(Error::Heywood { communality, .. }) => assert!(communality > 1.0),
            other => panic!("expected Heywood error, got {other:?}"),
        }
    }

    #[test]
    fn varimax_single_factor_is_identity() {
        let l = DMatrix::from_column_slice(3, 1, &[0.5, 0.6, 0.7]);
        let v = varimax(&l, &VarimaxOptions::default());
        assert_eq!(v.rotated, l);
        assert_eq!(v.rotation, DMatrix::identity(1, 1));
    }

    #[test]
    fn varimax_keeps_simple_structure() {
        let l = DMatrix::from_row_slice(4, 2, &[0.9, 0.0, 0.7, 0.0, 0.0, 0.6, 0.0, 0.5]);
        let v = varimax(&l, &VarimaxOptions::default());
        assert!((&v.rotated - &l).amax() < 1e-10);
    }

    #[test]
    fn varimax_preserves_communalities_and_is_orthogonal() {
        let l = DMatrix::from_row_slice(
            6,
            3,
            &[
                0.7, 0.3, 0.1, 0.6, 0.4, -0.2, 0.5, 0.5, 0.3, 0.2, 0.8, 0.1, 0.3, 0.2, 0.7, 0.1, 0.6, 0.5,
            ],
        );
        for normalize in [true, false] {
            let opts = VarimaxOptions {
                kaiser_normalization: normalize,
                ..Default::default()
            };
            let v = varimax(&l, &opts);
            let ttt = v.rotation.transpose() * &v.rotation;
            assert!((ttt - DMatrix::identity(3, 3)).amax() < 1e-10);
            assert!((&l * &v.rotation - &v.rotated).amax() < 1e-12);
            for j in 0..6 {
                assert_abs_diff_eq!(
                    l.row(j).norm_squared(),
                    v.rotated.row(j).norm_squared(),
                    epsilon = 1e-10
                );
            }
            for w in v.criterion_history.windows(2) {
                assert!(w[1] >= w[0] - 1e-12, "criterion decreased: {w:?}");
            }
        }
    }

    #[test]
    fn loading_table_rows() {
        let names = vec!["zero".to_string(), "RD".to_string(), "full".to_string()];
        let l = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.668, 0.213, 1.0, 0.0]);
        let t = loading_table(&names, &l);
        assert_eq!((t.rows[0].h2, t.rows[0].u2, t.rows[0].com), (0.0, 1.0, 0.0));
        assert_abs_diff_eq!(t.rows[1].h2, 0.491, epsilon = 0.0015);
        assert_abs_diff_eq!(t.rows[1].u2, 0.509, epsilon = 0.0015);
        assert_eq!(t.rows[2].com, f64::INFINITY);
        assert_eq!(t.warnings.len(), 1);
        for r in &t.rows[..2] {
            assert_abs_diff_eq!(r.h2 + r.u2, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(r.com * r.u2, r.h2, epsilon = 1e-10);
        }
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"Infinity\""));
        let back: LoadingTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back.rows[2].com, f64::INFINITY);
    }

    #[test]
    fn loading_table_respatent_row() {
        let l = DMatrix::from_row_slice(1, 2, &[0.896, 0.149]);
        let t = loading_table(&["ResPatent".to_string()], &l);
        assert_abs_diff_eq!(t.rows[0].com, 4.714, epsilon = 0.01);
    }

    #[test]
    fn single_indicator_score_is_its_zscore() {
        let z = DMatrix::from_column_slice(4, 1, &[-1.5, -0.5, 0.5, 1.5]);
        let zs = DMatrix::from_vec(4, 1, standardize(z.as_slice()).unwrap());
        let r = CorrelationMatrix::unnamed(DMatrix::identity(1, 1)).unwrap();
        let s = regression_scores(&zs, &r, &DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!((s.scores - zs).amax() < 1e-12);
    }

    #[test]
    fn identical_rows_give_identical_scores() {
        let z = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, 1.0, 0.5, -1.0, 0.2, -1.0, -1.2]);
        let r = corr(&[1.0, 0.3, 0.3, 1.0], 2);
        let l = DMatrix::from_row_slice(2, 1, &[0.7, 0.6]);
        let s = regression_scores(&z, &r, &l).unwrap();
        assert_eq!(s.scores[(0, 0)], s.scores[(1, 0)]);
    }

    #[test]
    fn factor_model_json_round_trip() {
        let truth = DMatrix::from_row_slice(6, 2, &[0.8, 0.1, 0.7, 0.2, 0.75, 0.0, 0.1, 0.8, 0.2, 0.7, 0.0, 0.6]);
        let m = fit_efa(&implied(&truth), 2, &PafOptions::default(), &VarimaxOptions::default()).unwrap();
        let back: FactorModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.item_sets(), vec![vec![0, 1, 2], vec![3, 4, 5]]);
    }
}
