//! Internal-consistency reliability of an item set: raw Cronbach's alpha,
//! standardized alpha and Guttman's lambda-6.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::{column_sd, pearson_corr, smc};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub item_set: Vec<String>,
    pub n: usize,
    pub raw_alpha: f64,
    pub std_alpha: f64,
    pub lambda6: f64,
    /// Mean off-diagonal inter-item correlation.
    pub average_r: f64,
}

fn covariance(items: &DMatrix<f64>) -> DMatrix<f64> {
    let n = items.nrows() as f64;
    let means = items.row_mean();
    let centered = DMatrix::from_fn(items.nrows(), items.ncols(), |i, j| items[(i, j)] - means[j]);
    centered.transpose() * &centered / (n - 1.0)
}

/// Reliability of the columns of `items` (rows are observations).
///
/// Raw alpha uses the item covariance matrix; standardized alpha uses the
/// mean inter-item correlation; lambda-6 uses squared multiple correlations
/// from the item set's own correlation matrix.
pub fn reliability(items: &DMatrix<f64>, names: &[String]) -> Result<ReliabilityReport> {
    let (n, k) = items.shape();
    if k < 2 {
        return Err(invalid!("reliability needs at least 2 items, got {k}"));
    }
    if n < 3 {
        return Err(invalid!("reliability needs at least 3 observations, got {n}"));
    }
    if names.len() != k {
        return Err(invalid!("{} item names for {k} items", names.len()));
    }
    for j in 0..k {
        if !(column_sd(items, j) > 0.0) {
            return Err(Error::ConstantColumn {
                variable: names[j].clone(),
            });
        }
    }
    let raw_alpha = raw_alpha(items);
    let corr = pearson_corr(items, names)?;
    let average_r = average_offdiagonal(&corr.values);
    let std_alpha = standardized_alpha(k, average_r);

    let smc = smc(&corr)?;
    let error_var: f64 = smc.iter().map(|s| 1.0 - s).sum();
    let lambda6 = 1.0 - error_var / corr.values.sum();

    Ok(ReliabilityReport {
        item_set: names.to_vec(),
        n,
        raw_alpha,
        std_alpha,
        lambda6,
        average_r,
    })
}

fn raw_alpha(items: &DMatrix<f64>) -> f64 {
    let k = items.ncols() as f64;
    let cov = covariance(items);
    k / (k - 1.0) * (1.0 - cov.trace() / cov.sum())
}

fn average_offdiagonal(r: &DMatrix<f64>) -> f64 {
    let k = r.nrows() as f64;
    (r.sum() - r.trace()) / (k * (k - 1.0))
}

/// Raw and standardized alpha only. Unlike [`reliability`] this does not
/// need an invertible correlation matrix, so it is defined for item sets
/// containing exact duplicates.
pub fn alphas(items: &DMatrix<f64>, names: &[String]) -> Result<(f64, f64)> {
    let k = items.ncols();
    if k < 2 || items.nrows() < 3 {
        return Err(invalid!("alpha needs at least 2 items and 3 observations"));
    }
    let corr = pearson_corr(items, names)?;
    Ok((
        raw_alpha(items),
        standardized_alpha(k, average_offdiagonal(&corr.values)),
    ))
}

/// Standardized alpha from `k` items with mean inter-item correlation `r`.
pub fn standardized_alpha(k: usize, r: f64) -> f64 {
    let k = k as f64;
    k * r / (1.0 + (k - 1.0) * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("item{i}")).collect()
    }

    #[test]
    fn two_items_with_half_correlation() {
        assert_abs_diff_eq!(standardized_alpha(2, 0.5), 2.0 / 3.0, epsilon = 1e-15);
        // x and y with r = 0.5 exactly: y = x/2 + sqrt(3)/2 * w, w orthogonal to x
        let x = [1.0, -1.0, 1.0, -1.0];
        let w = [1.0, 1.0, -1.0, -1.0];
        let s3 = 3f64.sqrt() / 2.0;
        let d = DMatrix::from_fn(4, 2, |i, j| if j == 0 { x[i] } else { 0.5 * x[i] + s3 * w[i] });
        let r = reliability(&d, &names(2)).unwrap();
        assert_abs_diff_eq!(r.average_r, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.std_alpha, 0.6666666666666666, epsilon = 1e-10);
    }

    #[test]
    fn exact_copies_have_alpha_one() {
        let x = [3.0, 1.0, 4.0, 1.5, 5.0, 9.0];
        let d = DMatrix::from_fn(6, 3, |i, _| x[i]);
        let (raw, std) = alphas(&d, &names(3)).unwrap();
        assert_abs_diff_eq!(raw, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(std, 1.0, epsilon = 1e-12);
        // lambda-6 needs an invertible correlation matrix, which copies are not
        assert!(matches!(reliability(&d, &names(3)), Err(Error::Singular { .. })));
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let d = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        assert!(reliability(&d, &names(1)).is_err());
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(reliability(&d, &names(2)).is_err());
        let d = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 2.0, 5.0, 2.0]);
        assert!(matches!(reliability(&d, &names(2)), Err(Error::ConstantColumn { .. })));
    }

    #[test]
    fn anticorrelated_items_have_negative_raw_alpha() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let noise = [0.1, -0.2, 0.05, 0.2, -0.1];
        let d = DMatrix::from_fn(5, 2, |i, j| if j == 0 { x[i] } else { -x[i] + noise[i] });
        let r = reliability(&d, &names(2)).unwrap();
        assert!(r.raw_alpha < 0.0);
        assert!(r.raw_alpha <= 1.0);
    }

    #[test]
    fn std_alpha_ignores_item_scale() {
        let d = DMatrix::from_row_slice(
            5,
            3,
            &[
                1.0, 2.0, 0.5, 2.0, 2.5, 1.0, 3.0, 2.0, 2.5, 4.0, 5.0, 3.0, 5.0, 4.0, 4.5,
            ],
        );
        let mut scaled = d.clone();
        for v in scaled.column_mut(1).iter_mut() {
            *v *= 1000.0;
        }
        let a = reliability(&d, &names(3)).unwrap();
        let b = reliability(&scaled, &names(3)).unwrap();
        assert_abs_diff_eq!(a.std_alpha, b.std_alpha, epsilon = 1e-12);
        assert_abs_diff_eq!(a.lambda6, b.lambda6, epsilon = 1e-12);
        assert!((a.raw_alpha - b.raw_alpha).abs() > 1e-3);
    }

    proptest! {
        #[test]
        fn duplicating_an_item_never_lowers_std_alpha(
            loadings in proptest::collection::vec(0.2f64..0.95, 2..6),
            noise in proptest::collection::vec(-2.0f64..2.0, 40 * 7),
            dup in 0usize..6,
        ) {
            let k = loadings.len();
            let n = 40;
            let d = DMatrix::from_fn(n, k, |i, j| loadings[j] * noise[i * 7 + 6] + noise[i * 7 + j]);
            let corr = pearson_corr(&d, &names(k)).unwrap();
            prop_assume!(corr.values.iter().all(|&r| r >= 0.0));
            let dup = dup % k;
            let mut cols: Vec<_> = d.column_iter().map(|c| c.into_owned()).collect();
            cols.push(d.column(dup).into_owned());
            let extended = DMatrix::from_columns(&cols);
            let (_, before) = alphas(&d, &names(k)).unwrap();
            let (_, after) = alphas(&extended, &names(k + 1)).unwrap();
            prop_assert!(after >= before - 1e-12, "{before} -> {after}");
        }
    }
}
