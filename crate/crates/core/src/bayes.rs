//! Gaussian hierarchical linear regression fitted by blocked Gibbs sampling.
//!
//! The model is `y = X b + sum_l Z_l u_l + e` with `u_l ~ N(0, tau_l I)` and
//! `e ~ N(0, sigma^2 I)`. Coefficients get independent normal priors, every
//! variance an inverse-gamma prior. Each sweep draws all location
//! parameters jointly given the variances, then each variance given the
//! locations. The last grouping level is integrated out of the dense block
//! through its diagonal precision, so the cost per sweep stays small even
//! with one random intercept per country.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::sym_eigen;
use crate::panel::Panel;
use crate::report::fmt_num;

/// Posterior R-hat above which a fit is flagged.
pub const RHAT_WARNING: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    None,
    Region,
    RegionAndCountry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub coefficient_mean: f64,
    pub coefficient_sd: f64,
    /// Inverse-gamma shape for every variance component.
    pub variance_shape: f64,
    /// Inverse-gamma scale for every variance component.
    pub variance_scale: f64,
}

impl Default for Prior {
    fn default() -> Self {
        Self {
            coefficient_mean: 0.0,
            coefficient_sd: 10.0,
            variance_shape: 0.001,
            variance_scale: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub outcome: String,
    pub predictors: Vec<String>,
    pub year_fixed_effects: bool,
    pub grouping: Grouping,
    /// Countries with fewer total publications than this are dropped.
    pub min_publications: f64,
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    pub prior: Prior,
}

impl ModelSpec {
    /// Country-level model with region random intercepts.
    pub fn cross_sectional(seed: u64) -> Self {
        Self {
            outcome: "FWCI".into(),
            predictors: vec!["Capacity".into(), "Governance".into()],
            year_fixed_effects: false,
            grouping: Grouping::Region,
            min_publications: 50.0,
            chains: 4,
            iterations: 2000,
            warmup: 1000,
            seed,
            prior: Prior::default(),
        }
    }

    /// Country-year model with year fixed effects and region and
    /// country-within-region random intercepts.
    pub fn longitudinal(seed: u64) -> Self {
        Self {
            year_fixed_effects: true,
            grouping: Grouping::RegionAndCountry,
            ..Self::cross_sectional(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(invalid!("at least one chain is required"));
        }
        if self.warmup >= self.iterations {
            return Err(invalid!(
                "warmup ({}) must be less than iterations ({})",
                self.warmup,
                self.iterations
            ));
        }
        if self.chains * (self.iterations - self.warmup) < 100 {
            return Err(invalid!("fewer than 100 post-warmup draws in total"));
        }
        if !(self.prior.coefficient_sd > 0.0)
            || !(self.prior.variance_shape > 0.0)
            || !(self.prior.variance_scale > 0.0)
        {
            return Err(invalid!("prior scales must be positive"));
        }
        if self.min_publications < 0.0 {
            return Err(invalid!("publication threshold must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicationFilter {
    pub threshold: f64,
    pub kept: Vec<String>,
    /// Removed country codes with their publication totals.
    pub removed: Vec<(String, f64)>,
}

impl PublicationFilter {
    pub fn kept_set(&self) -> BTreeSet<String> {
        self.kept.iter().cloned().collect()
    }
}

/// Countries whose `variable` total over all years falls below `threshold`.
/// Totals are taken on the untransformed panel; missing cells count as 0.
pub fn filter_low_pub(panel: &Panel, variable: &str, threshold: f64) -> Result<PublicationFilter> {
    if !(threshold >= 0.0) {
        return Err(invalid!("publication threshold must be non-negative, got {threshold}"));
    }
    let totals = panel.totals(variable)?;
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (c, total) in panel.countries.iter().zip(totals) {
        if total < threshold {
            removed.push((c.code.clone(), total));
        } else {
            kept.push(c.code.clone());
        }
    }
    Ok(PublicationFilter {
        threshold,
        kept,
        removed,
    })
}

/// Observations for one regression. Rows are countries or country-years.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub outcome: String,
    pub predictors: Vec<String>,
    pub y: Vec<f64>,
    /// One column per predictor, no intercept.
    pub x: DMatrix<f64>,
    pub region: Vec<String>,
    pub country: Vec<String>,
    pub year: Option<Vec<i32>>,
}

impl RegressionData {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.x.nrows() != n || self.region.len() != n || self.country.len() != n {
            return Err(invalid!("regression data columns have different lengths"));
        }
        if self.x.ncols() != self.predictors.len() {
            return Err(invalid!(
                "{} predictor names for {} columns",
                self.predictors.len(),
                self.x.ncols()
            ));
        }
        if let Some(year) = &self.year {
            if year.len() != n {
                return Err(invalid!("year column has the wrong length"));
            }
        }
        if self.y.iter().chain(self.x.iter()).any(|v| !v.is_finite()) {
            return Err(invalid!("regression data contains non-finite values"));
        }
        Ok(())
    }
}

/// Indicator coding of one grouping factor.
#[derive(Debug, Clone)]
struct Level {
    name: String,
    labels: Vec<String>,
    index: Vec<usize>,
}

impl Level {
    fn new(name: &str, values: &[String]) -> Self {
        let labels: Vec<String> = values.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let lookup: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let index = values.iter().map(|v| lookup[v.as_str()]).collect();
        Self {
            name: name.into(),
            labels,
            index,
        }
    }
}

/// Fixed effects plus all but the last grouping level form the dense
/// block; the last level is kept as a group index.
struct Design {
    fixed_names: Vec<String>,
    baseline_year: Option<i32>,
    year_columns: Vec<(i32, usize)>,
    dense_levels: Vec<(Level, std::ops::Range<usize>)>,
    last: Option<Level>,
    dense: DMatrix<f64>,
}

impl Design {
    fn build(data: &RegressionData, spec: &ModelSpec) -> Result<Self> {
        let n = data.n();
        let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
        let mut fixed_names = vec!["intercept".to_string()];
        for (j, name) in data.predictors.iter().enumerate() {
            cols.push(data.x.column(j).iter().copied().collect());
            fixed_names.push(name.clone());
        }
        let mut baseline_year = None;
        let mut year_columns = Vec::new();
        if spec.year_fixed_effects {
            let years = data
                .year
                .as_ref()
                .ok_or_else(|| invalid!("year fixed effects need a year column"))?;
            let distinct: BTreeSet<i32> = years.iter().copied().collect();
            let mut it = distinct.into_iter();
            baseline_year = it.next();
            for y in it {
                year_columns.push((y, cols.len()));
                cols.push(years.iter().map(|&t| if t == y { 1.0 } else { 0.0 }).collect());
                fixed_names.push(format!("year_{y}"));
            }
        }
        check_full_rank(&cols, &fixed_names)?;

        let mut levels = match spec.grouping {
            Grouping::None => vec![],
            Grouping::Region => vec![Level::new("region", &data.region)],
            Grouping::RegionAndCountry => vec![
                Level::new("region", &data.region),
                Level::new("region:country", &data.country),
            ],
        };
        let last = levels.pop();
        let mut dense_levels = Vec::new();
        for level in levels {
            let start = cols.len();
            for g in 0..level.labels.len() {
                cols.push(level.index.iter().map(|&i| if i == g { 1.0 } else { 0.0 }).collect());
            }
            let range = start..cols.len();
            dense_levels.push((level, range));
        }
        let dense = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        Ok(Self {
            fixed_names,
            baseline_year,
            year_columns,
            dense_levels,
            last,
            dense,
        })
    }

    fn n_fixed(&self) -> usize {
        self.fixed_names.len()
    }

    fn level_names(&self) -> Vec<String> {
        self.dense_levels
            .iter()
            .map(|(l, _)| l.name.clone())
            .chain(self.last.iter().map(|l| l.name.clone()))
            .collect()
    }
}

fn check_full_rank(cols: &[Vec<f64>], names: &[String]) -> Result<()> {
    let k = cols.len();
    let norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(j) = norms.iter().position(|&s| s == 0.0) {
        return Err(Error::Numerical(format!(
            "fixed-effect column {} is all zero",
            names[j]
        )));
    }
    let gram = DMatrix::from_fn(k, k, |a, b| {
        cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum::<f64>() / (norms[a] * norms[b])
    });
    let eig = sym_eigen(&gram)?;
    let smallest = eig.eigenvalues[k - 1];
    if smallest < 1e-10 * eig.eigenvalues[0] {
        return Err(Error::Singular {
            smallest_eigenvalue: smallest,
        });
    }
    Ok(())
}

/// Sufficient statistics that do not change between sweeps.
struct Cross {
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    /// Dense columns against last-level indicators.
    xtz: DMatrix<f64>,
    counts: DVector<f64>,
    zty: DVector<f64>,
}

impl Cross {
    fn new(design: &Design, y: &DVector<f64>) -> Self {
        let x = &design.dense;
        let xtx = x.transpose() * x;
        let xty = x.transpose() * y;
        let groups = design.last.as_ref().map_or(0, |l| l.labels.len());
        let mut xtz = DMatrix::zeros(x.ncols(), groups);
        let mut counts = DVector::zeros(groups);
        let mut zty = DVector::zeros(groups);
        if let Some(level) = &design.last {
            for (i, &g) in level.index.iter().enumerate() {
                counts[g] += 1.0;
                zty[g] += y[i];
                for j in 0..x.ncols() {
                    xtz[(j, g)] += x[(i, j)];
                }
            }
        }
        Self {
            xtx,
            xty,
            xtz,
            counts,
            zty,
        }
    }
}

/// Post-warmup draws, indexed `[chain][parameter][iteration]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draws {
    pub names: Vec<String>,
    pub chains: Vec<Vec<Vec<f64>>>,
}

impl Draws {
    pub fn parameter_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn pooled(&self, param: usize) -> Vec<f64> {
        self.chains.iter().flat_map(|c| c[param].iter().copied()).collect()
    }

    pub fn per_chain(&self, param: usize) -> Vec<&[f64]> {
        self.chains.iter().map(|c| c[param].as_slice()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("chain,iteration");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (c, chain) in self.chains.iter().enumerate() {
            let len = chain.first().map_or(0, Vec::len);
            for t in 0..len {
                out.push_str(&format!("{c},{t}"));
                for p in chain {
                    out.push(',');
                    out.push_str(&fmt_num(p[t]));
                }
                out.push('\n');
            }
        }
        out
    }
}

fn draw_variance<R: Rng>(rng: &mut R, prior: &Prior, count: usize, sum_sq: f64, floor: f64) -> f64 {
    let shape = prior.variance_shape + 0.5 * count as f64;
    let rate = prior.variance_scale + 0.5 * sum_sq;
    let precision = Gamma::new(shape, 1.0 / rate)
        .expect("positive gamma parameters")
        .sample(rng);
    (1.0 / precision).max(floor)
}

fn normal_vector<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn run_chain(
    design: &Design,
    stats: &Cross,
    y: &DVector<f64>,
    spec: &ModelSpec,
    chain: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(chain as u64);

    let n = y.len();
    let d = design.dense.ncols();
    let n_fixed = design.n_fixed();
    let n_levels = design.dense_levels.len() + usize::from(design.last.is_some());
    let y_mean = y.mean();
    let y_var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
    if !(y_var > 0.0) {
        return Err(Error::Numerical(format!("outcome {} is constant", spec.outcome)));
    }
    let floor = 1e-10 * y_var;
    let prior = &spec.prior;
    let coef_precision = prior.coefficient_sd.powi(-2);

    // overdispersed starting variances, one set per chain
    let mut jitter = || {
        let e: f64 = StandardNormal.sample(&mut rng);
        y_var * e.exp()
    };
    let mut sigma2 = jitter();
    let mut tau: Vec<f64> = (0..n_levels).map(|_| jitter()).collect();

    let n_params = n_fixed + n_levels + 1;
    let keep = spec.iterations - spec.warmup;
    let mut out = vec![Vec::with_capacity(keep); n_params];

    for iter in 0..spec.iterations {
        let inv_s2 = 1.0 / sigma2;
        let mut a = &stats.xtx * inv_s2;
        let mut r = &stats.xty * inv_s2;
        for j in 0..n_fixed {
            a[(j, j)] += coef_precision;
            r[j] += coef_precision * prior.coefficient_mean;
        }
        for (l, (_, range)) in design.dense_levels.iter().enumerate() {
            for j in range.clone() {
                a[(j, j)] += 1.0 / tau[l];
            }
        }
        // integrate the last level out of the dense block
        let last_diag = stats.counts.map(|c| c * inv_s2 + 1.0 / tau[n_levels - 1]);
        let last_rhs = &stats.zty * inv_s2;
        if design.last.is_some() {
            let mut scaled = &stats.xtz * inv_s2;
            for (g, mut col) in scaled.column_iter_mut().enumerate() {
                col /= last_diag[g].sqrt();
            }
            a -= &scaled * scaled.transpose();
            let weights = last_rhs.component_div(&last_diag) * inv_s2;
            r -= &stats.xtz * weights;
        }
        let chol = a
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("posterior precision is not positive definite".into()))?;
        let mean = chol.solve(&r);
        let z = normal_vector(&mut rng, d);
        let theta = mean
            + chol
                .l()
                .tr_solve_lower_triangular(&z)
                .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;

        let mut fitted = &design.dense * &theta;
        if let Some(level) = &design.last {
            let cross = stats.xtz.transpose() * &theta * inv_s2;
            let u: Vec<f64> = (0..last_diag.len())
                .map(|g| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    (last_rhs[g] - cross[g]) / last_diag[g] + e / last_diag[g].sqrt()
                })
                .collect();
            for (i, &g) in level.index.iter().enumerate() {
                fitted[i] += u[g];
            }
            let ss: f64 = u.iter().map(|v| v * v).sum();
            tau[n_levels - 1] = draw_variance(&mut rng, prior, u.len(), ss, floor);
        }
        for (l, (_, range)) in design.dense_levels.iter().enumerate() {
            let ss: f64 = range.clone().map(|j| theta[j] * theta[j]).sum();
            tau[l] = draw_variance(&mut rng, prior, range.len(), ss, floor);
        }
        let sse = (y - &fitted).norm_squared();
        sigma2 = draw_variance(&mut rng, prior, n, sse, floor);

        if iter >= spec.warmup {
            for j in 0..n_fixed {
                out[j].push(theta[j]);
            }
            for (l, t) in tau.iter().enumerate() {
                out[n_fixed + l].push(t.sqrt());
            }
            out[n_params - 1].push(sigma2.sqrt());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub estimate: f64,
    pub sd: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

/// Percentile of sorted data by linear interpolation between order
/// statistics at position `(n - 1) * q`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, standard deviation and central 95% interval of a set of draws.
pub fn summarize(draws: &[f64]) -> Summary {
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    Summary {
        estimate: mean,
        sd: var.sqrt(),
        ci95_low: percentile(&sorted, 0.025),
        ci95_high: percentile(&sorted, 0.975),
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn split_halves<'a>(chains: &[&'a [f64]]) -> Vec<&'a [f64]> {
    chains
        .iter()
        .flat_map(|c| {
            let half = c.len() / 2;
            [&c[..half], &c[c.len() - half..]]
        })
        .collect()
}

/// Split R-hat: each chain is cut in half and the halves are compared as
/// separate chains.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let halves = split_halves(chains);
    let n = halves[0].len() as f64;
    let stats: Vec<(f64, f64)> = halves.iter().map(|h| mean_var(h)).collect();
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
    let b = n * mean_var(&means).1;
    let var_plus = (n - 1.0) / n * w + b / n;
    if w > 0.0 {
        (var_plus / w).sqrt()
    } else if var_plus > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

fn autocovariance(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    (0..n - lag).map(|t| (x[t] - m) * (x[t + lag] - m)).sum::<f64>() / n as f64
}

/// Effective sample size over all chains, with autocorrelations combined
/// across chains and truncated by Geyer's initial monotone sequence.
pub fn effective_sample_size(chains: &[&[f64]]) -> f64 {
    let m = chains.len() as f64;
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let total = m * n as f64;
    if n < 4 {
        return total;
    }
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| mean_var(&c[..n])).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m;
    let b_over_n = if chains.len() > 1 {
        mean_var(&stats.iter().map(|s| s.0).collect::<Vec<_>>()).1
    } else {
        0.0
    };
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    if !(var_plus > 0.0) {
        return total;
    }
    let rho = |lag: usize| {
        let acov = chains.iter().map(|c| autocovariance(&c[..n], lag)).sum::<f64>() / m;
        1.0 - (w - acov) / var_plus
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    total / tau.max(1.0 / total.log10().max(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub estimate: f64,
    pub sd: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub rhat: f64,
    pub ess: f64,
    pub mcse: f64,
}

impl ParameterSummary {
    fn from_chains(name: &str, chains: &[&[f64]]) -> Self {
        let pooled: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
        let s = summarize(&pooled);
        let ess = effective_sample_size(chains);
        Self {
            name: name.into(),
            estimate: s.estimate,
            sd: s.sd,
            ci95_low: s.ci95_low,
            ci95_high: s.ci95_high,
            rhat: split_rhat(chains),
            ess,
            mcse: s.sd / ess.sqrt(),
        }
    }

    fn exact_zero(name: String, draws: usize) -> Self {
        Self {
            name,
            estimate: 0.0,
            sd: 0.0,
            ci95_low: 0.0,
            ci95_high: 0.0,
            rhat: 1.0,
            ess: draws as f64,
            mcse: 0.0,
        }
    }

    pub fn excludes_zero(&self) -> bool {
        self.ci95_low > 0.0 || self.ci95_high < 0.0
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci95_low <= value && value <= self.ci95_high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCount {
    pub level: String,
    pub groups: usize,
}

/// Posterior summaries laid out like a regression table: fixed effects,
/// year effects (baseline included at exactly 0), random-intercept
/// standard deviations and the residual standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub outcome: String,
    pub n_obs: usize,
    pub grouping: Grouping,
    pub groups: Vec<GroupCount>,
    pub fixed_effects: Vec<ParameterSummary>,
    pub year_effects: Vec<ParameterSummary>,
    pub baseline_year: Option<i32>,
    pub random_effect_sds: Vec<ParameterSummary>,
    pub residual_sd: ParameterSummary,
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    pub prior: Prior,
    pub max_rhat: f64,
    pub rhat_warning: bool,
    pub warnings: Vec<String>,
}

impl Posterior {
    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.fixed_effects
            .iter()
            .chain(&self.year_effects)
            .chain(&self.random_effect_sds)
            .chain(std::iter::once(&self.residual_sd))
            .find(|p| p.name == name)
    }

    /// Effect of `year` relative to the baseline; 0 for the baseline itself.
    pub fn year_effect(&self, year: i32) -> Option<f64> {
        self.parameter(&format!("year_{year}")).map(|p| p.estimate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub posterior: Posterior,
    pub draws: Draws,
}

/// Runs `spec.chains` independent chains. Chain `c` draws from the ChaCha8
/// stream `c` of `spec.seed`, so results do not depend on thread scheduling.
pub fn fit(data: &RegressionData, spec: &ModelSpec) -> Result<Fit> {
    spec.validate()?;
    data.validate()?;
    if data.n() < 3 {
        return Err(invalid!("regression needs at least 3 observations, got {}", data.n()));
    }
    let design = Design::build(data, spec)?;
    let y = DVector::from_column_slice(&data.y);
    let stats = Cross::new(&design, &y);

    let results: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..spec.chains)
            .map(|c| {
                let (design, stats, y) = (&design, &stats, &y);
                s.spawn(move || run_chain(design, stats, y, spec, c))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sampler thread panicked"))
            .collect()
    });
    let chains = results.into_iter().collect::<Result<Vec<_>>>()?;

    let level_names = design.level_names();
    let mut names = design.fixed_names.clone();
    names.extend(level_names.iter().map(|l| format!("sd({l})")));
    names.push("sigma".into());
    let draws = Draws { names, chains };
    if draws.chains.iter().flatten().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("sampler produced non-finite draws".into()));
    }

    let summary = |j: usize| ParameterSummary::from_chains(&draws.names[j], &draws.per_chain(j));
    let n_fixed = design.n_fixed();
    let year_start = 1 + data.predictors.len();
    let fixed_effects = (0..year_start).map(summary).collect();
    let mut year_effects = Vec::new();
    if let Some(base) = design.baseline_year {
        let total = spec.chains * (spec.iterations - spec.warmup);
        year_effects.push(ParameterSummary::exact_zero(format!("year_{base}"), total));
        year_effects.extend(design.year_columns.iter().map(|&(_, j)| summary(j)));
    }
    let random_effect_sds = (0..level_names.len()).map(|l| summary(n_fixed + l)).collect();
    let residual_sd = summary(draws.names.len() - 1);

    let mut groups: Vec<GroupCount> = design
        .dense_levels
        .iter()
        .map(|(l, _)| GroupCount {
            level: l.name.clone(),
            groups: l.labels.len(),
        })
        .collect();
    groups.extend(design.last.iter().map(|l| GroupCount {
        level: l.name.clone(),
        groups: l.labels.len(),
    }));

    let mut posterior = Posterior {
        outcome: data.outcome.clone(),
        n_obs: data.n(),
        grouping: spec.grouping,
        groups,
        fixed_effects,
        year_effects,
        baseline_year: design.baseline_year,
        random_effect_sds,
        residual_sd,
        chains: spec.chains,
        iterations: spec.iterations,
        warmup: spec.warmup,
        seed: spec.seed,
        prior: spec.prior.clone(),
        max_rhat: 1.0,
        rhat_warning: false,
        warnings: Vec::new(),
    };
    let all: Vec<(String, f64)> = posterior
        .fixed_effects
        .iter()
        .chain(&posterior.year_effects)
        .chain(&posterior.random_effect_sds)
        .chain(std::iter::once(&posterior.residual_sd))
        .map(|p| (p.name.clone(), p.rhat))
        .collect();
    posterior.max_rhat = all.iter().map(|p| p.1).fold(1.0, f64::max);
    for (name, rhat) in all {
        if !(rhat <= RHAT_WARNING) {
            posterior.rhat_warning = true;
            posterior.warnings.push(format!("R-hat for {name} is {rhat:.3}"));
        }
    }
    Ok(Fit { posterior, draws })
}
