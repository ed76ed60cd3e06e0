//! Seeded synthetic panels with a known two-factor structure.
//!
//! Each country draws two independent standard-normal latent factors
//! (capacity, governance). Indicator `j` has latent value
//! `v_j = l_j1 f1 + l_j2 f2 + noise_sd * sqrt(1 - h_j^2) e_j`, so with
//! `noise_sd = 1` the standardized loadings of the collapsed cross-section
//! equal the generator loadings, and with `noise_sd = 0` the indicators are
//! exactly rank 2 in latent space. Each year adds `year_noise_sd` jitter.
//! Count indicators are `exp(location + scale * v)` so the log pipeline is
//! exercised; level indicators are `location + scale * v`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::panel::{Country, Panel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorKind {
    Count,
    Level,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSpec {
    pub name: String,
    pub loadings: [f64; 2],
    pub kind: IndicatorKind,
    pub location: f64,
    pub scale: f64,
    /// Probability that a country-year cell (other than the first year) is blank.
    #[serde(default)]
    pub missing_rate: f64,
}

/// Outcome generated as
/// `exp(log_intercept + capacity_coef f1 + governance_coef f2 + region + country + residual)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub name: String,
    pub log_intercept: f64,
    pub capacity_coef: f64,
    pub governance_coef: f64,
    pub region_sd: f64,
    pub country_sd: f64,
    pub residual_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub indicators: Vec<IndicatorSpec>,
    pub noise_sd: f64,
    pub year_noise_sd: f64,
    pub region_count: usize,
    pub first_year: i32,
    pub outcome: Option<OutcomeSpec>,
    /// Extra sparse columns present in the file but dropped by the dictionary.
    #[serde(default)]
    pub sparse_columns: Vec<String>,
}

impl FactorSpec {
    /// Fourteen research and governance indicators on two factors, with
    /// locations and scales in the ranges of real country indicators.
    pub fn research_indicators() -> Self {
        use IndicatorKind::*;
        let ind = |name: &str, l1, l2, kind, location, scale, missing_rate| IndicatorSpec {
            name: name.to_string(),
            loadings: [l1, l2],
            kind,
            location,
            scale,
            missing_rate,
        };
        FactorSpec {
            indicators: vec![
                ind("RD", 0.668, 0.213, Count, 19.0, 2.5, 0.0),
                ind("ResPatent", 0.896, 0.149, Count, 6.0, 1.8, 0.0),
                ind("AcadInst", 0.962, 0.089, Count, 4.5, 1.1, 0.02),
                ind("NonAcadInst", 0.873, 0.269, Count, 4.3, 1.1, 0.02),
                ind("Authors", 0.981, 0.153, Count, 8.0, 2.0, 0.02),
                ind("Pubs", 0.978, 0.166, Count, 6.9, 2.2, 0.02),
                ind("IntlPubs", 0.974, 0.195, Count, 6.0, 1.9, 0.02),
                ind("OpenInternet", 0.044, 0.772, Level, 0.387, 1.511, 0.03),
                ind("RuleLaw", 0.274, 0.917, Level, 0.555, 0.303, 0.03),
                ind("RegQuality", 0.472, 0.764, Level, -0.118, 0.993, 0.03),
                ind("PolitStability", 0.119, 0.713, Level, -0.205, 0.951, 0.03),
                ind("NonCorrupt", 0.398, 0.754, Level, -0.115, 1.005, 0.03),
                ind("Polyarchy", 0.146, 0.911, Level, 0.527, 0.25, 0.03),
                ind("AcadFreedom", 0.009, 0.814, Level, 0.638, 0.289, 0.03),
            ],
            noise_sd: 1.0,
            year_noise_sd: 0.05,
            region_count: 10,
            first_year: 2013,
            outcome: Some(OutcomeSpec {
                name: "FWCI".to_string(),
                log_intercept: (0.75f64).ln(),
                capacity_coef: 0.08,
                governance_coef: 0.15,
                region_sd: 0.15,
                country_sd: 0.12,
                residual_sd: 0.06,
            }),
            sparse_columns: vec!["TertiaryEnrol".to_string()],
        }
    }

    pub fn loading_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.indicators.len(), 2, |i, j| self.indicators[i].loadings[j])
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Deterministic synthetic panel for the given seed.
pub fn generate_synthetic_panel(seed: u64, n_countries: usize, n_years: usize, spec: &FactorSpec) -> Result<Panel> {
    if n_countries == 0 || n_years == 0 || spec.region_count == 0 {
        return Err(invalid!(
            "synthetic panel needs positive dimensions (countries {n_countries}, years {n_years}, regions {})",
            spec.region_count
        ));
    }
    if spec.noise_sd < 0.0 || spec.year_noise_sd < 0.0 {
        return Err(invalid!("noise standard deviations must be non-negative"));
    }
    for ind in &spec.indicators {
        let h2 = ind.loadings[0].powi(2) + ind.loadings[1].powi(2);
        if h2 > 1.0 {
            return Err(invalid!("indicator {} has communality {h2} > 1", ind.name));
        }
        if !(0.0..1.0).contains(&ind.missing_rate) {
            return Err(invalid!("indicator {} missing rate outside [0, 1)", ind.name));
        }
    }

    let width = n_countries.to_string().len().max(3);
    let countries: Vec<Country> = (0..n_countries)
        .map(|c| Country {
            code: format!("C{:0width$}", c + 1),
            name: format!("Country {:0width$}", c + 1),
            region: format!("Region {:02}", c % spec.region_count + 1),
        })
        .collect();

    let mut variables: Vec<String> = spec.indicators.iter().map(|i| i.name.clone()).collect();
    if let Some(o) = &spec.outcome {
        variables.push(o.name.clone());
    }
    variables.extend(spec.sparse_columns.iter().cloned());

    let last_year = spec.first_year + n_years as i32 - 1;
    let mut panel = Panel::empty(countries, spec.first_year, last_year, variables)?;
    let n_ind = spec.indicators.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let region_effects: Vec<f64> = (0..spec.region_count)
        .map(|_| spec.outcome.as_ref().map_or(0.0, |o| o.region_sd * gauss(&mut rng)))
        .collect();

    // Country codes are generated in sorted order, so index c is row c.
    for c in 0..n_countries {
        let f = [gauss(&mut rng), gauss(&mut rng)];
        let latent: Vec<f64> = spec
            .indicators
            .iter()
            .map(|ind| {
                let h2 = ind.loadings[0].powi(2) + ind.loadings[1].powi(2);
                let unique = spec.noise_sd * (1.0 - h2).sqrt() * gauss(&mut rng);
                ind.loadings[0] * f[0] + ind.loadings[1] * f[1] + unique
            })
            .collect();
        let country_effect = spec.outcome.as_ref().map_or(0.0, |o| o.country_sd * gauss(&mut rng));
        let region = region_effects[c % spec.region_count];

        for t in 0..n_years {
            for (j, ind) in spec.indicators.iter().enumerate() {
                let x = latent[j] + spec.year_noise_sd * gauss(&mut rng);
                let value = match ind.kind {
                    IndicatorKind::Count => (ind.location + ind.scale * x).exp(),
                    IndicatorKind::Level => ind.location + ind.scale * x,
                };
                let blank = t > 0 && ind.missing_rate > 0.0 && rng.random::<f64>() < ind.missing_rate;
                panel.set(c, t, j, if blank { None } else { Some(value) });
            }
            let mut next = n_ind;
            if let Some(o) = &spec.outcome {
                let eta = o.log_intercept
                    + o.capacity_coef * f[0]
                    + o.governance_coef * f[1]
                    + region
                    + country_effect
                    + o.residual_sd * gauss(&mut rng);
                panel.set(c, t, next, Some(eta.exp()));
                next += 1;
            }
            for k in 0..spec.sparse_columns.len() {
                let v = 50.0 + 10.0 * gauss(&mut rng);
                let keep = rng.random::<f64>() < 0.3;
                panel.set(c, t, next + k, keep.then_some(v));
            }
        }
    }
    Ok(panel)
}
