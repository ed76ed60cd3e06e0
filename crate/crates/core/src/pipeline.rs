//! File-based analysis stages. Each stage reads only files written by
//! earlier stages inside one output directory, so any stage can be rerun
//! or checked in isolation.
//!
//! Stage order: ingest, describe, adequacy, efa, reliability, index, rank,
//! regress.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bayes::{self, filter_low_pub, Grouping, ModelSpec, RegressionData};
use crate::error::{invalid, Error, Result};
use crate::factor::{
    adequacy as adequacy_report, fit_efa, loading_table, regression_scores, scree, FactorModel, PafOptions,
    VarimaxOptions,
};
use crate::index::{
    build_index, rank as rank_scores, summative_index, AggregationMethod, IndexColumn, IndexScores, ScoreSeries,
};
use crate::matrix::{pearson_corr, zscore, CorrelationMatrix};
use crate::panel::{
    apply_missing_policy, apply_transforms, collapse_to_cross_section, describe as describe_table, exclude_incomplete,
    CrossSection, DataDictionary, Panel,
};
use crate::reliability::reliability as reliability_report;
use crate::report::{rank_strips_svg, scree_svg, sha256_file, FileDigest, RunManifest, StageRecord};

pub const DICTIONARY: &str = "ingest/dictionary.json";
pub const PANEL: &str = "ingest/panel_imputed.csv";
pub const CROSS_SECTION: &str = "ingest/cross_section.csv";
pub const EXCLUSIONS: &str = "ingest/exclusions.json";
pub const ADEQUACY: &str = "adequacy/adequacy.json";
pub const SCREE: &str = "adequacy/scree.json";
pub const SCREE_SVG: &str = "adequacy/scree.svg";
pub const FACTOR_MODEL: &str = "efa/factor_model.json";
pub const RELIABILITY: &str = "reliability/reliability.json";
pub const MANIFEST: &str = "manifest.json";

/// Column holding publication counts, used by the regression filter.
pub const PUBLICATION_VARIABLE: &str = "Pubs";

pub fn index_file(method: AggregationMethod) -> String {
    format!("index/index_{}.csv", method.as_str())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    fn ext(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Output directory shared by all stages.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
    pub format: OutputFormat,
}

/// What one stage read and wrote, plus a short machine-readable summary.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: &'static str,
    pub consumes: Vec<String>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub summary: serde_json::Value,
}

impl StageOutcome {
    fn new(stage: &'static str, consumes: &[&str]) -> Self {
        Self {
            stage,
            consumes: consumes.iter().map(|s| s.to_string()).collect(),
            outputs: Vec::new(),
            warnings: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>, format: OutputFormat) -> Self {
        Self {
            root: root.into(),
            format,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Path of a prior-stage output; missing files are a usage error.
    fn require(&self, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if p.is_file() {
            Ok(p)
        } else {
            Err(invalid!(
                "missing stage output {}; run the stage that produces it first",
                p.display()
            ))
        }
    }

    fn write(&self, out: &mut StageOutcome, rel: &str, contents: &str) -> Result<()> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
        out.outputs.push(rel.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&self, out: &mut StageOutcome, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(out, rel, &text)
    }

    /// Writes a report table as CSV or JSON according to the workspace format.
    fn write_table<T: Serialize>(&self, out: &mut StageOutcome, stem: &str, csv: &str, value: &T) -> Result<()> {
        let rel = format!("{stem}.{}", self.format.ext());
        match self.format {
            OutputFormat::Csv => self.write(out, &rel, csv),
            OutputFormat::Json => self.write_json(out, &rel, value),
        }
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self, rel: &str) -> Result<T> {
        let p = self.require(rel)?;
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn dictionary(&self) -> Result<DataDictionary> {
        DataDictionary::load(self.require(DICTIONARY)?)
    }

    pub fn cross_section(&self) -> Result<CrossSection> {
        CrossSection::load(self.require(CROSS_SECTION)?)
    }

    pub fn imputed_panel(&self, dict: &DataDictionary) -> Result<Panel> {
        let p = self.require(PANEL)?;
        let file = fs::File::open(&p).map_err(|e| Error::io(&p, e))?;
        Panel::read_csv(file, &dict.working())
    }

    pub fn factor_model(&self) -> Result<FactorModel> {
        self.read_json(FACTOR_MODEL)
    }

    pub fn index(&self, method: AggregationMethod) -> Result<IndexScores> {
        let p = self.require(&index_file(method))?;
        let file = fs::File::open(&p).map_err(|e| Error::io(&p, e))?;
        IndexScores::from_csv(file, method)
    }
}

/// Loads the raw panel, drops countries that cannot be imputed, applies
/// missing-data policies, then collapses to country means and transforms.
pub fn ingest(ws: &Workspace, data: &Path, dictionary: &Path) -> Result<StageOutcome> {
    let dict = DataDictionary::load(dictionary)?;
    let file = fs::File::open(data).map_err(|e| Error::io(data, e))?;
    let raw = Panel::read_csv(file, &dict)?;
    let missing_before = raw.missing_count();
    let (panel, exclusions) = exclude_incomplete(&raw, &dict)?;
    let imputed = apply_missing_policy(&panel, &dict)?;
    let collapsed = collapse_to_cross_section(&imputed, imputed.first_year, imputed.last_year)?;
    let cs = apply_transforms(&collapsed, &dict)?;

    let mut out = StageOutcome::new("ingest", &[]);
    ws.write(&mut out, DICTIONARY, &(dict.to_json() + "\n"))?;
    let mut buf = Vec::new();
    imputed.write_csv(&mut buf)?;
    ws.write(&mut out, PANEL, std::str::from_utf8(&buf).expect("csv is utf-8"))?;
    ws.write(&mut out, CROSS_SECTION, &cs.to_csv())?;
    ws.write_json(&mut out, EXCLUSIONS, &exclusions)?;
    out.warnings = exclusions
        .iter()
        .map(|e| format!("excluded {}: {}", e.country_code, e.reason))
        .collect();
    out.summary = json!({
        "countries": cs.n_countries(),
        "years": [imputed.first_year, imputed.last_year],
        "variables": cs.variables,
        "missing_cells_imputed": missing_before,
        "excluded": exclusions.len(),
    });
    Ok(out)
}

fn analysis_matrix(cs: &CrossSection, dict: &DataDictionary) -> Result<(Vec<String>, DMatrix<f64>)> {
    let vars = dict.analysis_variables();
    let data = cs.select(&vars)?;
    Ok((vars, data))
}

fn analysis_corr(cs: &CrossSection, dict: &DataDictionary) -> Result<CorrelationMatrix> {
    let (vars, data) = analysis_matrix(cs, dict)?;
    pearson_corr(&data, &vars)
}

fn relabeled(corr: &CorrelationMatrix, dict: &DataDictionary) -> CorrelationMatrix {
    CorrelationMatrix {
        variables: corr.variables.iter().map(|v| dict.label(v)).collect(),
        values: corr.values.clone(),
    }
}

/// Descriptive statistics for every variable and the correlogram matrix of
/// the analysis variables.
pub fn describe(ws: &Workspace) -> Result<StageOutcome> {
    let dict = ws.dictionary()?;
    let cs = ws.cross_section()?;
    let mut out = StageOutcome::new("describe", &[DICTIONARY, CROSS_SECTION]);
    let table = describe_table(&cs)?.relabel(&dict);
    ws.write_table(&mut out, "describe/descriptives", &table.to_csv(), &table)?;
    let corr = relabeled(&analysis_corr(&cs, &dict)?, &dict);
    ws.write_table(&mut out, "describe/correlation", &corr.to_csv(), &corr)?;
    out.summary = json!({ "variables": table.rows.len(), "countries": cs.n_countries() });
    Ok(out)
}

/// KMO, Bartlett and the scree eigenvalues.
pub fn adequacy(ws: &Workspace) -> Result<StageOutcome> {
    let dict = ws.dictionary()?;
    let cs = ws.cross_section()?;
    let corr = analysis_corr(&cs, &dict)?;
    let mut out = StageOutcome::new("adequacy", &[DICTIONARY, CROSS_SECTION]);
    let mut report = adequacy_report(&corr, cs.n_countries())?;
    report.variables = report.variables.iter().map(|v| dict.label(v)).collect();
    let sc = scree(&corr)?;
    if report.overall_msa < 0.5 {
        out.warnings
            .push(format!("overall MSA {:.3} is below 0.5", report.overall_msa));
    }
    ws.write_json(&mut out, ADEQUACY, &report)?;
    ws.write_json(&mut out, SCREE, &sc)?;
    ws.write(
        &mut out,
        SCREE_SVG,
        &scree_svg(&sc.eigenvalues, &sc.cumulative_variance_proportion),
    )?;
    out.summary = json!({
        "overall_msa": report.overall_msa,
        "bartlett_chi2": report.bartlett_chi2,
        "bartlett_df": report.bartlett_df,
        "bartlett_p": report.bartlett_p,
        "eigenvalues_above_one": sc.n_factors_kaiser,
    });
    Ok(out)
}

/// Principal-axis extraction of `factors` factors with varimax rotation.
pub fn efa(ws: &Workspace, factors: usize) -> Result<StageOutcome> {
    let dict = ws.dictionary()?;
    let cs = ws.cross_section()?;
    let (vars, data) = analysis_matrix(&cs, &dict)?;
    if factors == 0 || factors >= vars.len() {
        return Err(invalid!(
            "number of factors must be between 1 and {} for {} variables, got {factors}",
            vars.len() - 1,
            vars.len()
        ));
    }
    let corr = pearson_corr(&data, &vars)?;
    let model = fit_efa(&corr, factors, &PafOptions::default(), &VarimaxOptions::default())?;
    let mut out = StageOutcome::new("efa", &[DICTIONARY, CROSS_SECTION]);
    if !model.converged {
        out.warnings.push(format!(
            "extraction stopped after {} iterations without converging",
            model.iterations
        ));
    }
    if !model.rotation_converged {
        out.warnings.push("varimax stopped without converging".into());
    }
    ws.write_json(&mut out, FACTOR_MODEL, &model)?;

    let table = loading_table(&vars, &model.rotated_loadings).relabel(&dict);
    out.warnings.extend(table.warnings.iter().cloned());
    ws.write_table(&mut out, "efa/loadings", &table.to_csv(), &table)?;

    let z = zscore(&data, &vars)?;
    let scores = regression_scores(&z, &corr, &model.rotated_loadings)?;
    let names: Vec<String> = (1..=factors).map(|f| format!("F{f}")).collect();
    let score_cs = CrossSection {
        countries: cs.countries.clone(),
        variables: names,
        data: scores.scores.clone(),
    };
    ws.write_table(&mut out, "efa/factor_scores", &score_cs.to_csv(), &score_cs.to_json())?;
    out.summary = json!({
        "factors": factors,
        "iterations": model.iterations,
        "rotation_sweeps": model.rotation_sweeps,
        "item_sets": model
            .item_sets()
            .iter()
            .map(|s| s.iter().map(|&j| dict.label(&vars[j])).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    });
    Ok(out)
}

/// Variable names of the capacity and governance item sets.
fn labelled_item_sets(model: &FactorModel, dict: &DataDictionary) -> Result<(Vec<String>, Vec<String>)> {
    let (cap, gov) = model.label_factors(dict)?;
    let sets = model.item_sets();
    let names = |f: usize| sets[f].iter().map(|&j| model.variables[j].clone()).collect();
    Ok((names(cap), names(gov)))
}

/// Alpha, standardized alpha and lambda-6 for the capacity and governance
/// item sets.
pub fn reliability(ws: &Workspace) -> Result<StageOutcome> {
    let dict = ws.dictionary()?;
    let cs = ws.cross_section()?;
    let model = ws.factor_model()?;
    let (cap, gov) = labelled_item_sets(&model, &dict)?;
    let mut out = StageOutcome::new("reliability", &[DICTIONARY, CROSS_SECTION, FACTOR_MODEL]);
    let mut reports = serde_json::Map::new();
    for (name, items) in [("capacity", &cap), ("governance", &gov)] {
        let data = cs.select(items)?;
        let labels: Vec<String> = items.iter().map(|v| dict.label(v)).collect();
        let value = match reliability_report(&data, &labels) {
            Ok(r) => serde_json::to_value(r)?,
            Err(e) => {
                out.warnings.push(format!("{name}: {e}"));
                json!({ "item_set": labels, "error": e.to_string() })
            }
        };
        reports.insert(name.into(), value);
    }
    let reports = serde_json::Value::Object(reports);
    ws.write_json(&mut out, RELIABILITY, &reports)?;
    out.summary = reports;
    Ok(out)
}

/// Factor-score and summative capacity/governance indexes with their
/// interaction.
pub fn index(ws: &Workspace) -> Result<StageOutcome> {
    let dict = ws.dictionary()?;
    let cs = ws.cross_section()?;
    let model = ws.factor_model()?;
    let (cap, gov) = model.label_factors(&dict)?;
    let (vars, data) = analysis_matrix(&cs, &dict)?;
    if vars != model.variables {
        return Err(invalid!(
            "factor model variables do not match the dictionary's analysis variables"
        ));
    }
    let corr = pearson_corr(&data, &vars)?;
    let z = zscore(&data, &vars)?;
    let scores = regression_scores(&z, &corr, &model.rotated_loadings)?;
    let series = |values: Vec<f64>| ScoreSeries::new(cs.countries.clone(), values);
    let column = |f: usize| scores.scores.column(f).iter().copied().collect::<Vec<_>>();
    let by_factor = build_index(
        &series(column(cap))?,
        &series(column(gov))?,
        AggregationMethod::FactorScores,
    )?;

    let sets = model.item_sets();
    let summed = build_index(
        &series(summative_index(&z, &sets[cap])?)?,
        &series(summative_index(&z, &sets[gov])?)?,
        AggregationMethod::Summative,
    )?;

    let mut out = StageOutcome::new("index", &[DICTIONARY, CROSS_SECTION, FACTOR_MODEL]);
    for idx in [&by_factor, &summed] {
        ws.write(&mut out, &index_file(idx.method), &idx.to_csv())?;
    }
    out.summary = json!({ "countries": by_factor.countries.len() });
    Ok(out)
}

/// Rankings of every index column for both aggregation methods, with one
/// three-panel plot per method.
pub fn rank(ws: &Workspace) -> Result<StageOutcome> {
    let methods = [AggregationMethod::FactorScores, AggregationMethod::Summative];
    let consumed: Vec<String> = methods.iter().map(|&m| index_file(m)).collect();
    let consumed_refs: Vec<&str> = consumed.iter().map(String::as_str).collect();
    let mut out = StageOutcome::new("rank", &consumed_refs);
    let mut summary = serde_json::Map::new();
    for method in methods {
        let idx = ws.index(method)?;
        let mut rankings = Vec::new();
        for col in IndexColumn::ALL {
            let ranking = rank_scores(&idx.series(col))?;
            let stem = format!("rank/ranking_{}_{}", method.as_str(), col.as_str());
            ws.write_table(&mut out, &stem, &ranking.to_csv(), &ranking)?;
            summary.insert(
                format!("{}_{}_top3", method.as_str(), col.as_str()),
                json!(ranking.codes().into_iter().take(3).collect::<Vec<_>>()),
            );
            rankings.push((col, ranking));
        }
        let panels: Vec<(&str, &crate::index::Ranking)> = rankings
            .iter()
            .map(|(c, r)| {
                let title = match c {
                    IndexColumn::Capacity => "Capacity",
                    IndexColumn::Governance => "Governance",
                    IndexColumn::Interaction => "Capacity x Governance",
                };
                (title, r)
            })
            .collect();
        let title = match method {
            AggregationMethod::FactorScores => "Factor score country ranks",
            AggregationMethod::Summative => "Summative index country ranks",
        };
        ws.write(
            &mut out,
            &format!("rank/ranks_{}.svg", method.as_str()),
            &rank_strips_svg(title, &panels),
        )?;
    }
    summary.insert("n".into(), json!(ws.index(methods[0])?.countries.len()));
    out.summary = serde_json::Value::Object(summary);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionModel {
    /// Country means, region random intercepts.
    Cross,
    /// Country-years, year fixed effects, region and country random intercepts.
    Panel,
}

impl RegressionModel {
    pub fn as_str(self) -> &'static str {
        match self {
            RegressionModel::Cross => "cross",
            RegressionModel::Panel => "panel",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressSettings {
    pub model: RegressionModel,
    /// Which index supplies Capacity and Governance in the country-level model.
    pub cross_predictors: AggregationMethod,
    pub threshold: f64,
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    pub write_draws: bool,
}

impl RegressSettings {
    pub fn new(model: RegressionModel, seed: u64) -> Self {
        Self {
            model,
            cross_predictors: AggregationMethod::FactorScores,
            threshold: 50.0,
            chains: 4,
            iterations: 2000,
            warmup: 1000,
            seed,
            write_draws: false,
        }
    }

    fn spec(&self, outcome: &str) -> ModelSpec {
        let base = match self.model {
            RegressionModel::Cross => ModelSpec::cross_sectional(self.seed),
            RegressionModel::Panel => ModelSpec::longitudinal(self.seed),
        };
        ModelSpec {
            outcome: outcome.to_string(),
            min_publications: self.threshold,
            chains: self.chains,
            iterations: self.iterations,
            warmup: self.warmup,
            ..base
        }
    }
}

/// Summative capacity and governance scores for every country-year of the
/// panel: items are transformed cell by cell, z-scored over all
/// country-years, averaged and restandardized.
pub fn panel_summative(
    panel: &Panel,
    dict: &DataDictionary,
    capacity: &[String],
    governance: &[String],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let items: Vec<String> = capacity.iter().chain(governance).cloned().collect();
    let n_rows = panel.countries.len() * panel.n_years();
    let mut data = DMatrix::zeros(n_rows, items.len());
    for (j, name) in items.iter().enumerate() {
        let v = panel
            .variable_index(name)
            .ok_or_else(|| invalid!("panel has no variable {name}"))?;
        let spec = dict
            .get(name)
            .ok_or_else(|| invalid!("variable {name} is not in the dictionary"))?;
        for c in 0..panel.countries.len() {
            for t in 0..panel.n_years() {
                let raw = panel
                    .get(c, t, v)
                    .ok_or_else(|| invalid!("panel cell {} {name} is missing", panel.countries[c].code))?;
                data[(c * panel.n_years() + t, j)] = spec.apply(raw).ok_or_else(|| Error::NegativeLog {
                    country: panel.countries[c].code.clone(),
                    variable: name.clone(),
                    value: raw,
                })?;
            }
        }
    }
    let z = zscore(&data, &items)?;
    let cap: Vec<usize> = (0..capacity.len()).collect();
    let gov: Vec<usize> = (capacity.len()..items.len()).collect();
    Ok((summative_index(&z, &cap)?, summative_index(&z, &gov)?))
}

fn regression_data(
    ws: &Workspace,
    settings: &RegressSettings,
    dict: &DataDictionary,
    kept: &BTreeSet<String>,
) -> Result<(RegressionData, AggregationMethod)> {
    let outcome = dict.outcome()?.name.clone();
    let predictors = vec!["Capacity".to_string(), "Governance".to_string()];
    match settings.model {
        RegressionModel::Cross => {
            let idx = ws.index(settings.cross_predictors)?;
            let cs = ws.cross_section()?;
            let y_all = cs.column(&outcome)?;
            let mut rows = Vec::new();
            for (i, c) in idx.countries.iter().enumerate() {
                if !kept.contains(&c.code) {
                    continue;
                }
                let r = cs
                    .countries
                    .iter()
                    .position(|x| x.code == c.code)
                    .ok_or_else(|| invalid!("country {} is in the index but not the cross-section", c.code))?;
                rows.push((i, r));
            }
            let x = DMatrix::from_fn(rows.len(), 2, |k, j| {
                let i = rows[k].0;
                if j == 0 {
                    idx.capacity[i]
                } else {
                    idx.governance[i]
                }
            });
            Ok((
                RegressionData {
                    outcome,
                    predictors,
                    y: rows.iter().map(|&(_, r)| y_all[r]).collect(),
                    x,
                    region: rows.iter().map(|&(i, _)| idx.countries[i].region.clone()).collect(),
                    country: rows.iter().map(|&(i, _)| idx.countries[i].code.clone()).collect(),
                    year: None,
                },
                settings.cross_predictors,
            ))
        }
        RegressionModel::Panel => {
            let model = ws.factor_model()?;
            let (cap_items, gov_items) = labelled_item_sets(&model, dict)?;
            let panel = ws.imputed_panel(dict)?.retain_countries(kept);
            let (cap, gov) = panel_summative(&panel, dict, &cap_items, &gov_items)?;
            let v = panel
                .variable_index(&outcome)
                .ok_or_else(|| invalid!("panel has no outcome variable {outcome}"))?;
            let ny = panel.n_years();
            let n = panel.countries.len() * ny;
            let mut y = Vec::with_capacity(n);
            let (mut region, mut country, mut year) = (Vec::new(), Vec::new(), Vec::new());
            for (c, ctry) in panel.countries.iter().enumerate() {
                for (t, yr) in panel.years().enumerate() {
                    y.push(
                        panel
                            .get(c, t, v)
                            .ok_or_else(|| invalid!("missing outcome for {} {yr}", ctry.code))?,
                    );
                    region.push(ctry.region.clone());
                    country.push(ctry.code.clone());
                    year.push(yr);
                }
            }
            let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { cap[i] } else { gov[i] });
            Ok((
                RegressionData {
                    outcome,
                    predictors,
                    y,
                    x,
                    region,
                    country,
                    year: Some(year),
                },
                AggregationMethod::Summative,
            ))
        }
    }
}

/// Hierarchical regression of the outcome on Capacity and Governance.
pub fn regress(ws: &Workspace, settings: &RegressSettings) -> Result<StageOutcome> {
    let dict = ws.dictionary()?;
    let outcome = dict.outcome()?.name.clone();
    let spec = settings.spec(&outcome);
    spec.validate()?;
    let panel = ws.imputed_panel(&dict)?;
    let filter = filter_low_pub(&panel, PUBLICATION_VARIABLE, settings.threshold)?;
    let (data, method) = regression_data(ws, settings, &dict, &filter.kept_set())?;
    let fit = bayes::fit(&data, &spec)?;

    let consumed: Vec<&str> = match settings.model {
        RegressionModel::Cross => vec![DICTIONARY, PANEL, CROSS_SECTION],
        RegressionModel::Panel => vec![DICTIONARY, PANEL, FACTOR_MODEL],
    };
    let idx_file = index_file(settings.cross_predictors);
    let mut out = StageOutcome::new("regress", &consumed);
    if settings.model == RegressionModel::Cross {
        out.consumes.push(idx_file);
    }
    out.warnings = fit.posterior.warnings.clone();
    let name = settings.model.as_str();
    let doc = json!({
        "model": name,
        "grouping": match spec.grouping {
            Grouping::None => "none",
            Grouping::Region => "region",
            Grouping::RegionAndCountry => "region_and_country",
        },
        "predictor_method": method.as_str(),
        "publication_filter": {
            "variable": PUBLICATION_VARIABLE,
            "threshold": filter.threshold,
            "kept": filter.kept.len(),
            "removed": filter.removed,
        },
        "posterior": fit.posterior,
    });
    ws.write_json(&mut out, &format!("regress/posterior_{name}.json"), &doc)?;
    if settings.write_draws {
        ws.write(&mut out, &format!("regress/draws_{name}.csv"), &fit.draws.to_csv())?;
    }
    let coef = |p: &str| {
        fit.posterior.parameter(p).map(|s| {
            json!({
                "estimate": s.estimate,
                "ci95": [s.ci95_low, s.ci95_high],
            })
        })
    };
    out.summary = json!({
        "model": name,
        "n_obs": data.n(),
        "removed_by_filter": filter.removed.len(),
        "Capacity": coef("Capacity"),
        "Governance": coef("Governance"),
        "max_rhat": fit.posterior.max_rhat,
        "rhat_warning": fit.posterior.rhat_warning,
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub factors: usize,
    pub seed: u64,
    pub threshold: f64,
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub write_draws: bool,
}

impl PipelineConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            factors: 2,
            seed,
            threshold: 50.0,
            chains: 4,
            iterations: 2000,
            warmup: 1000,
            write_draws: false,
        }
    }

    fn regress(&self, model: RegressionModel) -> RegressSettings {
        RegressSettings {
            threshold: self.threshold,
            chains: self.chains,
            iterations: self.iterations,
            warmup: self.warmup,
            write_draws: self.write_draws,
            ..RegressSettings::new(model, self.seed)
        }
    }
}

fn record(ws: &Workspace, outcome: &StageOutcome, seconds: f64) -> Result<StageRecord> {
    let outputs = outcome
        .outputs
        .iter()
        .map(|rel| {
            Ok(FileDigest {
                path: rel.clone(),
                sha256: sha256_file(&ws.path(rel))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StageRecord {
        stage: outcome.stage.to_string(),
        consumes: outcome.consumes.clone(),
        outputs,
        wall_clock_seconds: seconds,
        warnings: outcome.warnings.clone(),
    })
}

/// Runs every stage in order and writes `manifest.json`.
pub fn run_pipeline(
    ws: &Workspace,
    data: &Path,
    dictionary: &Path,
    config: &PipelineConfig,
    command: Vec<String>,
) -> Result<RunManifest> {
    type Stage<'a> = Box<dyn Fn() -> Result<StageOutcome> + 'a>;
    let stages: Vec<Stage> = vec![
        Box::new(|| ingest(ws, data, dictionary)),
        Box::new(|| describe(ws)),
        Box::new(|| adequacy(ws)),
        Box::new(|| efa(ws, config.factors)),
        Box::new(|| reliability(ws)),
        Box::new(|| index(ws)),
        Box::new(|| rank(ws)),
        Box::new(|| regress(ws, &config.regress(RegressionModel::Cross))),
        Box::new(|| regress(ws, &config.regress(RegressionModel::Panel))),
    ];
    let mut records = Vec::new();
    for stage in stages {
        let start = Instant::now();
        let outcome = stage()?;
        records.push(record(ws, &outcome, start.elapsed().as_secs_f64())?);
    }
    let manifest = RunManifest {
        command,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        inputs: vec![FileDigest {
            path: data.display().to_string(),
            sha256: sha256_file(data)?,
        }],
        dictionary: FileDigest {
            path: dictionary.display().to_string(),
            sha256: sha256_file(dictionary)?,
        },
        parameters: json!({
            "factors": config.factors,
            "threshold": config.threshold,
            "chains": config.chains,
            "iterations": config.iterations,
            "warmup": config.warmup,
            "format": ws.format,
            "cross_predictors": AggregationMethod::FactorScores.as_str(),
            "panel_predictors": AggregationMethod::Summative.as_str(),
        }),
        seed: config.seed,
        stages: records,
    };
    let mut sink = StageOutcome::new("manifest", &[]);
    ws.write_json(&mut sink, MANIFEST, &manifest)?;
    Ok(manifest)
}
