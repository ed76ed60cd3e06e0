//! Country-year panel ingest: loading, missing-data policies, within-country
//! collapse, log transforms and descriptive statistics.
//!
//! The expected CSV layout is
//! `country_code,country_name,region,year,<variable columns...>` with one row
//! per country-year and missing values written as empty fields (`NA` is also
//! accepted). Which columns are read, and how each is treated, is driven by a
//! [`DataDictionary`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::report::fmt_num;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    None,
    Log1p,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    RecodeZero,
    CountryMean,
    DropVariable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupHint {
    Capacity,
    Governance,
    Outcome,
    Unassigned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub source_column: String,
    pub transform: Transform,
    pub missing_policy: MissingPolicy,
    pub group_hint: GroupHint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl VariableSpec {
    pub fn new(name: &str, transform: Transform, missing_policy: MissingPolicy, group_hint: GroupHint) -> Self {
        Self {
            name: name.to_string(),
            source_column: name.to_string(),
            transform,
            missing_policy,
            group_hint,
            description: None,
            source: None,
        }
    }

    fn describe(mut self, description: &str, source: &str) -> Self {
        self.description = Some(description.to_string());
        self.source = Some(source.to_string());
        self
    }

    /// Label used in report tables: `ln_<name>` for log-transformed variables.
    pub fn label(&self) -> String {
        match self.transform {
            Transform::Log1p => format!("ln_{}", self.name),
            Transform::None => self.name.clone(),
        }
    }

    pub fn apply(&self, value: f64) -> Option<f64> {
        match self.transform {
            Transform::None => Some(value),
            Transform::Log1p if value >= 0.0 => Some(value.ln_1p()),
            Transform::Log1p => None,
        }
    }
}

/// Ordered list of variable specs; serialized as a bare JSON array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DataDictionary {
    pub variables: Vec<VariableSpec>,
}

impl DataDictionary {
    pub fn new(variables: Vec<VariableSpec>) -> Result<Self> {
        let dict = Self { variables };
        dict.validate()?;
        Ok(dict)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for spec in &self.variables {
            if spec.name.is_empty() || spec.source_column.is_empty() {
                return Err(invalid!("dictionary entry with empty name or source column"));
            }
            if !seen.insert(spec.name.as_str()) {
                return Err(invalid!("variable {} listed twice in dictionary", spec.name));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dict: Self = serde_json::from_str(text)?;
        dict.validate()?;
        Ok(dict)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dictionary serializes")
    }

    pub fn get(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|s| s.name == name)
    }

    pub fn label(&self, name: &str) -> String {
        self.get(name)
            .map(VariableSpec::label)
            .unwrap_or_else(|| name.to_string())
    }

    pub fn names_in_group(&self, group: GroupHint) -> Vec<String> {
        self.variables
            .iter()
            .filter(|s| s.group_hint == group && s.missing_policy != MissingPolicy::DropVariable)
            .map(|s| s.name.clone())
            .collect()
    }

    /// Variables entering the factor analysis: everything retained that is
    /// not the outcome.
    pub fn analysis_variables(&self) -> Vec<String> {
        self.variables
            .iter()
            .filter(|s| s.group_hint != GroupHint::Outcome && s.missing_policy != MissingPolicy::DropVariable)
            .map(|s| s.name.clone())
            .collect()
    }

    /// The retained variables, each read from a column named after itself.
    /// This is the layout of a panel written back out after imputation.
    pub fn working(&self) -> DataDictionary {
        DataDictionary {
            variables: self
                .variables
                .iter()
                .filter(|s| s.missing_policy != MissingPolicy::DropVariable)
                .map(|s| VariableSpec {
                    source_column: s.name.clone(),
                    ..s.clone()
                })
                .collect(),
        }
    }

    /// The single outcome variable; an error unless exactly one is declared.
    pub fn outcome(&self) -> Result<&VariableSpec> {
        let outcomes: Vec<_> = self
            .variables
            .iter()
            .filter(|s| s.group_hint == GroupHint::Outcome)
            .collect();
        match outcomes.as_slice() {
            [one] => Ok(one),
            _ => Err(invalid!(
                "regression needs exactly one outcome variable, dictionary has {}",
                outcomes.len()
            )),
        }
    }
}

/// The default dictionary: the fourteen index indicators, the citation-impact
/// outcome and tertiary enrolment (dropped for coverage).
///
/// RuleLaw is attributed to the World Bank indicators, but its observed
/// 0..1 range resembles V-Dem scaling; both are noted in its description.
pub fn default_dictionary() -> DataDictionary {
    use GroupHint::*;
    use MissingPolicy::*;
    use Transform::*;
    let wb = "World Bank Indicators";
    let scopus = "Scopus/Elsevier";
    let vdem = "Varieties of Democracy";
    let vars = vec![
        VariableSpec::new("RD", Log1p, RecodeZero, Capacity)
            .describe("Gross research and development spending, raw number", wb),
        VariableSpec::new("ResPatent", Log1p, RecodeZero, Capacity)
            .describe("Number of resident patent applications", wb),
        VariableSpec::new("AcadInst", Log1p, CountryMean, Capacity)
            .describe("Number of academic institutions by paper affiliation", scopus),
        VariableSpec::new("NonAcadInst", Log1p, CountryMean, Capacity)
            .describe("Number of non-academic institutions by paper affiliation", scopus),
        VariableSpec::new("Authors", Log1p, CountryMean, Capacity)
            .describe("Number of unique authors by paper affiliation", scopus),
        VariableSpec::new("Pubs", Log1p, CountryMean, Capacity)
            .describe("Number of publications, fractional count", scopus),
        VariableSpec::new("IntlPubs", Log1p, CountryMean, Capacity)
            .describe("Number of internationally co-authored papers, fractional count", scopus),
        VariableSpec::new("OpenInternet", None, CountryMean, Governance)
            .describe("Country approach to regulating or controlling the Internet", vdem),
        VariableSpec::new("RuleLaw", None, CountryMean, Governance).describe(
            "Rule of law: crime, judicial and contract effectiveness (0..1 range resembles V-Dem scaling)",
            "World Bank Indicators or Varieties of Democracy",
        ),
        VariableSpec::new("RegQuality", None, CountryMean, Governance)
            .describe("Regulatory quality: burden of regulation on markets", vdem),
        VariableSpec::new("PolitStability", None, CountryMean, Governance)
            .describe("Political stability: probability of government destabilization", wb),
        VariableSpec::new("NonCorrupt", None, CountryMean, Governance)
            .describe("Control of corruption: use of public power for private gain", wb),
        VariableSpec::new("Polyarchy", None, CountryMean, Governance).describe("Electoral democracy index", vdem),
        VariableSpec::new("AcadFreedom", None, CountryMean, Governance).describe("Academic freedom index", vdem),
        VariableSpec::new("FWCI", None, CountryMean, Outcome)
            .describe("Fractional field-weighted citation impact", scopus),
        VariableSpec::new("TertiaryEnrol", None, DropVariable, Unassigned)
            .describe("Tertiary enrolment; dropped for low coverage", wb),
    ];
    DataDictionary::new(vars).expect("default dictionary is valid")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Country {
    pub code: String,
    pub name: String,
    pub region: String,
}

/// Country x year x variable values, missing cells as `None`.
///
/// Countries are kept sorted by code and the year range is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub countries: Vec<Country>,
    pub first_year: i32,
    pub last_year: i32,
    pub variables: Vec<String>,
    values: Vec<Option<f64>>,
}

impl Panel {
    /// An all-missing panel.
    pub fn empty(mut countries: Vec<Country>, first_year: i32, last_year: i32, variables: Vec<String>) -> Result<Self> {
        if last_year < first_year {
            return Err(invalid!("empty year range {first_year}..={last_year}"));
        }
        countries.sort();
        for w in countries.windows(2) {
            if w[0].code == w[1].code {
                return Err(invalid!("country {} listed twice", w[0].code));
            }
        }
        if let Some(c) = countries.iter().find(|c| c.region.trim().is_empty()) {
            return Err(invalid!("country {} has no region", c.code));
        }
        let n_years = (last_year - first_year + 1) as usize;
        let len = countries.len() * n_years * variables.len();
        Ok(Self {
            countries,
            first_year,
            last_year,
            variables,
            values: vec![None; len],
        })
    }

    pub fn n_years(&self) -> usize {
        (self.last_year - self.first_year + 1) as usize
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.first_year..=self.last_year
    }

    fn offset(&self, country: usize, year: usize, var: usize) -> usize {
        (country * self.n_years() + year) * self.variables.len() + var
    }

    /// Cell by country index, year index (0 = first year) and variable index.
    pub fn get(&self, country: usize, year: usize, var: usize) -> Option<f64> {
        self.values[self.offset(country, year, var)]
    }

    pub fn set(&mut self, country: usize, year: usize, var: usize, value: Option<f64>) {
        let off = self.offset(country, year, var);
        self.values[off] = value;
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    pub fn country_index(&self, code: &str) -> Option<usize> {
        self.countries.binary_search_by(|c| c.code.as_str().cmp(code)).ok()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Loads a panel from a CSV file and a JSON dictionary file.
    pub fn load(csv_path: impl AsRef<Path>, dictionary_path: impl AsRef<Path>) -> Result<Self> {
        let dict = DataDictionary::load(dictionary_path)?;
        let path = csv_path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, &dict)
    }

    pub fn read_csv<R: Read>(reader: R, dict: &DataDictionary) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let fixed = ["country_code", "country_name", "region", "year"];
        let mut fixed_idx = [0usize; 4];
        for (slot, name) in fixed_idx.iter_mut().zip(fixed) {
            *slot = col(name).ok_or_else(|| invalid!("CSV header lacks column {name}"))?;
        }
        let mut var_cols = Vec::with_capacity(dict.variables.len());
        for spec in &dict.variables {
            let idx = col(&spec.source_column).ok_or_else(|| Error::UnknownVariable {
                variable: spec.name.clone(),
                column: spec.source_column.clone(),
            })?;
            var_cols.push(idx);
        }

        struct Row {
            code: String,
            year: i32,
            values: Vec<Option<f64>>,
        }
        let mut countries: BTreeMap<String, Country> = BTreeMap::new();
        let mut seen: BTreeMap<(String, i32), u64> = BTreeMap::new();
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let field = |i: usize| record.get(i).unwrap_or("");
            let code = field(fixed_idx[0]).to_string();
            let name = field(fixed_idx[1]).to_string();
            let region = field(fixed_idx[2]).to_string();
            if code.is_empty() {
                return Err(invalid!("line {line}: empty country_code"));
            }
            if region.is_empty() {
                return Err(invalid!("line {line}: country {code} has no region"));
            }
            let year: i32 = field(fixed_idx[3]).parse().map_err(|_| Error::NonNumeric {
                line,
                column: "year".into(),
                value: field(fixed_idx[3]).into(),
            })?;
            if let Some(first) = seen.insert((code.clone(), year), line) {
                let _ = first;
                return Err(Error::DuplicateRow {
                    country: code,
                    year,
                    line,
                });
            }
            let country = Country {
                code: code.clone(),
                name,
                region,
            };
            match countries.get(&code) {
                Some(existing) if existing != &country => {
                    return Err(invalid!("line {line}: country {code} has inconsistent name or region"));
                }
                Some(_) => {}
                None => {
                    countries.insert(code.clone(), country);
                }
            }
            let mut values = Vec::with_capacity(var_cols.len());
            for (spec, &i) in dict.variables.iter().zip(&var_cols) {
                let raw = field(i);
                if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                    values.push(None);
                } else {
                    let v: f64 = raw.parse().map_err(|_| Error::NonNumeric {
                        line,
                        column: spec.source_column.clone(),
                        value: raw.into(),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::NonNumeric {
                            line,
                            column: spec.source_column.clone(),
                            value: raw.into(),
                        });
                    }
                    values.push(Some(v));
                }
            }
            rows.push(Row { code, year, values });
        }
        if rows.is_empty() {
            return Err(invalid!("CSV has no data rows"));
        }
        let first_year = rows.iter().map(|r| r.year).min().unwrap();
        let last_year = rows.iter().map(|r| r.year).max().unwrap();
        let variables = dict.variables.iter().map(|s| s.name.clone()).collect();
        let mut panel = Panel::empty(countries.into_values().collect(), first_year, last_year, variables)?;
        for row in rows {
            let c = panel.country_index(&row.code).expect("country registered");
            let t = (row.year - first_year) as usize;
            for (v, value) in row.values.into_iter().enumerate() {
                panel.set(c, t, v, value);
            }
        }
        Ok(panel)
    }

    /// Writes the panel in the input CSV layout, one row per country-year.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["country_code", "country_name", "region", "year"];
        header.extend(self.variables.iter().map(String::as_str));
        w.write_record(&header)?;
        for (c, country) in self.countries.iter().enumerate() {
            for (t, year) in self.years().enumerate() {
                let mut rec = vec![
                    country.code.clone(),
                    country.name.clone(),
                    country.region.clone(),
                    year.to_string(),
                ];
                for v in 0..self.variables.len() {
                    rec.push(self.get(c, t, v).map(fmt_num).unwrap_or_default());
                }
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    /// Sum over years of one variable per country (missing cells skipped).
    pub fn totals(&self, variable: &str) -> Result<Vec<f64>> {
        let v = self
            .variable_index(variable)
            .ok_or_else(|| invalid!("panel has no variable {variable}"))?;
        Ok((0..self.countries.len())
            .map(|c| (0..self.n_years()).filter_map(|t| self.get(c, t, v)).sum())
            .collect())
    }

    /// Keeps only the listed countries (by code), preserving order.
    pub fn retain_countries(&self, keep: &BTreeSet<String>) -> Panel {
        let idx: Vec<usize> = (0..self.countries.len())
            .filter(|&c| keep.contains(&self.countries[c].code))
            .collect();
        let mut out = Panel::empty(
            idx.iter().map(|&c| self.countries[c].clone()).collect(),
            self.first_year,
            self.last_year,
            self.variables.clone(),
        )
        .expect("subset of a valid panel");
        for (dst, &src) in idx.iter().enumerate() {
            for t in 0..self.n_years() {
                for v in 0..self.variables.len() {
                    out.set(dst, t, v, self.get(src, t, v));
                }
            }
        }
        out
    }

    fn without_variables(&self, drop: &BTreeSet<usize>) -> Panel {
        let keep: Vec<usize> = (0..self.variables.len()).filter(|v| !drop.contains(v)).collect();
        let mut out = Panel::empty(
            self.countries.clone(),
            self.first_year,
            self.last_year,
            keep.iter().map(|&v| self.variables[v].clone()).collect(),
        )
        .expect("subset of a valid panel");
        for c in 0..self.countries.len() {
            for t in 0..self.n_years() {
                for (dst, &src) in keep.iter().enumerate() {
                    out.set(c, t, dst, self.get(c, t, src));
                }
            }
        }
        out
    }
}

fn spec_for<'a>(dict: &'a DataDictionary, name: &str) -> Result<&'a VariableSpec> {
    dict.get(name)
        .ok_or_else(|| invalid!("variable {name} is not in the dictionary"))
}

/// A country removed before analysis, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub country_code: String,
    pub reason: String,
}

/// Removes countries that have no observation at all for some
/// `country_mean` variable, reporting each exclusion.
pub fn exclude_incomplete(panel: &Panel, dict: &DataDictionary) -> Result<(Panel, Vec<Exclusion>)> {
    let mut exclusions = Vec::new();
    let mut keep = BTreeSet::new();
    for (c, country) in panel.countries.iter().enumerate() {
        let mut empty_vars = Vec::new();
        for (v, name) in panel.variables.iter().enumerate() {
            if spec_for(dict, name)?.missing_policy != MissingPolicy::CountryMean {
                continue;
            }
            if (0..panel.n_years()).all(|t| panel.get(c, t, v).is_none()) {
                empty_vars.push(name.as_str());
            }
        }
        if empty_vars.is_empty() {
            keep.insert(country.code.clone());
        } else {
            exclusions.push(Exclusion {
                country_code: country.code.clone(),
                reason: format!("no observations for {}", empty_vars.join(", ")),
            });
        }
    }
    Ok((panel.retain_countries(&keep), exclusions))
}

/// Applies each variable's missing-data policy.
///
/// `recode_zero` fills every missing cell with 0, `country_mean` fills with
/// the mean of that country's observed values, `drop_variable` removes the
/// variable. A country with no observations for a `country_mean` variable
/// is an error listing every such (country, variable) pair.
pub fn apply_missing_policy(panel: &Panel, dict: &DataDictionary) -> Result<Panel> {
    let mut out = panel.clone();
    let mut dropped = BTreeSet::new();
    let mut missing = Vec::new();
    for (v, name) in panel.variables.iter().enumerate() {
        match spec_for(dict, name)?.missing_policy {
            MissingPolicy::DropVariable => {
                dropped.insert(v);
            }
            MissingPolicy::RecodeZero => {
                for c in 0..panel.countries.len() {
                    for t in 0..panel.n_years() {
                        if panel.get(c, t, v).is_none() {
                            out.set(c, t, v, Some(0.0));
                        }
                    }
                }
            }
            MissingPolicy::CountryMean => {
                for c in 0..panel.countries.len() {
                    let observed: Vec<f64> = (0..panel.n_years()).filter_map(|t| panel.get(c, t, v)).collect();
                    if observed.len() == panel.n_years() {
                        continue;
                    }
                    if observed.is_empty() {
                        missing.push((panel.countries[c].code.clone(), name.clone()));
                        continue;
                    }
                    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
                    for t in 0..panel.n_years() {
                        if panel.get(c, t, v).is_none() {
                            out.set(c, t, v, Some(mean));
                        }
                    }
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::NoObservations { missing });
    }
    Ok(if dropped.is_empty() {
        out
    } else {
        out.without_variables(&dropped)
    })
}

/// One row per country, sorted by country code; no missing cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub countries: Vec<Country>,
    pub variables: Vec<String>,
    #[serde(with = "crate::matrix::rows")]
    pub data: DMatrix<f64>,
}

impl CrossSection {
    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .variable_index(name)
            .ok_or_else(|| invalid!("cross-section has no variable {name}"))?;
        Ok(self.data.column(j).iter().copied().collect())
    }

    /// Columns for the named variables, in the given order.
    pub fn select(&self, names: &[String]) -> Result<DMatrix<f64>> {
        let idx = names
            .iter()
            .map(|n| {
                self.variable_index(n)
                    .ok_or_else(|| invalid!("cross-section has no variable {n}"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(self.n_countries(), idx.len(), |i, j| {
            self.data[(i, idx[j])]
        }))
    }

    pub fn retain_countries(&self, keep: &BTreeSet<String>) -> CrossSection {
        let rows: Vec<usize> = (0..self.n_countries())
            .filter(|&i| keep.contains(&self.countries[i].code))
            .collect();
        CrossSection {
            countries: rows.iter().map(|&i| self.countries[i].clone()).collect(),
            variables: self.variables.clone(),
            data: DMatrix::from_fn(rows.len(), self.variables.len(), |i, j| self.data[(rows[i], j)]),
        }
    }

    /// CSV with 17 significant digits, which re-loads bit-exactly.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["country_code", "country_name", "region"];
        header.extend(self.variables.iter().map(String::as_str));
        w.write_record(&header).expect("in-memory write");
        for (i, c) in self.countries.iter().enumerate() {
            let mut rec = vec![c.code.clone(), c.name.clone(), c.region.clone()];
            rec.extend((0..self.variables.len()).map(|j| fmt_num(self.data[(i, j)])));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 3
            || &headers[0] != "country_code"
            || &headers[1] != "country_name"
            || &headers[2] != "region"
        {
            return Err(invalid!(
                "cross-section CSV must start with country_code,country_name,region"
            ));
        }
        let variables: Vec<String> = headers.iter().skip(3).map(str::to_string).collect();
        let mut countries = Vec::new();
        let mut cells = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            countries.push(Country {
                code: record[0].to_string(),
                name: record[1].to_string(),
                region: record[2].to_string(),
            });
            for (j, raw) in record.iter().skip(3).enumerate() {
                let v: f64 = raw.parse().map_err(|_| Error::NonNumeric {
                    line,
                    column: variables[j].clone(),
                    value: raw.to_string(),
                })?;
                cells.push(v);
            }
        }
        let data = DMatrix::from_row_slice(countries.len(), variables.len(), &cells);
        Ok(CrossSection {
            countries,
            variables,
            data,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(file)
    }

    /// JSON with one object per country: `{code, name, region, values: {...}}`.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<_> = self
            .countries
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let values: serde_json::Map<String, serde_json::Value> = self
                    .variables
                    .iter()
                    .enumerate()
                    .map(|(j, v)| (v.clone(), serde_json::json!(self.data[(i, j)])))
                    .collect();
                serde_json::json!({
                    "country_code": c.code,
                    "country_name": c.name,
                    "region": c.region,
                    "values": values,
                })
            })
            .collect();
        serde_json::json!({ "variables": self.variables, "rows": rows })
    }
}

/// Within-country mean of every variable over `year_from..=year_to`.
pub fn collapse_to_cross_section(panel: &Panel, year_from: i32, year_to: i32) -> Result<CrossSection> {
    if year_to < year_from {
        return Err(invalid!("empty year range {year_from}..={year_to}"));
    }
    if year_from < panel.first_year || year_to > panel.last_year {
        return Err(invalid!(
            "year range {year_from}..={year_to} outside panel range {}..={}",
            panel.first_year,
            panel.last_year
        ));
    }
    let t0 = (year_from - panel.first_year) as usize;
    let t1 = (year_to - panel.first_year) as usize;
    let span = (t1 - t0 + 1) as f64;
    let mut data = DMatrix::zeros(panel.countries.len(), panel.variables.len());
    for c in 0..panel.countries.len() {
        for v in 0..panel.variables.len() {
            let mut sum = 0.0;
            for t in t0..=t1 {
                sum += panel.get(c, t, v).ok_or_else(|| {
                    invalid!(
                        "missing cell for {} {} in {}; apply missing policies first",
                        panel.countries[c].code,
                        panel.variables[v],
                        panel.first_year + t as i32
                    )
                })?;
            }
            data[(c, v)] = sum / span;
        }
    }
    Ok(CrossSection {
        countries: panel.countries.clone(),
        variables: panel.variables.clone(),
        data,
    })
}

/// Applies each variable's transform (`log1p` or none).
pub fn apply_transforms(cs: &CrossSection, dict: &DataDictionary) -> Result<CrossSection> {
    let mut out = cs.clone();
    for (j, name) in cs.variables.iter().enumerate() {
        let spec = spec_for(dict, name)?;
        for i in 0..cs.n_countries() {
            let x = cs.data[(i, j)];
            out.data[(i, j)] = spec.apply(x).ok_or_else(|| Error::NegativeLog {
                country: cs.countries[i].code.clone(),
                variable: name.clone(),
                value: x,
            })?;
        }
    }
    Ok(out)
}

/// Missing policies, collapse over the whole panel range, then transforms.
pub fn prepare_cross_section(panel: &Panel, dict: &DataDictionary) -> Result<CrossSection> {
    let imputed = apply_missing_policy(panel, dict)?;
    let cs = collapse_to_cross_section(&imputed, imputed.first_year, imputed.last_year)?;
    apply_transforms(&cs, dict)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveRow {
    pub variable: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveTable {
    pub rows: Vec<DescriptiveRow>,
}

impl DescriptiveTable {
    pub fn relabel(mut self, dict: &DataDictionary) -> Self {
        for row in &mut self.rows {
            row.variable = dict.label(&row.variable);
        }
        self
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variable,n,mean,sd,min,max\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.variable,
                r.n,
                fmt_num(r.mean),
                fmt_num(r.sd),
                fmt_num(r.min),
                fmt_num(r.max)
            ));
        }
        out
    }
}

/// Per-variable n, mean, sample sd, min and max.
pub fn describe(cs: &CrossSection) -> Result<DescriptiveTable> {
    if cs.n_countries() == 0 {
        return Err(invalid!("cannot describe an empty cross-section"));
    }
    let rows = cs
        .variables
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col = cs.data.column(j);
            DescriptiveRow {
                variable: name.clone(),
                n: col.len(),
                mean: crate::matrix::column_mean(&cs.data, j),
                sd: crate::matrix::column_sd(&cs.data, j),
                min: col.iter().copied().fold(f64::INFINITY, f64::min),
                max: col.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    Ok(DescriptiveTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn dict2() -> DataDictionary {
        DataDictionary::new(vec![
            VariableSpec::new("RD", Transform::Log1p, MissingPolicy::RecodeZero, GroupHint::Capacity),
            VariableSpec::new(
                "Gov",
                Transform::None,
                MissingPolicy::CountryMean,
                GroupHint::Governance,
            ),
        ])
        .unwrap()
    }

    const CSV: &str = "country_code,country_name,region,year,RD,Gov\n\
        USA,United States,NA,2015,100,2\n\
        USA,United States,NA,2016,,\n\
        USA,United States,NA,2017,300,4\n\
        XKX,Kosovo,EU,2015,,1\n\
        XKX,Kosovo,EU,2016,,1\n\
        XKX,Kosovo,EU,2017,,1\n";

    fn panel() -> Panel {
        Panel::read_csv(CSV.as_bytes(), &dict2()).unwrap()
    }

    #[test]
    fn loads_rows_and_missing_cells() {
        let p = panel();
        assert_eq!(p.countries.len(), 2);
        assert_eq!((p.first_year, p.last_year), (2015, 2017));
        assert_eq!(p.get(0, 0, 0), Some(100.0));
        assert_eq!(p.get(0, 1, 0), None);
        assert_eq!(p.missing_count(), 5);
    }

    #[test]
    fn single_row_csv() {
        let csv = "country_code,country_name,region,year,RD,Gov\nAAA,A,R1,2020,1,2\n";
        let p = Panel::read_csv(csv.as_bytes(), &dict2()).unwrap();
        assert_eq!(p.countries.len(), 1);
        assert_eq!(p.n_years(), 1);
    }

    #[test]
    fn duplicate_row_is_named() {
        let csv = format!("{CSV}USA,United States,NA,2016,1,1\n");
        let err = Panel::read_csv(csv.as_bytes(), &dict2()).unwrap_err();
        match err {
            Error::DuplicateRow { country, year, .. } => {
                assert_eq!(country, "USA");
                assert_eq!(year, 2016);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_dictionary_variable() {
        let mut d = dict2();
        d.variables.push(VariableSpec::new(
            "Missing",
            Transform::None,
            MissingPolicy::CountryMean,
            GroupHint::Unassigned,
        ));
        let err = Panel::read_csv(CSV.as_bytes(), &d).unwrap_err();
        assert!(matches!(err, Error::UnknownVariable { ref variable, .. } if variable == "Missing"));
    }

    #[test]
    fn non_numeric_cell_has_coordinates() {
        let csv = CSV.replace("300", "lots");
        let err = Panel::read_csv(csv.as_bytes(), &dict2()).unwrap_err();
        match err {
            Error::NonNumeric { line, column, value } => {
                assert_eq!(line, 4);
                assert_eq!(column, "RD");
                assert_eq!(value, "lots");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_region_rejected() {
        let csv = "country_code,country_name,region,year,RD,Gov\nAAA,A,,2020,1,2\n";
        assert!(Panel::read_csv(csv.as_bytes(), &dict2()).is_err());
    }

    #[test]
    fn duplicate_dictionary_names_rejected() {
        let spec = VariableSpec::new("A", Transform::None, MissingPolicy::CountryMean, GroupHint::Capacity);
        assert!(DataDictionary::new(vec![spec.clone(), spec]).is_err());
    }

    #[test]
    fn missing_policies() {
        let p = apply_missing_policy(&panel(), &dict2()).unwrap();
        // recode_zero: Kosovo RD all zero, USA 2016 RD zero
        for t in 0..3 {
            assert_eq!(p.get(1, t, 0), Some(0.0));
        }
        assert_eq!(p.get(0, 1, 0), Some(0.0));
        // country_mean: {2, _, 4} -> 3
        assert_eq!(p.get(0, 1, 1), Some(3.0));
        assert_eq!(p.missing_count(), 0);
    }

    #[test]
    fn full_data_is_untouched() {
        let csv = "country_code,country_name,region,year,RD,Gov\nA,A,R,2020,1,2\nA,A,R,2021,3,4\n";
        let p = Panel::read_csv(csv.as_bytes(), &dict2()).unwrap();
        assert_eq!(apply_missing_policy(&p, &dict2()).unwrap(), p);
    }

    #[test]
    fn country_mean_without_data_errors_and_exclusion_reports() {
        let csv = "country_code,country_name,region,year,RD,Gov\nA,A,R,2020,1,\nA,A,R,2021,3,\nB,B,R,2020,1,1\nB,B,R,2021,1,2\n";
        let p = Panel::read_csv(csv.as_bytes(), &dict2()).unwrap();
        match apply_missing_policy(&p, &dict2()).unwrap_err() {
            Error::NoObservations { missing } => {
                assert_eq!(missing, vec![("A".to_string(), "Gov".to_string())]);
            }
            other => panic!("unexpected {other}"),
        }
        let (kept, excluded) = exclude_incomplete(&p, &dict2()).unwrap();
        assert_eq!(kept.countries.len(), 1);
        assert_eq!(excluded.len(), 1);
        assert_eq!(excluded[0].country_code, "A");
        assert!(apply_missing_policy(&kept, &dict2()).is_ok());
    }

    #[test]
    fn drop_variable_removes_column() {
        let mut d = dict2();
        d.variables[1].missing_policy = MissingPolicy::DropVariable;
        let p = apply_missing_policy(&panel(), &d).unwrap();
        assert_eq!(p.variables, vec!["RD".to_string()]);
    }

    #[test]
    fn collapse_means_and_single_year_identity() {
        let p = apply_missing_policy(&panel(), &dict2()).unwrap();
        let cs = collapse_to_cross_section(&p, 2015, 2017).unwrap();
        assert_abs_diff_eq!(cs.data[(0, 0)], 400.0 / 3.0, epsilon = 1e-12);
        assert_eq!(cs.data[(0, 1)], 3.0);
        let one = collapse_to_cross_section(&p, 2015, 2015).unwrap();
        assert_eq!(one.data[(0, 0)], 100.0);
        assert_eq!(one.data[(0, 1)], 2.0);
        assert!(collapse_to_cross_section(&p, 2017, 2016).is_err());
        assert!(collapse_to_cross_section(&p, 2014, 2016).is_err());
        assert!(collapse_to_cross_section(&panel(), 2015, 2017).is_err());
    }

    #[test]
    fn transforms() {
        let cs = CrossSection {
            countries: vec![
                Country {
                    code: "A".into(),
                    name: "A".into(),
                    region: "R".into(),
                },
                Country {
                    code: "B".into(),
                    name: "B".into(),
                    region: "R".into(),
                },
            ],
            variables: vec!["RD".into(), "Gov".into()],
            data: DMatrix::from_row_slice(2, 2, &[0.0, -1.5, std::f64::consts::E - 1.0, 0.25]),
        };
        let t = apply_transforms(&cs, &dict2()).unwrap();
        assert_eq!(t.data[(0, 0)], 0.0);
        assert_abs_diff_eq!(t.data[(1, 0)], 1.0, epsilon = 1e-15);
        assert_eq!(t.data.column(1), cs.data.column(1));

        let mut neg = cs.clone();
        neg.data[(1, 0)] = -2.0;
        assert!(matches!(
            apply_transforms(&neg, &dict2()),
            Err(Error::NegativeLog { ref country, .. }) if country == "B"
        ));
    }

    #[test]
    fn describe_small_columns() {
        let cs = CrossSection {
            countries: (0..3)
                .map(|i| Country {
                    code: format!("C{i}"),
                    name: String::new(),
                    region: "R".into(),
                })
                .collect(),
            variables: vec!["zero".into(), "ramp".into()],
            data: DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 0.0, 2.0, 0.0, 3.0]),
        };
        let d = describe(&cs).unwrap();
        assert_eq!((d.rows[0].mean, d.rows[0].sd), (0.0, 0.0));
        assert_eq!((d.rows[1].mean, d.rows[1].sd), (2.0, 1.0));
        assert_eq!((d.rows[1].min, d.rows[1].max), (1.0, 3.0));
        assert_eq!(d.rows[1].n, 3);
    }

    #[test]
    fn dictionary_json_round_trip() {
        let d = default_dictionary();
        assert_eq!(DataDictionary::from_json(&d.to_json()).unwrap(), d);
        assert_eq!(d.analysis_variables().len(), 14);
        assert_eq!(d.outcome().unwrap().name, "FWCI");
        assert_eq!(d.label("RD"), "ln_RD");
        assert_eq!(d.label("RuleLaw"), "RuleLaw");
    }

    fn arb_panel() -> impl Strategy<Value = Panel> {
        (
            1usize..5,
            1usize..5,
            proptest::collection::vec(proptest::option::weighted(0.7, 0.0f64..1e4), 50),
        )
            .prop_map(|(nc, ny, cells)| {
                let countries = (0..nc)
                    .map(|i| Country {
                        code: format!("C{i}"),
                        name: format!("n{i}"),
                        region: "R".into(),
                    })
                    .collect();
                let mut p =
                    Panel::empty(countries, 2000, 2000 + ny as i32 - 1, vec!["RD".into(), "Gov".into()]).unwrap();
                let mut k = 0;
                for c in 0..nc {
                    for t in 0..ny {
                        for v in 0..2 {
                            // keep year 0 observed so country_mean is always defined
                            let cell = if t == 0 {
                                Some(cells[k].unwrap_or(1.0))
                            } else {
                                cells[k]
                            };
                            p.set(c, t, v, cell);
                            k += 1;
                        }
                    }
                }
                p
            })
    }

    proptest! {
        #[test]
        fn imputation_is_idempotent(p in arb_panel()) {
            let once = apply_missing_policy(&p, &dict2()).unwrap();
            let twice = apply_missing_policy(&once, &dict2()).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn identical_years_collapse_to_slice(p in arb_panel()) {
            let mut p = apply_missing_policy(&p, &dict2()).unwrap();
            for c in 0..p.countries.len() {
                for t in 1..p.n_years() {
                    for v in 0..2 {
                        let first = p.get(c, 0, v);
                        p.set(c, t, v, first);
                    }
                }
            }
            let cs = collapse_to_cross_section(&p, p.first_year, p.last_year).unwrap();
            let slice = collapse_to_cross_section(&p, p.first_year, p.first_year).unwrap();
            prop_assert_eq!(&cs.countries, &slice.countries);
            for (a, b) in cs.data.iter().zip(slice.data.iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn collapse_bounds_and_log_monotone(p in arb_panel()) {
            let p = apply_missing_policy(&p, &dict2()).unwrap();
            let cs = collapse_to_cross_section(&p, p.first_year, p.last_year).unwrap();
            let d = describe(&cs).unwrap();
            for (j, row) in d.rows.iter().enumerate() {
                for x in cs.data.column(j).iter() {
                    prop_assert!(row.min <= *x && *x <= row.max);
                }
            }
            let t = apply_transforms(&cs, &dict2()).unwrap();
            for a in 0..cs.n_countries() {
                for b in 0..cs.n_countries() {
                    if cs.data[(a, 0)] < cs.data[(b, 0)] {
                        prop_assert!(t.data[(a, 0)] <= t.data[(b, 0)]);
                    }
                }
            }
        }

        #[test]
        fn cross_section_csv_round_trip(cells in proptest::collection::vec(-1e6f64..1e6, 6)) {
            let cs = CrossSection {
                countries: (0..3)
                    .map(|i| Country { code: format!("C{i}"), name: format!("Name, {i}"), region: "R".into() })
                    .collect(),
                variables: vec!["a".into(), "b".into()],
                data: DMatrix::from_row_slice(3, 2, &cells),
            };
            let back = CrossSection::from_csv(cs.to_csv().as_bytes()).unwrap();
            prop_assert_eq!(back, cs);
        }
    }
}
