//! Country indexes and rankings: factor-score and summative aggregation,
//! the capacity x governance interaction, and deterministic ranks.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::standardize;
use crate::panel::Country;
use crate::report::fmt_num;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMethod {
    FactorScores,
    Summative,
}

impl AggregationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            AggregationMethod::FactorScores => "factor_scores",
            AggregationMethod::Summative => "summative",
        }
    }
}

/// Equal-weight mean of the item z-scores, restandardized to mean 0, sd 1.
pub fn summative_index(z: &DMatrix<f64>, items: &[usize]) -> Result<Vec<f64>> {
    if items.is_empty() {
        return Err(invalid!("summative index needs at least one item"));
    }
    if let Some(&bad) = items.iter().find(|&&j| j >= z.ncols()) {
        return Err(invalid!("item index {bad} out of range for {} columns", z.ncols()));
    }
    let k = items.len() as f64;
    let means: Vec<f64> = z
        .row_iter()
        .map(|row| items.iter().map(|&j| row[j]).sum::<f64>() / k)
        .collect();
    standardize(&means).ok_or_else(|| Error::Numerical("summative index is constant".into()))
}

/// One score per country.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub countries: Vec<Country>,
    pub values: Vec<f64>,
}

impl ScoreSeries {
    pub fn new(countries: Vec<Country>, values: Vec<f64>) -> Result<Self> {
        if countries.len() != values.len() {
            return Err(invalid!("{} countries but {} scores", countries.len(), values.len()));
        }
        Ok(Self { countries, values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexScores {
    pub method: AggregationMethod,
    pub countries: Vec<Country>,
    pub capacity: Vec<f64>,
    pub governance: Vec<f64>,
    /// `capacity * governance`, not restandardized.
    pub interaction: Vec<f64>,
}

impl IndexScores {
    pub fn series(&self, which: IndexColumn) -> ScoreSeries {
        let values = match which {
            IndexColumn::Capacity => &self.capacity,
            IndexColumn::Governance => &self.governance,
            IndexColumn::Interaction => &self.interaction,
        };
        ScoreSeries {
            countries: self.countries.clone(),
            values: values.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("country_code,country_name,region,capacity,governance,interaction\n");
        let mut w = csv::Writer::from_writer(Vec::new());
        for (i, c) in self.countries.iter().enumerate() {
            w.write_record([
                c.code.as_str(),
                c.name.as_str(),
                c.region.as_str(),
                &fmt_num(self.capacity[i]),
                &fmt_num(self.governance[i]),
                &fmt_num(self.interaction[i]),
            ])
            .expect("in-memory write");
        }
        out.push_str(std::str::from_utf8(&w.into_inner().expect("flush")).expect("utf-8"));
        out
    }

    pub fn from_csv<R: std::io::Read>(reader: R, method: AggregationMethod) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut scores = IndexScores {
            method,
            countries: Vec::new(),
            capacity: Vec::new(),
            governance: Vec::new(),
            interaction: Vec::new(),
        };
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() < 6 {
                return Err(invalid!("line {line}: expected 6 columns"));
            }
            let num = |i: usize, col: &str| -> Result<f64> {
                record[i].parse().map_err(|_| Error::NonNumeric {
                    line,
                    column: col.to_string(),
                    value: record[i].to_string(),
                })
            };
            scores.countries.push(Country {
                code: record[0].to_string(),
                name: record[1].to_string(),
                region: record[2].to_string(),
            });
            scores.capacity.push(num(3, "capacity")?);
            scores.governance.push(num(4, "governance")?);
            scores.interaction.push(num(5, "interaction")?);
        }
        Ok(scores)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexColumn {
    Capacity,
    Governance,
    Interaction,
}

impl IndexColumn {
    pub const ALL: [IndexColumn; 3] = [IndexColumn::Capacity, IndexColumn::Governance, IndexColumn::Interaction];

    pub fn as_str(self) -> &'static str {
        match self {
            IndexColumn::Capacity => "capacity",
            IndexColumn::Governance => "governance",
            IndexColumn::Interaction => "interaction",
        }
    }
}

/// Standardizes both score series and forms their elementwise product.
/// Countries are matched by code; output is sorted by code.
pub fn build_index(capacity: &ScoreSeries, governance: &ScoreSeries, method: AggregationMethod) -> Result<IndexScores> {
    let cap: BTreeMap<&str, (usize, f64)> = capacity
        .countries
        .iter()
        .zip(&capacity.values)
        .enumerate()
        .map(|(i, (c, &v))| (c.code.as_str(), (i, v)))
        .collect();
    let gov: BTreeMap<&str, f64> = governance
        .countries
        .iter()
        .zip(&governance.values)
        .map(|(c, &v)| (c.code.as_str(), v))
        .collect();
    let only_cap: Vec<&str> = cap.keys().filter(|k| !gov.contains_key(*k)).copied().collect();
    let only_gov: Vec<&str> = gov.keys().filter(|k| !cap.contains_key(*k)).copied().collect();
    if !only_cap.is_empty() || !only_gov.is_empty() {
        return Err(invalid!(
            "country sets differ: only in capacity [{}], only in governance [{}]",
            only_cap.join(", "),
            only_gov.join(", ")
        ));
    }
    let countries: Vec<Country> = cap.values().map(|&(i, _)| capacity.countries[i].clone()).collect();
    let cap_raw: Vec<f64> = cap.values().map(|&(_, v)| v).collect();
    let gov_raw: Vec<f64> = cap.keys().map(|k| gov[k]).collect();
    let capacity = standardize(&cap_raw).ok_or_else(|| Error::Numerical("capacity scores are constant".into()))?;
    let governance = standardize(&gov_raw).ok_or_else(|| Error::Numerical("governance scores are constant".into()))?;
    let interaction = capacity.iter().zip(&governance).map(|(c, g)| c * g).collect();
    Ok(IndexScores {
        method,
        countries,
        capacity,
        governance,
        interaction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    pub country_code: String,
    pub country_name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub entries: Vec<RankEntry>,
}

impl Ranking {
    pub fn codes(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.country_code.as_str()).collect()
    }

    pub fn rank_of(&self, code: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.country_code == code).map(|e| e.rank)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["rank", "country_code", "country_name", "score"])
            .expect("in-memory write");
        for e in &self.entries {
            w.write_record([
                e.rank.to_string(),
                e.country_code.clone(),
                e.country_name.clone(),
                fmt_num(e.score),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Descending order of score; ties go to the smaller country code. Ranks
/// are 1-based.
pub fn rank(scores: &ScoreSeries) -> Result<Ranking> {
    if let Some(i) = scores.values.iter().position(|v| !v.is_finite()) {
        return Err(invalid!(
            "non-finite score {} for {}",
            scores.values[i],
            scores.countries[i].code
        ));
    }
    let mut order: Vec<usize> = (0..scores.values.len()).collect();
    order.sort_by(|&a, &b| {
        // partial_cmp so that -0.0 and 0.0 tie
        scores.values[b]
            .partial_cmp(&scores.values[a])
            .expect("finite scores")
            .then_with(|| scores.countries[a].code.cmp(&scores.countries[b].code))
    });
    let entries = order
        .iter()
        .enumerate()
        .map(|(r, &i)| RankEntry {
            rank: r + 1,
            country_code: scores.countries[i].code.clone(),
            country_name: scores.countries[i].name.clone(),
            score: scores.values[i],
        })
        .collect();
    Ok(Ranking { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn countries(codes: &[&str]) -> Vec<Country> {
        codes
            .iter()
            .map(|c| Country {
                code: c.to_string(),
                name: format!("{c} land"),
                region: "R".into(),
            })
            .collect()
    }

    #[test]
    fn rank_simple_and_ties() {
        let s = ScoreSeries::new(countries(&["A", "B", "C"]), vec![3.0, 2.0, 1.0]).unwrap();
        assert_eq!(rank(&s).unwrap().codes(), vec!["A", "B", "C"]);
        let s = ScoreSeries::new(countries(&["ZZZ", "AAA", "MMM"]), vec![1.0, 1.0, 2.0]).unwrap();
        let r = rank(&s).unwrap();
        assert_eq!(r.codes(), vec!["MMM", "AAA", "ZZZ"]);
        assert_eq!(r.entries.iter().map(|e| e.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn signed_zeros_tie() {
        let s = ScoreSeries::new(countries(&["B", "A"]), vec![0.0, -0.0]).unwrap();
        assert_eq!(rank(&s).unwrap().codes(), vec!["A", "B"]);
    }

    #[test]
    fn rank_rejects_nan() {
        let s = ScoreSeries::new(countries(&["A", "B"]), vec![1.0, f64::NAN]).unwrap();
        assert!(rank(&s).is_err());
    }

    #[test]
    fn summative_edge_cases() {
        let z = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.2, -1.0, -1.2]);
        let idx = summative_index(&z, &[0, 1]).unwrap();
        assert_eq!(idx[0], 0.0);
        assert!(summative_index(&z, &[]).is_err());

        let col = standardize(&[1.0, 5.0, 2.0, 8.0]).unwrap();
        let z = DMatrix::from_column_slice(4, 1, &col);
        let idx = summative_index(&z, &[0]).unwrap();
        for (a, b) in idx.iter().zip(&col) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dominance_orders_two_countries() {
        // A beats B on every item; brute force over both orderings of the pair
        let z = DMatrix::from_row_slice(2, 3, &[0.9, 0.1, 0.5, -0.9, -0.1, -0.5]);
        let idx = summative_index(&z, &[0, 1, 2]).unwrap();
        let r = rank(&ScoreSeries::new(countries(&["B", "A"]).into_iter().rev().collect(), idx).unwrap()).unwrap();
        assert_eq!(r.codes(), vec!["A", "B"]);
    }

    #[test]
    fn interaction_properties() {
        let cs = countries(&["A", "B", "C", "D"]);
        let cap = ScoreSeries::new(cs.clone(), vec![1.0, 4.0, 2.0, 9.0]).unwrap();
        // governance exactly at its mean for C: standardized value 0
        let gov = ScoreSeries::new(cs.clone(), vec![0.0, 2.0, 1.0, 1.0]).unwrap();
        let idx = build_index(&cap, &gov, AggregationMethod::Summative).unwrap();
        assert_eq!(idx.governance[2], 0.0);
        assert_eq!(idx.interaction[2], 0.0);
        for i in 0..4 {
            assert_eq!(idx.interaction[i], idx.capacity[i] * idx.governance[i]);
        }
        let neg =
            |s: &ScoreSeries| ScoreSeries::new(s.countries.clone(), s.values.iter().map(|v| -v).collect()).unwrap();
        let flipped = build_index(&neg(&cap), &neg(&gov), AggregationMethod::Summative).unwrap();
        for i in 0..4 {
            assert!((flipped.interaction[i] - idx.interaction[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn country_mismatch_is_listed() {
        let cap = ScoreSeries::new(countries(&["A", "B", "C"]), vec![1.0, 2.0, 3.0]).unwrap();
        let gov = ScoreSeries::new(countries(&["A", "B", "D"]), vec![1.0, 2.0, 3.0]).unwrap();
        let err = build_index(&cap, &gov, AggregationMethod::FactorScores)
            .unwrap_err()
            .to_string();
        assert!(err.contains("[C]") && err.contains("[D]"), "{err}");
    }

    proptest! {
        #[test]
        fn rank_is_permutation_equivariant(
            values in proptest::collection::vec(-100.0f64..100.0, 2..30),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let codes: Vec<String> = (0..values.len()).map(|i| format!("K{i:03}")).collect();
            let cs: Vec<Country> = codes.iter().map(|c| Country { code: c.clone(), name: c.clone(), region: "R".into() }).collect();
            let base = rank(&ScoreSeries::new(cs.clone(), values.clone()).unwrap()).unwrap();
            let mut perm: Vec<usize> = (0..values.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let shuffled = ScoreSeries::new(
                perm.iter().map(|&i| cs[i].clone()).collect(),
                perm.iter().map(|&i| values[i]).collect(),
            ).unwrap();
            prop_assert_eq!(rank(&shuffled).unwrap(), base);
        }

        #[test]
        fn interaction_sign_rule(
            cap in proptest::collection::vec(-10.0f64..10.0, 3..20),
            gov_seed in proptest::collection::vec(-10.0f64..10.0, 20),
        ) {
            let n = cap.len();
            let cs: Vec<Country> = (0..n).map(|i| Country { code: format!("C{i:02}"), name: String::new(), region: "R".into() }).collect();
            let capacity = ScoreSeries::new(cs.clone(), cap).unwrap();
            let governance = ScoreSeries::new(cs, gov_seed[..n].to_vec()).unwrap();
            if let Ok(idx) = build_index(&capacity, &governance, AggregationMethod::FactorScores) {
                for i in 0..n {
                    let expected = idx.capacity[i].signum() * idx.governance[i].signum();
                    if idx.interaction[i] != 0.0 {
                        prop_assert_eq!(idx.interaction[i].signum(), expected);
                    }
                }
            }
        }
    }
}
