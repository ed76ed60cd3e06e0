//! Number formatting, standalone SVG plots and the run manifest.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::index::Ranking;

/// Formats a float with 17 significant digits so that parsing the text
/// recovers the exact bit pattern.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "Infinity".into()
        } else {
            "-Infinity".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

/// Coordinates in SVG output are rounded to 0.01 so files stay readable.
fn px(x: f64) -> String {
    format!("{:.2}", x)
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

const FONT: &str = "font-family=\"sans-serif\"";

/// Scree plot: eigenvalues as a connected line, cumulative proportion of
/// variance on a secondary axis, and a dashed reference line at 1.
pub fn scree_svg(eigenvalues: &[f64], cumulative: &[f64]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 60.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let n = eigenvalues.len().max(1);
    let y_max = eigenvalues.iter().copied().fold(1.0_f64, f64::max).ceil().max(1.0) * 1.1;
    let x_at = |i: usize| {
        if n == 1 {
            left + pw / 2.0
        } else {
            left + pw * i as f64 / (n - 1) as f64
        }
    };
    let y_eig = |v: f64| top + ph * (1.0 - v / y_max);
    let y_cum = |v: f64| top + ph * (1.0 - v);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" {FONT} font-size=\"16\">Scree plot</text>",
        w / 2.0
    );
    // axes
    let _ = writeln!(
        s,
        "<path d=\"M{l} {t} V{b} H{r} V{t}\" fill=\"none\" stroke=\"black\"/>",
        l = px(left),
        t = px(top),
        b = px(top + ph),
        r = px(left + pw)
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\" {FONT} font-size=\"12\">Eigenvalue</text>",
        px(top + ph / 2.0),
        px(top + ph / 2.0)
    );
    let _ = writeln!(
        s,
        "<text x=\"{x}\" y=\"{y}\" transform=\"rotate(90 {x} {y})\" text-anchor=\"middle\" {FONT} font-size=\"12\">Cumulative variance</text>",
        x = px(w - 16.0),
        y = px(top + ph / 2.0)
    );
    let ticks = 5;
    for t in 0..=ticks {
        let v = y_max * t as f64 / ticks as f64;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" {FONT} font-size=\"10\">{:.1}</text>",
            px(left - 6.0),
            px(y_eig(v) + 3.0),
            v
        );
        let c = t as f64 / ticks as f64;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" {FONT} font-size=\"10\">{:.0}%</text>",
            px(left + pw + 6.0),
            px(y_cum(c) + 3.0),
            c * 100.0
        );
    }
    for i in 0..eigenvalues.len() {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"10\">{}</text>",
            px(x_at(i)),
            px(top + ph + 16.0),
            i + 1
        );
    }
    let _ = writeln!(
        s,
        "<line class=\"unity\" x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>",
        px(left),
        px(left + pw),
        y = px(y_eig(1.0))
    );
    let polyline = |values: &[f64], y: &dyn Fn(f64) -> f64| {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{},{}", px(x_at(i)), px(y(v))))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(
        s,
        "<polyline class=\"cumulative\" points=\"{}\" fill=\"none\" stroke=\"darkorange\"/>",
        polyline(cumulative, &y_cum)
    );
    let _ = writeln!(
        s,
        "<polyline class=\"eigenvalues\" points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>",
        polyline(eigenvalues, &y_eig)
    );
    for (i, &v) in eigenvalues.iter().enumerate() {
        let _ = writeln!(
            s,
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"steelblue\"/>",
            px(x_at(i)),
            px(y_eig(v))
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Side-by-side ranked bar strips, one panel per `(title, ranking)`.
/// Bars extend right of a zero line for positive scores and left for
/// negative ones.
pub fn rank_strips_svg(title: &str, panels: &[(&str, &Ranking)]) -> String {
    let rows = panels.iter().map(|(_, r)| r.entries.len()).max().unwrap_or(0);
    let (row_h, panel_w, label_w, top) = (12.0, 300.0, 120.0, 50.0);
    let w = panels.len().max(1) as f64 * panel_w;
    let h = top + rows as f64 * row_h + 20.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{}\" viewBox=\"0 0 {w} {}\">",
        px(h),
        px(h)
    );
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{}\" fill=\"white\"/>", px(h));
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" {FONT} font-size=\"14\">{}</text>",
        w / 2.0,
        escape(title)
    );
    for (p, (name, ranking)) in panels.iter().enumerate() {
        let x0 = p as f64 * panel_w;
        let bar_w = panel_w - label_w - 20.0;
        let max_abs = ranking
            .entries
            .iter()
            .map(|e| e.score.abs())
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let has_neg = ranking.entries.iter().any(|e| e.score < 0.0);
        let zero = if has_neg {
            x0 + label_w + bar_w / 2.0
        } else {
            x0 + label_w
        };
        let scale = if has_neg { bar_w / 2.0 } else { bar_w } / max_abs;
        let _ = writeln!(s, "<g class=\"panel\">");
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"40\" text-anchor=\"middle\" {FONT} font-size=\"12\">{}</text>",
            px(x0 + panel_w / 2.0),
            escape(name)
        );
        for (i, e) in ranking.entries.iter().enumerate() {
            let y = top + i as f64 * row_h;
            let len = e.score * scale;
            let (bx, bw) = if len < 0.0 { (zero + len, -len) } else { (zero, len) };
            let label = if e.country_name.is_empty() {
                &e.country_code
            } else {
                &e.country_name
            };
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" {FONT} font-size=\"9\">{}. {}</text>",
                px(x0 + label_w - 4.0),
                px(y + row_h - 3.0),
                e.rank,
                escape(label)
            );
            let _ = writeln!(
                s,
                "<rect class=\"bar\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
                px(bx),
                px(y + 1.0),
                px(bw),
                px(row_h - 2.0),
                if e.score < 0.0 { "indianred" } else { "steelblue" }
            );
        }
        let _ = writeln!(
            s,
            "<line x1=\"{z}\" y1=\"{}\" x2=\"{z}\" y2=\"{}\" stroke=\"black\"/>",
            px(top),
            px(top + ranking.entries.len() as f64 * row_h),
            z = px(zero)
        );
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Path relative to the output directory for outputs, as given for inputs.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    /// Prior-stage files this stage read.
    pub consumes: Vec<String>,
    pub outputs: Vec<FileDigest>,
    pub wall_clock_seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Record of one `pipeline` run. Timings vary between runs; every other
/// field is a function of the inputs and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub tool_version: String,
    pub inputs: Vec<FileDigest>,
    pub dictionary: FileDigest,
    pub parameters: serde_json::Value,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    /// Every output path with its hash, in stage order.
    pub fn output_digests(&self) -> Vec<&FileDigest> {
        self.stages.iter().flat_map(|s| &s.outputs).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{rank, ScoreSeries};
    use crate::panel::Country;

    fn well_formed(svg: &str) -> roxmltree::Document<'_> {
        roxmltree::Document::parse(svg).expect("well-formed SVG")
    }

    #[test]
    fn fmt_num_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 123456789.125, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(fmt_num(f64::INFINITY), "Infinity");
        assert_eq!(fmt_num(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn identity_scree_is_flat_at_one() {
        let svg = scree_svg(&[1.0; 5], &[0.2, 0.4, 0.6, 0.8, 1.0]);
        let doc = well_formed(&svg);
        let line = doc
            .descendants()
            .find(|n| n.attribute("class") == Some("eigenvalues"))
            .unwrap();
        let unity = doc
            .descendants()
            .find(|n| n.attribute("class") == Some("unity"))
            .unwrap();
        let ys: Vec<&str> = line
            .attribute("points")
            .unwrap()
            .split(' ')
            .map(|p| p.split(',').nth(1).unwrap())
            .collect();
        assert!(ys.iter().all(|&y| y == unity.attribute("y1").unwrap()));
    }

    #[test]
    fn three_countries_give_three_bars_per_panel() {
        let countries: Vec<Country> = ["A&B", "C<D", "E"]
            .iter()
            .map(|c| Country {
                code: c.to_string(),
                name: format!("{c} name"),
                region: "R".into(),
            })
            .collect();
        let r = rank(&ScoreSeries::new(countries, vec![1.0, -0.5, 0.2]).unwrap()).unwrap();
        let svg = rank_strips_svg("Ranks", &[("Capacity", &r), ("Governance", &r), ("Interaction", &r)]);
        let doc = well_formed(&svg);
        let panels: Vec<_> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("panel"))
            .collect();
        assert_eq!(panels.len(), 3);
        for p in panels {
            let bars = p.descendants().filter(|n| n.attribute("class") == Some("bar")).count();
            assert_eq!(bars, 3);
        }
        assert_eq!(
            svg,
            rank_strips_svg("Ranks", &[("Capacity", &r), ("Governance", &r), ("Interaction", &r)])
        );
    }
}
