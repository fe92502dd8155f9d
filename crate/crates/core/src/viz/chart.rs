use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::PrecisionTable;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;

const LEFT: f64 = 70.0;
const RIGHT: f64 = 620.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 430.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
}

impl Default for ChartSpec {
    fn default() -> Self {
        Self {
            title: "Precision vs. image quality".into(),
            x_label: "Image quality".into(),
            y_label: "Precision".into(),
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Vertical position of a score in [0, 1].
pub fn y_of(score: f64) -> f64 {
    BOTTOM - score.clamp(0.0, 1.0) * (BOTTOM - TOP)
}

fn x_of(i: usize, n: usize) -> f64 {
    LEFT + i as f64 * (RIGHT - LEFT) / (n - 1) as f64
}

/// Line chart with one polyline per model row.
pub fn emit_chart_svg(table: &PrecisionTable, spec: &ChartSpec) -> Result<String> {
    let n = table.qualities().len();
    if n < 2 {
        return Err(Error::InvalidArgument("need ≥2 points".into()));
    }
    if table.rows().is_empty() {
        return Err(Error::Empty("chart series"));
    }
    let mut s = String::new();
    // Writing to a String never fails.
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="28" text-anchor="middle" font-family="sans-serif" font-size="18">{}</text>"#,
        (LEFT + RIGHT) / 2.0,
        escape(&spec.title)
    );
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let y = y_of(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{RIGHT:.2}" y2="{y:.2}" stroke="#dddddd"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="12">{v:.2}</text>"#,
            LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r##"<polyline points="{LEFT:.2},{TOP:.2} {LEFT:.2},{BOTTOM:.2} {RIGHT:.2},{BOTTOM:.2}" fill="none" stroke="#000000"/>"##
    );
    for (i, q) in table.qualities().iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            x_of(i, n),
            BOTTOM + 20.0,
            escape(&q.label())
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        (LEFT + RIGHT) / 2.0,
        BOTTOM + 50.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="14" transform="rotate(-90 20 {:.2})">{}</text>"#,
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0,
        escape(&spec.y_label)
    );
    for (r, row) in table.rows().iter().enumerate() {
        let colour = PALETTE[r % PALETTE.len()];
        let points: Vec<String> = row
            .scores
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", x_of(i, n), y_of(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            points.join(" ")
        );
        let ly = TOP + 10.0 + 22.0 * r as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="14" height="4" fill="{colour}"/>"#,
            RIGHT + 20.0,
            ly - 2.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            RIGHT + 40.0,
            ly + 4.0,
            escape(&row.model_name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::QualityLevel;
    use crate::harness::PrecisionRow;

    fn table(rows: &[(&str, [f64; 4])]) -> PrecisionTable {
        let mut t = PrecisionTable::new(QualityLevel::default_sweep()).unwrap();
        for (name, s) in rows {
            t.push(PrecisionRow {
                model_name: name.to_string(),
                scores: s.to_vec(),
            })
            .unwrap();
        }
        t
    }

    #[test]
    fn one_series_per_model() {
        let t = table(&[("a", [0.9, 0.8, 0.7, 0.6]), ("b<c>", [0.5, 0.4, 0.3, 0.2])]);
        let svg = emit_chart_svg(&t, &ChartSpec::default()).unwrap();
        assert_eq!(svg.matches(r#"<polyline class="series""#).count(), 2);
        assert!(svg.contains("b&lt;c&gt;"));
        assert_eq!(svg, emit_chart_svg(&t, &ChartSpec::default()).unwrap());
    }

    #[test]
    fn perfect_scores_sit_on_top_gridline() {
        let t = table(&[("a", [1.0; 4]), ("b", [1.0; 4])]);
        let svg = emit_chart_svg(&t, &ChartSpec::default()).unwrap();
        let top = format!("{:.2}", y_of(1.0));
        assert!(svg.contains(&format!(
            r##"y1="{top}" x2="620.00" y2="{top}" stroke="#dddddd""##
        )));
        for line in svg.lines().filter(|l| l.contains(r#"class="series""#)) {
            let pts = line
                .split("points=\"")
                .nth(1)
                .unwrap()
                .split('"')
                .next()
                .unwrap();
            assert!(pts.split(' ').all(|p| p.ends_with(&format!(",{top}"))));
        }
    }

    #[test]
    fn single_quality_rejected() {
        let mut t = PrecisionTable::new(vec![QualityLevel::Original]).unwrap();
        t.push(PrecisionRow {
            model_name: "a".into(),
            scores: vec![0.5],
        })
        .unwrap();
        let err = emit_chart_svg(&t, &ChartSpec::default()).unwrap_err();
        assert!(err.to_string().contains("need ≥2 points"));
    }
}
