use serde::{Deserialize, Serialize};

use crate::codec::QualityLevel;
use crate::error::{Error, Result};
use crate::harness::{PrecisionRow, PrecisionTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Markdown,
}

fn header(table: &PrecisionTable) -> Vec<String> {
    std::iter::once("model".to_string())
        .chain(table.qualities().iter().map(|q| q.label()))
        .collect()
}

fn cells(row: &PrecisionRow) -> Vec<String> {
    std::iter::once(row.model_name.clone())
        .chain(row.scores.iter().map(|s| format!("{s:.4}")))
        .collect()
}

/// One row per model, one column per quality, scores to 4 decimals.
pub fn emit_table(table: &PrecisionTable, format: TableFormat) -> String {
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            // Writing into memory cannot fail.
            w.write_record(header(table)).expect("in-memory csv");
            for row in table.rows() {
                w.write_record(cells(row)).expect("in-memory csv");
            }
            String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 input")
        }
        TableFormat::Markdown => {
            let line = |cols: Vec<String>| {
                let escaped: Vec<String> = cols.iter().map(|c| c.replace('|', "\\|")).collect();
                format!("| {} |\n", escaped.join(" | "))
            };
            let mut out = line(header(table));
            let mut rule = vec!["---".to_string()];
            rule.extend(table.qualities().iter().map(|_| "---:".to_string()));
            out.push_str(&line(rule));
            for row in table.rows() {
                out.push_str(&line(cells(row)));
            }
            out
        }
    }
}

/// Reads back either rendering of [`emit_table`].
pub fn parse_table(text: &str, format: TableFormat) -> Result<PrecisionTable> {
    let rows: Vec<Vec<String>> = match format {
        TableFormat::Csv => csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(text.as_bytes())
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?,
        TableFormat::Markdown => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .filter(|(i, _)| *i != 1)
            .map(|(_, l)| split_markdown_row(l))
            .collect::<Result<_>>()?,
    };
    let (head, body) = rows
        .split_first()
        .ok_or_else(|| Error::Format("empty table".into()))?;
    let qualities = head
        .iter()
        .skip(1)
        .map(|h| h.parse::<QualityLevel>())
        .collect::<Result<Vec<_>>>()?;
    let mut table = PrecisionTable::new(qualities)?;
    for (i, row) in body.iter().enumerate() {
        let (name, scores) = row
            .split_first()
            .ok_or_else(|| Error::Format(format!("table row {} is empty", i + 2)))?;
        let scores = scores
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("table row {}: bad score {s:?}", i + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        table.push(PrecisionRow {
            model_name: name.clone(),
            scores,
        })?;
    }
    Ok(table)
}

fn split_markdown_row(line: &str) -> Result<Vec<String>> {
    let inner = line
        .trim()
        .strip_prefix('|')
        .and_then(|l| l.strip_suffix('|'))
        .ok_or_else(|| Error::Format(format!("not a markdown table row: {line:?}")))?;
    let mut cells = Vec::new();
    let mut cur = String::new();
    let mut chars = inner.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' if chars.peek() == Some(&'|') => {
                cur.push('|');
                chars.next();
            }
            '|' => cells.push(std::mem::take(&mut cur).trim().to_string()),
            _ => cur.push(c),
        }
    }
    cells.push(cur.trim().to_string());
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_row() -> PrecisionTable {
        let mut t = PrecisionTable::new(QualityLevel::default_sweep()).unwrap();
        t.push(PrecisionRow {
            model_name: "ResNet50".into(),
            scores: vec![0.7141, 0.5457, 0.4689, 0.3562],
        })
        .unwrap();
        t
    }

    #[test]
    fn paper_layout() {
        let csv = emit_table(&paper_row(), TableFormat::Csv);
        assert_eq!(
            csv,
            "model,Original,Quality 75,Quality 50,Quality 25\nResNet50,0.7141,0.5457,0.4689,0.3562\n"
        );
    }

    #[test]
    fn single_quality() {
        let mut t = PrecisionTable::new(vec![QualityLevel::Original]).unwrap();
        t.push(PrecisionRow {
            model_name: "m".into(),
            scores: vec![1.0],
        })
        .unwrap();
        assert_eq!(emit_table(&t, TableFormat::Csv).lines().count(), 2);
    }

    #[test]
    fn csv_to_markdown_round_trip() {
        let mut t = paper_row();
        t.push(PrecisionRow {
            model_name: "odd | name, here".into(),
            scores: vec![1.0, 0.25, 0.125, 0.0],
        })
        .unwrap();
        let csv = emit_table(&t, TableFormat::Csv);
        let from_csv = parse_table(&csv, TableFormat::Csv).unwrap();
        let md = emit_table(&from_csv, TableFormat::Markdown);
        let back = parse_table(&md, TableFormat::Markdown).unwrap();
        assert_eq!(back, t);
        assert!(md.starts_with("| model | Original | Quality 75 |"));
    }

    #[test]
    fn distinct_tables_distinct_text() {
        let a = paper_row();
        let mut b = PrecisionTable::new(QualityLevel::default_sweep()).unwrap();
        b.push(PrecisionRow {
            model_name: "ResNet50".into(),
            scores: vec![0.7141, 0.5457, 0.4689, 0.3563],
        })
        .unwrap();
        for f in [TableFormat::Csv, TableFormat::Markdown] {
            assert_ne!(emit_table(&a, f), emit_table(&b, f));
        }
    }
}
