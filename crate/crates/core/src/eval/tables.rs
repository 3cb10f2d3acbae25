use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ablation::{AblationReport, TABLE_REGION_ORDER};
use super::metrics::Metrics;
use super::report::EvalReport;
use super::EvalError;
use crate::geo::Region;
use crate::label::{ClassSet, Label};

/// Round half away from zero on the shortest decimal form of `x`, so that
/// 0.635 becomes 0.64 even though its binary value is slightly below.
pub fn round_half_up(x: f64, places: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let s = format!("{}", x.abs());
    let (int, frac) = s.split_once('.').unwrap_or((&s, ""));
    let mut digits: Vec<u8> = int.bytes().chain(frac.bytes().chain(std::iter::repeat(b'0')).take(places)).map(|b| b - b'0').collect();
    if frac.as_bytes().get(places).is_some_and(|d| *d >= b'5') {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - places;
    let text: String = digits.iter().map(|d| char::from(b'0' + d)).collect();
    let body = if places == 0 {
        text
    } else {
        format!("{}.{}", &text[..split], &text[split..])
    };
    if x < 0.0 && body.bytes().any(|b| b != b'0' && b != b'.') {
        format!("-{body}")
    } else {
        body
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(usize),
    /// Rendered with two decimals.
    Num(f64),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(n) => n.to_string(),
            Cell::Num(x) => round_half_up(*x, 2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem.
    pub name: &'static str,
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(name: &'static str, title: &str, header: &[&str]) -> Table {
        Table {
            name,
            title: title.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn rendered(&self) -> Vec<Vec<String>> {
        self.rows.iter().map(|r| r.iter().map(Cell::render).collect()).collect()
    }

    pub fn to_markdown(&self) -> String {
        let esc = |s: &str| s.replace('|', "\\|");
        let mut out = format!("## {}\n\n| {} |\n|", self.title, self.header.join(" | "));
        for _ in &self.header {
            out.push_str("---|");
        }
        out.push('\n');
        for row in self.rendered() {
            out.push_str(&format!("| {} |\n", row.iter().map(|c| esc(c)).collect::<Vec<_>>().join(" | ")));
        }
        out
    }

    pub fn to_csv(&self) -> Result<String, EvalError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in self.rendered() {
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| EvalError::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 cells"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Markdown,
    Csv,
}

/// Everything the report stage gathers. Missing parts give tables with a
/// header and no rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportInputs {
    pub train_counts: BTreeMap<Label, usize>,
    pub test_counts: BTreeMap<Label, usize>,
    pub region_counts: BTreeMap<Region, BTreeMap<Label, usize>>,
    /// Seed-averaged ternary evaluations, one per model.
    pub models: Vec<EvalReport>,
    /// Binary toxicity evaluations: (model name, metrics).
    pub binary: Vec<(String, Metrics)>,
    pub ablation: Option<AblationReport>,
}

fn count_row(name: &str, counts: &BTreeMap<Label, usize>) -> Vec<Cell> {
    let mut row = vec![Cell::Text(name.into())];
    let mut total = 0;
    for l in Label::ALL {
        let n = counts.get(l).copied().unwrap_or(0);
        total += n;
        row.push(Cell::Int(n));
    }
    row.push(Cell::Int(total));
    row
}

pub fn build_tables(inputs: &ReportInputs) -> Vec<Table> {
    let mut t1 = Table::new("split_counts", "Train and test split by class", &["Split", "Direct", "Reporting", "None", "Total"]);
    if !inputs.train_counts.is_empty() || !inputs.test_counts.is_empty() {
        t1.rows.push(count_row("Train", &inputs.train_counts));
        t1.rows.push(count_row("Test", &inputs.test_counts));
    }

    let mut t2 = Table::new(
        "ternary_models",
        "Ternary classification, seed-averaged",
        &["Model", "Seeds", "Accuracy", "Precision", "Recall", "F1", "Parse failures"],
    );
    for r in &inputs.models {
        t2.rows.push(vec![
            Cell::Text(r.model_id.clone()),
            Cell::Text(r.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" ")),
            Cell::Num(r.metrics.accuracy),
            Cell::Num(r.metrics.precision),
            Cell::Num(r.metrics.recall),
            Cell::Num(r.metrics.f1),
            Cell::Int(r.parse_failure_count),
        ]);
    }

    let mut a1 = Table::new("region_counts", "Class counts per region", &["Region", "Direct", "Reporting", "None", "Total"]);
    if !inputs.region_counts.is_empty() {
        let mut totals: BTreeMap<Label, usize> = BTreeMap::new();
        for region in TABLE_REGION_ORDER {
            let counts = inputs.region_counts.get(&region).cloned().unwrap_or_default();
            for (l, n) in &counts {
                *totals.entry(*l).or_default() += n;
            }
            a1.rows.push(count_row(region.display_name(), &counts));
        }
        a1.rows.push(count_row("Total", &totals));
    }

    let mut a2 = Table::new("binary_models", "Binary toxicity classification", &["Model", "Accuracy", "Precision", "Recall", "F1"]);
    for (name, m) in &inputs.binary {
        a2.rows.push(vec![
            Cell::Text(name.clone()),
            Cell::Num(m.accuracy),
            Cell::Num(m.precision),
            Cell::Num(m.recall),
            Cell::Num(m.f1),
        ]);
    }

    let mut a3 = Table::new(
        "region_ablation",
        "Weighted F1 when training on dominant regions only",
        &["Region", "Direct", "Reporting", "None", "Overall", "Full-training overall"],
    );
    if let Some(ab) = &inputs.ablation {
        for r in &ab.rows {
            a3.rows.push(vec![
                Cell::Text(r.region.clone()),
                Cell::Num(r.direct_f1),
                Cell::Num(r.reporting_f1),
                Cell::Num(r.none_f1),
                Cell::Num(r.overall_f1),
                Cell::Num(r.baseline_overall_f1),
            ]);
        }
    }
    vec![t1, t2, a1, a2, a3]
}

/// Write every table in each requested format plus `summary.json`.
/// Returns the written paths in a fixed order.
pub fn emit_tables(inputs: &ReportInputs, dir: &Path, formats: &[TableFormat]) -> Result<Vec<PathBuf>, EvalError> {
    std::fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
    let mut written = Vec::new();
    let mut write = |path: PathBuf, body: String| -> Result<(), EvalError> {
        std::fs::write(&path, body).map_err(|e| EvalError::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    for table in build_tables(inputs) {
        for f in formats {
            match f {
                TableFormat::Markdown => write(dir.join(format!("{}.md", table.name)), table.to_markdown())?,
                TableFormat::Csv => write(dir.join(format!("{}.csv", table.name)), table.to_csv()?)?,
            }
        }
    }
    let json = serde_json::to_string_pretty(inputs).map_err(|e| EvalError::Json(e.to_string()))?;
    write(dir.join("summary.json"), json + "\n")?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::weighted_metrics;
    use proptest::prelude::*;

    #[test]
    fn half_up_cases() {
        assert_eq!(round_half_up(0.635, 2), "0.64");
        assert_eq!(round_half_up(0.625, 2), "0.63");
        assert_eq!(round_half_up(0.6349999, 2), "0.63");
        assert_eq!(round_half_up(0.995, 2), "1.00");
        assert_eq!(round_half_up(1.0, 2), "1.00");
        assert_eq!(round_half_up(0.0, 2), "0.00");
        assert_eq!(round_half_up(-0.125, 2), "-0.13");
        assert_eq!(round_half_up(-0.001, 2), "0.00");
        assert_eq!(round_half_up(2.5, 0), "3");
        assert_eq!(round_half_up(1e-7, 2), "0.00");
    }

    fn sample_inputs() -> ReportInputs {
        let counts = |d, r, n| BTreeMap::from([(Label::Direct, d), (Label::Reporting, r), (Label::None, n)]);
        let mut region_counts = BTreeMap::new();
        for (reg, d, r, n) in [
            (Region::Africa, 80, 110, 78),
            (Region::Europe, 100, 150, 111),
            (Region::NorthAmerica, 120, 150, 107),
            (Region::Oceania, 60, 100, 69),
            (Region::SouthAsia, 60, 80, 62),
            (Region::Other, 100, 133, 146),
        ] {
            region_counts.insert(reg, counts(d, r, n));
        }
        let m = weighted_metrics(&[Label::Direct, Label::None, Label::None], &[Label::Direct, Label::None, Label::Direct]).unwrap();
        ReportInputs {
            train_counts: counts(347, 494, 389),
            test_counts: counts(173, 229, 184),
            region_counts,
            models: Vec::new(),
            binary: vec![("fine-tuned, with, commas".into(), m)],
            ablation: None,
        }
    }

    #[test]
    fn five_tables_and_totals() {
        let tables = build_tables(&sample_inputs());
        assert_eq!(tables.len(), 5);
        let a1 = tables[2].rendered();
        assert_eq!(a1.last().unwrap(), &["Total", "520", "723", "573", "1816"]);
        assert_eq!(tables[0].rendered()[0], ["Train", "347", "494", "389", "1230"]);
        assert!(tables[4].rows.is_empty());
        assert!(tables[3].to_markdown().contains("| fine-tuned, with, commas | 0.67 |"));
    }

    #[test]
    fn csv_reparses_identically_and_files_written() {
        let inputs = sample_inputs();
        for t in build_tables(&inputs) {
            let csv = t.to_csv().unwrap();
            let mut rdr = csv::Reader::from_reader(csv.as_bytes());
            let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
            assert_eq!(header, t.header);
            let rows: Vec<Vec<String>> = rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
            assert_eq!(rows, t.rendered());
        }
        let dir = tempfile::tempdir().unwrap();
        let files = emit_tables(&inputs, dir.path(), &[TableFormat::Markdown]).unwrap();
        assert_eq!(files.len(), 6);
        let files = emit_tables(&inputs, dir.path(), &[TableFormat::Markdown, TableFormat::Csv]).unwrap();
        assert_eq!(files.len(), 11);
        let back: ReportInputs = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(back, inputs);
    }

    proptest! {
        #[test]
        fn rounding_matches_decimal_oracle(cents in 0u32..100_000, tail in 0u32..1000) {
            // x = cents/100 + tail/100000 has an exact short decimal form
            let x: f64 = format!("{}.{:02}{:03}", cents / 100, cents % 100, tail).parse().unwrap();
            let expect = cents + u32::from(tail >= 500);
            prop_assert_eq!(round_half_up(x, 2), format!("{}.{:02}", expect / 100, expect % 100));
        }
    }
}
