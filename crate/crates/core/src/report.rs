//! Dataset × system result tables with average rows.

use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("missing value for dataset `{dataset}`, system `{system}` in an averaged row")]
    MissingCell { dataset: String, system: String },
    #[error("subset names unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("no datasets to report")]
    Empty,
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// dataset → system → value, in presentation order.
pub type ResultGrid = IndexMap<String, IndexMap<String, f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingCells {
    /// Any gap inside an averaged set is an error.
    #[default]
    Error,
    /// Gaps render as `-`, and so does the average of any system with a gap.
    Blank,
}

#[derive(Debug, Clone, Default)]
pub struct ReportOptions {
    pub subset: Option<Vec<String>>,
    pub subset_label: Option<String>,
    pub missing: MissingCells,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub label: String,
    pub cells: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub systems: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub average: ReportRow,
    pub subset_average: Option<ReportRow>,
}

pub fn aggregate_report(results: &ResultGrid, options: &ReportOptions) -> Result<Report, ReportError> {
    if results.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut systems: Vec<String> = Vec::new();
    for row in results.values() {
        for s in row.keys() {
            if !systems.contains(s) {
                systems.push(s.clone());
            }
        }
    }
    let rows: Vec<ReportRow> = results
        .iter()
        .map(|(dataset, row)| ReportRow {
            label: dataset.clone(),
            cells: systems.iter().map(|s| row.get(s).copied()).collect(),
        })
        .collect();

    let all: Vec<&str> = results.keys().map(String::as_str).collect();
    let average = average_row("Avg", &all, results, &systems, options.missing)?;
    let subset_average = match &options.subset {
        None => None,
        Some(names) => {
            for n in names {
                if !results.contains_key(n) {
                    return Err(ReportError::UnknownDataset(n.clone()));
                }
            }
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            let label = options.subset_label.as_deref().unwrap_or("Avg subset");
            Some(average_row(label, &names, results, &systems, options.missing)?)
        }
    };
    Ok(Report {
        systems,
        rows,
        average,
        subset_average,
    })
}

fn average_row(
    label: &str,
    datasets: &[&str],
    results: &ResultGrid,
    systems: &[String],
    missing: MissingCells,
) -> Result<ReportRow, ReportError> {
    let mut cells = Vec::with_capacity(systems.len());
    for system in systems {
        let mut sum = 0.0;
        let mut complete = true;
        for &d in datasets {
            match results[d].get(system) {
                Some(v) => sum += v,
                None if missing == MissingCells::Error => {
                    return Err(ReportError::MissingCell {
                        dataset: d.to_string(),
                        system: system.clone(),
                    })
                }
                None => complete = false,
            }
        }
        cells.push(complete.then(|| sum / datasets.len() as f64));
    }
    Ok(ReportRow {
        label: label.to_string(),
        cells,
    })
}

/// Formats `x` to three decimals, rounding halves away from zero. The value
/// is first snapped to nine decimals so binary noise around a decimal half
/// (0.4245 stored as 0.42449999…) does not flip the result.
pub fn format_3dp(x: f64) -> String {
    let snapped = (x * 1e9).round() / 1e9;
    let r = (snapped * 1e3).round() / 1e3;
    format!("{r:.3}")
}

fn cell_text(c: Option<f64>) -> String {
    c.map(format_3dp).unwrap_or_else(|| "-".to_string())
}

impl Report {
    fn all_rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows
            .iter()
            .chain(std::iter::once(&self.average))
            .chain(self.subset_average.iter())
    }

    /// Aligned plain-text table with a rule above the average rows.
    pub fn render_text(&self) -> String {
        let mut widths: Vec<usize> = std::iter::once("dataset".len())
            .chain(self.systems.iter().map(String::len))
            .collect();
        for row in self.all_rows() {
            widths[0] = widths[0].max(row.label.chars().count());
            for (i, c) in row.cells.iter().enumerate() {
                widths[i + 1] = widths[i + 1].max(cell_text(*c).len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, label: &str, cells: &[String]| {
            let _ = write!(out, "{label:<w$}", w = widths[0]);
            for (i, c) in cells.iter().enumerate() {
                let _ = write!(out, "  {c:>w$}", w = widths[i + 1]);
            }
            out.push('\n');
        };
        line(&mut out, "dataset", &self.systems);
        let rule = "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1));
        out.push_str(&rule);
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.cells.iter().map(|c| cell_text(*c)).collect();
            line(&mut out, &row.label, &cells);
        }
        out.push_str(&rule);
        out.push('\n');
        for row in std::iter::once(&self.average).chain(self.subset_average.iter()) {
            let cells: Vec<String> = row.cells.iter().map(|c| cell_text(*c)).collect();
            line(&mut out, &row.label, &cells);
        }
        out
    }

    /// CSV: `dataset,<system>...`, one row per dataset, then the average rows.
    pub fn render_csv(&self) -> Result<String, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(std::iter::once("dataset").chain(self.systems.iter().map(String::as_str)))?;
        for row in self.all_rows() {
            let cells = row.cells.iter().map(|c| cell_text(*c));
            w.write_record(std::iter::once(row.label.clone()).chain(cells))?;
        }
        let bytes = w.into_inner().map_err(|e| ReportError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Reads a wide CSV (`dataset,<system>...`) into a grid. Empty cells and `-`
/// are treated as missing.
pub fn load_grid_csv(path: impl AsRef<Path>) -> Result<ResultGrid, ReportError> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let systems: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut grid = ResultGrid::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let dataset = record.get(0).unwrap_or_default().to_string();
        let mut row = IndexMap::new();
        for (system, cell) in systems.iter().zip(record.iter().skip(1)) {
            let cell = cell.trim();
            if cell.is_empty() || cell == "-" {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| ReportError::Parse {
                path: path.display().to_string(),
                reason: format!("row {}: `{cell}` is not a number", i + 2),
            })?;
            row.insert(system.clone(), v);
        }
        grid.insert(dataset, row);
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[(&str, &[(&str, f64)])]) -> ResultGrid {
        rows.iter()
            .map(|(d, cells)| {
                (
                    d.to_string(),
                    cells.iter().map(|(s, v)| (s.to_string(), *v)).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn cells_render_verbatim() {
        let g = grid(&[("TREC-Covid", &[("BM25", 0.594)]), ("SciFact", &[("BM25", 0.678)])]);
        let r = aggregate_report(&g, &ReportOptions::default()).unwrap();
        let text = r.render_text();
        assert!(text.contains("0.594"));
        assert!(text.contains("0.678"));
        assert_eq!(r.average.cells[0], Some((0.594 + 0.678) / 2.0));
    }

    #[test]
    fn single_dataset_average() {
        let g = grid(&[("x", &[("s", 0.25)])]);
        let r = aggregate_report(&g, &ReportOptions::default()).unwrap();
        assert_eq!(r.average.cells, vec![Some(0.25)]);
    }

    #[test]
    fn missing_cell_errors_or_blanks() {
        let g = grid(&[("a", &[("s", 0.5), ("t", 0.1)]), ("b", &[("s", 0.3)])]);
        let err = aggregate_report(&g, &ReportOptions::default()).unwrap_err();
        assert!(
            matches!(&err, ReportError::MissingCell { dataset, system } if dataset == "b" && system == "t"),
            "{err}"
        );
        let opts = ReportOptions {
            missing: MissingCells::Blank,
            subset: Some(vec!["a".into()]),
            subset_label: Some("Avg A".into()),
        };
        let r = aggregate_report(&g, &opts).unwrap();
        assert_eq!(r.average.cells[1], None);
        assert_eq!(r.subset_average.as_ref().unwrap().cells, vec![Some(0.5), Some(0.1)]);
        assert!(r.render_csv().unwrap().ends_with("Avg A,0.500,0.100\n"));
    }

    #[test]
    fn unknown_subset_dataset() {
        let g = grid(&[("a", &[("s", 0.5)])]);
        let opts = ReportOptions {
            subset: Some(vec!["zz".into()]),
            ..Default::default()
        };
        assert!(matches!(aggregate_report(&g, &opts), Err(ReportError::UnknownDataset(_))));
    }

    #[test]
    fn rounding_half_away_from_zero() {
        assert_eq!(format_3dp(0.4245), "0.425");
        assert_eq!(format_3dp(0.4235), "0.424");
        assert_eq!(format_3dp(0.42394444), "0.424");
        assert_eq!(format_3dp(-0.0005), "-0.001");
        assert_eq!(format_3dp(1.0), "1.000");
    }

    #[test]
    fn csv_layout() {
        let g = grid(&[("a", &[("s", 0.5), ("t", 0.25)])]);
        let r = aggregate_report(&g, &ReportOptions::default()).unwrap();
        assert_eq!(r.render_csv().unwrap(), "dataset,s,t\na,0.500,0.250\nAvg,0.500,0.250\n");
    }
}
