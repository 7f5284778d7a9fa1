//! Numeric CSV input. A trailing `label` column is split off when present.

use std::fs::File;
use std::path::Path;

use gig_core::datasets::column_medians;

use crate::error::{CliError, CliResult};

pub struct DataTable {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Option<Vec<f64>>,
}

pub fn read(path: &Path) -> CliResult<DataTable> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let schema = |msg: String| CliError::Input(format!("{}: {msg}", path.display()));
    let mut rdr = csv::Reader::from_reader(file);
    let mut names: Vec<String> = rdr
        .headers()
        .map_err(|e| schema(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let has_label = names.last().is_some_and(|h| h == "label");
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| schema(e.to_string()))?;
        let mut vals = rec
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| schema(format!("row {}, column {}: not a number: {field:?}", i + 1, names[j])))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        if has_label {
            labels.push(vals.pop().expect("label column"));
        }
        rows.push(vals);
    }
    if has_label {
        names.pop();
    }
    if names.is_empty() {
        return Err(schema("no feature columns".into()));
    }
    Ok(DataTable {
        names,
        rows,
        labels: has_label.then_some(labels),
    })
}

pub fn check_arity(t: &DataTable, n_features: usize, path: &Path) -> CliResult<()> {
    if t.names.len() != n_features {
        return Err(CliError::Input(format!(
            "{}: {} feature columns, but the model expects {n_features}",
            path.display(),
            t.names.len()
        )));
    }
    Ok(())
}

impl DataTable {
    /// Values of a feature column, or of the label column by its name.
    pub fn column_by_name(&self, name: &str) -> CliResult<Vec<f64>> {
        if let Some(j) = self.names.iter().position(|n| n == name) {
            return Ok(self.rows.iter().map(|r| r[j]).collect());
        }
        match (&self.labels, name) {
            (Some(l), "label") => Ok(l.clone()),
            _ => Err(CliError::Input(format!("no column named {name:?}"))),
        }
    }

    pub fn median(&self) -> CliResult<Vec<f64>> {
        Ok(column_medians(&self.rows)?)
    }
}
