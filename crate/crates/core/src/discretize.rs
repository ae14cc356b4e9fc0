//! Tercile discretization of feature columns into low / medium / high.
//!
//! Edges are the 1/3 and 2/3 quantiles (linear interpolation) of the
//! non-missing column values. A value equal to an edge goes to the lower bin.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::DiscretizeError;
use crate::features::{FeatureMatrix, RowKey};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Low,
    Medium,
    High,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Low, Label::Medium, Label::High];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Low => "low",
            Label::Medium => "medium",
            Label::High => "high",
        }
    }

    pub fn ordinal(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(Label::Low),
            "medium" => Ok(Label::Medium),
            "high" => Ok(Label::High),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinScheme {
    pub feature: String,
    pub edges: (f64, f64),
    pub dropped: bool,
}

pub fn fit_bins(feature: impl Into<String>, values: &[f64]) -> Result<BinScheme, DiscretizeError> {
    if values.len() < 3 {
        return Err(DiscretizeError::TooFewValues(values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(DiscretizeError::NonFinite);
    }
    let sorted = stats::sorted(values);
    let e1 = stats::quantile_sorted(&sorted, 1.0 / 3.0);
    let e2 = stats::quantile_sorted(&sorted, 2.0 / 3.0);
    Ok(BinScheme {
        feature: feature.into(),
        edges: (e1, e2),
        dropped: sorted[0] == sorted[sorted.len() - 1],
    })
}

impl BinScheme {
    pub fn apply(&self, value: f64) -> Result<Label, DiscretizeError> {
        if self.dropped {
            return Err(DiscretizeError::DroppedScheme(self.feature.clone()));
        }
        if !value.is_finite() {
            return Err(DiscretizeError::NonFinite);
        }
        let (e1, e2) = self.edges;
        Ok(if value <= e1 {
            Label::Low
        } else if value <= e2 {
            Label::Medium
        } else {
            Label::High
        })
    }
}

pub fn apply_bins(scheme: &BinScheme, value: f64) -> Result<Label, DiscretizeError> {
    scheme.apply(value)
}

/// Instances by nominal attributes, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalTable {
    rows: Vec<RowKey>,
    attributes: Vec<String>,
    columns: Vec<Vec<Label>>,
}

impl NominalTable {
    /// `columns[a][r]` is the label of attribute `a` on row `r`.
    pub fn new(rows: Vec<RowKey>, attributes: Vec<String>, columns: Vec<Vec<Label>>) -> Self {
        assert_eq!(attributes.len(), columns.len());
        assert!(columns.iter().all(|c| c.len() == rows.len()));
        NominalTable {
            rows,
            attributes,
            columns,
        }
    }

    pub fn rows(&self) -> &[RowKey] {
        &self.rows
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn column(&self, attr: usize) -> &[Label] {
        &self.columns[attr]
    }

    pub fn label(&self, row: usize, attr: usize) -> Label {
        self.columns[attr][row]
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a == name)
    }

    /// The sub-table made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> NominalTable {
        NominalTable {
            rows: rows.iter().map(|&r| self.rows[r].clone()).collect(),
            attributes: self.attributes.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["recording_id".to_string(), "slice_index".to_string()];
        header.extend(self.attributes.iter().cloned());
        w.write_record(&header)?;
        for (i, key) in self.rows.iter().enumerate() {
            let mut rec = vec![key.recording_id.clone(), key.slice_index.to_string()];
            rec.extend(self.columns.iter().map(|c| c[i].as_str().to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Discretized {
    pub table: NominalTable,
    pub schemes: Vec<BinScheme>,
    pub excluded_rows: Vec<RowKey>,
    pub warnings: Vec<String>,
}

/// Fits a scheme per column, drops constant (or too sparse) columns, then
/// removes every row that is missing a value in one of the kept columns.
pub fn discretize_matrix(matrix: &FeatureMatrix) -> Discretized {
    let mut warnings = Vec::new();
    let mut schemes = Vec::with_capacity(matrix.n_cols());
    let mut kept = Vec::new();
    for (c, id) in matrix.columns.iter().enumerate() {
        let name = id.to_string();
        let values: Vec<f64> = matrix.column(c).into_iter().flatten().collect();
        match fit_bins(name.clone(), &values) {
            Ok(s) if s.dropped => {
                warnings.push(format!("dropped constant column `{name}`"));
                schemes.push(s);
            }
            Ok(s) => {
                kept.push(c);
                schemes.push(s);
            }
            Err(e) => {
                warnings.push(format!("dropped column `{name}`: {e}"));
                schemes.push(BinScheme {
                    feature: name,
                    edges: (0.0, 0.0),
                    dropped: true,
                });
            }
        }
    }
    for w in &warnings {
        log::info!("{w}");
    }

    let mut rows = Vec::new();
    let mut excluded_rows = Vec::new();
    for r in 0..matrix.n_rows() {
        if kept.iter().all(|&c| matrix.get(r, c).is_some()) {
            rows.push(r);
        } else {
            excluded_rows.push(matrix.rows[r].clone());
        }
    }
    if !excluded_rows.is_empty() {
        let msg = format!(
            "excluded {} of {} rows with missing feature values",
            excluded_rows.len(),
            matrix.n_rows()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let columns = kept
        .iter()
        .map(|&c| {
            let scheme = &schemes[c];
            rows.iter()
                .map(|&r| {
                    scheme
                        .apply(matrix.get(r, c).expect("row filtered"))
                        .expect("kept scheme")
                })
                .collect()
        })
        .collect();
    let table = NominalTable::new(
        rows.iter().map(|&r| matrix.rows[r].clone()).collect(),
        kept.iter().map(|&c| schemes[c].feature.clone()).collect(),
        columns,
    );
    Discretized {
        table,
        schemes,
        excluded_rows,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Aggregator, Feature, FeatureId};
    use proptest::prelude::*;

    #[test]
    fn one_to_nine() {
        let values: Vec<f64> = (1..=9).map(f64::from).collect();
        let s = fit_bins("x", &values).unwrap();
        // order-statistic oracle: position q (n - 1) in the ranks 1..9
        assert!((s.edges.0 - (1.0 + 8.0 / 3.0)).abs() < 1e-12);
        assert!((s.edges.1 - (1.0 + 16.0 / 3.0)).abs() < 1e-12);
        let labels: Vec<Label> = values.iter().map(|&v| s.apply(v).unwrap()).collect();
        use Label::*;
        assert_eq!(labels, vec![Low, Low, Low, Medium, Medium, Medium, High, High, High]);
    }

    #[test]
    fn constant_column_is_dropped() {
        let s = fit_bins("x", &[4.0; 5]).unwrap();
        assert!(s.dropped);
        assert_eq!(s.apply(4.0), Err(DiscretizeError::DroppedScheme("x".into())));
        assert_eq!(fit_bins("x", &[1.0, 2.0]), Err(DiscretizeError::TooFewValues(2)));
    }

    #[test]
    fn heavy_ties() {
        // Q(1/3) sits between two zeros, Q(2/3) between two ones: the zeros
        // fall on e1 (low), the ones on e2 (medium), nothing is high
        let s = fit_bins("x", &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(s.edges, (0.0, 1.0));
        assert_eq!(s.apply(0.0).unwrap(), Label::Low);
        assert_eq!(s.apply(1.0).unwrap(), Label::Medium);
        assert!(!s.dropped);
    }

    #[test]
    fn boundary_rule() {
        let s = BinScheme {
            feature: "x".into(),
            edges: (1.0, 2.0),
            dropped: false,
        };
        assert_eq!(s.apply(1.0).unwrap(), Label::Low);
        assert_eq!(s.apply(2.0).unwrap(), Label::Medium);
        assert_eq!(s.apply(2.0000001).unwrap(), Label::High);
    }

    #[test]
    fn matrix_drops_missing_rows_and_constant_columns() {
        let cols = vec![
            FeatureId {
                aggregator: Aggregator::Mean,
                feature: Feature::Mean,
            },
            FeatureId {
                aggregator: Aggregator::Mean,
                feature: Feature::Variance,
            },
        ];
        let rows: Vec<RowKey> = (0..4).map(|i| RowKey::new("r", i)).collect();
        let cells = vec![
            Some(1.0),
            Some(0.0),
            Some(2.0),
            Some(0.0),
            None,
            Some(0.0),
            Some(3.0),
            Some(0.0),
        ];
        let d = discretize_matrix(&FeatureMatrix::new(rows, cols, cells));
        assert_eq!(d.table.attributes(), &["mean__mean".to_string()]);
        assert_eq!(d.table.n_rows(), 3);
        assert_eq!(d.excluded_rows, vec![RowKey::new("r", 2)]);
        assert_eq!(d.warnings.len(), 2);
    }

    proptest! {
        #[test]
        fn labels_are_monotone(values in prop::collection::vec(-1e6f64..1e6, 3..60), a in -1e6f64..1e6, b in -1e6f64..1e6) {
            let s = fit_bins("x", &values).unwrap();
            prop_assume!(!s.dropped);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(s.apply(lo).unwrap() <= s.apply(hi).unwrap());
            prop_assert_eq!(fit_bins("x", &values).unwrap(), s);
        }

        #[test]
        fn distinct_values_split_evenly(k in 1usize..30, seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut values: Vec<f64> = (0..3 * k).map(|i| i as f64 * 1.5 - 7.0).collect();
            values.shuffle(&mut rng);
            let s = fit_bins("x", &values).unwrap();
            let mut counts = [0usize; 3];
            for v in &values {
                counts[s.apply(*v).unwrap().ordinal()] += 1;
            }
            prop_assert_eq!(counts, [k, k, k]);
        }
    }
}
