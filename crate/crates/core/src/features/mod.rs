//! Interpretable per-slice feature catalog and the feature matrix.
//!
//! Every catalog entry maps one channel window to a real number or to
//! `None` (missing) when the feature is undefined on that window. Per-channel
//! values are then aggregated across the channels of one role, which gives
//! column names such as `mean__longest_strike_below_mean` or
//! `std__quantile__q_0.3`.

pub mod complexity;
pub mod shape;
pub mod spectral;

use std::cell::OnceCell;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::FeatureError;
use crate::ingest::{ChannelRole, RecordingGroup, Slice};
use crate::stats;

pub use shape::ChangeAgg;
use spectral::Periodogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrendAttr {
    Slope,
    Intercept,
    RSquared,
}

impl TrendAttr {
    fn as_str(self) -> &'static str {
        match self {
            TrendAttr::Slope => "slope",
            TrendAttr::Intercept => "intercept",
            TrendAttr::RSquared => "r_squared",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feature {
    Mean,
    Variance,
    StandardDeviation,
    Quantile {
        q: f64,
    },
    RootMeanSquare,
    MeanChange,
    MeanAbsChange,
    LongestStrikeBelowMean,
    LongestStrikeAboveMean,
    NumberPeaks {
        n: usize,
    },
    RatioBeyondRSigma {
        r: f64,
    },
    BinnedEntropy {
        max_bins: usize,
    },
    SampleEntropy {
        m: usize,
        r_frac: f64,
    },
    LempelZivComplexity {
        bins: usize,
    },
    CidCe {
        normalize: bool,
    },
    Autocorrelation {
        lag: usize,
    },
    BandPower {
        f_lo: f64,
        f_hi: f64,
    },
    PeriodogramCoeff {
        k: usize,
    },
    FourierEntropy {
        bins: usize,
    },
    ChangeQuantiles {
        ql: f64,
        qh: f64,
        isabs: bool,
        agg: ChangeAgg,
    },
    LinearTrend {
        attr: TrendAttr,
    },
}

pub const BASE_NAMES: [&str; 21] = [
    "mean",
    "variance",
    "standard_deviation",
    "quantile",
    "root_mean_square",
    "mean_change",
    "mean_abs_change",
    "longest_strike_below_mean",
    "longest_strike_above_mean",
    "number_peaks",
    "ratio_beyond_r_sigma",
    "binned_entropy",
    "sample_entropy",
    "lempel_ziv_complexity",
    "cid_ce",
    "autocorrelation",
    "band_power",
    "periodogram_coeff",
    "fourier_entropy",
    "change_quantiles",
    "linear_trend",
];

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Int(usize),
    Float(f64),
    Bool(bool),
    Str(&'static str),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v:?}"),
            ParamValue::Bool(true) => f.write_str("True"),
            ParamValue::Bool(false) => f.write_str("False"),
            ParamValue::Str(s) => write!(f, "\"{s}\""),
        }
    }
}

impl Feature {
    pub fn base_name(&self) -> &'static str {
        use Feature::*;
        match self {
            Mean => "mean",
            Variance => "variance",
            StandardDeviation => "standard_deviation",
            Quantile { .. } => "quantile",
            RootMeanSquare => "root_mean_square",
            MeanChange => "mean_change",
            MeanAbsChange => "mean_abs_change",
            LongestStrikeBelowMean => "longest_strike_below_mean",
            LongestStrikeAboveMean => "longest_strike_above_mean",
            NumberPeaks { .. } => "number_peaks",
            RatioBeyondRSigma { .. } => "ratio_beyond_r_sigma",
            BinnedEntropy { .. } => "binned_entropy",
            SampleEntropy { .. } => "sample_entropy",
            LempelZivComplexity { .. } => "lempel_ziv_complexity",
            CidCe { .. } => "cid_ce",
            Autocorrelation { .. } => "autocorrelation",
            BandPower { .. } => "band_power",
            PeriodogramCoeff { .. } => "periodogram_coeff",
            FourierEntropy { .. } => "fourier_entropy",
            ChangeQuantiles { .. } => "change_quantiles",
            LinearTrend { .. } => "linear_trend",
        }
    }

    /// Parameters in alphabetical order of their names.
    pub fn params(&self) -> Vec<(&'static str, ParamValue)> {
        use Feature::*;
        use ParamValue as P;
        match *self {
            Quantile { q } => vec![("q", P::Float(q))],
            NumberPeaks { n } => vec![("n", P::Int(n))],
            RatioBeyondRSigma { r } => vec![("r", P::Float(r))],
            BinnedEntropy { max_bins } => vec![("max_bins", P::Int(max_bins))],
            SampleEntropy { m, r_frac } => vec![("m", P::Int(m)), ("r_frac", P::Float(r_frac))],
            LempelZivComplexity { bins } => vec![("bins", P::Int(bins))],
            CidCe { normalize } => vec![("normalize", P::Bool(normalize))],
            Autocorrelation { lag } => vec![("lag", P::Int(lag))],
            BandPower { f_lo, f_hi } => vec![("f_hi", P::Float(f_hi)), ("f_lo", P::Float(f_lo))],
            PeriodogramCoeff { k } => vec![("k", P::Int(k))],
            FourierEntropy { bins } => vec![("bins", P::Int(bins))],
            ChangeQuantiles { ql, qh, isabs, agg } => vec![
                (
                    "f_agg",
                    P::Str(match agg {
                        ChangeAgg::Mean => "mean",
                        ChangeAgg::Var => "var",
                    }),
                ),
                ("isabs", P::Bool(isabs)),
                ("qh", P::Float(qh)),
                ("ql", P::Float(ql)),
            ],
            LinearTrend { attr } => vec![("attr", P::Str(attr.as_str()))],
            _ => Vec::new(),
        }
    }

    /// The variants selected when only the base name is requested.
    pub fn defaults(base: &str) -> Option<Vec<Feature>> {
        use Feature::*;
        let v = match base {
            "mean" => vec![Mean],
            "variance" => vec![Variance],
            "standard_deviation" => vec![StandardDeviation],
            "quantile" => (1..=9).map(|i| Quantile { q: i as f64 / 10.0 }).collect(),
            "root_mean_square" => vec![RootMeanSquare],
            "mean_change" => vec![MeanChange],
            "mean_abs_change" => vec![MeanAbsChange],
            "longest_strike_below_mean" => vec![LongestStrikeBelowMean],
            "longest_strike_above_mean" => vec![LongestStrikeAboveMean],
            "number_peaks" => [1, 3, 5].map(|n| NumberPeaks { n }).to_vec(),
            "ratio_beyond_r_sigma" => [0.5, 1.0, 1.5, 2.0, 2.5, 3.0].map(|r| RatioBeyondRSigma { r }).to_vec(),
            "binned_entropy" => vec![BinnedEntropy { max_bins: 10 }],
            "sample_entropy" => vec![SampleEntropy { m: 2, r_frac: 0.2 }],
            "lempel_ziv_complexity" => [2, 3, 5, 10, 100].map(|bins| LempelZivComplexity { bins }).to_vec(),
            "cid_ce" => vec![CidCe { normalize: true }, CidCe { normalize: false }],
            "autocorrelation" => [1, 2, 3, 5, 10].map(|lag| Autocorrelation { lag }).to_vec(),
            "band_power" => [(0.0, 0.25), (0.25, 0.5), (0.5, 0.75), (0.75, 1.0)]
                .map(|(f_lo, f_hi)| BandPower { f_lo, f_hi })
                .to_vec(),
            "periodogram_coeff" => [1, 2, 3].map(|k| PeriodogramCoeff { k }).to_vec(),
            "fourier_entropy" => [5, 10].map(|bins| FourierEntropy { bins }).to_vec(),
            "change_quantiles" => {
                let mut v = Vec::new();
                for (ql, qh) in [(0.2, 0.6), (0.2, 0.8), (0.4, 0.6)] {
                    for isabs in [false, true] {
                        for agg in [ChangeAgg::Mean, ChangeAgg::Var] {
                            v.push(ChangeQuantiles { ql, qh, isabs, agg });
                        }
                    }
                }
                v
            }
            "linear_trend" => [TrendAttr::Slope, TrendAttr::Intercept, TrendAttr::RSquared]
                .map(|attr| LinearTrend { attr })
                .to_vec(),
            _ => return None,
        };
        Some(v)
    }

    pub fn default_catalog() -> Vec<Feature> {
        BASE_NAMES
            .iter()
            .flat_map(|b| Feature::defaults(b).unwrap_or_default())
            .collect()
    }

    fn from_params(base: &str, raw: &BTreeMap<&str, &str>) -> Result<Feature, FeatureError> {
        use Feature::*;
        let bad = |param: &str| FeatureError::BadParameter {
            feature: base.to_string(),
            param: param.to_string(),
        };
        let get = |name: &'static str| raw.get(name).copied().ok_or_else(|| bad(name));
        let float = |name: &'static str| -> Result<f64, FeatureError> {
            get(name)?
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(name))
        };
        let int =
            |name: &'static str| -> Result<usize, FeatureError> { get(name)?.parse::<usize>().map_err(|_| bad(name)) };
        let boolean = |name: &'static str| -> Result<bool, FeatureError> {
            match get(name)? {
                "True" | "true" => Ok(true),
                "False" | "false" => Ok(false),
                _ => Err(bad(name)),
            }
        };
        let string = |name: &'static str| -> Result<&str, FeatureError> { Ok(get(name)?.trim_matches('"')) };
        let feature = match base {
            "quantile" => Quantile { q: float("q")? },
            "number_peaks" => NumberPeaks { n: int("n")? },
            "ratio_beyond_r_sigma" => RatioBeyondRSigma { r: float("r")? },
            "binned_entropy" => BinnedEntropy {
                max_bins: int("max_bins")?,
            },
            "sample_entropy" => SampleEntropy {
                m: int("m")?,
                r_frac: float("r_frac")?,
            },
            "lempel_ziv_complexity" => LempelZivComplexity { bins: int("bins")? },
            "cid_ce" => CidCe {
                normalize: boolean("normalize")?,
            },
            "autocorrelation" => Autocorrelation { lag: int("lag")? },
            "band_power" => BandPower {
                f_lo: float("f_lo")?,
                f_hi: float("f_hi")?,
            },
            "periodogram_coeff" => PeriodogramCoeff { k: int("k")? },
            "fourier_entropy" => FourierEntropy { bins: int("bins")? },
            "change_quantiles" => ChangeQuantiles {
                ql: float("ql")?,
                qh: float("qh")?,
                isabs: boolean("isabs")?,
                agg: match string("f_agg")? {
                    "mean" => ChangeAgg::Mean,
                    "var" => ChangeAgg::Var,
                    _ => return Err(bad("f_agg")),
                },
            },
            "linear_trend" => LinearTrend {
                attr: match string("attr")? {
                    "slope" => TrendAttr::Slope,
                    "intercept" => TrendAttr::Intercept,
                    "r_squared" => TrendAttr::RSquared,
                    _ => return Err(bad("attr")),
                },
            },
            other => {
                let mut defaults =
                    Feature::defaults(other).ok_or_else(|| FeatureError::UnknownFeature(other.to_string()))?;
                if defaults.len() != 1 {
                    return Err(FeatureError::UnknownFeature(other.to_string()));
                }
                defaults.remove(0)
            }
        };
        let expected: Vec<&str> = feature.params().iter().map(|(n, _)| *n).collect();
        if let Some(extra) = raw.keys().find(|k| !expected.contains(k)) {
            return Err(bad(extra));
        }
        Ok(feature)
    }

    pub fn compute(&self, ctx: &WindowContext<'_>) -> Option<f64> {
        use Feature::*;
        let w = ctx.values;
        if w.is_empty() {
            return None;
        }
        let value = match *self {
            Mean => Some(shape::mean(w)),
            Variance => Some(shape::variance(w)),
            StandardDeviation => Some(shape::standard_deviation(w)),
            Quantile { q } => Some(shape::quantile(w, q)),
            RootMeanSquare => Some(shape::root_mean_square(w)),
            MeanChange => shape::mean_change(w),
            MeanAbsChange => shape::mean_abs_change(w),
            LongestStrikeBelowMean => (w.len() >= 2).then(|| shape::longest_strike_below_mean(w) as f64),
            LongestStrikeAboveMean => (w.len() >= 2).then(|| shape::longest_strike_above_mean(w) as f64),
            NumberPeaks { n } => shape::number_peaks(w, n).map(|c| c as f64),
            RatioBeyondRSigma { r } => (w.len() >= 2).then(|| shape::ratio_beyond_r_sigma(w, r)),
            BinnedEntropy { max_bins } => ctx
                .complexity_ok()
                .then(|| complexity::binned_entropy(w, max_bins))
                .flatten(),
            SampleEntropy { m, r_frac } => ctx
                .complexity_ok()
                .then(|| complexity::sample_entropy(w, m, r_frac))
                .flatten(),
            LempelZivComplexity { bins } => ctx
                .complexity_ok()
                .then(|| complexity::lempel_ziv_complexity(w, bins))
                .flatten(),
            CidCe { normalize } => ctx.complexity_ok().then(|| complexity::cid_ce(w, normalize)),
            Autocorrelation { lag } => complexity::autocorrelation(w, lag),
            BandPower { f_lo, f_hi } => ctx.periodogram().map(|p| p.band_power(f_lo, f_hi)),
            PeriodogramCoeff { k } => ctx.periodogram().and_then(|p| p.coeff(k)),
            FourierEntropy { bins } => ctx.periodogram().map(|p| p.entropy(bins)),
            ChangeQuantiles { ql, qh, isabs, agg } => shape::change_quantiles(w, ql, qh, isabs, agg),
            LinearTrend { attr } => shape::linear_trend(w).map(|t| match attr {
                TrendAttr::Slope => t.slope,
                TrendAttr::Intercept => t.intercept,
                TrendAttr::RSquared => t.r_squared,
            }),
        };
        value.filter(|v| v.is_finite())
    }

    /// Convenience for evaluating one feature on a bare window.
    pub fn evaluate(&self, values: &[f64], sample_rate: f64) -> Option<f64> {
        self.compute(&WindowContext::new(values, sample_rate))
    }
}

fn render_base(f: &mut fmt::Formatter<'_>, feature: &Feature) -> fmt::Result {
    f.write_str(feature.base_name())?;
    for (name, value) in feature.params() {
        write!(f, "__{name}_{value}")?;
    }
    Ok(())
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        render_base(f, self)
    }
}

impl FromStr for Feature {
    type Err = FeatureError;

    /// Parses the rendered form `base[__param_value...]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let base = BASE_NAMES
            .iter()
            .filter(|b| s == **b || s.starts_with(&format!("{b}__")))
            .max_by_key(|b| b.len())
            .ok_or_else(|| FeatureError::UnknownFeature(s.to_string()))?;
        let rest = &s[base.len()..];
        let names = param_names(base);
        let mut raw = BTreeMap::new();
        for token in rest.split("__").skip(1) {
            let name = names
                .iter()
                .filter(|n| token.starts_with(&format!("{n}_")))
                .max_by_key(|n| n.len())
                .ok_or_else(|| FeatureError::BadParameter {
                    feature: base.to_string(),
                    param: token.to_string(),
                })?;
            raw.insert(*name, &token[name.len() + 1..]);
        }
        Feature::from_params(base, &raw)
    }
}

fn param_names(base: &str) -> Vec<&'static str> {
    Feature::defaults(base)
        .and_then(|d| d.first().map(|f| f.params().into_iter().map(|(n, _)| n).collect()))
        .unwrap_or_default()
}

/// Expands a selection list. A bare base name selects its default variants;
/// a rendered name with parameters selects exactly that variant. An empty
/// list selects the whole default catalog.
pub fn parse_selection<S: AsRef<str>>(entries: &[S]) -> Result<Vec<Feature>, FeatureError> {
    if entries.is_empty() {
        return Ok(Feature::default_catalog());
    }
    let mut out: BTreeMap<String, Feature> = BTreeMap::new();
    for entry in entries {
        let entry = entry.as_ref().trim();
        let features = match Feature::defaults(entry) {
            Some(d) => d,
            None => vec![entry.parse()?],
        };
        for f in features {
            out.insert(f.to_string(), f);
        }
    }
    Ok(out.into_values().collect())
}

/// Evaluation context for one channel window; the periodogram is computed at
/// most once and shared by the spectral features.
pub struct WindowContext<'a> {
    pub values: &'a [f64],
    pub sample_rate: f64,
    periodogram: OnceCell<Option<Periodogram>>,
}

impl<'a> WindowContext<'a> {
    pub fn new(values: &'a [f64], sample_rate: f64) -> Self {
        WindowContext {
            values,
            sample_rate,
            periodogram: OnceCell::new(),
        }
    }

    fn periodogram(&self) -> Option<&Periodogram> {
        self.periodogram
            .get_or_init(|| Periodogram::new(self.values, self.sample_rate))
            .as_ref()
    }

    fn complexity_ok(&self) -> bool {
        self.values.len() >= 4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Mean,
    Std,
    None,
}

impl Aggregator {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregator::Mean => "mean",
            Aggregator::Std => "std",
            Aggregator::None => "none",
        }
    }
}

impl FromStr for Aggregator {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "mean" => Ok(Aggregator::Mean),
            "std" => Ok(Aggregator::Std),
            "none" => Ok(Aggregator::None),
            other => Err(FeatureError::UnknownAggregator(other.to_string())),
        }
    }
}

/// Mean or population standard deviation of per-channel values, skipping
/// missing ones. `Std` needs two present values; `None` passes a single
/// present value through.
pub fn aggregate_across_channels(per_channel: &[Option<f64>], aggregator: Aggregator) -> Option<f64> {
    let present: Vec<f64> = per_channel.iter().flatten().copied().collect();
    match aggregator {
        Aggregator::Mean if !present.is_empty() => Some(stats::mean(&present)),
        Aggregator::Std if present.len() >= 2 => Some(stats::std_dev(&present)),
        Aggregator::None if present.len() == 1 => Some(present[0]),
        _ => None,
    }
    .filter(|v| v.is_finite())
}

/// Column identifier: an aggregator applied to a catalog feature. Renders as
/// `<aggregator>__<feature>`; the `none` aggregator renders without prefix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureId {
    pub aggregator: Aggregator,
    pub feature: Feature,
}

impl FeatureId {
    pub fn base_name(&self) -> &'static str {
        self.feature.base_name()
    }

    pub fn params(&self) -> Vec<(&'static str, ParamValue)> {
        self.feature.params()
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.aggregator != Aggregator::None {
            write!(f, "{}__", self.aggregator.as_str())?;
        }
        render_base(f, &self.feature)
    }
}

impl FromStr for FeatureId {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        for (prefix, aggregator) in [("mean__", Aggregator::Mean), ("std__", Aggregator::Std)] {
            if let Some(rest) = s.strip_prefix(prefix) {
                if let Ok(feature) = rest.parse() {
                    return Ok(FeatureId { aggregator, feature });
                }
            }
        }
        Ok(FeatureId {
            aggregator: Aggregator::None,
            feature: s.parse()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub recording_id: String,
    pub slice_index: usize,
}

impl RowKey {
    pub fn new(recording_id: impl Into<String>, slice_index: usize) -> Self {
        RowKey {
            recording_id: recording_id.into(),
            slice_index,
        }
    }
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.recording_id, self.slice_index)
    }
}

/// Instances (recording, slice) by feature columns; `None` cells are missing.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<RowKey>,
    pub columns: Vec<FeatureId>,
    cells: Vec<Option<f64>>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<RowKey>, columns: Vec<FeatureId>, cells: Vec<Option<f64>>) -> Self {
        assert_eq!(
            cells.len(),
            rows.len() * columns.len(),
            "cell count must equal rows x columns"
        );
        FeatureMatrix { rows, columns, cells }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * self.columns.len() + col]
    }

    pub fn row(&self, row: usize) -> &[Option<f64>] {
        let w = self.columns.len();
        &self.cells[row * w..(row + 1) * w]
    }

    pub fn column(&self, col: usize) -> Vec<Option<f64>> {
        (0..self.rows.len()).map(|r| self.get(r, col)).collect()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(ToString::to_string).collect()
    }

    /// `recording_id,slice_index,<feature columns...>`; missing cells are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["recording_id".to_string(), "slice_index".to_string()];
        header.extend(self.column_names());
        w.write_record(&header)?;
        for (i, key) in self.rows.iter().enumerate() {
            let mut rec = vec![key.recording_id.clone(), key.slice_index.to_string()];
            rec.extend(
                self.row(i)
                    .iter()
                    .map(|c| c.map(|v| format!("{v:?}")).unwrap_or_default()),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sorted, de-duplicated column set for a selection and aggregator list.
pub fn feature_columns(selection: &[Feature], aggregators: &[Aggregator]) -> Vec<FeatureId> {
    let mut cols: BTreeMap<String, FeatureId> = BTreeMap::new();
    for &aggregator in aggregators {
        for &feature in selection {
            let id = FeatureId { aggregator, feature };
            cols.insert(id.to_string(), id);
        }
    }
    cols.into_values().collect()
}

fn row_values(
    group: &RecordingGroup,
    slice: &Slice<'_>,
    columns: &[(Aggregator, usize)],
    selection: &[Feature],
    role: ChannelRole,
) -> Vec<Option<f64>> {
    let contexts: Vec<WindowContext<'_>> = group
        .channels_with_role(role)
        .filter_map(|ch| {
            slice
                .windows
                .get(ch.id.as_str())
                .map(|w| WindowContext::new(w, ch.sample_rate))
        })
        .collect();
    let per_feature: Vec<Vec<Option<f64>>> = selection
        .iter()
        .map(|f| contexts.iter().map(|c| f.compute(c)).collect())
        .collect();
    columns
        .iter()
        .map(|&(aggregator, f)| aggregate_across_channels(&per_feature[f], aggregator))
        .collect()
}

/// One row per slice, one column per (aggregator, feature), computed over the
/// channels carrying `role`. Rows follow the order of `slices`.
pub fn extract_feature_matrix(
    groups: &[RecordingGroup],
    slices: &[Slice<'_>],
    selection: &[Feature],
    aggregators: &[Aggregator],
    role: ChannelRole,
) -> Result<FeatureMatrix, FeatureError> {
    if selection.is_empty() || aggregators.is_empty() {
        return Err(FeatureError::EmptySelection);
    }
    let by_id: BTreeMap<&str, &RecordingGroup> = groups.iter().map(|g| (g.recording_id.as_str(), g)).collect();
    for g in groups {
        let count = g.channels_with_role(role).count();
        if count == 0 {
            return Err(FeatureError::NoChannelsForRole {
                recording: g.recording_id.clone(),
                role: role.to_string(),
            });
        }
        if aggregators.contains(&Aggregator::None) && count != 1 {
            return Err(FeatureError::AmbiguousChannel {
                recording: g.recording_id.clone(),
                role: role.to_string(),
                count,
            });
        }
    }
    let columns = feature_columns(selection, aggregators);
    let rendered: Vec<String> = selection.iter().map(ToString::to_string).collect();
    let plan: Vec<(Aggregator, usize)> = columns
        .iter()
        .map(|id| {
            let name = id.feature.to_string();
            (
                id.aggregator,
                rendered
                    .iter()
                    .position(|r| *r == name)
                    .expect("column comes from selection"),
            )
        })
        .collect();
    let compute = |slice: &Slice<'_>| -> Result<Vec<Option<f64>>, FeatureError> {
        let group = by_id
            .get(slice.recording_id)
            .ok_or_else(|| FeatureError::NoChannelsForRole {
                recording: slice.recording_id.to_string(),
                role: role.to_string(),
            })?;
        Ok(row_values(group, slice, &plan, selection, role))
    };

    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<Option<f64>>> = {
        use rayon::prelude::*;
        slices.par_iter().map(compute).collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<Option<f64>>> = slices.iter().map(compute).collect::<Result<_, _>>()?;

    let keys = slices
        .iter()
        .map(|s| RowKey::new(s.recording_id, s.slice_index))
        .collect();
    Ok(FeatureMatrix::new(keys, columns, rows.into_iter().flatten().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_table_style_names() {
        let id = FeatureId {
            aggregator: Aggregator::Mean,
            feature: Feature::ChangeQuantiles {
                ql: 0.2,
                qh: 0.6,
                isabs: false,
                agg: ChangeAgg::Mean,
            },
        };
        assert_eq!(
            id.to_string(),
            "mean__change_quantiles__f_agg_\"mean\"__isabs_False__qh_0.6__ql_0.2"
        );
        let id = FeatureId {
            aggregator: Aggregator::Std,
            feature: Feature::LempelZivComplexity { bins: 100 },
        };
        assert_eq!(id.to_string(), "std__lempel_ziv_complexity__bins_100");
        assert_eq!(
            Feature::RatioBeyondRSigma { r: 1.5 }.to_string(),
            "ratio_beyond_r_sigma__r_1.5"
        );
        assert_eq!(
            FeatureId {
                aggregator: Aggregator::Mean,
                feature: Feature::LongestStrikeBelowMean
            }
            .to_string(),
            "mean__longest_strike_below_mean"
        );
        assert_eq!(Feature::Quantile { q: 0.8 }.to_string(), "quantile__q_0.8");
    }

    #[test]
    fn every_catalog_entry_parses_back() {
        for f in Feature::default_catalog() {
            let s = f.to_string();
            assert_eq!(s.parse::<Feature>().unwrap(), f, "{s}");
            for aggregator in [Aggregator::Mean, Aggregator::Std, Aggregator::None] {
                let id = FeatureId { aggregator, feature: f };
                assert_eq!(id.to_string().parse::<FeatureId>().unwrap(), id);
            }
        }
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(matches!(
            "bogus".parse::<Feature>(),
            Err(FeatureError::UnknownFeature(_))
        ));
        assert!(matches!(
            "quantile__z_0.5".parse::<Feature>(),
            Err(FeatureError::BadParameter { .. })
        ));
        assert!(matches!(
            "quantile".parse::<Feature>(),
            Err(FeatureError::BadParameter { .. })
        ));
        assert!(matches!(
            "mean__q_0.5".parse::<Feature>(),
            Err(FeatureError::BadParameter { .. })
        ));
    }

    #[test]
    fn selection_expands_base_names() {
        let sel = parse_selection(&["quantile", "autocorrelation__lag_4", "mean"]).unwrap();
        assert_eq!(sel.len(), 11);
        assert!(sel.contains(&Feature::Autocorrelation { lag: 4 }));
        assert_eq!(
            parse_selection::<&str>(&[]).unwrap().len(),
            Feature::default_catalog().len()
        );
    }

    #[test]
    fn aggregation_examples() {
        assert_eq!(aggregate_across_channels(&[Some(2.0); 4], Aggregator::Std), Some(0.0));
        assert_eq!(
            aggregate_across_channels(&[Some(1.0), Some(3.0)], Aggregator::Mean),
            Some(2.0)
        );
        assert_eq!(
            aggregate_across_channels(&[Some(2.0), None, Some(4.0)], Aggregator::Mean),
            Some(3.0)
        );
        assert_eq!(aggregate_across_channels(&[None, None], Aggregator::Mean), None);
        assert_eq!(aggregate_across_channels(&[Some(1.0), None], Aggregator::Std), None);
        assert_eq!(
            aggregate_across_channels(&[Some(1.0), Some(3.0)], Aggregator::Std),
            Some(1.0)
        );
        assert_eq!(aggregate_across_channels(&[Some(1.0)], Aggregator::None), Some(1.0));
    }

    #[test]
    fn evaluate_never_yields_nan() {
        let windows: [&[f64]; 4] = [
            &[],
            &[1.0],
            &[2.0; 12],
            &[1e308, -1e308, 1e308, -1e308, 0.0, 1.0, 2.0, 3.0],
        ];
        for w in windows {
            for f in Feature::default_catalog() {
                if let Some(v) = f.evaluate(w, 1.0) {
                    assert!(v.is_finite(), "{f} on {w:?}");
                }
            }
        }
    }
}
