//! Dynamic complexity (fluctuation times distribution) over rolling windows,
//! per-slice target construction and lag alignment.
//!
//! Fluctuation sums, over consecutive points of return `p_k` (indices where
//! the sign of the gradient changes, plus both window ends),
//! `|x[p_{k+1}] - x[p_k]| / (p_{k+1} - p_k)` and normalizes by `d (m - 1)`
//! where `d` is the width of the value domain. A window alternating between
//! the domain extremes reaches 1.
//!
//! Distribution compares the sorted window `s` with the equally spaced scan
//! `y` of the domain. Over every sub-window `[c, e]` and every index pair
//! `a < b` inside it, the positive part of `(y_b - y_a) - (s_b - s_a)`
//! divided by `y_b - y_a` is accumulated; the sum is averaged over all
//! enumerated terms and subtracted from 1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::discretize::NominalTable;
use crate::error::DynCompError;
use crate::features::RowKey;
use crate::stats;

/// Closed value range `[min, max]` with `min < max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    min: f64,
    max: f64,
}

impl Domain {
    pub fn new(min: f64, max: f64) -> Result<Self, DynCompError> {
        if !min.is_finite() || !max.is_finite() || min >= max {
            return Err(DynCompError::BadDomain(min, max));
        }
        Ok(Domain { min, max })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainSpec {
    /// Observed min / max of the whole series.
    Auto,
    Fixed(Domain),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynCompConfig {
    pub window_m: usize,
    pub step: usize,
    pub domain: DomainSpec,
}

impl Default for DynCompConfig {
    fn default() -> Self {
        DynCompConfig {
            window_m: 30,
            step: 1,
            domain: DomainSpec::Auto,
        }
    }
}

impl DynCompConfig {
    pub fn validate(&self) -> Result<(), DynCompError> {
        if self.window_m < 4 {
            return Err(DynCompError::WindowTooSmall(self.window_m));
        }
        if self.step == 0 {
            return Err(DynCompError::ZeroStep);
        }
        Ok(())
    }
}

fn sign(d: f64) -> i8 {
    if d > 0.0 {
        1
    } else if d < 0.0 {
        -1
    } else {
        0
    }
}

/// 0-based indices of the points of return, always including both ends.
pub fn points_of_return(window: &[f64]) -> Vec<usize> {
    let m = window.len();
    if m == 0 {
        return Vec::new();
    }
    if m == 1 {
        return vec![0];
    }
    let mut points = vec![0];
    for j in 1..m - 1 {
        if sign(window[j + 1] - window[j]) != sign(window[j] - window[j - 1]) {
            points.push(j);
        }
    }
    points.push(m - 1);
    points
}

pub fn fluctuation(window: &[f64], domain: Domain) -> f64 {
    let m = window.len();
    if m < 2 {
        return 0.0;
    }
    let x: Vec<f64> = window.iter().map(|&v| domain.clamp(v)).collect();
    let points = points_of_return(&x);
    let sum: f64 = points
        .windows(2)
        .map(|p| (x[p[1]] - x[p[0]]).abs() / (p[1] - p[0]) as f64)
        .sum();
    (sum / (domain.width() * (m - 1) as f64)).clamp(0.0, 1.0)
}

/// Number of (c, e, a, b) terms with `c <= a < b <= e` over `1..=m`, i.e.
/// C(m + 2, 4).
pub fn distribution_term_count(m: usize) -> f64 {
    let m = m as f64;
    (m + 2.0) * (m + 1.0) * m * (m - 1.0) / 24.0
}

pub fn distribution(window: &[f64], domain: Domain) -> f64 {
    let m = window.len();
    if m < 2 {
        return 0.0;
    }
    let mut s: Vec<f64> = window.iter().map(|&v| domain.clamp(v)).collect();
    s.sort_by(f64::total_cmp);
    let spacing = domain.width() / (m - 1) as f64;

    // A pair (a, b) (1-based) lies in a(m - b + 1) sub-windows [c, e].
    let mut acc = 0.0;
    for a in 0..m - 1 {
        for b in a + 1..m {
            let ideal = (b - a) as f64 * spacing;
            let gap = ideal - (s[b] - s[a]);
            if gap > 0.0 {
                let multiplicity = ((a + 1) * (m - b)) as f64;
                acc += multiplicity * gap / ideal;
            }
        }
    }
    (1.0 - acc / distribution_term_count(m)).clamp(0.0, 1.0)
}

pub fn dynamic_complexity(window: &[f64], domain: Domain) -> f64 {
    fluctuation(window, domain) * distribution(window, domain)
}

/// Rolling-window fluctuation, distribution and their product.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DcSeries {
    /// Sample index where each window starts.
    pub starts: Vec<usize>,
    pub fluctuation: Vec<f64>,
    pub distribution: Vec<f64>,
    pub complexity: Vec<f64>,
    /// Set when the resolved domain had zero width; all values are then 0.
    pub degenerate: bool,
}

impl DcSeries {
    pub fn len(&self) -> usize {
        self.complexity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.complexity.is_empty()
    }
}

pub fn resolve_domain(values: &[f64], spec: DomainSpec) -> Option<Domain> {
    match spec {
        DomainSpec::Fixed(d) => Some(d),
        DomainSpec::Auto => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Domain::new(lo, hi).ok()
        }
    }
}

pub fn dynamic_complexity_series(values: &[f64], cfg: &DynCompConfig) -> Result<DcSeries, DynCompError> {
    cfg.validate()?;
    let m = cfg.window_m;
    if values.len() < m {
        return Err(DynCompError::SeriesTooShort {
            len: values.len(),
            window: m,
        });
    }
    let starts: Vec<usize> = (0..=values.len() - m).step_by(cfg.step).collect();
    let Some(domain) = resolve_domain(values, cfg.domain) else {
        let zeros = vec![0.0; starts.len()];
        return Ok(DcSeries {
            starts,
            fluctuation: zeros.clone(),
            distribution: zeros.clone(),
            complexity: zeros,
            degenerate: true,
        });
    };
    let eval = |&s: &usize| {
        let w = &values[s..s + m];
        (fluctuation(w, domain), distribution(w, domain))
    };

    #[cfg(feature = "parallel")]
    let fd: Vec<(f64, f64)> = {
        use rayon::prelude::*;
        starts.par_iter().map(eval).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let fd: Vec<(f64, f64)> = starts.iter().map(eval).collect();

    let (fluctuation, distribution): (Vec<f64>, Vec<f64>) = fd.into_iter().unzip();
    let complexity = fluctuation.iter().zip(&distribution).map(|(f, d)| f * d).collect();
    Ok(DcSeries {
        starts,
        fluctuation,
        distribution,
        complexity,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    MeanZ,
    Slope,
    Delta,
}

impl TargetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::MeanZ => "mean_z",
            TargetKind::Slope => "slope",
            TargetKind::Delta => "delta",
        }
    }
}

/// One target value per instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetVector {
    pub kind: TargetKind,
    pub lag: usize,
    pub rows: Vec<RowKey>,
    pub values: Vec<f64>,
    /// Zero-variance z-scoring: all values were set to 0.
    pub degenerate: bool,
}

/// Dynamic complexity values of one recording with their window start times.
#[derive(Debug, Clone)]
pub struct RecordingDc<'a> {
    pub recording_id: &'a str,
    pub times: Vec<f64>,
    pub values: &'a [f64],
    pub slice_count: usize,
}

/// Builds the lag-0 target. A dc value belongs to the slice containing its
/// window start time; `mean_z` z-scores the per-slice means over all
/// instances, `slope` regresses dc on time within each slice and `delta`
/// differences consecutive slice means (slice 0 has no value).
pub fn slice_targets(
    recordings: &[RecordingDc<'_>],
    slice_seconds: f64,
    kind: TargetKind,
) -> Result<TargetVector, DynCompError> {
    let needed = if kind == TargetKind::Slope { 2 } else { 1 };
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for rec in recordings {
        let mut per_slice: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); rec.slice_count];
        for (&t, &v) in rec.times.iter().zip(rec.values) {
            // tolerate representation error right at a slice boundary
            let idx = ((t / slice_seconds) + 1e-9).floor();
            if idx >= 0.0 && (idx as usize) < rec.slice_count {
                let slot = &mut per_slice[idx as usize];
                slot.0.push(t);
                slot.1.push(v);
            }
        }
        let mut prev_mean = None;
        for (i, (ts, vs)) in per_slice.iter().enumerate() {
            if vs.len() < needed {
                return Err(DynCompError::SliceUnderfilled {
                    recording: rec.recording_id.to_string(),
                    slice: i,
                    found: vs.len(),
                    needed,
                });
            }
            let mean = stats::mean(vs);
            let value = match kind {
                TargetKind::MeanZ => Some(mean),
                TargetKind::Slope => Some(stats::ols(ts, vs).0),
                TargetKind::Delta => prev_mean.map(|p| mean - p),
            };
            prev_mean = Some(mean);
            if let Some(v) = value {
                rows.push(RowKey::new(rec.recording_id, i));
                values.push(v);
            }
        }
    }

    let mut degenerate = false;
    if kind == TargetKind::MeanZ && !values.is_empty() {
        let mu = stats::mean(&values);
        let sd = stats::std_dev(&values);
        if sd > 0.0 && sd.is_finite() {
            for v in &mut values {
                *v = (*v - mu) / sd;
            }
        } else {
            log::warn!("target has zero variance; z-scores set to 0");
            values.iter_mut().for_each(|v| *v = 0.0);
            degenerate = true;
        }
    }
    Ok(TargetVector {
        kind,
        lag: 0,
        rows,
        values,
        degenerate,
    })
}

/// Pairs the features of slice `i` with the target of slice `i + lag` within
/// each recording. The returned target is keyed by the feature rows.
pub fn apply_lag(
    features: &NominalTable,
    target: &TargetVector,
    lag: usize,
) -> Result<(NominalTable, TargetVector), DynCompError> {
    let mut slices: BTreeMap<&str, usize> = BTreeMap::new();
    for key in features.rows().iter().chain(&target.rows) {
        let e = slices.entry(key.recording_id.as_str()).or_default();
        *e = (*e).max(key.slice_index + 1);
    }
    if let Some((rec, &n)) = slices.iter().find(|(_, &n)| lag >= n) {
        return Err(DynCompError::LagTooLarge {
            recording: rec.to_string(),
            lag,
            slices: n,
        });
    }
    let lookup: BTreeMap<(&str, usize), f64> = target
        .rows
        .iter()
        .zip(&target.values)
        .map(|(k, &v)| ((k.recording_id.as_str(), k.slice_index), v))
        .collect();

    let mut keep = Vec::new();
    let mut values = Vec::new();
    for (r, key) in features.rows().iter().enumerate() {
        if let Some(&v) = lookup.get(&(key.recording_id.as_str(), key.slice_index + lag)) {
            keep.push(r);
            values.push(v);
        }
    }
    let table = features.select_rows(&keep);
    let target = TargetVector {
        kind: target.kind,
        lag,
        rows: table.rows().to_vec(),
        values,
        degenerate: target.degenerate,
    };
    Ok((table, target))
}
