//! wasm-bindgen exports for the demo page. Every export returns a JSON
//! string; the plain Rust functions behind them are usable natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use tslex_core::discretize::fit_bins;
use tslex_core::dyncomp::{
    distribution, dynamic_complexity_series, fluctuation, points_of_return, Domain, DomainSpec, DynCompConfig,
};

#[derive(Debug, Serialize)]
pub struct Profile {
    pub starts: Vec<usize>,
    pub fluctuation: Vec<f64>,
    pub distribution: Vec<f64>,
    pub complexity: Vec<f64>,
    pub domain: Option<(f64, f64)>,
    pub degenerate: bool,
}

/// Rolling dynamic complexity; `domain` of `None` uses the series' range.
pub fn profile(values: &[f64], window: usize, step: usize, domain: Option<(f64, f64)>) -> Result<Profile, String> {
    let spec = match domain {
        Some((lo, hi)) => DomainSpec::Fixed(Domain::new(lo, hi).map_err(|e| e.to_string())?),
        None => DomainSpec::Auto,
    };
    let cfg = DynCompConfig {
        window_m: window,
        step,
        domain: spec,
    };
    let s = dynamic_complexity_series(values, &cfg).map_err(|e| e.to_string())?;
    let domain = match spec {
        DomainSpec::Fixed(d) => Some((d.min(), d.max())),
        DomainSpec::Auto if s.degenerate => None,
        DomainSpec::Auto => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Some((lo, hi))
        }
    };
    Ok(Profile {
        starts: s.starts,
        fluctuation: s.fluctuation,
        distribution: s.distribution,
        complexity: s.complexity,
        domain,
        degenerate: s.degenerate,
    })
}

#[derive(Debug, Serialize)]
pub struct Breakdown {
    pub points_of_return: Vec<usize>,
    pub sorted: Vec<f64>,
    /// Equally spaced scan of the domain, one value per sample.
    pub ideal: Vec<f64>,
    pub fluctuation: f64,
    pub distribution: f64,
    pub complexity: f64,
}

/// The terms behind one window's value.
pub fn breakdown(window: &[f64], lo: f64, hi: f64) -> Result<Breakdown, String> {
    if window.len() < 2 {
        return Err("window needs at least 2 values".into());
    }
    let d = Domain::new(lo, hi).map_err(|e| e.to_string())?;
    let mut sorted: Vec<f64> = window.iter().map(|v| v.clamp(lo, hi)).collect();
    sorted.sort_by(f64::total_cmp);
    let m = window.len();
    let (f, dist) = (fluctuation(window, d), distribution(window, d));
    Ok(Breakdown {
        points_of_return: points_of_return(window),
        sorted,
        ideal: (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect(),
        fluctuation: f,
        distribution: dist,
        complexity: f * dist,
    })
}

#[derive(Debug, Serialize)]
pub struct Terciles {
    pub edges: (f64, f64),
    pub dropped: bool,
    pub labels: Vec<&'static str>,
    pub counts: [usize; 3],
}

pub fn terciles(values: &[f64]) -> Result<Terciles, String> {
    let scheme = fit_bins("values", values).map_err(|e| e.to_string())?;
    let mut counts = [0; 3];
    let labels = if scheme.dropped {
        Vec::new()
    } else {
        values
            .iter()
            .map(|&v| {
                let l = scheme.apply(v).expect("finite value in a kept scheme");
                counts[l.ordinal()] += 1;
                l.as_str()
            })
            .collect()
    };
    Ok(Terciles {
        edges: scheme.edges,
        dropped: scheme.dropped,
        labels,
        counts,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map(|v| serde_json::to_string(&v).expect("serializes"))
        .map_err(|e| JsError::new(&e))
}

/// `domain_min`/`domain_max` may both be NaN to use the series' own range.
#[wasm_bindgen(js_name = complexityProfile)]
pub fn complexity_profile(
    values: &[f64],
    window: usize,
    step: usize,
    domain_min: f64,
    domain_max: f64,
) -> Result<String, JsError> {
    let domain = (!domain_min.is_nan() || !domain_max.is_nan()).then_some((domain_min, domain_max));
    to_js(profile(values, window, step, domain))
}

#[wasm_bindgen(js_name = windowBreakdown)]
pub fn window_breakdown(window: &[f64], domain_min: f64, domain_max: f64) -> Result<String, JsError> {
    to_js(breakdown(window, domain_min, domain_max))
}

#[wasm_bindgen(js_name = tercileLabels)]
pub fn tercile_labels(values: &[f64]) -> Result<String, JsError> {
    to_js(terciles(values))
}
