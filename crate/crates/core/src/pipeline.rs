//! End-to-end workflow: ingest, slice, extract features, discretize, build
//! the dynamic complexity target, align lags and mine subgroups, plus the
//! run document and CSV exports.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::discretize::{discretize_matrix, Discretized, NominalTable};
use crate::dyncomp::{
    apply_lag, dynamic_complexity_series, slice_targets, DcSeries, Domain, DomainSpec, DynCompConfig, RecordingDc,
    TargetKind, TargetVector,
};
use crate::error::{ConfigError, IngestError, PipelineError, SearchError};
use crate::features::{extract_feature_matrix, parse_selection, Aggregator, FeatureMatrix, RowKey};
use crate::ingest::{read_recordings, resample_energy, slice_recording, ChannelRole, RecordingGroup, Slice};
use crate::sd::{discover, Direction, QualitySpec, SearchConfig, SubgroupResult};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

/// `"auto"` or `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DomainSetting {
    Auto(AutoKeyword),
    Range([f64; 2]),
}

impl Default for DomainSetting {
    fn default() -> Self {
        DomainSetting::Auto(AutoKeyword::Auto)
    }
}

/// Pipeline settings. Parsed from `key = value` text (TOML) or JSON; unknown
/// keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub slice_seconds: f64,
    pub energy_block_seconds: f64,
    /// Base feature names or rendered feature names; empty selects the full catalog.
    pub features: Vec<String>,
    pub aggregators: Vec<Aggregator>,
    pub feature_role: ChannelRole,
    pub target_role: ChannelRole,
    pub target_kind: TargetKind,
    pub dyncomp_window: usize,
    pub dyncomp_step: usize,
    pub dyncomp_domain: DomainSetting,
    pub lags: Vec<usize>,
    pub min_size: usize,
    pub max_depth: usize,
    pub top_k: usize,
    pub quality_a: f64,
    pub pruning: bool,
    pub direction: Direction,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let search = SearchConfig::default();
        PipelineConfig {
            input: PathBuf::new(),
            slice_seconds: 60.0,
            energy_block_seconds: 1.0,
            features: Vec::new(),
            aggregators: vec![Aggregator::Mean, Aggregator::Std],
            feature_role: ChannelRole::Movement,
            target_role: ChannelRole::Speech,
            target_kind: TargetKind::MeanZ,
            dyncomp_window: 30,
            dyncomp_step: 1,
            dyncomp_domain: DomainSetting::default(),
            lags: vec![0, 1],
            min_size: search.min_size,
            max_depth: search.max_depth,
            top_k: search.top_k,
            quality_a: search.quality.exponent(),
            pruning: search.pruning,
            direction: search.direction,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(s).map_err(|e| ConfigError::Parse(e.message().to_string()))?;
        Ok(cfg)
    }

    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            min_size: self.min_size,
            max_depth: self.max_depth,
            top_k: self.top_k,
            quality: QualitySpec::new(self.quality_a).unwrap_or_default(),
            pruning: self.pruning,
            direction: self.direction,
        }
    }

    pub fn dyncomp_config(&self) -> DynCompConfig {
        DynCompConfig {
            window_m: self.dyncomp_window,
            step: self.dyncomp_step,
            domain: match self.dyncomp_domain {
                DomainSetting::Auto(_) => DomainSpec::Auto,
                DomainSetting::Range([lo, hi]) => DomainSpec::Fixed(
                    Domain::new(lo, hi).unwrap_or_else(|_| Domain::new(0.0, 1.0).expect("unit domain")),
                ),
            },
        }
    }

    /// Checks every precondition that does not need the input data.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.input.as_os_str().is_empty() {
            return invalid("input is required".into());
        }
        if !self.slice_seconds.is_finite() || self.slice_seconds <= 0.0 {
            return invalid(format!("slice_seconds must be positive, got {}", self.slice_seconds));
        }
        if !self.energy_block_seconds.is_finite() || self.energy_block_seconds <= 0.0 {
            return invalid(format!(
                "energy_block_seconds must be positive, got {}",
                self.energy_block_seconds
            ));
        }
        if let Err(e) = parse_selection(&self.features) {
            return invalid(format!("features: {e}"));
        }
        if self.aggregators.is_empty() {
            return invalid("aggregators must not be empty".into());
        }
        if let DomainSetting::Range([lo, hi]) = self.dyncomp_domain {
            if let Err(e) = Domain::new(lo, hi) {
                return invalid(format!("dyncomp_domain: {e}"));
            }
        }
        let dc = DynCompConfig {
            domain: DomainSpec::Auto,
            ..self.dyncomp_config()
        };
        if let Err(e) = dc.validate() {
            return invalid(format!("dyncomp: {e}"));
        }
        if self.lags.is_empty() {
            return invalid("lags must not be empty".into());
        }
        if !(0.0..=1.0).contains(&self.quality_a) {
            return invalid(format!("quality_a must lie in [0, 1], got {}", self.quality_a));
        }
        let search = SearchConfig {
            quality: QualitySpec::default(),
            ..self.search_config()
        };
        if let Err(e) = search.validate() {
            return invalid(e.to_string());
        }
        Ok(())
    }

    fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub instances: usize,
    pub target_mean: f64,
    pub target_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagResult {
    pub lag: usize,
    pub population: PopulationStats,
    /// Feature-slice keys of the mined instances; subgroup coverage indexes
    /// into this list.
    pub rows: Vec<RowKey>,
    pub subgroups: Vec<SubgroupResult>,
    /// Attributes used by any subgroup of this lag, sorted.
    pub profile_attributes: Vec<String>,
    /// Per subgroup, the mean label level (low 0, medium 0.5, high 1) of each
    /// profile attribute over the covered rows.
    pub profiles: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: String,
    pub input_digest: String,
    pub config: PipelineConfig,
    pub population: PopulationStats,
    pub lags: Vec<LagResult>,
    pub warnings: Vec<String>,
}

impl RunResult {
    pub fn lag(&self, lag: usize) -> Option<&LagResult> {
        self.lags.iter().find(|l| l.lag == lag)
    }

    pub fn to_document(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("run result serializes");
        s.push('\n');
        s
    }

    pub fn from_document(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content hash of the config and the input digest.
pub fn run_id(cfg: &PipelineConfig, input_digest: &str) -> String {
    let mut h = Sha256::new();
    h.update(cfg.canonical_json().as_bytes());
    h.update(b"\n");
    h.update(input_digest.as_bytes());
    hex::encode(&h.finalize()[..16])
}

pub fn read_input(cfg: &PipelineConfig) -> Result<(Vec<u8>, String), PipelineError> {
    let bytes = fs::read(&cfg.input).map_err(|source| IngestError::Io {
        path: cfg.input.display().to_string(),
        source,
    })?;
    let digest = sha256_hex(&bytes);
    Ok((bytes, digest))
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunResult, PipelineError> {
    cfg.validate()?;
    let (bytes, digest) = read_input(cfg)?;
    let groups = read_recordings(bytes.as_slice())?;
    run_on_recordings(cfg, &groups, &digest)
}

fn slice_all<'a>(
    cfg: &PipelineConfig,
    groups: &'a [RecordingGroup],
) -> Result<(Vec<Slice<'a>>, Vec<usize>), PipelineError> {
    let mut slices = Vec::new();
    let mut counts = Vec::with_capacity(groups.len());
    for g in groups {
        let s = slice_recording(g, cfg.slice_seconds)?;
        counts.push(s.len());
        slices.extend(s);
    }
    Ok((slices, counts))
}

pub fn extract_features(cfg: &PipelineConfig, groups: &[RecordingGroup]) -> Result<FeatureMatrix, PipelineError> {
    let selection = parse_selection(&cfg.features)?;
    let (slices, _) = slice_all(cfg, groups)?;
    Ok(extract_feature_matrix(
        groups,
        &slices,
        &selection,
        &cfg.aggregators,
        cfg.feature_role,
    )?)
}

/// Dynamic complexity of one recording's energy-resampled target channel.
#[derive(Debug, Clone)]
pub struct RecordingSeries {
    pub recording_id: String,
    /// Window start times in seconds.
    pub times: Vec<f64>,
    pub series: DcSeries,
}

pub fn complexity_series(
    cfg: &PipelineConfig,
    groups: &[RecordingGroup],
) -> Result<Vec<RecordingSeries>, PipelineError> {
    let dc_cfg = cfg.dyncomp_config();
    groups
        .iter()
        .map(|g| {
            let chans: Vec<_> = g.channels_with_role(cfg.target_role).collect();
            if chans.len() != 1 {
                return Err(PipelineError::TargetChannel {
                    recording: g.recording_id.clone(),
                    role: cfg.target_role.to_string(),
                    count: chans.len(),
                });
            }
            let energy = resample_energy(chans[0], cfg.energy_block_seconds)?;
            let series = dynamic_complexity_series(&energy.values, &dc_cfg)?;
            let times = series.starts.iter().map(|&s| s as f64 / energy.sample_rate).collect();
            Ok(RecordingSeries {
                recording_id: g.recording_id.clone(),
                times,
                series,
            })
        })
        .collect()
}

/// `recording_id,window_start_s,F,D,complexity`
pub fn write_dc_csv<W: Write>(series: &[RecordingSeries], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["recording_id", "window_start_s", "F", "D", "complexity"])?;
    for rs in series {
        for i in 0..rs.series.len() {
            w.write_record([
                rs.recording_id.clone(),
                format!("{:?}", rs.times[i]),
                format!("{:?}", rs.series.fluctuation[i]),
                format!("{:?}", rs.series.distribution[i]),
                format!("{:?}", rs.series.complexity[i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn build_target(
    cfg: &PipelineConfig,
    groups: &[RecordingGroup],
    slice_counts: &[usize],
    warnings: &mut Vec<String>,
) -> Result<TargetVector, PipelineError> {
    let series = complexity_series(cfg, groups)?;
    for rs in &series {
        if rs.series.degenerate {
            warnings.push(format!(
                "recording `{}`: constant {} channel, dynamic complexity set to 0",
                rs.recording_id, cfg.target_role
            ));
        }
    }
    let recs: Vec<RecordingDc<'_>> = series
        .iter()
        .zip(slice_counts)
        .map(|(rs, &n)| RecordingDc {
            recording_id: &rs.recording_id,
            times: rs.times.clone(),
            values: &rs.series.complexity,
            slice_count: n,
        })
        .collect();
    let target = slice_targets(&recs, cfg.slice_seconds, cfg.target_kind)?;
    if target.degenerate {
        warnings.push("target has zero variance; z-scores set to 0".to_string());
    }
    Ok(target)
}

fn population(values: &[f64]) -> PopulationStats {
    if values.is_empty() {
        return PopulationStats {
            instances: 0,
            target_mean: 0.0,
            target_std: 0.0,
        };
    }
    PopulationStats {
        instances: values.len(),
        target_mean: stats::mean(values),
        target_std: stats::std_dev(values),
    }
}

fn profiles(table: &NominalTable, subgroups: &[SubgroupResult]) -> (Vec<String>, Vec<Vec<f64>>) {
    let attrs: BTreeSet<&str> = subgroups
        .iter()
        .flat_map(|s| s.pattern.selectors().iter().map(|sel| sel.attribute.as_str()))
        .collect();
    let attrs: Vec<String> = attrs.into_iter().map(String::from).collect();
    let idx: Vec<usize> = attrs
        .iter()
        .map(|a| table.attribute_index(a).expect("pattern attribute exists"))
        .collect();
    let levels = subgroups
        .iter()
        .map(|s| {
            idx.iter()
                .map(|&a| {
                    let col = table.column(a);
                    let sum: f64 = s.coverage.iter().map(|&r| col[r].ordinal() as f64 / 2.0).sum();
                    sum / s.coverage.len() as f64
                })
                .collect()
        })
        .collect();
    (attrs, levels)
}

/// Runs the workflow on already loaded recordings.
pub fn run_on_recordings(
    cfg: &PipelineConfig,
    groups: &[RecordingGroup],
    input_digest: &str,
) -> Result<RunResult, PipelineError> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let selection = parse_selection(&cfg.features)?;
    let (slices, slice_counts) = slice_all(cfg, groups)?;
    let matrix = extract_feature_matrix(groups, &slices, &selection, &cfg.aggregators, cfg.feature_role)?;
    let Discretized {
        table,
        warnings: disc_warnings,
        ..
    } = discretize_matrix(&matrix);
    warnings.extend(disc_warnings);
    if table.n_attributes() == 0 {
        return Err(SearchError::EmptyVocabulary.into());
    }

    let target = build_target(cfg, groups, &slice_counts, &mut warnings)?;
    let search = cfg.search_config();
    let mut lags = Vec::with_capacity(cfg.lags.len());
    for &lag in &cfg.lags {
        let (lag_table, lag_target) = apply_lag(&table, &target, lag)?;
        let subgroups = discover(&lag_table, &lag_target, &search)?;
        let (profile_attributes, profiles) = profiles(&lag_table, &subgroups);
        lags.push(LagResult {
            lag,
            population: population(&lag_target.values),
            rows: lag_table.rows().to_vec(),
            subgroups,
            profile_attributes,
            profiles,
        });
    }

    Ok(RunResult {
        run_id: run_id(cfg, input_digest),
        input_digest: input_digest.to_string(),
        config: cfg.clone(),
        population: population(&target.values),
        lags,
        warnings,
    })
}

pub const SUBGROUP_CSV_HEADER: [&str; 5] = ["pattern", "size", "subgroup_mean", "population_mean", "quality"];

pub fn write_subgroups_csv<W: Write>(subgroups: &[SubgroupResult], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUBGROUP_CSV_HEADER)?;
    for s in subgroups {
        w.write_record([
            s.pattern.to_string(),
            s.size.to_string(),
            format!("{:?}", s.subgroup_mean),
            format!("{:?}", s.population_mean),
            format!("{:?}", s.quality),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Document,
    Csv,
}

pub const DOCUMENT_FILE: &str = "result.json";

pub fn subgroups_csv_name(lag: usize) -> String {
    format!("subgroups_lag{lag}.csv")
}

/// Writes `result.json` (document) or one `subgroups_lag<L>.csv` per lag.
pub fn export_run(result: &RunResult, dir: &Path, format: ExportFormat) -> Result<Vec<PathBuf>, PipelineError> {
    let io = |e: std::io::Error| PipelineError::Export(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    match format {
        ExportFormat::Document => {
            let path = dir.join(DOCUMENT_FILE);
            fs::write(&path, result.to_document()).map_err(io)?;
            Ok(vec![path])
        }
        ExportFormat::Csv => result
            .lags
            .iter()
            .map(|l| {
                let path = dir.join(subgroups_csv_name(l.lag));
                let file = fs::File::create(&path).map_err(io)?;
                write_subgroups_csv(&l.subgroups, file).map_err(|e| PipelineError::Export(e.to_string()))?;
                Ok(path)
            })
            .collect(),
    }
}

pub fn import_run(path: &Path) -> Result<RunResult, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::Export(format!("{}: {e}", path.display())))?;
    RunResult::from_document(&text).map_err(|e| PipelineError::Export(e.to_string()))
}
