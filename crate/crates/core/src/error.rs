use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("line {line}: non-numeric {field} `{value}`")]
    NonNumeric {
        line: u64,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: non-finite {field}")]
    NonFinite { line: u64, field: &'static str },
    #[error("line {line}: unknown role `{value}` (expected movement, speech or other)")]
    UnknownRole { line: u64, value: String },
    #[error("line {line}: duplicate sample (recording `{recording}`, channel `{channel}`, index {index})")]
    DuplicateSample {
        line: u64,
        recording: String,
        channel: String,
        index: u64,
    },
    #[error("line {line}: channel `{channel}` of recording `{recording}` changes its {field}")]
    InconsistentChannel {
        line: u64,
        recording: String,
        channel: String,
        field: &'static str,
    },
    #[error("channel `{channel}` of recording `{recording}` has a gap at sample index {index}")]
    IndexGap {
        recording: String,
        channel: String,
        index: u64,
    },
    #[error("channel `{0}` is empty")]
    EmptyChannel(String),
    #[error("channel `{0}` has a non-positive sample rate")]
    BadSampleRate(String),
    #[error("channel `{0}` contains a non-finite value")]
    NonFiniteValue(String),
    #[error("recording `{0}` has no channels")]
    NoChannels(String),
    #[error("recording `{recording}` has duplicate channel `{channel}`")]
    DuplicateChannel { recording: String, channel: String },
    #[error("energy block of {block_seconds} s is shorter than one sample of channel `{channel}`")]
    BlockTooShort { channel: String, block_seconds: f64 },
    #[error("slice duration must be positive, got {0}")]
    BadDuration(f64),
    #[error("slice duration {duration} s exceeds the shortest channel ({shortest} s) of recording `{recording}`")]
    DurationExceedsRecording {
        recording: String,
        duration: f64,
        shortest: f64,
    },
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("bad parameter `{param}` for feature `{feature}`")]
    BadParameter { feature: String, param: String },
    #[error("empty feature selection")]
    EmptySelection,
    #[error("recording `{recording}` has no channel with role `{role}`")]
    NoChannelsForRole { recording: String, role: String },
    #[error("aggregator `none` needs exactly one `{role}` channel, recording `{recording}` has {count}")]
    AmbiguousChannel {
        recording: String,
        role: String,
        count: usize,
    },
    #[error("unknown aggregator `{0}`")]
    UnknownAggregator(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum DiscretizeError {
    #[error("need at least 3 values to fit tercile bins, got {0}")]
    TooFewValues(usize),
    #[error("bin scheme for `{0}` is dropped (constant column)")]
    DroppedScheme(String),
    #[error("value is not finite")]
    NonFinite,
}

#[derive(Debug, Error, PartialEq)]
pub enum DynCompError {
    #[error("window size must be at least 4, got {0}")]
    WindowTooSmall(usize),
    #[error("step must be at least 1")]
    ZeroStep,
    #[error("domain must satisfy min < max, got ({0}, {1})")]
    BadDomain(f64, f64),
    #[error("series of length {len} is shorter than one window of {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("slice {slice} of recording `{recording}` has {found} dynamic complexity values, need {needed}")]
    SliceUnderfilled {
        recording: String,
        slice: usize,
        found: usize,
        needed: usize,
    },
    #[error("lag {lag} is not smaller than the {slices} slices of recording `{recording}`")]
    LagTooLarge {
        recording: String,
        lag: usize,
        slices: usize,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("no usable attributes in the nominal table")]
    EmptyVocabulary,
    #[error("target rows do not match table rows")]
    MismatchedRows,
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("quality exponent must lie in [0, 1], got {0}")]
    BadExponent(f64),
    #[error("invalid search setting: {0}")]
    BadConfig(&'static str),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// A pipeline failure tagged with the stage that produced it.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("features: {0}")]
    Features(#[from] FeatureError),
    #[error("discretize: {0}")]
    Discretize(#[from] DiscretizeError),
    #[error("target: {0}")]
    Target(#[from] DynCompError),
    #[error("discover: {0}")]
    Search(#[from] SearchError),
    #[error("target: recording `{recording}` has {count} `{role}` channels, need exactly one")]
    TargetChannel {
        recording: String,
        role: String,
        count: usize,
    },
    #[error("export: {0}")]
    Export(String),
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Ingest(_) => "ingest",
            PipelineError::Features(_) => "features",
            PipelineError::Discretize(_) => "discretize",
            PipelineError::Target(_) | PipelineError::TargetChannel { .. } => "target",
            PipelineError::Search(_) => "discover",
            PipelineError::Export(_) => "export",
        }
    }
}
