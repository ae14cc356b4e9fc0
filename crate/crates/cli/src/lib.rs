//! `tslex` command line: feature extraction, target series, discovery runs
//! and the HTTP service.

pub mod server;
pub mod store;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use tslex_core::ingest::{read_recordings, RecordingGroup};
use tslex_core::pipeline::{
    complexity_series, export_run, extract_features, read_input, run_on_recordings, write_dc_csv, ExportFormat,
    PipelineConfig,
};
use tslex_core::{ConfigError, PipelineError};

#[derive(Debug, Parser)]
#[command(
    name = "tslex",
    version,
    about = "Subgroup discovery on sliced multi-channel time series"
)]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest and slice the input, write the feature matrix as CSV.
    Extract {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write the dynamic complexity series of the target channel as CSV.
    Target {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the full pipeline and export the results.
    Discover {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Both)]
        format: Format,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "state")]
        state: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Document,
    Csv,
    Both,
}

/// Flags mirroring the configuration keys. Values given here override the
/// `--config` file.
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub slice_seconds: Option<f64>,
    #[arg(long)]
    pub energy_block_seconds: Option<f64>,
    /// Comma separated feature names.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    /// Comma separated: mean, std, none.
    #[arg(long, value_delimiter = ',')]
    pub aggregators: Option<Vec<String>>,
    #[arg(long)]
    pub feature_role: Option<String>,
    #[arg(long)]
    pub target_role: Option<String>,
    /// mean_z, slope or delta.
    #[arg(long)]
    pub target_kind: Option<String>,
    #[arg(long)]
    pub dyncomp_window: Option<usize>,
    #[arg(long)]
    pub dyncomp_step: Option<usize>,
    /// `auto` or `min,max`.
    #[arg(long)]
    pub dyncomp_domain: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub lags: Option<Vec<usize>>,
    #[arg(long)]
    pub min_size: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub quality_a: Option<f64>,
    #[arg(long)]
    pub pruning: Option<bool>,
    /// high or low.
    #[arg(long)]
    pub direction: Option<String>,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Stage(PipelineError),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Stage(_) | CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid configuration: {m}"),
            CliError::Stage(e) => write!(f, "{} stage failed: {e}", e.stage()),
            CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(c) => c.into(),
            other => CliError::Stage(other),
        }
    }
}

impl ConfigArgs {
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |key: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(key.to_string(), v);
            }
        };
        put("input", self.input.as_ref().map(|p| json!(p)));
        put("slice_seconds", self.slice_seconds.map(|v| json!(v)));
        put("energy_block_seconds", self.energy_block_seconds.map(|v| json!(v)));
        put("features", self.features.as_ref().map(|v| json!(v)));
        put("aggregators", self.aggregators.as_ref().map(|v| json!(v)));
        put("feature_role", self.feature_role.as_ref().map(|v| json!(v)));
        put("target_role", self.target_role.as_ref().map(|v| json!(v)));
        put("target_kind", self.target_kind.as_ref().map(|v| json!(v)));
        put("dyncomp_window", self.dyncomp_window.map(|v| json!(v)));
        put("dyncomp_step", self.dyncomp_step.map(|v| json!(v)));
        put(
            "dyncomp_domain",
            self.dyncomp_domain.as_ref().map(|d| match d.split_once(',') {
                Some((lo, hi)) => match (lo.trim().parse::<f64>(), hi.trim().parse::<f64>()) {
                    (Ok(lo), Ok(hi)) => json!([lo, hi]),
                    _ => json!(d),
                },
                None => json!(d),
            }),
        );
        put("lags", self.lags.as_ref().map(|v| json!(v)));
        put("min_size", self.min_size.map(|v| json!(v)));
        put("max_depth", self.max_depth.map(|v| json!(v)));
        put("top_k", self.top_k.map(|v| json!(v)));
        put("quality_a", self.quality_a.map(|v| json!(v)));
        put("pruning", self.pruning.map(|v| json!(v)));
        put("direction", self.direction.as_ref().map(|v| json!(v)));
        m
    }

    /// The `--config` file (or the defaults) with the flag overrides applied,
    /// validated.
    pub fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let base = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        let mut value = serde_json::to_value(&base).expect("config serializes");
        let obj = value.as_object_mut().expect("config is an object");
        for (k, v) in self.overrides() {
            obj.insert(k, v);
        }
        let cfg: PipelineConfig = serde_json::from_value(value).map_err(|e| CliError::Validation(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_groups(cfg: &PipelineConfig) -> Result<(Vec<RecordingGroup>, String), CliError> {
    let (bytes, digest) = read_input(cfg)?;
    let groups = read_recordings(bytes.as_slice()).map_err(PipelineError::from)?;
    Ok((groups, digest))
}

fn with_output(
    output: &Option<PathBuf>,
    write: impl FnOnce(&mut dyn Write) -> Result<(), String>,
) -> Result<(), CliError> {
    match output {
        Some(path) => {
            let mut file = fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            write(&mut file).map_err(CliError::Io)
        }
        None => write(&mut io::stdout().lock()).map_err(CliError::Io),
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Extract { config, output } => {
            let cfg = config.resolve()?;
            let (groups, _) = load_groups(&cfg)?;
            let matrix = extract_features(&cfg, &groups)?;
            with_output(&output, |w| matrix.write_csv(w).map_err(|e| e.to_string()))
        }
        Command::Target { config, output } => {
            let cfg = config.resolve()?;
            let (groups, _) = load_groups(&cfg)?;
            let series = complexity_series(&cfg, &groups)?;
            with_output(&output, |w| write_dc_csv(&series, w).map_err(|e| e.to_string()))
        }
        Command::Discover {
            config,
            out_dir,
            format,
        } => {
            let cfg = config.resolve()?;
            let (groups, digest) = load_groups(&cfg)?;
            let result = run_on_recordings(&cfg, &groups, &digest)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            let formats: &[ExportFormat] = match format {
                Format::Document => &[ExportFormat::Document],
                Format::Csv => &[ExportFormat::Csv],
                Format::Both => &[ExportFormat::Document, ExportFormat::Csv],
            };
            for &f in formats {
                for path in export_run(&result, &out_dir, f)? {
                    eprintln!("wrote {}", path.display());
                }
            }
            for l in &result.lags {
                match l.subgroups.first() {
                    Some(s) => println!(
                        "lag {}: {} subgroups, top `{}` (n={}, mean={:.3}, q={:.3})",
                        l.lag,
                        l.subgroups.len(),
                        s.pattern,
                        s.size,
                        s.subgroup_mean,
                        s.quality
                    ),
                    None => println!("lag {}: no subgroup reaches min_size {}", l.lag, cfg.min_size),
                }
            }
            println!("run {}", result.run_id);
            Ok(())
        }
        Command::Serve { port, state, host } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
            rt.block_on(server::serve(&state, SocketAddr::new(host, port)))
                .map_err(|e| CliError::Io(format!("serve: {e}")))
        }
    }
}

/// Parses `args` and runs the command. Exit codes: 0 success, 1 invalid
/// arguments or configuration, 2 failure in a pipeline stage or I/O.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
