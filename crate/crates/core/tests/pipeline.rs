mod common;

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tslex_core::ingest::read_recordings;
use tslex_core::pipeline::{
    complexity_series, export_run, extract_features, import_run, run_on_recordings, run_pipeline, write_dc_csv,
    ExportFormat, PipelineConfig, DOCUMENT_FILE,
};

/// `recordings` recordings of `seconds` seconds: movement channels at 1 Hz
/// and one 4 Hz speech channel, all uniform noise unless `flat_speech`.
fn noise_corpus(recordings: usize, movement: usize, seconds: usize, flat_speech: bool, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("recording_id,channel_id,role,sample_rate,t_index,value\n");
    for r in 0..recordings {
        for ch in 0..movement {
            for t in 0..seconds {
                writeln!(csv, "r{r},m{ch},movement,1,{t},{}", rng.gen_range(-1.0..1.0)).unwrap();
            }
        }
        for t in 0..seconds * 4 {
            let v = if flat_speech { 0.3 } else { rng.gen_range(0.0..1.0) };
            writeln!(csv, "r{r},voice,speech,4,{t},{v}").unwrap();
        }
    }
    csv
}

fn config(dir: &Path, csv: &str) -> PipelineConfig {
    let input = dir.join("input.csv");
    std::fs::write(&input, csv).unwrap();
    PipelineConfig {
        input,
        features: vec!["mean".into(), "variance".into()],
        min_size: 2,
        ..PipelineConfig::default()
    }
}

#[test]
fn lag_zero_keeps_every_slice() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        lags: vec![0],
        ..config(dir.path(), &noise_corpus(3, 2, 300, false, 1))
    };
    let result = run_pipeline(&cfg).unwrap();
    assert_eq!(result.population.instances, 15);
    assert_eq!(result.lags[0].population.instances, 15);
    assert!(result.population.target_mean.abs() < 1e-9);
    assert!((result.population.target_std - 1.0).abs() < 1e-9);
    for l in &result.lags {
        assert_eq!(l.profiles.len(), l.subgroups.len());
        for s in &l.subgroups {
            assert!(s.size >= cfg.min_size && s.pattern.depth() <= cfg.max_depth);
        }
        for levels in &l.profiles {
            assert!(levels.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn lag_one_drops_a_slice_per_recording() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &noise_corpus(3, 2, 300, false, 2));
    let result = run_pipeline(&cfg).unwrap();
    assert_eq!(result.lag(0).unwrap().rows.len(), 15);
    let lag1 = result.lag(1).unwrap();
    assert_eq!(lag1.rows.len(), 12);
    assert!(lag1.rows.iter().all(|k| k.slice_index < 4));
}

#[test]
fn oversized_slice_is_an_ingest_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        slice_seconds: 600.0,
        ..config(dir.path(), &noise_corpus(1, 1, 300, false, 3))
    };
    assert_eq!(run_pipeline(&cfg).unwrap_err().stage(), "ingest");
}

#[test]
fn missing_input_and_bad_config_are_reported() {
    let cfg = PipelineConfig {
        input: "/nonexistent/input.csv".into(),
        ..PipelineConfig::default()
    };
    assert_eq!(run_pipeline(&cfg).unwrap_err().stage(), "ingest");
    let cfg = PipelineConfig { top_k: 0, ..cfg };
    assert_eq!(run_pipeline(&cfg).unwrap_err().stage(), "config");
}

#[test]
fn stage_warnings_reach_the_result() {
    let dir = tempfile::tempdir().unwrap();
    // one movement channel: every std-aggregated column is constant; flat
    // speech: the dynamic complexity and its z-scores are degenerate
    let cfg = config(dir.path(), &noise_corpus(2, 1, 300, true, 4));
    let result = run_pipeline(&cfg).unwrap();
    let all = result.warnings.join("\n");
    assert!(all.contains("std__mean"), "{all}");
    assert!(all.contains("constant speech channel"), "{all}");
    assert!(all.contains("zero variance"), "{all}");
}

#[test]
fn missing_speech_channel_is_a_target_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv: String = noise_corpus(1, 2, 300, false, 5)
        .lines()
        .filter(|l| !l.contains(",speech,"))
        .map(|l| format!("{l}\n"))
        .collect();
    let err = run_pipeline(&config(dir.path(), &csv)).unwrap_err();
    assert_eq!(err.stage(), "target");
}

#[test]
fn full_catalog_runs_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        features: vec![],
        ..config(dir.path(), &noise_corpus(2, 3, 300, false, 6))
    };
    let result = run_pipeline(&cfg).unwrap();
    assert!(!result.lags.is_empty());

    let out = dir.path().join("out");
    let doc = export_run(&result, &out, ExportFormat::Document).unwrap();
    assert_eq!(doc, vec![out.join(DOCUMENT_FILE)]);
    assert_eq!(import_run(&doc[0]).unwrap(), result);

    let csvs = export_run(&result, &out, ExportFormat::Csv).unwrap();
    assert_eq!(csvs.len(), 2);
    let text = std::fs::read_to_string(&csvs[1]).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("pattern,size,subgroup_mean,population_mean,quality"));
    assert_eq!(lines.count(), result.lags[1].subgroups.len());
}

#[test]
fn in_memory_run_matches_file_run() {
    let dir = tempfile::tempdir().unwrap();
    let csv = noise_corpus(2, 2, 300, false, 7);
    let cfg = config(dir.path(), &csv);
    let from_file = run_pipeline(&cfg).unwrap();
    let groups = read_recordings(csv.as_bytes()).unwrap();
    let in_memory = run_on_recordings(&cfg, &groups, &from_file.input_digest).unwrap();
    assert_eq!(from_file, in_memory);
}

#[test]
fn extract_and_target_tables() {
    let csv = noise_corpus(2, 2, 180, false, 8);
    let groups = read_recordings(csv.as_bytes()).unwrap();
    let cfg = PipelineConfig {
        input: "unused.csv".into(),
        features: vec!["mean".into()],
        ..PipelineConfig::default()
    };
    let matrix = extract_features(&cfg, &groups).unwrap();
    assert_eq!(matrix.n_rows(), 6);
    assert_eq!(matrix.column_names(), vec!["mean__mean", "std__mean"]);

    let series = complexity_series(&cfg, &groups).unwrap();
    assert_eq!(series.len(), 2);
    // 180 one-second energy blocks, window 30, step 1
    assert_eq!(series[0].series.len(), 151);
    let mut buf = Vec::new();
    write_dc_csv(&series, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("recording_id,window_start_s,F,D,complexity\nr0,0.0,"));
    assert_eq!(text.lines().count(), 1 + 2 * 151);
}

#[test]
fn planted_lag_one_beats_lag_zero() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::planted_corpus(99);
    let input = dir.path().join("planted.csv");
    std::fs::write(&input, corpus.csv).unwrap();
    let cfg = PipelineConfig {
        input,
        features: vec!["variance".into(), "longest_strike_below_mean".into()],
        ..PipelineConfig::default()
    };
    let result = run_pipeline(&cfg).unwrap();
    let lag1 = &result.lag(1).unwrap().subgroups[0];
    assert_eq!(lag1.pattern.to_string(), common::PLANTED_PATTERN);
    let planted_rows = corpus
        .planted
        .iter()
        .filter(|(_, s)| *s + 1 < common::PLANTED_SLICES)
        .count();
    assert_eq!(lag1.size, planted_rows);
    let lag0 = result.lag(0).unwrap().subgroups.first().map_or(0.0, |s| s.quality);
    assert!(lag1.quality > lag0);
}
