//! Loading long-format CSV recordings, energy resampling and slicing.
//!
//! Input rows look like
//!
//! ```text
//! recording_id,channel_id,role,sample_rate,t_index,value
//! team01,member_a,movement,1,0,0.25
//! ```
//!
//! Channels of one recording may run at different sample rates; slices are
//! aligned by wall-clock time.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::IngestError;

pub const CSV_COLUMNS: [&str; 6] = ["recording_id", "channel_id", "role", "sample_rate", "t_index", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelRole {
    Movement,
    Speech,
    Other,
}

impl ChannelRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelRole::Movement => "movement",
            ChannelRole::Speech => "speech",
            ChannelRole::Other => "other",
        }
    }
}

impl fmt::Display for ChannelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ChannelRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "movement" => Ok(ChannelRole::Movement),
            "speech" => Ok(ChannelRole::Speech),
            "other" => Ok(ChannelRole::Other),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub id: String,
    pub label: String,
    pub sample_rate: f64,
    pub values: Vec<f64>,
}

impl Channel {
    pub fn new(id: impl Into<String>, sample_rate: f64, values: Vec<f64>) -> Result<Self, IngestError> {
        let id = id.into();
        if !sample_rate.is_finite() || sample_rate <= 0.0 {
            return Err(IngestError::BadSampleRate(id));
        }
        if values.is_empty() {
            return Err(IngestError::EmptyChannel(id));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IngestError::NonFiniteValue(id));
        }
        Ok(Channel {
            label: id.clone(),
            id,
            sample_rate,
            values,
        })
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.values.len() as f64 / self.sample_rate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingGroup {
    pub recording_id: String,
    channels: Vec<Channel>,
    roles: BTreeMap<String, ChannelRole>,
}

impl RecordingGroup {
    pub fn new(recording_id: impl Into<String>, channels: Vec<(Channel, ChannelRole)>) -> Result<Self, IngestError> {
        let recording_id = recording_id.into();
        if channels.is_empty() {
            return Err(IngestError::NoChannels(recording_id));
        }
        let mut roles = BTreeMap::new();
        let mut chans = Vec::with_capacity(channels.len());
        for (ch, role) in channels {
            if roles.insert(ch.id.clone(), role).is_some() {
                return Err(IngestError::DuplicateChannel {
                    recording: recording_id,
                    channel: ch.id,
                });
            }
            chans.push(ch);
        }
        Ok(RecordingGroup {
            recording_id,
            channels: chans,
            roles,
        })
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel(&self, id: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.id == id)
    }

    pub fn role(&self, channel_id: &str) -> Option<ChannelRole> {
        self.roles.get(channel_id).copied()
    }

    pub fn channels_with_role(&self, role: ChannelRole) -> impl Iterator<Item = &Channel> {
        self.channels
            .iter()
            .filter(move |c| self.roles.get(&c.id) == Some(&role))
    }

    /// Duration of the shortest channel, in seconds.
    pub fn shortest_duration(&self) -> f64 {
        self.channels
            .iter()
            .map(Channel::duration)
            .fold(f64::INFINITY, f64::min)
    }
}

struct PendingChannel {
    role: ChannelRole,
    sample_rate: f64,
    samples: BTreeMap<u64, f64>,
}

fn parse_num<T: std::str::FromStr>(raw: &str, line: u64, field: &'static str) -> Result<T, IngestError> {
    raw.trim().parse().map_err(|_| IngestError::NonNumeric {
        line,
        field,
        value: raw.to_string(),
    })
}

type PendingMap = BTreeMap<String, BTreeMap<String, PendingChannel>>;

fn read_into<R: Read>(reader: R, pending: &mut PendingMap) -> Result<(), IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(CSV_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or(IngestError::MissingColumn(name))?;
    }

    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(idx[i]).unwrap_or("");
        let recording = field(0).to_string();
        let channel = field(1).to_string();
        let role: ChannelRole = field(2)
            .parse()
            .map_err(|value| IngestError::UnknownRole { line, value })?;
        let sample_rate: f64 = parse_num(field(3), line, "sample_rate")?;
        let t_index: u64 = parse_num(field(4), line, "t_index")?;
        let value: f64 = parse_num(field(5), line, "value")?;
        if !value.is_finite() {
            return Err(IngestError::NonFinite { line, field: "value" });
        }
        if !sample_rate.is_finite() || sample_rate <= 0.0 {
            return Err(IngestError::BadSampleRate(channel));
        }

        let chans = pending.entry(recording.clone()).or_default();
        let entry = chans.entry(channel.clone()).or_insert_with(|| PendingChannel {
            role,
            sample_rate,
            samples: BTreeMap::new(),
        });
        if entry.role != role {
            return Err(IngestError::InconsistentChannel {
                line,
                recording,
                channel,
                field: "role",
            });
        }
        if entry.sample_rate != sample_rate {
            return Err(IngestError::InconsistentChannel {
                line,
                recording,
                channel,
                field: "sample_rate",
            });
        }
        if entry.samples.insert(t_index, value).is_some() {
            return Err(IngestError::DuplicateSample {
                line,
                recording,
                channel,
                index: t_index,
            });
        }
    }
    Ok(())
}

fn finish(pending: PendingMap) -> Result<Vec<RecordingGroup>, IngestError> {
    let mut out = Vec::with_capacity(pending.len());
    for (recording, chans) in pending {
        let mut channels = Vec::with_capacity(chans.len());
        for (channel, pc) in chans {
            let mut values = Vec::with_capacity(pc.samples.len());
            for (expected, (&index, &v)) in pc.samples.iter().enumerate() {
                if index != expected as u64 {
                    return Err(IngestError::IndexGap {
                        recording,
                        channel,
                        index: expected as u64,
                    });
                }
                values.push(v);
            }
            channels.push((Channel::new(channel, pc.sample_rate, values)?, pc.role));
        }
        out.push(RecordingGroup::new(recording, channels)?);
    }
    Ok(out)
}

/// Parses one long-format CSV stream into recordings ordered by id.
pub fn read_recordings<R: Read>(reader: R) -> Result<Vec<RecordingGroup>, IngestError> {
    let mut pending = PendingMap::new();
    read_into(reader, &mut pending)?;
    finish(pending)
}

/// Loads a set of CSV files. Rows of one channel may be spread across files;
/// a (recording, channel, index) triple may only appear once overall.
pub fn load_recordings<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<RecordingGroup>, IngestError> {
    let mut pending = PendingMap::new();
    for path in paths {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        read_into(std::io::BufReader::new(file), &mut pending)?;
    }
    finish(pending)
}

/// Sum of squares over consecutive blocks of `block_seconds`; a trailing
/// partial block is dropped.
pub fn resample_energy(channel: &Channel, block_seconds: f64) -> Result<Channel, IngestError> {
    let per_block = (block_seconds * channel.sample_rate).round();
    if block_seconds.is_nan() || block_seconds <= 0.0 || per_block < 1.0 {
        return Err(IngestError::BlockTooShort {
            channel: channel.id.clone(),
            block_seconds,
        });
    }
    let per_block = per_block as usize;
    let values: Vec<f64> = channel
        .values
        .chunks_exact(per_block)
        .map(|block| block.iter().map(|v| v * v).sum())
        .collect();
    if values.is_empty() {
        return Err(IngestError::EmptyChannel(channel.id.clone()));
    }
    Ok(Channel {
        id: channel.id.clone(),
        label: channel.label.clone(),
        sample_rate: 1.0 / block_seconds,
        values,
    })
}

/// One equal-length, non-overlapping time slice of a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice<'a> {
    pub recording_id: &'a str,
    pub slice_index: usize,
    pub start_time: f64,
    pub duration: f64,
    pub windows: BTreeMap<&'a str, &'a [f64]>,
}

/// Number of whole slices of `duration` seconds that fit in every channel.
pub fn slice_count(group: &RecordingGroup, duration: f64) -> Result<usize, IngestError> {
    if !duration.is_finite() || duration <= 0.0 {
        return Err(IngestError::BadDuration(duration));
    }
    let shortest = group.shortest_duration();
    // tolerate representation error in T / duration, e.g. 0.3 / 0.1
    let mut count = ((shortest / duration) * (1.0 + 1e-12)).floor() as usize;
    for ch in group.channels() {
        let len = window_len(ch, duration);
        count = count.min(ch.values.len().checked_div(len).unwrap_or(0));
    }
    if count == 0 {
        return Err(IngestError::DurationExceedsRecording {
            recording: group.recording_id.clone(),
            duration,
            shortest,
        });
    }
    Ok(count)
}

fn window_len(ch: &Channel, duration: f64) -> usize {
    (duration * ch.sample_rate).round() as usize
}

pub fn slice_recording(group: &RecordingGroup, duration: f64) -> Result<Vec<Slice<'_>>, IngestError> {
    let count = slice_count(group, duration)?;
    let slices = (0..count)
        .map(|i| {
            let windows = group
                .channels()
                .iter()
                .map(|ch| {
                    let len = window_len(ch, duration);
                    (ch.id.as_str(), &ch.values[i * len..(i + 1) * len])
                })
                .collect();
            Slice {
                recording_id: &group.recording_id,
                slice_index: i,
                start_time: i as f64 * duration,
                duration,
                windows,
            }
        })
        .collect();
    Ok(slices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_of(rows: &[(&str, &str, &str, f64, usize, f64)]) -> String {
        let mut s = String::from("recording_id,channel_id,role,sample_rate,t_index,value\n");
        for (r, c, role, sr, t, v) in rows {
            s.push_str(&format!("{r},{c},{role},{sr},{t},{v}\n"));
        }
        s
    }

    #[test]
    fn loads_two_recordings_three_channels() {
        let mut rows = Vec::new();
        for r in ["r1", "r2"] {
            for c in ["a", "b", "s"] {
                let role = if c == "s" { "speech" } else { "movement" };
                for t in 0..4 {
                    rows.push((r, c, role, 2.0, t, t as f64));
                }
            }
        }
        let groups = read_recordings(csv_of(&rows).as_bytes()).unwrap();
        assert_eq!(groups.len(), 2);
        assert!(groups.iter().all(|g| g.channels().len() == 3));
        assert_eq!(groups[0].role("s"), Some(ChannelRole::Speech));
        assert_eq!(groups[0].channel("a").unwrap().sample_rate, 2.0);
    }

    #[test]
    fn identity_load_600_samples() {
        let rows: Vec<_> = (0..600).map(|t| ("r", "c", "movement", 10.0, t, 0.5)).collect();
        let groups = read_recordings(csv_of(&rows).as_bytes()).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].channels()[0].values.len(), 600);
        assert_eq!(groups[0].channels()[0].duration(), 60.0);
    }

    #[test]
    fn non_numeric_value_names_line() {
        let data =
            "recording_id,channel_id,role,sample_rate,t_index,value\nr,c,movement,1,0,1.0\nr,c,movement,1,1,abc\n";
        match read_recordings(data.as_bytes()) {
            Err(IngestError::NonNumeric { line, field, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(field, "value");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_duplicates_rejected() {
        let data = "recording_id,channel_id,role,t_index,value\nr,c,movement,0,1.0\n";
        assert!(matches!(
            read_recordings(data.as_bytes()),
            Err(IngestError::MissingColumn("sample_rate"))
        ));
        let dup = "recording_id,channel_id,role,sample_rate,t_index,value\nr,c,movement,1,0,1\nr,c,movement,1,0,2\n";
        assert!(matches!(
            read_recordings(dup.as_bytes()),
            Err(IngestError::DuplicateSample { index: 0, .. })
        ));
        let nan = "recording_id,channel_id,role,sample_rate,t_index,value\nr,c,movement,1,0,NaN\n";
        assert!(matches!(
            read_recordings(nan.as_bytes()),
            Err(IngestError::NonFinite { .. })
        ));
        let gap = "recording_id,channel_id,role,sample_rate,t_index,value\nr,c,movement,1,0,1\nr,c,movement,1,2,1\n";
        assert!(matches!(
            read_recordings(gap.as_bytes()),
            Err(IngestError::IndexGap { index: 1, .. })
        ));
    }

    #[test]
    fn crlf_and_column_order_accepted() {
        let data =
            "value,t_index,sample_rate,role,channel_id,recording_id\r\n1.5,0,1,other,c,r\r\n2.5,1,1,other,c,r\r\n";
        let groups = read_recordings(data.as_bytes()).unwrap();
        assert_eq!(groups[0].channels()[0].values, vec![1.5, 2.5]);
    }

    #[test]
    fn empty_channel_rejected() {
        assert!(matches!(
            Channel::new("c", 1.0, vec![]),
            Err(IngestError::EmptyChannel(_))
        ));
        assert!(matches!(
            Channel::new("c", 0.0, vec![1.0]),
            Err(IngestError::BadSampleRate(_))
        ));
    }

    #[test]
    fn energy_examples() {
        let ch = Channel::new("s", 3.0, vec![1.0, -1.0, 2.0]).unwrap();
        let e = resample_energy(&ch, 1.0).unwrap();
        assert_eq!(e.values, vec![6.0]);
        assert_eq!(e.sample_rate, 1.0);

        let ch = Channel::new("s", 2.0, vec![0.0; 4]).unwrap();
        assert_eq!(resample_energy(&ch, 1.0).unwrap().values, vec![0.0, 0.0]);

        let ch = Channel::new("s", 40_000.0, vec![0.1; 90_000]).unwrap();
        assert_eq!(resample_energy(&ch, 1.0).unwrap().values.len(), 2);

        let ch = Channel::new("s", 2.0, vec![1.0; 4]).unwrap();
        assert!(matches!(
            resample_energy(&ch, 0.1),
            Err(IngestError::BlockTooShort { .. })
        ));
    }

    fn group_of(seconds: usize, rate: f64) -> RecordingGroup {
        let n = (seconds as f64 * rate) as usize;
        let ch = Channel::new("c", rate, (0..n).map(|i| i as f64).collect()).unwrap();
        RecordingGroup::new("r", vec![(ch, ChannelRole::Movement)]).unwrap()
    }

    #[test]
    fn slicing_examples() {
        let g = group_of(300, 1.0);
        let s = slice_recording(&g, 60.0).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s.iter().map(|s| s.slice_index).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        assert_eq!(s[3].start_time, 180.0);

        assert_eq!(slice_recording(&group_of(330, 1.0), 60.0).unwrap().len(), 5);
        assert!(matches!(
            slice_recording(&group_of(45, 1.0), 60.0),
            Err(IngestError::DurationExceedsRecording { .. })
        ));
    }

    #[test]
    fn mixed_rates_align_by_time() {
        let a = Channel::new("a", 1.0, vec![1.0; 130]).unwrap();
        let b = Channel::new("b", 4.0, vec![2.0; 4 * 200]).unwrap();
        let g = RecordingGroup::new("r", vec![(a, ChannelRole::Movement), (b, ChannelRole::Speech)]).unwrap();
        let s = slice_recording(&g, 60.0).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].windows["a"].len(), 60);
        assert_eq!(s[1].windows["b"].len(), 240);
    }

    #[test]
    fn duplicate_channel_rejected() {
        let a = Channel::new("a", 1.0, vec![1.0]).unwrap();
        assert!(matches!(
            RecordingGroup::new("r", vec![(a.clone(), ChannelRole::Movement), (a, ChannelRole::Other)]),
            Err(IngestError::DuplicateChannel { .. })
        ));
    }
}
