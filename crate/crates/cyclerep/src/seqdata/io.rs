//! On-disk dataset format: a `manifest.json` plus one frames CSV and one
//! labels CSV per sequence.
//!
//! Frames CSV: one row per frame, region-major flattened values. Labels
//! CSV: one `0`/`1` per row, `1` meaning non-periodic. Floats are written
//! with Rust's shortest exact representation so that a save/load round
//! trip reproduces every value bit-for-bit.

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{FrameLabel, FrameSequence};
use crate::error::{Error, Result};
use crate::mat::Mat;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: String,
    pub frames_file: String,
    pub labels_file: String,
    pub num_frames: usize,
    pub num_regions: usize,
    pub raw_channels: usize,
    pub period: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub sequences: Vec<ManifestEntry>,
}

/// Write all sequences under `dir`. Existing files are overwritten;
/// output bytes are a deterministic function of the input.
pub fn save_dataset(sequences: &[FrameSequence], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(sequences.len());
    for seq in sequences {
        let frames_file = format!("{}.frames.csv", seq.video_id);
        let labels_file = format!("{}.labels.csv", seq.video_id);

        let mut frames_out = String::new();
        for frame in &seq.frames {
            let row: Vec<String> = frame.iter().map(|v| format!("{v}")).collect();
            frames_out.push_str(&row.join(","));
            frames_out.push('\n');
        }
        write_atomic(&dir.join(&frames_file), frames_out.as_bytes())?;

        let mut labels_out = String::new();
        for label in &seq.frame_labels {
            labels_out.push(match label {
                FrameLabel::Periodic => '0',
                FrameLabel::NonPeriodic => '1',
            });
            labels_out.push('\n');
        }
        write_atomic(&dir.join(&labels_file), labels_out.as_bytes())?;

        entries.push(ManifestEntry {
            video_id: seq.video_id.clone(),
            frames_file,
            labels_file,
            num_frames: seq.len(),
            num_regions: seq.num_regions(),
            raw_channels: seq.raw_channels(),
            period: seq.sample_period,
            seed: seq.seed,
        });
    }
    let manifest = Manifest {
        version: 1,
        sequences: entries,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    write_atomic(&dir.join(MANIFEST_NAME), json.as_bytes())?;
    Ok(())
}

/// Load a dataset previously written by [`save_dataset`].
///
/// An existing but empty directory yields an empty dataset (with a
/// warning); a missing directory or a directory with files but no
/// manifest is an error.
pub fn load_dataset(dir: &Path) -> Result<Vec<FrameSequence>> {
    let manifest_path = dir.join(MANIFEST_NAME);
    if !manifest_path.exists() {
        if !dir.exists() {
            return Err(Error::MissingArtifact {
                path: dir.to_path_buf(),
                hint: "gen".into(),
            });
        }
        if fs::read_dir(dir)?.next().is_none() {
            log::warn!("dataset directory {} is empty", dir.display());
            return Ok(Vec::new());
        }
        return Err(Error::MissingArtifact {
            path: manifest_path,
            hint: "gen".into(),
        });
    }

    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    let mut sequences = Vec::with_capacity(manifest.sequences.len());
    for entry in &manifest.sequences {
        let frames_path = dir.join(&entry.frames_file);
        let labels_path = dir.join(&entry.labels_file);
        for p in [&frames_path, &labels_path] {
            if !p.exists() {
                return Err(Error::MissingArtifact {
                    path: p.clone(),
                    hint: "gen".into(),
                });
            }
        }

        let frames = read_frames(&frames_path, entry)?;
        let labels = read_labels(&labels_path)?;
        if labels.len() != frames.len() {
            return Err(Error::Parse {
                file: labels_path,
                line: labels.len() + 1,
                msg: format!("{} labels for {} frames", labels.len(), frames.len()),
            });
        }
        sequences.push(FrameSequence {
            video_id: entry.video_id.clone(),
            frames,
            frame_labels: labels,
            sample_period: entry.period,
            seed: entry.seed,
        });
    }
    Ok(sequences)
}

fn read_frames(path: &Path, entry: &ManifestEntry) -> Result<Vec<Mat>> {
    let expected = entry.num_regions * entry.raw_channels;
    let text = fs::read_to_string(path)?;
    let mut frames = Vec::with_capacity(entry.num_frames);
    for (i, line) in text.lines().enumerate() {
        let mut values = Vec::with_capacity(expected);
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                file: path.to_path_buf(),
                line: i + 1,
                msg: format!("not a number: {field:?}"),
            })?;
            values.push(v);
        }
        if values.len() != expected {
            return Err(Error::Parse {
                file: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected {} columns, got {}", expected, values.len()),
            });
        }
        frames.push(
            Mat::from_vec(entry.num_regions, entry.raw_channels, values)
                .expect("column count checked above"),
        );
    }
    if frames.len() != entry.num_frames {
        return Err(Error::Parse {
            file: path.to_path_buf(),
            line: frames.len() + 1,
            msg: format!(
                "manifest declares {} frames, file has {}",
                entry.num_frames,
                frames.len()
            ),
        });
    }
    Ok(frames)
}

fn read_labels(path: &Path) -> Result<Vec<FrameLabel>> {
    let text = fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        match line.trim() {
            "0" => labels.push(FrameLabel::Periodic),
            "1" => labels.push(FrameLabel::NonPeriodic),
            other => {
                return Err(Error::Parse {
                    file: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected 0 or 1, got {other:?}"),
                })
            }
        }
    }
    Ok(labels)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp: PathBuf = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
