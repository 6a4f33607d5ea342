//! Observation stream files.
//!
//! Binary layout: a flat sequence of little-endian 18-byte records
//! `(frame u32, trajectory_id u32, camera u16, x f32, y f32)`, ordered by
//! frame then trajectory id then camera. A JSON sidecar header carries the
//! format version, record count and frame count. A CSV emitter with the same
//! columns exists for debugging.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::render::{FrameObservations, TrackObservation};
use crate::error::{Error, Result};
use crate::geometry::Observation;

pub const OBSERVATION_FORMAT_VERSION: u32 = 1;
pub const OBSERVATION_RECORD_BYTES: usize = 18;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationHeader {
    pub format_version: u32,
    pub byte_order: String,
    pub record_bytes: usize,
    pub records: u64,
    pub frames: u32,
    pub cameras: usize,
}

/// Sidecar path for an observation file: `obs.bin` -> `obs.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Streams frames to disk; call [`ObservationWriter::finish`] to write the
/// sidecar.
pub struct ObservationWriter {
    path: PathBuf,
    out: BufWriter<File>,
    records: u64,
    frames: u32,
    cameras: usize,
}

impl ObservationWriter {
    pub fn create(path: &Path, cameras: usize) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(ObservationWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            records: 0,
            frames: 0,
            cameras,
        })
    }

    /// Appends one frame; frames must arrive in order starting at 0.
    pub fn write_frame(&mut self, frame: &FrameObservations) -> Result<()> {
        if frame.frame != self.frames {
            return Err(Error::format(
                &self.path,
                format!("frame {} written out of order (expected {})", frame.frame, self.frames),
            ));
        }
        let mut record = [0u8; OBSERVATION_RECORD_BYTES];
        for e in &frame.entries {
            let camera = u16::try_from(e.observation.camera)
                .map_err(|_| Error::format(&self.path, "camera id exceeds u16"))?;
            record[0..4].copy_from_slice(&frame.frame.to_le_bytes());
            record[4..8].copy_from_slice(&e.track.to_le_bytes());
            record[8..10].copy_from_slice(&camera.to_le_bytes());
            record[10..14].copy_from_slice(&(e.observation.pixel.x as f32).to_le_bytes());
            record[14..18].copy_from_slice(&(e.observation.pixel.y as f32).to_le_bytes());
            self.out.write_all(&record).map_err(|e| Error::io(&self.path, e))?;
        }
        self.records += frame.len() as u64;
        self.frames += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<ObservationHeader> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        let header = ObservationHeader {
            format_version: OBSERVATION_FORMAT_VERSION,
            byte_order: "little".into(),
            record_bytes: OBSERVATION_RECORD_BYTES,
            records: self.records,
            frames: self.frames,
            cameras: self.cameras,
        };
        let side = sidecar_path(&self.path);
        let text = serde_json::to_string_pretty(&header).map_err(|e| Error::json(&side, e))?;
        std::fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
        Ok(header)
    }
}

pub fn read_header(path: &Path) -> Result<ObservationHeader> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let header: ObservationHeader = serde_json::from_str(&text).map_err(|e| Error::json(&side, e))?;
    if header.format_version != OBSERVATION_FORMAT_VERSION
        || header.record_bytes != OBSERVATION_RECORD_BYTES
        || header.byte_order != "little"
    {
        return Err(Error::format(&side, "unsupported observation header"));
    }
    Ok(header)
}

/// Reads an observation file frame by frame (empty frames included).
pub struct ObservationReader {
    path: PathBuf,
    input: BufReader<File>,
    header: ObservationHeader,
    remaining: u64,
    next_frame: u32,
    pending: Option<(u32, TrackObservation)>,
}

impl ObservationReader {
    pub fn open(path: &Path) -> Result<Self> {
        let header = read_header(path)?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        if len != header.records * OBSERVATION_RECORD_BYTES as u64 {
            return Err(Error::format(
                path,
                format!("file holds {len} bytes, header promises {} records", header.records),
            ));
        }
        Ok(ObservationReader {
            path: path.to_path_buf(),
            input: BufReader::new(file),
            remaining: header.records,
            header,
            next_frame: 0,
            pending: None,
        })
    }

    pub fn header(&self) -> &ObservationHeader {
        &self.header
    }

    fn read_record(&mut self) -> Result<Option<(u32, TrackObservation)>> {
        if self.remaining == 0 {
            return Ok(None);
        }
        let mut r = [0u8; OBSERVATION_RECORD_BYTES];
        self.input.read_exact(&mut r).map_err(|e| Error::io(&self.path, e))?;
        self.remaining -= 1;
        let frame = u32::from_le_bytes(r[0..4].try_into().expect("4 bytes"));
        let track = u32::from_le_bytes(r[4..8].try_into().expect("4 bytes"));
        let camera = u16::from_le_bytes(r[8..10].try_into().expect("2 bytes"));
        let x = f32::from_le_bytes(r[10..14].try_into().expect("4 bytes"));
        let y = f32::from_le_bytes(r[14..18].try_into().expect("4 bytes"));
        if usize::from(camera) >= self.header.cameras || frame >= self.header.frames || !x.is_finite() || !y.is_finite() {
            return Err(Error::format(&self.path, format!("corrupt record in frame {frame}")));
        }
        Ok(Some((
            frame,
            TrackObservation {
                track,
                observation: Observation {
                    camera: usize::from(camera),
                    pixel: Vector2::new(f64::from(x), f64::from(y)),
                    frame,
                },
            },
        )))
    }

    fn next_frame(&mut self) -> Result<Option<FrameObservations>> {
        if self.next_frame >= self.header.frames {
            return Ok(None);
        }
        let frame = self.next_frame;
        let mut entries = Vec::new();
        loop {
            let next = match self.pending.take() {
                Some(p) => Some(p),
                None => self.read_record()?,
            };
            match next {
                Some((f, e)) if f == frame => entries.push(e),
                Some((f, e)) if f > frame => {
                    self.pending = Some((f, e));
                    break;
                }
                Some((f, _)) => {
                    return Err(Error::format(&self.path, format!("frame {f} appears after frame {frame}")));
                }
                None => break,
            }
        }
        self.next_frame += 1;
        Ok(Some(FrameObservations::new(frame, entries)))
    }
}

impl Iterator for ObservationReader {
    type Item = Result<FrameObservations>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

/// Debug CSV with columns `frame,trajectory_id,camera,x,y`.
pub fn write_observations_csv<'a>(path: &Path, frames: impl IntoIterator<Item = &'a FrameObservations>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["frame", "trajectory_id", "camera", "x", "y"])
        .map_err(|e| Error::csv(path, e))?;
    for f in frames {
        for e in &f.entries {
            w.write_record([
                f.frame.to_string(),
                e.track.to_string(),
                e.observation.camera.to_string(),
                (e.observation.pixel.x as f32).to_string(),
                (e.observation.pixel.y as f32).to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
