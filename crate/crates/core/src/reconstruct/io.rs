//! Trajectory stream files.
//!
//! Binary layout (little-endian): `format_version u32`, `count u32`, then per
//! trajectory `id u32`, `source u32`, `T_e u32`, `T_d u32`, the points as
//! `f32 x3` per frame, the visibility per frame as a `u16` pair count
//! followed by `(camera u16, prob f32)` pairs, and the mean inlier
//! reprojection error as `f32` per frame. Small streams can also be exported
//! as JSON.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::Trajectory;
use crate::error::{Error, Result};

pub const TRAJECTORY_FORMAT_VERSION: u32 = 1;

pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let count = u32::try_from(trajectories.len()).map_err(|_| Error::format(path, "too many trajectories"))?;
    w.write_all(&TRAJECTORY_FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&count.to_le_bytes()).map_err(io)?;
    for t in trajectories {
        if t.is_empty() {
            return Err(Error::format(path, format!("trajectory {} is empty", t.id)));
        }
        for v in [t.id, t.source, t.emerge, t.dissolve()] {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        for p in &t.points {
            for c in p.iter() {
                w.write_all(&(*c as f32).to_le_bytes()).map_err(io)?;
            }
        }
        for vis in &t.visibility {
            let n = u16::try_from(vis.len()).map_err(|_| Error::format(path, "too many visible cameras"))?;
            w.write_all(&n.to_le_bytes()).map_err(io)?;
            for (c, v) in vis {
                w.write_all(&c.to_le_bytes()).map_err(io)?;
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        for r in &t.reprojection {
            w.write_all(&r.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

struct Cursor<'a> {
    path: &'a Path,
    input: BufReader<File>,
}

impl Cursor<'_> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.input
            .read_exact(&mut b)
            .map_err(|_| Error::format(self.path, "unexpected end of trajectory file"))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes()?))
    }
}

/// Reads a binary trajectory stream. Points come back at `f32` precision.
pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Cursor {
        path,
        input: BufReader::new(file),
    };
    let version = r.u32()?;
    if version != TRAJECTORY_FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported trajectory format_version {version}")));
    }
    let count = r.u32()?;
    let mut out = Vec::with_capacity(count.min(1 << 20) as usize);
    for _ in 0..count {
        let (id, source, emerge, dissolve) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
        if dissolve < emerge {
            return Err(Error::format(path, format!("trajectory {id} dissolves before it emerges")));
        }
        let frames = (dissolve - emerge + 1) as usize;
        let mut t = Trajectory::new(id, source, emerge);
        for _ in 0..frames {
            let p = Vector3::new(f64::from(r.f32()?), f64::from(r.f32()?), f64::from(r.f32()?));
            t.points.push(p);
        }
        for _ in 0..frames {
            let n = r.u16()?;
            let mut vis = Vec::with_capacity(usize::from(n));
            for _ in 0..n {
                vis.push((r.u16()?, r.f32()?));
            }
            t.visibility.push(vis);
        }
        for _ in 0..frames {
            t.reprojection.push(r.f32()?);
        }
        t.validate().map_err(|m| Error::format(path, m))?;
        out.push(t);
    }
    let mut rest = [0u8; 1];
    if r.input.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::format(path, "trailing bytes after the last trajectory"));
    }
    Ok(out)
}

pub fn write_trajectories_json(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let text = serde_json::to_string_pretty(trajectories).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_trajectories_json(path: &Path) -> Result<Vec<Trajectory>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let out: Vec<Trajectory> = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    for t in &out {
        t.validate().map_err(|m| Error::format(path, m))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Trajectory> {
        let mut a = Trajectory::new(0, 7, 2);
        a.push(Vector3::new(0.5, 0.25, 1.0), vec![(0, 1.0), (3, 0.5)], 0.25);
        a.push(Vector3::new(0.5, 0.5, 1.0), vec![(1, 0.75)], 0.5);
        let mut b = Trajectory::new(1, 8, 0);
        b.push(Vector3::new(-1.0, 2.0, 0.125), vec![], 0.0);
        vec![a, b]
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        write_trajectories(&path, &sample()).unwrap();
        assert_eq!(read_trajectories(&path).unwrap(), sample());
        // header, 2 trajectory headers, 3 points, visibility (2 + 2 pairs,
        // 2 + 1 pair, 2 + none), 3 reprojection values
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 8 + 32 + 36 + (14 + 8 + 2) + 12);
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        write_trajectories_json(&path, &sample()).unwrap();
        assert_eq!(read_trajectories_json(&path).unwrap(), sample());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        write_trajectories(&path, &sample()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(read_trajectories(&path).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        std::fs::write(&path, &extra).unwrap();
        assert!(read_trajectories(&path).is_err());
        let mut bad = bytes;
        bad[0] = 9;
        std::fs::write(&path, &bad).unwrap();
        assert!(read_trajectories(&path).is_err());
    }
}
