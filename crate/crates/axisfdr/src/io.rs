//! Binary volume file formats, little-endian throughout.
//!
//! Shared header: an 8-byte magic, `nx ny nz` as u32, then `sx sy sz` as
//! f64 (mm). Payloads are x-fastest.
//!
//! - `.dvol` (`DVOL0001`): three f32 per voxel; a non-finite triple marks an
//!   undefined voxel.
//! - `.svol` (`SVOL0001`): one f32 per voxel; non-finite marks undefined.
//! - `.mvol` (`MVOL0001`): one byte per voxel, 0 or 1.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use crate::volume::{DirectionVolume, GridGeometry, Mask, StatisticVolume};

const DIRECTION_MAGIC: &[u8; 8] = b"DVOL0001";
const SCALAR_MAGIC: &[u8; 8] = b"SVOL0001";
const MASK_MAGIC: &[u8; 8] = b"MVOL0001";

#[derive(Error, Debug)]
pub enum VolumeIoError {
    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },
    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },
}

impl VolumeIoError {
    fn format(path: &Path, detail: impl Into<String>) -> Self {
        VolumeIoError::Format { path: path.to_path_buf(), detail: detail.into() }
    }
}

trait WithPath<T> {
    fn at(self, path: &Path) -> Result<T, VolumeIoError>;
}

impl<T> WithPath<T> for std::io::Result<T> {
    fn at(self, path: &Path) -> Result<T, VolumeIoError> {
        self.map_err(|cause| VolumeIoError::Io { path: path.to_path_buf(), cause })
    }
}

fn write_header<W: Write>(
    w: &mut W,
    magic: &[u8; 8],
    geometry: &GridGeometry,
) -> std::io::Result<()> {
    w.write_all(magic)?;
    w.write_u32::<LittleEndian>(geometry.nx as u32)?;
    w.write_u32::<LittleEndian>(geometry.ny as u32)?;
    w.write_u32::<LittleEndian>(geometry.nz as u32)?;
    for s in geometry.spacing {
        w.write_f64::<LittleEndian>(s)?;
    }
    Ok(())
}

fn read_header<R: Read>(
    r: &mut R,
    magic: &[u8; 8],
    path: &Path,
) -> Result<GridGeometry, VolumeIoError> {
    let mut found = [0u8; 8];
    r.read_exact(&mut found).at(path)?;
    if &found != magic {
        return Err(VolumeIoError::format(
            path,
            format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&found),
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let nx = r.read_u32::<LittleEndian>().at(path)? as usize;
    let ny = r.read_u32::<LittleEndian>().at(path)? as usize;
    let nz = r.read_u32::<LittleEndian>().at(path)? as usize;
    let mut spacing = [0.0f64; 3];
    for s in &mut spacing {
        *s = r.read_f64::<LittleEndian>().at(path)?;
    }
    GridGeometry::new(nx, ny, nz, spacing)
        .map_err(|e| VolumeIoError::format(path, e.to_string()))
}

pub fn write_direction_volume(path: &Path, vol: &DirectionVolume) -> Result<(), VolumeIoError> {
    let mut w = BufWriter::new(File::create(path).at(path)?);
    write_header(&mut w, DIRECTION_MAGIC, vol.geometry()).at(path)?;
    for triple in vol.raw() {
        for c in triple {
            w.write_f32::<LittleEndian>(*c as f32).at(path)?;
        }
    }
    w.flush().at(path)
}

pub fn read_direction_volume(path: &Path) -> Result<DirectionVolume, VolumeIoError> {
    let mut r = BufReader::new(File::open(path).at(path)?);
    let geometry = read_header(&mut r, DIRECTION_MAGIC, path)?;
    let mut axes = Vec::with_capacity(geometry.len());
    for i in 0..geometry.len() {
        let mut triple = [0.0f64; 3];
        for c in &mut triple {
            *c = r.read_f32::<LittleEndian>().at(path)? as f64;
        }
        if triple.iter().all(|c| c.is_finite()) {
            let norm = (triple.iter().map(|c| c * c).sum::<f64>()).sqrt();
            if !(0.5..=2.0).contains(&norm) {
                return Err(VolumeIoError::format(
                    path,
                    format!("voxel {i}: direction norm {norm} is not close to 1"),
                ));
            }
        } else {
            // normalize every undefined encoding to all-NaN
            triple = [f64::NAN; 3];
        }
        axes.push(triple);
    }
    expect_eof(&mut r, path)?;
    DirectionVolume::from_raw(geometry, axes)
        .map_err(|e| VolumeIoError::format(path, e.to_string()))
}

pub fn write_scalar_volume(path: &Path, vol: &StatisticVolume) -> Result<(), VolumeIoError> {
    let mut w = BufWriter::new(File::create(path).at(path)?);
    write_header(&mut w, SCALAR_MAGIC, vol.geometry()).at(path)?;
    for v in vol.data() {
        w.write_f32::<LittleEndian>(*v as f32).at(path)?;
    }
    w.flush().at(path)
}

pub fn read_scalar_volume(path: &Path) -> Result<StatisticVolume, VolumeIoError> {
    let mut r = BufReader::new(File::open(path).at(path)?);
    let geometry = read_header(&mut r, SCALAR_MAGIC, path)?;
    let mut data = Vec::with_capacity(geometry.len());
    for _ in 0..geometry.len() {
        data.push(r.read_f32::<LittleEndian>().at(path)? as f64);
    }
    expect_eof(&mut r, path)?;
    StatisticVolume::from_data(geometry, data)
        .map_err(|e| VolumeIoError::format(path, e.to_string()))
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<(), VolumeIoError> {
    let mut w = BufWriter::new(File::create(path).at(path)?);
    write_header(&mut w, MASK_MAGIC, mask.geometry()).at(path)?;
    for &m in mask.membership() {
        w.write_u8(m as u8).at(path)?;
    }
    w.flush().at(path)
}

pub fn read_mask(path: &Path) -> Result<Mask, VolumeIoError> {
    let mut r = BufReader::new(File::open(path).at(path)?);
    let geometry = read_header(&mut r, MASK_MAGIC, path)?;
    let mut membership = Vec::with_capacity(geometry.len());
    for i in 0..geometry.len() {
        match r.read_u8().at(path)? {
            0 => membership.push(false),
            1 => membership.push(true),
            other => {
                return Err(VolumeIoError::format(
                    path,
                    format!("voxel {i}: mask byte must be 0 or 1, got {other}"),
                ))
            }
        }
    }
    expect_eof(&mut r, path)?;
    Mask::from_membership(geometry, membership)
        .map_err(|e| VolumeIoError::format(path, e.to_string()))
}

fn expect_eof<R: Read>(r: &mut R, path: &Path) -> Result<(), VolumeIoError> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe).at(path)? {
        0 => Ok(()),
        _ => Err(VolumeIoError::format(path, "trailing bytes after payload")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axis::UnitAxis;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geometry() -> GridGeometry {
        GridGeometry::new(3, 2, 2, [2.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn direction_volume_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("axes.dvol");
        let g = geometry();
        let mut vol = DirectionVolume::undefined(g);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..g.len() {
            if i != 5 {
                let axis = UnitAxis::new([
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.1..1.0),
                ])
                .unwrap();
                vol.set_axis(i, Some(axis));
            }
        }
        write_direction_volume(&path, &vol).unwrap();
        let back = read_direction_volume(&path).unwrap();
        assert_eq!(back.geometry(), &g);
        assert!(back.axis(5).is_none());
        for i in 0..g.len() {
            match (vol.axis(i), back.axis(i)) {
                (Some(a), Some(b)) => assert!(a.angle_to(&b) < 1e-6),
                (None, None) => {}
                _ => panic!("definedness changed at {i}"),
            }
        }
        // writing the reread volume reproduces the file byte for byte
        let path2 = dir.path().join("axes2.dvol");
        write_direction_volume(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn scalar_volume_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stat.svol");
        let g = geometry();
        let mut vol = StatisticVolume::filled(g, 0.0);
        for i in 0..g.len() {
            vol.set(i, i as f64 * 0.25);
        }
        vol.set(3, f64::NAN);
        write_scalar_volume(&path, &vol).unwrap();
        let back = read_scalar_volume(&path).unwrap();
        for i in 0..g.len() {
            let (a, b) = (vol.get(i), back.get(i));
            assert!(a.is_nan() == b.is_nan());
            if a.is_finite() {
                assert_eq!(a as f32, b as f32);
            }
        }
    }

    #[test]
    fn mask_round_trips_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("search.mvol");
        let g = geometry();
        let membership: Vec<bool> = (0..g.len()).map(|i| i % 3 != 0).collect();
        let mask = Mask::from_membership(g, membership).unwrap();
        write_mask(&path, &mask).unwrap();
        let back = read_mask(&path).unwrap();
        assert_eq!(back, mask);

        // corrupt one payload byte
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] = 7;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_mask(&path), Err(VolumeIoError::Format { .. })));
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stat.svol");
        let g = geometry();
        write_scalar_volume(&path, &StatisticVolume::filled(g, 1.0)).unwrap();
        assert!(matches!(read_mask(&path), Err(VolumeIoError::Format { .. })));
        assert!(matches!(
            read_direction_volume(&path),
            Err(VolumeIoError::Format { .. })
        ));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stat.svol");
        let g = geometry();
        write_scalar_volume(&path, &StatisticVolume::filled(g, 1.0)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(read_scalar_volume(&path), Err(VolumeIoError::Io { .. })));
    }
}
