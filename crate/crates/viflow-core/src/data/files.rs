//! On-disk formats for dataset artifacts.
//!
//! Tensors are stored as "VIFT" files: the 4-byte magic, a little-endian u32
//! version, a u8 rank, one little-endian u32 per extent, then the data as
//! raw little-endian 32-bit floats in row-major order. Images can also be
//! exported as binary PGM for eyeballing, and inertial streams as CSV.

use std::fs;
use std::path::Path;

use crate::data::imu::ImuSample;
use crate::error::{Error, Result};
use crate::geometry::{FlowField, Image};

/// Leading magic bytes of every tensor file.
pub const VIFT_MAGIC: &[u8; 4] = b"VIFT";
/// Current tensor file format version.
pub const VIFT_VERSION: u32 = 1;
const MAX_RANK: usize = 8;

/// Writes a tensor in the VIFT layout. The extent product must match the
/// data length.
pub fn write_vift(path: &Path, extents: &[usize], data: &[f32]) -> Result<()> {
    if extents.is_empty() || extents.len() > MAX_RANK {
        return Err(Error::Contract(format!(
            "rank must lie in 1..={MAX_RANK}, got {}",
            extents.len()
        )));
    }
    let mut count = 1usize;
    for &e in extents {
        if e == 0 || e > u32::MAX as usize {
            return Err(Error::Contract(format!("extent {e} is out of range")));
        }
        count = count
            .checked_mul(e)
            .ok_or_else(|| Error::Contract("extent product overflows".to_string()))?;
    }
    if count != data.len() {
        return Err(Error::Contract(format!(
            "extents {extents:?} describe {count} values but {} were given",
            data.len()
        )));
    }
    let mut bytes = Vec::with_capacity(9 + 4 * extents.len() + 4 * data.len());
    bytes.extend_from_slice(VIFT_MAGIC);
    bytes.extend_from_slice(&VIFT_VERSION.to_le_bytes());
    bytes.push(extents.len() as u8);
    for &e in extents {
        bytes.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for &v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a VIFT tensor back as extents and data.
pub fn read_vift(path: &Path) -> Result<(Vec<usize>, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_vift(&bytes)
}

fn parse_vift(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f32>)> {
    let fail = |offset: usize, message: String| Error::Format {
        offset: offset as u64,
        message,
    };
    if bytes.len() < 4 || &bytes[..4] != VIFT_MAGIC {
        return Err(fail(0, "missing the VIFT magic".to_string()));
    }
    if bytes.len() < 9 {
        return Err(fail(bytes.len(), "header is truncated".to_string()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VIFT_VERSION {
        return Err(fail(4, format!("unsupported version {version}")));
    }
    let rank = bytes[8] as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(fail(8, format!("rank must lie in 1..={MAX_RANK}, got {rank}")));
    }
    let data_start = 9 + 4 * rank;
    if bytes.len() < data_start {
        return Err(fail(bytes.len(), "extent list is truncated".to_string()));
    }
    let mut extents = Vec::with_capacity(rank);
    let mut count = 1usize;
    for i in 0..rank {
        let offset = 9 + 4 * i;
        let e = u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
            as usize;
        if e == 0 {
            return Err(fail(offset, "extents must be positive".to_string()));
        }
        count = count
            .checked_mul(e)
            .ok_or_else(|| fail(offset, "extent product overflows".to_string()))?;
        extents.push(e);
    }
    let body = &bytes[data_start..];
    if body.len() != 4 * count {
        return Err(fail(
            data_start,
            format!(
                "extents {extents:?} call for {} data bytes but {} remain",
                4 * count,
                body.len()
            ),
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((extents, data))
}

/// Stores an image as a rank-2 VIFT tensor, narrowing to f32.
pub fn write_image_vift(path: &Path, image: &Image) -> Result<()> {
    let data: Vec<f32> = image.data().iter().map(|&v| v as f32).collect();
    write_vift(path, &[image.height(), image.width()], &data)
}

pub fn read_image_vift(path: &Path) -> Result<Image> {
    let (extents, data) = read_vift(path)?;
    if extents.len() != 2 {
        return Err(Error::Format {
            offset: 8,
            message: format!("an image tensor must be rank 2, got {extents:?}"),
        });
    }
    Image::new(
        extents[0],
        extents[1],
        data.into_iter().map(f64::from).collect(),
    )
}

/// Stores a flow field as a rank-3 VIFT tensor with channels (u, v, valid).
pub fn write_flow_vift(path: &Path, flow: &FlowField) -> Result<()> {
    let (h, w) = (flow.height(), flow.width());
    let mut data = Vec::with_capacity(h * w * 3);
    for i in 0..h * w {
        data.push(flow.vectors()[2 * i] as f32);
        data.push(flow.vectors()[2 * i + 1] as f32);
        data.push(if flow.valid()[i] { 1.0 } else { 0.0 });
    }
    write_vift(path, &[h, w, 3], &data)
}

pub fn read_flow_vift(path: &Path) -> Result<FlowField> {
    let (extents, data) = read_vift(path)?;
    if extents.len() != 3 || extents[2] != 3 {
        return Err(Error::Format {
            offset: 8,
            message: format!("a flow tensor must be (rows, cols, 3), got {extents:?}"),
        });
    }
    let pixels = extents[0] * extents[1];
    let mut vectors = Vec::with_capacity(pixels * 2);
    let mut valid = Vec::with_capacity(pixels);
    for i in 0..pixels {
        vectors.push(f64::from(data[3 * i]));
        vectors.push(f64::from(data[3 * i + 1]));
        valid.push(data[3 * i + 2] != 0.0);
    }
    FlowField::new(extents[0], extents[1], vectors, valid)
}

/// Stores a packed inertial window as a rank-2 (rows, 6) VIFT tensor.
pub fn write_window_vift(path: &Path, window: &[[f64; 6]]) -> Result<()> {
    let data: Vec<f32> = window
        .iter()
        .flat_map(|row| row.iter().map(|&v| v as f32))
        .collect();
    write_vift(path, &[window.len(), 6], &data)
}

pub fn read_window_vift(path: &Path) -> Result<Vec<[f64; 6]>> {
    let (extents, data) = read_vift(path)?;
    if extents.len() != 2 || extents[1] != 6 {
        return Err(Error::Format {
            offset: 8,
            message: format!("a window tensor must be (rows, 6), got {extents:?}"),
        });
    }
    Ok(data
        .chunks_exact(6)
        .map(|c| [0, 1, 2, 3, 4, 5].map(|i| f64::from(c[i])))
        .collect())
}

/// Exports an image as binary 8-bit PGM (P5, maxval 255). Values are clamped
/// to [0, 1] and scaled with round-half-up.
pub fn write_pgm(path: &Path, image: &Image) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    bytes.extend(
        image
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8),
    );
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Exports an inertial stream as CSV with a fixed header row.
pub fn write_imu_csv(path: &Path, samples: &[ImuSample]) -> Result<()> {
    let mut text = String::from("timestamp,gx,gy,gz,ax,ay,az\n");
    for s in samples {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.t, s.gyro[0], s.gyro[1], s.gyro[2], s.accel[0], s.accel[1], s.accel[2]
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}
