//! Interchange formats for flow fields and residual visualizations.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::residual::ResidualMap;
use crate::geometry::{FlowField, Image};

/// Leading magic float of a flow file.
pub const FLO_MAGIC: f32 = 202021.25;

/// Writes a flow field as a ".flo" file: the magic float, width and height
/// as little-endian i32, then row-major interleaved (u, v) f32 pairs.
/// Validity is not representable in the format and is dropped.
pub fn write_flo(path: &Path, flow: &FlowField) -> Result<()> {
    let (h, w) = (flow.height(), flow.width());
    let mut bytes = Vec::with_capacity(12 + h * w * 8);
    bytes.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    bytes.extend_from_slice(&(w as i32).to_le_bytes());
    bytes.extend_from_slice(&(h as i32).to_le_bytes());
    for &v in flow.vectors() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a ".flo" file written by [`write_flo`] or any standard producer.
/// Every pixel of the result is valid.
pub fn read_flo(path: &Path) -> Result<FlowField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let take4 = |offset: usize| -> Result<[u8; 4]> {
        bytes
            .get(offset..offset + 4)
            .and_then(|s| s.try_into().ok())
            .ok_or_else(|| Error::Format {
                offset: bytes.len() as u64,
                message: format!("file ends at {} bytes, needed 4 at {offset}", bytes.len()),
            })
    };
    let magic = f32::from_le_bytes(take4(0)?);
    if magic != FLO_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("expected flow magic {FLO_MAGIC}, got {magic}"),
        });
    }
    let width = i32::from_le_bytes(take4(4)?);
    let height = i32::from_le_bytes(take4(8)?);
    if width < 2 || height < 2 {
        return Err(Error::Format {
            offset: 4,
            message: format!("flow extents {width}x{height} are not at least 2x2"),
        });
    }
    let (w, h) = (width as usize, height as usize);
    let expected = 12 + h * w * 8;
    if bytes.len() != expected {
        return Err(Error::Format {
            offset: 12,
            message: format!("expected {expected} bytes for {w}x{h} flow, got {}", bytes.len()),
        });
    }
    let mut vectors = Vec::with_capacity(h * w * 2);
    for i in 0..h * w * 2 {
        vectors.push(f64::from(f32::from_le_bytes(take4(12 + 4 * i)?)));
    }
    FlowField::dense(h, w, vectors)
}

/// Writes a residual map as an 8-bit PGM, mapping [0, 1] onto [0, 255].
pub fn write_residual_pgm(path: &Path, residual: &ResidualMap) -> Result<()> {
    let clamped: Vec<f64> = residual.values().iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let image = Image::new(residual.height(), residual.width(), clamped)?;
    crate::data::write_pgm(path, &image)
}

/// Writes a flow field as a binary PPM color image.
///
/// Hue encodes flow direction (angle of (u, v), 0 degrees at +u mapping to
/// red), saturation encodes magnitude relative to the largest valid vector
/// in the field, and value is fixed at 1. Invalid pixels come out black.
pub fn write_flow_ppm(path: &Path, flow: &FlowField) -> Result<()> {
    let (h, w) = (flow.height(), flow.width());
    let max_mag = flow
        .vectors()
        .chunks(2)
        .zip(flow.valid())
        .filter(|(_, &ok)| ok)
        .map(|(uv, _)| uv[0].hypot(uv[1]))
        .fold(0.0f64, f64::max);
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    for i in 0..h * w {
        let rgb = if flow.valid()[i] {
            let u = flow.vectors()[2 * i];
            let v = flow.vectors()[2 * i + 1];
            let angle = v.atan2(u).rem_euclid(std::f64::consts::TAU);
            let hue_deg = angle.to_degrees();
            let sat = if max_mag > 0.0 { u.hypot(v) / max_mag } else { 0.0 };
            hsv_to_rgb(hue_deg, sat, 1.0)
        } else {
            [0, 0, 0]
        };
        bytes.extend_from_slice(&rgb);
    }
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Standard HSV to RGB conversion; hue in degrees, saturation and value in
/// [0, 1], output channels in 0..=255.
fn hsv_to_rgb(hue_deg: f64, saturation: f64, value: f64) -> [u8; 3] {
    let c = value * saturation;
    let hp = hue_deg / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = value - c;
    let quantize = |v: f64| ((v + m).clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8;
    [quantize(r), quantize(g), quantize(b)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::residual::residual_map;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn temp_path(name: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().expect("temp dir");
        let path = dir.path().join(name);
        (dir, path)
    }

    fn random_flow(h: usize, w: usize, seed: u64) -> FlowField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors: Vec<f64> = (0..h * w * 2)
            .map(|_| f64::from(rng.random_range(-4.0f32..4.0f32)))
            .collect();
        FlowField::dense(h, w, vectors).unwrap()
    }

    #[test]
    fn flo_round_trips_f32_exactly() {
        let (_dir, path) = temp_path("a.flo");
        let flow = random_flow(5, 7, 1);
        write_flo(&path, &flow).unwrap();
        let back = read_flo(&path).unwrap();
        assert_eq!(back.vectors(), flow.vectors(), "f32-valued flow survives bitwise");
        assert!(back.valid().iter().all(|&v| v));

        write_flo(&path, &back).unwrap();
        let twice = std::fs::read(&path).unwrap();
        write_flo(&path, &read_flo(&path).unwrap()).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), twice);
    }

    #[test]
    fn flo_layout_matches_the_specification_bytes() {
        let (_dir, path) = temp_path("b.flo");
        let flow = FlowField::dense(2, 2, vec![1.0, -2.0, 0.5, 0.0, 3.0, 4.0, -1.0, 2.5]).unwrap();
        write_flo(&path, &flow).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 12 + 4 * 8);
        assert_eq!(&bytes[0..4], &202021.25f32.to_le_bytes());
        assert_eq!(&bytes[4..8], &2i32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2i32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[16..20], &(-2.0f32).to_le_bytes());
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let (_dir, path) = temp_path("c.flo");
        write_flo(&path, &random_flow(2, 2, 2)).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] ^= 0xff;
        std::fs::write(&path, bytes).unwrap();
        match read_flo(&path) {
            Err(Error::Format { offset: 0, message }) => {
                assert!(message.contains("202021.25"), "{message}");
            }
            other => panic!("expected a format error at offset 0, got {other:?}"),
        }
    }

    #[test]
    fn truncation_reports_the_file_end() {
        let (_dir, path) = temp_path("d.flo");
        write_flo(&path, &random_flow(3, 3, 3)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(read_flo(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn residual_pgm_is_plain_bytes() {
        let (_dir, path) = temp_path("r.pgm");
        let source = Image::zeros(2, 3).unwrap();
        let recon =
            Image::new(2, 3, vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.1]).unwrap();
        let map = residual_map(&source, &recon).unwrap();
        write_residual_pgm(&path, &map).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0, 128, 255, 64, 191, 26]);
    }

    #[test]
    fn flow_ppm_colors_follow_the_documented_wheel() {
        let (_dir, path) = temp_path("f.ppm");
        // Four pixels: +u (red), +v (90 degrees around the wheel), an
        // invalid pixel (black), and a zero vector (white: zero saturation).
        let vectors = vec![2.0, 0.0, 0.0, 2.0, 9.0, 9.0, 0.0, 0.0];
        let valid = vec![true, true, false, true];
        let flow = FlowField::new(2, 2, vectors, valid).unwrap();
        write_flow_ppm(&path, &flow).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P6\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let px = &bytes[header.len()..];
        assert_eq!(&px[0..3], &[255, 0, 0], "+u at full magnitude is pure red");
        assert_eq!(&px[3..6], &[128, 255, 0], "+v lands at 90 degrees");
        assert_eq!(&px[6..9], &[0, 0, 0], "invalid pixels are black");
        assert_eq!(&px[9..12], &[255, 255, 255], "zero flow is desaturated");
    }

    #[test]
    fn hsv_conversion_hits_the_primary_anchors() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [255, 0, 0]);
        assert_eq!(hsv_to_rgb(120.0, 1.0, 1.0), [0, 255, 0]);
        assert_eq!(hsv_to_rgb(240.0, 1.0, 1.0), [0, 0, 255]);
        assert_eq!(hsv_to_rgb(60.0, 1.0, 1.0), [255, 255, 0]);
        assert_eq!(hsv_to_rgb(0.0, 0.0, 1.0), [255, 255, 255]);
        assert_eq!(hsv_to_rgb(0.0, 0.0, 0.0), [0, 0, 0]);
    }
}
