//! Colored point clouds as PLY (ASCII or binary little-endian).

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, PixelPoint, Pose};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlyPoint {
    pub position: [f32; 3],
    pub color: [u8; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

impl std::str::FromStr for PlyFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ascii" => Ok(Self::Ascii),
            "binary" | "binary_little_endian" => Ok(Self::BinaryLittleEndian),
            other => Err(Error::InvalidArgument(format!("unknown PLY format {other}"))),
        }
    }
}

pub fn encode_ply(points: &[PlyPoint], format: PlyFormat) -> Vec<u8> {
    let name = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let mut out = format!(
        "ply\nformat {name} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        points.len()
    )
    .into_bytes();
    for p in points {
        match format {
            PlyFormat::Ascii => {
                // `{:?}` on f32 prints the shortest string that parses back exactly
                let [x, y, z] = p.position;
                let [r, g, b] = p.color;
                out.extend_from_slice(format!("{x:?} {y:?} {z:?} {r} {g} {b}\n").as_bytes());
            }
            PlyFormat::BinaryLittleEndian => {
                for v in p.position {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.extend_from_slice(&p.color);
            }
        }
    }
    out
}

/// Reads the vertex layout written by [`encode_ply`].
pub fn decode_ply(bytes: &[u8]) -> Result<(Vec<PlyPoint>, PlyFormat)> {
    let mut r = BufReader::new(bytes);
    let mut line = String::new();
    let mut format = None;
    let mut count = None;
    let mut props = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format("PLY: missing end_header".into()));
        }
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["ply"] | ["comment", ..] => {}
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLittleEndian),
            ["element", "vertex", n] => {
                count = Some(
                    n.parse::<usize>()
                        .map_err(|_| Error::Format("PLY: bad vertex count".into()))?,
                )
            }
            ["property", ty, name] => props.push((ty.to_string(), name.to_string())),
            ["end_header"] => break,
            _ => return Err(Error::Format(format!("PLY: unsupported header line {:?}", line.trim()))),
        }
    }
    let expected = [
        ("float", "x"),
        ("float", "y"),
        ("float", "z"),
        ("uchar", "red"),
        ("uchar", "green"),
        ("uchar", "blue"),
    ];
    if props.len() != expected.len() || props.iter().zip(expected).any(|((t, n), (et, en))| t != et || n != en) {
        return Err(Error::Format("PLY: unsupported vertex properties".into()));
    }
    let format = format.ok_or_else(|| Error::Format("PLY: missing format".into()))?;
    let n = count.ok_or_else(|| Error::Format("PLY: missing vertex element".into()))?;
    let mut points = Vec::with_capacity(n);
    match format {
        PlyFormat::Ascii => {
            for _ in 0..n {
                line.clear();
                r.read_line(&mut line)?;
                let t: Vec<&str> = line.split_whitespace().collect();
                if t.len() != 6 {
                    return Err(Error::Format(format!("PLY: bad vertex line {:?}", line.trim())));
                }
                let f = |s: &str| {
                    s.parse::<f32>()
                        .map_err(|_| Error::Format(format!("PLY: bad float {s}")))
                };
                let c = |s: &str| {
                    s.parse::<u8>()
                        .map_err(|_| Error::Format(format!("PLY: bad color {s}")))
                };
                points.push(PlyPoint {
                    position: [f(t[0])?, f(t[1])?, f(t[2])?],
                    color: [c(t[3])?, c(t[4])?, c(t[5])?],
                });
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut buf = [0u8; 15];
            for _ in 0..n {
                r.read_exact(&mut buf)
                    .map_err(|_| Error::Format("PLY: truncated vertex data".into()))?;
                let f = |i: usize| f32::from_le_bytes([buf[i], buf[i + 1], buf[i + 2], buf[i + 3]]);
                points.push(PlyPoint {
                    position: [f(0), f(4), f(8)],
                    color: [buf[12], buf[13], buf[14]],
                });
            }
        }
    }
    Ok((points, format))
}

pub fn write_ply(path: &Path, points: &[PlyPoint], format: PlyFormat) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&encode_ply(points, format))?;
    f.flush()?;
    Ok(())
}

pub fn read_ply(path: &Path) -> Result<(Vec<PlyPoint>, PlyFormat)> {
    decode_ply(&std::fs::read(path)?)
}

/// Lifts every valid depth pixel to world coordinates, colored by the
/// image intensity when one is given.
pub fn depth_to_points(
    depth: &Grid<f64>,
    valid: &Grid<bool>,
    model: &CameraModel,
    pose: &Pose,
    image: Option<&Grid<f32>>,
) -> Result<Vec<PlyPoint>> {
    depth.ensure_same_dims(valid, "validity mask")?;
    if let Some(img) = image {
        depth.ensure_same_dims(img, "image")?;
    }
    let mut out = Vec::new();
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            let z = *depth.get(x, y);
            if !*valid.get(x, y) || !(z > 0.0) {
                continue;
            }
            let Ok(p) = model.lift(&PixelPoint::new(x as f64, y as f64), z) else {
                continue;
            };
            let w: Vector3<f64> = pose.transform_point(&p);
            let g = image.map_or(255, |img| img.get(x, y).round().clamp(0.0, 255.0) as u8);
            out.push(PlyPoint {
                position: [w.x as f32, w.y as f32, w.z as f32],
                color: [g, g, g],
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PinholeIntrinsics;

    fn cloud() -> Vec<PlyPoint> {
        (0..20)
            .map(|i| PlyPoint {
                position: [i as f32 * 0.1, -(i as f32) / 3.0, 1e-7 * i as f32],
                color: [i as u8, 255 - i as u8, 7],
            })
            .collect()
    }

    #[test]
    fn both_formats_round_trip() {
        for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            let bytes = encode_ply(&cloud(), format);
            let (back, f) = decode_ply(&bytes).unwrap();
            assert_eq!(f, format);
            assert_eq!(back, cloud());
            assert_eq!(encode_ply(&back, format), bytes);
        }
    }

    #[test]
    fn binary_size_matches_header() {
        let bytes = encode_ply(&cloud(), PlyFormat::BinaryLittleEndian);
        let header_end = bytes.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
        assert_eq!(bytes.len() - header_end, 20 * 15);
        assert!(decode_ply(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn lifted_points_lie_at_their_depth() {
        let k = PinholeIntrinsics::from_hfov(90.0, 8, 6).unwrap();
        let depth = Grid::from_fn(8, 6, |x, _| 2.0 + x as f64);
        let valid = Grid::from_fn(8, 6, |x, _| x != 0);
        let pose = Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let pts = depth_to_points(&depth, &valid, &CameraModel::Pinhole(k), &pose, None).unwrap();
        assert_eq!(pts.len(), 7 * 6);
        for p in &pts {
            let u = k.cx + k.fx * (f64::from(p.position[0]) - 1.0) / f64::from(p.position[2]);
            let x = u.round() as usize;
            assert!((f64::from(p.position[2]) - (2.0 + x as f64)).abs() < 1e-5);
        }
    }
}
