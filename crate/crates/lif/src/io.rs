//! Readers and writers for the on-disk formats.
//!
//! `.lifc` — point cloud frames. Little-endian layout:
//! magic `LIFC`, u32 version (= 1), u32 point count, u32 frame index,
//! u32 flag mask (bit 0: ground-truth flow, bit 1: class ids, bit 2:
//! foreground flags), then N xyz `f32` triples followed by the optional
//! blocks in flag order (N xyz `f32` flows, N `u16` classes, N `u8` flags).
//!
//! `.liff` — flow fields. Little-endian layout: magic `LIFF`, u32 version
//! (= 1), u32 vector count, u32 flag mask (bit 0: labels), N xyz `f32`
//! triples, then optionally N `u32` cluster labels.
//!
//! ASCII clouds are one `x y z` triple per line.

use std::path::{Path, PathBuf};

use crate::cloud::{FlowField, TimedPointCloud, Vec3};
use crate::error::{Error, Result};

const LIFC_MAGIC: [u8; 4] = *b"LIFC";
const LIFF_MAGIC: [u8; 4] = *b"LIFF";
const FORMAT_VERSION: u32 = 1;

const LIFC_HAS_GT_FLOW: u32 = 1 << 0;
const LIFC_HAS_CLASS: u32 = 1 << 1;
const LIFC_HAS_FG: u32 = 1 << 2;
const LIFC_KNOWN_FLAGS: u32 = LIFC_HAS_GT_FLOW | LIFC_HAS_CLASS | LIFC_HAS_FG;

const LIFF_HAS_LABELS: u32 = 1 << 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Binary,
    AsciiXyz,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, section: &'static str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                section,
                needed: n - (self.buf.len() - self.pos),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, section: &'static str) -> Result<u32> {
        let b = self.take(4, section)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vec3s(&mut self, n: usize, section: &'static str) -> Result<Vec<Vec3>> {
        let b = self.take(n * 12, section)?;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let at = |o: usize| {
                let s = &b[i * 12 + o * 4..i * 12 + o * 4 + 4];
                f32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64
            };
            out.push(Vec3::new(at(0), at(1), at(2)));
        }
        Ok(out)
    }
}

fn push_vec3s(buf: &mut Vec<u8>, vs: &[Vec3]) {
    for v in vs {
        for c in v.iter() {
            buf.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, buf: &[u8]) -> Result<()> {
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<TimedPointCloud> {
    let path = path.as_ref();
    match format {
        CloudFormat::Binary => load_cloud_binary(path),
        CloudFormat::AsciiXyz => load_cloud_ascii(path),
    }
}

fn check_magic(r: &mut Reader, expected: [u8; 4]) -> Result<()> {
    let found = r.take(4, "magic")?;
    if found != expected {
        return Err(Error::BadMagic {
            path: r.path.to_path_buf(),
            expected,
            found: [found[0], found[1], found[2], found[3]],
        });
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::BadVersion {
            path: r.path.to_path_buf(),
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    Ok(())
}

fn load_cloud_binary(path: &Path) -> Result<TimedPointCloud> {
    let buf = read_file(path)?;
    let mut r = Reader {
        buf: &buf,
        pos: 0,
        path,
    };
    check_magic(&mut r, LIFC_MAGIC)?;
    let n = r.u32("point count")? as usize;
    let frame_index = r.u32("frame index")?;
    let flags = r.u32("flag mask")?;
    if flags & !LIFC_KNOWN_FLAGS != 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("unknown flag bits {:#x}", flags & !LIFC_KNOWN_FLAGS),
        });
    }
    let points = r.vec3s(n, "positions")?;
    let gt_flow = if flags & LIFC_HAS_GT_FLOW != 0 {
        Some(r.vec3s(n, "gt flows")?)
    } else {
        None
    };
    let class_id = if flags & LIFC_HAS_CLASS != 0 {
        let b = r.take(n * 2, "class ids")?;
        Some(
            (0..n)
                .map(|i| u16::from_le_bytes([b[i * 2], b[i * 2 + 1]]))
                .collect(),
        )
    } else {
        None
    };
    let is_foreground = if flags & LIFC_HAS_FG != 0 {
        let b = r.take(n, "foreground flags")?;
        Some(b.iter().map(|&x| x != 0).collect())
    } else {
        None
    };
    let cloud = TimedPointCloud {
        frame_index,
        points,
        gt_flow,
        class_id,
        is_foreground,
    };
    cloud.validate()?;
    Ok(cloud)
}

pub fn save_cloud(path: impl AsRef<Path>, cloud: &TimedPointCloud) -> Result<()> {
    cloud.validate()?;
    let n = cloud.len();
    let mut flags = 0;
    if cloud.gt_flow.is_some() {
        flags |= LIFC_HAS_GT_FLOW;
    }
    if cloud.class_id.is_some() {
        flags |= LIFC_HAS_CLASS;
    }
    if cloud.is_foreground.is_some() {
        flags |= LIFC_HAS_FG;
    }
    let mut buf = Vec::with_capacity(20 + n * 12);
    buf.extend_from_slice(&LIFC_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&cloud.frame_index.to_le_bytes());
    buf.extend_from_slice(&flags.to_le_bytes());
    push_vec3s(&mut buf, &cloud.points);
    if let Some(flow) = &cloud.gt_flow {
        push_vec3s(&mut buf, flow);
    }
    if let Some(class) = &cloud.class_id {
        for c in class {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    if let Some(fg) = &cloud.is_foreground {
        buf.extend(fg.iter().map(|&b| b as u8));
    }
    write_file(path.as_ref(), &buf)
}

fn load_cloud_ascii(path: &Path) -> Result<TimedPointCloud> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg: msg.to_string(),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(&format!(
                "expected 3 fields, got {}",
                fields.len()
            )));
        }
        let mut coords = [0.0; 3];
        for (c, f) in coords.iter_mut().zip(&fields) {
            *c = f
                .parse::<f64>()
                .map_err(|_| parse_err(&format!("bad float {f:?}")))?;
        }
        points.push(Vec3::new(coords[0], coords[1], coords[2]));
    }
    let cloud = TimedPointCloud::new(0, points);
    cloud.validate()?;
    Ok(cloud)
}

pub fn save_cloud_ascii(path: impl AsRef<Path>, cloud: &TimedPointCloud) -> Result<()> {
    cloud.validate()?;
    let mut text = String::new();
    for p in &cloud.points {
        text.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    write_file(path.as_ref(), text.as_bytes())
}

/// Writes a flow field, optionally with per-point cluster labels.
pub fn save_flow(path: impl AsRef<Path>, flow: &FlowField, labels: Option<&[u32]>) -> Result<()> {
    let n = flow.len();
    if let Some(labels) = labels {
        if labels.len() != n {
            return Err(Error::LengthMismatch {
                what: "labels",
                expected: n,
                got: labels.len(),
            });
        }
    }
    let mut buf = Vec::with_capacity(16 + n * 12);
    buf.extend_from_slice(&LIFF_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    let flags = if labels.is_some() { LIFF_HAS_LABELS } else { 0 };
    buf.extend_from_slice(&flags.to_le_bytes());
    push_vec3s(&mut buf, &flow.vectors);
    if let Some(labels) = labels {
        for l in labels {
            buf.extend_from_slice(&l.to_le_bytes());
        }
    }
    write_file(path.as_ref(), &buf)
}

pub fn load_flow(path: impl AsRef<Path>) -> Result<(FlowField, Option<Vec<u32>>)> {
    let path: &Path = path.as_ref();
    let buf = read_file(path)?;
    let mut r = Reader {
        buf: &buf,
        pos: 0,
        path,
    };
    check_magic(&mut r, LIFF_MAGIC)?;
    let n = r.u32("vector count")? as usize;
    let flags = r.u32("flag mask")?;
    if flags & !LIFF_HAS_LABELS != 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("unknown flag bits {:#x}", flags & !LIFF_HAS_LABELS),
        });
    }
    let vectors = r.vec3s(n, "vectors")?;
    let labels = if flags & LIFF_HAS_LABELS != 0 {
        let b = r.take(n * 4, "labels")?;
        Some(
            (0..n)
                .map(|i| u32::from_le_bytes([b[i * 4], b[i * 4 + 1], b[i * 4 + 2], b[i * 4 + 3]]))
                .collect(),
        )
    } else {
        None
    };
    Ok((FlowField { vectors }, labels))
}

/// Guesses the cloud format from the file extension; `.lifc` is binary,
/// anything else is treated as ASCII.
pub fn format_for_path(path: &Path) -> CloudFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("lifc") => CloudFormat::Binary,
        _ => CloudFormat::AsciiXyz,
    }
}

#[allow(dead_code)]
fn path_buf(p: &Path) -> PathBuf {
    p.to_path_buf()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn sample_cloud() -> TimedPointCloud {
        let mut cloud = TimedPointCloud::new(
            7,
            vec![
                Vec3::new(1.5, -2.25, 0.5),
                Vec3::new(0.0, 3.0, 1.0),
                Vec3::new(-4.5, 0.125, 2.0),
            ],
        );
        cloud.gt_flow = Some(vec![
            Vec3::new(0.5, 0.0, 0.0),
            Vec3::new(0.0, -0.25, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ]);
        cloud.class_id = Some(vec![0, 2, 65535]);
        cloud.is_foreground = Some(vec![false, true, true]);
        cloud
    }

    #[test]
    fn cloud_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("frame.lifc");
        let cloud = sample_cloud();
        save_cloud(&path, &cloud).unwrap();
        let loaded = load_cloud(&path, CloudFormat::Binary).unwrap();
        assert_eq!(loaded, cloud);
    }

    #[test]
    fn cloud_without_attributes_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bare.lifc");
        let cloud = TimedPointCloud::new(0, vec![Vec3::new(0.5, 0.25, -1.0)]);
        save_cloud(&path, &cloud).unwrap();
        let loaded = load_cloud(&path, CloudFormat::Binary).unwrap();
        assert_eq!(loaded, cloud);
        assert!(loaded.gt_flow.is_none());
    }

    #[test]
    fn bad_magic_is_detected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.lifc");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(matches!(
            load_cloud(&path, CloudFormat::Binary),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn bad_version_is_detected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("v9.lifc");
        let mut buf = Vec::new();
        buf.extend_from_slice(b"LIFC");
        buf.extend_from_slice(&9u32.to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        std::fs::write(&path, &buf).unwrap();
        assert!(matches!(
            load_cloud(&path, CloudFormat::Binary),
            Err(Error::BadVersion { found: 9, .. })
        ));
    }

    #[test]
    fn truncation_is_detected_with_section() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trunc.lifc");
        let cloud = sample_cloud();
        save_cloud(&path, &cloud).unwrap();
        let full = std::fs::read(&path).unwrap();
        // Cut into the class-id block.
        std::fs::write(&path, &full[..full.len() - 8]).unwrap();
        match load_cloud(&path, CloudFormat::Binary) {
            Err(Error::Truncated { section, .. }) => assert_eq!(section, "class ids"),
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_cloud("/nonexistent/frame.lifc", CloudFormat::Binary),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn ascii_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cloud.xyz");
        let cloud = TimedPointCloud::new(
            0,
            vec![Vec3::new(1.0, 2.5, -3.0), Vec3::new(0.0, 0.0, 0.25)],
        );
        save_cloud_ascii(&path, &cloud).unwrap();
        let loaded = load_cloud(&path, CloudFormat::AsciiXyz).unwrap();
        assert_eq!(loaded.points, cloud.points);
    }

    #[test]
    fn ascii_reports_line_numbers() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.xyz");
        std::fs::write(&path, "0 0 0\n1 2\n").unwrap();
        match load_cloud(&path, CloudFormat::AsciiXyz) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn flow_round_trip_with_labels() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("flow.liff");
        let flow = FlowField {
            vectors: vec![Vec3::new(0.25, 0.0, -1.5), Vec3::new(0.0, 2.0, 0.0)],
        };
        save_flow(&path, &flow, Some(&[0, 1])).unwrap();
        let (loaded, labels) = load_flow(&path).unwrap();
        assert_eq!(loaded, flow);
        assert_eq!(labels, Some(vec![0, 1]));
    }

    #[test]
    fn flow_label_length_mismatch_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("flow.liff");
        let flow = FlowField::zeros(3);
        assert!(matches!(
            save_flow(&path, &flow, Some(&[0, 1])),
            Err(Error::LengthMismatch { .. })
        ));
    }

    fn f32_coord() -> impl Strategy<Value = f64> {
        (-1000i32..1000).prop_map(|q| (q as f32 / 8.0) as f64)
    }

    proptest! {
        #[test]
        fn save_load_identity_on_f32_clouds(
            coords in proptest::collection::vec((f32_coord(), f32_coord(), f32_coord()), 0..50),
            with_flow in any::<bool>(),
            with_class in any::<bool>(),
            with_fg in any::<bool>(),
            frame in any::<u32>(),
        ) {
            let n = coords.len();
            let mut cloud = TimedPointCloud::new(
                frame,
                coords.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect(),
            );
            if with_flow {
                cloud.gt_flow = Some(coords.iter().map(|&(x, y, z)| Vec3::new(z, x, y)).collect());
            }
            if with_class {
                cloud.class_id = Some((0..n as u16).collect());
            }
            if with_fg {
                cloud.is_foreground = Some((0..n).map(|i| i % 2 == 0).collect());
            }
            let dir = tempdir().unwrap();
            let path = dir.path().join("prop.lifc");
            save_cloud(&path, &cloud).unwrap();
            let loaded = load_cloud(&path, CloudFormat::Binary).unwrap();
            prop_assert_eq!(loaded, cloud);
        }
    }
}
