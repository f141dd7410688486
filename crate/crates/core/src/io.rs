//! Field files: a binary container (magic "GFRG1", n, m, N, group tag, kind
//! tag, then little-endian (re, im) f64 pairs per matrix entry, node-major)
//! with a JSON sidecar carrying the same metadata. Partial gauges append a
//! mask block; scalar fields are stored as 1x1 matrices.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ConnectionField, CurvatureField, GaugeField, Grid};
use crate::gaugebuild::PartialGauge;
use crate::geometry::SingularSetModel;
use crate::lie::Group;
use crate::mat::Mat;

pub const MAGIC: &[u8; 5] = b"GFRG1";
const MASK_MAGIC: &[u8; 4] = b"MASK";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Connection,
    Curvature,
    Gauge,
    PartialGauge,
    Scalar,
}

impl FieldKind {
    fn tag(self) -> u8 {
        match self {
            FieldKind::Connection => 1,
            FieldKind::Curvature => 2,
            FieldKind::Gauge => 3,
            FieldKind::PartialGauge => 4,
            FieldKind::Scalar => 5,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        Some(match t {
            1 => FieldKind::Connection,
            2 => FieldKind::Curvature,
            3 => FieldKind::Gauge,
            4 => FieldKind::PartialGauge,
            5 => FieldKind::Scalar,
            _ => return None,
        })
    }

    fn components(self, grid: &Grid) -> usize {
        match self {
            FieldKind::Connection => grid.n,
            FieldKind::Curvature => grid.npairs(),
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub n: usize,
    pub m: usize,
    pub matrix_size: usize,
    pub group: Group,
    pub kind: FieldKind,
    pub components: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singular: Option<SingularSetModel>,
}

/// Decoded container contents.
#[derive(Clone, Debug)]
pub struct FieldFile {
    pub grid: Grid,
    pub group: Group,
    pub kind: FieldKind,
    pub data: Vec<Mat>,
    pub mask: Option<(u32, Vec<bool>)>,
}

impl FieldFile {
    pub fn encode(&self) -> Vec<u8> {
        let d = if self.kind == FieldKind::Scalar { 1 } else { self.group.dim() };
        let mut out = Vec::with_capacity(32 + self.data.len() * d * d * 16);
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(self.grid.n as u32).unwrap();
        out.write_u32::<LittleEndian>(self.grid.m as u32).unwrap();
        out.write_u32::<LittleEndian>(d as u32).unwrap();
        out.write_u8(self.group.tag()).unwrap();
        out.write_u8(self.kind.tag()).unwrap();
        for m in &self.data {
            for i in 0..d {
                for j in 0..d {
                    let z = m.get(i, j);
                    out.write_f64::<LittleEndian>(z.re).unwrap();
                    out.write_f64::<LittleEndian>(z.im).unwrap();
                }
            }
        }
        if let Some((level, mask)) = &self.mask {
            out.extend_from_slice(MASK_MAGIC);
            out.write_u32::<LittleEndian>(*level).unwrap();
            out.extend(mask.iter().map(|&b| b as u8));
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |what: &str| Error::Decode(what.to_string());
        let mut c = Cursor::new(bytes);
        let mut magic = [0u8; 5];
        c.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u32_field = |name: &str| c.read_u32::<LittleEndian>().map_err(|_| bad(&format!("truncated header ({name})")));
        let n = u32_field("n")? as usize;
        let m = u32_field("m")? as usize;
        let d = u32_field("matrix size")? as usize;
        let grid = Grid::new(n, m).map_err(|_| bad(&format!("invalid grid n={n} m={m}")))?;
        let gt = c.read_u8().map_err(|_| bad("truncated header (group)"))?;
        let group = Group::from_tag(gt).ok_or_else(|| bad(&format!("unknown group tag {gt}")))?;
        let kt = c.read_u8().map_err(|_| bad("truncated header (kind)"))?;
        let kind = FieldKind::from_tag(kt).ok_or_else(|| bad(&format!("unknown field kind tag {kt}")))?;
        let expect_d = if kind == FieldKind::Scalar { 1 } else { group.dim() };
        if d != expect_d {
            return Err(bad(&format!("matrix size {d} does not match group")));
        }
        let count = grid.len() * kind.components(&grid);
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            let mut mat = Mat::zeros(d);
            for i in 0..d {
                for j in 0..d {
                    let re = c.read_f64::<LittleEndian>().map_err(|_| bad("truncated node data"))?;
                    let im = c.read_f64::<LittleEndian>().map_err(|_| bad("truncated node data"))?;
                    if !re.is_finite() || !im.is_finite() {
                        return Err(bad("non-finite node data"));
                    }
                    mat.set(i, j, C64::new(re, im));
                }
            }
            data.push(mat);
        }
        let mut mask = None;
        let pos = c.position() as usize;
        if kind == FieldKind::PartialGauge {
            let mut mm = [0u8; 4];
            c.read_exact(&mut mm).map_err(|_| bad("missing mask block"))?;
            if &mm != MASK_MAGIC {
                return Err(bad("bad mask block magic"));
            }
            let level = c.read_u32::<LittleEndian>().map_err(|_| bad("truncated mask block"))?;
            let mut raw = vec![0u8; grid.len()];
            c.read_exact(&mut raw).map_err(|_| bad("truncated mask block"))?;
            if raw.iter().any(|&b| b > 1) {
                return Err(bad("mask bytes must be 0 or 1"));
            }
            mask = Some((level, raw.into_iter().map(|b| b == 1).collect()));
        } else if pos != bytes.len() {
            return Err(bad("trailing bytes after node data"));
        }
        if (c.position() as usize) != bytes.len() {
            return Err(bad("trailing bytes after mask block"));
        }
        Ok(FieldFile { grid, group, kind, data, mask })
    }

    fn sidecar(&self, singular: Option<&SingularSetModel>) -> Sidecar {
        Sidecar {
            format: "GFRG1".into(),
            n: self.grid.n,
            m: self.grid.m,
            matrix_size: if self.kind == FieldKind::Scalar { 1 } else { self.group.dim() },
            group: self.group,
            kind: self.kind,
            components: self.kind.components(&self.grid),
            level: self.mask.as_ref().map(|m| m.0),
            singular: singular.cloned(),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_file(path: &Path, file: &FieldFile, singular: Option<&SingularSetModel>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::File::create(path)?.write_all(&file.encode())?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&file.sidecar(singular))?)?;
    Ok(())
}

/// Reads a container and checks it against its sidecar when one exists.
pub fn read_file(path: &Path) -> Result<(FieldFile, Option<Sidecar>)> {
    let bytes = fs::read(path)?;
    let file = FieldFile::decode(&bytes).map_err(|e| match e {
        Error::Decode(s) => Error::Decode(format!("{}: {s}", path.display())),
        other => other,
    })?;
    let sc = sidecar_path(path);
    let side = if sc.exists() {
        let s: Sidecar = serde_json::from_str(&fs::read_to_string(&sc)?)
            .map_err(|e| Error::Decode(format!("{}: sidecar: {e}", sc.display())))?;
        let expect = file.sidecar(s.singular.as_ref());
        if s != expect {
            return Err(Error::Decode(format!("{}: sidecar metadata disagrees with header", sc.display())));
        }
        Some(s)
    } else {
        None
    };
    Ok((file, side))
}

fn expect_kind(f: &FieldFile, kind: FieldKind, path: &Path) -> Result<()> {
    if f.kind != kind {
        return Err(Error::Decode(format!("{}: expected {kind:?}, found {:?}", path.display(), f.kind)));
    }
    Ok(())
}

pub fn write_connection(path: &Path, a: &ConnectionField) -> Result<()> {
    let f = FieldFile { grid: a.grid, group: a.group, kind: FieldKind::Connection, data: a.data.clone(), mask: None };
    write_file(path, &f, a.singular.as_deref())
}

pub fn read_connection(path: &Path) -> Result<ConnectionField> {
    let (f, side) = read_file(path)?;
    expect_kind(&f, FieldKind::Connection, path)?;
    Ok(ConnectionField {
        grid: f.grid,
        group: f.group,
        data: f.data,
        sampler: None,
        singular: side.and_then(|s| s.singular).map(Arc::new),
    })
}

pub fn write_curvature(path: &Path, c: &CurvatureField) -> Result<()> {
    let f = FieldFile { grid: c.grid, group: c.group, kind: FieldKind::Curvature, data: c.data.clone(), mask: None };
    write_file(path, &f, None)
}

pub fn read_curvature(path: &Path) -> Result<CurvatureField> {
    let (f, _) = read_file(path)?;
    expect_kind(&f, FieldKind::Curvature, path)?;
    Ok(CurvatureField { grid: f.grid, group: f.group, data: f.data })
}

pub fn write_gauge(path: &Path, g: &GaugeField) -> Result<()> {
    let f = FieldFile { grid: g.grid, group: g.group, kind: FieldKind::Gauge, data: g.data.clone(), mask: None };
    write_file(path, &f, None)
}

pub fn read_gauge(path: &Path) -> Result<GaugeField> {
    let (f, _) = read_file(path)?;
    expect_kind(&f, FieldKind::Gauge, path)?;
    Ok(GaugeField { grid: f.grid, group: f.group, data: f.data })
}

/// Values off the mask are written as the identity; clustering statistics
/// and drop lists are not part of the container.
pub fn write_partial_gauge(path: &Path, g: &PartialGauge) -> Result<()> {
    let f = FieldFile {
        grid: g.grid,
        group: g.group,
        kind: FieldKind::PartialGauge,
        data: g.values.clone(),
        mask: Some((g.level, g.mask.clone())),
    };
    write_file(path, &f, None)
}

pub fn read_partial_gauge(path: &Path) -> Result<PartialGauge> {
    let (f, _) = read_file(path)?;
    expect_kind(&f, FieldKind::PartialGauge, path)?;
    let (level, mask) = f.mask.ok_or_else(|| Error::Decode(format!("{}: missing mask block", path.display())))?;
    let n = f.grid.len();
    Ok(PartialGauge { grid: f.grid, group: f.group, level, mask, values: f.data, clustering: vec![0.0; n], dropped: vec![] })
}

pub fn write_scalar(path: &Path, grid: Grid, group: Group, v: &[f64]) -> Result<()> {
    let data = v.iter().map(|&x| Mat::scalar(1, C64::new(x, 0.0))).collect();
    write_file(path, &FieldFile { grid, group, kind: FieldKind::Scalar, data, mask: None }, None)
}

pub fn read_scalar(path: &Path) -> Result<(Grid, Vec<f64>)> {
    let (f, _) = read_file(path)?;
    expect_kind(&f, FieldKind::Scalar, path)?;
    Ok((f.grid, f.data.iter().map(|m| m.get(0, 0).re).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GeneratorKind, GeneratorSpec};

    #[test]
    fn connection_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(4, 5).unwrap();
        let spec = GeneratorSpec { kind: GeneratorKind::SingularModel, ..Default::default() };
        let a = generate(&spec, g, Group::SU2, 3).unwrap().field;
        let p = dir.path().join("a.gfrg");
        write_connection(&p, &a).unwrap();
        let b = read_connection(&p).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.singular.as_deref(), b.singular.as_deref());
    }

    #[test]
    fn partial_gauge_keeps_mask() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(2, 5).unwrap();
        let mut mask = vec![true; g.len()];
        mask[3] = false;
        let pg = PartialGauge {
            grid: g,
            group: Group::U1,
            level: 2,
            mask,
            values: (0..g.len()).map(|i| Mat::scalar(1, C64::from_polar(1.0, i as f64))).collect(),
            clustering: vec![0.0; g.len()],
            dropped: vec![],
        };
        let p = dir.path().join("s.gfrg");
        write_partial_gauge(&p, &pg).unwrap();
        let q = read_partial_gauge(&p).unwrap();
        assert_eq!((q.level, &q.mask, &q.values), (2, &pg.mask, &pg.values));
    }

    #[test]
    fn corruption_is_named() {
        let g = Grid::new(2, 5).unwrap();
        let f = FieldFile { grid: g, group: Group::SU2, kind: FieldKind::Gauge, data: vec![Mat::identity(2); g.len()], mask: None };
        let mut bytes = f.encode();
        assert!(FieldFile::decode(&bytes).is_ok());
        bytes.truncate(bytes.len() - 3);
        let e = FieldFile::decode(&bytes).unwrap_err().to_string();
        assert!(e.contains("truncated node data"), "{e}");
        let mut b2 = f.encode();
        b2[0] = b'X';
        assert!(FieldFile::decode(&b2).unwrap_err().to_string().contains("bad magic"));
    }
}
