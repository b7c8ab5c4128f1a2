use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::geom::{TriMesh, Vec3};
use crate::{Error, Real, Result};

/// Writes positions, `vc r g b` colour lines and 1-based faces.
pub fn write_obj<T: Real>(path: &Path, mesh: &TriMesh<T>) -> Result<()> {
    let mut s = String::new();
    for (p, c) in mesh.vertices.iter().zip(&mesh.colors) {
        let _ = writeln!(s, "v {} {} {}", p.x.f64(), p.y.f64(), p.z.f64());
        let _ = writeln!(s, "vc {} {} {}", c.x.f64(), c.y.f64(), c.z.f64());
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads `v`, `vc` and `f` records. Colours may also trail the `v` line.
/// Polygons are fan-triangulated; texture and normal indices are ignored.
pub fn read_obj<T: Real>(path: &Path) -> Result<TriMesh<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::parse(path, format!("line {}: {m}", ln + 1));
        let mut it = line.split_whitespace();
        let nums = |it: std::str::SplitWhitespace| -> Result<Vec<f64>> {
            it.map(|t| t.parse::<f64>().map_err(|_| bad(&format!("bad number {t:?}")))).collect()
        };
        match it.next() {
            Some("v") => {
                let v = nums(it)?;
                match v.len() {
                    3 => vertices.push(Vec3::from_f64([v[0], v[1], v[2]])),
                    6 => {
                        vertices.push(Vec3::from_f64([v[0], v[1], v[2]]));
                        colors.push(Vec3::from_f64([v[3], v[4], v[5]]));
                    }
                    _ => return Err(bad("vertex needs 3 or 6 numbers")),
                }
            }
            Some("vc") => {
                let c = nums(it)?;
                if c.len() != 3 {
                    return Err(bad("colour needs 3 numbers"));
                }
                colors.push(Vec3::from_f64([c[0], c[1], c[2]]));
            }
            Some("f") => {
                let idx = it
                    .map(|t| {
                        let i: i64 =
                            t.split('/').next().unwrap_or("").parse().map_err(|_| bad(&format!("bad index {t:?}")))?;
                        let n = vertices.len() as i64;
                        let i = if i < 0 { n + i } else { i - 1 };
                        if i < 0 {
                            return Err(bad("index out of range"));
                        }
                        Ok(i as usize)
                    })
                    .collect::<Result<Vec<_>>>()?;
                if idx.len() < 3 {
                    return Err(bad("face needs at least 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let colors = if colors.is_empty() {
        None
    } else if colors.len() == vertices.len() {
        Some(colors)
    } else {
        return Err(Error::parse(path, format!("{} colours for {} vertices", colors.len(), vertices.len())));
    };
    TriMesh::new(vertices, faces, colors)
}

/// Binary little-endian PLY with double positions and byte colours.
pub fn write_ply<T: Real>(path: &Path, mesh: &TriMesh<T>) -> Result<()> {
    let mut out = Vec::with_capacity(256 + mesh.num_vertices() * 27 + mesh.faces.len() * 13);
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.num_vertices(),
        mesh.faces.len()
    )
    .expect("writing to a Vec");
    for (p, c) in mesh.vertices.iter().zip(&mesh.colors) {
        for v in p.to_f64() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in c.to_f64() {
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    for f in &mesh.faces {
        out.push(3);
        for &i in f {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Self::F32 | Self::F64)
    }
}

enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Reads binary little-endian PLY with `x y z`, optional `red green blue`
/// (bytes are scaled from 0–255, floats taken as is) and polygon faces.
pub fn read_ply<T: Real>(path: &Path) -> Result<TriMesh<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: String| Error::parse(path, m);
    let mut reader = &bytes[..];
    let mut elements: Vec<Element> = Vec::new();
    let mut line = String::new();
    let mut first = true;
    loop {
        line.clear();
        let n = BufRead::read_line(&mut reader, &mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(bad("missing end_header".into()));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if first {
            if toks != ["ply"] {
                return Err(bad("not a PLY file".into()));
            }
            first = false;
            continue;
        }
        match toks.as_slice() {
            ["format", "binary_little_endian", _] => {}
            ["format", f, _] => return Err(bad(format!("unsupported PLY format {f}"))),
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad(format!("bad element count {count}")))?,
                props: vec![],
            }),
            ["property", "list", c, i, name] => {
                let (c, i) = (Scalar::parse(c), Scalar::parse(i));
                let el = elements.last_mut().ok_or_else(|| bad("property before element".into()))?;
                match (c, i) {
                    (Some(c), Some(i)) if c.is_integer() && i.is_integer() => {
                        el.props.push(Property::List(name.to_string(), c, i))
                    }
                    _ => return Err(bad(format!("bad list property {name}"))),
                }
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| bad(format!("unknown type {ty}")))?;
                let el = elements.last_mut().ok_or_else(|| bad("property before element".into()))?;
                el.props.push(Property::Scalar(name.to_string(), ty));
            }
            ["end_header"] => break,
            _ => return Err(bad(format!("unexpected header line {:?}", line.trim()))),
        }
    }

    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut faces = Vec::new();
    let mut data = reader;
    let mut take = |n: usize| -> Result<&[u8]> {
        if data.len() < n {
            return Err(Error::parse(path, "truncated PLY body"));
        }
        let (a, b) = data.split_at(n);
        data = b;
        Ok(a)
    };
    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [0.0; 3];
            let mut rgb = [None; 3];
            let mut face = None;
            for p in &el.props {
                match p {
                    Property::Scalar(name, ty) => {
                        let v = ty.read(take(ty.size())?);
                        let ch = if ty.is_integer() { v / 255.0 } else { v };
                        match name.as_str() {
                            "x" => xyz[0] = v,
                            "y" => xyz[1] = v,
                            "z" => xyz[2] = v,
                            "red" | "r" => rgb[0] = Some(ch),
                            "green" | "g" => rgb[1] = Some(ch),
                            "blue" | "b" => rgb[2] = Some(ch),
                            _ => {}
                        }
                    }
                    Property::List(name, count_ty, item_ty) => {
                        let n = count_ty.read(take(count_ty.size())?) as usize;
                        let items: Vec<f64> =
                            (0..n).map(|_| take(item_ty.size()).map(|b| item_ty.read(b))).collect::<Result<_>>()?;
                        if name == "vertex_indices" || name == "vertex_index" {
                            face = Some(items);
                        }
                    }
                }
            }
            match el.name.as_str() {
                "vertex" => {
                    vertices.push(Vec3::from_f64(xyz));
                    if let [Some(r), Some(g), Some(b)] = rgb {
                        colors.push(Vec3::from_f64([r, g, b]));
                    }
                }
                "face" => {
                    let idx = face.ok_or_else(|| bad("face element without vertex_indices".into()))?;
                    if idx.len() < 3 || idx.iter().any(|&i| i < 0.0) {
                        return Err(bad("invalid face".into()));
                    }
                    for k in 1..idx.len() - 1 {
                        faces.push([idx[0] as usize, idx[k] as usize, idx[k + 1] as usize]);
                    }
                }
                _ => {}
            }
        }
    }
    let colors = (colors.len() == vertices.len() && !colors.is_empty()).then_some(colors);
    TriMesh::new(vertices, faces, colors)
}

/// Dispatches on the file extension (`.obj` or `.ply`).
pub fn read_mesh<T: Real>(path: &Path) -> Result<TriMesh<T>> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("obj") => read_obj(path),
        Some("ply") => read_ply(path),
        _ => Err(Error::parse(path, "expected a .obj or .ply mesh")),
    }
}

pub fn write_mesh<T: Real>(path: &Path, mesh: &TriMesh<T>) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("obj") => write_obj(path, mesh),
        Some("ply") => write_ply(path, mesh),
        _ => Err(Error::parse(path, "expected a .obj or .ply mesh")),
    }
}
