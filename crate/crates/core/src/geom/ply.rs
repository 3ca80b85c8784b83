//! PLY point-cloud reader (ASCII and binary little-endian) and ASCII writer.
//!
//! Only the `vertex` element is kept; `x y z` are required, `red green blue`
//! and `nx ny nz` are picked up when present. Other elements are skipped.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Point3, PointCloud, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
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
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn width(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le<R: Read>(self, r: &mut R) -> std::io::Result<f64> {
        let mut b = [0u8; 8];
        let w = self.width();
        r.read_exact(&mut b[..w])?;
        Ok(match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b),
        })
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug, PartialEq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

fn bad(message: impl Into<String>) -> Error {
    Error::Format {
        what: "PLY",
        message: message.into(),
    }
}

fn read_header<R: BufRead>(r: &mut R) -> Result<(Encoding, Vec<Element>)> {
    let mut line = String::new();
    let mut next = |line: &mut String| -> Result<()> {
        line.clear();
        match r.read_line(line) {
            Ok(0) => Err(bad("unexpected end of header")),
            Ok(_) => Ok(()),
            Err(e) => Err(bad(e.to_string())),
        }
    };
    next(&mut line)?;
    if line.trim() != "ply" {
        return Err(bad("missing 'ply' magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next(&mut line)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => encoding = Some(Encoding::Ascii),
            ["format", "binary_little_endian", _] => encoding = Some(Encoding::BinaryLe),
            ["format", other, ..] => return Err(bad(format!("unsupported format {other}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad(format!("bad element count {count}")))?,
                props: Vec::new(),
            }),
            ["property", "list", count, item, _name] => {
                let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                el.props.push(Property::List {
                    count: Scalar::parse(count).ok_or_else(|| bad(format!("bad type {count}")))?,
                    item: Scalar::parse(item).ok_or_else(|| bad(format!("bad type {item}")))?,
                });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                el.props.push(Property::Scalar {
                    name: name.to_string(),
                    ty: Scalar::parse(ty).ok_or_else(|| bad(format!("bad type {ty}")))?,
                });
            }
            _ => return Err(bad(format!("unrecognized header line '{}'", line.trim()))),
        }
    }
    Ok((encoding.ok_or_else(|| bad("missing format line"))?, elements))
}

/// Reads one element's records as flat scalar rows (list properties dropped).
fn read_rows<R: BufRead>(r: &mut R, enc: &Encoding, el: &Element) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::with_capacity(el.count);
    match enc {
        Encoding::Ascii => {
            let mut line = String::new();
            for i in 0..el.count {
                line.clear();
                if r.read_line(&mut line).map_err(|e| bad(e.to_string()))? == 0 {
                    return Err(bad(format!("{} record {i} missing", el.name)));
                }
                let mut toks = line.split_whitespace();
                let mut next = || -> Result<f64> {
                    toks.next()
                        .ok_or_else(|| bad(format!("{} record {i} too short", el.name)))?
                        .parse::<f64>()
                        .map_err(|_| bad(format!("{} record {i} has a non-numeric value", el.name)))
                };
                let mut row = Vec::new();
                for p in &el.props {
                    match p {
                        Property::Scalar { .. } => row.push(next()?),
                        Property::List { .. } => {
                            let n = next()? as usize;
                            for _ in 0..n {
                                next()?;
                            }
                        }
                    }
                }
                rows.push(row);
            }
        }
        Encoding::BinaryLe => {
            for i in 0..el.count {
                let mut row = Vec::new();
                for p in &el.props {
                    let err = |e: std::io::Error| bad(format!("{} record {i}: {e}", el.name));
                    match p {
                        Property::Scalar { ty, .. } => row.push(ty.read_le(r).map_err(err)?),
                        Property::List { count, item } => {
                            let n = count.read_le(r).map_err(err)? as usize;
                            for _ in 0..n {
                                item.read_le(r).map_err(err)?;
                            }
                        }
                    }
                }
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

pub fn read<R: BufRead>(mut r: R) -> Result<PointCloud> {
    let (enc, elements) = read_header(&mut r)?;
    for el in &elements {
        let rows = read_rows(&mut r, &enc, el)?;
        if el.name != "vertex" {
            continue;
        }
        let scalars: Vec<(&str, Scalar)> = el
            .props
            .iter()
            .filter_map(|p| match p {
                Property::Scalar { name, ty } => Some((name.as_str(), *ty)),
                Property::List { .. } => None,
            })
            .collect();
        let col = |name: &str| scalars.iter().position(|(n, _)| *n == name);
        let (Some(x), Some(y), Some(z)) = (col("x"), col("y"), col("z")) else {
            return Err(bad("vertex element lacks x/y/z"));
        };
        let rgb = match (col("red"), col("green"), col("blue")) {
            (Some(r), Some(g), Some(b)) => Some([r, g, b]),
            _ => None,
        };
        let nrm = match (col("nx"), col("ny"), col("nz")) {
            (Some(a), Some(b), Some(c)) => Some([a, b, c]),
            _ => None,
        };
        let points = rows.iter().map(|r| Point3::new(r[x], r[y], r[z])).collect();
        let colors = rgb.map(|idx| {
            let integral = !matches!(scalars[idx[0]].1, Scalar::F32 | Scalar::F64);
            rows.iter()
                .map(|r| {
                    let v = Vec3::new(r[idx[0]], r[idx[1]], r[idx[2]]);
                    let v = if integral { v / 255.0 } else { v };
                    v.map(|c| c.clamp(0.0, 1.0))
                })
                .collect()
        });
        let normals = nrm.map(|idx| {
            rows.iter()
                .map(|r| {
                    let v = Vec3::new(r[idx[0]], r[idx[1]], r[idx[2]]);
                    let l = v.norm();
                    if l > 1e-12 {
                        v / l
                    } else {
                        Vec3::zeros()
                    }
                })
                .collect()
        });
        return PointCloud::new(points, colors, normals).map_err(|e| bad(e.to_string()));
    }
    Err(bad("no vertex element"))
}

pub fn read_file(path: &Path) -> Result<PointCloud> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read(BufReader::new(f))
}

pub fn write<W: Write>(w: &mut W, pc: &PointCloud) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", pc.len())?;
    for a in ["x", "y", "z"] {
        writeln!(w, "property float {a}")?;
    }
    if pc.colors().is_some() {
        for a in ["red", "green", "blue"] {
            writeln!(w, "property uchar {a}")?;
        }
    }
    if pc.normals().is_some() {
        for a in ["nx", "ny", "nz"] {
            writeln!(w, "property float {a}")?;
        }
    }
    writeln!(w, "end_header")?;
    for i in 0..pc.len() {
        let p = pc.points()[i];
        write!(w, "{} {} {}", p.x as f32, p.y as f32, p.z as f32)?;
        if let Some(c) = pc.colors() {
            let q = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
            write!(w, " {} {} {}", q(c[i].x), q(c[i].y), q(c[i].z))?;
        }
        if let Some(n) = pc.normals() {
            write!(w, " {} {} {}", n[i].x as f32, n[i].y as f32, n[i].z as f32)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_file(path: &Path, pc: &PointCloud) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write(&mut w, pc)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
