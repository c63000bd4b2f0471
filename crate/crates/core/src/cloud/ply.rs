//! PLY reader/writer for `vertex` elements with `x,y,z` and `red,green,blue`.
//!
//! ASCII and binary little-endian bodies are supported. Voxel depth is
//! carried in a `comment bit_depth N` header line; without it the smallest
//! depth that contains every coordinate is used.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use thiserror::Error;

use super::{CloudError, PointCloud, Position, Rgb};

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed PLY header (line {line}): {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("unsupported PLY format `{0}`")]
    UnsupportedFormat(String),
    #[error("PLY file has no `vertex` element")]
    MissingVertexElement,
    #[error("vertex element lacks property `{0}`")]
    MissingProperty(&'static str),
    #[error("property `{name}` has type `{found}`, expected {expected}")]
    PropertyType {
        name: String,
        found: String,
        expected: &'static str,
    },
    #[error("PLY body truncated in element `{element}` at record {record}")]
    TruncatedBody { element: String, record: usize },
    #[error("invalid value `{token}` in element `{element}` record {record}")]
    InvalidValue {
        element: String,
        record: usize,
        token: String,
    },
    #[error("vertex {index}: coordinate {value} is not representable as a voxel index")]
    InvalidCoordinate { index: usize, value: f64 },
    #[error(transparent)]
    Cloud(#[from] CloudError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyFormat {
    #[default]
    Ascii,
    BinaryLittleEndian,
}

impl PlyFormat {
    fn header_name(self) -> &'static str {
        match self {
            PlyFormat::Ascii => "ascii",
            PlyFormat::BinaryLittleEndian => "binary_little_endian",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
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

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn parse_token(self, tok: &str) -> Option<f64> {
        if self.is_float() {
            tok.parse::<f64>().ok()
        } else {
            let v = tok.parse::<i64>().ok()?;
            let (lo, hi) = match self {
                Scalar::I8 => (i8::MIN as i64, i8::MAX as i64),
                Scalar::U8 => (0, u8::MAX as i64),
                Scalar::I16 => (i16::MIN as i64, i16::MAX as i64),
                Scalar::U16 => (0, u16::MAX as i64),
                Scalar::I32 => (i32::MIN as i64, i32::MAX as i64),
                _ => (0, u32::MAX as i64),
            };
            (lo..=hi).contains(&v).then_some(v as f64)
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar { name, .. } | Property::List { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug)]
struct Header {
    format: PlyFormat,
    bit_depth: Option<u8>,
    elements: Vec<Element>,
}

fn malformed(line: usize, reason: impl Into<String>) -> PlyError {
    PlyError::MalformedHeader {
        line,
        reason: reason.into(),
    }
}

fn read_header<R: BufRead>(r: &mut R) -> Result<Header, PlyError> {
    let mut line = String::new();
    let mut lineno = 0;
    let mut next_line = |r: &mut R, line: &mut String| -> Result<bool, PlyError> {
        line.clear();
        lineno += 1;
        Ok(r.read_line(line)? > 0)
    };

    if !next_line(r, &mut line)? || line.trim_end() != "ply" {
        return Err(malformed(1, "missing `ply` magic"));
    }
    let mut format = None;
    let mut bit_depth = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut n = 1;
    loop {
        if !next_line(r, &mut line)? {
            return Err(malformed(n, "header ended before `end_header`"));
        }
        n += 1;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("end_header") => break,
            Some("format") => {
                let kind = toks.next().ok_or_else(|| malformed(n, "format line is empty"))?;
                format = Some(match kind {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(PlyError::UnsupportedFormat(other.to_string())),
                });
                if toks.next() != Some("1.0") {
                    return Err(malformed(n, "expected format version 1.0"));
                }
            }
            Some("comment") => {
                if toks.next() == Some("bit_depth") {
                    let d = toks
                        .next()
                        .and_then(|t| t.parse::<u8>().ok())
                        .ok_or_else(|| malformed(n, "bad bit_depth comment"))?;
                    bit_depth = Some(d);
                }
            }
            Some("obj_info") | None => {}
            Some("element") => {
                let name = toks.next().ok_or_else(|| malformed(n, "element without name"))?;
                let count = toks
                    .next()
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| malformed(n, "element without a valid count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| malformed(n, "property before any element"))?;
                let ty = toks.next().ok_or_else(|| malformed(n, "property without type"))?;
                let prop = if ty == "list" {
                    let count = toks.next().and_then(Scalar::parse);
                    let item = toks.next().and_then(Scalar::parse);
                    let name = toks.next();
                    match (count, item, name) {
                        (Some(count), Some(item), Some(name)) if !count.is_float() => Property::List {
                            name: name.to_string(),
                            count,
                            item,
                        },
                        _ => return Err(malformed(n, "bad list property")),
                    }
                } else {
                    let ty = Scalar::parse(ty).ok_or_else(|| malformed(n, format!("unknown type `{ty}`")))?;
                    let name = toks.next().ok_or_else(|| malformed(n, "property without name"))?;
                    Property::Scalar {
                        name: name.to_string(),
                        ty,
                    }
                };
                el.props.push(prop);
            }
            Some(other) => return Err(malformed(n, format!("unexpected keyword `{other}`"))),
        }
    }
    let format = format.ok_or_else(|| malformed(n, "missing format line"))?;
    Ok(Header {
        format,
        bit_depth,
        elements,
    })
}

/// Column indices of the properties we extract from the vertex element.
struct VertexLayout {
    coords: [usize; 3],
    colors: [usize; 3],
}

impl VertexLayout {
    fn resolve(el: &Element) -> Result<Self, PlyError> {
        let find = |name: &'static str| {
            el.props
                .iter()
                .position(|p| p.name() == name)
                .ok_or(PlyError::MissingProperty(name))
        };
        let coords = [find("x")?, find("y")?, find("z")?];
        let colors = [find("red")?, find("green")?, find("blue")?];
        for &i in &coords {
            if let Property::List { name, .. } = &el.props[i] {
                return Err(PlyError::PropertyType {
                    name: name.clone(),
                    found: "list".into(),
                    expected: "a scalar",
                });
            }
        }
        for &i in &colors {
            match &el.props[i] {
                Property::Scalar { ty: Scalar::U8, .. } => {}
                Property::Scalar { name, ty } => {
                    return Err(PlyError::PropertyType {
                        name: name.clone(),
                        found: format!("{ty:?}").to_lowercase(),
                        expected: "uchar",
                    })
                }
                Property::List { name, .. } => {
                    return Err(PlyError::PropertyType {
                        name: name.clone(),
                        found: "list".into(),
                        expected: "uchar",
                    })
                }
            }
        }
        let used = [coords, colors].concat();
        for (i, p) in el.props.iter().enumerate() {
            if !used.contains(&i) {
                warn!("skipping unknown vertex property `{}`", p.name());
            }
        }
        Ok(VertexLayout { coords, colors })
    }
}

fn to_voxel(value: f64, index: usize) -> Result<u32, PlyError> {
    let rounded = value.round_ties_even();
    if !rounded.is_finite() || rounded < 0.0 || rounded > u32::MAX as f64 {
        return Err(PlyError::InvalidCoordinate { index, value });
    }
    Ok(rounded as u32)
}

/// Pulls scalar values out of a PLY body, one record at a time.
trait RecordSource {
    fn next_value(&mut self, ty: Scalar) -> Result<Option<f64>, PlyError>;
}

struct AsciiSource<'a> {
    tokens: std::str::SplitAsciiWhitespace<'a>,
    element: String,
    record: usize,
}

impl RecordSource for AsciiSource<'_> {
    fn next_value(&mut self, ty: Scalar) -> Result<Option<f64>, PlyError> {
        match self.tokens.next() {
            None => Ok(None),
            Some(tok) => ty.parse_token(tok).map(Some).ok_or_else(|| PlyError::InvalidValue {
                element: self.element.clone(),
                record: self.record,
                token: tok.to_string(),
            }),
        }
    }
}

struct BinarySource<R> {
    reader: R,
    buf: [u8; 8],
}

impl<R: Read> RecordSource for BinarySource<R> {
    fn next_value(&mut self, ty: Scalar) -> Result<Option<f64>, PlyError> {
        let n = ty.size();
        match self.reader.read_exact(&mut self.buf[..n]) {
            Ok(()) => Ok(Some(ty.decode_le(&self.buf[..n]))),
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

fn read_body<S: RecordSource>(
    src: &mut S,
    header: &Header,
    mut on_record: impl FnMut(&mut S, &str, usize),
) -> Result<(Vec<Position>, Vec<Rgb>), PlyError> {
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or(PlyError::MissingVertexElement)?;
    let layout = VertexLayout::resolve(&header.elements[vertex_pos])?;

    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut values = Vec::new();
    for (ei, el) in header.elements.iter().enumerate().take(vertex_pos + 1) {
        let is_vertex = ei == vertex_pos;
        if is_vertex {
            positions.reserve_exact(el.count);
            colors.reserve_exact(el.count);
        }
        for record in 0..el.count {
            on_record(src, &el.name, record);
            let truncated = || PlyError::TruncatedBody {
                element: el.name.clone(),
                record,
            };
            values.clear();
            for prop in &el.props {
                match *prop {
                    Property::Scalar { ty, .. } => {
                        values.push(src.next_value(ty)?.ok_or_else(truncated)?);
                    }
                    Property::List { count, item, .. } => {
                        let len = src.next_value(count)?.ok_or_else(truncated)?;
                        if len < 0.0 {
                            return Err(PlyError::InvalidValue {
                                element: el.name.clone(),
                                record,
                                token: len.to_string(),
                            });
                        }
                        for _ in 0..len as usize {
                            src.next_value(item)?.ok_or_else(truncated)?;
                        }
                        values.push(f64::NAN);
                    }
                }
            }
            if is_vertex {
                let c = layout.coords;
                positions.push([
                    to_voxel(values[c[0]], record)?,
                    to_voxel(values[c[1]], record)?,
                    to_voxel(values[c[2]], record)?,
                ]);
                let k = layout.colors;
                colors.push(Rgb::new(values[k[0]] as u8, values[k[1]] as u8, values[k[2]] as u8));
            }
        }
    }
    Ok((positions, colors))
}

/// Parses a PLY stream into a [`PointCloud`], preserving vertex order.
pub fn read_ply<R: Read>(reader: R) -> Result<PointCloud, PlyError> {
    let mut reader = BufReader::new(reader);
    let header = read_header(&mut reader)?;
    let (positions, colors) = match header.format {
        PlyFormat::Ascii => {
            let mut body = String::new();
            reader.read_to_string(&mut body)?;
            let mut src = AsciiSource {
                tokens: body.split_ascii_whitespace(),
                element: String::new(),
                record: 0,
            };
            read_body(&mut src, &header, |s, el, rec| {
                if s.element != el {
                    s.element = el.to_string();
                }
                s.record = rec;
            })?
        }
        PlyFormat::BinaryLittleEndian => {
            let mut src = BinarySource { reader, buf: [0; 8] };
            read_body(&mut src, &header, |_, _, _| {})?
        }
    };
    Ok(PointCloud::new(positions, colors, header.bit_depth)?)
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud, PlyError> {
    read_ply(File::open(path)?)
}

/// Writes `cloud` with integer coordinates and a `bit_depth` comment so that
/// [`read_ply`] reproduces it exactly.
pub fn write_ply<W: Write>(cloud: &PointCloud, format: PlyFormat, writer: W) -> Result<(), PlyError> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "ply")?;
    writeln!(w, "format {} 1.0", format.header_name())?;
    writeln!(w, "comment bit_depth {}", cloud.bit_depth())?;
    writeln!(w, "element vertex {}", cloud.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(w, "property uint {axis}")?;
    }
    for ch in ["red", "green", "blue"] {
        writeln!(w, "property uchar {ch}")?;
    }
    writeln!(w, "end_header")?;
    for (p, c) in cloud.positions().iter().zip(cloud.colors()) {
        match format {
            PlyFormat::Ascii => writeln!(w, "{} {} {} {} {} {}", p[0], p[1], p[2], c.r, c.g, c.b)?,
            PlyFormat::BinaryLittleEndian => {
                for v in p {
                    w.write_all(&v.to_le_bytes())?;
                }
                w.write_all(&[c.r, c.g, c.b])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_ply(cloud: &PointCloud, format: PlyFormat, path: impl AsRef<Path>) -> Result<(), PlyError> {
    write_ply(cloud, format, File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ASCII3: &str = "ply
format ascii 1.0
element vertex 3
property float x
property float y
property float z
property uchar red
property uchar green
property uchar blue
end_header
0 0 0 10 20 30
1 2 3 40 50 60
4 4 4 70 80 90
";

    fn binary3() -> Vec<u8> {
        let mut out = b"ply
format binary_little_endian 1.0
element vertex 3
property float x
property float y
property float z
property uchar red
property uchar green
property uchar blue
end_header
"
        .to_vec();
        let rows = [
            ([0f32, 0., 0.], [10u8, 20, 30]),
            ([1., 2., 3.], [40, 50, 60]),
            ([4., 4., 4.], [70, 80, 90]),
        ];
        for (p, c) in rows {
            for v in p {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&c);
        }
        out
    }

    #[test]
    fn ascii_three_vertices_in_order() {
        let c = read_ply(ASCII3.as_bytes()).unwrap();
        assert_eq!(c.positions(), &[[0, 0, 0], [1, 2, 3], [4, 4, 4]]);
        assert_eq!(c.colors()[1], Rgb::new(40, 50, 60));
        assert_eq!(c.bit_depth(), 3);
    }

    #[test]
    fn binary_matches_ascii() {
        let a = read_ply(ASCII3.as_bytes()).unwrap();
        let b = read_ply(binary3().as_slice()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn float_coordinates_round_half_to_even() {
        let src = ASCII3
            .replace("1 2 3 40", "0.5 2.5 3.4999 40")
            .replace("4 4 4 70", "1.5 3.6 4 70");
        let c = read_ply(src.as_bytes()).unwrap();
        assert_eq!(c.positions()[1], [0, 2, 3]);
        assert_eq!(c.positions()[2], [2, 4, 4]);
    }

    #[test]
    fn skips_unknown_properties_and_other_elements() {
        let src = "ply
format ascii 1.0
comment made by hand
element face 1
property list uchar int vertex_indices
element vertex 2
property int x
property int y
property int z
property float nx
property uchar red
property uchar green
property uchar blue
property uchar alpha
end_header
3 0 1 2
5 6 7 0.5 1 2 3 255
1 1 1 -0.5 4 5 6 255
";
        let c = read_ply(src.as_bytes()).unwrap();
        assert_eq!(c.positions(), &[[5, 6, 7], [1, 1, 1]]);
        assert_eq!(c.colors(), &[Rgb::new(1, 2, 3), Rgb::new(4, 5, 6)]);
    }

    #[test]
    fn bit_depth_comment_is_honoured() {
        let src = ASCII3.replace("format ascii 1.0\n", "format ascii 1.0\ncomment bit_depth 10\n");
        assert_eq!(read_ply(src.as_bytes()).unwrap().bit_depth(), 10);
        let src = ASCII3.replace("format ascii 1.0\n", "format ascii 1.0\ncomment bit_depth 2\n");
        assert!(matches!(
            read_ply(src.as_bytes()),
            Err(PlyError::Cloud(CloudError::CoordinateOutOfRange { index: 2, .. }))
        ));
    }

    #[test]
    fn error_kinds_are_distinct() {
        assert!(matches!(read_ply(&b"plx\n"[..]), Err(PlyError::MalformedHeader { .. })));
        assert!(matches!(
            read_ply(ASCII3.replace("end_header\n", "").as_bytes()),
            Err(PlyError::MalformedHeader { .. })
        ));
        assert!(matches!(
            read_ply(ASCII3.replace("ascii", "binary_big_endian").as_bytes()),
            Err(PlyError::UnsupportedFormat(_))
        ));
        assert!(matches!(
            read_ply(ASCII3.replace("property uchar green\n", "").as_bytes()),
            Err(PlyError::MissingProperty("green"))
        ));
        assert!(matches!(
            read_ply(ASCII3.replace("4 4 4 70 80 90\n", "4 4").as_bytes()),
            Err(PlyError::TruncatedBody { record: 2, .. })
        ));
        let mut bin = binary3();
        bin.truncate(bin.len() - 2);
        assert!(matches!(
            read_ply(bin.as_slice()),
            Err(PlyError::TruncatedBody { record: 2, .. })
        ));
        assert!(matches!(
            read_ply(ASCII3.replace("1 2 3 40", "1 -2 3 40").as_bytes()),
            Err(PlyError::InvalidCoordinate { index: 1, .. })
        ));
        assert!(matches!(
            read_ply(ASCII3.replace("1 2 3 40", "1 2 3 4x").as_bytes()),
            Err(PlyError::InvalidValue { record: 1, .. })
        ));
        assert!(matches!(
            read_ply(ASCII3.replace("uchar red", "float red").as_bytes()),
            Err(PlyError::PropertyType { .. })
        ));
    }
}
