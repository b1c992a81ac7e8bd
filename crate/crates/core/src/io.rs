//! PGM images and CSV signals.

use std::fs;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Row-major grayscale image stored as floats.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub pixels: DVector<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: DVector<f64>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::dim(format!(
                "image {height}x{width} needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        Ok(GrayImage { height, width, pixels })
    }
}

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated netpbm header".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = header_token(bytes, pos)?;
    tok.parse().map_err(|_| Error::Format(format!("bad {what} in netpbm header: {tok:?}")))
}

/// Decodes binary PGM (P5) or PPM (P6, converted to luma). 16-bit samples are
/// big-endian as the format prescribes; values are rescaled to `[0, 255]`.
pub fn decode_netpbm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    let magic = header_token(bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::Format(format!("unsupported netpbm magic {other:?}"))),
    };
    let width = header_number(bytes, &mut pos, "width")?;
    let height = header_number(bytes, &mut pos, "height")?;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if !(1..=65535).contains(&maxval) {
        return Err(Error::Format(format!("maxval {maxval} out of range")));
    }
    pos += 1;
    let depth = if maxval > 255 { 2 } else { 1 };
    let need = width * height * channels * depth;
    let data = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Format(format!("expected {need} bytes of pixel data")))?;
    let sample = |i: usize| -> f64 {
        let raw = if depth == 2 {
            u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as f64
        } else {
            data[i] as f64
        };
        raw * 255.0 / maxval as f64
    };
    let pixels = DVector::from_fn(width * height, |p, _| {
        if channels == 1 {
            sample(p)
        } else {
            (0..3).map(|ch| LUMA[ch] * sample(3 * p + ch)).sum()
        }
    });
    GrayImage::new(height, width, pixels)
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    decode_netpbm(&fs::read(path)?)
}

/// 8-bit P5 encoding; pixels are rounded and clamped to `[0, 255]`.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|&x| x.round().clamp(0.0, 255.0) as u8));
    out
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}

fn parse_row(record: &csv::StringRecord) -> Option<Vec<f64>> {
    record.iter().map(|f| f.trim().parse::<f64>().ok()).collect()
}

/// Reads numeric CSV rows; a first row that does not parse is taken as a header.
pub fn read_numeric_csv<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        match parse_row(&rec) {
            Some(row) => rows.push(row),
            None if i == 0 => {}
            None => return Err(Error::Format(format!("non-numeric value in CSV row {}", i + 1))),
        }
    }
    Ok(rows)
}

/// One sample per row. A single column is read as is; with more columns the
/// first is taken as an index and the second is read, matching
/// [`write_signals_csv`].
pub fn read_signal_csv(path: &Path) -> Result<DVector<f64>> {
    let rows = read_numeric_csv(BufReader::new(fs::File::open(path)?))?;
    if rows.is_empty() {
        return Err(Error::Format(format!("{} holds no samples", path.display())));
    }
    let col = usize::from(rows[0].len() > 1);
    if rows.iter().any(|r| r.len() <= col) {
        return Err(Error::Format(format!("{}: ragged signal rows", path.display())));
    }
    Ok(DVector::from_iterator(rows.len(), rows.iter().map(|r| r[col])))
}

/// Writes `index,value` rows with a header, plus further named columns.
pub fn write_signals_csv<W: Write>(writer: W, columns: &[(&str, &DVector<f64>)]) -> Result<()> {
    let len = columns.first().map_or(0, |(_, c)| c.len());
    if columns.iter().any(|(_, c)| c.len() != len) {
        return Err(Error::dim("signal columns differ in length"));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["index"];
    header.extend(columns.iter().map(|(name, _)| *name));
    w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
    for i in 0..len {
        let mut rec = vec![i.to_string()];
        rec.extend(columns.iter().map(|(_, c)| format!("{}", c[i])));
        w.write_record(&rec).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Regression dataset: every column but the last forms `D`, the last is `c`.
pub fn read_regression_csv(path: &Path) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let file = fs::File::open(path)?;
    let rows = read_numeric_csv(BufReader::new(file))?;
    regression_from_rows(&rows).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn regression_from_rows(rows: &[Vec<f64>]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let width = rows.first().map_or(0, |r| r.len());
    if width < 2 {
        return Err(Error::Format("regression CSV needs at least two columns".into()));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != width) {
        return Err(Error::Format(format!("row {} has {} columns, expected {width}", i + 1, rows[i].len())));
    }
    let d = DMatrix::from_fn(rows.len(), width - 1, |i, j| rows[i][j]);
    let c = DVector::from_iterator(rows.len(), rows.iter().map(|r| r[width - 1]));
    Ok((d, c))
}
