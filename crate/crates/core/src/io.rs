//! File formats: single-column CSV signals, PGM images and versioned JSON.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{LatticeShape, Signal};

pub const SCHEMA_VERSION: u32 = 1;

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

/// Reads a one-column CSV with a header line naming the column.
pub fn parse_column_csv(text: &str, column: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    match lines.next() {
        Some(h) if h == column => {}
        Some(h) => return Err(parse_err(format!("expected header '{column}', found '{h}'"))),
        None => return Err(parse_err("empty file")),
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            l.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(format!("row {}: '{l}' is not a finite number", i + 1)))
        })
        .collect()
}

pub fn format_column_csv(values: &[f64], column: &str) -> String {
    let mut out = String::with_capacity(values.len() * 20 + column.len() + 1);
    out.push_str(column);
    out.push('\n');
    for v in values {
        out.push_str(&format!("{v}\n"));
    }
    out
}

/// 1D signal from CSV with header `value`.
pub fn read_signal_csv(text: &str) -> Result<Signal> {
    Signal::from_vec(parse_column_csv(text, "value")?)
}

pub fn write_signal_csv(signal: &Signal) -> String {
    format_column_csv(signal.values(), "value")
}

/// Λ draws from CSV with header `lambda`.
pub fn read_lambda_samples(text: &str) -> Result<Vec<f64>> {
    parse_column_csv(text, "lambda")
}

pub fn write_lambda_samples(samples: &[f64]) -> String {
    format_column_csv(samples, "lambda")
}

/// A greyscale PGM image; pixel rows are stored top to bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
    /// `P5` (binary) when true, `P2` (plain) otherwise.
    pub binary: bool,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&str> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() && self.bytes[self.pos] != b'#' {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(parse_err("truncated PGM header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| parse_err("non-ASCII PGM header"))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let t = self.token()?;
        t.parse().map_err(|_| parse_err(format!("bad {what} '{t}' in PGM header")))
    }
}

impl Pgm {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut h = Header { bytes, pos: 0 };
        let binary = match h.token()? {
            "P5" => true,
            "P2" => false,
            m => return Err(parse_err(format!("unsupported PGM magic '{m}'"))),
        };
        let width = h.number("width")?;
        let height = h.number("height")?;
        let maxval = h.number("maxval")?;
        if width == 0 || height == 0 {
            return Err(parse_err("PGM image has no pixels"));
        }
        if maxval == 0 || maxval > 65535 {
            return Err(parse_err(format!("maxval {maxval} outside 1..=65535")));
        }
        let count = width * height;
        let pixels = if binary {
            // Exactly one whitespace byte separates the header from the raster.
            let start = h.pos + 1;
            let wide = maxval > 255;
            let need = count * if wide { 2 } else { 1 };
            if bytes.len() < start + need {
                return Err(parse_err("truncated PGM raster"));
            }
            let raster = &bytes[start..start + need];
            if wide {
                raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
            } else {
                raster.iter().map(|&b| b as u16).collect()
            }
        } else {
            let mut px = Vec::with_capacity(count);
            for _ in 0..count {
                px.push(h.number("pixel")? as u16);
            }
            px
        };
        if let Some(p) = pixels.iter().find(|&&p| p as usize > maxval) {
            return Err(parse_err(format!("pixel {p} exceeds maxval {maxval}")));
        }
        Ok(Self {
            width,
            height,
            maxval: maxval as u16,
            pixels,
            binary,
        })
    }

    /// Canonical encoding: magic, `width height`, maxval on separate lines;
    /// plain rasters write one image row per line.
    pub fn to_bytes(&self) -> Vec<u8> {
        let magic = if self.binary { "P5" } else { "P2" };
        let mut out = format!("{magic}\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.binary {
            if self.maxval > 255 {
                self.pixels.iter().for_each(|p| out.extend_from_slice(&p.to_be_bytes()));
            } else {
                out.extend(self.pixels.iter().map(|&p| p as u8));
            }
        } else {
            for row in self.pixels.chunks(self.width) {
                let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
        out
    }

    /// Intensities in `[0, maxval]` on a `[width, height]` lattice.
    pub fn to_signal(&self) -> Result<Signal> {
        let shape = LatticeShape::new(vec![self.width, self.height])?;
        Signal::new(shape, self.pixels.iter().map(|&p| p as f64).collect())
    }

    /// Rounds and clamps a 2D signal to `[0, maxval]`.
    pub fn from_signal(signal: &Signal, maxval: u16, binary: bool) -> Result<Self> {
        let sizes = signal.shape().sizes();
        if sizes.len() != 2 {
            return Err(Error::UnsupportedDimension(sizes.len()));
        }
        let top = maxval as f64;
        Ok(Self {
            width: sizes[0],
            height: sizes[1],
            maxval,
            pixels: signal.values().iter().map(|v| v.round().clamp(0.0, top) as u16).collect(),
            binary,
        })
    }
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON of `value` with a leading `schema_version` field.
pub fn to_versioned_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Versioned {
        schema_version: SCHEMA_VERSION,
        body: value,
    })?;
    s.push('\n');
    Ok(s)
}
