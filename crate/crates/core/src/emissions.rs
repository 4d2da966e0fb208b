//! CTC emission matrices and the character alphabets they are defined over.
//!
//! Two on-disk encodings are supported. The binary one (`.ctce`) stores
//! log-probabilities as little-endian `f32` and round-trips bit-exactly; the
//! text one stores plain probabilities and exists mostly for hand-written
//! fixtures.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

pub const BLANK_SYMBOL: char = '∅';
pub const SEPARATOR_SYMBOL: char = '|';
pub const DEFAULT_FRAME_MS: u16 = 20;
/// Maximum allowed deviation of `sum(exp(row))` from 1.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-4;

const MAGIC: &[u8; 4] = b"CTCE";
const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum EmissionsError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes, expected \"CTCE\"")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("frame {frame}: probabilities sum to {sum:.6}, outside tolerance")]
    NotNormalized { frame: usize, sum: f64 },
    #[error("frame {frame}, symbol {symbol}: invalid value {value}")]
    InvalidValue { frame: usize, symbol: usize, value: f64 },
    #[error("unknown alphabet symbol {0:?}")]
    UnknownSymbol(char),
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),
    #[error("frame range [{start}, {end}) invalid for {len} frames")]
    OutOfRange { start: usize, end: usize, len: usize },
}

/// Ordered output symbols of a CTC acoustic model: lowercase letters plus a
/// blank and a word separator.
#[derive(Clone, PartialEq, Eq)]
pub struct CharAlphabet {
    symbols: Vec<char>,
    blank: usize,
    separator: usize,
}

impl CharAlphabet {
    /// `∅|abcdefghijklmnopqrstuvwxyz`
    pub fn english() -> Self {
        let mut s = String::from("∅|");
        s.extend('a'..='z');
        Self::parse(&s).expect("builtin alphabet is valid")
    }

    /// Parses an alphabet string where every char is one symbol. The blank is
    /// written `∅` and the separator `|`.
    pub fn parse(spec: &str) -> Result<Self, EmissionsError> {
        let symbols: Vec<char> = spec.chars().collect();
        let mut blank = None;
        let mut separator = None;
        for (i, &c) in symbols.iter().enumerate() {
            if symbols[..i].contains(&c) {
                return Err(EmissionsError::InvalidAlphabet(format!("duplicate symbol {c:?}")));
            }
            match c {
                BLANK_SYMBOL => blank = Some(i),
                SEPARATOR_SYMBOL => separator = Some(i),
                'a'..='z' => {}
                other => return Err(EmissionsError::UnknownSymbol(other)),
            }
        }
        let blank = blank.ok_or_else(|| EmissionsError::InvalidAlphabet("missing blank ∅".into()))?;
        let separator = separator.ok_or_else(|| EmissionsError::InvalidAlphabet("missing separator |".into()))?;
        Ok(Self { symbols, blank, separator })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn blank_index(&self) -> usize {
        self.blank
    }

    pub fn separator_index(&self) -> usize {
        self.separator
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn symbol(&self, index: usize) -> char {
        self.symbols[index]
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.symbols.iter().position(|&s| s == c)
    }

    pub fn is_letter(&self, index: usize) -> bool {
        index != self.blank && index != self.separator
    }
}

impl fmt::Display for CharAlphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.symbols.iter().try_for_each(|c| write!(f, "{c}"))
    }
}

impl fmt::Debug for CharAlphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CharAlphabet({self})")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmissionFormat {
    Binary,
    Text,
}

impl EmissionFormat {
    /// `.ctce` is binary, anything else is treated as text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ctce") => EmissionFormat::Binary,
            _ => EmissionFormat::Text,
        }
    }
}

/// T×C frame-wise natural-log posteriors, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix {
    data: Vec<f32>,
    num_frames: usize,
    frame_ms: u16,
    alphabet: Arc<CharAlphabet>,
}

impl EmissionMatrix {
    /// Builds a matrix from row-major log-probabilities, validating every row.
    pub fn from_log_probs(
        data: Vec<f32>,
        num_frames: usize,
        alphabet: Arc<CharAlphabet>,
        frame_ms: u16,
    ) -> Result<Self, EmissionsError> {
        let c = alphabet.len();
        if num_frames == 0 {
            return Err(EmissionsError::DimensionMismatch("matrix has no frames".into()));
        }
        if data.len() != num_frames * c {
            return Err(EmissionsError::DimensionMismatch(format!(
                "expected {} values ({num_frames}x{c}), found {}",
                num_frames * c,
                data.len()
            )));
        }
        for (frame, row) in data.chunks_exact(c).enumerate() {
            let mut sum = 0.0f64;
            for (symbol, &v) in row.iter().enumerate() {
                if v.is_nan() || v > 0.0 {
                    return Err(EmissionsError::InvalidValue { frame, symbol, value: v as f64 });
                }
                sum += (v as f64).exp();
            }
            if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(EmissionsError::NotNormalized { frame, sum });
            }
        }
        let frame_ms = if frame_ms == 0 { DEFAULT_FRAME_MS } else { frame_ms };
        Ok(Self { data, num_frames, frame_ms, alphabet })
    }

    /// Builds a matrix from row-major probabilities (not logs).
    pub fn from_probs(
        probs: &[f64],
        num_frames: usize,
        alphabet: Arc<CharAlphabet>,
        frame_ms: u16,
    ) -> Result<Self, EmissionsError> {
        let c = alphabet.len();
        let mut data = Vec::with_capacity(probs.len());
        for (i, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0 + NORMALIZATION_TOLERANCE).contains(&p) {
                return Err(EmissionsError::InvalidValue { frame: i / c.max(1), symbol: i % c.max(1), value: p });
            }
            data.push(p.min(1.0).ln() as f32);
        }
        Self::from_log_probs(data, num_frames, alphabet, frame_ms)
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_symbols(&self) -> usize {
        self.alphabet.len()
    }

    pub fn frame_ms(&self) -> u16 {
        self.frame_ms
    }

    pub fn duration_ms(&self) -> u64 {
        self.num_frames as u64 * self.frame_ms as u64
    }

    pub fn alphabet(&self) -> &Arc<CharAlphabet> {
        &self.alphabet
    }

    pub fn row(&self, frame: usize) -> &[f32] {
        let c = self.num_symbols();
        &self.data[frame * c..(frame + 1) * c]
    }

    pub fn log_prob(&self, frame: usize, symbol: usize) -> f64 {
        self.data[frame * self.num_symbols() + symbol] as f64
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }

    pub fn view(&self) -> EmissionView<'_> {
        EmissionView { matrix: self, start: 0, end: self.num_frames }
    }

    pub fn slice(&self, start: usize, end: usize) -> Result<EmissionView<'_>, EmissionsError> {
        self.view().slice(start, end)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), EmissionsError> {
        let alphabet = self.alphabet.to_string();
        let t =
            u32::try_from(self.num_frames).map_err(|_| EmissionsError::DimensionMismatch("too many frames".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&t.to_le_bytes())?;
        w.write_all(&(self.num_symbols() as u32).to_le_bytes())?;
        w.write_all(&self.frame_ms.to_le_bytes())?;
        w.write_all(&(alphabet.len() as u32).to_le_bytes())?;
        w.write_all(alphabet.as_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, EmissionsError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(EmissionsError::BadMagic);
        }
        let version = read_u16(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(EmissionsError::UnsupportedVersion(version));
        }
        let t = read_u32(&mut r)? as usize;
        let c = read_u32(&mut r)? as usize;
        let frame_ms = read_u16(&mut r)?;
        let alpha_len = read_u32(&mut r)? as usize;
        if alpha_len > 4096 {
            return Err(EmissionsError::MalformedHeader(format!("alphabet length {alpha_len}")));
        }
        let mut alpha_bytes = vec![0u8; alpha_len];
        r.read_exact(&mut alpha_bytes).map_err(truncated)?;
        let alpha = String::from_utf8(alpha_bytes)
            .map_err(|_| EmissionsError::MalformedHeader("alphabet is not UTF-8".into()))?;
        let alphabet = CharAlphabet::parse(&alpha)?;
        if alphabet.len() != c {
            return Err(EmissionsError::DimensionMismatch(format!(
                "header declares C={c} but alphabet has {} symbols",
                alphabet.len()
            )));
        }
        let n = t.checked_mul(c).ok_or_else(|| EmissionsError::MalformedHeader(format!("T={t} C={c} overflows")))?;
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        if buf.len() != n * 4 {
            return Err(EmissionsError::DimensionMismatch(format!(
                "expected {} payload bytes, found {}",
                n * 4,
                buf.len()
            )));
        }
        let data = buf.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        Self::from_log_probs(data, t, Arc::new(alphabet), frame_ms)
    }

    /// Header `T C frame_ms alphabet` (frame_ms optional), then T rows of
    /// probabilities.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self, EmissionsError> {
        let mut lines = r.lines().filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true));
        let header = lines.next().ok_or_else(|| EmissionsError::MalformedHeader("empty file".into()))??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (t, c, frame_ms, alpha) = match fields.as_slice() {
            [t, c, ms, alpha] => (*t, *c, parse_num::<u16>(ms, "frame_ms")?, *alpha),
            [t, c, alpha] => (*t, *c, DEFAULT_FRAME_MS, *alpha),
            _ => {
                return Err(EmissionsError::MalformedHeader(format!(
                    "expected `T C frame_ms alphabet`, got {header:?}"
                )))
            }
        };
        let t: usize = parse_num(t, "T")?;
        let c: usize = parse_num(c, "C")?;
        let alphabet = CharAlphabet::parse(alpha)?;
        if alphabet.len() != c {
            return Err(EmissionsError::DimensionMismatch(format!(
                "header declares C={c} but alphabet has {} symbols",
                alphabet.len()
            )));
        }
        let mut probs = Vec::with_capacity(t * c);
        let mut rows = 0;
        for line in lines {
            let line = line?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| EmissionsError::MalformedHeader(format!("row {rows}: bad number {v:?}")))
                })
                .collect::<Result<_, _>>()?;
            if row.len() != c {
                return Err(EmissionsError::DimensionMismatch(format!(
                    "row {rows} has {} values, expected {c}",
                    row.len()
                )));
            }
            probs.extend(row);
            rows += 1;
        }
        if rows != t {
            return Err(EmissionsError::DimensionMismatch(format!("header declares T={t} but file has {rows} rows")));
        }
        Self::from_probs(&probs, t, Arc::new(alphabet), frame_ms)
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<(), EmissionsError> {
        writeln!(w, "{} {} {} {}", self.num_frames, self.num_symbols(), self.frame_ms, self.alphabet)?;
        for t in 0..self.num_frames {
            let row: Vec<String> = self.row(t).iter().map(|&v| format!("{:.9e}", (v as f64).exp())).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path, format: EmissionFormat) -> Result<(), EmissionsError> {
        let w = BufWriter::new(File::create(path)?);
        match format {
            EmissionFormat::Binary => self.write_binary(w),
            EmissionFormat::Text => self.write_text(w),
        }
    }
}

/// Loads and validates an emission file.
pub fn load_emissions(path: &Path, format: EmissionFormat) -> Result<EmissionMatrix, EmissionsError> {
    let r = BufReader::new(File::open(path)?);
    match format {
        EmissionFormat::Binary => EmissionMatrix::read_binary(r),
        EmissionFormat::Text => EmissionMatrix::read_text(r),
    }
}

/// Borrowed window `[start, end)` over the frames of an [`EmissionMatrix`].
#[derive(Debug, Clone, Copy)]
pub struct EmissionView<'a> {
    matrix: &'a EmissionMatrix,
    start: usize,
    end: usize,
}

impl<'a> EmissionView<'a> {
    pub fn slice(&self, start: usize, end: usize) -> Result<EmissionView<'a>, EmissionsError> {
        let len = self.num_frames();
        if start >= end || end > len {
            return Err(EmissionsError::OutOfRange { start, end, len });
        }
        Ok(EmissionView { matrix: self.matrix, start: self.start + start, end: self.start + end })
    }

    pub fn num_frames(&self) -> usize {
        self.end - self.start
    }

    /// Offset of this view's row 0 in the underlying matrix.
    pub fn offset(&self) -> usize {
        self.start
    }

    pub fn alphabet(&self) -> &'a CharAlphabet {
        &self.matrix.alphabet
    }

    pub fn row(&self, frame: usize) -> &'a [f32] {
        assert!(frame < self.num_frames(), "frame {frame} outside view");
        self.matrix.row(self.start + frame)
    }

    #[inline]
    pub fn log_prob(&self, frame: usize, symbol: usize) -> f64 {
        debug_assert!(frame < self.num_frames());
        self.matrix.log_prob(self.start + frame, symbol)
    }

    pub fn matrix(&self) -> &'a EmissionMatrix {
        self.matrix
    }
}

impl PartialEq for EmissionView<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.num_frames() == other.num_frames()
            && self.alphabet() == other.alphabet()
            && (0..self.num_frames()).all(|t| self.row(t) == other.row(t))
    }
}

fn truncated(e: std::io::Error) -> EmissionsError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        EmissionsError::MalformedHeader("file truncated".into())
    } else {
        EmissionsError::Io(e)
    }
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16, EmissionsError> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, EmissionsError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, EmissionsError> {
    s.parse().map_err(|_| EmissionsError::MalformedHeader(format!("{what} is not a number: {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_text(t: usize) -> String {
        let mut s = format!("{t} 4 20 ∅|ab\n");
        for _ in 0..t {
            s.push_str("0.25 0.25 0.25 0.25\n");
        }
        s
    }

    #[test]
    fn text_uniform_rows_become_log_quarter() {
        let m = EmissionMatrix::read_text(uniform_text(2).as_bytes()).unwrap();
        assert_eq!(m.num_frames(), 2);
        assert_eq!(m.num_symbols(), 4);
        for &v in m.raw() {
            assert_eq!(v, 0.25f64.ln() as f32);
        }
    }

    #[test]
    fn seventy_five_frames_at_twenty_ms_is_lookahead_horizon() {
        let m = EmissionMatrix::read_text(uniform_text(75).as_bytes()).unwrap();
        assert_eq!(m.frame_ms(), 20);
        assert_eq!(m.duration_ms(), 1500);
    }

    #[test]
    fn frame_ms_defaults_when_absent() {
        let m = EmissionMatrix::read_text("1 3 ∅|a\n0.2 0.3 0.5\n".as_bytes()).unwrap();
        assert_eq!(m.frame_ms(), DEFAULT_FRAME_MS);
    }

    #[test]
    fn unnormalized_row_rejected() {
        let err = EmissionMatrix::read_text("1 3 20 ∅|a\n0.3 0.3 0.3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, EmissionsError::NotNormalized { frame: 0, .. }), "{err}");
    }

    #[test]
    fn header_errors() {
        assert!(matches!(EmissionMatrix::read_text("two 3 ∅|a\n".as_bytes()), Err(EmissionsError::MalformedHeader(_))));
        assert!(matches!(
            EmissionMatrix::read_text("1 4 20 ∅|a\n0.5 0.5 0 0\n".as_bytes()),
            Err(EmissionsError::DimensionMismatch(_))
        ));
        assert!(matches!(
            EmissionMatrix::read_text("2 3 20 ∅|a\n0.5 0.5 0\n".as_bytes()),
            Err(EmissionsError::DimensionMismatch(_))
        ));
        assert!(matches!(
            EmissionMatrix::read_text("1 3 20 ∅|A\n0.5 0.5 0\n".as_bytes()),
            Err(EmissionsError::UnknownSymbol('A'))
        ));
    }

    #[test]
    fn alphabet_rules() {
        let a = CharAlphabet::english();
        assert_eq!(a.len(), 28);
        assert_eq!(a.blank_index(), 0);
        assert_eq!(a.separator_index(), 1);
        assert_eq!(a.index_of('c'), Some(4));
        assert!(CharAlphabet::parse("∅|aa").is_err());
        assert!(CharAlphabet::parse("|ab").is_err());
        assert!(CharAlphabet::parse("∅ab").is_err());
    }

    #[test]
    fn binary_round_trip_and_bad_magic() {
        let m = EmissionMatrix::read_text(uniform_text(3).as_bytes()).unwrap();
        let mut buf = Vec::new();
        m.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"CTCE");
        let back = EmissionMatrix::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        buf[0] = b'X';
        assert!(matches!(EmissionMatrix::read_binary(buf.as_slice()), Err(EmissionsError::BadMagic)));
    }

    #[test]
    fn slicing() {
        let mut text = String::from("10 3 20 ∅|a\n");
        for t in 0..10 {
            let p = 0.05 * t as f64;
            text.push_str(&format!("{} {} 0.5\n", p, 0.5 - p));
        }
        let m = EmissionMatrix::read_text(text.as_bytes()).unwrap();
        assert_eq!(m.slice(0, 10).unwrap(), m.view());
        let s = m.slice(3, 5).unwrap();
        assert_eq!(s.num_frames(), 2);
        assert_eq!(s.row(0), m.row(3));
        assert!(matches!(m.slice(5, 5), Err(EmissionsError::OutOfRange { .. })));
        assert!(m.slice(4, 11).is_err());
        let nested = m.slice(2, 9).unwrap().slice(1, 4).unwrap();
        assert_eq!(nested, m.slice(3, 6).unwrap());
    }
}
