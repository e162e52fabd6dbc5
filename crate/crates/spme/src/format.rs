//! Output formats: CSV with shortest round-trip floats and a little-endian
//! snapshot container.

use std::fmt::Write as _;

use spme_core::solver::Record;

/// Shortest decimal string that parses back to `x` exactly.
pub fn float(x: f64) -> String {
    let mut buf = ryu::Buffer::new();
    buf.format(x).to_string()
}

/// A CSV cell: float, integer, text or missing (`NA`).
pub enum Cell<'a> {
    F(f64),
    U(u64),
    S(&'a str),
    Na,
}

impl From<f64> for Cell<'_> {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<Option<f64>> for Cell<'_> {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Na, Cell::F)
    }
}

impl From<usize> for Cell<'_> {
    fn from(x: usize) -> Self {
        Cell::U(x as u64)
    }
}

impl From<u64> for Cell<'_> {
    fn from(x: u64) -> Self {
        Cell::U(x)
    }
}

impl From<bool> for Cell<'_> {
    fn from(x: bool) -> Self {
        Cell::U(x as u64)
    }
}

impl<'a> From<&'a str> for Cell<'a> {
    fn from(x: &'a str) -> Self {
        Cell::S(x)
    }
}

/// In-memory CSV table with a fixed header.
pub struct Csv {
    columns: usize,
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self {
            columns: header.len(),
            text,
        }
    }

    pub fn row(&mut self, cells: &[Cell<'_>]) {
        assert_eq!(cells.len(), self.columns, "row width differs from header");
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            match c {
                Cell::F(x) => self.text.push_str(&float(*x)),
                Cell::U(n) => write!(self.text, "{n}").expect("write to String"),
                Cell::S(s) => {
                    debug_assert!(!s.contains([',', '"', '\n']), "unquoted CSV text");
                    self.text.push_str(s)
                }
                Cell::Na => self.text.push_str("NA"),
            }
        }
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

/// `u64` LE grid length `J`, then for every record `t` and the `J` grid
/// values, all `f64` LE.
pub fn snapshots(records: &[Record]) -> Vec<u8> {
    let len = records.first().map_or(0, |r| r.v.len());
    let mut out = Vec::with_capacity(8 + records.len() * (len + 1) * 8);
    out.extend_from_slice(&(len as u64).to_le_bytes());
    for r in records {
        out.extend_from_slice(&r.t.to_le_bytes());
        for v in r.v.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub type Frames = Vec<(f64, Vec<f64>)>;

/// Inverse of [`snapshots`]: the grid length and `(t, values)` pairs.
pub fn read_snapshots(bytes: &[u8]) -> Option<(usize, Frames)> {
    let word = |i: usize| -> Option<[u8; 8]> { bytes.get(8 * i..8 * i + 8)?.try_into().ok() };
    let len = u64::from_le_bytes(word(0)?) as usize;
    let rest = bytes.len() / 8 - 1;
    if !bytes.len().is_multiple_of(8) || !rest.is_multiple_of(len + 1) {
        return None;
    }
    let frames = (0..rest / (len + 1))
        .map(|f| {
            let base = 1 + f * (len + 1);
            let t = f64::from_le_bytes(word(base)?);
            let v = (0..len)
                .map(|j| Some(f64::from_le_bytes(word(base + 1 + j)?)))
                .collect::<Option<Vec<_>>>()?;
            Some((t, v))
        })
        .collect::<Option<Vec<_>>>()?;
    Some((len, frames))
}
