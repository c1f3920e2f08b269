//! Line-oriented text format for networks and masks.
//!
//! ```text
//! layers L
//! dims r c
//! <r lines of c space-separated values>
//! ...
//! ```
//!
//! Networks may carry an optional `activations a1 .. aL` line right after the
//! header. Weights are written with 17 significant digits; masks as `0`/`1`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{BoolMatrix, DenseMatrix};
use crate::network::{Activation, LayeredNetwork, MaskTensor};

pub fn write_dense_blocks(blocks: &[DenseMatrix], activations: Option<&[Activation]>) -> String {
    let mut out = String::new();
    writeln!(out, "layers {}", blocks.len()).unwrap();
    if let Some(acts) = activations {
        let names: Vec<&str> = acts.iter().map(|a| a.name()).collect();
        writeln!(out, "activations {}", names.join(" ")).unwrap();
    }
    for m in blocks {
        writeln!(out, "dims {} {}", m.rows(), m.cols()).unwrap();
        for i in 0..m.rows() {
            let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
    }
    out
}

pub fn write_bool_blocks(blocks: &[BoolMatrix]) -> String {
    let mut out = String::new();
    writeln!(out, "layers {}", blocks.len()).unwrap();
    for m in blocks {
        writeln!(out, "dims {} {}", m.rows(), m.cols()).unwrap();
        for i in 0..m.rows() {
            let row: Vec<&str> = m.row(i).iter().map(|&b| if b { "1" } else { "0" }).collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    peeked: Option<(usize, &'a str)>,
    eof_line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            peeked: None,
            eof_line: text.lines().count() + 1,
        }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        if let Some(p) = self.peeked.take() {
            return Some(p);
        }
        self.inner
            .by_ref()
            .map(|(n, l)| (n + 1, l.trim()))
            .find(|(_, l)| !l.is_empty())
    }

    fn peek(&mut self) -> Option<(usize, &'a str)> {
        if self.peeked.is_none() {
            self.peeked = self.next();
        }
        self.peeked
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let eof_line = self.eof_line;
        self.next().ok_or_else(|| Error::Parse {
            line: eof_line,
            msg: format!("unexpected end of input, expected {what}"),
        })
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn keyword_numbers(line: usize, text: &str, keyword: &str, count: usize) -> Result<Vec<usize>> {
    let mut parts = text.split_whitespace();
    if parts.next() != Some(keyword) {
        return Err(parse_err(line, format!("expected `{keyword}`")));
    }
    let nums = parts
        .map(|p| p.parse::<usize>().map_err(|e| parse_err(line, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    if nums.len() != count {
        return Err(parse_err(line, format!("`{keyword}` takes {count} numbers")));
    }
    Ok(nums)
}

/// `(line number, tokens)` per matrix row.
type RawRows = Vec<(usize, Vec<String>)>;

struct RawBlocks {
    activations: Option<Vec<Activation>>,
    blocks: Vec<(usize, usize, RawRows)>,
}

fn read_raw(text: &str) -> Result<RawBlocks> {
    let mut lines = Lines::new(text);
    let (n, header) = lines.expect("`layers L`")?;
    let layers = keyword_numbers(n, header, "layers", 1)?[0];
    let mut activations = None;
    if let Some((n, l)) = lines.peek() {
        if l.starts_with("activations") {
            lines.next();
            let acts = l
                .split_whitespace()
                .skip(1)
                .map(|a| Activation::parse(a).ok_or_else(|| parse_err(n, format!("unknown activation `{a}`"))))
                .collect::<Result<Vec<_>>>()?;
            if acts.len() != layers {
                return Err(parse_err(n, "activation count differs from layer count"));
            }
            activations = Some(acts);
        }
    }
    let mut blocks = Vec::with_capacity(layers);
    for _ in 0..layers {
        let (n, l) = lines.expect("`dims r c`")?;
        let rc = keyword_numbers(n, l, "dims", 2)?;
        let (r, c) = (rc[0], rc[1]);
        let mut rows = Vec::with_capacity(r);
        for _ in 0..r {
            let (n, l) = lines.expect("matrix row")?;
            let row: Vec<String> = l.split_whitespace().map(str::to_owned).collect();
            if row.len() != c {
                return Err(parse_err(n, format!("expected {c} values, found {}", row.len())));
            }
            rows.push((n, row));
        }
        blocks.push((r, c, rows));
    }
    if let Some((n, _)) = lines.next() {
        return Err(parse_err(n, "trailing content"));
    }
    Ok(RawBlocks { activations, blocks })
}

pub fn read_dense_blocks(text: &str) -> Result<(Vec<DenseMatrix>, Option<Vec<Activation>>)> {
    let raw = read_raw(text)?;
    let blocks = raw
        .blocks
        .into_iter()
        .map(|(r, c, rows)| {
            let values = rows
                .iter()
                .flat_map(|(n, row)| row.iter().map(move |v| (*n, v)))
                .map(|(n, v)| {
                    v.parse::<f64>()
                        .map_err(|e| parse_err(n, format!("bad value `{v}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            DenseMatrix::new(r, c, values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((blocks, raw.activations))
}

pub fn read_bool_blocks(text: &str) -> Result<Vec<BoolMatrix>> {
    let raw = read_raw(text)?;
    raw.blocks
        .into_iter()
        .map(|(r, c, rows)| {
            let bits = rows
                .iter()
                .flat_map(|(n, row)| row.iter().map(move |v| (*n, v)))
                .map(|(n, v)| match v.as_str() {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(parse_err(n, format!("mask value `{other}` is not 0/1"))),
                })
                .collect::<Result<Vec<_>>>()?;
            BoolMatrix::new(r, c, bits)
        })
        .collect()
}

pub fn network_to_string(net: &LayeredNetwork) -> String {
    write_dense_blocks(net.weights(), Some(net.activations()))
}

/// Without an `activations` line, hidden layers default to relu and the last to identity.
pub fn network_from_str(text: &str) -> Result<LayeredNetwork> {
    let (blocks, acts) = read_dense_blocks(text)?;
    match acts {
        Some(acts) => LayeredNetwork::new(blocks, acts),
        None => LayeredNetwork::with_activations(blocks, Activation::Relu, Activation::Identity),
    }
}

pub fn mask_to_string(mask: &MaskTensor) -> String {
    write_bool_blocks(mask.masks())
}

pub fn mask_from_str(text: &str) -> Result<MaskTensor> {
    MaskTensor::new(read_bool_blocks(text)?)
}

pub fn save_network(net: &LayeredNetwork, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, network_to_string(net))?)
}

pub fn load_network(path: &Path) -> Result<LayeredNetwork> {
    network_from_str(&std::fs::read_to_string(path)?)
}

pub fn save_mask(mask: &MaskTensor, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, mask_to_string(mask))?)
}

pub fn load_mask(path: &Path) -> Result<MaskTensor> {
    mask_from_str(&std::fs::read_to_string(path)?)
}
