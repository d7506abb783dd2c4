//! Plain-text sparse weight matrices.
//!
//! ```text
//! # comments and blank lines are ignored
//! 2            <- N (clients = servers); indices run over 0..N^2
//! 0 0 0.5      <- row col value, flattened client-major: (i, j) -> i * N + j
//! 0 2 0.5
//! ...
//! ```
//!
//! Start vectors use the same header followed by the `N^2` entries of `p`,
//! whitespace separated, client-major.

use std::fmt::Write as _;

use super::{FlatStrategyVector, WeightMatrix};
use crate::error::{Error, Result};

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

fn parse<T: std::str::FromStr>(token: &str, line: usize, what: &str) -> Result<T> {
    token.parse().map_err(|_| Error::Parse {
        line,
        reason: format!("cannot read {what} from `{token}`"),
    })
}

fn read_header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>) -> Result<usize> {
    let (line, text) = lines.next().ok_or(Error::Parse {
        line: 1,
        reason: "missing header line with N".into(),
    })?;
    let n: usize = parse(text, line, "N")?;
    if n == 0 {
        return Err(Error::InvalidSize(0));
    }
    Ok(n)
}

pub fn parse_weight_matrix(text: &str) -> Result<WeightMatrix> {
    let mut it = data_lines(text);
    let n = read_header(&mut it)?;
    let dim = n * n;
    let mut triples = Vec::new();
    for (line, text) in it {
        let fields: Vec<&str> = text.split_whitespace().collect();
        let [r, c, v] = fields[..] else {
            return Err(Error::Parse {
                line,
                reason: format!("expected `row col value`, found {} fields", fields.len()),
            });
        };
        let r: usize = parse(r, line, "row")?;
        let c: usize = parse(c, line, "col")?;
        let v: f64 = parse(v, line, "value")?;
        if r >= dim || c >= dim {
            return Err(Error::Parse {
                line,
                reason: format!("index out of range for N^2 = {dim}"),
            });
        }
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Parse {
                line,
                reason: format!("weight {v} must be non-negative"),
            });
        }
        triples.push((r, c, v));
    }
    WeightMatrix::from_triples(n, triples)
}

pub fn format_weight_matrix(w: &WeightMatrix) -> String {
    let mut out = format!("{}\n", w.n());
    for (r, c, v) in w.triples() {
        let _ = writeln!(out, "{r} {c} {v}");
    }
    out
}

pub fn parse_strategy_vector(text: &str) -> Result<FlatStrategyVector> {
    let mut lines = data_lines(text);
    let n = read_header(&mut lines)?;
    let mut entries = Vec::with_capacity(n * n);
    for (line, text) in lines {
        for tok in text.split_whitespace() {
            entries.push(parse::<f64>(tok, line, "probability")?);
        }
    }
    FlatStrategyVector::new(n, entries)
}
