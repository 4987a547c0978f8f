//! Plain-text mesh format.
//!
//! ```text
//! nodes <N>
//! <x> <y>            # one line per vertex, id = line order
//! tris <M>
//! <v0> <v1> <v2>     # 0-based vertex ids
//! ```
//!
//! `#` starts a comment. Boundary flags and edges are derived, never read.

use std::fmt::Write as _;

use super::Mesh;
use crate::error::{Result, SvError};

struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

// Significant lines as (line number, tokens); comments and blanks dropped.
fn tokenize(text: &str) -> Vec<(usize, Vec<Token<'_>>)> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = Vec::new();
        let mut start = None;
        for (pos, ch) in content.char_indices().chain(std::iter::once((content.len(), ' '))) {
            if ch.is_whitespace() {
                if let Some(s) = start.take() {
                    tokens.push(Token {
                        text: &content[s..pos],
                        line: i + 1,
                        column: content[..s].chars().count() + 1,
                    });
                }
            } else if start.is_none() {
                start = Some(pos);
            }
        }
        if !tokens.is_empty() {
            out.push((i + 1, tokens));
        }
    }
    out
}

fn err(line: usize, column: usize, message: impl Into<String>) -> SvError {
    SvError::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn header(
    lines: &[(usize, Vec<Token<'_>>)],
    at: usize,
    keyword: &str,
    last_line: usize,
) -> Result<usize> {
    let (line, tokens) = lines
        .get(at)
        .ok_or_else(|| err(last_line + 1, 1, format!("expected `{keyword} <count>`, found end of input")))?;
    if tokens[0].text != keyword {
        return Err(err(*line, tokens[0].column, format!("expected `{keyword}`, found `{}`", tokens[0].text)));
    }
    if tokens.len() != 2 {
        return Err(err(*line, tokens[0].column, format!("expected `{keyword} <count>`")));
    }
    tokens[1]
        .text
        .parse::<usize>()
        .map_err(|_| err(*line, tokens[1].column, format!("invalid count `{}`", tokens[1].text)))
}

fn expect_fields<'a, 'b>(lines: &'b [(usize, Vec<Token<'a>>)], at: usize, n: usize, what: &str, last_line: usize) -> Result<&'b [Token<'a>]> {
    let (line, tokens) = lines
        .get(at)
        .ok_or_else(|| err(last_line + 1, 1, format!("expected {what}, found end of input")))?;
    if tokens.len() != n {
        let col = tokens.get(n).map_or(tokens[0].column, |t| t.column);
        return Err(err(*line, col, format!("expected {n} fields for {what}, found {}", tokens.len())));
    }
    Ok(tokens)
}

/// Parse mesh text and build a validated [`Mesh`].
pub fn load_mesh(text: &str) -> Result<Mesh> {
    let lines = tokenize(text);
    let last_line = text.lines().count();
    let mut at = 0;
    let n_nodes = header(&lines, at, "nodes", last_line)?;
    at += 1;
    let mut coords = Vec::with_capacity(n_nodes.min(1 << 20));
    for _ in 0..n_nodes {
        let toks = expect_fields(&lines, at, 2, "a node `<x> <y>`", last_line)?;
        let mut xy = [0.0; 2];
        for (slot, t) in xy.iter_mut().zip(toks) {
            let v: f64 = t
                .text
                .parse()
                .map_err(|_| err(t.line, t.column, format!("invalid coordinate `{}`", t.text)))?;
            if !v.is_finite() {
                return Err(err(t.line, t.column, format!("non-finite coordinate `{}`", t.text)));
            }
            *slot = v;
        }
        coords.push(xy);
        at += 1;
    }
    let n_tris = header(&lines, at, "tris", last_line)?;
    if n_tris == 0 {
        let (line, toks) = &lines[at];
        return Err(err(*line, toks[1].column, "a mesh needs at least one triangle"));
    }
    at += 1;
    let mut tris = Vec::with_capacity(n_tris.min(1 << 20));
    for _ in 0..n_tris {
        let toks = expect_fields(&lines, at, 3, "a triangle `<v0> <v1> <v2>`", last_line)?;
        let mut v = [0usize; 3];
        for (slot, t) in v.iter_mut().zip(toks) {
            let id: usize = t
                .text
                .parse()
                .map_err(|_| err(t.line, t.column, format!("invalid vertex id `{}`", t.text)))?;
            if id >= n_nodes {
                return Err(err(t.line, t.column, format!("vertex id {id} out of range (nodes {n_nodes})")));
            }
            *slot = id;
        }
        tris.push(v);
        at += 1;
    }
    if let Some((line, toks)) = lines.get(at) {
        return Err(err(*line, toks[0].column, "unexpected content after the triangle list"));
    }
    Mesh::new(coords, tris)
}

/// Serialize in the format read by [`load_mesh`]; coordinates round-trip exactly.
pub fn write_mesh(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "nodes {}", mesh.n_vertices());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{:?} {:?}", v.x, v.y);
    }
    let _ = writeln!(s, "tris {}", mesh.n_triangles());
    for t in mesh.triangles() {
        let _ = writeln!(s, "{} {} {}", t.verts[0], t.verts[1], t.verts[2]);
    }
    s
}
