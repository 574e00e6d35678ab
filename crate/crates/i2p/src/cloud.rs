//! Header-tagged point-cloud text.
//!
//! The first line declares the columns, `#cols xyz [f<F>] [label]`; every
//! following non-blank line holds one point, `x y z [f1..fF] [label]`,
//! separated by whitespace.

use std::fmt::Write as _;

use i2p_core::voxel::PointCloud;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Columns {
    pub features: usize,
    pub label: bool,
}

impl Columns {
    pub fn of(pc: &PointCloud) -> Self {
        Self { features: pc.feature_width().unwrap_or(0), label: pc.labels().is_some() }
    }

    pub fn header(&self) -> String {
        let mut s = String::from("#cols xyz");
        if self.features > 0 {
            write!(s, " f{}", self.features).expect("string write");
        }
        if self.label {
            s.push_str(" label");
        }
        s
    }

    fn width(&self) -> usize {
        3 + self.features + usize::from(self.label)
    }
}

/// Whitespace-separated tokens with their 1-based byte columns.
fn tokens(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split_ascii_whitespace().map(move |t| (t.as_ptr() as usize - line.as_ptr() as usize + 1, t))
}

fn parse_header(src: &str, line: &str) -> Result<Columns> {
    let err = |col, msg: &str| Error::parse(src, 1, col, msg);
    let mut toks = tokens(line);
    match toks.next() {
        Some((_, "#cols")) => {}
        _ => return Err(err(1, "missing `#cols` header")),
    }
    match toks.next() {
        Some((_, "xyz")) => {}
        Some((c, _)) => return Err(err(c, "first column group must be `xyz`")),
        None => return Err(err(line.len() + 1, "header declares no columns")),
    }
    let mut cols = Columns { features: 0, label: false };
    let mut rest: Vec<(usize, &str)> = toks.collect();
    if let Some(&(c, t)) = rest.first() {
        if let Some(n) = t.strip_prefix('f') {
            cols.features = n.parse().ok().filter(|&f: &usize| f > 0).ok_or_else(|| err(c, "feature group must be `f<F>` with F >= 1"))?;
            rest.remove(0);
        }
    }
    match rest.as_slice() {
        [] => {}
        [(_, "label")] => cols.label = true,
        [(c, t), ..] => return Err(err(*c, &format!("unexpected header token `{t}`"))),
    }
    Ok(cols)
}

fn finite(src: &str, line: usize, col: usize, tok: &str) -> Result<f64> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(Error::parse(src, line, col, format!("non-finite value `{tok}`"))),
        Err(_) => Err(Error::parse(src, line, col, format!("`{tok}` is not a number"))),
    }
}

/// Parses point-cloud text; `src` names the input in error messages.
pub fn parse_pointcloud(src: &str, text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    let cols = match lines.next() {
        Some((_, l)) => parse_header(src, l)?,
        None => return Err(Error::parse(src, 1, 1, "missing `#cols` header")),
    };
    let mut positions = Vec::new();
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<(usize, &str)> = tokens(line).collect();
        if toks.len() != cols.width() {
            let col = toks.get(cols.width()).map_or(line.len() + 1, |t| t.0);
            return Err(Error::parse(src, n, col, format!("expected {} columns, found {}", cols.width(), toks.len())));
        }
        let mut p = [0.0; 3];
        for (k, &(c, t)) in toks[..3].iter().enumerate() {
            p[k] = finite(src, n, c, t)?;
        }
        positions.push(p);
        for &(c, t) in &toks[3..3 + cols.features] {
            feats.push(finite(src, n, c, t)?);
        }
        if cols.label {
            let (c, t) = toks[cols.width() - 1];
            labels.push(t.parse::<u32>().map_err(|_| Error::parse(src, n, c, format!("label `{t}` is not a class id")))?);
        }
    }
    if positions.is_empty() {
        return Err(Error::parse(src, 2, 1, "no points"));
    }
    let features = (cols.features > 0).then_some((cols.features, feats));
    Ok(PointCloud::new(positions, features, cols.label.then_some(labels))?)
}

/// Shortest round-trip decimal form of every value.
pub fn format_pointcloud(pc: &PointCloud) -> String {
    let cols = Columns::of(pc);
    let mut s = cols.header();
    s.push('\n');
    for (i, p) in pc.positions().iter().enumerate() {
        write!(s, "{} {} {}", p[0], p[1], p[2]).expect("string write");
        if cols.features > 0 {
            for f in pc.feature_row(i) {
                write!(s, " {f}").expect("string write");
            }
        }
        if let Some(l) = pc.labels() {
            write!(s, " {}", l[i]).expect("string write");
        }
        s.push('\n');
    }
    s
}
