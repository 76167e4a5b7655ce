//! Text container for grid fields, shared by checkpoints and outputs.
//!
//! ```text
//! shellflow-fields 1
//! meta step 40
//! field h 32 32 1 1 1 1 1
//! 1.5e-3
//! ...
//! end
//! ```
//! A field header lists name, dims `n1 n2 n3`, components and periods.
//! Data follows row-major, one node per line with components side by side.
//! Numbers are written in shortest round-trip form so a reload is bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &str = "shellflow-fields 1";

#[derive(Debug, Clone, PartialEq)]
pub struct FieldBlock {
    pub name: String,
    pub dims: [usize; 3],
    pub components: usize,
    pub periods: [f64; 3],
    pub data: Vec<f64>,
}

impl FieldBlock {
    pub fn new(name: &str, dims: [usize; 3], components: usize, periods: [f64; 3], data: Vec<f64>) -> Result<Self> {
        let want = dims.iter().product::<usize>() * components;
        crate::error::shape_check(name, data.len(), want)?;
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::Format(format!("bad field name {name:?}")));
        }
        Ok(FieldBlock { name: name.to_string(), dims, components, periods, data })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FieldSet {
    pub meta: BTreeMap<String, String>,
    pub fields: Vec<FieldBlock>,
}

impl FieldSet {
    pub fn get(&self, name: &str) -> Result<&FieldBlock> {
        self.fields.iter().find(|f| f.name == name).ok_or_else(|| Error::Format(format!("missing field {name}")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta.get(key).ok_or_else(|| Error::Format(format!("missing meta {key}")))?.parse().map_err(|_| Error::Format(format!("bad meta {key}")))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(MAGIC);
        s.push('\n');
        for (k, v) in &self.meta {
            let _ = writeln!(s, "meta {k} {v}");
        }
        for f in &self.fields {
            let _ = writeln!(
                s,
                "field {} {} {} {} {} {:e} {:e} {:e}",
                f.name, f.dims[0], f.dims[1], f.dims[2], f.components, f.periods[0], f.periods[1], f.periods[2]
            );
            for node in f.data.chunks(f.components) {
                let line: Vec<String> = node.iter().map(|v| format!("{v:e}")).collect();
                s.push_str(&line.join(" "));
                s.push('\n');
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            _ => return Err(Error::Format("missing header line".into())),
        }
        let mut set = FieldSet::default();
        let bad = |n: usize, what: &str| Error::Format(format!("line {}: {what}", n + 1));
        let mut ended = false;
        while let Some((n, line)) = lines.next() {
            let mut tok = line.split_whitespace();
            match tok.next() {
                Some("meta") => {
                    let k = tok.next().ok_or_else(|| bad(n, "meta without key"))?;
                    let v: Vec<&str> = tok.collect();
                    set.meta.insert(k.to_string(), v.join(" "));
                }
                Some("field") => {
                    let t: Vec<&str> = tok.collect();
                    if t.len() != 8 {
                        return Err(bad(n, "field header needs 8 entries"));
                    }
                    let us = |s: &str| s.parse::<usize>().map_err(|_| bad(n, "bad integer"));
                    let fl = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "bad number"));
                    let dims = [us(t[1])?, us(t[2])?, us(t[3])?];
                    let comps = us(t[4])?;
                    let periods = [fl(t[5])?, fl(t[6])?, fl(t[7])?];
                    let count = dims.iter().product::<usize>();
                    let mut data = Vec::with_capacity(count * comps);
                    for _ in 0..count {
                        let (m, l) = lines.next().ok_or_else(|| bad(n, "truncated field data"))?;
                        let before = data.len();
                        for v in l.split_whitespace() {
                            data.push(v.parse::<f64>().map_err(|_| bad(m, "bad number"))?);
                        }
                        if data.len() - before != comps {
                            return Err(bad(m, "wrong component count"));
                        }
                    }
                    set.fields.push(FieldBlock::new(t[0], dims, comps, periods, data)?);
                }
                Some("end") => {
                    ended = true;
                    break;
                }
                None => continue,
                Some(other) => return Err(bad(n, &format!("unexpected token {other}"))),
            }
        }
        if !ended {
            return Err(Error::Format("missing end marker".into()));
        }
        Ok(set)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
