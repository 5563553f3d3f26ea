//! Versioned text checkpoints made of named, shaped blocks.
//!
//! ```text
//! ATMARL-CKPT v1
//! block qtable.priority.0 2 4096 3
//! 0.0000000000000000e0 ...
//! end
//! ```
//!
//! Values are printed with 17 significant digits, so a round trip is exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const HEADER: &str = "ATMARL-CKPT v1";
const VALUES_PER_LINE: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Ordered collection of named blocks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BlockSet {
    blocks: BTreeMap<String, Block>,
    order: Vec<String>,
}

impl BlockSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) {
        let name = name.into();
        debug_assert_eq!(shape.iter().product::<usize>(), values.len(), "block {name}");
        if self.blocks.insert(name.clone(), Block { shape, values }).is_none() {
            self.order.push(name);
        }
    }

    pub fn names(&self) -> &[String] {
        &self.order
    }

    pub fn get(&self, name: &str) -> Option<&Block> {
        self.blocks.get(name)
    }

    /// Values of `name`, which must exist with exactly `shape`.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<&[f64]> {
        let block = self.blocks.get(name).ok_or_else(|| Error::Shape {
            what: format!("checkpoint block `{name}`"),
            expected: format!("{shape:?}"),
            got: "missing".into(),
        })?;
        if block.shape != shape {
            return Err(Error::Shape {
                what: format!("checkpoint block `{name}`"),
                expected: format!("{shape:?}"),
                got: format!("{:?}", block.shape),
            });
        }
        Ok(&block.values)
    }

    /// Values of `name` with its stored shape; the block must exist.
    pub fn expect_any(&self, name: &str) -> Result<&Block> {
        self.blocks.get(name).ok_or_else(|| Error::Shape {
            what: format!("checkpoint block `{name}`"),
            expected: "present".into(),
            got: "missing".into(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        for name in &self.order {
            let block = &self.blocks[name];
            let _ = write!(out, "block {name} {}", block.shape.len());
            for d in &block.shape {
                let _ = write!(out, " {d}");
            }
            out.push('\n');
            for chunk in block.values.chunks(VALUES_PER_LINE) {
                let line: Vec<String> = chunk.iter().map(|v| format!("{v:.16e}")).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Truncated("empty checkpoint".into()))?;
        if header.trim_end() != HEADER {
            return Err(Error::VersionMismatch {
                expected: HEADER.into(),
                found: header.chars().take(40).collect(),
            });
        }
        let mut set = BlockSet::new();
        loop {
            let line = lines
                .next()
                .ok_or_else(|| Error::Truncated("missing `end` marker".into()))?
                .trim();
            if line == "end" {
                return Ok(set);
            }
            let mut parts = line.split_whitespace();
            let (Some("block"), Some(name), Some(rank)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Truncated(format!("malformed block header `{line}`")));
            };
            let rank: usize = rank
                .parse()
                .map_err(|_| Error::Truncated(format!("bad rank in block `{name}`")))?;
            let shape: Vec<usize> = parts
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Truncated(format!("bad shape in block `{name}`")))?;
            if shape.len() != rank {
                return Err(Error::Truncated(format!("block `{name}` declares rank {rank} but lists {shape:?}")));
            }
            let count: usize = shape.iter().product();
            let mut values = Vec::with_capacity(count);
            while values.len() < count {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::Truncated(format!("block `{name}` ends after {} of {count} values", values.len())))?;
                for tok in line.split_whitespace() {
                    let v: f64 = tok
                        .parse()
                        .map_err(|_| Error::Truncated(format!("block `{name}`: unreadable value `{tok}`")))?;
                    values.push(v);
                }
            }
            if values.len() != count {
                return Err(Error::Truncated(format!("block `{name}` holds {} values, expected {count}", values.len())));
            }
            set.insert(name.to_string(), shape, values);
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingCheckpoint(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> BlockSet {
        let mut set = BlockSet::new();
        set.insert("a.weight", vec![2, 3], vec![0.1, -2.5, 1e-300, f64::MAX, 3.0, -0.0]);
        set.insert("b", vec![1], vec![std::f64::consts::PI]);
        set
    }

    #[test]
    fn round_trip() {
        let set = sample();
        let back = BlockSet::parse(&set.to_text()).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.names(), ["a.weight", "b"]);
    }

    #[test]
    fn distinct_errors() {
        let text = sample().to_text();
        let wrong = text.replacen("v1", "v2", 1);
        assert!(matches!(BlockSet::parse(&wrong), Err(Error::VersionMismatch { .. })));
        let cut = &text[..text.len() / 2];
        assert!(matches!(BlockSet::parse(cut), Err(Error::Truncated(_))));
        let no_end = text.replace("end\n", "");
        assert!(matches!(BlockSet::parse(&no_end), Err(Error::Truncated(_))));
        let set = BlockSet::parse(&text).unwrap();
        match set.expect("c", &[1]) {
            Err(Error::Shape { what, .. }) => assert!(what.contains("`c`")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(set.expect("b", &[2]), Err(Error::Shape { .. })));
    }

    proptest! {
        #[test]
        fn any_finite_values_round_trip_bit_exactly(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..50)) {
            let mut set = BlockSet::new();
            set.insert("x", vec![values.len()], values.clone());
            let back = BlockSet::parse(&set.to_text()).unwrap();
            let got = &back.get("x").unwrap().values;
            prop_assert!(got.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
