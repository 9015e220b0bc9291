//! CSV ingestion, deterministic JSON and model persistence.
//!
//! Reals are written with 17 significant digits, which round-trips every
//! `f64` exactly, and object keys come out in a fixed order, so identical
//! models serialize to identical bytes.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::Dataset;
use crate::partition::{NodeId, Partition};
use crate::trees::{Forest, ForestMeta, LeafFit, ValidTree};

pub const MODEL_FORMAT: &str = "adaconc-forest";
pub const MODEL_VERSION: u32 = 1;

/// Compact layout (the trait defaults) with exact reals.
struct ExactFloats;

impl Formatter for ExactFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value == value.trunc() && value.abs() < 1e15 {
            // keep a decimal point so integral reals still read back as floats
            write!(writer, "{value:.1}")
        } else {
            write!(writer, "{value:.16e}")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Compact JSON with 17-significant-digit reals and a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)?.read_to_string(&mut s)?;
    Ok(s)
}

/// Parses CSV text with header `x0,...,x{d-1},y`. Feature values must lie in
/// `[0,1]` unless `rank_transform` is set, in which case each column is
/// replaced by its normalized ranks. `m` overrides the response bound.
pub fn parse_csv(text: &str, rank_transform: bool, m: Option<f64>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    if headers.is_empty() {
        return Err(Error::InvalidDataset("empty file: missing header row".into()));
    }
    let d = headers.len() - 1;
    if d == 0 {
        return Err(Error::InvalidDataset("need at least one feature column before y".into()));
    }
    for (j, h) in headers.iter().enumerate().take(d) {
        if h.trim() != format!("x{j}") {
            return Err(Error::InvalidDataset(format!(
                "header column {} is '{}', expected 'x{j}'",
                j + 1,
                h
            )));
        }
    }
    if headers[d].trim() != "y" {
        return Err(Error::InvalidDataset(format!(
            "last header column is '{}', expected 'y'",
            &headers[d]
        )));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| Error::Csv(format!("row {row}: {e}")))?;
        if rec.len() != d + 1 {
            return Err(Error::InvalidDataset(format!(
                "row {row}: expected {} columns, found {}",
                d + 1,
                rec.len()
            )));
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::InvalidDataset(format!("row {row}, column {}: '{field}' is not a number", c + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidDataset(format!("row {row}, column {}: non-finite value", c + 1)));
            }
            if c < d {
                if !rank_transform && !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidDataset(format!(
                        "row {row}, column {} (x{c}): {v} lies outside [0,1]",
                        c + 1
                    )));
                }
                x.push(v);
            } else {
                y.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(Error::InvalidDataset("no data rows".into()));
    }
    if rank_transform {
        Dataset::from_raw_ranked(d, &x, y, m)
    } else {
        Dataset::new(d, x, y, m)
    }
}

pub fn load_csv(path: &Path, rank_transform: bool, m: Option<f64>) -> Result<Dataset> {
    parse_csv(&read_to_string(path)?, rank_transform, m)
}

/// Reads feature rows only (header `x0,...` with an optional trailing `y`).
pub fn load_feature_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    let d = headers.iter().take_while(|h| h.trim().starts_with('x')).count();
    if d == 0 {
        return Err(Error::InvalidDataset("no feature columns (x0, x1, ...) in header".into()));
    }
    let mut rows = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(format!("row {}: {e}", r + 1)))?;
        let row: Vec<f64> = rec
            .iter()
            .take(d)
            .enumerate()
            .map(|(c, f)| {
                f.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidDataset(format!("row {}, column {}: '{f}' is not a number", r + 1, c + 1))
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != d {
            return Err(Error::InvalidDataset(format!("row {}: expected {d} feature columns", r + 1)));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafDoc {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub count: usize,
    pub mean: f64,
}

/// Recursive tree document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeDoc {
    Split {
        axis: usize,
        tau: f64,
        children: Box<[NodeDoc; 2]>,
    },
    Leaf {
        leaf: LeafDoc,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format: String,
    pub version: u32,
    #[serde(rename = "B")]
    pub b: usize,
    pub d: usize,
    pub k: usize,
    pub alpha: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub seed: u64,
    pub n: usize,
    pub max_attempts_per_node: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub header: ModelHeader,
    pub trees: Vec<NodeDoc>,
    /// Free-form provenance such as the resolved command-line config.
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub config: Value,
}

fn node_doc(tree: &ValidTree, id: NodeId) -> NodeDoc {
    let node = tree.partition().node(id);
    match node.split {
        Some(s) => NodeDoc::Split {
            axis: s.axis,
            tau: s.threshold,
            children: Box::new([node_doc(tree, s.lower), node_doc(tree, s.upper)]),
        },
        None => {
            let fit = tree.leaf_fit(id).expect("every leaf of a fitted tree has a fit");
            NodeDoc::Leaf {
                leaf: LeafDoc {
                    lo: node.region.lo().to_vec(),
                    hi: node.region.hi().to_vec(),
                    count: fit.count,
                    mean: fit.mean,
                },
            }
        }
    }
}

pub fn tree_doc(tree: &ValidTree) -> NodeDoc {
    node_doc(tree, Partition::root())
}

pub fn forest_doc(forest: &Forest, config: Value) -> ModelDoc {
    let meta = forest.meta();
    ModelDoc {
        header: ModelHeader {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            b: forest.len(),
            d: meta.d,
            k: meta.k,
            alpha: meta.alpha,
            m: meta.m,
            seed: meta.seed,
            n: meta.n,
            max_attempts_per_node: meta.max_attempts_per_node,
        },
        trees: forest.trees().iter().map(tree_doc).collect(),
        config,
    }
}

fn rebuild(
    doc: &NodeDoc,
    id: NodeId,
    partition: &mut Partition,
    leaves: &mut Vec<(NodeId, LeafFit)>,
) -> Result<()> {
    match doc {
        NodeDoc::Split { axis, tau, children } => {
            let (lower, upper) = partition.split(id, *axis, *tau)?;
            rebuild(&children[0], lower, partition, leaves)?;
            rebuild(&children[1], upper, partition, leaves)
        }
        NodeDoc::Leaf { leaf } => {
            let region = &partition.node(id).region;
            if region.lo() != leaf.lo.as_slice() || region.hi() != leaf.hi.as_slice() {
                return Err(Error::Format(format!("leaf {id} bounds disagree with its split path")));
            }
            leaves.push((
                id,
                LeafFit {
                    count: leaf.count,
                    mean: leaf.mean,
                },
            ));
            Ok(())
        }
    }
}

pub fn tree_from_doc(doc: &NodeDoc, d: usize, alpha: f64, k: usize) -> Result<ValidTree> {
    let mut partition = Partition::new(d, alpha, k)?;
    let mut leaves = Vec::new();
    rebuild(doc, Partition::root(), &mut partition, &mut leaves)?;
    ValidTree::from_parts(partition, leaves)
}

pub fn forest_from_doc(doc: &ModelDoc) -> Result<Forest> {
    let h = &doc.header;
    if h.format != MODEL_FORMAT {
        return Err(Error::Format(format!("unknown model format '{}'", h.format)));
    }
    if h.version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {}", h.version)));
    }
    if h.b != doc.trees.len() {
        return Err(Error::Format(format!("header says B = {} but {} trees follow", h.b, doc.trees.len())));
    }
    let trees = doc
        .trees
        .iter()
        .map(|t| tree_from_doc(t, h.d, h.alpha, h.k))
        .collect::<Result<Vec<_>>>()?;
    Forest::new(
        trees,
        ForestMeta {
            n: h.n,
            d: h.d,
            k: h.k,
            alpha: h.alpha,
            m: h.m,
            seed: h.seed,
            max_attempts_per_node: h.max_attempts_per_node,
        },
    )
}

pub fn forest_to_json(forest: &Forest, config: Value) -> Result<String> {
    to_json_string(&forest_doc(forest, config))
}

pub fn forest_from_json(text: &str) -> Result<Forest> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    forest_from_doc(&doc)
}

pub fn save_forest(path: &Path, forest: &Forest, config: Value) -> Result<()> {
    std::fs::write(path, forest_to_json(forest, config)?)?;
    Ok(())
}

pub fn load_forest(path: &Path) -> Result<Forest> {
    forest_from_json(&read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        let values = vec![0.1, 1.0 / 3.0, 1e-300, 2.5, 0.0, -7.0, f64::MIN_POSITIVE, 123_456_789.123_456_79];
        let text = to_json_string(&values).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, values);
        assert!(text.contains("2.5") && text.contains("-7.0"));
    }

    #[test]
    fn csv_parsing() {
        let d = parse_csv("x0,x1,y\n0.1,0.2,1\n0.3,0.4,-2\n", false, None).unwrap();
        assert_eq!((d.n(), d.d(), d.m()), (2, 2, 2.0));
        let err = parse_csv("x0,y\n0.5,1\n1.5,2\n", false, None).unwrap_err();
        assert!(err.to_string().contains("row 2") && err.to_string().contains("column 1"), "{err}");
        assert!(parse_csv("x0,y\n1.5,2\n-3,1\n", true, None).is_ok());
        assert!(parse_csv("", false, None).is_err());
        assert!(parse_csv("x0,y\n", false, None).is_err());
        assert!(parse_csv("a,y\n0.5,1\n", false, None).is_err());
        assert!(parse_csv("x0,y\n0.5\n", false, None).is_err());
    }

    #[test]
    fn model_round_trip() {
        let data = parse_csv("x0,x1,y\n0.1,0.9,1\n0.2,0.8,2\n0.6,0.3,3\n0.7,0.1,4\n", false, None).unwrap();
        let mut p = Partition::new(2, 0.25, 2).unwrap();
        p.split(Partition::root(), 0, 0.2).unwrap();
        let tree = ValidTree::fit(p, &data).unwrap();
        let forest = Forest::new(
            vec![tree],
            ForestMeta {
                n: 4,
                d: 2,
                k: 2,
                alpha: 0.25,
                m: 4.0,
                seed: 1,
                max_attempts_per_node: 10,
            },
        )
        .unwrap();
        let text = forest_to_json(&forest, Value::Null).unwrap();
        let back = forest_from_json(&text).unwrap();
        assert_eq!(back, forest);
        assert_eq!(forest_to_json(&back, Value::Null).unwrap(), text);
        assert!(text.contains("\"children\"") && text.contains("\"leaf\""));
    }

    #[test]
    fn corrupt_models_are_rejected() {
        assert!(forest_from_json("{}").is_err());
        let bad = r#"{"header":{"format":"other","version":1,"B":1,"d":1,"k":1,"alpha":0.25,"M":1.0,"seed":0,"n":1,"max_attempts_per_node":10},"trees":[{"leaf":{"lo":[0.0],"hi":[1.0],"count":1,"mean":0.0}}]}"#;
        assert!(matches!(forest_from_json(bad), Err(Error::Format(_))));
        let ok = bad.replace("other", MODEL_FORMAT);
        assert!(forest_from_json(&ok).is_ok());
        let moved = ok.replace("\"hi\":[1.0]", "\"hi\":[0.5]");
        assert!(matches!(forest_from_json(&moved), Err(Error::Format(_))));
    }
}
