//! On-disk graph formats.
//!
//! * edges: CSV `src,dst`, optional header
//! * features: CSV `node_id,f0,...` or binary `GIDV` + u32 n + u32 d + n*d f32, all little-endian
//! * labels: CSV `node_id,label`
//! * splits: JSON object of id arrays

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Graph, NodeSet, Splits};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"GIDV";

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitsFile {
    #[serde(default)]
    train: Vec<i64>,
    #[serde(default)]
    train_labeled: Vec<i64>,
    #[serde(default)]
    val: Vec<i64>,
    #[serde(default)]
    val_labeled: Vec<i64>,
    #[serde(default)]
    test: Vec<i64>,
    #[serde(default)]
    test_targets: Vec<i64>,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses integer CSV rows, skipping a leading header line if its first
/// field is not numeric.
fn csv_records(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = read_to_string(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if rec.is_empty() || (rec.len() == 1 && rec[0].is_empty()) {
            continue;
        }
        if i == 0 && rec[0].parse::<i64>().is_err() {
            continue;
        }
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok(rows)
}

fn parse_int(field: &str, path: &Path) -> Result<i64> {
    field
        .parse::<i64>()
        .map_err(|_| Error::Data(format!("{}: expected integer, got {field:?}", path.display())))
}

/// Reads a feature table, returning external ids (row order) and the matrix.
pub fn read_features(path: &Path) -> Result<(Vec<i64>, Array2<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() >= 4 && &bytes[..4] == FEATURE_MAGIC {
        if bytes.len() < 12 {
            return Err(Error::Data(format!("{}: truncated header", path.display())));
        }
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        if body.len() != n * d * 4 {
            return Err(Error::Dimension(format!(
                "{}: expected {} payload bytes for {n}x{d}, found {}",
                path.display(),
                n * d * 4,
                body.len()
            )));
        }
        let vals: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let x = Array2::from_shape_vec((n, d), vals)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        return Ok(((0..n as i64).collect(), x));
    }

    let rows = csv_records(path)?;
    let d = rows.first().map_or(0, |r| r.len().saturating_sub(1));
    let mut ids = Vec::with_capacity(rows.len());
    let mut vals = Vec::with_capacity(rows.len() * d);
    for row in &rows {
        if row.len() != d + 1 {
            return Err(Error::Dimension(format!(
                "{}: row for node {} has {} features, expected {d}",
                path.display(),
                row[0],
                row.len() - 1
            )));
        }
        ids.push(parse_int(&row[0], path)?);
        for f in &row[1..] {
            vals.push(f.parse::<f32>().map_err(|_| {
                Error::Data(format!("{}: bad feature value {f:?}", path.display()))
            })?);
        }
    }
    let x = Array2::from_shape_vec((ids.len(), d), vals)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    Ok((ids, x))
}

/// Maps external ids to dense row indices. Ids `0..n` in any order map to
/// themselves; anything else is remapped in ascending id order.
struct IdMap {
    dense: HashMap<i64, usize>,
    n: usize,
}

impl IdMap {
    fn get(&self, id: i64) -> Result<usize> {
        self.dense.get(&id).copied().ok_or(Error::NodeOutOfRange {
            id,
            n_nodes: self.n,
        })
    }
}

pub fn load_graph(
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
    split_path: &Path,
) -> Result<Graph> {
    let (ids, raw) = read_features(feature_path)?;
    let n = ids.len();

    let mut sorted = ids.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Data(format!(
            "{}: duplicate node ids",
            feature_path.display()
        )));
    }
    let is_dense = sorted.iter().enumerate().all(|(i, &id)| id == i as i64);
    let external: Vec<i64> = if is_dense {
        (0..n as i64).collect()
    } else {
        sorted.clone()
    };
    let map = IdMap {
        dense: external.iter().enumerate().map(|(i, &id)| (id, i)).collect(),
        n,
    };
    let mut features = Array2::zeros(raw.dim());
    for (row, &id) in ids.iter().enumerate() {
        features.row_mut(map.get(id)?).assign(&raw.row(row));
    }

    let mut edges = Vec::new();
    for row in csv_records(edge_path)? {
        if row.len() < 2 {
            return Err(Error::Data(format!(
                "{}: edge row needs two columns",
                edge_path.display()
            )));
        }
        let u = map.get(parse_int(&row[0], edge_path)?)?;
        let v = map.get(parse_int(&row[1], edge_path)?)?;
        edges.push((u, v));
    }

    let labels = match label_path {
        Some(p) => {
            let mut ls = vec![None; n];
            for row in csv_records(p)? {
                if row.len() < 2 {
                    return Err(Error::Data(format!("{}: label row needs two columns", p.display())));
                }
                let v = map.get(parse_int(&row[0], p)?)?;
                let c = parse_int(&row[1], p)?;
                if c < 0 {
                    return Err(Error::Data(format!("label out of range: {c} for node {}", row[0])));
                }
                ls[v] = Some(c as usize);
            }
            Some(ls)
        }
        None => None,
    };

    let sf: SplitsFile = serde_json::from_str(&read_to_string(split_path)?)
        .map_err(|e| Error::Data(format!("{}: {e}", split_path.display())))?;
    let to_set = |ids: &[i64]| -> Result<NodeSet> {
        ids.iter().map(|&id| map.get(id)).collect::<Result<Vec<_>>>().map(NodeSet::new)
    };
    let splits = Splits {
        train: to_set(&sf.train)?,
        train_labeled: to_set(&sf.train_labeled)?,
        val: to_set(&sf.val)?,
        val_labeled: to_set(&sf.val_labeled)?,
        test: to_set(&sf.test)?,
        test_targets: to_set(&sf.test_targets)?,
    };

    Ok(Graph::new(features, &edges, labels, splits)?.with_external_ids(external))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_edges_csv(g: &Graph, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let res = (|| {
        writeln!(w, "src,dst")?;
        for (u, v) in g.edges() {
            writeln!(w, "{},{}", g.external_id(u), g.external_id(v))?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

pub fn write_features_bin(g: &Graph, path: &Path) -> Result<()> {
    let x = g.features();
    let mut buf = Vec::with_capacity(12 + x.len() * 4);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&(x.nrows() as u32).to_le_bytes());
    buf.extend_from_slice(&(x.ncols() as u32).to_le_bytes());
    for v in x.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_features_csv(g: &Graph, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let res = (|| {
        let header: Vec<String> = (0..g.feature_dim()).map(|j| format!("f{j}")).collect();
        writeln!(w, "node_id,{}", header.join(","))?;
        for v in 0..g.n_nodes() {
            let row: Vec<String> = g.feature_row(v).iter().map(|x| x.to_string()).collect();
            writeln!(w, "{},{}", g.external_id(v), row.join(","))?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

pub fn write_labels_csv(g: &Graph, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let res = (|| {
        writeln!(w, "node_id,label")?;
        for v in 0..g.n_nodes() {
            if let Some(c) = g.label(v) {
                writeln!(w, "{},{c}", g.external_id(v))?;
            }
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

pub fn write_splits_json(g: &Graph, path: &Path) -> Result<()> {
    let s = g.splits();
    let ext = |set: &NodeSet| set.iter().map(|v| g.external_id(v)).collect::<Vec<_>>();
    let file = SplitsFile {
        train: ext(&s.train),
        train_labeled: ext(&s.train_labeled),
        val: ext(&s.val),
        val_labeled: ext(&s.val_labeled),
        test: ext(&s.test),
        test_targets: ext(&s.test_targets),
    };
    let text = serde_json::to_string_pretty(&file).expect("splits serialize");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
