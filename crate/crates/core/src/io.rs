//! CSV formats for assignments, cluster labels, outcomes and datasets.
//!
//! Every writer accepts a list of `key=value` provenance pairs that are
//! emitted as leading `#` comment lines; every reader skips `#` lines.

use std::fmt::Write as _;

use thiserror::Error;

use crate::design::{DesignError, EdgeTreatment};
use crate::graph::{ClusterAssignment, Graph, GraphError};
use crate::sim::Dataset;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    Csv { line: u64, msg: String },
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("line {line}, column {column:?}: bad value {value:?}")]
    BadValue { line: u64, column: String, value: String },
    #[error("{0}")]
    Coverage(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Design(#[from] DesignError),
}

/// A parsed CSV file with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    /// Rows paired with their 1-based line number in the source text.
    pub rows: Vec<(u64, Vec<String>)>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| IoError::Csv { line: 1, msg: e.to_string() })?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| IoError::Csv {
                line: e.position().map_or(0, |p| p.line()),
                msg: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            rows.push((line, record.iter().map(str::to_string).collect()));
        }
        Ok(Table { headers, rows })
    }

    pub fn index(&self, column: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == column)
    }

    fn require(&self, column: &str) -> Result<usize, IoError> {
        self.index(column).ok_or_else(|| IoError::MissingColumn(column.to_string()))
    }

    /// Parses every value in `column` with `parse`.
    pub fn column<T>(&self, column: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, IoError> {
        let idx = self.require(column)?;
        self.rows
            .iter()
            .map(|(line, row)| {
                parse(&row[idx]).ok_or_else(|| IoError::BadValue {
                    line: *line,
                    column: column.to_string(),
                    value: row[idx].clone(),
                })
            })
            .collect()
    }

    pub fn strings(&self, column: &str) -> Result<Vec<String>, IoError> {
        self.column(column, |s| Some(s.to_string()))
    }
}

fn parse_index(s: &str) -> Option<usize> {
    s.parse().ok()
}

fn parse_binary(s: &str) -> Option<u8> {
    match s {
        "0" => Some(0),
        "1" => Some(1),
        _ => None,
    }
}

fn parse_real(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Places `values` keyed by node id into a dense vector, requiring each of
/// `0..n` exactly once.
fn by_node<T: Copy>(ids: &[usize], values: &[T], n: usize, what: &str) -> Result<Vec<T>, IoError> {
    if ids.len() != n {
        return Err(IoError::Coverage(format!("{what} has {} rows but the graph has {n} nodes", ids.len())));
    }
    let mut out: Vec<Option<T>> = vec![None; n];
    for (&id, &v) in ids.iter().zip(values) {
        let slot = out
            .get_mut(id)
            .ok_or_else(|| IoError::Coverage(format!("{what}: node {id} out of range for {n} nodes")))?;
        if slot.replace(v).is_some() {
            return Err(IoError::Coverage(format!("{what}: node {id} listed twice")));
        }
    }
    Ok(out.into_iter().map(|v| v.expect("all ids seen")).collect())
}

/// Leading `# key=value` lines.
pub fn comment_lines(provenance: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in provenance {
        let _ = writeln!(out, "# {k}={v}");
    }
    out
}

pub fn write_assignment(z: &[u8], provenance: &[(&str, String)]) -> String {
    let mut out = comment_lines(provenance);
    out.push_str("unit,z\n");
    for (i, v) in z.iter().enumerate() {
        let _ = writeln!(out, "{i},{v}");
    }
    out
}

/// Reads `unit,z` (a `node` column is accepted in place of `unit`, so
/// dataset files can be passed directly).
pub fn read_assignment(text: &str, n: usize) -> Result<Vec<u8>, IoError> {
    let table = Table::parse(text)?;
    let key = if table.index("unit").is_some() { "unit" } else { "node" };
    by_node(&table.column(key, parse_index)?, &table.column("z", parse_binary)?, n, "assignment")
}

pub fn write_edge_assignment(w: &EdgeTreatment, provenance: &[(&str, String)]) -> String {
    let mut out = comment_lines(provenance);
    out.push_str("src,dst,w\n");
    for ((src, dst), v) in w.iter() {
        let _ = writeln!(out, "{src},{dst},{v}");
    }
    out
}

/// Reads `src,dst,w`; every graph edge must appear exactly once.
pub fn read_edge_assignment(text: &str, graph: &Graph) -> Result<EdgeTreatment, IoError> {
    let table = Table::parse(text)?;
    let src = table.column("src", parse_index)?;
    let dst = table.column("dst", parse_index)?;
    let w = table.column("w", parse_binary)?;
    let mut lookup = std::collections::HashMap::with_capacity(src.len());
    for ((&a, &b), &v) in src.iter().zip(&dst).zip(&w) {
        let key = if graph.is_directed() { (a, b) } else { (a.min(b), a.max(b)) };
        if lookup.insert(key, v).is_some() {
            return Err(IoError::Coverage(format!("edge assignment lists {a}-{b} twice")));
        }
    }
    if lookup.len() != graph.edge_count() {
        return Err(IoError::Coverage(format!(
            "edge assignment has {} rows but the graph has {} edges",
            lookup.len(),
            graph.edge_count()
        )));
    }
    let mut keys = Vec::with_capacity(graph.edge_count());
    let mut values = Vec::with_capacity(graph.edge_count());
    for e in graph.edges() {
        let key = if graph.is_directed() { (e.src, e.dst) } else { (e.src.min(e.dst), e.src.max(e.dst)) };
        let v = lookup
            .get(&key)
            .ok_or_else(|| IoError::Coverage(format!("edge {}-{} missing from edge assignment", e.src, e.dst)))?;
        keys.push((e.src, e.dst));
        values.push(*v);
    }
    Ok(EdgeTreatment::new(keys, values)?)
}

pub fn write_clusters(clusters: &ClusterAssignment, provenance: &[(&str, String)]) -> String {
    let mut out = comment_lines(provenance);
    out.push_str("node,label\n");
    for (i, l) in clusters.labels().iter().enumerate() {
        let _ = writeln!(out, "{i},{l}");
    }
    out
}

pub fn read_clusters(text: &str, n: usize) -> Result<ClusterAssignment, IoError> {
    let table = Table::parse(text)?;
    let labels = by_node(&table.column("node", parse_index)?, &table.column("label", parse_index)?, n, "clusters")?;
    Ok(ClusterAssignment::new(labels)?)
}

/// Reads a real-valued per-node column, keyed by `node` (or `unit`) if
/// present and by row order otherwise.
pub fn read_node_values(text: &str, column: &str, n: usize) -> Result<Vec<f64>, IoError> {
    let table = Table::parse(text)?;
    let values = table.column(column, parse_real)?;
    match ["node", "unit"].into_iter().find(|k| table.index(k).is_some()) {
        Some(key) => by_node(&table.column(key, parse_index)?, &values, n, column),
        None if values.len() == n => Ok(values),
        None => Err(IoError::Coverage(format!("{column} has {} rows but the graph has {n} nodes", values.len()))),
    }
}

/// `node,z,d,y`; `d` is left empty when the dataset has no behaviour.
pub fn write_dataset(data: &Dataset, provenance: &[(&str, String)]) -> String {
    let mut out = comment_lines(provenance);
    out.push_str("node,z,d,y\n");
    for i in 0..data.z.len() {
        let d = data.d.as_ref().map_or(String::new(), |d| d[i].to_string());
        let _ = writeln!(out, "{i},{},{d},{}", data.z[i], data.y[i]);
    }
    out
}

pub fn read_dataset(text: &str, n: usize) -> Result<Dataset, IoError> {
    let table = Table::parse(text)?;
    let nodes = table.column("node", parse_index)?;
    let z = by_node(&nodes, &table.column("z", parse_binary)?, n, "dataset")?;
    let y = by_node(&nodes, &table.column("y", parse_real)?, n, "dataset")?;
    let d = match table.index("d") {
        Some(idx) if table.rows.iter().any(|(_, r)| !r[idx].is_empty()) => {
            Some(by_node(&nodes, &table.column("d", parse_binary)?, n, "dataset")?)
        }
        _ => None,
    };
    Ok(Dataset { z, d, y })
}
