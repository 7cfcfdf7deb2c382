use std::fmt;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use spillover_core::design::Design;
use spillover_core::graph::{load_edge_list, Graph};
use spillover_core::io::{self, comment_lines};

/// Failure classes, mapped to exit codes 1 (usage) and 2 (data).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "error: {m}"),
        }
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Prefixes a data error with the file it came from.
pub fn in_file(path: &Path) -> impl FnOnce(io::IoError) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

pub fn data<E: fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

/// Tracks the config hash (resolved arguments plus the bytes of every input
/// read) and stamps it on artifacts.
pub struct Context {
    command: &'static str,
    hasher: Sha256,
    salt: Option<String>,
    seed: Option<u64>,
}

impl Context {
    pub fn new(command: &'static str, config: &impl Serialize) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(config).expect("arguments serialize"));
        Context { command, hasher, salt: None, seed: None }
    }

    pub fn record_salt(&mut self, salt: &str) {
        self.salt = Some(salt.to_string());
    }

    pub fn record_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.hasher.update((text.len() as u64).to_le_bytes());
        self.hasher.update(text.as_bytes());
        Ok(text)
    }

    pub fn config_hash(&self) -> String {
        let digest = self.hasher.clone().finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn provenance(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![("command", self.command.to_string()), ("config_hash", self.config_hash())];
        if let Some(s) = &self.salt {
            out.push(("salt", s.clone()));
        }
        if let Some(s) = self.seed {
            out.push(("seed", s.to_string()));
        }
        out
    }

    /// Writes `body` preceded by the provenance comment lines.
    pub fn write(&self, path: &Path, body: &str) -> Result<(), CliError> {
        let mut text = comment_lines(&self.provenance());
        text.push_str(body);
        fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn envelope(&self, results: serde_json::Value) -> String {
        #[derive(Serialize)]
        struct Envelope<'a> {
            command: &'a str,
            config_hash: String,
            results: serde_json::Value,
        }
        let env = Envelope { command: self.command, config_hash: self.config_hash(), results };
        serde_json::to_string_pretty(&env).expect("results serialize")
    }

    pub fn load_graph(&mut self, path: &Path) -> Result<Graph, CliError> {
        let text = self.read(path)?;
        load_edge_list(&text, None, false).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    /// Reads a design; a cluster file, if given, fills in the `clusters`
    /// field of cluster-level designs. With `strict`, supplying clusters for
    /// any other design is a usage error; otherwise they are ignored.
    pub fn load_design(
        &mut self,
        path: &Path,
        clusters: Option<&Path>,
        graph: &Graph,
        strict: bool,
    ) -> Result<Design, CliError> {
        let text = self.read(path)?;
        let bad = |e: &dyn fmt::Display| CliError::Data(format!("{}: {e}", path.display()));
        let Some(cpath) = clusters else {
            return Design::from_json(&text).map_err(|e| bad(&e));
        };
        let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(&e))?;
        let kind = value.get("type").and_then(|t| t.as_str()).unwrap_or_default();
        if !matches!(kind, "cluster_bernoulli" | "two_stage_uniform") {
            if strict {
                return Err(usage(format!("--clusters does not apply to design type {kind:?}")));
            }
            return Design::from_json(&text).map_err(|e| bad(&e));
        }
        let ctext = self.read(cpath)?;
        let labels = io::read_clusters(&ctext, graph.node_count()).map_err(in_file(cpath))?;
        value["clusters"] = serde_json::to_value(labels).expect("labels serialize");
        Design::from_json(&value.to_string()).map_err(|e| bad(&e))
    }
}

/// Parses `a,b,c` or `start:stop:step` (inclusive of `stop` up to rounding).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || usage(format!("bad grid {spec:?}: expected a comma list or start:stop:step"));
    let parts: Vec<&str> = spec.split(':').collect();
    let grid: Vec<f64> = match parts.as_slice() {
        [start, stop, step] => {
            let (a, b, s): (f64, f64, f64) = (
                start.trim().parse().map_err(|_| bad())?,
                stop.trim().parse().map_err(|_| bad())?,
                step.trim().parse().map_err(|_| bad())?,
            );
            if !(s > 0.0) || b < a {
                return Err(bad());
            }
            let count = ((b - a) / s + 1e-9).floor() as usize + 1;
            if count > 100_000 {
                return Err(bad());
            }
            // round to the step's precision so 0.1-steps print cleanly
            (0..count).map(|i| ((a + i as f64 * s) * 1e12).round() / 1e12).collect()
        }
        [_] => spec.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_, _>>()?,
        _ => return Err(bad()),
    };
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0, 0.5,2").unwrap(), vec![0.0, 0.5, 2.0]);
        assert_eq!(parse_grid("0:1:0.25").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_grid("-1:1:0.1").unwrap().len(), 21);
        assert_eq!(parse_grid("-1:1:0.1").unwrap()[3], -0.7);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("a,b").is_err());
        assert!(parse_grid("").is_err());
    }

    #[test]
    fn hash_tracks_inputs() {
        let dir = std::env::temp_dir().join(format!("spillover-ctx-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let (a, b) = (dir.join("a"), dir.join("b"));
        fs::write(&a, "x").unwrap();
        fs::write(&b, "y").unwrap();
        let hash_of = |p: &Path| {
            let mut c = Context::new("t", &1);
            c.read(p).unwrap();
            c.config_hash()
        };
        assert_ne!(hash_of(&a), hash_of(&b));
        assert_eq!(hash_of(&a), hash_of(&a));
        assert_eq!(hash_of(&a).len(), 16);
        fs::remove_dir_all(dir).unwrap();
    }
}
