//! File writers. Every CSV starts with `#`-prefixed metadata lines, every
//! JSON report carries a `meta` object, and every JSON-lines file starts
//! with a `{"meta": …}` record.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "batchqn";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
}

/// Hex SHA-256 of the config's canonical JSON encoding.
pub fn config_hash<C: Serialize>(config: &C) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

impl Metadata {
    pub fn new<C: Serialize>(experiment: &str, config: &C, seed: u64) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            experiment: experiment.to_string(),
            config_hash: config_hash(config),
            seed,
        }
    }

    pub fn csv_header(&self) -> String {
        format!(
            "# tool={} version={}\n# experiment={}\n# config_hash={}\n# seed={}\n",
            self.tool, self.version, self.experiment, self.config_hash, self.seed
        )
    }
}

/// Shortest round-trip decimal; empty for NaN.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn create(path: &Path) -> io::Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

pub fn write_csv(
    path: &Path,
    meta: &Metadata,
    columns: &[&str],
    rows: &[Vec<String>],
) -> io::Result<()> {
    let mut w = create(path)?;
    w.write_all(meta.csv_header().as_bytes())?;
    writeln!(w, "{}", columns.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    meta: &'a Metadata,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, meta: &Metadata, body: &T) -> io::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &Wrapped { meta, body })?;
    w.write_all(b"\n")?;
    w.flush()
}

pub struct JsonLines {
    w: BufWriter<fs::File>,
}

impl JsonLines {
    pub fn create(path: &Path, meta: &Metadata) -> io::Result<Self> {
        let mut w = create(path)?;
        serde_json::to_writer(&mut w, &serde_json::json!({ "meta": meta }))?;
        w.write_all(b"\n")?;
        Ok(Self { w })
    }

    pub fn push<T: Serialize>(&mut self, record: &T) -> io::Result<()> {
        serde_json::to_writer(&mut self.w, record)?;
        self.w.write_all(b"\n")
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash(&serde_json::json!({"b": 3, "d": 5}));
        assert_eq!(a, config_hash(&serde_json::json!({"b": 3, "d": 5})));
        assert_ne!(a, config_hash(&serde_json::json!({"b": 3, "d": 6})));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x/out.csv");
        let meta = Metadata::new("test", &1u8, 7);
        write_csv(&path, &meta, &["a", "b"], &[vec!["1".into(), fmt_f64(0.5)]]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# tool=batchqn"));
        assert!(text.ends_with("a,b\n1,0.5\n"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1e-300, -3.25, 123456789.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(f64::NAN), "");
    }
}
