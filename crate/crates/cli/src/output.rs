//! Output tables and summaries with provenance.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::{Failure, Outcome};

pub const TOOL: &str = "follownet";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RNG: &str = "chacha8";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_digest: String,
    pub seed: u64,
    pub rng: &'static str,
}

impl Provenance {
    pub fn new(config_digest: String, seed: u64) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            config_digest,
            seed,
            rng: RNG,
        }
    }

    /// First line of every table; readers skip it as a comment.
    pub fn header_line(&self) -> String {
        format!(
            "# {} {} config={} seed={} rng={}",
            self.tool, self.version, self.config_digest, self.seed, self.rng
        )
    }
}

/// Output directory plus the provenance stamped on everything in it.
#[derive(Debug, Clone)]
pub struct OutDir {
    pub root: PathBuf,
    pub provenance: Provenance,
}

pub type Table = csv::Writer<BufWriter<File>>;

impl OutDir {
    pub fn new(root: PathBuf, provenance: Provenance) -> Outcome<Self> {
        std::fs::create_dir_all(&root).map_err(|e| Failure::io(&root, e))?;
        Ok(Self { root, provenance })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Opens `name` (relative to the root) and writes the provenance line
    /// and the column header.
    pub fn table(&self, name: &str, columns: &[&str]) -> Outcome<Table> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        }
        let file = File::create(&path).map_err(|e| Failure::io(&path, e))?;
        let mut buf = BufWriter::new(file);
        writeln!(buf, "{}", self.provenance.header_line()).map_err(|e| Failure::io(&path, e))?;
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(columns)?;
        Ok(w)
    }

    /// Writes `<stage>.json` with the provenance block and `body`.
    pub fn summary<T: Serialize>(&self, stage: &str, body: &T) -> Outcome<PathBuf> {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            stage: &'a str,
            provenance: &'a Provenance,
            #[serde(flatten)]
            body: &'a T,
        }
        let path = self.path(&format!("{stage}.json"));
        let doc = Doc {
            stage,
            provenance: &self.provenance,
            body,
        };
        let mut text = serde_json::to_string_pretty(&doc)
            .map_err(|e| Failure::input(format!("serializing {stage} summary: {e}")))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Failure::io(&path, e))?;
        Ok(path)
    }
}

pub fn finish(mut w: Table) -> Outcome<()> {
    w.flush().map_err(|e| Failure::input(format!("writing table: {e}")))
}

/// Shortest round-trip decimal form; empty for missing values.
pub fn num(x: Option<f64>) -> String {
    x.map(|v| format!("{v}")).unwrap_or_default()
}

pub fn sha256_file(path: &Path) -> Outcome<String> {
    let mut f = File::open(path).map_err(|e| Failure::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Failure::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Provenance line of an existing table, if it has one.
pub fn read_header_line(path: &Path) -> Option<String> {
    let text = std::fs::read(path).ok()?;
    let first = text.split(|&b| b == b'\n').next()?;
    let line = String::from_utf8_lossy(first).into_owned();
    line.starts_with('#').then_some(line)
}
