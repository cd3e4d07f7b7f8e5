//! Run manifests: the inputs that fully determine a command's outputs.

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config: String,
    /// Git-style object hash: SHA-256 of `blob <len>\0<content>`.
    pub config_hash: String,
    pub seed: u64,
    pub out: String,
    /// Command-line overrides of configured values, as `key=value`.
    pub overrides: Vec<String>,
}

impl RunManifest {
    pub fn new(
        subcommand: &str,
        config: &str,
        config_text: &str,
        seed: u64,
        out: &str,
        overrides: Vec<String>,
    ) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            config: config.into(),
            config_hash: blob_hash(config_text.as_bytes()),
            seed,
            out: out.into(),
            overrides,
        }
    }

    /// The manifest as `key: value` lines, for comment headers.
    pub fn lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("tool: {} {}", self.tool, self.version),
            format!("subcommand: {}", self.subcommand),
            format!("config: {}", self.config),
            format!("config_hash: sha256:{}", self.config_hash),
            format!("seed: {}", self.seed),
            format!("out: {}", self.out),
        ];
        if !self.overrides.is_empty() {
            lines.push(format!("overrides: {}", self.overrides.join(" ")));
        }
        lines
    }

    /// The manifest as a `# `-prefixed comment block.
    pub fn comment_header(&self) -> String {
        self.lines().iter().map(|l| format!("# {l}\n")).collect()
    }
}

pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
