use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliResult;

/// Everything needed to re-run a command: the argument vector, the seeds it
/// resolved to, the thread count and the code version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub threads: Option<usize>,
    pub seeds: BTreeMap<String, u64>,
    pub outputs: Vec<PathBuf>,
    /// Verbatim experiment file for `run`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
}

impl Manifest {
    pub fn new(command: &str, argv: Vec<String>, threads: Option<usize>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            argv,
            threads,
            seeds: BTreeMap::new(),
            outputs: Vec::new(),
            config: None,
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.into(), value);
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Writes to `explicit`, else next to the first output, else to
    /// `<command>.manifest.json` in the working directory.
    pub fn write(&self, explicit: Option<&Path>) -> CliResult<PathBuf> {
        let path = match (explicit, self.outputs.first()) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(out)) => {
                let mut s = out.as_os_str().to_owned();
                s.push(".manifest.json");
                PathBuf::from(s)
            }
            (None, None) => PathBuf::from(format!("{}.manifest.json", self.command)),
        };
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| crate::CliError::Usage(format!("{}: {e}", path.display())))
    }
}
