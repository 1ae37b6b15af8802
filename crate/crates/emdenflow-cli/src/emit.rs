use std::io::Write as _;
use std::path::{Path, PathBuf};

/// 17 significant digits: enough to reproduce any f64 bit-exactly.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the complete artifact in one call (or to stdout); content is
/// assembled in memory first so a failing path never leaves a partial file.
pub fn write_out(out: Option<&Path>, content: &str) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, content),
        None => std::io::stdout().write_all(content.as_bytes()),
    }
}

/// Sidecar path: the main output path with ".json" appended (so
/// "run.csv" gets "run.csv.json").
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.to_path_buf().into_os_string();
    s.push(".json");
    PathBuf::from(s)
}
