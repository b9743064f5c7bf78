use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::grid::{Discretization, Field};

use super::PipelineError;

/// Writes through a sibling temporary file and a rename, so readers never see
/// a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let io = |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = std::fs::File::create(&tmp).map_err(io)?;
        f.write_all(bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(io)
}

/// `t,u_1,…,u_N`, one row per interior node.
pub fn solution_csv(u: &Field<f64>, grid: &Discretization<f64>) -> String {
    let mut s = String::from("t");
    for k in 1..=u.dim() {
        let _ = write!(s, ",u_{k}");
    }
    s.push('\n');
    for (i, &t) in grid.nodes.iter().enumerate() {
        let _ = write!(s, "{t:.16e}");
        for &x in u.at(i) {
            let _ = write!(s, ",{x:.16e}");
        }
        s.push('\n');
    }
    s
}
