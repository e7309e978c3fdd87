//! File formats and filesystem helpers.

mod batch;
mod config;
mod folds;
mod plot;
mod record;

pub use batch::{batch_from_bytes, batch_to_bytes, read_batch, write_batch, BATCH_MAGIC, BATCH_VERSION};
pub use config::{from_toml, load_config, save_config, to_toml, RunConfig};
pub use folds::{make_folds, FoldPlan, FoldUnit, DEFAULT_FOLDS};
pub use plot::{emit_plot, render_plot};
pub use record::{
    peaks_from_text, peaks_to_text, read_record, write_record, RecordFile, RecordFormat, RECORD_MAGIC, RECORD_VERSION,
};

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Writes `bytes` to a sibling temporary file, syncs it and renames it over
/// `path`, so readers never see a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}
