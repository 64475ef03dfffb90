//! Readers and writers for MetaImage volumes and TIFF masks/images.

pub mod mha;
pub mod tiff;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Default ceiling on any allocation sized from a file header (4 GiB).
pub const DEFAULT_MAX_BYTES: u64 = 4 << 30;

/// Writes `bytes` to a sibling temporary file and renames it over `path`,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Input(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::write(path, e));
    }
    Ok(())
}

pub(crate) fn read_file(path: &Path, cap: u64) -> Result<Vec<u8>> {
    let len = fs::metadata(path).map_err(|e| Error::read(path, e))?.len();
    if len > cap.saturating_add(1 << 20) {
        return Err(Error::TooLarge { size: len, cap });
    }
    fs::read(path).map_err(|e| Error::read(path, e))
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::write(dir, e))
}
