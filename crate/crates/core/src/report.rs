//! Output files: PGM images, CSV tables and all-or-nothing writes.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{PcError, PcResult};

/// Binary greyscale PGM (`P5`, maxval 255).
pub fn pgm_bytes(rows: usize, cols: usize, pixels: &[u8]) -> PcResult<Vec<u8>> {
    if rows * cols != pixels.len() {
        return Err(PcError::ShapeMismatch(format!(
            "{rows}x{cols} image needs {} pixels, got {}",
            rows * cols,
            pixels.len()
        )));
    }
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Renders rows as CSV with a header line.
pub fn csv_bytes<S: AsRef<str>>(header: &[S], rows: &[Vec<String>]) -> PcResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| PcError::Domain(format!("CSV encoding failed: {e}"));
    w.write_record(header.iter().map(|h| h.as_ref())).map_err(fail)?;
    for row in rows {
        w.write_record(row).map_err(fail)?;
    }
    w.into_inner()
        .map_err(|e| PcError::Domain(format!("CSV encoding failed: {e}")))
}

/// Files staged in memory and written together.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Writes every file to a temporary sibling first and renames them into
    /// place only once all writes succeeded. On failure the temporaries are
    /// removed and no target path is touched.
    pub fn commit(self) -> PcResult<Vec<PathBuf>> {
        let mut staged: Vec<(PathBuf, PathBuf)> = Vec::with_capacity(self.files.len());
        let result = (|| {
            for (path, bytes) in &self.files {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).map_err(|e| PcError::io(dir, e))?;
                }
                let mut name = path.file_name().unwrap_or_default().to_os_string();
                name.push(".partial");
                let tmp = path.with_file_name(name);
                fs::write(&tmp, bytes).map_err(|e| PcError::io(&tmp, e))?;
                staged.push((tmp, path.clone()));
            }
            Ok(())
        })();
        if let Err(e) = result {
            for (tmp, _) in &staged {
                let _ = fs::remove_file(tmp);
            }
            return Err(e);
        }
        let mut written = Vec::with_capacity(staged.len());
        for (tmp, path) in staged {
            fs::rename(&tmp, &path).map_err(|e| PcError::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Formats a float with the shortest representation that round-trips.
pub fn num(v: f64) -> String {
    format!("{v}")
}
