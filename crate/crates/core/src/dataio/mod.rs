//! Dataset ingestion and report output.

mod csv;
mod dataset;
mod idx;
mod svg;

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub use self::csv::{fmt_f64, read_series_csv, render_key_values, write_csv, Csv};
pub use dataset::{default_data_dir, load_idx_pair, load_mnist, subsample, to_dataset, LabeledDataset, Split};
pub use idx::{
    labels_to_bytes, parse_idx_images, parse_idx_labels, read_idx_images, read_idx_labels,
    IdxImages, IMAGES_MAGIC, LABELS_MAGIC,
};
pub use svg::{render_svg_lineplot, write_svg_lineplot};

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes `bytes` to `<path>.partial`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = partial_path(path);
    let result = std::fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|_| std::fs::rename(&tmp, path));
    result.map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
