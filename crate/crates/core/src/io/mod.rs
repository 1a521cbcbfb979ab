//! On-disk formats: pose and trajectory text files, binary tensor and mask
//! files, and a graymap rendition of masks.
//!
//! Every writer goes through [`write_atomic`], so a failed command never
//! leaves a partially written file behind.

use std::io::Write;
use std::path::Path;

use tempfile::NamedTempFile;

use crate::error::Result;

pub mod mask_file;
pub mod pose_file;
pub mod tensor_file;
pub mod trajectory_file;

pub use mask_file::{decode_mask, encode_mask, mask_to_pgm, read_mask, write_mask, write_mask_pgm};
pub use pose_file::{format_pose_file, parse_pose_file, read_pose_file, PoseFile};
pub use tensor_file::{read_tensor, write_tensor, TensorFile};
pub use trajectory_file::{
    format_trajectory_file, parse_trajectory_file, read_estimated, read_ground_truth,
    TrajectoryRecord,
};

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Strips a trailing `#` comment and surrounding whitespace.
pub(crate) fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(a, _)| a).trim()
}
