use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("manifest has no sounds")]
    Empty,
}

/// Sound ids mapped to audio files, in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoolManifest {
    pub ids: Vec<String>,
    pub paths: BTreeMap<String, PathBuf>,
}

impl PoolManifest {
    /// Reads `sound_id,path` rows. Relative paths are resolved against
    /// `audio_dir`.
    pub fn read<R: Read>(reader: R, audio_dir: &Path) -> Result<Self, ManifestError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut out = PoolManifest::default();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let (Some(id), Some(path)) = (rec.get(0), rec.get(1)) else {
                return Err(ManifestError::Row {
                    line,
                    message: "expected sound_id,path".into(),
                });
            };
            if id.is_empty() {
                return Err(ManifestError::Row {
                    line,
                    message: "empty sound id".into(),
                });
            }
            let path = PathBuf::from(path);
            let path = if path.is_absolute() { path } else { audio_dir.join(path) };
            if out.paths.insert(id.to_string(), path).is_some() {
                return Err(ManifestError::Row {
                    line,
                    message: format!("duplicate sound id {id}"),
                });
            }
            out.ids.push(id.to_string());
        }
        if out.ids.is_empty() {
            return Err(ManifestError::Empty);
        }
        Ok(out)
    }

    pub fn from_file(path: &Path, audio_dir: &Path) -> anyhow::Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        Ok(Self::read(file, audio_dir)?)
    }
}
