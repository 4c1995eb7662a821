//! Write-through session snapshots: one directory per session holding the
//! uploaded image, optional truth mask, a manifest with the event history,
//! and the current seed and label masks.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seedforge_core::io::{decode_binary_mask, decode_raster, encode_label_map, encode_seed_mask, RasterFormat};
use seedforge_core::session::{Event, Session};
use seedforge_core::PipelineConfig;

pub const SNAPSHOT_SCHEMA: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub schema: u32,
    pub id: String,
    pub revision: u64,
    pub config: PipelineConfig,
    pub canonical_config: String,
    pub image: String,
    pub truth: Option<String>,
    pub history: Vec<Event>,
}

#[derive(Clone, Debug)]
pub struct SnapshotStore {
    root: PathBuf,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

impl SnapshotStore {
    pub fn new(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(SnapshotStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Stores the inputs of a new session. Called once, before [`Self::save`].
    pub fn create(&self, id: &str, image: &[u8], truth: Option<&[u8]>) -> io::Result<()> {
        let dir = self.root.join(id);
        fs::create_dir_all(&dir)?;
        write_atomic(&dir.join(Self::image_name(image)), image)?;
        if let Some(t) = truth {
            write_atomic(&dir.join(Self::truth_name(t)), t)?;
        }
        Ok(())
    }

    fn image_name(bytes: &[u8]) -> String {
        let ext = RasterFormat::sniff(bytes).map_or("bin", RasterFormat::extension);
        format!("input.{ext}")
    }

    fn truth_name(bytes: &[u8]) -> String {
        let ext = RasterFormat::sniff(bytes).map_or("bin", RasterFormat::extension);
        format!("truth.{ext}")
    }

    /// Rewrites manifest and masks for the session's current revision.
    pub fn save(&self, id: &str, session: &Session, image: &[u8], truth: Option<&[u8]>) -> io::Result<()> {
        let dir = self.root.join(id);
        let manifest = SnapshotManifest {
            schema: SNAPSHOT_SCHEMA,
            id: id.to_string(),
            revision: session.revision(),
            config: session.config().clone(),
            canonical_config: session.config().canonical(),
            image: Self::image_name(image),
            truth: truth.map(Self::truth_name),
            history: session.history().to_vec(),
        };
        let ext = RasterFormat::for_shape(session.shape()).extension();
        write_atomic(&dir.join(format!("seed.{ext}")), &encode_seed_mask(session.seeds()))?;
        write_atomic(&dir.join(format!("label.{ext}")), &encode_label_map(session.labels()))?;
        let json = serde_json::to_vec_pretty(&manifest).map_err(io::Error::other)?;
        write_atomic(&dir.join("manifest.json"), &json)
    }

    /// Rebuilds every stored session by replaying its history. Directories
    /// that fail to load are reported and skipped.
    pub fn load_all(&self) -> io::Result<Vec<LoadedSession>> {
        let mut out = Vec::new();
        let mut entries: Vec<_> = fs::read_dir(&self.root)?.collect::<io::Result<_>>()?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            if !entry.file_type()?.is_dir() {
                continue;
            }
            match Self::load(&entry.path()) {
                Ok(s) => out.push(s),
                Err(e) => tracing::warn!("skipping snapshot {}: {e}", entry.path().display()),
            }
        }
        Ok(out)
    }

    fn load(dir: &Path) -> Result<LoadedSession, String> {
        let manifest: SnapshotManifest =
            serde_json::from_slice(&fs::read(dir.join("manifest.json")).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
        if manifest.schema != SNAPSHOT_SCHEMA {
            return Err(format!("unknown snapshot schema {}", manifest.schema));
        }
        let image = fs::read(dir.join(&manifest.image)).map_err(|e| e.to_string())?;
        let grid = decode_raster(&image)
            .and_then(|r| r.to_grid())
            .map_err(|e| e.to_string())?;
        let truth_bytes = match &manifest.truth {
            Some(name) => Some(fs::read(dir.join(name)).map_err(|e| e.to_string())?),
            None => None,
        };
        let truth = match &truth_bytes {
            Some(b) => Some(decode_binary_mask(b).map_err(|e| e.to_string())?),
            None => None,
        };
        let session = Session::restore(&grid, manifest.config, truth, manifest.history).map_err(|e| e.to_string())?;
        if session.revision() != manifest.revision {
            return Err(format!(
                "replay reached revision {} but manifest says {}",
                session.revision(),
                manifest.revision
            ));
        }
        Ok(LoadedSession {
            id: manifest.id,
            session,
            image,
            truth: truth_bytes,
        })
    }
}

pub struct LoadedSession {
    pub id: String,
    pub session: Session,
    pub image: Vec<u8>,
    pub truth: Option<Vec<u8>>,
}
