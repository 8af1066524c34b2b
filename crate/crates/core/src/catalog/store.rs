use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::edition::Edition;
use super::loader::{load_edition, LoadError, LoadInput, LoadReport};
use super::schema::Schema;
use super::CatalogError;

/// A directory of published editions.
///
/// Layout: `editions/<NNNNNNNN>/` per edition plus a `CURRENT` file naming
/// the newest. Editions are written under a temporary name and renamed into
/// place, so a reader sees an edition completely or not at all.
#[derive(Debug)]
pub struct CatalogStore {
    root: PathBuf,
    writer: Mutex<()>,
}

impl CatalogStore {
    pub fn open(root: impl AsRef<Path>) -> Result<CatalogStore, CatalogError> {
        let root = root.as_ref().to_path_buf();
        let editions = root.join("editions");
        fs::create_dir_all(&editions)?;
        for entry in fs::read_dir(&editions)? {
            let entry = entry?;
            if entry.file_name().to_string_lossy().starts_with(".tmp-") {
                fs::remove_dir_all(entry.path())?;
            }
        }
        Ok(CatalogStore { root, writer: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn edition_dir(&self, n: u64) -> PathBuf {
        self.root.join("editions").join(format!("{n:08}"))
    }

    /// Published edition numbers, ascending.
    pub fn editions(&self) -> Result<Vec<u64>, CatalogError> {
        let mut out: Vec<u64> = fs::read_dir(self.root.join("editions"))?
            .filter_map(|e| e.ok()?.file_name().to_str()?.parse().ok())
            .collect();
        out.sort_unstable();
        Ok(out)
    }

    pub fn current(&self) -> Result<Option<u64>, CatalogError> {
        match fs::read_to_string(self.root.join("CURRENT")) {
            Ok(s) => s.trim().parse().map(Some).map_err(|_| CatalogError::Corrupt("CURRENT".into())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn open_edition(&self, n: u64) -> Result<Edition, CatalogError> {
        let dir = self.edition_dir(n);
        if !dir.exists() {
            return Err(CatalogError::UnknownEdition(n));
        }
        Edition::read_from(&dir)
    }

    pub fn open_current(&self) -> Result<Edition, CatalogError> {
        let n = self.current()?.ok_or(CatalogError::NoEdition)?;
        self.open_edition(n)
    }

    /// Assigns the next edition number and publishes atomically.
    pub fn publish(&self, mut edition: Edition) -> Result<Edition, CatalogError> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let next = self.editions()?.last().copied().unwrap_or(0) + 1;
        edition.set_number(next);
        let tmp = self.root.join("editions").join(format!(".tmp-{next}-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        if let Err(e) = edition.write_to(&tmp) {
            let _ = fs::remove_dir_all(&tmp);
            return Err(e);
        }
        fs::rename(&tmp, self.edition_dir(next))?;
        let cur_tmp = self.root.join("CURRENT.tmp");
        fs::write(&cur_tmp, format!("{next}\n"))?;
        fs::rename(&cur_tmp, self.root.join("CURRENT"))?;
        Ok(edition)
    }

    /// Loads `inputs` against `schema` and publishes the result as a new
    /// edition. Nothing is published if the load aborts.
    pub fn load(&self, schema: &Schema, inputs: Vec<LoadInput<'_>>) -> Result<(Edition, LoadReport), LoadError> {
        let (edition, mut report) = load_edition(schema, inputs)?;
        let edition = self.publish(edition)?;
        report.edition = edition.number();
        Ok((edition, report))
    }
}
