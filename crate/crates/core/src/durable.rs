use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JournalError {
    #[error("journal line {line} is corrupt: {detail}")]
    Corrupt { line: usize, detail: String },
    #[error("journal: {0}")]
    Io(String),
}

fn io(e: std::io::Error) -> JournalError {
    JournalError::Io(e.to_string())
}

/// Append-only JSON-lines log. Each append is flushed to disk before it
/// returns; a torn final line left by a crash is discarded on open.
pub struct Journal {
    file: Mutex<File>,
    path: PathBuf,
}

impl Journal {
    /// Opens (or creates) the journal and returns every complete entry.
    pub fn open<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<(Journal, Vec<T>), JournalError> {
        let path = path.as_ref().to_path_buf();
        let mut entries = Vec::new();
        let mut valid_len = 0u64;
        if path.exists() {
            let bytes = std::fs::read(&path).map_err(io)?;
            let mut lines: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
            // The piece after the last newline was never acknowledged.
            lines.pop();
            for (i, raw) in lines.iter().enumerate() {
                valid_len += raw.len() as u64 + 1;
                if raw.iter().all(u8::is_ascii_whitespace) {
                    continue;
                }
                let entry = serde_json::from_slice(raw)
                    .map_err(|e| JournalError::Corrupt { line: i + 1, detail: e.to_string() })?;
                entries.push(entry);
            }
        } else if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        if file.metadata().map_err(io)?.len() > valid_len {
            file.set_len(valid_len).map_err(io)?;
        }
        Ok((Journal { file: Mutex::new(file), path }, entries))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append<T: Serialize>(&self, entry: &T) -> Result<(), JournalError> {
        let mut line = serde_json::to_vec(entry).expect("journal entries serialize");
        line.push(b'\n');
        let mut f = self.file.lock().unwrap();
        f.write_all(&line).and_then(|_| f.sync_data()).map_err(io)
    }
}

/// Replaces `path` with `bytes` so that readers see either the old content
/// or the new, never a prefix.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    sync_dir(dir)
}

pub fn remove_durable(path: &Path) -> std::io::Result<()> {
    std::fs::remove_file(path)?;
    sync_dir(path.parent().unwrap_or(Path::new(".")))
}

fn sync_dir(dir: &Path) -> std::io::Result<()> {
    File::open(dir)?.sync_all()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torn_tail_is_dropped_and_overwritten() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.jsonl");
        std::fs::write(&p, b"1\n2\n3").unwrap();
        let (j, e): (Journal, Vec<u32>) = Journal::open(&p).unwrap();
        assert_eq!(e, vec![1, 2]);
        j.append(&4u32).unwrap();
        drop(j);
        assert_eq!(std::fs::read(&p).unwrap(), b"1\n2\n4\n");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.json");
        write_atomic(&p, b"old").unwrap();
        write_atomic(&p, b"new").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"new");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
