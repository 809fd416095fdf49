//! Append-only comment log with immutable in-memory snapshots.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use absa_core::corpus::RawComment;
use absa_core::{Comment, Dataset};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::error::StoreError;

#[derive(Serialize, Deserialize)]
struct LogEntry {
    seq: u64,
    comment: Comment,
}

/// A consistent view of all stored comments, grouped by product in
/// ingestion order.
#[derive(Clone, Debug, Default)]
pub struct Snapshot {
    pub seq: u64,
    pub products: BTreeMap<String, Arc<Vec<Comment>>>,
}

impl Snapshot {
    pub fn product(&self, id: &str) -> Option<Arc<Vec<Comment>>> {
        self.products.get(id).cloned()
    }

    pub fn n_comments(&self) -> usize {
        self.products.values().map(|v| v.len()).sum()
    }

    /// Every labelled comment across products, ordered by product then
    /// ingestion order. Indices are only unique per product, so the copies
    /// are renumbered from 0.
    pub fn labelled(&self) -> Dataset {
        let comments = self
            .products
            .values()
            .flat_map(|v| v.iter().filter(|c| c.labels.is_some()))
            .enumerate()
            .map(|(i, c)| Comment {
                index: i as u64,
                ..c.clone()
            })
            .collect();
        Dataset::new("store", comments).expect("renumbered indices are unique")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    pub row: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    /// Rows whose (product, index) was already stored; skipped silently.
    pub duplicates: usize,
    pub rejected: Vec<RowError>,
    pub seq: u64,
}

struct Writer {
    file: File,
    keys: HashMap<String, HashSet<u64>>,
}

pub struct CommentStore {
    path: PathBuf,
    writer: Mutex<Writer>,
    snapshot: RwLock<Arc<Snapshot>>,
}

impl CommentStore {
    /// Opens (creating if needed) the log at `path` and replays it. A
    /// truncated final line left by an interrupted write is dropped.
    pub fn open(path: &Path) -> Result<CommentStore, StoreError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| StoreError::io(parent, e))?;
        }
        let mut snapshot = Snapshot::default();
        let mut grouped: BTreeMap<String, Vec<Comment>> = BTreeMap::new();
        let mut keys: HashMap<String, HashSet<u64>> = HashMap::new();
        let mut valid_len = 0u64;
        if path.exists() {
            let file = File::open(path).map_err(|e| StoreError::io(path, e))?;
            let lines: Vec<String> = BufReader::new(file)
                .lines()
                .collect::<Result<_, _>>()
                .map_err(|e| StoreError::io(path, e))?;
            let n = lines.len();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    valid_len += line.len() as u64 + 1;
                    continue;
                }
                let entry: LogEntry = match serde_json::from_str(line) {
                    Ok(e) => e,
                    Err(e) if i + 1 == n => {
                        log::warn!("{}: dropping truncated final entry: {e}", path.display());
                        break;
                    }
                    Err(e) => {
                        return Err(StoreError::Corrupt {
                            path: path.to_path_buf(),
                            line: i + 1,
                            reason: e.to_string(),
                        })
                    }
                };
                valid_len += line.len() as u64 + 1;
                let c = entry.comment;
                if keys.entry(c.product.clone()).or_default().insert(c.index) {
                    snapshot.seq = snapshot.seq.max(entry.seq);
                    grouped.entry(c.product.clone()).or_default().push(c);
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| StoreError::io(path, e))?;
        if file.metadata().map_err(|e| StoreError::io(path, e))?.len() > valid_len {
            file.set_len(valid_len).map_err(|e| StoreError::io(path, e))?;
        }
        snapshot.products = grouped.into_iter().map(|(k, v)| (k, Arc::new(v))).collect();
        Ok(CommentStore {
            path: path.to_path_buf(),
            writer: Mutex::new(Writer { file, keys }),
            snapshot: RwLock::new(Arc::new(snapshot)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().clone()
    }

    /// Validates and appends `rows`. Invalid rows are reported by position
    /// and skipped; rows whose (product, index) is already stored are
    /// counted as duplicates and skipped.
    pub fn ingest(&self, rows: &[RawComment]) -> Result<IngestReport, StoreError> {
        let mut writer = self.writer.lock();
        let current = self.snapshot();
        let mut report = IngestReport::default();
        let mut seq = current.seq;
        let mut fresh: BTreeMap<String, Vec<Comment>> = BTreeMap::new();
        let mut lines = String::new();
        let mut batch_keys: HashSet<(String, u64)> = HashSet::new();
        for (row, raw) in rows.iter().enumerate() {
            if raw.product.trim().is_empty() {
                report.rejected.push(RowError {
                    row,
                    reason: "missing product".into(),
                });
                continue;
            }
            let comment = match raw.parse() {
                Ok((c, warning)) => {
                    if let Some(w) = warning {
                        log::warn!("ingest row {row}: {w}; timestamp set to null");
                    }
                    c
                }
                Err(reason) => {
                    report.rejected.push(RowError { row, reason });
                    continue;
                }
            };
            let stored = writer
                .keys
                .get(&comment.product)
                .is_some_and(|k| k.contains(&comment.index));
            if stored || !batch_keys.insert((comment.product.clone(), comment.index)) {
                report.duplicates += 1;
                continue;
            }
            seq += 1;
            let entry = LogEntry { seq, comment };
            lines.push_str(&serde_json::to_string(&entry)?);
            lines.push('\n');
            fresh
                .entry(entry.comment.product.clone())
                .or_default()
                .push(entry.comment);
            report.accepted += 1;
        }
        if report.accepted > 0 {
            writer
                .file
                .write_all(lines.as_bytes())
                .and_then(|_| writer.file.sync_data())
                .map_err(|e| StoreError::io(&self.path, e))?;
            let mut next = (*current).clone();
            for (product, comments) in fresh {
                let keys = writer.keys.entry(product.clone()).or_default();
                keys.extend(comments.iter().map(|c| c.index));
                let mut merged = next.products.get(&product).map(|v| (**v).clone()).unwrap_or_default();
                merged.extend(comments);
                next.products.insert(product, Arc::new(merged));
            }
            next.seq = seq;
            *self.snapshot.write() = Arc::new(next);
        }
        report.seq = seq;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(index: &str, product: &str, label: &str) -> RawComment {
        RawComment {
            index: index.into(),
            comment: "pin trâu".into(),
            n_star: "5".into(),
            date_time: "2021-05-01 08:00".into(),
            product: product.into(),
            label: label.into(),
        }
    }

    #[test]
    fn replay_restores_snapshot_and_drops_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("comments.jsonl");
        {
            let store = CommentStore::open(&path).unwrap();
            let r = store
                .ingest(&[
                    raw("1", "a", "{BATTERY#Positive}"),
                    raw("2", "a", ""),
                    raw("1", "b", ""),
                ])
                .unwrap();
            assert_eq!(r.accepted, 3);
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"seq\":4,\"comm").unwrap();
        drop(f);
        let store = CommentStore::open(&path).unwrap();
        let snap = store.snapshot();
        assert_eq!(snap.seq, 3);
        assert_eq!(snap.product("a").unwrap().len(), 2);
        assert_eq!(snap.labelled().len(), 1);
        let r = store.ingest(&[raw("3", "a", "")]).unwrap();
        assert_eq!((r.accepted, r.seq), (1, 4));
        drop(store);
        assert_eq!(CommentStore::open(&path).unwrap().snapshot().n_comments(), 4);
    }

    #[test]
    fn duplicates_within_and_across_batches() {
        let dir = tempfile::tempdir().unwrap();
        let store = CommentStore::open(&dir.path().join("c.jsonl")).unwrap();
        let r = store.ingest(&[raw("1", "a", ""), raw("1", "a", "")]).unwrap();
        assert_eq!((r.accepted, r.duplicates), (1, 1));
        let r = store.ingest(&[raw("1", "a", "")]).unwrap();
        assert_eq!((r.accepted, r.duplicates), (0, 1));
        let r = store.ingest(&[raw("x", "a", ""), raw("2", "", "")]).unwrap();
        assert_eq!(r.rejected.len(), 2);
    }
}
