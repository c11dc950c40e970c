use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub path: String,
    pub num_frames: Option<u64>,
}

/// Ordered utterance list; ids are unique.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn new(records: Vec<ManifestRecord>) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if let Some(first) = seen.insert(r.id.as_str(), i) {
                return Err(Error::Domain(format!(
                    "duplicate id {:?} at records {} and {}",
                    r.id,
                    first + 1,
                    i + 1
                )));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_text(&self) -> String {
        self.records
            .iter()
            .map(|r| match r.num_frames {
                Some(n) => format!("{}\t{}\t{}\n", r.id, r.path, n),
                None => format!("{}\t{}\n", r.id, r.path),
            })
            .collect()
    }
}

/// One `id<TAB>path[<TAB>frames]` record per line; blank and `#` lines skipped.
pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let mut records = Vec::new();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::Parse { line: line_no, message };
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(bad(format!(
                "expected id<TAB>path[<TAB>frames], found {} field(s)",
                fields.len()
            )));
        }
        let (id, path) = (fields[0], fields[1]);
        if id.is_empty() || path.is_empty() {
            return Err(bad("empty id or path".into()));
        }
        let num_frames = match fields.get(2) {
            Some(f) => Some(
                f.parse()
                    .map_err(|_| bad(format!("frame count {f:?} is not an integer")))?,
            ),
            None => None,
        };
        if let Some(prev) = first_line.insert(id.to_string(), line_no) {
            return Err(bad(format!("duplicate id {id:?} (first seen on line {prev})")));
        }
        records.push(ManifestRecord {
            id: id.to_string(),
            path: path.to_string(),
            num_frames,
        });
    }
    Ok(Manifest { records })
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

/// Resolves a record path against the directory holding the manifest.
pub fn resolve_record_path(manifest_path: &Path, record: &ManifestRecord) -> PathBuf {
    let p = Path::new(&record.path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_path.parent().unwrap_or(Path::new("")).join(p)
    }
}
