//! Line-delimited JSON stores: one header record followed by one record per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Header shared by the unit, file, benchmark and training-block stores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreHeader {
    pub format_version: u32,
    pub kind: String,
    pub tokenizer_id: String,
    pub window: Option<usize>,
    pub stride: Option<usize>,
}

impl StoreHeader {
    pub fn new(kind: &str, tokenizer_id: &str) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: kind.to_string(),
            tokenizer_id: tokenizer_id.to_string(),
            window: None,
            stride: None,
        }
    }
}

pub fn write_jsonl<'a, H, T, I>(path: &Path, header: &H, records: I) -> Result<()>
where
    H: Serialize,
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_line(&mut w, path, header)?;
    for r in records {
        write_line(&mut w, path, r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_line<W: Write, V: Serialize + ?Sized>(w: &mut W, path: &Path, value: &V) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<H, T>(path: &Path) -> Result<(H, Vec<T>)>
where
    H: DeserializeOwned,
    T: DeserializeOwned,
{
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| format_err(path, "empty store, missing header"))?
        .map_err(|e| Error::io(path, e))?;
    let header: H = serde_json::from_str(&first)
        .map_err(|e| format_err(path, &format!("bad header: {e}")))?;
    let mut records = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| format_err(path, &format!("line {}: {e}", n + 2)))?;
        records.push(rec);
    }
    Ok((header, records))
}

/// Reads a store and checks its header version and kind.
pub fn read_store<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<(StoreHeader, Vec<T>)> {
    let (header, records): (StoreHeader, Vec<T>) = read_jsonl(path)?;
    check_version(path, header.format_version)?;
    if header.kind != kind {
        return Err(format_err(
            path,
            &format!("expected a {kind} store, found {}", header.kind),
        ));
    }
    Ok((header, records))
}

pub(crate) fn check_version(path: &Path, found: u32) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(format_err(
            path,
            &format!("format_version {found} is not supported (expected {FORMAT_VERSION})"),
        ));
    }
    Ok(())
}

pub(crate) fn format_err(path: &Path, msg: &str) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: msg.to_string(),
    }
}
