//! Result files: CSV tables with a header row and JSON-lines reports.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliResult;

/// CSV text from a header and rows of already formatted cells.
pub fn csv<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        s.push_str(&row.into_iter().collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

/// One JSON object per line.
pub fn jsonl<T: Serialize>(records: &[T]) -> CliResult<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

/// Writes files into one output directory and remembers what it wrote.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<PathBuf> {
        let p = self.root.join(name);
        fs::write(&p, contents)?;
        self.written.push(p.clone());
        Ok(p)
    }

    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, records: &[T]) -> CliResult<PathBuf> {
        let text = jsonl(records)?;
        self.write(name, &text)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_rows() {
        let s = csv(&["a", "b"], vec![vec!["1".to_string(), "2".to_string()]]);
        assert_eq!(s, "a,b\n1,2\n");
    }

    #[test]
    fn jsonl_is_one_object_per_line() {
        let s = jsonl(&[serde_json::json!({"x": 1}), serde_json::json!({"x": 2})]).unwrap();
        assert_eq!(s.lines().count(), 2);
        assert!(s.lines().all(|l| l.starts_with('{')));
    }
}
