//! Seed CSV: one `row,col,depth_m` triple per line, `#` starts a comment.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Seed, SeedSet};

pub fn parse_seeds(text: &str) -> Result<SeedSet> {
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let perr = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(perr(format!(
                "expected 3 comma-separated fields, found {}",
                fields.len()
            )));
        }
        let row: usize = fields[0]
            .parse()
            .map_err(|_| perr(format!("bad row index {:?}", fields[0])))?;
        let col: usize = fields[1]
            .parse()
            .map_err(|_| perr(format!("bad column index {:?}", fields[1])))?;
        let value: f64 = fields[2]
            .parse()
            .map_err(|_| perr(format!("bad depth {:?}", fields[2])))?;
        if !(value.is_finite() && value > 0.0) {
            return Err(perr(format!("depth must be positive and finite, got {value}")));
        }
        if let Some(first) = seen.insert((row, col), line_no) {
            return Err(perr(format!(
                "duplicate seed at ({row}, {col}), first given on line {first}"
            )));
        }
        entries.push(Seed { row, col, value });
    }
    SeedSet::from_entries(entries)
}

pub fn format_seeds(seeds: &SeedSet) -> String {
    let mut out = String::from("# row,col,depth_m\n");
    for s in seeds {
        let _ = writeln!(out, "{},{},{}", s.row, s.col, s.value);
    }
    out
}

pub fn read_seeds(path: impl AsRef<Path>) -> Result<SeedSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_seeds(&text).map_err(|e| e.in_file(path))
}

pub fn write_seeds(path: impl AsRef<Path>, seeds: &SeedSet) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_seeds(seeds)).map_err(|e| Error::io(path, e))
}
