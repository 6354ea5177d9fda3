use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, IsTerminal, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

/// Bad flags, missing files and other problems with the invocation itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn open_input(path: &Path) -> Result<BufReader<File>> {
    if !path.exists() {
        return Err(usage(format!("no such file: {}", path.display())));
    }
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(usage(format!("no such file: {}", path.display())));
    }
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn create_output(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

#[derive(Serialize)]
struct Report<'a, C: Serialize, R: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a C,
    result: &'a R,
}

/// Writes `{"command","version","config","result"}` when a path is given.
pub fn write_report<C: Serialize, R: Serialize>(path: Option<&Path>, command: &str, config: &C, result: &R) -> Result<()> {
    let Some(path) = path else { return Ok(()) };
    let report = Report { command, version: env!("CARGO_PKG_VERSION"), config, result };
    let mut out = create_output(path)?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    out.flush()?;
    log(&format!("wrote {}", path.display()));
    Ok(())
}

pub fn log(msg: &str) {
    eprintln!("[rbox-geoloc] {msg}");
}

fn color_enabled() -> bool {
    std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty()) && std::io::stdout().is_terminal()
}

/// `PASS`/`FAIL`, colored when writing to a terminal without `NO_COLOR`.
pub fn verdict(ok: bool) -> String {
    let word = if ok { "PASS" } else { "FAIL" };
    if color_enabled() {
        format!("\x1b[{}m{word}\x1b[0m", if ok { 32 } else { 31 })
    } else {
        word.to_string()
    }
}

/// Left-aligned first column, right-aligned rest.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (c, cell) in r.iter().enumerate().take(cols) {
            width[c] = width[c].max(visible_len(cell));
        }
    }
    let mut s = String::new();
    let line = |cells: Vec<&str>, s: &mut String| {
        for (c, cell) in cells.iter().enumerate() {
            let pad = width[c].saturating_sub(visible_len(cell));
            if c == 0 {
                s.push_str(cell);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(cell);
            }
        }
        s.push('\n');
    };
    line(header.to_vec(), &mut s);
    for r in rows {
        line(r.iter().map(String::as_str).collect(), &mut s);
    }
    s
}

fn visible_len(s: &str) -> usize {
    let mut n = 0;
    let mut in_escape = false;
    for ch in s.chars() {
        match (in_escape, ch) {
            (false, '\x1b') => in_escape = true,
            (true, 'm') => in_escape = false,
            (true, _) => {}
            (false, _) => n += 1,
        }
    }
    n
}

pub fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().context("building the worker pool")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_alignment() {
        let t = table(&["name", "value"], &[vec!["a".into(), "1".into()], vec!["long".into(), "\x1b[32mPASS\x1b[0m".into()]]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "name  value");
        assert_eq!(lines[1], "a         1");
        assert!(lines[2].starts_with("long   "));
    }
}
