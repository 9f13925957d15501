//! CSV, gnuplot and metadata writers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Round-trip float formatting: 17 significant digits.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Numeric CSV cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    F(f64),
    Flag(bool),
}

impl Cell {
    fn render(self) -> String {
        match self {
            Cell::F(x) => float(x),
            Cell::Flag(b) => u8::from(b).to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

pub fn csv(header: &[&str], rows: &[Vec<Cell>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(|c| c.render()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Parses a CSV written by [`csv`] back into numbers.
pub fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header = lines
        .next()
        .map(|h| h.split(',').map(str::to_owned).collect())
        .unwrap_or_default();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|c| c.parse().unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    (header, rows)
}

/// Collects the files of one command.
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    pub fn metadata<T: Serialize>(&mut self, meta: &T) -> Result<(), CliError> {
        let mut text =
            serde_json::to_string_pretty(meta).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write("metadata.json", &text)
    }

    pub fn into_files(self) -> Vec<PathBuf> {
        self.written
    }
}

/// A line plot of CSV columns against the first, rendered to SVG.
pub struct GnuplotScript<'a> {
    pub data: &'a str,
    pub xlabel: &'a str,
    pub ylabel: &'a str,
    pub title: String,
    /// `(column, legend, dash type)`, 1-based columns.
    pub series: Vec<(usize, String, u8)>,
    pub logscale_x: bool,
}

impl GnuplotScript<'_> {
    pub fn render(&self) -> String {
        let stem = self.data.trim_end_matches(".csv");
        let mut s = String::new();
        let _ = writeln!(s, "set terminal svg size 800,500");
        let _ = writeln!(s, "set output '{stem}.svg'");
        let _ = writeln!(s, "set datafile separator ','");
        let _ = writeln!(s, "set title '{}'", self.title);
        let _ = writeln!(s, "set xlabel '{}'", self.xlabel);
        let _ = writeln!(s, "set ylabel '{}'", self.ylabel);
        if self.logscale_x {
            let _ = writeln!(s, "set logscale x");
        }
        let _ = writeln!(s, "set key top right");
        let plots: Vec<String> = self
            .series
            .iter()
            .enumerate()
            .map(|(k, (col, legend, dash))| {
                let file = if k == 0 {
                    format!("'{}'", self.data)
                } else {
                    "''".into()
                };
                format!("{file} every ::1 using 1:{col} with lines dt {dash} lw 2 title '{legend}'")
            })
            .collect();
        let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
        s
    }
}
