//! CSV tables with a `#` provenance header, and minimal SVG line plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    /// Degenerate or undefined point; never interpolated.
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// 17 significant digits round-trip any `f64`.
pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_number(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn value(&self) -> Option<f64> {
        match self {
            Cell::Num(v) if v.is_finite() => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Extra `#` lines after the config block.
    pub notes: Vec<String>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new(), notes: Vec::new() }
    }

    pub fn with_columns(name: &str, columns: Vec<String>) -> Self {
        Self { name: name.to_string(), columns, rows: Vec::new(), notes: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width of {}", self.name);
        self.rows.push(row);
    }

    pub fn render(&self, command: &str, resolved_config: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# spinboson {command}: {}", self.name);
        let _ = writeln!(out, "# resolved config:");
        for line in resolved_config.lines() {
            let _ = writeln!(out, "#   {line}");
        }
        for note in &self.notes {
            let _ = writeln!(out, "# {note}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn write(&self, dir: &Path, command: &str, resolved_config: &str, svg: bool) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(format!("{}.csv", self.name));
        fs::write(&path, self.render(command, resolved_config)).with_context(|| format!("writing {}", path.display()))?;
        let mut written = vec![path];
        if svg {
            let p = dir.join(format!("{}.svg", self.name));
            fs::write(&p, self.svg()).with_context(|| format!("writing {}", p.display()))?;
            written.push(p);
        }
        Ok(written)
    }

    /// Polylines of every numeric column against the first, broken at
    /// empty cells, inside a framed axis box.
    pub fn svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 400.0;
        const M: f64 = 50.0;
        const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
        let xs: Vec<Option<f64>> = self.rows.iter().map(|r| r.first().and_then(Cell::value)).collect();
        let series: Vec<usize> =
            (1..self.columns.len()).filter(|&c| self.rows.iter().any(|r| matches!(r.get(c), Some(Cell::Num(_))))).collect();
        let mut bounds = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (r, x) in self.rows.iter().zip(&xs) {
            let Some(x) = x else { continue };
            for &c in &series {
                if let Some(y) = r[c].value() {
                    bounds = (bounds.0.min(*x), bounds.1.max(*x), bounds.2.min(y), bounds.3.max(y));
                }
            }
        }
        let (x0, mut x1, y0, mut y1) = bounds;
        let mut out = String::new();
        let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
        let _ = writeln!(out, r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="black"/>"#, W - 2.0 * M, H - 2.0 * M);
        if x0.is_finite() && y0.is_finite() {
            if x1 <= x0 {
                x1 = x0 + 1.0;
            }
            if y1 <= y0 {
                y1 = y0 + 1.0;
            }
            let px = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
            let py = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
            for (k, &c) in series.iter().enumerate() {
                let color = COLORS[k % COLORS.len()];
                let mut segment: Vec<String> = Vec::new();
                let flush = |segment: &mut Vec<String>, out: &mut String| {
                    if segment.len() > 1 {
                        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" points="{}"/>"#, segment.join(" "));
                    }
                    segment.clear();
                };
                for (r, x) in self.rows.iter().zip(&xs) {
                    match (x, r[c].value()) {
                        (Some(x), Some(y)) => segment.push(format!("{:.2},{:.2}", px(*x), py(y))),
                        _ => flush(&mut segment, &mut out),
                    }
                }
                flush(&mut segment, &mut out);
            }
            let _ = writeln!(out, r#"<text x="{M}" y="{}" font-size="11">{}: {} .. {}</text>"#, H - 15.0, self.columns[0], short(x0), short(x1));
            let _ = writeln!(out, r#"<text x="{M}" y="30" font-size="11">y: {} .. {}</text>"#, short(y0), short(y1));
        }
        out.push_str("</svg>\n");
        out
    }
}

fn short(v: f64) -> String {
    format!("{v:.4}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        let mut t = Table::new("demo", &["t", "a", "b"]);
        t.push(vec![0.0.into(), 1.0.into(), Cell::Empty]);
        t.push(vec![0.5.into(), Cell::Empty, 2.0.into()]);
        t.push(vec![1.0.into(), 3.0.into(), 3.0.into()]);
        t
    }

    #[test]
    fn seventeen_digits_and_empty_cells() {
        let text = table().render("spectrum", "[hilbert]\ncutoff = 8\n");
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# spinboson spectrum: demo");
        assert_eq!(lines[3], "#   cutoff = 8");
        assert_eq!(lines[4], "t,a,b");
        assert_eq!(lines[5], "0.0000000000000000e0,1.0000000000000000e0,");
        assert_eq!(lines[6], "5.0000000000000000e-1,,2.0000000000000000e0");
        assert_eq!(format_number(0.1).parse::<f64>().unwrap(), 0.1);
        assert!(!text.contains('\r'));
    }

    #[test]
    fn svg_breaks_lines_at_gaps() {
        let svg = table().svg();
        assert!(svg.starts_with("<svg"));
        // column a has one point either side of its gap, so only b draws
        assert_eq!(svg.matches("<polyline").count(), 1);
    }
}
