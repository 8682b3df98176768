use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;

use super::evaluate::{evaluate, format_table, run_name, EvalRow};
use super::pca::pca;
use super::run_dir;
use crate::datasets::{ConfoundValues, DatasetBundle};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub rows: Vec<EvalRow>,
    /// Aligned text table.
    #[serde(skip)]
    pub table: String,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("rows serialize") + "\n"
    }
}

/// One scatter panel: 2-D points and a value per point that picks its
/// color (a class index when `categorical`, otherwise a scalar in `[0, 1]`).
pub struct Panel {
    pub title: String,
    pub xy: Array2<f64>,
    pub color: Vec<f64>,
    pub categorical: bool,
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];
const MAX_POINTS: usize = 3000;
const PANEL: f64 = 320.0;
const MARGIN: f64 = 24.0;

fn color_of(v: f64, categorical: bool) -> String {
    if categorical {
        PALETTE[(v.max(0.0) as usize) % PALETTE.len()].to_string()
    } else {
        let t = v.clamp(0.0, 1.0);
        let (r, b) = ((40.0 + 200.0 * t) as u8, (240.0 - 200.0 * t) as u8);
        format!("#{r:02x}40{b:02x}")
    }
}

/// Panels laid out in rows of two.
pub fn render_scatter_svg(panels: &[Panel]) -> String {
    let cols = panels.len().clamp(1, 2);
    let rows = panels.len().div_ceil(2).max(1);
    let cell = PANEL + 2.0 * MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = cols as f64 * cell,
        h = rows as f64 * cell
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        let (ox, oy) = (
            (i % 2) as f64 * cell + MARGIN,
            (i / 2) as f64 * cell + MARGIN,
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12">{}</text>"#,
            ox,
            oy - 8.0,
            p.title
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{ox:.1}" y="{oy:.1}" width="{PANEL}" height="{PANEL}" fill="none" stroke="#999"/>"##
        );
        let n = p.xy.nrows();
        if n == 0 {
            continue;
        }
        let range = |c: usize| {
            let col = p.xy.column(c);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, if hi > lo { hi - lo } else { 1.0 })
        };
        let ((x0, xs), (y0, ys)) = (range(0), range(1));
        let step = n.div_ceil(MAX_POINTS);
        for j in (0..n).step_by(step) {
            let px = ox + 4.0 + (PANEL - 8.0) * (p.xy[[j, 0]] - x0) / xs;
            let py = oy + PANEL - 4.0 - (PANEL - 8.0) * (p.xy[[j, 1]] - y0) / ys;
            let _ = writeln!(
                svg,
                r#"<circle cx="{px:.1}" cy="{py:.1}" r="1.6" fill="{}" fill-opacity="0.7"/>"#,
                color_of(p.color[j], p.categorical)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn summary_row(dir: &Path) -> Result<EvalRow> {
    let s = run_dir::read_summary(dir)?;
    Ok(EvalRow {
        run: run_name(dir),
        method: s.method,
        n: s.n,
        k: s.k,
        metrics: s.metrics,
    })
}

fn plane(embeddings: &Array2<f32>) -> Result<Array2<f64>> {
    let z = embeddings.mapv(f64::from);
    if z.ncols() >= 2 {
        Ok(pca(&z.view(), 2)?.projected)
    } else {
        let mut out = Array2::zeros((z.nrows(), 2));
        out.column_mut(0).assign(&z.column(0));
        Ok(out)
    }
}

/// Comparison table over runs. Metrics are recomputed against `data` when
/// given and read from each run's summary otherwise. With `plot`, writes an
/// SVG of the 2-D principal plane of every run's embeddings, colored by
/// cluster and (with `data`) by confound.
pub fn report(
    runs: &[PathBuf],
    data: Option<&DatasetBundle>,
    plot: Option<&Path>,
) -> Result<Report> {
    if runs.is_empty() {
        return Err(Error::invalid("report needs at least one run"));
    }
    let rows = runs
        .iter()
        .map(|dir| match data {
            Some(b) => evaluate(dir, b),
            None => summary_row(dir),
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(path) = plot {
        let mut panels = Vec::new();
        for dir in runs {
            let embeddings = match run_dir::read_embeddings(dir) {
                Ok(e) => e,
                Err(Error::MissingArtifact(_)) => continue,
                Err(e) => return Err(e),
            };
            let xy = plane(&embeddings)?;
            let labels = run_dir::read_assignments(dir)?;
            if labels.len() != xy.nrows() {
                return Err(Error::format(
                    &dir.join(run_dir::ASSIGNMENTS_FILE),
                    "assignment count differs from embedding count",
                ));
            }
            let name = run_name(dir);
            panels.push(Panel {
                title: format!("{name}: cluster"),
                xy: xy.clone(),
                color: labels.iter().map(|&l| l as f64).collect(),
                categorical: true,
            });
            if let Some(b) = data.filter(|b| b.n() == xy.nrows()) {
                let (color, categorical) = match &b.confound.values {
                    ConfoundValues::Discrete { values, .. } => {
                        (values.iter().map(|&v| v as f64).collect(), true)
                    }
                    ConfoundValues::Continuous(v) => {
                        let lo = v.iter().copied().fold(f32::INFINITY, f32::min);
                        let hi = v.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                        let span = if hi > lo { hi - lo } else { 1.0 };
                        (v.iter().map(|&c| ((c - lo) / span) as f64).collect(), false)
                    }
                };
                panels.push(Panel {
                    title: format!("{name}: confound"),
                    xy,
                    color,
                    categorical,
                });
            }
        }
        std::fs::write(path, render_scatter_svg(&panels)).map_err(|e| Error::io(path, e))?;
    }
    let table = format_table(&rows);
    Ok(Report { rows, table })
}
