//! File formats: space JSON, generic JSON artifacts, CSV tables and SVG
//! scatter plots.
//!
//! A space file looks like
//!
//! ```json
//! {
//!   "label": "interval-5",
//!   "mesh": 1.0,
//!   "distances": [[0.0, 1.0], [1.0, 0.0]],
//!   "coordinates": [[0.0], [1.0]],
//!   "recipe": { "kind": "interval", "points": 2 }
//! }
//! ```
//!
//! `coordinates` and `recipe` are optional. Floats are written in shortest
//! round-trip form and parsed back exactly.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::embedding::PointMap;
use crate::error::{Error, Result};
use crate::metric::FiniteMetricSpace;
use crate::spaces::SpaceRecipe;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceFile {
    pub label: String,
    pub mesh: f64,
    pub distances: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<SpaceRecipe>,
}

impl SpaceFile {
    pub fn from_space(space: &FiniteMetricSpace, recipe: Option<SpaceRecipe>) -> Self {
        Self {
            label: space.label().to_string(),
            mesh: space.mesh(),
            distances: space.rows(),
            coordinates: space.coords().map(<[Vec<f64>]>::to_vec),
            recipe,
        }
    }

    pub fn into_space(self) -> Result<FiniteMetricSpace> {
        let space = FiniteMetricSpace::new(self.label, self.mesh, self.distances)?;
        match self.coordinates {
            Some(c) => space.with_coords(c),
            None => Ok(space),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Pretty-printed JSON with a trailing newline. Field order follows the
/// struct declarations, so output is byte-stable.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("artifact types serialize");
    text.push('\n');
    text
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, to_json(value)).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_space(path: &Path, space: &FiniteMetricSpace, recipe: Option<SpaceRecipe>) -> Result<()> {
    write_json(path, &SpaceFile::from_space(space, recipe))
}

pub fn load_space(path: &Path) -> Result<(FiniteMetricSpace, Option<SpaceRecipe>)> {
    let mut file: SpaceFile = read_json(path)?;
    let recipe = file.recipe.take();
    Ok((file.into_space()?, recipe))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(io_err(dir)),
        _ => Ok(()),
    }
}

fn csv_text(header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    writer.write_record(&header).expect("in-memory write");
    for row in rows {
        writer.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("ascii")
}

/// One row per point: `point,f1,...,fm`.
pub fn map_csv(values: &PointMap) -> String {
    let header = std::iter::once("point".to_string())
        .chain((1..=values.dim).map(|k| format!("f{k}")))
        .collect();
    csv_text(
        header,
        values.rows.iter().enumerate().map(|(i, row)| {
            std::iter::once(i.to_string())
                .chain(row.iter().map(f64::to_string))
                .collect()
        }),
    )
}

/// A square matrix with a `point` column and one column per point.
pub fn matrix_csv(matrix: &[Vec<f64>]) -> String {
    let header = std::iter::once("point".to_string())
        .chain((0..matrix.len()).map(|k| k.to_string()))
        .collect();
    csv_text(
        header,
        matrix.iter().enumerate().map(|(i, row)| {
            std::iter::once(i.to_string())
                .chain(row.iter().map(f64::to_string))
                .collect()
        }),
    )
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(io_err(path))
}

const SVG_SIZE: f64 = 480.0;
const SVG_MARGIN: f64 = 20.0;

/// Scatter plot of a map into `R^0`, `R^1` or `R^2`, points colored by index.
/// `R^1` images are drawn on a horizontal line.
pub fn svg_scatter(values: &PointMap, title: &str) -> Result<String> {
    if values.dim > 2 {
        return Err(Error::parameter(format!(
            "scatter plots need target dimension <= 2, got {}",
            values.dim
        )));
    }
    let coord = |row: &[f64], k: usize| row.get(k).copied().unwrap_or(0.0);
    let range = |k: usize| {
        values.rows.iter().map(|r| coord(r, k)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
    };
    let (x_lo, x_hi) = range(0);
    let (y_lo, y_hi) = range(1);
    let span = (x_hi - x_lo).max(y_hi - y_lo).max(f64::MIN_POSITIVE);
    let inner = SVG_SIZE - 2.0 * SVG_MARGIN;
    let n = values.len().max(1);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{s}\" height=\"{s}\" viewBox=\"0 0 {s} {s}\">\n\
         <title>{}</title>\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        escape(title),
        s = SVG_SIZE
    );
    for (i, row) in values.rows.iter().enumerate() {
        let px = SVG_MARGIN + (coord(row, 0) - x_lo) / span * inner;
        let py = if values.dim == 2 {
            SVG_SIZE - SVG_MARGIN - (coord(row, 1) - y_lo) / span * inner
        } else {
            SVG_SIZE / 2.0
        };
        let hue = 300.0 * i as f64 / n as f64;
        svg.push_str(&format!(
            "<circle cx=\"{px:.3}\" cy=\"{py:.3}\" r=\"3\" fill=\"hsl({hue:.1},70%,45%)\"><title>{i}</title></circle>\n"
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
