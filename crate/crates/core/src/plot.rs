//! SVG ternary plots of three-class credal sets.
//!
//! Barycentric coordinates map to the unit-side triangle by
//! `(l1, l2, l3) -> (l2 + l3 / 2, sqrt(3) / 2 * l3)`: class 1 sits at the
//! bottom-left vertex, class 2 at the bottom-right and class 3 at the top.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::conformal::CredalRegion;
use crate::error::{Error, Result};
use crate::predictors::Prediction;
use crate::simplex::{dirichlet_relative_nonconformity, DirichletParams, SimplexGrid, SimplexPoint};

const HEIGHT_RATIO: f64 = 0.866_025_403_784_438_6; // sqrt(3) / 2

/// Unit-triangle coordinates of a three-class distribution.
pub fn barycentric_to_cartesian(p: &SimplexPoint<f64>) -> Result<(f64, f64)> {
    if p.k() != 3 {
        return Err(Error::UnsupportedDimension {
            supported: 3,
            actual: p.k(),
        });
    }
    let l = p.probs();
    Ok((l[1] + 0.5 * l[2], HEIGHT_RATIO * l[2]))
}

fn default_levels() -> Vec<f64> {
    vec![0.5, 0.8, 0.95]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TernaryPlotSpec {
    pub width: u32,
    pub height: u32,
    pub region_fill: String,
    pub region_opacity: f64,
    pub truth_color: String,
    pub prediction_color: String,
    pub marker_size: f64,
    /// Contours of a second-order prediction are drawn where the density
    /// equals these quantiles of its values over the grid.
    #[serde(default = "default_levels")]
    pub contour_levels: Vec<f64>,
}

impl Default for TernaryPlotSpec {
    fn default() -> Self {
        Self {
            width: 480,
            height: 440,
            region_fill: "#4c72b0".into(),
            region_opacity: 0.45,
            truth_color: "#ff7f0e".into(),
            prediction_color: "#000000".into(),
            marker_size: 8.0,
            contour_levels: default_levels(),
        }
    }
}

struct Canvas {
    margin: f64,
    scale: f64,
    height: f64,
}

impl Canvas {
    fn new(spec: &TernaryPlotSpec) -> Self {
        let margin = 30.0;
        let w = f64::from(spec.width) - 2.0 * margin;
        let h = f64::from(spec.height) - 2.0 * margin;
        Self {
            margin,
            scale: w.min(h / HEIGHT_RATIO).max(1.0),
            height: f64::from(spec.height),
        }
    }

    fn px(&self, (x, y): (f64, f64)) -> (f64, f64) {
        (self.margin + self.scale * x, self.height - self.margin - self.scale * y)
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fmt(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

/// Membership laid out by rows: `rows[j][i]` for the point with
/// `l3 = j / n`, `l2 = i / n`.
fn rows_of(grid: &SimplexGrid<f64>, mask: &[bool]) -> Vec<Vec<bool>> {
    let n = grid.n();
    let mut rows: Vec<Vec<bool>> = (0..=n).map(|j| vec![false; n - j + 1]).collect();
    for (idx, &m) in mask.iter().enumerate() {
        let c = grid.composition(idx);
        rows[c[2]][c[1]] = m;
    }
    rows
}

/// Renders a materialized three-class region with optional markers.
///
/// Member grid points are drawn as horizontal runs of lattice cells clipped
/// to the triangle. A first-order prediction is drawn as a circle, a
/// second-order prediction as contour lines of its density.
pub fn render_ternary(
    region: &CredalRegion<f64>,
    truth: Option<&SimplexPoint<f64>>,
    prediction: Option<&Prediction<f64>>,
    spec: &TernaryPlotSpec,
) -> Result<String> {
    if region.prediction.k() != 3 {
        return Err(Error::UnsupportedDimension {
            supported: 3,
            actual: region.prediction.k(),
        });
    }
    let (descriptor, mask) = match (region.grid(), region.mask()) {
        (Some(g), Some(m)) => (g, m),
        _ => {
            return Err(Error::InvalidArgument(
                "region must be materialized on a grid before plotting".into(),
            ))
        }
    };
    let grid = SimplexGrid::<f64>::build(descriptor.k, descriptor.n)?;
    let canvas = Canvas::new(spec);
    let corners = [(0.0, 0.0), (1.0, 0.0), (0.5, HEIGHT_RATIO)].map(|c| canvas.px(c));
    let triangle_points = corners
        .iter()
        .map(|(x, y)| format!("{},{}", fmt(*x), fmt(*y)))
        .collect::<Vec<_>>()
        .join(" ");

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = spec.width,
        h = spec.height
    );
    let _ = writeln!(
        svg,
        r#"<defs><clipPath id="simplex"><polygon points="{triangle_points}"/></clipPath></defs>"#
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);

    let inside = mask.iter().filter(|&&b| b).count();
    let fill = format!(
        r#"fill="{}" fill-opacity="{}""#,
        esc(&spec.region_fill),
        fmt(spec.region_opacity)
    );
    if inside == mask.len() {
        let _ = writeln!(svg, r#"<polygon class="region" points="{triangle_points}" {fill}/>"#);
    } else if inside > 0 {
        let n = grid.n() as f64;
        let _ = writeln!(svg, r#"<g class="region" clip-path="url(#simplex)" {fill}>"#);
        for (j, row) in rows_of(&grid, mask).iter().enumerate() {
            let mut i = 0;
            while i < row.len() {
                if !row[i] {
                    i += 1;
                    continue;
                }
                let start = i;
                while i < row.len() && row[i] {
                    i += 1;
                }
                let y = HEIGHT_RATIO * j as f64 / n;
                let x0 = (start as f64 + 0.5 * j as f64 - 0.5) / n;
                let x1 = ((i - 1) as f64 + 0.5 * j as f64 + 0.5) / n;
                let (px0, py_top) = canvas.px((x0, y + 0.5 * HEIGHT_RATIO / n));
                let (px1, py_bottom) = canvas.px((x1, y - 0.5 * HEIGHT_RATIO / n));
                let _ = writeln!(
                    svg,
                    r#"<rect x="{}" y="{}" width="{}" height="{}"/>"#,
                    fmt(px0),
                    fmt(py_top),
                    fmt(px1 - px0),
                    fmt(py_bottom - py_top)
                );
            }
        }
        let _ = writeln!(svg, "</g>");
    }

    let _ = writeln!(
        svg,
        r##"<polygon class="simplex" points="{triangle_points}" fill="none" stroke="#333333" stroke-width="1.5"/>"##
    );
    for (label, (x, y), (dx, dy)) in [
        ("1", corners[0], (-14.0, 16.0)),
        ("2", corners[1], (6.0, 16.0)),
        ("3", corners[2], (-4.0, -8.0)),
    ] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14">{label}</text>"#,
            fmt(x + dx),
            fmt(y + dy)
        );
    }

    if let Some(pred) = prediction {
        match pred {
            Prediction::Distribution(p) => {
                let (cx, cy) = canvas.px(barycentric_to_cartesian(p)?);
                let _ = writeln!(
                    svg,
                    r#"<circle class="prediction" cx="{}" cy="{}" r="{}" fill="{}"/>"#,
                    fmt(cx),
                    fmt(cy),
                    fmt(spec.marker_size / 2.0),
                    esc(&spec.prediction_color)
                );
            }
            Prediction::Dirichlet(theta) => {
                write_contours(&mut svg, &canvas, &grid, theta, spec)?;
            }
        }
    }

    if let Some(t) = truth {
        let (cx, cy) = canvas.px(barycentric_to_cartesian(t)?);
        let s = spec.marker_size;
        let _ = writeln!(
            svg,
            r#"<rect class="truth" x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
            fmt(cx - s / 2.0),
            fmt(cy - s / 2.0),
            fmt(s),
            fmt(s),
            esc(&spec.truth_color)
        );
    }

    if let Some(eff) = region.efficiency() {
        let _ = writeln!(
            svg,
            r#"<text class="caption" x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{} efficiency {:.3}</text>"#,
            fmt(f64::from(spec.width) / 2.0),
            fmt(f64::from(spec.height) - 8.0),
            esc(region.kind.as_str()),
            eff
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn write_contours(
    svg: &mut String,
    canvas: &Canvas,
    grid: &SimplexGrid<f64>,
    theta: &DirichletParams<f64>,
    spec: &TernaryPlotSpec,
) -> Result<()> {
    let n = grid.n();
    // Relative likelihood is a monotone transform of the density, so its
    // quantile level sets coincide with those of the density.
    let mut values: Vec<Vec<f64>> = (0..=n).map(|j| vec![0.0; n - j + 1]).collect();
    let mut flat = Vec::with_capacity(grid.len());
    for (idx, p) in grid.points().iter().enumerate() {
        let v = 1.0 - dirichlet_relative_nonconformity(p, theta)?;
        let c = grid.composition(idx);
        values[c[2]][c[1]] = v;
        flat.push(v);
    }
    flat.sort_by(f64::total_cmp);
    let unit = |a: f64, b: f64| ((a + 0.5 * b) / n as f64, HEIGHT_RATIO * b / n as f64);

    for &q in &spec.contour_levels {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidArgument(format!("contour quantile {q} outside [0, 1]")));
        }
        let level = flat[((q * (flat.len() - 1) as f64).floor()) as usize];
        let mut path = String::new();
        let mut tri = |verts: [(usize, usize); 3]| {
            let v = verts.map(|(a, b)| values[b][a]);
            let mut pts = Vec::with_capacity(2);
            for (s, e) in [(0, 1), (1, 2), (2, 0)] {
                if (v[s] >= level) != (v[e] >= level) {
                    let t = (level - v[s]) / (v[e] - v[s]);
                    let (ax, ay) = unit(verts[s].0 as f64, verts[s].1 as f64);
                    let (bx, by) = unit(verts[e].0 as f64, verts[e].1 as f64);
                    pts.push(canvas.px((ax + t * (bx - ax), ay + t * (by - ay))));
                }
            }
            if pts.len() == 2 {
                let _ = write!(
                    path,
                    "M{} {}L{} {}",
                    fmt(pts[0].0),
                    fmt(pts[0].1),
                    fmt(pts[1].0),
                    fmt(pts[1].1)
                );
            }
        };
        for b in 0..n {
            for a in 0..n - b {
                tri([(a, b), (a + 1, b), (a, b + 1)]);
                if a + b + 2 <= n {
                    tri([(a + 1, b), (a + 1, b + 1), (a, b + 1)]);
                }
            }
        }
        if !path.is_empty() {
            let _ = writeln!(
                svg,
                r#"<path class="contour" data-quantile="{}" d="{path}" fill="none" stroke="{}" stroke-width="1"/>"#,
                fmt(q),
                esc(&spec.prediction_color)
            );
        }
    }
    Ok(())
}
