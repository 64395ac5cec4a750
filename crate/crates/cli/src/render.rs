//! Minimal SVG scenes: banded density, cells, agents, power disks.

use std::fmt::Write;

use coverage_core::geometry::{Aabb, ConvexPolygon};
use coverage_core::{Density, Point};

const WIDTH: f64 = 640.0;
const MARGIN: f64 = 12.0;
/// Number of density bands.
pub const LEVELS: usize = 16;

pub struct Canvas {
    bbox: Aabb<f64>,
    scale: f64,
    height: f64,
    body: String,
}

impl Canvas {
    pub fn new(bbox: Aabb<f64>) -> Self {
        let scale = (WIDTH - 2.0 * MARGIN) / bbox.width();
        let height = bbox.height() * scale + 2.0 * MARGIN;
        Self {
            bbox,
            scale,
            height,
            body: String::new(),
        }
    }

    fn px(&self, p: Point) -> (f64, f64) {
        (
            MARGIN + (p.x - self.bbox.min.x) * self.scale,
            MARGIN + (self.bbox.max.y - p.y) * self.scale,
        )
    }

    /// φ quantized into [`LEVELS`] bands on a `res × res` raster; band 0 is left blank.
    pub fn density_bands(&mut self, phi: &Density, res: usize) {
        let (dx, dy) = (self.bbox.width() / res as f64, self.bbox.height() / res as f64);
        let mut values = vec![0.0; res * res];
        for j in 0..res {
            for i in 0..res {
                let q = Point::new(self.bbox.min.x + (i as f64 + 0.5) * dx, self.bbox.min.y + (j as f64 + 0.5) * dy);
                values[j * res + i] = if phi.workspace().contains(q) { phi.eval(q) } else { 0.0 };
            }
        }
        let peak = values.iter().fold(0.0f64, |m, v| m.max(*v));
        if peak <= 0.0 {
            return;
        }
        let level = |v: f64| ((v / peak * LEVELS as f64) as usize).min(LEVELS - 1);
        let (w, h) = (dx * self.scale, dy * self.scale);
        self.body.push_str("<g id=\"density\" stroke=\"none\">\n");
        for j in 0..res {
            let mut i = 0;
            while i < res {
                let l = level(values[j * res + i]);
                let start = i;
                while i < res && level(values[j * res + i]) == l {
                    i += 1;
                }
                if l == 0 {
                    continue;
                }
                let corner = Point::new(self.bbox.min.x + start as f64 * dx, self.bbox.min.y + (j + 1) as f64 * dy);
                let (x, y) = self.px(corner);
                let shade = 235 - (l * 170 / (LEVELS - 1)) as i32;
                let _ = writeln!(
                    self.body,
                    "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"rgb({shade},{},{})\"/>",
                    w * (i - start) as f64 + 0.3,
                    h + 0.3,
                    shade + 10,
                    255,
                );
            }
        }
        self.body.push_str("</g>\n");
    }

    pub fn polygon(&mut self, poly: &ConvexPolygon<f64>, stroke: &str, width: f64) {
        let pts: Vec<String> = poly
            .vertices()
            .iter()
            .map(|v| {
                let (x, y) = self.px(*v);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            self.body,
            "<polygon points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width}\"/>",
            pts.join(" ")
        );
    }

    pub fn dashed_circle(&mut self, center: Point, radius: f64, stroke: &str) {
        let (x, y) = self.px(center);
        let _ = writeln!(
            self.body,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{:.2}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>",
            radius * self.scale
        );
    }

    pub fn dot(&mut self, p: Point, radius_px: f64, fill: &str) {
        let (x, y) = self.px(p);
        let _ = writeln!(self.body, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{radius_px}\" fill=\"{fill}\"/>");
    }

    pub fn marker(&mut self, p: Point, size_px: f64, stroke: &str) {
        let (x, y) = self.px(p);
        let h = size_px / 2.0;
        let _ = writeln!(
            self.body,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{size_px}\" height=\"{size_px}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.2\"/>",
            x - h,
            y - h
        );
    }

    pub fn label(&mut self, p: Point, text: &str) {
        let (x, y) = self.px(p);
        let _ = writeln!(
            self.body,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\">{text}</text>",
            x + 5.0,
            y - 5.0
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{:.0}\" viewBox=\"0 0 {WIDTH} {:.2}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.height, self.height, self.body
        )
    }
}

/// Density bands, workspace outline, optional cells, dashed power disks and agents.
pub fn coverage_scene(
    phi: &Density,
    res: usize,
    cells: &[Option<ConvexPolygon<f64>>],
    positions: &[Point],
    radii: Option<&[f64]>,
) -> String {
    let w = phi.workspace();
    let mut c = Canvas::new(w.bounding_box());
    c.density_bands(phi, res);
    for cell in cells.iter().flatten() {
        c.polygon(cell, "#333333", 1.0);
    }
    c.polygon(w, "black", 2.0);
    if let Some(r) = radii {
        for (p, rho) in positions.iter().zip(r) {
            if *rho > 0.0 {
                c.dashed_circle(*p, *rho, "#c0392b");
            }
        }
    }
    for (i, p) in positions.iter().enumerate() {
        c.dot(*p, 4.0, "#c0392b");
        if positions.len() <= 32 {
            c.label(*p, &i.to_string());
        }
    }
    c.finish()
}

/// Density bands with a point cloud, for swarm frames.
pub fn swarm_scene(phi: &Density, res: usize, positions: &[Point]) -> String {
    let w = phi.workspace();
    let mut c = Canvas::new(w.bounding_box());
    c.density_bands(phi, res);
    c.polygon(w, "black", 2.0);
    for p in positions {
        c.dot(*p, 1.6, "#c0392b");
    }
    c.finish()
}

/// Density bands, PoIs as squares, agents drawn at their PoI with their footprints.
pub fn assignment_scene(
    phi: &Density,
    res: usize,
    pois: &[Point],
    placed: &[(usize, Point)],
    footprints: &[ConvexPolygon<f64>],
) -> String {
    let w = phi.workspace();
    let mut c = Canvas::new(w.bounding_box());
    c.density_bands(phi, res);
    c.polygon(w, "black", 2.0);
    for f in footprints {
        c.polygon(f, "#c0392b", 1.2);
    }
    for p in pois {
        c.marker(*p, 7.0, "#1f3a93");
    }
    for (agent, p) in placed {
        c.dot(*p, 4.0, "#c0392b");
        c.label(*p, &agent.to_string());
    }
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_is_well_formed() {
        let phi = Density::uniform(ConvexPolygon::unit_square());
        let svg = coverage_scene(&phi, 16, &[], &[Point::new(0.5, 0.5)], Some(&[0.2]));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("stroke-dasharray"));
    }
}
