//! Minimal SVG output for polygons, diagrams and spectra.

use std::fmt::Write;

use super::WeightedPolygon;

/// Figure frame in world coordinates.
#[derive(Clone, Copy, Debug)]
pub struct SvgStyle {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub width: f64,
    pub height: f64,
}

impl SvgStyle {
    pub fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        SvgStyle {
            x,
            y,
            width: 480.0,
            height: 360.0,
        }
    }
}

/// Accumulates SVG elements in world coordinates.
pub struct Canvas {
    style: SvgStyle,
    body: String,
}

impl Canvas {
    pub fn new(style: SvgStyle) -> Self {
        Canvas {
            style,
            body: String::new(),
        }
    }

    fn map(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let s = &self.style;
        (
            (x - s.x.0) / (s.x.1 - s.x.0) * s.width,
            s.height - (y - s.y.0) / (s.y.1 - s.y.0) * s.height,
        )
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, dashed: bool) {
        let coords: Vec<String> = pts
            .iter()
            .map(|&p| {
                let (a, b) = self.map(p);
                format!("{a:.2},{b:.2}")
            })
            .collect();
        let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        let _ = writeln!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"{dash}/>",
            coords.join(" ")
        );
    }

    pub fn polygon(&mut self, pts: &[(f64, f64)], fill: &str) {
        let coords: Vec<String> = pts
            .iter()
            .map(|&p| {
                let (a, b) = self.map(p);
                format!("{a:.2},{b:.2}")
            })
            .collect();
        let _ = writeln!(
            self.body,
            "<polygon points=\"{}\" fill=\"{fill}\" fill-opacity=\"0.35\" stroke=\"black\" stroke-width=\"1.5\"/>",
            coords.join(" ")
        );
    }

    pub fn dot(&mut self, p: (f64, f64), r: f64, fill: &str) {
        let (a, b) = self.map(p);
        let _ = writeln!(self.body, "<circle cx=\"{a:.2}\" cy=\"{b:.2}\" r=\"{r}\" fill=\"{fill}\"/>");
    }

    pub fn text(&mut self, p: (f64, f64), s: &str) {
        let (a, b) = self.map(p);
        let _ = writeln!(self.body, "<text x=\"{a:.2}\" y=\"{b:.2}\" font-size=\"11\">{s}</text>");
    }

    pub fn finish(self, comment: &str) -> String {
        let s = self.style;
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<!-- {} -->\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            comment.replace("--", "- -"),
            s.width,
            s.height,
            s.width,
            s.height,
            self.body
        )
    }
}

/// Two canvases next to each other in one figure.
pub fn side_by_side(left: Canvas, right: Canvas, comment: &str) -> String {
    let (a, b) = (left.style, right.style);
    let width = a.width + b.width;
    let height = a.height.max(b.height);
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<!-- {} -->\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<g>\n{}</g>\n<g transform=\"translate({},0)\">\n{}</g>\n</svg>\n",
        comment.replace("--", "- -"),
        left.body,
        a.width,
        right.body
    )
}

/// Weighted polygon with its cuts as dashed half-lines from `cut_origins`
/// (one height per cut) in the direction of the cut sign.
pub fn polygon_svg(wp: &WeightedPolygon, cut_origins: &[f64], style: SvgStyle, comment: &str) -> String {
    let reach = (style.x.1 - style.x.0).abs() + (style.y.1 - style.y.0).abs();
    let mut c = Canvas::new(style);
    let boundary = wp.polygon.boundary_f64(reach);
    c.polygon(&boundary, "#8fb3d9");
    for v in wp.polygon.vertices() {
        c.dot(v.to_f64(), 3.0, "black");
    }
    for (cut, &y0) in wp.cuts.iter().zip(cut_origins) {
        let x = num_traits::ToPrimitive::to_f64(&cut.x).unwrap_or(f64::NAN);
        let y1 = if cut.sign > 0 { style.y.1 } else { style.y.0 };
        c.polyline(&[(x, y0), (x, y1)], "#c0392b", true);
        c.dot((x, y0), 3.5, "#c0392b");
    }
    c.finish(comment)
}
