//! SVG output for diagrams.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::fortune::VoronoiDiagram;
use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorScheme {
    /// Per-cell pastel fills derived from the site id.
    Pastel,
    /// Outlines only.
    Mono,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderStyle {
    pub stroke_width: f64,
    pub site_radius: f64,
    pub scheme: ColorScheme,
    /// Width of the image in pixels; height follows the box aspect ratio.
    pub size_px: u32,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            stroke_width: 1.0,
            site_radius: 2.5,
            scheme: ColorScheme::Pastel,
            size_px: 800,
        }
    }
}

impl RenderStyle {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.stroke_width > 0.0 && self.stroke_width.is_finite()) {
            return Err("stroke width must be positive".into());
        }
        if !(self.site_radius > 0.0 && self.site_radius.is_finite()) {
            return Err("site radius must be positive".into());
        }
        if self.size_px == 0 {
            return Err("image size must be positive".into());
        }
        Ok(())
    }
}

fn fill_for(id: u32) -> String {
    // Golden-angle hue walk keeps neighbouring ids apart.
    let hue = (id as u64 * 137_508 / 1000) % 360;
    format!("hsl({hue},55%,86%)")
}

/// Renders cells, internal edges and site markers. World y grows upward,
/// so it is flipped into SVG space.
pub fn render_svg(d: &VoronoiDiagram, style: &RenderStyle) -> String {
    let b = d.clip_box;
    let scale = style.size_px as f64 / b.width();
    let w = style.size_px as f64;
    let h = b.height() * scale;
    let map = |p: Point| ((p.x - b.min.x) * scale, (b.max.y - p.y) * scale);

    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.3}\" height=\"{h:.3}\" viewBox=\"0 0 {w:.3} {h:.3}\">"
    );
    let _ = writeln!(
        s,
        "<rect class=\"frame\" x=\"0\" y=\"0\" width=\"{w:.3}\" height=\"{h:.3}\" fill=\"white\" stroke=\"black\" stroke-width=\"{:.3}\"/>",
        style.stroke_width
    );

    s.push_str("<g class=\"cells\">\n");
    for c in &d.cells {
        let pts: Vec<String> = c
            .polygon
            .iter()
            .map(|&p| {
                let (x, y) = map(p);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        let fill = match style.scheme {
            ColorScheme::Pastel => fill_for(c.site),
            ColorScheme::Mono => "none".to_string(),
        };
        let _ = writeln!(
            s,
            "<polygon class=\"cell\" data-site=\"{}\" points=\"{}\" fill=\"{fill}\" stroke=\"none\"/>",
            c.site,
            pts.join(" ")
        );
    }
    s.push_str("</g>\n<g class=\"edges\" stroke=\"black\" stroke-width=\"");
    let _ = writeln!(s, "{:.3}\">", style.stroke_width);
    for e in d.internal_edges() {
        let (x1, y1) = map(e.segment.a);
        let (x2, y2) = map(e.segment.b);
        let _ = writeln!(
            s,
            "<line class=\"edge\" data-sites=\"{} {}\" x1=\"{x1:.3}\" y1=\"{y1:.3}\" x2=\"{x2:.3}\" y2=\"{y2:.3}\"/>",
            e.left, e.right
        );
    }
    s.push_str("</g>\n<g class=\"sites\" fill=\"black\">\n");
    for site in &d.sites {
        let (x, y) = map(site.position);
        let _ = writeln!(
            s,
            "<circle class=\"site\" data-site=\"{}\" cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"{:.3}\"/>",
            site.id, style.site_radius
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fortune::build_voronoi;
    use crate::geometry::{BoundingBox, Site};

    #[test]
    fn two_sites_render_one_edge() {
        let b = BoundingBox::from_coords(0.0, 0.0, 10.0, 5.0).unwrap();
        let d = build_voronoi(&[Site::new(0, 2.0, 2.0), Site::new(1, 8.0, 2.0)], b).unwrap();
        let svg = render_svg(&d, &RenderStyle::default());
        assert!(svg.contains("viewBox=\"0 0 800.000 400.000\""));
        assert_eq!(svg.matches("class=\"edge\"").count(), 1);
        assert_eq!(svg.matches("class=\"cell\"").count(), 2);
        assert_eq!(svg.matches("class=\"site\"").count(), 2);
        // Vertical bisector at x = 5 maps to pixel 400.
        assert!(svg.contains("x1=\"400.000\""));
    }
}
