//! SVG overlay: tract boundaries, the cut, rays colored by region,
//! periodic points by class and contour pieces by arc type.

use std::fmt::Write;

use fixray::fixed_points::Classification;
use fixray::geom::Rect;
use fixray::structure::StructuralSetup;
use num_complex::Complex64 as C64;

pub const SIZE: u32 = 1200;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Stroke color of a contour arc of the given type.
fn arc_color(arc_type: u8) -> &'static str {
    match arc_type {
        0 | 1 => "#1f4fd6",
        2 => "#1a9e3a",
        _ => "#d12a2a",
    }
}

#[derive(Default)]
pub struct Overlay {
    /// Polylines with a region index for the color.
    pub rays: Vec<(Vec<C64>, usize)>,
    pub points: Vec<(C64, Classification)>,
    /// Polylines with their arc type.
    pub pieces: Vec<(Vec<C64>, u8)>,
}

fn polyline(out: &mut String, pts: &[C64], stroke: &str, width: f64, extra: &str) {
    if pts.len() < 2 {
        return;
    }
    let mut d = String::new();
    for (k, z) in pts.iter().enumerate() {
        if !z.is_finite() {
            continue;
        }
        if k > 0 {
            d.push(' ');
        }
        let _ = write!(d, "{:.5},{:.5}", z.re, -z.im);
    }
    let _ = writeln!(
        out,
        r#"<polyline points="{d}" fill="none" stroke="{stroke}" stroke-width="{width}" vector-effect="non-scaling-stroke"{extra}/>"#
    );
}

/// Renders the overlay on the setup's bbox with `y` pointing up.
pub fn render(setup: &StructuralSetup, view: Rect, overlay: &Overlay) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="{:.5} {:.5} {:.5} {:.5}" preserveAspectRatio="xMidYMid meet">"#,
        view.x0,
        -view.y1,
        view.width(),
        view.height()
    );
    let _ = writeln!(
        out,
        r##"<rect x="{:.5}" y="{:.5}" width="{:.5}" height="{:.5}" fill="#ffffff"/>"##,
        view.x0,
        -view.y1,
        view.width(),
        view.height()
    );
    let _ = writeln!(
        out,
        r##"<circle cx="{:.5}" cy="{:.5}" r="{:.5}" fill="none" stroke="#888888" stroke-width="1" vector-effect="non-scaling-stroke"/>"##,
        setup.disk.center.re,
        -setup.disk.center.im,
        setup.disk.radius
    );
    for t in &setup.tracts {
        for c in &t.boundary {
            polyline(&mut out, c.points(), "#999999", 1.0, "");
        }
    }
    polyline(
        &mut out,
        setup.delta.points(),
        "#000000",
        1.0,
        r#" stroke-dasharray="6 4""#,
    );
    for (pts, arc_type) in &overlay.pieces {
        polyline(&mut out, pts, arc_color(*arc_type), 2.0, "");
    }
    for (pts, region) in &overlay.rays {
        polyline(&mut out, pts, PALETTE[region % PALETTE.len()], 1.5, "");
    }
    let r = 0.004 * view.width().max(view.height());
    for (z, class) in &overlay.points {
        let (x, y) = (z.re, -z.im);
        let _ = match class {
            Classification::Attracting => writeln!(
                out,
                r##"<circle cx="{x:.5}" cy="{y:.5}" r="{r:.5}" fill="#000000"/>"##
            ),
            Classification::Repelling => writeln!(
                out,
                r##"<circle cx="{x:.5}" cy="{y:.5}" r="{r:.5}" fill="#ffffff" stroke="#000000" stroke-width="1" vector-effect="non-scaling-stroke"/>"##
            ),
            Classification::Parabolic => writeln!(
                out,
                r##"<rect x="{:.5}" y="{:.5}" width="{:.5}" height="{:.5}" fill="#d12a2a" transform="rotate(45 {x:.5} {y:.5})"/>"##,
                x - r,
                y - r,
                2.0 * r,
                2.0 * r
            ),
            _ => writeln!(
                out,
                r##"<polygon points="{:.5},{:.5} {:.5},{:.5} {:.5},{:.5}" fill="#9467bd"/>"##,
                x,
                y - r,
                x - r,
                y + r,
                x + r,
                y + r
            ),
        };
    }
    out.push_str("</svg>\n");
    out
}
