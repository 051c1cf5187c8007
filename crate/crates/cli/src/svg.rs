//! Static SVG plots of conflict locations over the lane geometry.

use std::fmt::Write as _;

use sovm_core::network::Network;
use sovm_core::safety::{ConflictPoint, HeatmapGrid};

/// Upper end of the colour scale, seconds.
pub const SCALE_MAX_TTC: f64 = 3.0;

const PX_PER_M: f64 = 2.0;
const MARGIN_M: f64 = 10.0;
const LEGEND_W: f64 = 110.0;
const TITLE_H: f64 = 30.0;

pub enum Layer<'a> {
    Grid(&'a HeatmapGrid),
    Points(&'a [ConflictPoint]),
}

/// Red at 0 s, yellow at half scale, green at [`SCALE_MAX_TTC`] and beyond.
pub fn ttc_color(ttc: f64) -> String {
    let u = (ttc / SCALE_MAX_TTC).clamp(0.0, 1.0);
    let (a, b, t) = if u < 0.5 {
        ((215.0, 25.0, 28.0), (255.0, 221.0, 0.0), u / 0.5)
    } else {
        ((255.0, 221.0, 0.0), (26.0, 150.0, 65.0), (u - 0.5) / 0.5)
    };
    let mix = |p: f64, q: f64| (p + (q - p) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    y1: f64,
    plot_w: f64,
    plot_h: f64,
}

impl Frame {
    fn new(net: &Network) -> Frame {
        let (x0, y0, x1, y1) = net.bounds();
        let pad = MARGIN_M + net.lane_width_m;
        Frame {
            x0: x0 - pad,
            y1: y1 + pad,
            plot_w: (x1 - x0 + 2.0 * pad) * PX_PER_M,
            plot_h: (y1 - y0 + 2.0 * pad) * PX_PER_M,
        }
    }

    fn px(&self, x: f64) -> f64 {
        (x - self.x0) * PX_PER_M
    }

    fn py(&self, y: f64) -> f64 {
        TITLE_H + (self.y1 - y) * PX_PER_M
    }
}

/// Renders a heat map or raw conflict points over the network's lanes, with
/// a TTC colour scale and legend. Output depends only on the inputs.
pub fn render_heatmap_svg(layer: &Layer<'_>, net: &Network, title: &str) -> String {
    let fr = Frame::new(net);
    let width = fr.plot_w + LEGEND_W;
    let height = fr.plot_h + TITLE_H;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="#ffffff"/>"##);
    let _ = writeln!(s, r#"<text x="8" y="20" font-size="14">{}</text>"#, esc(title));

    let _ = writeln!(s, r##"<g id="lanes" stroke="#d0d0d0" fill="none">"##);
    let w = net.lane_width_m * PX_PER_M;
    for lane in &net.lanes {
        let (ax, ay) = lane.origin;
        let (bx, by) = lane.end_point();
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke-width="{w:.2}"/>"#,
            fr.px(ax),
            fr.py(ay),
            fr.px(bx),
            fr.py(by)
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r##"<g id="stop-bars" stroke="#404040" stroke-width="1.5">"##);
    let half = net.lane_width_m / 2.0;
    for lane in &net.lanes {
        if let Some(bar) = lane.stop_bar {
            let (cx, cy) = lane.point_at(bar);
            let (nx, ny) = (-lane.heading.1 * half, lane.heading.0 * half);
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
                fr.px(cx - nx),
                fr.py(cy - ny),
                fr.px(cx + nx),
                fr.py(cy + ny)
            );
        }
    }
    let _ = writeln!(s, "</g>");

    match layer {
        Layer::Grid(grid) => {
            let _ = writeln!(s, r#"<g id="cells" stroke="none">"#);
            let side = grid.cell_size * PX_PER_M;
            for (&(ix, iy), c) in &grid.cells {
                let (x, y) = grid.cell_origin(ix, iy);
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{side:.2}" height="{side:.2}" fill="{}"><title>{:.3} s, n={}</title></rect>"#,
                    fr.px(x),
                    fr.py(y + grid.cell_size),
                    ttc_color(c.mean_ttc),
                    c.mean_ttc,
                    c.count
                );
            }
            let _ = writeln!(s, "</g>");
        }
        Layer::Points(points) => {
            let _ = writeln!(s, r#"<g id="points" stroke="none" fill-opacity="0.8">"#);
            for p in points.iter() {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{}"/>"#,
                    fr.px(p.x),
                    fr.py(p.y),
                    ttc_color(p.ttc)
                );
            }
            let _ = writeln!(s, "</g>");
        }
    }

    // legend: vertical bar, 0 s at the bottom
    let lx = fr.plot_w + 20.0;
    let top = TITLE_H + 20.0;
    let bar_h = 200.0;
    let steps = 30;
    let _ = writeln!(s, r#"<g id="legend" font-size="11">"#);
    let _ = writeln!(s, r#"<text x="{lx:.2}" y="{:.2}">TTC (s)</text>"#, top - 6.0);
    for k in 0..steps {
        let ttc = SCALE_MAX_TTC * (k as f64 + 0.5) / steps as f64;
        let h = bar_h / steps as f64;
        let y = top + bar_h - (k as f64 + 1.0) * h;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.2}" y="{y:.2}" width="18" height="{:.2}" fill="{}"/>"#,
            h + 0.01,
            ttc_color(ttc)
        );
    }
    for tick in 0..=3 {
        let y = top + bar_h - bar_h * tick as f64 / SCALE_MAX_TTC;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{tick}</text>"#,
            lx + 24.0,
            y + 4.0
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_ends() {
        assert_eq!(ttc_color(0.0), "#d7191c");
        assert_eq!(ttc_color(3.0), "#1a9641");
        assert_eq!(ttc_color(9.0), "#1a9641");
        assert_eq!(ttc_color(1.5), "#ffdd00");
    }
}
