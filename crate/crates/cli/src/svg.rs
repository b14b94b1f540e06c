//! Minimal deterministic SVG charts: fixed 800x500 canvas, fixed element
//! order, fixed-precision coordinates. Identical inputs produce identical
//! bytes.

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;

const PALETTE: [&str; 6] = ["#c0392b", "#2980b9", "#27ae60", "#8e44ad", "#d35400", "#16a085"];

/// One plotted series: points in data space, optional symmetric whiskers.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Half-extent of the vertical whisker per point; empty for none.
    pub whiskers: Vec<f64>,
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(1e-12);
        MARGIN_LEFT + (v - self.x_min) / span * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(1e-12);
        HEIGHT - MARGIN_BOTTOM - (v - self.y_min) / span * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 1000.0 || a < 0.01 {
        format!("{v:.2e}")
    } else if a >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders a line/scatter chart with optional whiskers and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for (i, &(x, y)) in s.points.iter().enumerate() {
            let w = s.whiskers.get(i).copied().unwrap_or(0.0);
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y - w);
            y_max = y_max.max(y + w);
        }
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if x_min == x_max {
        x_min -= 0.5;
        x_max += 0.5;
    }
    if y_min == y_max {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let y_pad = (y_max - y_min) * 0.08;
    let frame = Frame { x_min, x_max, y_min: y_min - y_pad, y_max: y_max + y_pad };

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"monospace\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        fmt(WIDTH / 2.0),
        escape(title)
    ));

    // Axes.
    let (x0, y0) = (MARGIN_LEFT, HEIGHT - MARGIN_BOTTOM);
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        fmt(x0), fmt(MARGIN_TOP), fmt(x0), fmt(y0)
    ));
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        fmt(x0), fmt(y0), fmt(WIDTH - MARGIN_RIGHT), fmt(y0)
    ));

    // Ticks: five per axis at even fractions.
    for i in 0..=4 {
        let f = f64::from(i) / 4.0;
        let xv = frame.x_min + f * (frame.x_max - frame.x_min);
        let xp = frame.x(xv);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
            fmt(xp), fmt(y0), fmt(xp), fmt(y0 + 5.0)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            fmt(xp), fmt(y0 + 18.0), fmt_tick(xv)
        ));
        let yv = frame.y_min + f * (frame.y_max - frame.y_min);
        let yp = frame.y(yv);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
            fmt(x0 - 5.0), fmt(yp), fmt(x0), fmt(yp)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            fmt(x0 - 8.0), fmt(yp + 4.0), fmt_tick(yv)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        fmt((MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0),
        fmt(HEIGHT - 12.0),
        escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"monospace\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        fmt(HEIGHT / 2.0),
        fmt(HEIGHT / 2.0),
        escape(y_label)
    ));

    // Series in given order: whiskers, then line, then markers.
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        for (i, &(x, y)) in s.points.iter().enumerate() {
            let w = s.whiskers.get(i).copied().unwrap_or(0.0);
            if w > 0.0 {
                let (xp, lo, hi) = (frame.x(x), frame.y(y - w), frame.y(y + w));
                out.push_str(&format!(
                    "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"1\"/>\n",
                    fmt(xp), fmt(lo), fmt(xp), fmt(hi)
                ));
                for yy in [lo, hi] {
                    out.push_str(&format!(
                        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"1\"/>\n",
                        fmt(xp - 4.0), fmt(yy), fmt(xp + 4.0), fmt(yy)
                    ));
                }
            }
        }
        if s.points.len() > 1 {
            let path: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{},{}", fmt(frame.x(x)), fmt(frame.y(y))))
                .collect();
            out.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                path.join(" ")
            ));
        }
        for &(x, y) in &s.points {
            out.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>\n",
                fmt(frame.x(x)),
                fmt(frame.y(y))
            ));
        }
        // Legend entry.
        let ly = MARGIN_TOP + 16.0 * si as f64;
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n",
            fmt(WIDTH - MARGIN_RIGHT - 170.0),
            fmt(ly)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\">{}</text>\n",
            fmt(WIDTH - MARGIN_RIGHT - 155.0),
            fmt(ly + 9.0),
            escape(&s.label)
        ));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_identical_bytes() {
        let series = vec![Series {
            label: "err".to_string(),
            points: vec![(1.0, 8.0), (2.0, 7.5), (4.0, 7.9)],
            whiskers: vec![0.2, 0.1, 0.3],
        }];
        let a = line_chart("t", "x", "y", &series);
        let b = line_chart("t", "x", "y", &series);
        assert_eq!(a.as_bytes(), b.as_bytes());
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
    }

    #[test]
    fn zero_whiskers_draw_no_extent() {
        let series = vec![Series {
            label: "one".to_string(),
            points: vec![(1.0, 5.0)],
            whiskers: vec![0.0],
        }];
        let svg = line_chart("t", "x", "y", &series);
        // One marker, no whisker line for the zero-extent case.
        assert_eq!(svg.matches("<circle").count(), 1);
    }
}
