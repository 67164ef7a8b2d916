//! Minimal SVG line plots and heat maps.

use std::fmt::Write as _;

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 400.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 50.0;
const TICKS: usize = 5;

pub struct Series {
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
}

pub struct Marker {
    pub at: (f64, f64),
    pub label: String,
}

pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub equal_aspect: bool,
    pub series: Vec<Series>,
    pub markers: Vec<Marker>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

struct Frame {
    x0: f64,
    y0: f64,
    lo: (f64, f64),
    hi: (f64, f64),
}

impl Frame {
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let w = PANEL_W - MARGIN_L - MARGIN_R;
        let h = PANEL_H - MARGIN_T - MARGIN_B;
        let px = self.x0 + MARGIN_L + (x - self.lo.0) / (self.hi.0 - self.lo.0) * w;
        let py = self.y0 + MARGIN_T + (self.hi.1 - y) / (self.hi.1 - self.lo.1) * h;
        (px, py)
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (-1.0, 1.0);
    }
    let span = hi - lo;
    if span <= 0.0 {
        let pad = lo.abs().max(1.0) * 0.1;
        (lo - pad, hi + pad)
    } else {
        (lo - 0.05 * span, hi + 0.05 * span)
    }
}

impl LinePlot {
    fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
        let mut ys = xs;
        let pts = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .chain(self.markers.iter().map(|m| m.at));
        for (x, y) in pts.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            xs = (xs.0.min(tx(x)), xs.1.max(tx(x)));
            ys = (ys.0.min(y), ys.1.max(y));
        }
        let (mut xs, mut ys) = (padded(xs.0, xs.1), padded(ys.0, ys.1));
        if self.equal_aspect {
            let w = PANEL_W - MARGIN_L - MARGIN_R;
            let h = PANEL_H - MARGIN_T - MARGIN_B;
            let scale = ((xs.1 - xs.0) / w).max((ys.1 - ys.0) / h);
            let (cx, cy) = ((xs.0 + xs.1) / 2.0, (ys.0 + ys.1) / 2.0);
            xs = (cx - scale * w / 2.0, cx + scale * w / 2.0);
            ys = (cy - scale * h / 2.0, cy + scale * h / 2.0);
        }
        ((xs.0, ys.0), (xs.1, ys.1))
    }

    fn render_at(&self, out: &mut String, x0: f64, y0: f64) {
        let (lo, hi) = self.bounds();
        let f = Frame { x0, y0, lo, hi };
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let (l, t) = (x0 + MARGIN_L, y0 + MARGIN_T);
        let (w, h) = (PANEL_W - MARGIN_L - MARGIN_R, PANEL_H - MARGIN_T - MARGIN_B);
        let _ = writeln!(
            out,
            r##"<rect x="{l}" y="{t}" width="{w}" height="{h}" fill="none" stroke="#444"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="15">{}</text>"#,
            l + w / 2.0,
            y0 + 22.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            l + w / 2.0,
            y0 + PANEL_H - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 {} {})">{}</text>"#,
            x0 + 16.0,
            t + h / 2.0,
            x0 + 16.0,
            t + h / 2.0,
            escape(&self.y_label)
        );
        for i in 0..=TICKS {
            let fr = i as f64 / TICKS as f64;
            let xv = lo.0 + fr * (hi.0 - lo.0);
            let yv = lo.1 + fr * (hi.1 - lo.1);
            let (px, _) = f.map(xv, lo.1);
            let (_, py) = f.map(lo.0, yv);
            let xl = if self.log_x { 10f64.powf(xv) } else { xv };
            let _ = writeln!(
                out,
                r##"<line x1="{px}" y1="{t}" x2="{px}" y2="{}" stroke="#ddd"/><text x="{px}" y="{}" text-anchor="middle" font-size="10">{}</text>"##,
                t + h,
                t + h + 14.0,
                fmt_tick(xl)
            );
            let _ = writeln!(
                out,
                r##"<line x1="{l}" y1="{py}" x2="{}" y2="{py}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end" font-size="10">{}</text>"##,
                l + w,
                l - 4.0,
                py + 3.0,
                fmt_tick(yv)
            );
        }
        for s in &self.series {
            let mut d = String::new();
            let mut pen_down = false;
            for &(x, y) in &s.points {
                if !(x.is_finite() && y.is_finite()) || (self.log_x && x <= 0.0) {
                    pen_down = false;
                    continue;
                }
                let (px, py) = f.map(tx(x), y);
                let _ = write!(d, "{}{px:.2},{py:.2} ", if pen_down { "L" } else { "M" });
                pen_down = true;
            }
            let _ = writeln!(
                out,
                r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                d.trim_end(),
                s.color
            );
        }
        for m in &self.markers {
            let (px, py) = f.map(tx(m.at.0), m.at.1);
            let _ = writeln!(
                out,
                r##"<g class="marker"><line x1="{}" y1="{py}" x2="{}" y2="{py}" stroke="#c00" stroke-width="2"/><line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="#c00" stroke-width="2"/><text x="{}" y="{}" font-size="11" fill="#c00">{}</text></g>"##,
                px - 6.0,
                px + 6.0,
                py - 6.0,
                py + 6.0,
                px + 8.0,
                py - 8.0,
                escape(&m.label)
            );
        }
    }
}

fn document(width: f64, height: f64, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

/// Plots stacked vertically in one document.
pub fn stacked(plots: &[LinePlot]) -> String {
    let mut body = String::new();
    for (i, p) in plots.iter().enumerate() {
        p.render_at(&mut body, 0.0, i as f64 * PANEL_H);
    }
    document(PANEL_W, PANEL_H * plots.len() as f64, &body)
}

pub struct HeatCell {
    pub color: &'static str,
    pub label: String,
}

/// Grid of coloured cells; `cells` is row-major in `rows`.
pub fn heat_map(
    title: &str,
    row_label: &str,
    col_label: &str,
    rows: &[f64],
    cols: &[f64],
    cells: &[HeatCell],
    legend: &[(&'static str, &str)],
) -> String {
    let cell = 48.0;
    let (l, t) = (MARGIN_L + 10.0, MARGIN_T + 10.0);
    let width = l + cell * cols.len() as f64 + 160.0;
    let height = t + cell * rows.len() as f64 + MARGIN_B;
    let mut body = String::new();
    let _ = writeln!(
        body,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    for (r, rv) in rows.iter().enumerate() {
        // first row at the bottom
        let y = t + cell * (rows.len() - 1 - r) as f64;
        let _ = writeln!(
            body,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{}</text>"#,
            l - 4.0,
            y + cell / 2.0 + 3.0,
            fmt_tick(*rv)
        );
        for (c, _) in cols.iter().enumerate() {
            let x = l + cell * c as f64;
            let hc = &cells[r * cols.len() + c];
            let _ = writeln!(
                body,
                r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{}" stroke="#fff"/><text x="{}" y="{}" text-anchor="middle" font-size="10">{}</text>"##,
                hc.color,
                x + cell / 2.0,
                y + cell / 2.0 + 3.0,
                escape(&hc.label)
            );
        }
    }
    let bottom = t + cell * rows.len() as f64;
    for (c, cv) in cols.iter().enumerate() {
        let _ = writeln!(
            body,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            l + cell * (c as f64 + 0.5),
            bottom + 14.0,
            fmt_tick(*cv)
        );
    }
    let _ = writeln!(
        body,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
        l + cell * cols.len() as f64 / 2.0,
        bottom + 34.0,
        escape(col_label)
    );
    let _ = writeln!(
        body,
        r#"<text x="16" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
        t + cell * rows.len() as f64 / 2.0,
        t + cell * rows.len() as f64 / 2.0,
        escape(row_label)
    );
    let lx = l + cell * cols.len() as f64 + 16.0;
    for (i, (color, text)) in legend.iter().enumerate() {
        let y = t + 20.0 * i as f64;
        let _ = writeln!(
            body,
            r#"<rect x="{lx}" y="{y}" width="14" height="14" fill="{color}"/><text x="{}" y="{}" font-size="11">{}</text>"#,
            lx + 20.0,
            y + 11.0,
            escape(text)
        );
    }
    document(width, height, &body)
}
