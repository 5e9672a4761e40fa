//! Hand-written SVG for the report figures. Output depends only on the
//! numbers passed in: no timestamps, ids or absolute paths.

use std::fmt::Write as _;

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#7f7f7f", "#9467bd", "#8c564b", "#e377c2"];

pub fn colour(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Svg { body: String::new(), width, height }
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        writeln!(
            self.body,
            r#"<text x="{x:.1}" y="{y:.1}" font-size="{size}" text-anchor="{anchor}">{}</text>"#,
            esc(s)
        )
        .unwrap();
    }

    pub fn line(&mut self, (x1, y1): (f64, f64), (x2, y2): (f64, f64), stroke: &str, width: f64, dash: bool) {
        let dash = if dash { r#" stroke-dasharray="4 3""# } else { "" };
        writeln!(
            self.body,
            r#"<line x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke="{stroke}" stroke-width="{width}"{dash}/>"#
        )
        .unwrap();
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        writeln!(self.body, r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="2"/>"#, p.join(" "))
            .unwrap();
    }

    pub fn polygon(&mut self, pts: &[(f64, f64)], fill: &str, opacity: f64) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        writeln!(self.body, r#"<polygon points="{}" fill="{fill}" fill-opacity="{opacity}" stroke="none"/>"#, p.join(" "))
            .unwrap();
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        writeln!(self.body, r#"<rect x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{h:.1}" fill="{fill}"/>"#).unwrap();
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        writeln!(self.body, r#"<circle cx="{x:.1}" cy="{y:.1}" r="{r}" fill="{fill}"/>"#).unwrap();
    }

    pub fn raw(&mut self, s: &str) {
        self.body.push_str(s);
        self.body.push('\n');
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n\
             <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// A plotting rectangle with a linear y axis (and optionally x axis).
pub struct Frame {
    pub x0: f64,
    pub y0: f64,
    pub w: f64,
    pub h: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub xmin: f64,
    pub xmax: f64,
}

/// Axis limits padded to a multiple of a round step, always including 0.
pub fn nice_range(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for v in values.into_iter().filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo < 1e-9 {
        hi = lo + 1.0;
    }
    let step = tick_step(hi - lo);
    ((lo / step).floor() * step, (hi / step).ceil() * step)
}

fn tick_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].into_iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag)
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = tick_step(hi - lo);
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

impl Frame {
    pub fn sy(&self, v: f64) -> f64 {
        self.y0 + self.h - (v - self.ymin) / (self.ymax - self.ymin) * self.h
    }

    pub fn sx(&self, v: f64) -> f64 {
        self.x0 + (v - self.xmin) / (self.xmax - self.xmin) * self.w
    }

    pub fn y_axis(&self, svg: &mut Svg, label: &str) {
        svg.line((self.x0, self.y0), (self.x0, self.y0 + self.h), "black", 1.0, false);
        for t in ticks(self.ymin, self.ymax) {
            let y = self.sy(t);
            svg.line((self.x0 - 4.0, y), (self.x0, y), "black", 1.0, false);
            svg.text(self.x0 - 6.0, y + 4.0, 10.0, "end", &crate::table::fmt_num(t));
        }
        let (cx, cy) = (self.x0 - 38.0, self.y0 + self.h / 2.0);
        svg.raw(&format!(
            r#"<text x="{cx:.1}" y="{cy:.1}" font-size="11" text-anchor="middle" transform="rotate(-90 {cx:.1} {cy:.1})">{}</text>"#,
            esc(label)
        ));
    }

    pub fn x_axis(&self, svg: &mut Svg, label: &str) {
        let y = self.y0 + self.h;
        svg.line((self.x0, y), (self.x0 + self.w, y), "black", 1.0, false);
        for t in ticks(self.xmin, self.xmax) {
            let x = self.sx(t);
            svg.line((x, y), (x, y + 4.0), "black", 1.0, false);
            svg.text(x, y + 15.0, 10.0, "middle", &crate::table::fmt_num(t));
        }
        svg.text(self.x0 + self.w / 2.0, y + 30.0, 11.0, "middle", label);
    }

    /// Category labels under evenly spaced slots.
    pub fn categories(&self, svg: &mut Svg, labels: &[String]) {
        let y = self.y0 + self.h;
        svg.line((self.x0, y), (self.x0 + self.w, y), "black", 1.0, false);
        for (i, l) in labels.iter().enumerate() {
            svg.text(self.slot(i, labels.len()), y + 15.0, 10.0, "middle", l);
        }
    }

    pub fn slot(&self, i: usize, n: usize) -> f64 {
        self.x0 + (i as f64 + 0.5) * self.w / n as f64
    }
}

pub fn legend(svg: &mut Svg, x: f64, y: f64, labels: &[String]) {
    for (i, l) in labels.iter().enumerate() {
        let yy = y + i as f64 * 15.0;
        svg.rect(x, yy - 8.0, 10.0, 10.0, colour(i));
        svg.text(x + 14.0, yy + 1.0, 10.0, "start", l);
    }
}

pub const HATCH: &str = r##"<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)"><rect width="6" height="6" fill="#dddddd"/><line x1="0" y1="0" x2="0" y2="6" stroke="#999999" stroke-width="2"/></pattern></defs>"##;

/// Blue for negative, red for positive, white at zero.
pub fn diverging(v: f64, max_abs: f64) -> String {
    let t = if max_abs > 0.0 { (v / max_abs).clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |c: f64| (255.0 - (255.0 - c) * t.abs()).round() as u8;
    let (r, g, b) = if t < 0.0 { (fade(33.0), fade(102.0), fade(172.0)) } else { (fade(178.0), fade(24.0), fade(43.0)) };
    format!("#{r:02x}{g:02x}{b:02x}")
}
