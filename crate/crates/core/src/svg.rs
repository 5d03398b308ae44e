//! Tiny hand-rolled SVG writer. Output depends only on the inputs, so equal
//! inputs give byte-identical files.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::features::EnvironmentClass;

/// Fill colours per environment class, as CSS colour strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Palette {
    #[serde(rename = "RES")]
    pub res: String,
    #[serde(rename = "ULR")]
    pub ulr: String,
    #[serde(rename = "UHR")]
    pub uhr: String,
    #[serde(rename = "OPEN")]
    pub open: String,
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            res: "#2e9e44".into(),
            ulr: "#f28e1c".into(),
            uhr: "#d62728".into(),
            open: "#b0b0b0".into(),
        }
    }
}

impl Palette {
    pub fn color(&self, class: EnvironmentClass) -> &str {
        match class {
            EnvironmentClass::Res => &self.res,
            EnvironmentClass::Ulr => &self.ulr,
            EnvironmentClass::Uhr => &self.uhr,
            EnvironmentClass::Open => &self.open,
        }
    }
}

pub(crate) fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Fixed three-decimal formatting with trailing zeros trimmed.
pub(crate) fn num(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

pub(crate) struct SvgDoc {
    body: String,
}

impl SvgDoc {
    pub fn new(width: f64, height: f64) -> Self {
        let mut body = String::new();
        let _ = writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
            w = num(width),
            h = num(height)
        );
        let _ = writeln!(
            body,
            r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#,
            num(width),
            num(height)
        );
        SvgDoc { body }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
            num(x),
            num(y),
            num(w),
            num(h),
            escape(fill)
        );
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{}" cy="{}" r="{}" fill="{}" stroke="black" stroke-width="0.4"/>"#,
            num(cx),
            num(cy),
            num(r),
            escape(fill)
        );
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-width="1"/>"#,
            num(x1),
            num(y1),
            num(x2),
            num(y2)
        );
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="{}" text-anchor="{}">{}</text>"#,
            num(x),
            num(y),
            num(size),
            anchor,
            escape(s)
        );
    }

    /// Legend swatches stacked downward from `(x, y)`.
    pub fn legend(&mut self, x: f64, y: f64, palette: &Palette, classes: &[EnvironmentClass]) {
        for (i, c) in classes.iter().enumerate() {
            let top = y + i as f64 * 20.0;
            let _ = writeln!(
                self.body,
                r#"<rect class="legend" x="{}" y="{}" width="14" height="14" fill="{}" stroke="black" stroke-width="0.5"/>"#,
                num(x),
                num(top),
                escape(palette.color(*c))
            );
            self.text(x + 20.0, top + 11.0, 12.0, "start", c.code());
        }
    }

    pub fn group_start(&mut self, class: &str) {
        let _ = writeln!(self.body, r#"<g class="{}">"#, escape(class));
    }

    pub fn group_end(&mut self) {
        self.body.push_str("</g>\n");
    }

    pub fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}
