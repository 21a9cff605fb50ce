use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    /// `#rgb` or `#rrggbb`.
    pub color: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub width_px: u32,
    pub height_px: u32,
    pub title: String,
    pub series: Vec<Series>,
}

impl PlotSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::params("plot size must be positive"));
        }
        let Some(first) = self.series.first() else {
            return Err(Error::params("plot has no series"));
        };
        let len = first.values.len();
        if len < 2 {
            return Err(Error::params(format!("series need at least 2 values, got {len}")));
        }
        for s in &self.series {
            Error::check_len(len, s.values.len())?;
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::params(format!("series {:?} has non-finite values", s.label)));
            }
            let hex = s.color.strip_prefix('#').unwrap_or("");
            if !matches!(hex.len(), 3 | 6) || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(Error::params(format!("bad color {:?}", s.color)));
            }
        }
        Ok(())
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Render one polyline per series inside 5% margins. The y axis spans the
/// global min and max over all series; a flat plot is centered.
pub fn render_svg_plot(spec: &PlotSpec) -> Result<String> {
    spec.validate()?;
    let (w, h) = (spec.width_px as f64, spec.height_px as f64);
    let (mx, my) = (0.05 * w, 0.05 * h);
    let (lo, hi) = spec
        .series
        .iter()
        .flat_map(|s| &s.values)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let n = spec.series[0].values.len();
    let sx = (w - 2.0 * mx) / (n - 1) as f64;
    let y_of = |v: f64| {
        if hi > lo {
            h - my - (v - lo) / (hi - lo) * (h - 2.0 * my)
        } else {
            0.5 * h
        }
    };

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        spec.width_px, spec.height_px, spec.width_px, spec.height_px
    );
    let _ = writeln!(out, "<title>{}</title>", escape(&spec.title));
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for s in &spec.series {
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", mx + i as f64 * sx, y_of(v)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1" points="{}"><title>{}</title></polyline>"#,
            escape(&s.color),
            points.join(" "),
            escape(&s.label)
        );
    }
    // legend, top left inside the margin
    for (k, s) in spec.series.iter().enumerate() {
        let y = my + 14.0 * (k as f64 + 1.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" fill="{}">{}</text>"#,
            mx + 4.0,
            y,
            escape(&s.color),
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_svg_plot(path: impl AsRef<Path>, spec: &PlotSpec) -> Result<()> {
    fs::write(path, render_svg_plot(spec)?)?;
    Ok(())
}
