use std::fmt::Write;

use crate::curves::AggregatePoint;
use crate::error::{CliError, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;

/// Mean line with a shaded confidence band. A single point is drawn as one
/// marker without a band.
pub fn render_svg(points: &[AggregatePoint], title: &str) -> Result<String> {
    if points.is_empty() {
        return Err(CliError::Csv("nothing to plot".into()));
    }
    let (x0, x1) = span(points.iter().map(|p| p.step as f64));
    let (y0, y1) = span(points.iter().flat_map(|p| {
        let h = p.ci.unwrap_or(0.0);
        [p.mean - h, p.mean + h]
    }));
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * (WIDTH - LEFT - RIGHT);
    let sy = |y: f64| HEIGHT - BOTTOM - (y - y0) / (y1 - y0) * (HEIGHT - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    let (px0, px1, py0, py1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        s,
        r#"<path d="M{px0} {py0} L{px0} {py1} L{px1} {py1}" fill="none" stroke="black"/>"#
    );
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (x, y) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{py1}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            py1 + 5.0,
            py1 + 18.0,
            label(xv)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{px0}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
            px0 - 5.0,
            px0 - 8.0,
            y + 4.0,
            label(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12">environment steps</text>"#,
        (px0 + px1) / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {:.2})">mean return</text>"#,
        (py0 + py1) / 2.0,
        (py0 + py1) / 2.0
    );

    if let [p] = points {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#1f77b4"/>"##,
            sx(p.step as f64),
            sy(p.mean)
        );
    } else {
        if points.iter().all(|p| p.ci.is_some()) {
            let upper = points.iter().map(|p| (p.step, p.mean + p.ci.unwrap_or(0.0)));
            let lower = points.iter().rev().map(|p| (p.step, p.mean - p.ci.unwrap_or(0.0)));
            let _ = writeln!(
                s,
                r##"<path class="band" d="{}Z" fill="#1f77b4" fill-opacity="0.25" stroke="none"/>"##,
                path(upper.chain(lower), &sx, &sy)
            );
        }
        let _ = writeln!(
            s,
            r##"<path class="mean" d="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
            path(points.iter().map(|p| (p.step, p.mean)), &sx, &sy)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn path(points: impl Iterator<Item = (u64, f64)>, sx: &dyn Fn(f64) -> f64, sy: &dyn Fn(f64) -> f64) -> String {
    let mut d = String::new();
    for (i, (x, y)) in points.enumerate() {
        let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, sx(x as f64), sy(y));
    }
    d
}

/// Range of the values, widened when degenerate.
fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi - lo > 1e-12 {
        (lo, hi)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

fn label(v: f64) -> String {
    if v.abs() >= 1e4 {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
