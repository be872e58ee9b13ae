//! Plain-text, CSV and SVG renderings of an [`EvalReport`]. Output is a pure
//! function of the report, so identical inputs give identical bytes.

use std::fmt::Write;

use crate::bopeval::ArValues;
use crate::stages::EvalReport;

pub const NO_DATA: &str = "no data";

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| NO_DATA.to_string(), |x| format!("{x:.4}"))
}

fn rows() -> [(&'static str, fn(&ArValues) -> f64); 4] {
    [
        ("AR_VSD", |a| a.ar_vsd),
        ("AR_MSSD", |a| a.ar_mssd),
        ("AR_MSPD", |a| a.ar_mspd),
        ("AR", |a| a.ar),
    ]
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Metrics as rows, sort methods as columns.
pub fn text_report(r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "binpose evaluation report");
    let _ = writeln!(s, "object: {}", if r.object_id.is_empty() { NO_DATA } else { &r.object_id });
    let _ = writeln!(
        s,
        "translation: {}  refined: {}  mask-only: {}  top-k: {}  images: {}",
        r.translation_mode.as_str(),
        yes_no(r.refined),
        yes_no(r.mask_only),
        r.k,
        r.n_images
    );
    let _ = writeln!(s, "matching: {}", r.protocol);
    let _ = writeln!(s);
    let _ = writeln!(s, "Average recall of top-{} estimates by sort method", r.k);
    if r.methods.is_empty() {
        let _ = writeln!(s, "{NO_DATA}");
    } else {
        let _ = write!(s, "{:<12}", "metric");
        for m in &r.methods {
            let _ = write!(s, "{:>16}", m.method.as_str());
        }
        let _ = writeln!(s);
        for (name, f) in rows() {
            let _ = write!(s, "{name:<12}");
            for m in &r.methods {
                let _ = write!(s, "{:>16}", cell(m.ar.as_ref().map(f)));
            }
            let _ = writeln!(s);
        }
        let _ = write!(s, "{:<12}", "estimates");
        for m in &r.methods {
            let _ = write!(s, "{:>16}", m.n_estimates);
        }
        let _ = writeln!(s);
        let _ = write!(s, "{:<12}", "unmatched");
        for m in &r.methods {
            let _ = write!(s, "{:>16}", m.n_unmatched);
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "Detection metrics");
    match &r.detection {
        None => {
            let _ = writeln!(s, "{NO_DATA}");
        }
        Some(d) => {
            let _ = writeln!(s, "AP50 {:.4}  AP50:95 {:.4}  AR@100 {:.4}", d.ap50, d.ap50_95, d.ar100);
        }
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "Average recall of ground-truth poses under noise");
    if r.noise.is_empty() {
        let _ = writeln!(s, "{NO_DATA}");
    } else {
        let _ = writeln!(s, "{:>8} {:>8} {:>10} {:>10} {:>10} {:>10}", "t_mm", "r_deg", "AR_VSD", "AR_MSSD", "AR_MSPD", "AR");
        for n in &r.noise {
            let _ = write!(s, "{:>8} {:>8}", n.translation_mm, n.rotation_deg);
            for (_, f) in rows() {
                let _ = write!(s, " {:>10}", cell(n.ar.as_ref().map(f)));
            }
            let _ = writeln!(s);
        }
    }
    s
}

pub fn csv(r: &EvalReport) -> String {
    let mut s = String::from("kind,name,n_estimates,ar_vsd,ar_mssd,ar_mspd,ar\n");
    let fmt = |a: &Option<ArValues>| match a {
        Some(a) => format!("{},{},{},{}", a.ar_vsd, a.ar_mssd, a.ar_mspd, a.ar),
        None => format!("{NO_DATA},{NO_DATA},{NO_DATA},{NO_DATA}"),
    };
    for m in &r.methods {
        let _ = writeln!(s, "method,{},{},{}", m.method.as_str(), m.n_estimates, fmt(&m.ar));
    }
    for n in &r.noise {
        let _ = writeln!(
            s,
            "noise,{}mm/{}deg,{},{}",
            n.translation_mm, n.rotation_deg, n.n_estimates, fmt(&n.ar)
        );
    }
    s
}

const W: f64 = 480.0;
const H: f64 = 320.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn y_of(v: f64) -> f64 {
    TOP + (1.0 - v) * (H - TOP - BOTTOM)
}

fn svg_frame(title: &str, body: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let y = y_of(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"##,
            W - RIGHT,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/><line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        H - BOTTOM,
        H - BOTTOM,
        W - RIGHT,
        H - BOTTOM
    );
    s.push_str(body);
    s.push_str("</svg>\n");
    s
}

fn no_data_body() -> String {
    format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"16\">{NO_DATA}</text>\n",
        W / 2.0,
        H / 2.0
    )
}

/// Bar chart of AR per sort method.
pub fn method_plot(r: &EvalReport) -> String {
    let bars: Vec<(&str, f64)> = r
        .methods
        .iter()
        .filter_map(|m| m.ar.map(|a| (m.method.as_str(), a.ar)))
        .collect();
    if bars.is_empty() {
        return svg_frame("AR by sort method", &no_data_body());
    }
    let slot = (W - LEFT - RIGHT) / bars.len() as f64;
    let mut body = String::new();
    for (i, (name, v)) in bars.iter().enumerate() {
        let x = LEFT + slot * (i as f64 + 0.2);
        let y = y_of(*v);
        let _ = writeln!(
            body,
            r##"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#4a78b5"/><text x="{:.2}" y="{:.2}" text-anchor="middle">{v:.3}</text><text x="{:.2}" y="{:.2}" text-anchor="middle">{name}</text>"##,
            slot * 0.6,
            H - BOTTOM - y,
            x + slot * 0.3,
            y - 4.0,
            x + slot * 0.3,
            H - BOTTOM + 18.0
        );
    }
    svg_frame("AR by sort method", &body)
}

/// AR of perturbed ground truth against the noise level.
pub fn noise_plot(r: &EvalReport) -> String {
    let pts: Vec<(String, f64)> = r
        .noise
        .iter()
        .filter_map(|n| n.ar.map(|a| (format!("{}mm/{}°", n.translation_mm, n.rotation_deg), a.ar)))
        .collect();
    if pts.is_empty() {
        return svg_frame("AR vs pose noise", &no_data_body());
    }
    let step = if pts.len() > 1 {
        (W - LEFT - RIGHT - 40.0) / (pts.len() - 1) as f64
    } else {
        0.0
    };
    let xy: Vec<(f64, f64)> = pts
        .iter()
        .enumerate()
        .map(|(i, (_, v))| (LEFT + 20.0 + step * i as f64, y_of(*v)))
        .collect();
    let mut body = String::new();
    let line: Vec<String> = xy.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(body, r##"<polyline points="{}" fill="none" stroke="#c0392b" stroke-width="2"/>"##, line.join(" "));
    for ((x, y), (label, v)) in xy.iter().zip(&pts) {
        let _ = writeln!(
            body,
            r##"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="#c0392b"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{v:.3}</text><text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="10">{label}</text>"##,
            y - 6.0,
            H - BOTTOM + 18.0
        );
    }
    svg_frame("AR vs pose noise", &body)
}
