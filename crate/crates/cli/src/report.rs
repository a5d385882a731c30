//! Turns a verified result tree into SVG heatmaps, one per matrix file.
//!
//! Rendering refuses to start unless every file in the tree still matches
//! its manifest digest. The images are plain hand-written SVG with integer
//! cell geometry and shortest round-trip numbers in the tooltips, so the
//! same tree always renders to the same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use neuroflux::error::{Error, Result};
use neuroflux::io::{self, fmt_f64};
use neuroflux::types::{ConnectivityMatrix, Metric, PValueMatrix};

use crate::driver::Manifest;

#[derive(Debug)]
pub struct ReportSummary {
    pub n_images: usize,
}

/// Verifies `tree` against its manifest, then renders an `.svg` beside
/// every matrix, p-value, and mask CSV.
pub fn cmd_report(tree: &Path) -> Result<ReportSummary> {
    let manifest = Manifest::load(tree)?;
    manifest.verify(tree)?;
    if manifest.kind != "run" {
        return Err(Error::IncompleteResults(format!(
            "expected an analysis tree, found kind {:?}",
            manifest.kind
        )));
    }
    let mut n_images = 0;
    for rel in manifest.files.keys() {
        let Some(stem) = rel.strip_suffix(".csv") else { continue };
        let path = tree.join(rel);
        let svg = if rel.ends_with("_p.csv") {
            let json = path.with_extension("json");
            let text = fs::read_to_string(&json)
                .map_err(|e| Error::Io { path: json.display().to_string(), source: e })?;
            let pm: PValueMatrix = serde_json::from_str(&text)
                .map_err(|e| Error::Parse { path: json.display().to_string(), msg: e.to_string() })?;
            p_heatmap(stem, &pm)
        } else if rel.ends_with("_mask.csv") {
            let (labels, mask) = read_mask(&path)?;
            mask_heatmap(stem, &labels, &mask)
        } else {
            let m = io::read_matrix(&path.with_extension(""))?;
            value_heatmap(stem, &m)
        };
        let out = path.with_extension("svg");
        fs::write(&out, svg).map_err(|e| Error::Io { path: out.display().to_string(), source: e })?;
        n_images += 1;
    }
    Ok(ReportSummary { n_images })
}

fn read_mask(path: &Path) -> Result<(Vec<String>, Array2<bool>)> {
    let parse_err = |msg: String| Error::Parse { path: path.display().to_string(), msg };
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err("empty file".into()))?;
    let labels: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
    let n = labels.len();
    let mut mask = Array2::from_elem((n, n), false);
    for i in 0..n {
        let line = lines.next().ok_or_else(|| parse_err(format!("missing row {i}")))?;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != n + 1 {
            return Err(parse_err(format!("row {i}: expected {} columns", n + 1)));
        }
        for j in 0..n {
            mask[[i, j]] = match cols[j + 1] {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(format!("row {i}: bad flag {other:?}"))),
            };
        }
    }
    Ok((labels, mask))
}

const CELL: usize = 18;
const LEFT: usize = 52;
const TOP: usize = 28;
const BOTTOM: usize = 52;
const LEGEND_GAP: usize = 14;
const LEGEND_BAR: usize = 14;
const LEGEND_TEXT: usize = 58;

type Rgb = (u8, u8, u8);

fn hexcolor(c: Rgb) -> String {
    format!("#{:02x}{:02x}{:02x}", c.0, c.1, c.2)
}

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    let t = t.clamp(0.0, 1.0);
    let mix = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * t).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Blue through white to red, for signed values.
fn diverging(t: f64) -> Rgb {
    let t = t.clamp(0.0, 1.0);
    if t < 0.5 {
        lerp((33, 102, 172), (247, 247, 247), t * 2.0)
    } else {
        lerp((247, 247, 247), (178, 24, 43), t * 2.0 - 1.0)
    }
}

/// Pale orange to deep red, for non-negative values.
fn sequential(t: f64) -> Rgb {
    let t = t.clamp(0.0, 1.0);
    if t < 0.5 {
        lerp((255, 247, 236), (252, 141, 89), t * 2.0)
    } else {
        lerp((252, 141, 89), (127, 0, 0), t * 2.0 - 1.0)
    }
}

/// Display range per metric, fixed so runs stay visually comparable.
pub fn display_range(metric: Metric) -> (f64, f64) {
    match metric {
        Metric::Pcc => (-1.0, 1.0),
        Metric::Plv | Metric::Msc => (0.0, 1.0),
        Metric::Ddtf => (0.0, 0.1),
        Metric::Gpdc => (0.0, 0.6),
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Legend {
    entries: Vec<(String, Rgb)>,
}

impl Legend {
    fn gradient(lo: &str, hi: &str, ramp: impl Fn(f64) -> Rgb) -> Legend {
        let steps = 24;
        let mut entries = Vec::with_capacity(steps);
        for k in 0..steps {
            // top entry shows the high end of the scale
            let t = 1.0 - k as f64 / (steps - 1) as f64;
            let label = if k == 0 {
                hi.to_string()
            } else if k == steps - 1 {
                lo.to_string()
            } else {
                String::new()
            };
            entries.push((label, ramp(t)));
        }
        Legend { entries }
    }
}

fn grid_svg(
    title: &str,
    labels: &[String],
    color: impl Fn(usize, usize) -> Rgb,
    note: impl Fn(usize, usize) -> String,
    legend: &Legend,
) -> String {
    let n = labels.len();
    let grid_w = n * CELL;
    let grid_h = n * CELL;
    let width = LEFT + grid_w + LEGEND_GAP + LEGEND_BAR + LEGEND_TEXT;
    let height = TOP + grid_h + BOTTOM;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"monospace\" font-size=\"10\">"
    );
    let _ = writeln!(svg, "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{LEFT}\" y=\"18\" font-size=\"12\">{}</text>",
        xml_escape(title)
    );
    for i in 0..n {
        for j in 0..n {
            let x = LEFT + j * CELL;
            let y = TOP + i * CELL;
            let _ = writeln!(
                svg,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{}\">\
                 <title>{}</title></rect>",
                hexcolor(color(i, j)),
                xml_escape(&note(i, j))
            );
        }
    }
    for (i, label) in labels.iter().enumerate() {
        let y = TOP + i * CELL + CELL / 2 + 4;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{y}\" text-anchor=\"end\">{}</text>",
            LEFT - 4,
            xml_escape(label)
        );
        let x = LEFT + i * CELL + CELL / 2 + 4;
        let ty = TOP + grid_h + 6;
        let _ = writeln!(
            svg,
            "<text x=\"{x}\" y=\"{ty}\" text-anchor=\"end\" transform=\"rotate(-90 {x} {ty})\">{}</text>",
            xml_escape(label)
        );
    }
    let lx = LEFT + grid_w + LEGEND_GAP;
    let steps = legend.entries.len();
    let step_h = grid_h.div_euclid(steps.max(1)).max(4);
    for (k, (label, c)) in legend.entries.iter().enumerate() {
        let y = TOP + k * step_h;
        let _ = writeln!(
            svg,
            "<rect x=\"{lx}\" y=\"{y}\" width=\"{LEGEND_BAR}\" height=\"{step_h}\" fill=\"{}\"/>",
            hexcolor(*c)
        );
        if !label.is_empty() {
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\">{}</text>",
                lx + LEGEND_BAR + 4,
                y + step_h / 2 + 4,
                xml_escape(label)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Heatmap of one connectivity matrix at its fixed display range.
pub fn value_heatmap(title: &str, m: &ConnectivityMatrix) -> String {
    let (lo, hi) = display_range(m.metric);
    let ramp: fn(f64) -> Rgb = if lo < 0.0 { diverging } else { sequential };
    let scale = move |v: f64| (v - lo) / (hi - lo);
    let directed = m.directed;
    let labels = m.labels.clone();
    grid_svg(
        title,
        &m.labels,
        |i, j| ramp(scale(m.values[[i, j]])),
        |i, j| {
            let v = fmt_f64(m.values[[i, j]]);
            if directed {
                format!("{} -> {}: {v}", labels[j], labels[i])
            } else {
                format!("{} / {}: {v}", labels[i], labels[j])
            }
        },
        &Legend::gradient(&fmt_f64(lo), &fmt_f64(hi), ramp),
    )
}

/// Small p-values show dark, anything above 0.05 fades to white.
fn p_color(p: f64) -> Rgb {
    if p < 0.05 {
        // log scale from p = 0.05 down to p = 1e-4
        let t = ((0.05_f64.log10() - p.max(1e-12).log10()) / 2.7).clamp(0.0, 1.0);
        lerp((251, 106, 74), (64, 0, 13), t)
    } else {
        lerp((214, 214, 214), (255, 255, 255), (p - 0.05) / 0.95)
    }
}

/// Heatmap of paired-test p-values; degenerate cells render hatched gray.
pub fn p_heatmap(title: &str, pm: &PValueMatrix) -> String {
    let legend = Legend {
        entries: vec![
            ("p<1e-4".into(), p_color(1e-4)),
            ("p<0.01".into(), p_color(0.01)),
            ("p<0.05".into(), p_color(0.049)),
            ("p>=0.05".into(), p_color(0.2)),
            ("p=1".into(), p_color(1.0)),
            ("n/a".into(), (240, 240, 240)),
        ],
    };
    grid_svg(
        title,
        &pm.labels,
        |i, j| {
            if pm.degenerate[[i, j]] {
                (240, 240, 240)
            } else {
                p_color(pm.p[[i, j]])
            }
        },
        |i, j| {
            if pm.degenerate[[i, j]] {
                format!("{} / {}: degenerate", pm.labels[i], pm.labels[j])
            } else {
                format!(
                    "{} / {}: p={} W={} n={}",
                    pm.labels[i],
                    pm.labels[j],
                    fmt_f64(pm.p[[i, j]]),
                    fmt_f64(pm.statistic[[i, j]]),
                    pm.n_effective[[i, j]]
                )
            }
        },
        &legend,
    )
}

/// Binary significance map.
pub fn mask_heatmap(title: &str, labels: &[String], mask: &Array2<bool>) -> String {
    let on = (165, 15, 21);
    let off = (245, 245, 245);
    let legend = Legend {
        entries: vec![("significant".into(), on), ("not significant".into(), off)],
    };
    grid_svg(
        title,
        labels,
        |i, j| if mask[[i, j]] { on } else { off },
        |i, j| {
            format!(
                "{} / {}: {}",
                labels[i],
                labels[j],
                if mask[[i, j]] { "significant" } else { "not significant" }
            )
        },
        &legend,
    )
}
