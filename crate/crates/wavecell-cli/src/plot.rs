//! Static SVG rendering for the two CSV layouts the studies emit: probe
//! time histories (two stacked panels, u_x and u_y) and order sweeps
//! (semilog error over p). The output depends only on the input bytes —
//! fixed canvas, axes from data extents, fixed formatting — so repeated
//! invocations are bitwise identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::CliError;

const WIDTH: f64 = 800.0;
const PANEL_H: f64 = 280.0;
const MARGIN_L: f64 = 90.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_csv(path: &Path) -> Result<Csv, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .unwrap_or("")
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    if header.len() < 2 || header[0].is_empty() {
        return Err(CliError::Config(format!(
            "{}: not a CSV with a header row",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let cells = cells.map_err(|e| {
            CliError::Config(format!("{} line {}: {e}", path.display(), i + 2))
        })?;
        if cells.len() != header.len() {
            return Err(CliError::Config(format!(
                "{} line {}: {} cells, header has {}",
                path.display(),
                i + 2,
                cells.len(),
                header.len()
            )));
        }
        rows.push(cells);
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!(
            "{}: no data rows to plot",
            path.display()
        )));
    }
    Ok(Csv { header, rows })
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == hi {
        // Degenerate span: widen symmetrically so the line is visible.
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

/// Linear map from data to pixel coordinates.
struct Scale {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Scale {
    fn map(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }

    fn ticks(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

fn px(v: f64) -> String {
    format!("{:.2}", v)
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{:.3e}", v)
    }
}

/// Axis description for one panel direction: tick positions (data units)
/// and how to print them.
struct Axis<'a> {
    scale: &'a Scale,
    ticks: Vec<f64>,
    fmt: &'a dyn Fn(f64) -> String,
    label: &'a str,
}

/// One framed panel with a single polyline, linear axes. The frame spans
/// `top..bottom` vertically; the scales must map into the same band.
fn panel(svg: &mut String, top: f64, bottom: f64, x: &Axis, y: &Axis, points: &[(f64, f64)]) {
    let _ = writeln!(
        svg,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>",
        px(MARGIN_L),
        px(top),
        px(WIDTH - MARGIN_L - MARGIN_R),
        px(bottom - top)
    );
    for &t in &x.ticks {
        let xp = x.scale.map(t);
        let _ = writeln!(
            svg,
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#333\"/>",
            px(xp),
            px(bottom),
            px(bottom + 5.0)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            px(xp),
            px(bottom + 18.0),
            (x.fmt)(t)
        );
    }
    for &t in &y.ticks {
        let yp = y.scale.map(t);
        let _ = writeln!(
            svg,
            "<line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"#333\"/>",
            px(yp),
            px(MARGIN_L - 5.0),
            px(MARGIN_L)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>",
            px(MARGIN_L - 8.0),
            px(yp + 4.0),
            (y.fmt)(t)
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">{}</text>",
        px((MARGIN_L + WIDTH - MARGIN_R) / 2.0),
        px(bottom + 40.0),
        x.label
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 {} {})\">{}</text>",
        px(20.0),
        px((top + bottom) / 2.0),
        px(20.0),
        px((top + bottom) / 2.0),
        y.label
    );
    let mut path = String::new();
    for (i, &(vx, vy)) in points.iter().enumerate() {
        let _ = write!(
            path,
            "{}{},{}",
            if i == 0 { "" } else { " " },
            px(x.scale.map(vx)),
            px(y.scale.map(vy))
        );
    }
    let _ = writeln!(
        svg,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.2\"/>",
        path
    );
}

fn svg_open(height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" \
         viewBox=\"0 0 {} {}\" font-family=\"sans-serif\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        WIDTH, height, WIDTH, height
    )
}

/// Two stacked panels of a probe history: u_x over t, u_y over t.
fn render_probe(csv: &Csv) -> String {
    let height = 2.0 * PANEL_H;
    let mut svg = svg_open(height);
    let t: Vec<f64> = csv.rows.iter().map(|r| r[0]).collect();
    let (tlo, thi) = extent(t.iter().cloned());
    for (k, label) in ["u_x [m]", "u_y [m]"].iter().enumerate() {
        let u: Vec<f64> = csv.rows.iter().map(|r| r[1 + k]).collect();
        let (ulo, uhi) = extent(u.iter().cloned());
        let top = MARGIN_T + k as f64 * PANEL_H;
        let bottom = top + PANEL_H - MARGIN_T - MARGIN_B;
        let x = Scale {
            lo: tlo,
            hi: thi,
            px_lo: MARGIN_L,
            px_hi: WIDTH - MARGIN_R,
        };
        let y = Scale {
            lo: ulo,
            hi: uhi,
            px_lo: bottom,
            px_hi: top,
        };
        let pts: Vec<(f64, f64)> = t.iter().cloned().zip(u.iter().cloned()).collect();
        let x_axis = Axis {
            ticks: x.ticks(5),
            scale: &x,
            fmt: &tick_label,
            label: "t [s]",
        };
        let y_axis = Axis {
            ticks: y.ticks(5),
            scale: &y,
            fmt: &tick_label,
            label,
        };
        panel(&mut svg, top, bottom, &x_axis, &y_axis, &pts);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Semilog error-over-order curve from a sweep CSV.
fn render_sweep(csv: &Csv) -> Result<String, CliError> {
    for r in &csv.rows {
        if r[1] <= 0.0 {
            return Err(CliError::Config(format!(
                "sweep error {:.3e} at p={} is not positive; cannot draw a semilog axis",
                r[1], r[0]
            )));
        }
    }
    let p: Vec<f64> = csv.rows.iter().map(|r| r[0]).collect();
    let loge: Vec<f64> = csv.rows.iter().map(|r| r[1].log10()).collect();
    let (plo, phi) = extent(p.iter().cloned());
    let (elo, ehi) = extent(loge.iter().cloned());
    // Snap the log range outward to whole decades so ticks land on powers
    // of ten.
    let (elo, ehi) = (elo.floor(), ehi.ceil());
    let (elo, ehi) = if elo == ehi { (elo - 1.0, ehi) } else { (elo, ehi) };

    let height = 2.0 * PANEL_H;
    let mut svg = svg_open(height);
    let top = MARGIN_T;
    let bottom = height - MARGIN_B;
    let x = Scale {
        lo: plo,
        hi: phi,
        px_lo: MARGIN_L,
        px_hi: WIDTH - MARGIN_R,
    };
    let y = Scale {
        lo: elo,
        hi: ehi,
        px_lo: bottom,
        px_hi: top,
    };
    let pts: Vec<(f64, f64)> = p.iter().cloned().zip(loge.iter().cloned()).collect();
    // X ticks sit on the orders themselves; log ticks label each whole
    // decade (thinned when the range spans many).
    let fmt_p = |v: f64| format!("{}", v);
    let fmt_log = |v: f64| format!("1e{}", v.round() as i64);
    let decades = (ehi - elo) as i64;
    let stride = (decades / 8 + 1).max(1);
    let yticks: Vec<f64> = (0..=decades)
        .step_by(stride as usize)
        .map(|d| elo + d as f64)
        .collect();
    let x_axis = Axis {
        ticks: p.clone(),
        scale: &x,
        fmt: &fmt_p,
        label: "p",
    };
    let y_axis = Axis {
        ticks: yticks,
        scale: &y,
        fmt: &fmt_log,
        label: "e_L2 [%]",
    };
    panel(&mut svg, top, bottom, &x_axis, &y_axis, &pts);
    for &(vx, vy) in &pts {
        let _ = writeln!(
            svg,
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"#1f6fb2\"/>",
            px(x.map(vx)),
            px(y.map(vy))
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Render `input.csv` to `input.svg` beside it. The CSV header decides the
/// figure type; anything else is rejected.
pub fn emit_plot(input: &Path) -> Result<PathBuf, CliError> {
    let csv = read_csv(input)?;
    let header: Vec<&str> = csv.header.iter().map(|s| s.as_str()).collect();
    let svg = match header.as_slice() {
        ["t_s", "ux_m", "uy_m"] => render_probe(&csv),
        ["p", "e_l2_percent", "dtcr_s"] => render_sweep(&csv)?,
        _ => {
            return Err(CliError::Config(format!(
                "{}: unsupported CSV layout '{}'; expected a probe history \
                 (t_s,ux_m,uy_m) or an order sweep (p,e_l2_percent,dtcr_s)",
                input.display(),
                csv.header.join(",")
            )))
        }
    };
    let out = input.with_extension("svg");
    std::fs::write(&out, svg)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", out.display())))?;
    Ok(out)
}
