//! Self-contained SVG charts built from an aggregate and its traces.
//!
//! Every SVG carries `data-run-ids` and the axis extents in `data-x-min`,
//! `data-x-max`, `data-y-min`, `data-y-max` on the root element.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Result};
use crate::runner::{write_json, Aggregate};
use crate::scaling::{scaling_report, Axis};
use crate::trace_csv::read_trace;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 52.0;
const MAX_POINTS: usize = 1500;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotEntry {
    pub file: String,
    pub kind: String,
    pub run_ids: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<PlotEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Mark {
    Line,
    Dots,
}

#[derive(Clone, Debug)]
struct Series {
    label: String,
    mark: Mark,
    points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    x_log: bool,
    y_log: bool,
    x_range: (f64, f64),
    y_range: (f64, f64),
    series: Vec<Series>,
    run_ids: Vec<String>,
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn num(v: f64) -> String {
    format!("{v:.2}")
}

fn label_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Data extents, padded when degenerate.
fn extent(values: impl Iterator<Item = f64>, log: bool) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return if log { (1.0, 10.0) } else { (0.0, 1.0) };
    }
    if lo == hi {
        if log {
            return (lo / 2.0, hi * 2.0);
        }
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

impl Chart {
    fn map(&self, v: f64, range: (f64, f64), log: bool, lo_px: f64, hi_px: f64) -> f64 {
        let (a, b, v) = if log {
            (range.0.ln(), range.1.ln(), v.ln())
        } else {
            (range.0, range.1, v)
        };
        lo_px + (v - a) / (b - a) * (hi_px - lo_px)
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.map(x, self.x_range, self.x_log, MARGIN_L, WIDTH - MARGIN_R),
            self.map(y, self.y_range, self.y_log, HEIGHT - MARGIN_B, MARGIN_T),
        )
    }

    fn ticks(range: (f64, f64), log: bool) -> Vec<f64> {
        if log {
            let (a, b) = (range.0.log10().ceil() as i32, range.1.log10().floor() as i32);
            let mut t: Vec<f64> = (a..=b).map(|k| 10f64.powi(k)).collect();
            if t.len() < 2 {
                t = vec![range.0, range.1];
            }
            t
        } else {
            (0..=4).map(|k| range.0 + (range.1 - range.0) * k as f64 / 4.0).collect()
        }
    }

    fn render(&self, kind: &str) -> String {
        let mut s = String::new();
        let ids = self.run_ids.join(" ");
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" data-kind="{kind}" data-run-ids="{}" data-x-min="{}" data-x-max="{}" data-y-min="{}" data-y-max="{}" data-x-log="{}" data-y-log="{}">"#,
            xml_escape(&ids),
            self.x_range.0,
            self.x_range.1,
            self.y_range.0,
            self.y_range.1,
            self.x_log,
            self.y_log
        );
        let _ = writeln!(s, "<title>{}</title>", xml_escape(&self.title));
        let _ = writeln!(s, "<metadata>run_ids: {}</metadata>", xml_escape(&ids));
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let (x0, x1) = (MARGIN_L, WIDTH - MARGIN_R);
        let (y0, y1) = (HEIGHT - MARGIN_B, MARGIN_T);
        let _ = writeln!(
            s,
            r##"<g stroke="#333" stroke-width="1"><line x1="{}" y1="{}" x2="{}" y2="{}"/><line x1="{}" y1="{}" x2="{}" y2="{}"/></g>"##,
            num(x0),
            num(y0),
            num(x1),
            num(y0),
            num(x0),
            num(y0),
            num(x0),
            num(y1)
        );
        let _ = writeln!(s, r##"<g font-family="sans-serif" font-size="11" fill="#333">"##);
        for t in Self::ticks(self.x_range, self.x_log) {
            let (px, _) = self.px(t, self.y_range.0);
            let _ = writeln!(
                s,
                r##"<line x1="{p}" y1="{a}" x2="{p}" y2="{b}" stroke="#333"/><text x="{p}" y="{c}" text-anchor="middle">{}</text>"##,
                label_num(t),
                p = num(px),
                a = num(y0),
                b = num(y0 + 4.0),
                c = num(y0 + 16.0)
            );
        }
        for t in Self::ticks(self.y_range, self.y_log) {
            let (_, py) = self.px(self.x_range.0, t);
            let _ = writeln!(
                s,
                r##"<line x1="{a}" y1="{p}" x2="{b}" y2="{p}" stroke="#333"/><text x="{c}" y="{q}" text-anchor="end">{}</text>"##,
                label_num(t),
                p = num(py),
                q = num(py + 4.0),
                a = num(x0 - 4.0),
                b = num(x0),
                c = num(x0 - 6.0)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            num((x0 + x1) / 2.0),
            num(HEIGHT - 12.0),
            xml_escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{y}" text-anchor="middle" transform="rotate(-90 14 {y})">{}</text>"#,
            xml_escape(&self.y_label),
            y = num((y0 + y1) / 2.0)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
            num((x0 + x1) / 2.0),
            xml_escape(&self.title)
        );
        let _ = writeln!(s, "</g>");
        for (k, ser) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let pts: Vec<(f64, f64)> = ser
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.x_log || *x > 0.0) && (!self.y_log || *y > 0.0))
                .map(|&(x, y)| self.px(x, y))
                .collect();
            match ser.mark {
                Mark::Line if pts.len() > 1 => {
                    let path: Vec<String> = pts.iter().map(|(x, y)| format!("{},{}", num(*x), num(*y))).collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                        path.join(" ")
                    );
                }
                _ => {
                    for (x, y) in &pts {
                        let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#, num(*x), num(*y));
                    }
                }
            }
            let ly = MARGIN_T + 14.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
                num(WIDTH - MARGIN_R + 12.0),
                num(ly),
                num(WIDTH - MARGIN_R + 26.0),
                num(ly + 9.0),
                xml_escape(&ser.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn thin(points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points;
    }
    let step = points.len().div_ceil(MAX_POINTS);
    let last = *points.last().unwrap();
    let mut out: Vec<(f64, f64)> = points.into_iter().step_by(step).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

fn bar_chart(agg: &Aggregate) -> Option<String> {
    let rates: Vec<_> = agg.escape_rates.iter().filter(|r| r.trials > 0).collect();
    if !rates.iter().any(|r| r.perturbs) {
        return None;
    }
    let ids: Vec<String> = agg
        .cells
        .iter()
        .filter(|c| c.escaped.is_some())
        .map(|c| c.run_id.clone())
        .collect();
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" data-kind="escape_rate" data-run-ids="{}" data-x-min="0" data-x-max="{}" data-y-min="0" data-y-max="1">"#,
        xml_escape(&ids.join(" ")),
        rates.len()
    );
    let _ = writeln!(s, "<title>Saddle escape rate</title>");
    let _ = writeln!(s, "<metadata>run_ids: {}</metadata>", xml_escape(&ids.join(" ")));
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (MARGIN_L, WIDTH - 40.0, HEIGHT - MARGIN_B, MARGIN_T);
    let _ = writeln!(
        s,
        r##"<g stroke="#333"><line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"##
    );
    let _ = writeln!(s, r##"<g font-family="sans-serif" font-size="11" fill="#333">"##);
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let y = y0 - v * (y0 - y1);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            num(x0 - 6.0),
            num(y + 4.0),
            label_num(v)
        );
    }
    let slot = (x1 - x0) / rates.len() as f64;
    for (k, r) in rates.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let h = r.rate * (y0 - y1);
        let bx = x0 + slot * (k as f64 + 0.2);
        let cx = x0 + slot * (k as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{color}" data-rate="{}" data-trials="{}"/>"#,
            num(bx),
            num(y0 - h),
            num(slot * 0.6),
            num(h),
            r.rate,
            r.trials
        );
        let (lo, hi) = r.ci;
        let _ = writeln!(
            s,
            r##"<line x1="{c}" y1="{}" x2="{c}" y2="{}" stroke="#000"/>"##,
            num(y0 - lo * (y0 - y1)),
            num(y0 - hi * (y0 - y1)),
            c = num(cx)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{} ({}/{})</text>"#,
            num(cx),
            num(y0 + 16.0),
            xml_escape(&r.optimizer),
            r.escaped,
            r.trials
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">Saddle escape rate (95% Wilson interval)</text>"#,
        num((x0 + x1) / 2.0)
    );
    s.push_str("</g>\n</svg>\n");
    Some(s)
}

/// Writes the charts for `agg` into `out_dir` and a `manifest.json` listing
/// them. Traces are read relative to `trace_root`.
pub fn emit_plots(agg: &Aggregate, trace_root: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut manifest = Manifest::default();
    let mut written = Vec::new();
    let mut emit = |file: String, kind: &str, run_ids: Vec<String>, body: String| -> Result<()> {
        let path = out_dir.join(&file);
        std::fs::write(&path, body).map_err(io_err(&path))?;
        manifest.files.push(PlotEntry {
            file,
            kind: kind.into(),
            run_ids,
        });
        written.push(path);
        Ok(())
    };

    let mut by_problem: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for c in &agg.cells {
        by_problem.entry(c.problem.as_str()).or_default().push(c);
    }
    for (problem, cells) in by_problem {
        let mut f_series = Vec::new();
        let mut g_series = Vec::new();
        let mut ids = Vec::new();
        for c in cells {
            let rows = read_trace(&trace_root.join(&c.trace))?;
            let label = format!("{} s{} e{}", c.optimizer, c.seed, label_num(c.eps));
            f_series.push(Series {
                label: label.clone(),
                mark: Mark::Line,
                points: thin(rows.iter().map(|r| (r.sfo as f64, r.f)).collect()),
            });
            g_series.push(Series {
                label,
                mark: Mark::Line,
                points: thin(
                    rows.iter()
                        .filter_map(|r| r.grad_norm.map(|g| (r.sfo as f64, g)))
                        .collect(),
                ),
            });
            ids.push(c.run_id.clone());
        }
        let all = |ss: &[Series], pick: fn(&(f64, f64)) -> f64, log: bool| {
            extent(ss.iter().flat_map(|s| s.points.iter().map(pick)), log)
        };
        let f_chart = Chart {
            title: format!("{problem}: f vs SFO"),
            x_label: "SFO calls".into(),
            y_label: "f(x)".into(),
            x_log: false,
            y_log: false,
            x_range: all(&f_series, |p| p.0, false),
            y_range: all(&f_series, |p| p.1, false),
            series: f_series,
            run_ids: ids.clone(),
        };
        let g_chart = Chart {
            title: format!("{problem}: gradient norm vs SFO"),
            x_label: "SFO calls".into(),
            y_label: "||grad f(x)|| (log)".into(),
            x_log: false,
            y_log: true,
            x_range: all(&g_series, |p| p.0, false),
            y_range: all(&g_series, |p| p.1, true),
            series: g_series,
            run_ids: ids.clone(),
        };
        emit(format!("f_vs_sfo_{}.svg", slug(problem)), "f_vs_sfo", ids.clone(), f_chart.render("f_vs_sfo"))?;
        emit(
            format!("grad_norm_vs_sfo_{}.svg", slug(problem)),
            "grad_norm_vs_sfo",
            ids,
            g_chart.render("grad_norm_vs_sfo"),
        )?;
    }

    if let Some(body) = bar_chart(agg) {
        let ids = agg
            .cells
            .iter()
            .filter(|c| c.escaped.is_some())
            .map(|c| c.run_id.clone())
            .collect();
        emit("escape_rate.svg".into(), "escape_rate", ids, body)?;
    }

    let axis = match agg.sweep_axis.as_deref() {
        Some("eps") => Some(Axis::Eps),
        Some("n") => Some(Axis::N),
        _ => None,
    };
    if let Some(axis) = axis {
        if let Ok(report) = scaling_report(agg, axis) {
            let grid: Vec<f64> = match axis {
                Axis::Eps => agg.sweep_values.iter().map(|e| 1.0 / e).collect(),
                Axis::N => agg.sweep_values.clone(),
            };
            let x_range = extent(grid.iter().copied(), true);
            let mut series = Vec::new();
            let mut ids = Vec::new();
            for f in &report.fits {
                series.push(Series {
                    label: format!("{} / {}", f.problem, f.optimizer),
                    mark: Mark::Dots,
                    points: f.points.iter().map(|p| (p.x, p.mean_cost)).collect(),
                });
                let (a, b) = (f.fit.intercept, f.fit.slope);
                series.push(Series {
                    label: format!("fit slope {:.3}", b),
                    mark: Mark::Line,
                    points: [x_range.0, x_range.1].iter().map(|&x| (x, (a + b * x.ln()).exp())).collect(),
                });
                ids.extend(f.run_ids.iter().cloned());
            }
            ids.sort();
            let y_range = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)), true);
            let (tag, x_label) = match axis {
                Axis::Eps => ("eps", "1/eps (log)"),
                Axis::N => ("n", "n (log)"),
            };
            let chart = Chart {
                title: format!("Oracle cost scaling in {tag}"),
                x_label: x_label.into(),
                y_label: report.fits[0].measure.clone() + " (log)",
                x_log: true,
                y_log: true,
                x_range,
                y_range,
                series,
                run_ids: ids.clone(),
            };
            emit(format!("scaling_{tag}.svg"), "scaling", ids, chart.render("scaling"))?;
        }
    }

    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(written)
}
