//! Minimal SVG plots of a run: azimuth and elevation against time.
//!
//! Output is a pure function of its inputs so reruns produce identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::BlockRecord;
use crate::sim::Trajectory;
use crate::tracker::TrackMode;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 50.0;

struct Axes {
    t0: f64,
    t1: f64,
    lo: f64,
    hi: f64,
}

impl Axes {
    fn x(&self, t: f64) -> f64 {
        MARGIN + (t - self.t0) / (self.t1 - self.t0) * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN - (v - self.lo) / (self.hi - self.lo) * (HEIGHT - 2.0 * MARGIN)
    }
}

/// Writes `azimuth.svg`, plus `elevation.svg` in two-angle mode, into `out_dir`.
pub fn emit_plots(
    records: &[BlockRecord],
    truth: Option<&Trajectory>,
    mode: TrackMode,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut t1 = records.last().map_or(1.0, |r| r.time_s + 0.5);
    if let Some(tr) = truth {
        t1 = t1.max(tr.span().1);
    }
    let az_range = match mode {
        TrackMode::AzimuthOnly if records.iter().all(|r| r.raw.azimuth_deg >= 0.0) => (0.0, 180.0),
        _ => (-180.0, 180.0),
    };
    let panels: &[(&str, fn(&crate::array::Direction) -> f64, (f64, f64))] = match mode {
        TrackMode::AzimuthOnly => &[("azimuth", |d| d.azimuth_deg, (0.0, 0.0))],
        TrackMode::AzimuthElevation => &[
            ("azimuth", |d| d.azimuth_deg, (0.0, 0.0)),
            ("elevation", |d| d.elevation_deg, (-90.0, 90.0)),
        ],
    };
    for &(name, get, range) in panels {
        let (lo, hi) = if name == "azimuth" { az_range } else { range };
        let axes = Axes { t0: 0.0, t1, lo, hi };
        let svg = render(records, truth, name, get, &axes);
        let path = out_dir.join(format!("{name}.svg"));
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn render(
    records: &[BlockRecord],
    truth: Option<&Trajectory>,
    name: &str,
    get: fn(&crate::array::Direction) -> f64,
    axes: &Axes,
) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);

    // VAD shading, one rectangle per active block.
    if records.len() > 1 {
        let half = 0.5 * (records[1].time_s - records[0].time_s);
        for r in records.iter().filter(|r| r.vad) {
            let x0 = axes.x(r.time_s - half).max(MARGIN);
            let x1 = axes.x(r.time_s + half);
            let _ = writeln!(
                s,
                r##"<rect x="{x0:.2}" y="{MARGIN}" width="{:.2}" height="{:.2}" fill="#e8f0ff"/>"##,
                x1 - x0,
                HEIGHT - 2.0 * MARGIN
            );
        }
    }

    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for v in [axes.lo, 0.5 * (axes.lo + axes.hi), axes.hi] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{v}</text>"#,
            MARGIN - 4.0,
            axes.y(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">time (s), {name} (deg)</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );

    if let Some(tr) = truth {
        let (a, b) = tr.span();
        let n = 400;
        let pts: Vec<(f64, f64)> = (0..=n)
            .filter_map(|i| {
                let t = a + (b - a) * i as f64 / n as f64;
                tr.ground_truth_at(t).ok().map(|d| (t, get(&d)))
            })
            .collect();
        polyline(&mut s, &pts, axes, "#2a9d3a");
    }

    for r in records {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="2" fill="#888888"/>"##,
            axes.x(r.time_s),
            axes.y(get(&r.raw))
        );
    }

    // Smoothed track, broken wherever it is absent.
    let mut run = Vec::new();
    for r in records {
        match r.smoothed {
            Some(d) => run.push((r.time_s, get(&d))),
            None => {
                polyline(&mut s, &run, axes, "#d1495b");
                run.clear();
            }
        }
    }
    polyline(&mut s, &run, axes, "#d1495b");

    s.push_str("</svg>\n");
    s
}

fn polyline(s: &mut String, pts: &[(f64, f64)], axes: &Axes, color: &str) {
    if pts.len() < 2 {
        return;
    }
    let coords: Vec<String> = pts
        .iter()
        .map(|&(t, v)| format!("{:.2},{:.2}", axes.x(t), axes.y(v)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
        coords.join(" ")
    );
}
