//! Hand-written SVG charts: the accuracy curve and the confusion heatmap.
//!
//! Output depends only on the inputs, with every coordinate printed at a
//! fixed precision, so identical inputs give byte-identical files.

use std::fmt::Write;
use std::path::Path;

use crate::dataset::ClassLabel;
use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;
use crate::training::EpochRecord;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

const TRAIN_COLOR: &str = "#1f77b4";
const TEST_COLOR: &str = "#d62728";

pub const CHANCE_ACCURACY: f64 = 1.0 / 3.0;

fn header(s: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
}

fn polyline(s: &mut String, points: &[(f64, f64)], color: &str, class: &str) {
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(
        s,
        r#"<polyline class="{class}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
        pts.join(" ")
    );
}

/// Train and test accuracy per epoch, in percent, with a dashed chance line.
/// Epochs without accuracies are skipped.
pub fn curve_svg(records: &[EpochRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Validation("cannot plot an empty history".into()));
    }
    let last_epoch = records.iter().map(|r| r.epoch).max().unwrap_or(1).max(2);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x_of = |epoch: usize| LEFT + (epoch as f64 - 1.0) / (last_epoch as f64 - 1.0) * plot_w;
    let y_of = |acc: f64| TOP + (1.0 - acc) * plot_h;

    let mut s = String::new();
    header(&mut s, WIDTH, HEIGHT);

    // Gridlines and y ticks every 20%.
    for pct in (0..=100).step_by(20) {
        let y = y_of(pct as f64 / 100.0);
        let _ =
            writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##, LEFT + plot_w);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{pct}</text>"#, LEFT - 6.0, y + 4.0);
    }
    let step = [1, 2, 5, 10, 20, 25, 50, 100, 200, 500, 1000]
        .into_iter()
        .find(|&st| last_epoch / st <= 10)
        .unwrap_or(last_epoch.div_ceil(10));
    let mut tick = 1;
    while tick <= last_epoch {
        let x = x_of(tick);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{tick}</text>"#, TOP + plot_h + 18.0);
        tick = if tick == 1 && step > 1 { step } else { tick + step };
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">epoch</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">accuracy (%)</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    let chance_y = y_of(CHANCE_ACCURACY);
    let _ = writeln!(
        s,
        r##"<line class="chance" x1="{LEFT}" y1="{chance_y:.2}" x2="{:.2}" y2="{chance_y:.2}" stroke="#555555" stroke-dasharray="6,4"/>"##,
        LEFT + plot_w
    );

    let train: Vec<_> = records.iter().filter_map(|r| r.train_accuracy.map(|a| (x_of(r.epoch), y_of(a)))).collect();
    let test: Vec<_> = records.iter().filter_map(|r| r.test_accuracy.map(|a| (x_of(r.epoch), y_of(a)))).collect();
    polyline(&mut s, &train, TRAIN_COLOR, "train");
    polyline(&mut s, &test, TEST_COLOR, "test");

    let lx = LEFT + plot_w + 15.0;
    for (i, (name, color, dash)) in [
        ("train", TRAIN_COLOR, ""),
        ("test", TEST_COLOR, ""),
        ("chance (33.3%)", "#555555", r#" stroke-dasharray="6,4""#),
    ]
    .into_iter()
    .enumerate()
    {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            lx + 24.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{name}</text>"#, lx + 30.0, y + 4.0);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Row-normalized confusion heatmap. Darker cells hold larger fractions.
pub fn heatmap_svg(confusion: &ConfusionMatrix) -> String {
    const CELL: f64 = 90.0;
    const X0: f64 = 120.0;
    const Y0: f64 = 60.0;
    let (w, h) = (X0 + 3.0 * CELL + 30.0, Y0 + 3.0 * CELL + 50.0);
    let norm = confusion.normalized();

    let mut s = String::new();
    header(&mut s, w, h);
    let _ = writeln!(s, r#"<text x="{:.2}" y="20" text-anchor="middle">predicted label</text>"#, X0 + 1.5 * CELL);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0:.2}" text-anchor="middle" transform="rotate(-90 16 {0:.2})">true label</text>"#,
        Y0 + 1.5 * CELL
    );
    for (j, label) in ClassLabel::ALL.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            X0 + (j as f64 + 0.5) * CELL,
            Y0 - 8.0,
            label.name()
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            X0 - 8.0,
            Y0 + (j as f64 + 0.5) * CELL + 4.0,
            label.name()
        );
    }
    for (i, row) in norm.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            // White at 0, deep blue at 1.
            let shade = |lo: f64, hi: f64| (hi + (lo - hi) * v).round() as u8;
            let fill = format!("#{:02x}{:02x}{:02x}", shade(8.0, 255.0), shade(48.0, 255.0), shade(107.0, 255.0));
            let text = if v > 0.5 { "white" } else { "black" };
            let (x, y) = (X0 + j as f64 * CELL, Y0 + i as f64 * CELL);
            let _ = writeln!(
                s,
                r#"<rect class="cell" x="{x:.2}" y="{y:.2}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="white"/>"#
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" dominant-baseline="middle" fill="{text}">{v:.2}</text>"#,
                x + CELL / 2.0,
                y + CELL / 2.0
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">rows normalized; n = {}</text>"#,
        X0 + 1.5 * CELL,
        h - 15.0,
        confusion.total()
    );
    s.push_str("</svg>\n");
    s
}

pub fn emit_curve_svg(records: &[EpochRecord], path: &Path) -> Result<()> {
    let svg = curve_svg(records)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

pub fn emit_heatmap_svg(confusion: &ConfusionMatrix, path: &Path) -> Result<()> {
    std::fs::write(path, heatmap_svg(confusion)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history(n: usize) -> Vec<EpochRecord> {
        (1..=n)
            .map(|e| EpochRecord {
                epoch: e,
                train_accuracy: Some((e as f64 / n as f64).min(1.0)),
                test_accuracy: Some(0.5),
                mean_loss: 1.0 / e as f32,
            })
            .collect()
    }

    #[test]
    fn curve_has_two_full_polylines_and_chance() {
        let svg = curve_svg(&history(100)).unwrap();
        let lines: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
        assert_eq!(lines.len(), 2);
        for l in lines {
            let pts = l.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
            assert_eq!(pts.split(' ').count(), 100);
        }
        assert!(svg.contains(r#"class="chance""#) && svg.contains("stroke-dasharray"));
        assert_eq!(svg, curve_svg(&history(100)).unwrap());
    }

    #[test]
    fn single_epoch_and_empty() {
        assert!(curve_svg(&history(1)).is_ok());
        assert!(curve_svg(&[]).is_err());
    }

    #[test]
    fn identity_diagonal_darkest() {
        let svg = heatmap_svg(&ConfusionMatrix::from_counts([[5, 0, 0], [0, 5, 0], [0, 0, 5]]));
        let fills: Vec<&str> = svg
            .lines()
            .filter(|l| l.contains(r#"class="cell""#))
            .map(|l| l.split("fill=\"").nth(1).unwrap().split('"').next().unwrap())
            .collect();
        assert_eq!(fills.len(), 9);
        for (k, f) in fills.iter().enumerate() {
            let expect = if k % 4 == 0 { "#08306b" } else { "#ffffff" };
            assert_eq!(*f, expect, "cell {k}");
        }
    }
}
