//! Minimal line charts rendered straight to PNG.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::Result;

const PALETTE: [[u8; 3]; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

pub fn color(i: usize) -> [u8; 3] {
    PALETTE[i % PALETTE.len()]
}

/// One chart: a set of curves sharing axes.
#[derive(Clone, Debug, Default)]
pub struct Panel {
    pub curves: Vec<Vec<f64>>,
}

const PANEL_W: u32 = 420;
const PANEL_H: u32 = 300;
const MARGIN: u32 = 24;

fn line(img: &mut RgbImage, (x0, y0): (f64, f64), (x1, y1): (f64, f64), c: Rgb<u8>) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for s in 0..=steps {
        let f = s as f64 / steps as f64;
        let x = (x0 + f * (x1 - x0)).round();
        let y = (y0 + f * (y1 - y0)).round();
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, c);
        }
    }
}

fn draw_panel(img: &mut RgbImage, panel: &Panel, left: u32) {
    let (x0, x1) = ((left + MARGIN) as f64, (left + PANEL_W - MARGIN) as f64);
    let (y_top, y_bot) = (MARGIN as f64, (PANEL_H - MARGIN) as f64);
    let axis = Rgb([0, 0, 0]);
    let grid = Rgb([225, 225, 225]);
    for g in 1..4 {
        let y = y_top + (y_bot - y_top) * g as f64 / 4.0;
        line(img, (x0, y), (x1, y), grid);
    }
    line(img, (x0, y_bot), (x1, y_bot), axis);
    line(img, (x0, y_top), (x0, y_bot), axis);

    let finite = panel.curves.iter().flatten().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return;
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (lo, hi) = (lo - 0.05 * span, hi + 0.05 * span);
    let len = panel.curves.iter().map(Vec::len).max().unwrap_or(0);
    let xs = |i: usize| if len > 1 { x0 + (x1 - x0) * i as f64 / (len - 1) as f64 } else { (x0 + x1) / 2.0 };
    let ys = |v: f64| y_bot - (y_bot - y_top) * (v - lo) / (hi - lo);
    for (ci, curve) in panel.curves.iter().enumerate() {
        let c = Rgb(color(ci));
        let pts: Vec<(f64, f64)> = curve
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| (xs(i), ys(v)))
            .collect();
        for w in pts.windows(2) {
            line(img, w[0], w[1], c);
        }
        for &(x, y) in &pts {
            for dx in -1..=1 {
                for dy in -1..=1 {
                    line(img, (x + dx as f64, y + dy as f64), (x + dx as f64, y + dy as f64), c);
                }
            }
        }
    }
}

/// Panels side by side, with a strip of color swatches underneath in curve
/// order.
pub fn render(panels: &[Panel]) -> RgbImage {
    let n_curves = panels.iter().map(|p| p.curves.len()).max().unwrap_or(0) as u32;
    let width = PANEL_W * panels.len().max(1) as u32;
    let mut img = RgbImage::from_pixel(width, PANEL_H + 20, Rgb([255, 255, 255]));
    for (i, p) in panels.iter().enumerate() {
        draw_panel(&mut img, p, i as u32 * PANEL_W);
    }
    for c in 0..n_curves {
        let x = MARGIN + c * 18;
        for dx in 0..12 {
            for dy in 0..10 {
                if x + dx < width {
                    img.put_pixel(x + dx, PANEL_H + 5 + dy, Rgb(color(c as usize)));
                }
            }
        }
    }
    img
}

pub fn write_png(panels: &[Panel], path: &Path) -> Result<()> {
    render(panels).save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
