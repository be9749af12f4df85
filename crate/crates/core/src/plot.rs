//! PNG line charts of a metrics history.

use std::path::{Path, PathBuf};

use crate::ela::RgbImage;
use crate::error::{ensure, Error, Result};
use crate::training::MetricsHistory;

pub const TRAIN_COLOUR: [u8; 3] = [31, 119, 180];
pub const VAL_COLOUR: [u8; 3] = [255, 127, 14];

const WIDTH: u32 = 640;
const HEIGHT: u32 = 400;
const MARGIN: u32 = 40;
const GRID: [u8; 3] = [225, 225, 225];
const AXIS: [u8; 3] = [60, 60, 60];

/// One polyline of a chart.
pub struct Series<'a> {
    pub values: &'a [f64],
    pub colour: [u8; 3],
}

/// Draws the series over a shared x range (index) and y range `y_min..=y_max`,
/// with four horizontal grid lines and a frame. Non-finite points break the line.
pub fn line_chart(series: &[Series<'_>], y_min: f64, y_max: f64) -> Result<RgbImage> {
    ensure!(y_max > y_min, "empty y range {y_min}..{y_max}");
    let mut canvas = Canvas::new(WIDTH, HEIGHT);
    let (left, right) = (MARGIN as f64, (WIDTH - MARGIN / 2) as f64);
    let (top, bottom) = ((MARGIN / 2) as f64, (HEIGHT - MARGIN) as f64);
    for i in 1..4 {
        let y = top + (bottom - top) * i as f64 / 4.0;
        canvas.line(left, y, right, y, GRID);
    }
    canvas.line(left, top, right, top, AXIS);
    canvas.line(left, bottom, right, bottom, AXIS);
    canvas.line(left, top, left, bottom, AXIS);
    canvas.line(right, top, right, bottom, AXIS);

    let points = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let x_of = |i: usize| if points <= 1 { (left + right) / 2.0 } else { left + (right - left) * i as f64 / (points - 1) as f64 };
    let y_of = |v: f64| bottom - (bottom - top) * ((v - y_min) / (y_max - y_min)).clamp(0.0, 1.0);
    for s in series {
        for (i, pair) in s.values.windows(2).enumerate() {
            if pair[0].is_finite() && pair[1].is_finite() {
                canvas.line(x_of(i), y_of(pair[0]), x_of(i + 1), y_of(pair[1]), s.colour);
            }
        }
        if s.values.len() == 1 && s.values[0].is_finite() {
            canvas.dot(x_of(0), y_of(s.values[0]), s.colour);
        }
    }
    canvas.finish()
}

/// Writes `accuracy.png` (0 to 1) and `loss.png` (0 to the largest loss) into `dir`.
pub fn render_history(history: &MetricsHistory, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    ensure!(!history.is_empty(), "cannot plot an empty history");
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let pick = |f: fn(&crate::training::EpochMetrics) -> f64| history.records().iter().map(f).collect::<Vec<_>>();
    let (train_acc, val_acc) = (pick(|r| r.train_acc), pick(|r| r.val_acc));
    let (train_loss, val_loss) = (pick(|r| r.train_loss), pick(|r| r.val_loss));

    let accuracy = line_chart(
        &[Series { values: &train_acc, colour: TRAIN_COLOUR }, Series { values: &val_acc, colour: VAL_COLOUR }],
        0.0,
        1.0,
    )?;
    let top = train_loss.iter().chain(&val_loss).copied().filter(|v| v.is_finite()).fold(0.0f64, f64::max);
    let loss = line_chart(
        &[Series { values: &train_loss, colour: TRAIN_COLOUR }, Series { values: &val_loss, colour: VAL_COLOUR }],
        0.0,
        if top > 0.0 { top * 1.05 } else { 1.0 },
    )?;
    let (acc_path, loss_path) = (dir.join("accuracy.png"), dir.join("loss.png"));
    accuracy.save_png(&acc_path)?;
    loss.save_png(&loss_path)?;
    Ok((acc_path, loss_path))
}

struct Canvas {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Canvas {
    fn new(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![255; width as usize * height as usize * 3] }
    }

    fn put(&mut self, x: i64, y: i64, colour: [u8; 3]) {
        if x < 0 || y < 0 || x >= i64::from(self.width) || y >= i64::from(self.height) {
            return;
        }
        let at = (y as usize * self.width as usize + x as usize) * 3;
        self.data[at..at + 3].copy_from_slice(&colour);
    }

    fn dot(&mut self, x: f64, y: f64, colour: [u8; 3]) {
        let (cx, cy) = (x.round() as i64, y.round() as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                self.put(cx + dx, cy + dy, colour);
            }
        }
    }

    /// Two-pixel-wide segment, sampled at unit steps along the major axis.
    fn line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, colour: [u8; 3]) {
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let x = (x0 + (x1 - x0) * t).round() as i64;
            let y = (y0 + (y1 - y0) * t).round() as i64;
            self.put(x, y, colour);
            self.put(x, y + 1, colour);
        }
    }

    fn finish(self) -> Result<RgbImage> {
        RgbImage::new(self.width, self.height, self.data)
    }
}
