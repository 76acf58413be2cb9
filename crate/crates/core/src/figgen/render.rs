//! Deterministic, non-antialiased rasterizer.

use std::f64::consts::TAU;
use std::io::{BufReader, Cursor};
use std::path::Path;

use super::colors::{color_of, AXIS_RGB, BACKGROUND_RGB};
use super::spec::{FigureSpec, FigureType, LINE_Y_MAX};
use super::FigError;

pub const MIN_CANVAS: u32 = 32;

/// 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub height: u32,
    pub width: u32,
    pub data: Vec<u8>,
}

impl RasterImage {
    pub const CHANNELS: usize = 3;

    pub fn white(height: u32, width: u32) -> Self {
        let n = height as usize * width as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&BACKGROUND_RGB);
        }
        Self { height, width, data }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn put(&mut self, x: i64, y: i64, rgb: [u8; 3]) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, rgb: [u8; 3]) {
        for y in y0..y1 {
            for x in x0..x1 {
                self.put(x, y, rgb);
            }
        }
    }

    pub fn count_color(&self, rgb: [u8; 3]) -> usize {
        self.data.chunks_exact(3).filter(|p| *p == rgb).count()
    }

    pub fn to_png(&self) -> Result<Vec<u8>, FigError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(|e| FigError::Png(e.to_string()))?;
            w.write_image_data(&self.data).map_err(|e| FigError::Png(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self, FigError> {
        let dec = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
        let mut reader = dec.read_info().map_err(|e| FigError::Png(e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| FigError::Png("image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(|e| FigError::Png(e.to_string()))?;
        if info.bit_depth != png::BitDepth::Eight {
            return Err(FigError::Png(format!("unsupported bit depth {:?}", info.bit_depth)));
        }
        let px = info.width as usize * info.height as usize;
        let data = match info.color_type {
            png::ColorType::Rgb => buf[..px * 3].to_vec(),
            png::ColorType::Rgba => buf[..px * 4].chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            other => return Err(FigError::Png(format!("unsupported color type {other:?}"))),
        };
        Ok(Self {
            height: info.height,
            width: info.width,
            data,
        })
    }

    pub fn write_png(&self, path: &Path) -> Result<(), FigError> {
        std::fs::write(path, self.to_png()?)?;
        Ok(())
    }

    pub fn read_png(path: &Path) -> Result<Self, FigError> {
        Self::from_png(&std::fs::read(path)?)
    }
}

/// Plot-area geometry shared by the axis-based figure types.
struct Frame {
    /// Column of the y axis.
    left: i64,
    /// Row of the x axis.
    bottom: i64,
    /// First column right of the plot area.
    right: i64,
    /// Topmost plot row.
    top: i64,
}

impl Frame {
    fn new(height: u32, width: u32) -> Self {
        let margin = (height.min(width) / 16).max(2) as i64;
        Self {
            left: margin,
            bottom: height as i64 - margin - 1,
            right: width as i64 - margin,
            top: margin,
        }
    }

    fn inner_width(&self) -> i64 {
        self.right - self.left - 1
    }

    fn inner_height(&self) -> i64 {
        self.bottom - self.top
    }

    fn draw_axes(&self, img: &mut RasterImage) {
        img.fill_rect(self.left, self.top, self.left + 1, self.bottom + 1, AXIS_RGB);
        img.fill_rect(self.left, self.bottom, self.right, self.bottom + 1, AXIS_RGB);
    }
}

fn series_color(label: &str) -> Result<[u8; 3], FigError> {
    color_of(label).ok_or_else(|| FigError::InvalidSpec(format!("unknown label {label:?}")))
}

/// Rasterizes a figure. Labels are not drawn; each series uses the color its
/// label names.
pub fn render(spec: &FigureSpec) -> Result<RasterImage, FigError> {
    let (h, w) = (spec.canvas.height, spec.canvas.width);
    if h < MIN_CANVAS || w < MIN_CANVAS {
        return Err(FigError::CanvasTooSmall { height: h, width: w });
    }
    spec.validate()?;
    let mut img = RasterImage::white(h, w);
    match spec.figure_type {
        FigureType::VBar => draw_bars(&mut img, spec, false)?,
        FigureType::HBar => draw_bars(&mut img, spec, true)?,
        FigureType::Pie => draw_pie(&mut img, spec)?,
        FigureType::Line => draw_lines(&mut img, spec, false)?,
        FigureType::DotLine => draw_lines(&mut img, spec, true)?,
    }
    Ok(img)
}

/// Bar extent in pixels for `value` along an axis of `span` pixels.
fn bar_length(value: f64, span: i64) -> i64 {
    ((value / LINE_Y_MAX).clamp(0.0, 1.0) * span as f64).round() as i64
}

fn draw_bars(img: &mut RasterImage, spec: &FigureSpec, horizontal: bool) -> Result<(), FigError> {
    let f = Frame::new(img.height, img.width);
    f.draw_axes(img);
    let n = spec.series.len() as i64;
    let span_across = if horizontal { f.inner_height() } else { f.inner_width() };
    let slot = (span_across / n).max(1);
    let gap = (slot / 4).max(1).min(slot - 1);
    let thickness = (slot - gap).max(1);
    for (i, s) in spec.series.iter().enumerate() {
        let rgb = series_color(&s.label)?;
        let start = i as i64 * slot + gap / 2;
        if horizontal {
            let len = bar_length(s.values[0], f.inner_width());
            let y0 = f.top + start;
            img.fill_rect(f.left + 1, y0, f.left + 1 + len, y0 + thickness, rgb);
        } else {
            let len = bar_length(s.values[0], f.inner_height());
            let x0 = f.left + 1 + start;
            img.fill_rect(x0, f.bottom - len, x0 + thickness, f.bottom, rgb);
        }
    }
    Ok(())
}

fn draw_pie(img: &mut RasterImage, spec: &FigureSpec) -> Result<(), FigError> {
    let total: f64 = spec.series.iter().map(|s| s.values[0]).sum();
    let mut bounds = Vec::with_capacity(spec.series.len());
    let mut acc = 0.0;
    for s in &spec.series {
        acc += s.values[0] / total;
        bounds.push((acc, series_color(&s.label)?));
    }
    let cx = img.width as f64 / 2.0;
    let cy = img.height as f64 / 2.0;
    let margin = (img.height.min(img.width) / 16).max(2) as f64;
    let r = img.height.min(img.width) as f64 / 2.0 - margin;
    for y in 0..img.height {
        for x in 0..img.width {
            let dx = x as f64 + 0.5 - cx;
            let dy = cy - (y as f64 + 0.5);
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let frac = dy.atan2(dx).rem_euclid(TAU) / TAU;
            let rgb = bounds
                .iter()
                .find(|(b, _)| frac < *b)
                .map(|&(_, c)| c)
                .unwrap_or(bounds[bounds.len() - 1].1);
            img.put(x as i64, y as i64, rgb);
        }
    }
    Ok(())
}

fn draw_segment(img: &mut RasterImage, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), rgb: [u8; 3]) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        img.put(x0, y0, rgb);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

fn draw_lines(img: &mut RasterImage, spec: &FigureSpec, markers: bool) -> Result<(), FigError> {
    let f = Frame::new(img.height, img.width);
    f.draw_axes(img);
    let xs = &spec.x_points;
    let (xmin, xmax) = (xs[0], xs[xs.len() - 1]);
    let to_px = |x: f64, y: f64| -> (i64, i64) {
        let px = f.left + 1 + ((x - xmin) / (xmax - xmin) * (f.inner_width() - 1) as f64).round() as i64;
        let py = f.bottom - 1 - ((y / LINE_Y_MAX).clamp(0.0, 1.0) * (f.inner_height() - 1) as f64).round() as i64;
        (px, py)
    };
    for s in &spec.series {
        let rgb = series_color(&s.label)?;
        let pts: Vec<(i64, i64)> = xs.iter().zip(&s.values).map(|(&x, &y)| to_px(x, y)).collect();
        for w in pts.windows(2) {
            draw_segment(img, w[0], w[1], rgb);
        }
        if markers {
            for &(px, py) in &pts {
                img.fill_rect(px - 1, py - 1, px + 2, py + 2, rgb);
            }
        }
    }
    Ok(())
}
