//! Float images and equirectangular-to-rectilinear projection.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geo::wrap_degrees;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("panorama must be 2:1, got {width}x{height}")]
    AspectRatio { width: u32, height: u32 },
    #[error("field of view {0} outside (0, 120]")]
    FieldOfView(f64),
    #[error("pitch {0} outside [-89, 89]")]
    Pitch(f64),
    #[error("output size must be positive, got {0}x{1}")]
    OutputSize(u32, u32),
}

/// Row-major, channel-interleaved `f32` image.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    width: u32,
    height: u32,
    channels: usize,
    data: Vec<f32>,
}

impl FloatImage {
    pub fn new(width: u32, height: u32, channels: usize) -> Self {
        Self { width, height, channels, data: vec![0.0; width as usize * height as usize * channels] }
    }

    pub fn from_raw(width: u32, height: u32, channels: usize, data: Vec<f32>) -> Option<Self> {
        (data.len() == width as usize * height as usize * channels).then_some(Self { width, height, channels, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[f32] {
        let at = (y as usize * self.width as usize + x as usize) * self.channels;
        &self.data[at..at + self.channels]
    }

    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [f32] {
        let at = (y as usize * self.width as usize + x as usize) * self.channels;
        &mut self.data[at..at + self.channels]
    }

    /// SHA-256 over the dimensions and little-endian sample bytes, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.width.to_le_bytes());
        h.update(self.height.to_le_bytes());
        h.update((self.channels as u32).to_le_bytes());
        for v in &self.data {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at `+0.5`),
    /// wrapping horizontally and clamping vertically.
    pub fn sample_wrapped(&self, u: f64, v: f64, out: &mut [f32]) {
        let (w, h) = (self.width as i64, self.height as i64);
        let fx = u - 0.5;
        let fy = (v - 0.5).clamp(0.0, (h - 1) as f64);
        let x0 = fx.floor();
        let y0 = fy.floor();
        let (tx, ty) = ((fx - x0) as f32, (fy - y0) as f32);
        let xa = (x0 as i64).rem_euclid(w) as u32;
        let xb = (x0 as i64 + 1).rem_euclid(w) as u32;
        let ya = y0 as u32;
        let yb = (y0 as i64 + 1).min(h - 1) as u32;
        let (p00, p10, p01, p11) = (self.pixel(xa, ya), self.pixel(xb, ya), self.pixel(xa, yb), self.pixel(xb, yb));
        for c in 0..self.channels {
            let top = p00[c] + (p10[c] - p00[c]) * tx;
            let bottom = p01[c] + (p11[c] - p01[c]) * tx;
            out[c] = top + (bottom - top) * ty;
        }
    }

    /// 8-bit RGB PNG of the first three channels (single-channel images are greyscale),
    /// with samples clamped to `[0, 1]`.
    pub fn to_png(&self) -> Vec<u8> {
        let mut rgb = image::RgbImage::new(self.width, self.height);
        for (x, y, px) in rgb.enumerate_pixels_mut() {
            let src = self.pixel(x, y);
            for c in 0..3 {
                let v = src[c.min(self.channels - 1)];
                px.0[c] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
        let mut out = std::io::Cursor::new(Vec::new());
        rgb.write_to(&mut out, image::ImageFormat::Png).expect("in-memory png encoding");
        out.into_inner()
    }
}

/// Camera parameters for one rectilinear crop. `yaw` is relative to the
/// panorama's center column; `fov` is horizontal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewParams {
    pub yaw: f64,
    pub pitch: f64,
    pub fov: f64,
    pub width: u32,
    pub height: u32,
}

/// Panorama coordinates `(u, v)` seen by output pixel `(i, j)`.
fn source_coords(pano_w: f64, pano_h: f64, p: &ViewParams, i: u32, j: u32) -> (f64, f64) {
    let t = (p.fov.to_radians() / 2.0).tan();
    let aspect = p.height as f64 / p.width as f64;
    let x = (2.0 * (i as f64 + 0.5) / p.width as f64 - 1.0) * t;
    let y = (1.0 - 2.0 * (j as f64 + 0.5) / p.height as f64) * t * aspect;
    let (sp, cp) = p.pitch.to_radians().sin_cos();
    let (yr, zr) = (y * cp + sp, -y * sp + cp);
    let mut theta = p.yaw.to_radians() + x.atan2(zr);
    theta = (theta + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    let phi = yr.atan2((x * x + zr * zr).sqrt());
    let u = (theta / std::f64::consts::TAU + 0.5) * pano_w;
    let v = (0.5 - phi / std::f64::consts::PI) * pano_h;
    (u, v)
}

/// Gnomonic projection of an equirectangular panorama.
pub fn render_view(pano: &FloatImage, params: &ViewParams) -> Result<FloatImage, RenderError> {
    if pano.width != 2 * pano.height || pano.height == 0 {
        return Err(RenderError::AspectRatio { width: pano.width, height: pano.height });
    }
    if !(params.fov > 0.0 && params.fov <= 120.0) {
        return Err(RenderError::FieldOfView(params.fov));
    }
    if !(-89.0..=89.0).contains(&params.pitch) {
        return Err(RenderError::Pitch(params.pitch));
    }
    if params.width == 0 || params.height == 0 {
        return Err(RenderError::OutputSize(params.width, params.height));
    }
    let mut out = FloatImage::new(params.width, params.height, pano.channels);
    let (pw, ph) = (pano.width as f64, pano.height as f64);
    for j in 0..params.height {
        for i in 0..params.width {
            let (u, v) = source_coords(pw, ph, params, i, j);
            pano.sample_wrapped(u, v, out.pixel_mut(i, j));
        }
    }
    Ok(out)
}

/// Panorama-space coordinates of the output center ray, exposed for tests and tooling.
pub fn center_source_coords(pano: &FloatImage, params: &ViewParams) -> (f64, f64) {
    let p = ViewParams { width: 1, height: 1, ..*params };
    source_coords(pano.width as f64, pano.height as f64, &p, 0, 0)
}

/// Procedural panorama whose pixels encode their own direction: channel 0/1
/// hold cos/sin of the compass bearing, channel 2 the elevation in degrees / 90.
pub fn synthetic_panorama(width: u32, heading_ref: f64) -> FloatImage {
    let height = width / 2;
    let mut img = FloatImage::new(width, height, 3);
    for x in 0..width {
        let bearing = heading_ref + ((x as f64 + 0.5) / width as f64 - 0.5) * 360.0;
        let (s, c) = bearing.to_radians().sin_cos();
        for y in 0..height {
            let elevation = (0.5 - (y as f64 + 0.5) / height as f64) * 180.0;
            let px = img.pixel_mut(x, y);
            px[0] = c as f32;
            px[1] = s as f32;
            px[2] = (elevation / 90.0) as f32;
        }
    }
    img
}

/// Bearing in degrees decoded from a [`synthetic_panorama`] sample.
pub fn decode_bearing(px: &[f32]) -> f64 {
    wrap_degrees((px[1] as f64).atan2(px[0] as f64).to_degrees())
}
