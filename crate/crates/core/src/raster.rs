//! Dense multi-channel rasters and bilinear resampling.
//!
//! Continuous pixel coordinates place the center of pixel `(row, col)` at
//! `(col + 0.5, row + 0.5)`. Resampling is bilinear with clamp-to-edge.

/// Row-major, channel-interleaved `f64` raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height * channels, "raster size mismatch");
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        (row * self.width + col) * self.channels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.index(row, col) + channel]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        let i = self.index(row, col) + channel;
        self.data[i] = value;
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let i = self.index(row, col);
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let i = self.index(row, col);
        &mut self.data[i..i + self.channels]
    }

    /// Pixel by flat pixel index (`row * width + col`).
    pub fn at(&self, pixel: usize) -> &[f64] {
        &self.data[pixel * self.channels..(pixel + 1) * self.channels]
    }

    pub fn at_mut(&mut self, pixel: usize) -> &mut [f64] {
        &mut self.data[pixel * self.channels..(pixel + 1) * self.channels]
    }

    /// Single channel copied out as a new one-channel raster.
    pub fn channel(&self, channel: usize) -> Raster {
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|p| p[channel])
            .collect();
        Raster::from_vec(self.width, self.height, 1, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Raster {
        Raster::from_vec(
            self.width,
            self.height,
            self.channels,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// `self += k · other`.
    pub fn add_scaled(&mut self, other: &Raster, k: f64) {
        assert!(self.same_shape(other), "raster shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
    }

    pub fn max_abs_diff(&self, other: &Raster) -> f64 {
        assert!(self.same_shape(other), "raster shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Bilinear taps at a continuous pixel coordinate, clamped to the edge.
    pub fn taps(&self, x: f64, y: f64) -> BilinearTaps {
        BilinearTaps::new(self.width, self.height, x, y)
    }

    pub fn sample(&self, x: f64, y: f64, channel: usize) -> f64 {
        let taps = self.taps(x, y);
        taps.pixels
            .iter()
            .zip(&taps.weights)
            .map(|(&p, &w)| w * self.data[p * self.channels + channel])
            .sum()
    }
}

/// The four pixels and weights of a bilinear lookup. Weights sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearTaps {
    pub pixels: [usize; 4],
    pub weights: [f64; 4],
}

impl BilinearTaps {
    pub fn new(width: usize, height: usize, x: f64, y: f64) -> Self {
        assert!(width > 0 && height > 0, "empty raster");
        let fx = (x - 0.5).clamp(0.0, (width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (height - 1) as f64);
        // NaN coordinates clamp to the first pixel.
        let fx = if fx.is_nan() { 0.0 } else { fx };
        let fy = if fy.is_nan() { 0.0 } else { fy };
        let x0 = (fx.floor() as usize).min(width - 1);
        let y0 = (fy.floor() as usize).min(height - 1);
        let x1 = (x0 + 1).min(width - 1);
        let y1 = (y0 + 1).min(height - 1);
        let tx = fx - x0 as f64;
        let ty = fy - y0 as f64;
        Self {
            pixels: [
                y0 * width + x0,
                y0 * width + x1,
                y1 * width + x0,
                y1 * width + x1,
            ],
            weights: [
                (1.0 - tx) * (1.0 - ty),
                tx * (1.0 - ty),
                (1.0 - tx) * ty,
                tx * ty,
            ],
        }
    }

    /// True when the coordinate lies inside the raster footprint `[0,w]×[0,h]`.
    pub fn in_bounds(width: usize, height: usize, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= width as f64 && y <= height as f64
    }
}
