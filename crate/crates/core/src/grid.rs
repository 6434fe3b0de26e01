//! Dense row-major 2-D grids used for images, depth maps and masks.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::SizeMismatch(format!(
                "{} samples for a {}x{} grid",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn ensure_same_dims<U>(&self, other: &Grid<U>, what: &str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::SizeMismatch(format!(
                "{}: {}x{} vs {}x{}",
                what, self.width, self.height, other.width, other.height
            )))
        }
    }
}

impl Grid<f32> {
    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// integers). Returns `None` when any of the four taps is out of bounds.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> Option<f32> {
        if !(u.is_finite() && v.is_finite()) {
            return None;
        }
        let x0 = u.floor();
        let y0 = v.floor();
        if x0 < 0.0 || y0 < 0.0 {
            return None;
        }
        let (x0i, y0i) = (x0 as usize, y0 as usize);
        if x0i + 1 >= self.width || y0i + 1 >= self.height {
            // exact hits on the last row/column are still in bounds
            let on_edge_x = x0i + 1 == self.width && u == x0;
            let on_edge_y = y0i + 1 == self.height && v == y0;
            if !((x0i + 1 < self.width || on_edge_x) && (y0i + 1 < self.height || on_edge_y)) {
                return None;
            }
        }
        let ax = (u - x0) as f32;
        let ay = (v - y0) as f32;
        let x1i = (x0i + 1).min(self.width - 1);
        let y1i = (y0i + 1).min(self.height - 1);
        let p00 = *self.get(x0i, y0i);
        let p10 = *self.get(x1i, y0i);
        let p01 = *self.get(x0i, y1i);
        let p11 = *self.get(x1i, y1i);
        let top = p00 + (p10 - p00) * ax;
        let bottom = p01 + (p11 - p01) * ax;
        Some(top + (bottom - top) * ay)
    }
}

impl Grid<bool> {
    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn fraction_true(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.count_true() as f64 / self.data.len() as f64
        }
    }
}
