//! Dense row-major 2-D storage.
//!
//! [`Grid`] is plain storage with bounds-checked indexing. [`FloatField`] adds
//! the invalid-pixel convention shared by disparity and depth maps: a cell is
//! valid iff its value is finite, and NaN is the canonical invalid marker
//! (also the on-disk encoding used by the float-map format).

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Grid { width, height, data: vec![fill; width * height] }
    }

    /// Panics if `data.len() != width * height`.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "grid data length mismatch");
        Grid { width, height, data }
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
    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// New grid with rows reversed left-to-right.
    pub fn hflip(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            let row = &mut out.data[y * self.width..(y + 1) * self.width];
            row.reverse();
        }
        out
    }
}

/// Dense float grid where NaN (or any non-finite value) marks an invalid
/// cell. Construction canonicalizes every non-finite input to NaN so that
/// serialized maps are byte-stable.
#[derive(Debug, Clone)]
pub struct FloatField<T = f64> {
    grid: Grid<T>,
}

impl<T: Real> FloatField<T> {
    pub fn new_invalid(width: usize, height: usize) -> Self {
        FloatField { grid: Grid::new(width, height, T::nan()) }
    }

    pub fn new_filled(width: usize, height: usize, v: T) -> Self {
        let v = if v.is_finite() { v } else { T::nan() };
        FloatField { grid: Grid::new(width, height, v) }
    }

    /// Panics if `data.len() != width * height`. Non-finite values become NaN.
    pub fn from_vec(width: usize, height: usize, mut data: Vec<T>) -> Self {
        for v in &mut data {
            if !v.is_finite() {
                *v = T::nan();
            }
        }
        FloatField { grid: Grid::from_vec(width, height, data) }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Option<T>) -> Self {
        let mut out = Self::new_invalid(width, height);
        for y in 0..height {
            for x in 0..width {
                if let Some(v) = f(x, y) {
                    out.set(x, y, v);
                }
            }
        }
        out
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.grid.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        self.grid.in_bounds(x, y)
    }

    /// `Some(value)` for valid cells, `None` for invalid ones.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<T> {
        let v = self.grid.get(x, y);
        v.is_finite().then_some(v)
    }

    /// Raw cell value; NaN for invalid cells.
    #[inline]
    pub fn raw(&self, x: usize, y: usize) -> T {
        self.grid.get(x, y)
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.grid.get(x, y).is_finite()
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.grid.set(x, y, if v.is_finite() { v } else { T::nan() });
    }

    #[inline]
    pub fn invalidate(&mut self, x: usize, y: usize) {
        self.grid.set(x, y, T::nan());
    }

    pub fn valid_count(&self) -> usize {
        self.grid.data().iter().filter(|v| v.is_finite()).count()
    }

    pub fn data(&self) -> &[T] {
        self.grid.data()
    }

    pub fn hflip(&self) -> Self {
        FloatField { grid: self.grid.hflip() }
    }

    /// Valid cells as `(x, y, value)` in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        let w = self.width();
        self.grid
            .data()
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(move |(i, v)| (i % w, i / w, *v))
    }

    /// Bit-level equality, treating every NaN as equal to every other NaN.
    pub fn same_values(&self, other: &Self) -> bool {
        self.width() == other.width()
            && self.height() == other.height()
            && self
                .data()
                .iter()
                .zip(other.data())
                .all(|(a, b)| (a.is_nan() && b.is_nan()) || a.widen().to_bits() == b.widen().to_bits())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_roundtrip_and_flip() {
        let g = Grid::from_vec(3, 2, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(g.get(0, 1), 4);
        let f = g.hflip();
        assert_eq!(f.data(), &[3, 2, 1, 6, 5, 4]);
    }

    #[test]
    fn field_canonicalizes_non_finite() {
        let f: FloatField = FloatField::from_vec(2, 1, vec![f64::INFINITY, 0.5]);
        assert!(!f.is_valid(0, 0));
        assert!(f.raw(0, 0).is_nan());
        assert_eq!(f.get(1, 0), Some(0.5));
        assert_eq!(f.valid_count(), 1);
    }

    #[test]
    fn field_set_and_invalidate() {
        let mut f: FloatField = FloatField::new_invalid(2, 2);
        f.set(1, 1, 3.0);
        assert_eq!(f.get(1, 1), Some(3.0));
        f.invalidate(1, 1);
        assert_eq!(f.get(1, 1), None);
        assert_eq!(f.iter_valid().count(), 0);
    }

    #[test]
    fn same_values_treats_nan_as_equal() {
        let a: FloatField = FloatField::from_vec(2, 1, vec![f64::NAN, 1.0]);
        let b: FloatField = FloatField::from_vec(2, 1, vec![f64::NAN, 1.0]);
        assert!(a.same_values(&b));
        let c: FloatField = FloatField::from_vec(2, 1, vec![0.0, 1.0]);
        assert!(!a.same_values(&c));
    }
}
