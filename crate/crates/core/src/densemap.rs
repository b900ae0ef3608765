//! Dense per-pixel scalar fields (depth, confidence, saliency, masks).

use thiserror::Error;

/// What a [`DenseMap`] holds; decides the sentinel for undefined pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MapRole {
    Depth,
    Confidence,
    Saliency,
    Mask,
    Weight,
    Precision,
}

impl MapRole {
    /// Value stored at undefined pixels: 0 for depth, −1 for everything else.
    pub fn sentinel(self) -> f64 {
        match self {
            MapRole::Depth => 0.0,
            _ => -1.0,
        }
    }

    pub fn is_defined(self, v: f64) -> bool {
        match self {
            MapRole::Depth => v > 0.0,
            _ => v >= 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MapRole::Depth => "depth",
            MapRole::Confidence => "confidence",
            MapRole::Saliency => "saliency",
            MapRole::Mask => "mask",
            MapRole::Weight => "weight",
            MapRole::Precision => "precision",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("buffer of length {len} cannot hold a {height}x{width} map")]
    BadLength { len: usize, height: usize, width: usize },
}

/// Row-major `height × width` scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMap {
    height: usize,
    width: usize,
    role: MapRole,
    data: Vec<f64>,
}

impl DenseMap {
    pub fn filled(height: usize, width: usize, role: MapRole, value: f64) -> Self {
        Self {
            height,
            width,
            role,
            data: vec![value; height * width],
        }
    }

    /// All pixels undefined.
    pub fn undefined(height: usize, width: usize, role: MapRole) -> Self {
        Self::filled(height, width, role, role.sentinel())
    }

    pub fn from_vec(height: usize, width: usize, role: MapRole, data: Vec<f64>) -> Result<Self, MapError> {
        if data.len() != height * width {
            return Err(MapError::BadLength {
                len: data.len(),
                height,
                width,
            });
        }
        Ok(Self {
            height,
            width,
            role,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, role: MapRole, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            role,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn role(&self) -> MapRole {
        self.role
    }

    pub fn with_role(mut self, role: MapRole) -> Self {
        self.role = role;
        self
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
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.width + col] = v;
    }

    #[inline]
    pub fn is_defined_at(&self, idx: usize) -> bool {
        self.role.is_defined(self.data[idx])
    }

    pub fn defined_count(&self) -> usize {
        self.data.iter().filter(|v| self.role.is_defined(**v)).count()
    }

    pub fn defined_fraction(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.defined_count() as f64 / self.data.len() as f64
    }

    pub fn same_shape(&self, other: &DenseMap) -> Result<(), MapError> {
        if self.height != other.height || self.width != other.width {
            return Err(MapError::DimensionMismatch(
                self.height,
                self.width,
                other.height,
                other.width,
            ));
        }
        Ok(())
    }

    /// Rounds every value to the nearest `f32`, matching what the binary map
    /// format stores.
    pub fn quantize_f32(mut self) -> Self {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
        self
    }

    pub fn is_f32_exact(&self) -> bool {
        self.data.iter().all(|v| (*v as f32 as f64) == *v)
    }

    /// Values at defined pixels.
    pub fn defined_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().copied().filter(move |v| self.role.is_defined(*v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentinels_follow_role() {
        let d = DenseMap::undefined(2, 3, MapRole::Depth);
        assert_eq!(d.defined_count(), 0);
        assert!(d.data().iter().all(|v| *v == 0.0));
        let s = DenseMap::undefined(2, 3, MapRole::Saliency);
        assert!(s.data().iter().all(|v| *v == -1.0));
        assert!(MapRole::Mask.is_defined(0.0));
        assert!(!MapRole::Depth.is_defined(0.0));
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(DenseMap::from_vec(2, 2, MapRole::Depth, vec![1.0; 3]).is_err());
        let m = DenseMap::from_fn(2, 3, MapRole::Depth, |r, c| (r * 3 + c) as f64);
        assert_eq!(m.get(1, 2), 5.0);
        assert_eq!(m.defined_count(), 5);
    }

    #[test]
    fn quantize_is_idempotent() {
        let m = DenseMap::from_vec(1, 2, MapRole::Depth, vec![0.1, 1.0 / 3.0]).unwrap();
        let q = m.quantize_f32();
        assert!(q.is_f32_exact());
        assert_eq!(q.clone().quantize_f32(), q);
    }
}
