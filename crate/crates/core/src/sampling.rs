use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::VerifyError;

/// Cap on the number of grid points, whatever the dimension.
pub const MAX_GRID_POINTS: usize = 100_000;

/// Axis-aligned box with a deterministic sample set: a regular grid
/// (`grid_per_axis` points per axis, endpoints included) followed by
/// `random_count` uniform points drawn from a seeded ChaCha8 stream.
///
/// `grid_per_axis = 0` disables the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub grid_per_axis: usize,
    pub random_count: usize,
    pub seed: u64,
}

pub const DEFAULT_BOX: f64 = 10.0;
pub const DEFAULT_GRID: usize = 8;
pub const DEFAULT_RANDOM: usize = 1000;
pub const DEFAULT_SEED: u64 = 42;

impl SampleDomain {
    /// `[0, 10]^n`, 8 grid points per axis, 1000 random points, seed 42.
    pub fn default_for(n: usize) -> Self {
        Self::uniform_box(n, 0.0, DEFAULT_BOX, DEFAULT_GRID, DEFAULT_RANDOM, DEFAULT_SEED)
    }

    pub fn uniform_box(n: usize, lo: f64, hi: f64, grid: usize, random: usize, seed: u64) -> Self {
        SampleDomain { lower: vec![lo; n], upper: vec![hi; n], grid_per_axis: grid, random_count: random, seed }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<(), VerifyError> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(VerifyError::Domain("lower/upper bounds must have the same positive length".into()));
        }
        for (a, b) in self.lower.iter().zip(&self.upper) {
            if !(a.is_finite() && b.is_finite() && *a >= 0.0 && b > a) {
                return Err(VerifyError::Domain(format!("axis interval [{a}, {b}] must satisfy 0 <= a < b")));
            }
        }
        if self.grid_per_axis == 1 {
            return Err(VerifyError::Domain("grid_per_axis must be 0 or at least 2".into()));
        }
        Ok(())
    }

    /// Grid points per axis after applying the total cap.
    pub fn effective_grid(&self) -> usize {
        let n = self.dim() as u32;
        let mut g = self.grid_per_axis;
        while g >= 2 && g.checked_pow(n).is_none_or(|t| t > MAX_GRID_POINTS) {
            g -= 1;
        }
        if g < 2 {
            0
        } else {
            g
        }
    }

    pub fn grid_points(&self) -> Vec<Vec<f64>> {
        let g = self.effective_grid();
        if g == 0 {
            return Vec::new();
        }
        let n = self.dim();
        let total = g.pow(n as u32);
        let axis = |i: usize, k: usize| {
            let t = k as f64 / (g - 1) as f64;
            self.lower[i] + t * (self.upper[i] - self.lower[i])
        };
        (0..total)
            .map(|mut idx| {
                let mut p = vec![0.0; n];
                for i in (0..n).rev() {
                    p[i] = axis(i, idx % g);
                    idx /= g;
                }
                p
            })
            .collect()
    }

    pub fn random_points(&self) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.random_count)
            .map(|_| {
                self.lower
                    .iter()
                    .zip(&self.upper)
                    .map(|(a, b)| a + (b - a) * rng.gen::<f64>())
                    .collect()
            })
            .collect()
    }

    /// Grid points followed by random points.
    pub fn samples(&self) -> Vec<Vec<f64>> {
        let mut s = self.grid_points();
        s.extend(self.random_points());
        s
    }

    pub fn sample_count(&self) -> usize {
        let g = self.effective_grid();
        let grid = if g == 0 { 0 } else { g.pow(self.dim() as u32) };
        grid + self.random_count
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_determinism() {
        let d = SampleDomain::default_for(3);
        let s = d.samples();
        assert_eq!(s.len(), 512 + 1000);
        assert_eq!(s.len(), d.sample_count());
        assert_eq!(s, d.samples());
        assert_eq!(s[0], vec![0.0, 0.0, 0.0]);
        assert_eq!(s[511], vec![10.0, 10.0, 10.0]);
        assert!(s.iter().all(|p| p.iter().all(|v| (0.0..=10.0).contains(v))));
    }

    #[test]
    fn grid_is_capped() {
        let d = SampleDomain::uniform_box(6, 0.0, 1.0, 8, 0, 1);
        let g = d.effective_grid();
        assert!(g.pow(6) <= MAX_GRID_POINTS && (g + 1).pow(6) > MAX_GRID_POINTS);
    }

    #[test]
    fn invalid_domains() {
        assert!(SampleDomain::uniform_box(2, 1.0, 1.0, 8, 0, 1).validate().is_err());
        assert!(SampleDomain::uniform_box(2, -1.0, 1.0, 8, 0, 1).validate().is_err());
        assert!(SampleDomain::uniform_box(2, 0.0, 1.0, 1, 0, 1).validate().is_err());
    }
}
