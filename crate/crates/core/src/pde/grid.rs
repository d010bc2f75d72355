use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};

/// A real function sampled on the uniform grid `x_lo + i * dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub x_lo: f64,
    pub dx: f64,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(x_lo: f64, dx: f64, values: Vec<f64>) -> Result<Self> {
        if !(dx > 0.0) || !x_lo.is_finite() {
            return invalid("grid needs finite x_lo and dx > 0");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("grid values must be finite");
        }
        Ok(GridFunction { x_lo, dx, values })
    }

    pub fn from_fn(x_lo: f64, dx: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..n).map(|i| f(x_lo + i as f64 * dx)).collect();
        GridFunction { x_lo, dx, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_lo + i as f64 * self.dx
    }

    pub fn x_hi(&self) -> f64 {
        self.x(self.len().saturating_sub(1))
    }

    /// Index of the grid node nearest to `x`, if inside the grid.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let s = ((x - self.x_lo) / self.dx).round();
        if s < 0.0 || s >= self.len() as f64 {
            None
        } else {
            Some(s as usize)
        }
    }

    /// Piecewise-linear evaluation; outside the grid is an error.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let n = self.len();
        let s = (x - self.x_lo) / self.dx;
        let tol = 1e-9;
        if n == 0 || s < -tol || s > (n - 1) as f64 + tol {
            return Err(Error::OutOfDomain { x, lo: self.x_lo, hi: self.x_hi() });
        }
        if n == 1 {
            return Ok(self.values[0]);
        }
        let i = (s.floor().max(0.0) as usize).min(n - 2);
        let f = (s - i as f64).clamp(0.0, 1.0);
        Ok(self.values[i] * (1.0 - f) + self.values[i + 1] * f)
    }

    /// Pointwise `self - other` on a shared grid.
    pub fn minus(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(GridFunction { x_lo: self.x_lo, dx: self.dx, values })
    }

    pub fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.len() != other.len()
            || (self.x_lo - other.x_lo).abs() > 1e-9 * self.dx
            || (self.dx - other.dx).abs() > 1e-12 * self.dx
        {
            return invalid("grid functions live on different grids");
        }
        Ok(())
    }

    /// Values at the nodes inside `[lo, hi]` as `(x, value)` pairs.
    pub fn window(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        (0..self.len())
            .map(|i| (self.x(i), self.values[i]))
            .filter(|(x, _)| *x >= lo - 1e-9 * self.dx && *x <= hi + 1e-9 * self.dx)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_evaluation_and_bounds() {
        let g = GridFunction::from_fn(-1.0, 0.5, 5, |x| 2.0 * x);
        assert_eq!(g.x_hi(), 1.0);
        assert!((g.eval(0.3).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(g.eval(1.0).unwrap(), 2.0);
        assert!(g.eval(1.1).is_err());
        assert_eq!(g.index_of(0.0), Some(2));
        assert_eq!(g.window(-0.5, 0.5).len(), 3);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridFunction::new(0.0, 0.0, vec![1.0]).is_err());
        assert!(GridFunction::new(0.0, 1.0, vec![f64::NAN]).is_err());
        let a = GridFunction::from_fn(0.0, 1.0, 3, |x| x);
        let b = GridFunction::from_fn(0.5, 1.0, 3, |x| x);
        assert!(a.minus(&b).is_err());
    }
}
