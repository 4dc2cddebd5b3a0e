//! Per-coordinate Adagrad steps over dense parameter buffers.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdagradParams {
    pub learning_rate: f64,
    pub epsilon: f64,
}

impl Default for AdagradParams {
    fn default() -> Self {
        AdagradParams {
            learning_rate: 0.1,
            epsilon: 1e-8,
        }
    }
}

/// `G += g²; x -= lr · g / (√G + ε)`. Returns false if `x` became non-finite.
#[inline]
pub fn step(x: &mut f64, accum: &mut f64, g: f64, p: AdagradParams) -> bool {
    if g == 0.0 {
        return true;
    }
    *accum += g * g;
    *x -= p.learning_rate * g / (accum.sqrt() + p.epsilon);
    x.is_finite()
}

/// A parameter buffer together with its accumulated squared gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct AdagradBuffer {
    pub values: Vec<f64>,
    pub accum: Vec<f64>,
}

impl AdagradBuffer {
    pub fn new(values: Vec<f64>) -> Self {
        let accum = vec![0.0; values.len()];
        AdagradBuffer { values, accum }
    }

    /// `G_i += g²; x_i -= lr · g / (√G_i + ε)`. Returns false if the new value is not finite.
    #[inline]
    pub fn step(&mut self, i: usize, g: f64, p: AdagradParams) -> bool {
        step(&mut self.values[i], &mut self.accum[i], g, p)
    }

    /// Applies a sparse gradient `g` to the coordinates `offset + index`.
    pub fn step_sparse(&mut self, offset: usize, g: impl IntoIterator<Item = (usize, f64)>, p: AdagradParams) -> bool {
        let mut ok = true;
        for (i, gi) in g {
            ok &= self.step(offset + i, gi, p);
        }
        ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_sign_scaled() {
        let p = AdagradParams::default();
        let mut b = AdagradBuffer::new(vec![0.0; 3]);
        assert!(b.step_sparse(0, [(0, 2.0), (2, -0.5)], p));
        assert!((b.values[0] + 0.1 * 2.0 / (2.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(b.values[1], 0.0);
        assert!((b.values[2] - 0.1 * 0.5 / (0.5 + 1e-8)).abs() < 1e-15);
        assert_eq!(b.accum, vec![4.0, 0.0, 0.25]);
    }

    #[test]
    fn accumulators_never_decrease() {
        let p = AdagradParams::default();
        let mut b = AdagradBuffer::new(vec![1.0; 2]);
        let mut prev = b.accum.clone();
        for k in 0..20 {
            let g = ((k as f64) * 0.7).sin();
            b.step(k % 2, g, p);
            assert!(b.accum.iter().zip(&prev).all(|(a, q)| a >= q));
            prev = b.accum.clone();
        }
    }

    #[test]
    fn non_finite_is_reported() {
        let mut b = AdagradBuffer::new(vec![0.0]);
        assert!(!b.step(0, f64::NAN, AdagradParams::default()));
    }
}
