//! Dense network with at most one rectified hidden layer, backed by a flat
//! parameter vector.

use rand::Rng as _;

use crate::random::rng_from_seed;
use crate::scalar::Real;

/// Parameter layout (all matrices row-major):
///
/// * linear: `W (K x D) | b (K)`
/// * hidden: `W1 (H x D) | b1 (H) | W2 (K x H) | b2 (K)`
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub(crate) input_dim: usize,
    pub(crate) hidden_width: usize,
    pub(crate) classes: usize,
    pub(crate) params: Vec<T>,
}

/// Intermediate activations needed by the backward pass.
pub(crate) struct Activations<T> {
    pub hidden: Vec<T>,
    pub output: Vec<T>,
}

pub(crate) fn param_count(input_dim: usize, hidden_width: usize, classes: usize) -> usize {
    if hidden_width == 0 {
        classes * (input_dim + 1)
    } else {
        hidden_width * (input_dim + 1) + classes * (hidden_width + 1)
    }
}

impl<T: Real> Network<T> {
    /// Seeded initialization: every entry uniform in `[-s, s]` with
    /// `s = 1 / sqrt(fan_in)` of its layer.
    pub fn init(input_dim: usize, hidden_width: usize, classes: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut params = Vec::with_capacity(param_count(input_dim, hidden_width, classes));
        let mut layer = |rows: usize, fan_in: usize, params: &mut Vec<T>| {
            let s = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..rows * (fan_in + 1) {
                params.push(T::lit(rng.gen_range(-s..=s)));
            }
        };
        if hidden_width == 0 {
            layer(classes, input_dim, &mut params);
        } else {
            layer(hidden_width, input_dim, &mut params);
            layer(classes, hidden_width, &mut params);
        }
        Self {
            input_dim,
            hidden_width,
            classes,
            params,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden_width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    /// Offsets of (weights, bias) of the output layer.
    fn output_offsets(&self) -> (usize, usize) {
        if self.hidden_width == 0 {
            (0, self.classes * self.input_dim)
        } else {
            let w2 = self.hidden_width * (self.input_dim + 1);
            (w2, w2 + self.classes * self.hidden_width)
        }
    }

    /// Whether parameter `i` is a bias (excluded from weight decay).
    pub(crate) fn is_bias(&self, i: usize) -> bool {
        if self.hidden_width == 0 {
            i >= self.classes * self.input_dim
        } else {
            let b1 = self.hidden_width * self.input_dim;
            let (w2, b2) = self.output_offsets();
            (b1..w2).contains(&i) || i >= b2
        }
    }

    fn affine(weights: &[T], bias: &[T], input: &[T], out: &mut Vec<T>) {
        let cols = input.len();
        out.clear();
        for (r, &b) in bias.iter().enumerate() {
            let row = &weights[r * cols..(r + 1) * cols];
            let mut acc = b;
            for (&w, &x) in row.iter().zip(input) {
                acc += w * x;
            }
            out.push(acc);
        }
    }

    pub(crate) fn forward(&self, x: &[T]) -> Activations<T> {
        let d = self.input_dim;
        let mut output = Vec::with_capacity(self.classes);
        if self.hidden_width == 0 {
            let (w, b) = self.params.split_at(self.classes * d);
            Self::affine(w, b, x, &mut output);
            Activations {
                hidden: Vec::new(),
                output,
            }
        } else {
            let h = self.hidden_width;
            let w1 = &self.params[..h * d];
            let b1 = &self.params[h * d..h * (d + 1)];
            let mut hidden = Vec::with_capacity(h);
            Self::affine(w1, b1, x, &mut hidden);
            for v in &mut hidden {
                *v = v.max(T::zero());
            }
            let (w2, b2) = self.output_offsets();
            Self::affine(
                &self.params[w2..b2],
                &self.params[b2..],
                &hidden,
                &mut output,
            );
            Activations { hidden, output }
        }
    }

    /// Raw output scores.
    pub fn raw_scores(&self, x: &[T]) -> Vec<T> {
        self.forward(x).output
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub(crate) fn backward(&self, x: &[T], acts: &Activations<T>, d_out: &[T], grad: &mut [T]) {
        let d = self.input_dim;
        let k = self.classes;
        if self.hidden_width == 0 {
            for (r, &g) in d_out.iter().enumerate() {
                for (gw, &xv) in grad[r * d..(r + 1) * d].iter_mut().zip(x) {
                    *gw += g * xv;
                }
                grad[k * d + r] += g;
            }
            return;
        }
        let h = self.hidden_width;
        let (w2, b2) = self.output_offsets();
        let mut d_hidden = vec![T::zero(); h];
        for (r, &g) in d_out.iter().enumerate() {
            let row = w2 + r * h;
            for j in 0..h {
                grad[row + j] += g * acts.hidden[j];
                d_hidden[j] += g * self.params[row + j];
            }
            grad[b2 + r] += g;
        }
        for (j, dh) in d_hidden.into_iter().enumerate() {
            // ReLU gate; the subgradient at 0 is taken as 0.
            if acts.hidden[j] <= T::zero() {
                continue;
            }
            for (gw, &xv) in grad[j * d..(j + 1) * d].iter_mut().zip(x) {
                *gw += dh * xv;
            }
            grad[h * d + j] += dh;
        }
    }

    /// Splits parameters into (hidden weights, hidden bias, output weights,
    /// output bias); hidden parts are empty for linear models.
    pub(crate) fn parts(&self) -> (&[T], &[T], &[T], &[T]) {
        let (w, b) = self.output_offsets();
        let hd = self.hidden_width * self.input_dim;
        (
            &self.params[..hd],
            &self.params[hd..w],
            &self.params[w..b],
            &self.params[b..],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = Network::<f64>::init(4, 0, 3, 11);
        let b = Network::<f64>::init(4, 0, 3, 11);
        assert_eq!(a, b);
        assert_ne!(a, Network::<f64>::init(4, 0, 3, 12));
        assert_eq!(a.params().len(), 15);
        assert!(a.params().iter().all(|v| v.abs() <= 0.5));
        let h = Network::<f64>::init(4, 5, 3, 0);
        assert_eq!(h.params().len(), 5 * 5 + 3 * 6);
    }

    #[test]
    fn bias_layout() {
        let lin = Network::<f64>::init(2, 0, 3, 0);
        let biases: Vec<usize> = (0..lin.params().len()).filter(|&i| lin.is_bias(i)).collect();
        assert_eq!(biases, vec![6, 7, 8]);
        let hid = Network::<f64>::init(2, 2, 3, 0);
        let biases: Vec<usize> = (0..hid.params().len()).filter(|&i| hid.is_bias(i)).collect();
        assert_eq!(biases, vec![4, 5, 12, 13, 14]);
    }
}
