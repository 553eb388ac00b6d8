//! Dense layers and tanh MLPs.

use rand::Rng;

use crate::tape::{Mat, Tape, Var};

/// Affine layer `y = x W + b` with `W` stored `in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Mat,
    pub b: Mat,
}

impl Dense {
    /// Xavier-uniform weights, zero bias.
    pub fn xavier<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        let w = (0..inputs * outputs).map(|_| rng.random_range(-a..=a)).collect();
        Self {
            w: Mat::from_vec(inputs, outputs, w),
            b: Mat::zeros(1, outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.rows
    }

    pub fn outputs(&self) -> usize {
        self.w.cols
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.b.data.clone();
        for (i, &xi) in x.iter().enumerate() {
            for (yj, wij) in y.iter_mut().zip(self.w.row(i)) {
                *yj += xi * wij;
            }
        }
        y
    }
}

/// Tanh hidden layers and a linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `sizes` lists input, hidden and output widths.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let layers = sizes.windows(2).map(|w| Dense::xavier(w[0], w[1], rng)).collect();
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, Dense::outputs)
    }

    /// Single-sample forward pass without recording.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if i < last {
                h.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
        h
    }

    /// Puts every parameter on the tape, weights before biases per layer.
    pub fn leaves(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|m| tape.leaf(m.clone())).collect()
    }

    /// Batched forward pass over `x` (`n x inputs`) using leaves from
    /// [`Mlp::leaves`].
    pub fn forward_tape(&self, tape: &mut Tape, x: Var, leaves: &[Var]) -> Var {
        let last = self.layers.len() - 1;
        let mut h = x;
        for i in 0..self.layers.len() {
            h = tape.matmul(h, leaves[2 * i]);
            h = tape.add_row(h, leaves[2 * i + 1]);
            if i < last {
                h = tape.tanh(h);
            }
        }
        h
    }

    pub fn params(&self) -> Vec<&Mat> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat> {
        self.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|m| m.len()).sum()
    }
}
