//! Channel-shared residual MLP over a 9-step window.
//!
//! Layout, applied to every coordinate channel independently:
//!
//! ```text
//! z  = (x - c) * scale                  c = x[8] or 0, see Centering
//! h  = lrelu(W_in z + b_in)             9 -> H
//! h += W2 lrelu(W1 h + b1) + b2         twice, H -> H
//! o  = W_out h + b_out                  H -> 2
//! y  = c + o / scale                    [current, intermediate]
//! ```
//!
//! Parameters are stored flat in the order `W_in, b_in, (W1, b1, W2, b2) x 2,
//! W_out, b_out` with matrices row-major (`out x in`).

use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::window::WINDOW;
use crate::{Error, Result};

pub const BLOCKS: usize = 2;
pub const OUTPUTS: usize = 2;
pub const DEFAULT_HIDDEN: usize = 64;
pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Centering {
    /// Raw coordinates go in and out.
    None,
    /// The window's last value is subtracted before the network and added
    /// back to both outputs.
    LastFrame,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preprocess {
    pub centering: Centering,
    pub scale: f64,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self { centering: Centering::None, scale: 1.0 }
    }
}

/// Offsets of each tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub hidden: usize,
    pub w_in: usize,
    pub b_in: usize,
    pub blocks: [BlockLayout; BLOCKS],
    pub w_out: usize,
    pub b_out: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

impl Layout {
    pub fn new(hidden: usize) -> Self {
        let h = hidden;
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let w_in = take(h * WINDOW);
        let b_in = take(h);
        let mut blocks = [BlockLayout { w1: 0, b1: 0, w2: 0, b2: 0 }; BLOCKS];
        for b in blocks.iter_mut() {
            b.w1 = take(h * h);
            b.b1 = take(h);
            b.w2 = take(h * h);
            b.b2 = take(h);
        }
        let w_out = take(OUTPUTS * h);
        let b_out = take(OUTPUTS);
        Self { hidden, w_in, b_in, blocks, w_out, b_out, len: at }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinerWeights {
    pub hidden: usize,
    pub params: Vec<f64>,
    pub preprocess: Preprocess,
}

impl RefinerWeights {
    pub fn zeros(hidden: usize) -> Self {
        Self { hidden, params: alloc::vec![0.0; Layout::new(hidden).len], preprocess: Preprocess::default() }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.hidden)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Model("hidden width must be positive".into()));
        }
        let expected = self.layout().len;
        if self.params.len() != expected {
            return Err(Error::Model(alloc::format!(
                "{} parameters for hidden width {}, expected {expected}",
                self.params.len(),
                self.hidden
            )));
        }
        if let Some(i) = self.params.iter().position(|p| !p.is_finite()) {
            return Err(Error::Model(alloc::format!("non-finite parameter at index {i}")));
        }
        if !(self.preprocess.scale.is_finite() && self.preprocess.scale > 0.0) {
            return Err(Error::Model(alloc::format!("invalid input scale {}", self.preprocess.scale)));
        }
        Ok(())
    }

    /// Runs every channel window through the network; returns
    /// `[current, intermediate]` per channel.
    pub fn forward_channels(&self, inputs: &[[f64; WINDOW]]) -> Result<Vec<[f64; OUTPUTS]>> {
        self.validate()?;
        Ok(Network::new(self).forward(inputs).outputs())
    }
}

#[inline]
pub(crate) fn lrelu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[inline]
fn lrelu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Dense matrices unpacked from a weight vector.
pub(crate) struct Network {
    preprocess: Preprocess,
    w_in: DMatrix<f64>,
    b_in: DMatrix<f64>,
    blocks: Vec<[DMatrix<f64>; 4]>,
    w_out: DMatrix<f64>,
    b_out: DMatrix<f64>,
}

/// Activations kept for the backward pass. Columns are channel samples.
pub(crate) struct Forward {
    centers: Vec<f64>,
    scale: f64,
    z: DMatrix<f64>,
    a0: DMatrix<f64>,
    /// Hidden state entering block k, then the state after the last block.
    h: Vec<DMatrix<f64>>,
    a1: Vec<DMatrix<f64>>,
    r: Vec<DMatrix<f64>>,
    o: DMatrix<f64>,
}

impl Forward {
    pub(crate) fn len(&self) -> usize {
        self.o.ncols()
    }

    pub(crate) fn output(&self, col: usize, k: usize) -> f64 {
        self.centers[col] + self.o[(k, col)] / self.scale
    }

    pub(crate) fn outputs(&self) -> Vec<[f64; OUTPUTS]> {
        (0..self.len()).map(|c| [self.output(c, 0), self.output(c, 1)]).collect()
    }
}

fn add_bias(m: &mut DMatrix<f64>, b: &DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        col += b.column(0);
    }
}

impl Network {
    pub(crate) fn new(w: &RefinerWeights) -> Self {
        let l = w.layout();
        let h = l.hidden;
        let p = &w.params;
        let mat = |at: usize, rows: usize, cols: usize| DMatrix::from_row_slice(rows, cols, &p[at..at + rows * cols]);
        Self {
            preprocess: w.preprocess,
            w_in: mat(l.w_in, h, WINDOW),
            b_in: mat(l.b_in, h, 1),
            blocks: l
                .blocks
                .iter()
                .map(|b| [mat(b.w1, h, h), mat(b.b1, h, 1), mat(b.w2, h, h), mat(b.b2, h, 1)])
                .collect(),
            w_out: mat(l.w_out, OUTPUTS, h),
            b_out: mat(l.b_out, OUTPUTS, 1),
        }
    }

    pub(crate) fn forward(&self, inputs: &[[f64; WINDOW]]) -> Forward {
        let n = inputs.len();
        let scale = self.preprocess.scale;
        let centers: Vec<f64> = inputs
            .iter()
            .map(|x| match self.preprocess.centering {
                Centering::None => 0.0,
                Centering::LastFrame => x[WINDOW - 1],
            })
            .collect();
        let z = DMatrix::from_fn(WINDOW, n, |i, c| (inputs[c][i] - centers[c]) * scale);
        let mut a0 = &self.w_in * &z;
        add_bias(&mut a0, &self.b_in);
        let mut hidden = a0.map(lrelu);
        let mut h = Vec::with_capacity(BLOCKS + 1);
        let mut a1s = Vec::with_capacity(BLOCKS);
        let mut rs = Vec::with_capacity(BLOCKS);
        for [w1, b1, w2, b2] in &self.blocks {
            let mut a1 = w1 * &hidden;
            add_bias(&mut a1, b1);
            let r = a1.map(lrelu);
            let mut next = w2 * &r;
            add_bias(&mut next, b2);
            next += &hidden;
            h.push(hidden);
            a1s.push(a1);
            rs.push(r);
            hidden = next;
        }
        let mut o = &self.w_out * &hidden;
        add_bias(&mut o, &self.b_out);
        h.push(hidden);
        Forward { centers, scale, z, a0, h, a1: a1s, r: rs, o }
    }

    /// Accumulates the parameter gradient for `dy`, the loss gradient with
    /// respect to the de-normalized outputs (`OUTPUTS x n`).
    pub(crate) fn backward(&self, fwd: &Forward, dy: &DMatrix<f64>, layout: &Layout, grad: &mut [f64]) {
        let d_o = dy / fwd.scale;
        let h_last = &fwd.h[BLOCKS];
        accumulate(grad, layout.w_out, &(&d_o * h_last.transpose()));
        accumulate_rows(grad, layout.b_out, &d_o);
        let mut dh = self.w_out.transpose() * &d_o;
        for k in (0..BLOCKS).rev() {
            let [w1, _, w2, _] = &self.blocks[k];
            let bl = &layout.blocks[k];
            accumulate(grad, bl.w2, &(&dh * fwd.r[k].transpose()));
            accumulate_rows(grad, bl.b2, &dh);
            let mut da1 = w2.transpose() * &dh;
            da1.zip_apply(&fwd.a1[k], |d, a| *d *= lrelu_grad(a));
            accumulate(grad, bl.w1, &(&da1 * fwd.h[k].transpose()));
            accumulate_rows(grad, bl.b1, &da1);
            dh += w1.transpose() * &da1;
        }
        dh.zip_apply(&fwd.a0, |d, a| *d *= lrelu_grad(a));
        accumulate(grad, layout.w_in, &(&dh * fwd.z.transpose()));
        accumulate_rows(grad, layout.b_in, &dh);
    }
}

fn accumulate(grad: &mut [f64], at: usize, m: &DMatrix<f64>) {
    let cols = m.ncols();
    for i in 0..m.nrows() {
        for j in 0..cols {
            grad[at + i * cols + j] += m[(i, j)];
        }
    }
}

fn accumulate_rows(grad: &mut [f64], at: usize, m: &DMatrix<f64>) {
    for (i, row) in m.row_iter().enumerate() {
        grad[at + i] += row.sum();
    }
}
