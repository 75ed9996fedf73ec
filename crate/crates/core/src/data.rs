//! Synthetic two-class spiral datasets and minibatch sampling.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::nn::{Batch, Labels};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// A planar binary classification dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub points: Matrix,
    pub labels: Vec<f64>,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpiralKind {
    /// Two turns: (sqrt(t) cos(4 sqrt(t) pi), sqrt(t) sin(4 sqrt(t) pi)),
    /// default noise 0.05.
    TwoTurn,
    /// Four turns: (2 sqrt(t) cos(8 sqrt(t) pi), 2 sqrt(t) sin(8 sqrt(t) pi)),
    /// default noise 0.02.
    FourTurn,
}

impl SpiralKind {
    pub fn default_sigma(self) -> f64 {
        match self {
            SpiralKind::TwoTurn => 0.05,
            SpiralKind::FourTurn => 0.02,
        }
    }
}

/// Noise-free point on the spiral curve; class 1 shifts the trigonometric
/// argument by pi.
pub fn spiral_point(kind: SpiralKind, t: f64, class: usize) -> (f64, f64) {
    let phase = if class == 0 { 0.0 } else { std::f64::consts::PI };
    let root = t.sqrt();
    match kind {
        SpiralKind::TwoTurn => {
            let arg = 4.0 * root * std::f64::consts::PI + phase;
            (root * arg.cos(), root * arg.sin())
        }
        SpiralKind::FourTurn => {
            let arg = 8.0 * root * std::f64::consts::PI + phase;
            (2.0 * root * arg.cos(), 2.0 * root * arg.sin())
        }
    }
}

fn spiral(kind: SpiralKind, n_per_class: usize, sigma: f64, rng: &mut Rng, split: Split) -> Dataset {
    let n = 2 * n_per_class;
    let mut points = Matrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n_per_class {
        for class in 0..2usize {
            let t = rng.uniform(0.0, 1.0);
            let (x, y) = spiral_point(kind, t, class);
            let (nx, ny) = if sigma > 0.0 {
                (sigma * rng.standard_normal(), sigma * rng.standard_normal())
            } else {
                (0.0, 0.0)
            };
            let row = 2 * i + class;
            points.set(row, 0, x + nx);
            points.set(row, 1, y + ny);
            labels.push(class as f64);
        }
    }
    Dataset { points, labels, split }
}

/// Two-turn spiral; `t ~ U(0,1)` per point.
pub fn spiral2(n_per_class: usize, sigma: f64, rng: &mut Rng, split: Split) -> Dataset {
    spiral(SpiralKind::TwoTurn, n_per_class, sigma, rng, split)
}

/// Four-turn spiral; `t ~ U(0,1)` per point.
pub fn spiral4(n_per_class: usize, sigma: f64, rng: &mut Rng, split: Split) -> Dataset {
    spiral(SpiralKind::FourTurn, n_per_class, sigma, rng, split)
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn as_batch(&self) -> Batch {
        Batch {
            inputs: self.points.clone(),
            labels: Labels::Binary(self.labels.clone()),
        }
    }

    /// CSV with header `x,y,label`, floats at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,label\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{}",
                self.points.get(i, 0),
                self.points.get(i, 1),
                self.labels[i] as u8
            );
        }
        out
    }
}

/// Fresh minibatch: ceil(fraction * N) distinct rows, uniform without
/// replacement.
pub fn minibatch(dataset: &Dataset, fraction: f64, rng: &mut Rng) -> Result<Batch> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "batch fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let n = dataset.len();
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let idx = rng.sample_indices(n, k);
    let mut inputs = Matrix::zeros(k, 2);
    let mut labels = Vec::with_capacity(k);
    for (row, &i) in idx.iter().enumerate() {
        inputs.set(row, 0, dataset.points.get(i, 0));
        inputs.set(row, 1, dataset.points.get(i, 1));
        labels.push(dataset.labels[i]);
    }
    Ok(Batch {
        inputs,
        labels: Labels::Binary(labels),
    })
}
