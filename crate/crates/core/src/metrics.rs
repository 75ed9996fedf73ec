//! Evaluation: loss/accuracy, prediction grids, marching-squares
//! decision-boundary extraction, parametric curvature statistics,
//! prediction-gradient cross-sections, and weight-magnitude tracking.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::nn::{forward, loss, Batch, Labels, LossKind, MlpModel};

/// Mean loss and accuracy over a dataset. Binary accuracy thresholds the
/// sigmoid output at 0.5 (p > 0.5 reads as class 1); multi-class uses the
/// argmax of the logits.
pub fn evaluate(model: &MlpModel, dataset: &Dataset, kind: LossKind) -> Result<(f64, f64)> {
    let batch = dataset.as_batch();
    let predictions = forward(model, &batch.inputs)?;
    let mean_loss = loss(model, &batch, kind)?;
    let mut correct = 0usize;
    match kind {
        LossKind::Bce => {
            for (i, label) in dataset.labels.iter().enumerate() {
                let predicted = if predictions.get(i, 0) > 0.5 { 1.0 } else { 0.0 };
                if predicted == *label {
                    correct += 1;
                }
            }
        }
        LossKind::CrossEntropy => {
            for (i, label) in dataset.labels.iter().enumerate() {
                let row = predictions.row(i);
                let argmax = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(j, _)| j)
                    .unwrap();
                if argmax == *label as usize {
                    correct += 1;
                }
            }
        }
    }
    Ok((mean_loss, correct as f64 / dataset.len() as f64))
}

/// Predictions sampled on an n x n grid of cell centers over the extent.
#[derive(Debug, Clone)]
pub struct Grid {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub n: usize,
    /// values[(i, j)] = prediction at (x(j), y(i)), row-major.
    pub values: Matrix,
}

impl Grid {
    pub fn x(&self, j: usize) -> f64 {
        self.xmin + (j as f64 + 0.5) * (self.xmax - self.xmin) / self.n as f64
    }

    pub fn y(&self, i: usize) -> f64 {
        self.ymin + (i as f64 + 0.5) * (self.ymax - self.ymin) / self.n as f64
    }

    /// One CSV row per grid row, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let row = self.values.row(i);
            let mut line = String::with_capacity(row.len() * 25);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                let _ = write!(line, "{v:.16e}");
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// Evaluate the scalar prediction on an n x n cell-center grid,
/// in row chunks to bound memory.
pub fn prediction_grid(
    model: &MlpModel,
    extent: (f64, f64, f64, f64),
    n: usize,
) -> Result<Grid> {
    if n < 2 {
        return Err(Error::InvalidArgument("grid resolution must be >= 2".into()));
    }
    let (xmin, xmax, ymin, ymax) = extent;
    let mut grid = Grid {
        xmin,
        xmax,
        ymin,
        ymax,
        n,
        values: Matrix::zeros(n, n),
    };
    let chunk_rows = (4096 / n).max(1);
    let mut i = 0;
    while i < n {
        let rows = chunk_rows.min(n - i);
        let mut inputs = Matrix::zeros(rows * n, 2);
        for di in 0..rows {
            for j in 0..n {
                inputs.set(di * n + j, 0, grid.x(j));
                inputs.set(di * n + j, 1, grid.y(i + di));
            }
        }
        let out = forward(model, &inputs)?;
        for di in 0..rows {
            for j in 0..n {
                grid.values.set(i + di, j, out.get(di * n + j, 0));
            }
        }
        i += rows;
    }
    Ok(grid)
}

/// An ordered chain of level-set points.
#[derive(Debug, Clone)]
pub struct Polyline {
    pub points: Vec<(f64, f64)>,
    pub closed: bool,
}

impl Polyline {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV `x,y` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y\n");
        for (x, y) in &self.points {
            let _ = writeln!(out, "{x:.16e},{y:.16e}");
        }
        out
    }
}

// Grid edges carry the crossing points: horizontal edges join node (i, j)
// to (i, j+1), vertical edges join (i, j) to (i+1, j).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum EdgeId {
    H(usize, usize),
    V(usize, usize),
}

/// Extract the `level` iso-lines of the grid as polylines via marching
/// squares with linear interpolation; saddle cells are disambiguated by
/// the cell-center average. Loops are flagged closed (without repeating
/// the first point).
pub fn marching_squares(grid: &Grid, level: f64) -> Vec<Polyline> {
    let n = grid.n;
    let above = |v: f64| v > level;
    let interp_h = |i: usize, j: usize| -> (f64, f64) {
        let va = grid.values.get(i, j);
        let vb = grid.values.get(i, j + 1);
        let t = (level - va) / (vb - va);
        (grid.x(j) + t * (grid.x(j + 1) - grid.x(j)), grid.y(i))
    };
    let interp_v = |i: usize, j: usize| -> (f64, f64) {
        let va = grid.values.get(i, j);
        let vb = grid.values.get(i + 1, j);
        let t = (level - va) / (vb - va);
        (grid.x(j), grid.y(i) + t * (grid.y(i + 1) - grid.y(i)))
    };

    // Collect segments as pairs of edge ids.
    let mut segments: Vec<(EdgeId, EdgeId)> = Vec::new();
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            let bl = grid.values.get(i, j);
            let br = grid.values.get(i, j + 1);
            let tl = grid.values.get(i + 1, j);
            let tr = grid.values.get(i + 1, j + 1);

            let bottom = (above(bl) != above(br)).then_some(EdgeId::H(i, j));
            let top = (above(tl) != above(tr)).then_some(EdgeId::H(i + 1, j));
            let left = (above(bl) != above(tl)).then_some(EdgeId::V(i, j));
            let right = (above(br) != above(tr)).then_some(EdgeId::V(i, j + 1));

            let crossed: Vec<EdgeId> = [bottom, right, top, left].into_iter().flatten().collect();
            match crossed.len() {
                0 => {}
                2 => segments.push((crossed[0], crossed[1])),
                4 => {
                    // Saddle: both diagonals above (or below); split using
                    // the center average.
                    let center_above = above((bl + br + tl + tr) / 4.0);
                    if center_above == above(bl) {
                        segments.push((bottom.unwrap(), right.unwrap()));
                        segments.push((top.unwrap(), left.unwrap()));
                    } else {
                        segments.push((bottom.unwrap(), left.unwrap()));
                        segments.push((top.unwrap(), right.unwrap()));
                    }
                }
                _ => unreachable!("crossing parity"),
            }
        }
    }

    // Chain segments into polylines; each edge belongs to at most two cells.
    let mut by_edge: HashMap<EdgeId, Vec<usize>> = HashMap::new();
    for (idx, (a, b)) in segments.iter().enumerate() {
        by_edge.entry(*a).or_default().push(idx);
        by_edge.entry(*b).or_default().push(idx);
    }
    let mut used = vec![false; segments.len()];
    let mut polylines = Vec::new();

    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a0, b0) = segments[start];
        let mut chain = vec![a0, b0];

        // Extend forward from the tail, then backward from the head.
        loop {
            let tail = *chain.last().unwrap();
            let next = by_edge[&tail].iter().find(|&&s| !used[s]).copied();
            match next {
                Some(s) => {
                    used[s] = true;
                    let (a, b) = segments[s];
                    chain.push(if a == tail { b } else { a });
                }
                None => break,
            }
        }
        let closed = chain.len() > 2 && chain.first() == chain.last();
        if closed {
            chain.pop();
        } else {
            loop {
                let head = *chain.first().unwrap();
                let next = by_edge[&head].iter().find(|&&s| !used[s]).copied();
                match next {
                    Some(s) => {
                        used[s] = true;
                        let (a, b) = segments[s];
                        chain.insert(0, if a == head { b } else { a });
                    }
                    None => break,
                }
            }
        }

        let points = chain
            .into_iter()
            .map(|e| match e {
                EdgeId::H(i, j) => interp_h(i, j),
                EdgeId::V(i, j) => interp_v(i, j),
            })
            .collect();
        polylines.push(Polyline { points, closed });
    }
    polylines
}

/// Mean, standard deviation and maximum of |kappa| along a polyline, with
/// the point index as the curve parameter and second-order central
/// differences (wrap-around when closed, endpoints dropped when open).
#[derive(Debug, Clone, Copy)]
pub struct CurvatureStats {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub count: usize,
}

pub fn polyline_curvature(polyline: &Polyline) -> Result<CurvatureStats> {
    let pts = &polyline.points;
    let m = pts.len();
    if m < 5 {
        return Err(Error::InvalidArgument(format!(
            "curvature needs at least 5 points, got {m}"
        )));
    }
    let indices: Vec<usize> = if polyline.closed {
        (0..m).collect()
    } else {
        (1..m - 1).collect()
    };
    let mut kappas = Vec::with_capacity(indices.len());
    for &i in &indices {
        let prev = pts[(i + m - 1) % m];
        let cur = pts[i];
        let next = pts[(i + 1) % m];
        let dx = (next.0 - prev.0) / 2.0;
        let dy = (next.1 - prev.1) / 2.0;
        let ddx = next.0 - 2.0 * cur.0 + prev.0;
        let ddy = next.1 - 2.0 * cur.1 + prev.1;
        let speed2 = dx * dx + dy * dy;
        if speed2 < 1e-30 {
            log::warn!("skipping degenerate polyline point {i} (coincident neighbours)");
            continue;
        }
        kappas.push((ddx * dy - dx * ddy).abs() / speed2.powf(1.5));
    }
    if kappas.is_empty() {
        return Err(Error::InvalidArgument(
            "no usable points for curvature".into(),
        ));
    }
    let count = kappas.len();
    let mean = kappas.iter().sum::<f64>() / count as f64;
    let var = kappas.iter().map(|k| (k - mean) * (k - mean)).sum::<f64>() / count as f64;
    let max = kappas.iter().cloned().fold(0.0f64, f64::max);
    Ok(CurvatureStats {
        mean,
        std: var.sqrt(),
        max,
        count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Along y = 0, varying x.
    Horizontal,
    /// Along x = 0, varying y.
    Vertical,
}

/// d(prediction)/d(coordinate) sampled at n points along the axis via
/// second-order central differences (one-sided at the ends).
pub fn cross_section_gradients(
    model: &MlpModel,
    axis: Axis,
    n: usize,
    range: (f64, f64),
) -> Result<Vec<f64>> {
    if n < 3 {
        return Err(Error::InvalidArgument("need at least 3 samples".into()));
    }
    let (lo, hi) = range;
    let step = (hi - lo) / (n - 1) as f64;
    let mut inputs = Matrix::zeros(n, 2);
    for i in 0..n {
        let c = lo + i as f64 * step;
        match axis {
            Axis::Horizontal => {
                inputs.set(i, 0, c);
                inputs.set(i, 1, 0.0);
            }
            Axis::Vertical => {
                inputs.set(i, 0, 0.0);
                inputs.set(i, 1, c);
            }
        }
    }
    let p = forward(model, &inputs)?;
    let v = |i: usize| p.get(i, 0);
    let mut g = Vec::with_capacity(n);
    g.push((-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * step));
    for i in 1..n - 1 {
        g.push((v(i + 1) - v(i - 1)) / (2.0 * step));
    }
    g.push((3.0 * v(n - 1) - 4.0 * v(n - 2) + v(n - 3)) / (2.0 * step));
    Ok(g)
}

/// max |W_ij| of one layer.
pub fn max_abs_weight(model: &MlpModel, layer: usize) -> Result<f64> {
    model
        .layers
        .get(layer)
        .map(|l| l.w.max_abs())
        .ok_or_else(|| Error::InvalidArgument(format!("no layer {layer}")))
}
