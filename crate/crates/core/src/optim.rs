//! Bounded derivative-free maximization: a tensor grid and a Nelder-Mead
//! simplex with every trial point clamped into the box.

use rayon::prelude::*;

/// Box constraint for one coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.low, self.high)
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

/// Evenly spaced points of each axis, combined in row-major order (last
/// coordinate fastest).
pub fn grid(bounds: &[Interval], points: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .map(|b| {
            (0..points)
                .map(|i| b.low + b.width() * i as f64 / (points - 1) as f64)
                .collect()
        })
        .collect();
    let total = points.pow(bounds.len() as u32);
    (0..total)
        .map(|mut k| {
            let mut x = vec![0.0; bounds.len()];
            for j in (0..bounds.len()).rev() {
                x[j] = axes[j][k % points];
                k /= points;
            }
            x
        })
        .collect()
}

/// Evaluates `f` at every point (in parallel) and returns the values in
/// point order. `NaN` is mapped to negative infinity.
pub fn evaluate_all<F>(points: &[Vec<f64>], f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    points.par_iter().map(|x| sanitize(f(x))).collect()
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexOptions {
    /// Initial edge length as a fraction of each interval width.
    pub initial_step: f64,
    /// Stop when every vertex is within this distance of the best one
    /// (max norm) ...
    pub x_tolerance: f64,
    /// ... and the objective spread is below this (relative to `1 + |f|`).
    pub f_tolerance: f64,
    pub max_evaluations: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            x_tolerance: 1e-3,
            f_tolerance: 1e-8,
            max_evaluations: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Maximizes `f` from `start` inside `bounds`.
pub fn nelder_mead<F>(
    f: F,
    start: &[f64],
    bounds: &[Interval],
    options: &SimplexOptions,
) -> SimplexResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    let evaluations = std::cell::Cell::new(0usize);
    let clamp =
        |x: Vec<f64>| -> Vec<f64> { x.into_iter().zip(bounds).map(|(v, b)| b.clamp(v)).collect() };
    // Internally minimize the negated objective.
    let eval = |x: &[f64]| -> f64 {
        evaluations.set(evaluations.get() + 1);
        -sanitize(f(x))
    };

    let x0 = clamp(start.to_vec());
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(&x0);
    simplex.push((x0.clone(), v0));
    for j in 0..n {
        let mut x = x0.clone();
        let step = options.initial_step * bounds[j].width();
        // Step inward when the start sits on (or near) the upper bound.
        x[j] = if x0[j] + step <= bounds[j].high {
            x0[j] + step
        } else {
            x0[j] - step
        };
        let x = clamp(x);
        let v = eval(&x);
        simplex.push((x, v));
    }

    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0];
        let f_spread = simplex
            .iter()
            .map(|(_, v)| (v - best.1).abs())
            .fold(0.0, f64::max);
        let x_spread = simplex
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&best.0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if best.1.is_finite()
            && f_spread <= options.f_tolerance * (1.0 + best.1.abs())
            && x_spread <= options.x_tolerance
        {
            converged = true;
            break;
        }
        if evaluations.get() >= options.max_evaluations {
            break;
        }

        let worst = simplex[n].clone();
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            clamp(
                centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect(),
            )
        };

        let xr = along(1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let xc = along(0.5);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < worst.1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        // Shrink towards the best vertex.
        let best_x = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x = clamp(
                best_x
                    .iter()
                    .zip(&vertex.0)
                    .map(|(b, v)| b + 0.5 * (v - b))
                    .collect(),
            );
            let v = eval(&x);
            *vertex = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, v) = simplex.swap_remove(0);
    SimplexResult {
        x,
        value: -v,
        evaluations: evaluations.get(),
        converged,
    }
}
