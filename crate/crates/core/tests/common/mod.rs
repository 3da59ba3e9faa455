//! Shared test oracles: quadrature, finite differences, dense linear
//! solves and distribution checks. These stay independent of the library
//! paths they are used to verify.

#![allow(dead_code)]

use covshift::nn::{batch_loss, Gradients, LossSpec, MlpNetwork, TrainData};

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Tricomi initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Integrates `f` over `[a, b]` with the `n`-point Gauss-Legendre rule.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let (nodes, weights) = gauss_legendre_nodes(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes
        .iter()
        .zip(&weights)
        .map(|(&x, &w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Expectation of `f(Z)` for `Z ~ N(mu, sd^2)`, integrating over 12
/// standard deviations with a 400-point rule.
pub fn normal_expectation<F: Fn(f64) -> f64>(f: F, mu: f64, sd: f64) -> f64 {
    let density = |z: f64| {
        let u = (z - mu) / sd;
        (-0.5 * u * u).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
    };
    integrate(
        |z| f(z) * density(z),
        mu - 12.0 * sd,
        mu + 12.0 * sd,
        400,
    )
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &rhs)| {
            let mut r = row.clone();
            r.push(rhs);
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[i][col]
                .abs()
                .partial_cmp(&m[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[pivot][col].abs() < 1e-14 {
            return None;
        }
        m.swap(col, pivot);
        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= factor * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = m[row][n];
        for k in row + 1..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

/// Kolmogorov-Smirnov statistic of `samples` against the CDF `f`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in samples.iter().enumerate() {
        let c = cdf(x);
        d = d.max((c - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - c).abs());
    }
    d
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn sample_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Central-difference gradient of the batch loss with respect to every
/// parameter, by direct perturbation.
pub fn finite_difference_gradients(
    net: &MlpNetwork,
    data: &TrainData,
    loss: LossSpec,
    step: f64,
) -> Gradients {
    let mut out = Gradients {
        weights: net
            .weights
            .iter()
            .map(|w| ndarray::Array2::zeros(w.dim()))
            .collect(),
        biases: net
            .biases
            .iter()
            .map(|b| ndarray::Array1::zeros(b.len()))
            .collect(),
    };
    let eval = |candidate: &MlpNetwork| batch_loss(candidate, data, loss).unwrap();
    for l in 0..net.weights.len() {
        for idx in 0..net.weights[l].len() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            plus.weights[l].as_slice_mut().unwrap()[idx] += step;
            minus.weights[l].as_slice_mut().unwrap()[idx] -= step;
            out.weights[l].as_slice_mut().unwrap()[idx] =
                (eval(&plus) - eval(&minus)) / (2.0 * step);
        }
        for idx in 0..net.biases[l].len() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            plus.biases[l][idx] += step;
            minus.biases[l][idx] -= step;
            out.biases[l][idx] = (eval(&plus) - eval(&minus)) / (2.0 * step);
        }
    }
    out
}

/// Largest relative gradient discrepancy (with an absolute floor) between
/// analytic and finite-difference gradients.
pub fn max_gradient_discrepancy(analytic: &Gradients, numeric: &Gradients, floor: f64) -> f64 {
    let mut worst = 0.0_f64;
    let mut compare = |a: f64, b: f64| {
        let denom = a.abs().max(b.abs()).max(floor);
        worst = worst.max((a - b).abs() / denom);
    };
    for l in 0..analytic.weights.len() {
        for (a, b) in analytic.weights[l].iter().zip(numeric.weights[l].iter()) {
            compare(*a, *b);
        }
        for (a, b) in analytic.biases[l].iter().zip(numeric.biases[l].iter()) {
            compare(*a, *b);
        }
    }
    worst
}
