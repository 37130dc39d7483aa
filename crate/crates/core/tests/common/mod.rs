//! Shared helpers for the integration tests: independent oracles and
//! random generators.

#![allow(dead_code)]

use posfeed::expr::Expr;
use posfeed::SquareMatrix;
use rand::Rng;

pub const S1_MODEL: &str = include_str!("../../models/s1.model");
pub const S2_MODEL: &str = include_str!("../../models/s2.model");
pub const S3_MODEL: &str = include_str!("../../models/s3.model");

pub fn model_text(name: &str) -> &'static str {
    match name {
        "S1" => S1_MODEL,
        "S2" => S2_MODEL,
        "S3" => S3_MODEL,
        _ => panic!("no fixture for {name}"),
    }
}

pub fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// Hand-derived equilibria of the closed-loop / constant-input fields.

/// S1 with defaults: `(x_in - k/γ, 1/γ)`.
pub fn s1_equilibrium(gamma: f64) -> Vec<f64> {
    vec![5.0 - 1.0 / gamma, 1.0 / gamma]
}

/// S2 with defaults at γ = 2: x1* = 1/(2l) = k1, then each Michaelis-Menten
/// term sits at half saturation, giving x2* = k2 and x3* = 1.
pub fn s2_equilibrium_gamma2() -> Vec<f64> {
    vec![1.0 / 4.2, 0.01 + 1.0 / 2.1, 1.0]
}

/// S3 with defaults.
pub fn s3_equilibrium(gamma: f64) -> Vec<f64> {
    let (k2, k3, k4) = (0.301, 2.5, 0.56);
    vec![
        (gamma * k2 * k3 + k2 - 1.0) / (gamma * (1.0 - k2)),
        k2 * k3 / (1.0 - k2),
        (k2 * (k3 - k4) + k4) / (1.0 - k2),
    ]
}

/// The γ for which the closed-loop S3 input `γ x1* x2*²` equals 1.
pub fn s3_unit_input_gamma() -> f64 {
    let (k2, k3) = (0.301, 2.5);
    let x2 = k2 * k3 / (1.0 - k2);
    ((1.0 - k2) / (x2 * x2) + 1.0 - k2) / (k2 * k3)
}

/// Largest real part of the spectrum, via nalgebra's Schur-based eigenvalues.
pub fn spectral_abscissa(a: &SquareMatrix) -> f64 {
    a.to_nalgebra().complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Dense random Metzler matrix: off-diagonals in [0, 1), diagonal in [-n, 0).
pub fn random_metzler<R: Rng>(rng: &mut R, n: usize) -> SquareMatrix {
    let mut a = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = if i == j { -(n as f64) * rng.gen::<f64>() } else { rng.gen::<f64>() };
        }
    }
    a
}

/// Smooth random expression over `x1..x{vars}`, total depth at most `depth`.
///
/// Every node is defined and differentiable on the positive orthant:
/// denominators are `1 + g^2`, logs take `1 + g^2`, exponentials take a
/// bounded argument.
pub fn random_expr<R: Rng>(rng: &mut R, vars: usize, depth: usize) -> Expr {
    if depth <= 1 || rng.gen_bool(0.2) {
        return if rng.gen_bool(0.6) {
            Expr::var(rng.gen_range(1..=vars))
        } else {
            Expr::Const((rng.gen_range(0.25..3.0f64) * 4.0).round() / 4.0)
        };
    }
    use posfeed::expr::{BinOp, Func};
    let sub = |rng: &mut R| random_expr(rng, vars, depth - 1);
    let bin = Expr::binary;
    let sq = |e: Expr| bin(BinOp::Pow, e, Expr::Const(2.0));
    let one_plus_sq = |e: Expr| bin(BinOp::Add, Expr::Const(1.0), sq(e));
    match rng.gen_range(0..8) {
        0 => bin(BinOp::Add, sub(rng), sub(rng)),
        1 => bin(BinOp::Sub, sub(rng), sub(rng)),
        2 => bin(BinOp::Mul, sub(rng), sub(rng)),
        3 => {
            let num = sub(rng);
            bin(BinOp::Div, num, one_plus_sq(sub(rng)))
        }
        4 => sq(sub(rng)),
        5 => {
            let g = sub(rng);
            Expr::Call(Func::Exp, Box::new(bin(BinOp::Div, g.clone(), one_plus_sq(g))))
        }
        6 => Expr::Call(Func::Ln, Box::new(one_plus_sq(sub(rng)))),
        _ => Expr::Neg(Box::new(sub(rng))),
    }
}

/// Central difference with one Richardson step.
pub fn fd_partial(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let h = 1e-4 * x[i].abs().max(1.0);
    let at = |d: f64| {
        let mut y = x.to_vec();
        y[i] += d;
        f(&y)
    };
    let d1 = (at(h) - at(-h)) / (2.0 * h);
    let d2 = (at(h / 2.0) - at(-h / 2.0)) / h;
    (4.0 * d2 - d1) / 3.0
}
