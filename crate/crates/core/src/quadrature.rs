//! Adaptive composite Gauss-Legendre quadrature.

use std::sync::OnceLock;

const ORDER: usize = 20;
const MAX_DEPTH: u32 = 40;

/// Nodes and weights on [-1, 1], found by Newton iteration on P_n.
fn gauss_legendre() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = ORDER;
        let mut rule = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=n {
                    let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        rule
    })
}

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    half * gauss_legendre()
        .iter()
        .map(|&(x, w)| w * f(mid + half * x))
        .sum::<f64>()
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = panel(f, a, m);
    let right = panel(f, m, b);
    let split = left + right;
    if depth >= MAX_DEPTH || (split - whole).abs() <= tol {
        return split;
    }
    adapt(f, a, m, left, 0.5 * tol, depth + 1) + adapt(f, m, b, right, 0.5 * tol, depth + 1)
}

/// Integrates `f` over `[a, b]`, bisecting panels until the two-panel and
/// one-panel estimates agree within `abs_tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let whole = panel(&f, a, b);
    adapt(&f, a, b, whole, abs_tol, 0)
}
