//! Composite Gauss–Legendre quadrature with global adaptive bisection,
//! periodic trapezoid sums, and finite-difference weights.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Shared 64-point rule.
    pub fn default_rule() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(64))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Map the rule onto [a, b] and return the physical nodes with scaled weights.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    /// Nodes per Gauss–Legendre panel.
    pub nodes: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            nodes: 64,
            rel_tol: 1e-8,
            abs_tol: 1e-14,
            max_panels: 2048,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    /// Integral of the auxiliary channel on the same nodes.
    pub aux: f64,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    aux: f64,
    error: f64,
}

/// Adaptive composite Gauss–Legendre integration of `f` over `[a, b]`.
///
/// `breakpoints` inside the interval split the initial panels so that
/// piecewise-smooth integrands are integrated piece by piece.
pub fn integrate<F>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: &QuadratureOptions,
) -> Result<Integral>
where
    F: FnMut(f64) -> f64,
{
    let mut f = f;
    integrate_with_aux(|x| (f(x), 0.0), a, b, breakpoints, opts)
}

/// Like [`integrate`], but the integrand also returns an auxiliary value that
/// is integrated on exactly the same nodes (refinement is driven by the
/// primary channel only).
pub fn integrate_with_aux<F>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: &QuadratureOptions,
) -> Result<Integral>
where
    F: FnMut(f64) -> (f64, f64),
{
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            aux: 0.0,
            evaluations: 0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let owned;
    let rule: &GaussLegendre = if opts.nodes == 64 {
        GaussLegendre::default_rule()
    } else {
        owned = GaussLegendre::new(opts.nodes);
        &owned
    };

    let mut cuts: Vec<f64> = vec![lo];
    let mut inner: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&x| x > lo && x < hi)
        .collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    cuts.extend(inner);
    cuts.push(hi);

    let mut evaluations = 0usize;
    let mut apply = |pa: f64, pb: f64, evaluations: &mut usize| -> (f64, f64) {
        let mut s = 0.0;
        let mut t = 0.0;
        for (x, w) in rule.mapped(pa, pb) {
            let (u, v) = f(x);
            s += w * u;
            t += w * v;
        }
        *evaluations += rule.len();
        (s, t)
    };
    let mut evaluate_panel = |pa: f64, pb: f64, evaluations: &mut usize| -> Panel {
        let mid = 0.5 * (pa + pb);
        let (whole, _) = apply(pa, pb, evaluations);
        let (l, la) = apply(pa, mid, evaluations);
        let (r, ra) = apply(mid, pb, evaluations);
        Panel {
            a: pa,
            b: pb,
            value: l + r,
            aux: la + ra,
            error: (whole - (l + r)).abs(),
        }
    };

    let mut panels: Vec<Panel> = cuts
        .windows(2)
        .map(|w| evaluate_panel(w[0], w[1], &mut evaluations))
        .collect();

    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let err: f64 = panels.iter().map(|p| p.error).sum();
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::QuadratureFailure {
                estimate: f64::INFINITY,
                tolerance: target,
            });
        }
        if err <= target {
            let aux: f64 = panels.iter().map(|p| p.aux).sum();
            return Ok(Integral {
                value: sign * total,
                error: err,
                aux: sign * aux,
                evaluations,
            });
        }
        if panels.len() >= opts.max_panels {
            return Err(Error::QuadratureFailure {
                estimate: err,
                tolerance: target,
            });
        }
        // Split the worst panel; ties go to the leftmost.
        let worst = panels.iter().enumerate().fold(0usize, |best, (i, p)| {
            if p.error > panels[best].error {
                i
            } else {
                best
            }
        });
        let p = panels.remove(worst);
        let mid = 0.5 * (p.a + p.b);
        let left = evaluate_panel(p.a, mid, &mut evaluations);
        let right = evaluate_panel(mid, p.b, &mut evaluations);
        panels.insert(worst, right);
        panels.insert(worst, left);
    }
}

/// Uniform trapezoid nodes θ_j = -π + 2πj/n on the circle.
pub fn periodic_nodes(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| -PI + 2.0 * PI * j as f64 / n as f64)
        .collect()
}

/// Trapezoid rule for a 2π-periodic integrand over [-π, π].
pub fn trapezoid_periodic<F: FnMut(f64) -> f64>(mut f: F, n: usize) -> f64 {
    let h = 2.0 * PI / n as f64;
    periodic_nodes(n).into_iter().map(&mut f).sum::<f64>() * h
}

/// Finite-difference weights for the `order`-th derivative at `x0` using the
/// given stencil nodes (Fornberg's recursion).
pub fn fd_weights(x0: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    assert!(order < n, "stencil too small for derivative order");
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// First derivative of `f` at `x` with a 7-point (6th order) stencil of
/// spacing `h`, shifted so that every node stays inside `[lo, hi]`.
pub fn derivative_in_interval<F: FnMut(f64) -> f64>(
    mut f: F,
    x: f64,
    h: f64,
    lo: f64,
    hi: f64,
) -> f64 {
    let mut offset: i32 = -3;
    while offset < 0 && x + offset as f64 * h < lo {
        offset += 1;
    }
    while offset > -6 && x + (offset + 6) as f64 * h > hi {
        offset -= 1;
    }
    let nodes: Vec<f64> = (0..7).map(|k| x + (offset + k) as f64 * h).collect();
    let w = fd_weights(x, &nodes, 1);
    nodes.iter().zip(&w).map(|(&xn, &wk)| wk * f(xn)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_weights_sum_to_two_and_integrate_polynomials() {
        for n in [1, 2, 5, 16, 64] {
            let g = GaussLegendre::new(n);
            let s: f64 = g.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n}: {s}");
            // exact for degree 2n-1
            let deg = 2 * n - 1;
            let q: f64 = g
                .nodes
                .iter()
                .zip(&g.weights)
                .map(|(x, w)| w * x.powi(deg as i32 - 1))
                .sum();
            let exact = if (deg - 1) % 2 == 0 {
                2.0 / deg as f64
            } else {
                0.0
            };
            assert!((q - exact).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn adaptive_integrates_smooth_and_kinked_functions() {
        let opts = QuadratureOptions::default();
        let r = integrate(|x| x.exp(), 0.0, 1.0, &[], &opts).unwrap();
        assert!((r.value - (1f64.exp() - 1.0)).abs() < 1e-14);
        let r = integrate(|x: f64| x.abs(), -1.0, 2.0, &[0.0], &opts).unwrap();
        assert!((r.value - 2.5).abs() < 1e-14);
        let r = integrate(|x: f64| x.abs().sqrt(), -1.0, 1.0, &[], &opts).unwrap();
        assert!((r.value - 4.0 / 3.0).abs() < 1e-7);
        let rev = integrate(|x| x, 1.0, 0.0, &[], &opts).unwrap();
        assert!((rev.value + 0.5).abs() < 1e-15);
    }

    #[test]
    fn unconverged_integral_is_reported() {
        let opts = QuadratureOptions {
            max_panels: 2,
            rel_tol: 1e-15,
            abs_tol: 0.0,
            nodes: 4,
        };
        let e = integrate(|x: f64| (1.0 / x).sin(), 1e-3, 1.0, &[], &opts).unwrap_err();
        assert!(matches!(e, Error::QuadratureFailure { .. }));
    }

    #[test]
    fn trapezoid_is_exact_for_trig_polynomials() {
        let v = trapezoid_periodic(|t| t.sin().powi(2) + (3.0 * t).cos(), 16);
        assert!((v - PI).abs() < 1e-14);
    }

    #[test]
    fn fornberg_shifted_stencils() {
        let f = |x: f64| (2.0 * x).sin();
        for x in [0.0, 0.999, -0.999, 0.5] {
            let d = derivative_in_interval(f, x, 1e-2, -1.0, 1.0);
            assert!((d - 2.0 * (2.0 * x).cos()).abs() < 1e-9, "x={x} d={d}");
        }
        let w = fd_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_eq!(w, vec![1.0, -2.0, 1.0]);
    }
}
