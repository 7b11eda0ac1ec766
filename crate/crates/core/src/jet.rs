//! Truncated Taylor jets of a scalar function of one variable.
//!
//! A [`Jet`] carries a value together with its first three derivatives and
//! propagates them exactly through products, quotients and composition with
//! elementary functions. All profile calculus in this crate (quotient-rule
//! expansions of `f / c1`, powers of `c1`, Gaussians) goes through here, so
//! no derivative is ever taken by finite differences in library code paths
//! that have an analytic form.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl Jet {
    pub const fn new(v: f64, d1: f64, d2: f64, d3: f64) -> Self {
        Self { v, d1, d2, d3 }
    }

    pub const fn constant(v: f64) -> Self {
        Self::new(v, 0.0, 0.0, 0.0)
    }

    /// The identity function evaluated at `x`.
    pub const fn variable(x: f64) -> Self {
        Self::new(x, 1.0, 0.0, 0.0)
    }

    pub fn scale(self, c: f64) -> Self {
        Self::new(c * self.v, c * self.d1, c * self.d2, c * self.d3)
    }

    /// Composition `phi(self)` given `phi` and its first three derivatives
    /// evaluated at `self.v`.
    pub fn compose(self, phi: [f64; 4]) -> Self {
        let (u1, u2, u3) = (self.d1, self.d2, self.d3);
        Self::new(
            phi[0],
            phi[1] * u1,
            phi[2] * u1 * u1 + phi[1] * u2,
            phi[3] * u1 * u1 * u1 + 3.0 * phi[2] * u1 * u2 + phi[1] * u3,
        )
    }

    pub fn recip(self) -> Self {
        let x = self.v;
        let inv = 1.0 / x;
        self.compose([inv, -inv * inv, 2.0 * inv.powi(3), -6.0 * inv.powi(4)])
    }

    pub fn powf(self, p: f64) -> Self {
        let x = self.v;
        self.compose([
            x.powf(p),
            p * x.powf(p - 1.0),
            p * (p - 1.0) * x.powf(p - 2.0),
            p * (p - 1.0) * (p - 2.0) * x.powf(p - 3.0),
        ])
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.compose([e, e, e, e])
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.compose([s, c, -s, -c])
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.compose([c, -s, -c, s])
    }

    /// Shift the jet one order down: the jet of the derivative. The third
    /// derivative of the result is unknown and set to zero.
    pub fn derivative(self) -> Self {
        Self::new(self.d1, self.d2, self.d3, 0.0)
    }

    pub fn quotient(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2, self.d3 + o.d3)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2, self.d3 - o.d3)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    // Leibniz rule to third order.
    fn mul(self, o: Jet) -> Jet {
        Jet::new(
            self.v * o.v,
            self.d1 * o.v + self.v * o.d1,
            self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
            self.d3 * o.v + 3.0 * self.d2 * o.d1 + 3.0 * self.d1 * o.d2 + self.v * o.d3,
        )
    }
}
