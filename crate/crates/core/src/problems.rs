//! The manufactured benchmark
//! `-eps Δu + (2 - x) u_x + 1.5 u = f` on the unit square with homogeneous
//! Dirichlet data, whose exact solution is the separable product
//!
//! ```text
//! X(x) = sin(pi x / 2) - (exp(-(1-x)/eps) - exp(-1/eps)) / (1 - exp(-1/eps))
//! Y(y) = (1 - exp(-y/sqrt(eps))) (1 - exp(-(1-y)/sqrt(eps))) / (1 - exp(-1/sqrt(eps)))
//! u    = X(x) Y(y)
//! ```
//!
//! Every exponential is taken of a nonpositive argument, and the right-hand
//! side is evaluated in a grouped form in which the `1/eps` terms of
//! `-eps X''` and `(2 - x) X'` have already been cancelled analytically.
//! Without the grouping, `eps = 1e-16` leaves no correct digits in `f` inside
//! the outflow layer.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use crate::assembly::Problem;
use crate::mesh::Point;

/// `1 - exp(-a)` for `a >= 0` without cancellation.
fn one_minus_exp_neg(a: f64) -> f64 {
    -(-a).exp_m1()
}

/// Separable factors of the exact solution for a fixed `eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactSolution {
    eps: f64,
    sqrt_eps: f64,
    ln_eps: f64,
    /// `1 - exp(-1/eps)`
    dx: f64,
    /// `exp(-1/eps)`
    ex: f64,
    /// `1 - exp(-1/sqrt(eps))`
    dy: f64,
    /// `exp(-1/sqrt(eps))`
    ey: f64,
}

/// Values of the x-factor and its first two derivative groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XFactor {
    pub value: f64,
    pub deriv: f64,
    /// `-eps X'' + (2 - x) X'`, already grouped.
    pub operator: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YFactor {
    pub value: f64,
    pub deriv: f64,
    /// `-eps Y''`, bounded by `2 / (1 - exp(-1/sqrt(eps)))`.
    pub neg_eps_second: f64,
}

/// Decomposition of the exact solution into smooth and layer parts.
///
/// `X = smooth_x - x_layer` and `Y = 1 - y_layer`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerFactors {
    pub smooth_x: f64,
    pub x_layer: f64,
    pub y_layer: f64,
}

impl ExactSolution {
    pub fn new(eps: f64) -> Self {
        assert!(eps > 0.0, "eps must be positive");
        let sqrt_eps = eps.sqrt();
        Self {
            eps,
            sqrt_eps,
            ln_eps: eps.ln(),
            dx: one_minus_exp_neg(1.0 / eps),
            ex: (-1.0 / eps).exp(),
            dy: one_minus_exp_neg(1.0 / sqrt_eps),
            ey: (-1.0 / sqrt_eps).exp(),
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `(1 - exp(-1/eps))`, the normalisation of the outflow layer.
    pub fn outflow_denominator(&self) -> f64 {
        self.dx
    }

    pub fn x_factor(&self, x: f64, x_rem: f64) -> XFactor {
        let t = x_rem / self.eps;
        let e = (-t).exp();
        let value = if x < 0.5 {
            (FRAC_PI_2 * x).sin() - (e - self.ex) / self.dx
        } else {
            // sin(pi x/2) - 1 + (1 - e^{-t}) / D, exact zero at x = 1
            let s = (0.5 * FRAC_PI_2 * x_rem).sin();
            -2.0 * s * s + one_minus_exp_neg(t) / self.dx
        };
        // eps^-1 e^{-t}, fused in the log domain
        let scaled = (-t - self.ln_eps).exp();
        let cos_half_pi_x = if x < 0.5 {
            (FRAC_PI_2 * x).cos()
        } else {
            (FRAC_PI_2 * x_rem).sin()
        };
        let sin_half_pi_x = if x < 0.5 {
            (FRAC_PI_2 * x).sin()
        } else {
            (FRAC_PI_2 * x_rem).cos()
        };
        let deriv = FRAC_PI_2 * cos_half_pi_x - scaled / self.dx;
        let smooth = self.eps * FRAC_PI_2 * FRAC_PI_2 * sin_half_pi_x
            + (2.0 - x) * FRAC_PI_2 * cos_half_pi_x;
        // -(1-x) e^{-t} / (eps D) = -t e^{-t} / D
        let layer = -t * e / self.dx;
        XFactor {
            value,
            deriv,
            operator: smooth + layer,
        }
    }

    pub fn y_factor(&self, y: f64, y_rem: f64) -> YFactor {
        let a = (-y / self.sqrt_eps).exp();
        let b = (-y_rem / self.sqrt_eps).exp();
        let value =
            one_minus_exp_neg(y / self.sqrt_eps) * one_minus_exp_neg(y_rem / self.sqrt_eps) / self.dy;
        YFactor {
            value,
            deriv: (a - b) / (self.sqrt_eps * self.dy),
            neg_eps_second: (a + b) / self.dy,
        }
    }

    pub fn value(&self, p: &Point) -> f64 {
        self.x_factor(p.x, p.x_rem).value * self.y_factor(p.y, p.y_rem).value
    }

    pub fn grad(&self, p: &Point) -> [f64; 2] {
        let xf = self.x_factor(p.x, p.x_rem);
        let yf = self.y_factor(p.y, p.y_rem);
        [xf.deriv * yf.value, xf.value * yf.deriv]
    }

    /// Right-hand side of the benchmark problem.
    pub fn rhs(&self, p: &Point) -> f64 {
        let xf = self.x_factor(p.x, p.x_rem);
        let yf = self.y_factor(p.y, p.y_rem);
        yf.value * xf.operator + xf.value * yf.neg_eps_second + 1.5 * xf.value * yf.value
    }

    pub fn layer_factors(&self, p: &Point) -> LayerFactors {
        let t = p.x_rem / self.eps;
        let smooth_x = if p.x < 0.5 {
            (FRAC_PI_2 * p.x).sin()
        } else {
            (FRAC_PI_2 * p.x_rem).cos()
        };
        let a = (-p.y / self.sqrt_eps).exp();
        let b = (-p.y_rem / self.sqrt_eps).exp();
        LayerFactors {
            smooth_x,
            x_layer: ((-t).exp() - self.ex) / self.dx,
            y_layer: (a + b - 2.0 * self.ey) / self.dy,
        }
    }

    /// Second derivatives `(u_xx, u_yy)` from the ungrouped analytic formulas.
    ///
    /// Only meant for residual checks; inside the outflow layer the terms are
    /// of size `1/eps^2`.
    pub fn second_derivatives(&self, p: &Point) -> [f64; 2] {
        let t = p.x_rem / self.eps;
        let sin_half_pi_x = if p.x < 0.5 {
            (FRAC_PI_2 * p.x).sin()
        } else {
            (FRAC_PI_2 * p.x_rem).cos()
        };
        let x2 = -FRAC_PI_2 * FRAC_PI_2 * sin_half_pi_x - (-t - 2.0 * self.ln_eps).exp() / self.dx;
        let a = (-p.y / self.sqrt_eps).exp();
        let b = (-p.y_rem / self.sqrt_eps).exp();
        let y2 = -(a + b) / (self.eps * self.dy);
        let xf = self.x_factor(p.x, p.x_rem);
        let yf = self.y_factor(p.y, p.y_rem);
        [x2 * yf.value, xf.value * y2]
    }
}

/// The benchmark problem together with its exact solution.
#[derive(Debug, Clone)]
pub struct BenchmarkProblem {
    pub problem: Problem,
    pub exact: ExactSolution,
}

impl BenchmarkProblem {
    /// `b = 2 - x`, `c = 1.5`, `beta = 1`. `mu0` only enters the norms and the
    /// bound on the stabilization parameters; `c - b_x/2 = 2` on the whole square.
    pub fn new(eps: f64, mu0: f64) -> Self {
        let exact = ExactSolution::new(eps);
        let problem = Problem::new(
            eps,
            1.0,
            mu0,
            Arc::new(|p: &Point| 1.0 + p.x_rem),
            Arc::new(|_| -1.0),
            Arc::new(|_| 1.5),
            Arc::new(move |p: &Point| exact.rhs(p)),
        );
        Self { problem, exact }
    }
}

pub fn exact_u(x: f64, y: f64, eps: f64) -> f64 {
    ExactSolution::new(eps).value(&Point::new(x, y))
}

pub fn exact_grad(x: f64, y: f64, eps: f64) -> [f64; 2] {
    ExactSolution::new(eps).grad(&Point::new(x, y))
}

pub fn rhs_f(x: f64, y: f64, eps: f64) -> f64 {
    ExactSolution::new(eps).rhs(&Point::new(x, y))
}

pub fn layer_factors(x: f64, y: f64, eps: f64) -> LayerFactors {
    ExactSolution::new(eps).layer_factors(&Point::new(x, y))
}
