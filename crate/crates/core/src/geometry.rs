//! Parameter-space geometry: points, the closed ball and the flat torus.

use std::f64::consts::PI;
use std::ops::Deref;

/// A point of the parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        Point(coords.into())
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean projection onto the closed centered ball of radius `radius`.
pub fn project_ball(u: &[f64], radius: f64) -> Point {
    let mut out = u.to_vec();
    project_ball_in_place(&mut out, radius);
    Point(out)
}

pub fn project_ball_in_place(u: &mut [f64], radius: f64) {
    let n = norm(u);
    if n > radius {
        let scale = radius / n;
        u.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Reduces an angle to `[-pi, pi)`.
pub fn wrap_angle(x: f64) -> f64 {
    if (-PI..PI).contains(&x) {
        return x;
    }
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2*pi
    if y >= PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Where particle positions live.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// Closed centered ball of the given radius.
    Ball { radius: f64 },
    /// `[-pi, pi)^d` with periodic boundary.
    Torus,
}

impl Domain {
    pub fn project(&self, u: &mut [f64]) {
        match *self {
            Domain::Ball { radius } => project_ball_in_place(u, radius),
            Domain::Torus => u.iter_mut().for_each(|v| *v = wrap_angle(*v)),
        }
    }

    /// Length of the shortest displacement from `a` to `b`.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Domain::Ball { .. } => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt(),
            Domain::Torus => a
                .iter()
                .zip(b)
                .map(|(x, y)| wrap_angle(x - y).powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }

    pub fn contains(&self, u: &[f64], slack: f64) -> bool {
        match *self {
            Domain::Ball { radius } => norm(u) <= radius + slack,
            Domain::Torus => u.iter().all(|v| *v >= -PI - slack && *v < PI + slack),
        }
    }

    /// Radius of the smallest centered ball containing the domain.
    pub fn outer_radius(&self, dim: usize) -> f64 {
        match *self {
            Domain::Ball { radius } => radius,
            Domain::Torus => PI * (dim as f64).sqrt(),
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Domain::Torus)
    }
}
