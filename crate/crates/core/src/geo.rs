//! Planar geometry shared by the protocols and the simulator.

use serde::{Deserialize, Serialize};

/// A position in meters (or in normalized units where noted).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Rectangular deployment area anchored at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub const fn new(width: f64, height: f64) -> Self {
        Self { width, height }
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width && p.y <= self.height
    }

    pub fn surface(&self) -> f64 {
        self.width * self.height
    }

    pub fn center(&self) -> Point {
        Point::new(self.width / 2.0, self.height / 2.0)
    }

    /// Maps a point to unit-square coordinates.
    pub fn normalize(&self, p: &Point) -> Point {
        Point::new(p.x / self.width, p.y / self.height)
    }
}

impl Default for Area {
    fn default() -> Self {
        Self::new(500.0, 500.0)
    }
}

/// Mean euclidean distance over all unordered pairs; `None` for fewer than
/// two points.
pub fn mean_pairwise_distance(points: &[Point]) -> Option<f64> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += points[i].distance(&points[j]);
        }
    }
    Some(sum / (n * (n - 1) / 2) as f64)
}
