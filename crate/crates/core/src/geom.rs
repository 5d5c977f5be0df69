//! Planar geometry shared by every module.

use std::f64::consts::{FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

/// A point in world coordinates, meters.
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

    /// Absolute direction from `self` towards `other`.
    pub fn angle_to(&self, other: &Point) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }
}

/// Robot pose. `heading` is kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    /// Bearing of `target` relative to this pose's heading, in (-pi, pi].
    pub fn bearing_to(&self, target: &Point) -> f64 {
        normalize_angle(self.position().angle_to(target) - self.heading)
    }

    /// Point `dist` meters away along `heading + offset`.
    pub fn project(&self, offset: f64, dist: f64) -> Point {
        let a = self.heading + offset;
        Point::new(self.x + dist * a.cos(), self.y + dist * a.sin())
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    if !a.is_finite() {
        return a;
    }
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Robot-relative sector of a bearing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Left,
    Front,
    Right,
    Behind,
}

impl Side {
    /// Front |b| <= pi/4, Left (pi/4, 3pi/4], Right [-3pi/4, -pi/4), else Behind.
    /// The four sectors tile (-pi, pi].
    pub fn from_bearing(bearing: f64) -> Side {
        let b = normalize_angle(bearing);
        if b.abs() <= FRAC_PI_4 {
            Side::Front
        } else if b > FRAC_PI_4 && b <= 3.0 * FRAC_PI_4 {
            Side::Left
        } else if (-3.0 * FRAC_PI_4..-FRAC_PI_4).contains(&b) {
            Side::Right
        } else {
            Side::Behind
        }
    }

    /// Bearing at the centre of the sector.
    pub fn center_bearing(self) -> f64 {
        match self {
            Side::Front => 0.0,
            Side::Left => PI / 2.0,
            Side::Right => -PI / 2.0,
            Side::Behind => PI,
        }
    }

    pub fn word(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Front => "ahead",
            Side::Right => "right",
            Side::Behind => "behind",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_wraps_into_half_open_interval() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-0.5) + 0.5).abs() < 1e-15);
        assert!((normalize_angle(2.0 * PI + 0.25) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn side_boundaries() {
        assert_eq!(Side::from_bearing(FRAC_PI_4), Side::Front);
        assert_eq!(Side::from_bearing(-FRAC_PI_4), Side::Front);
        assert_eq!(Side::from_bearing(3.0 * FRAC_PI_4), Side::Left);
        assert_eq!(Side::from_bearing(-3.0 * FRAC_PI_4), Side::Right);
        assert_eq!(Side::from_bearing(PI), Side::Behind);
        assert_eq!(Side::from_bearing(-3.0 * FRAC_PI_4 - 1e-9), Side::Behind);
    }

    #[test]
    fn bearing_is_relative_to_heading() {
        let p = Pose::new(0.0, 0.0, PI / 2.0);
        assert!((p.bearing_to(&Point::new(0.0, 5.0))).abs() < 1e-12);
        assert!((p.bearing_to(&Point::new(-5.0, 0.0)) - PI / 2.0).abs() < 1e-12);
    }
}
