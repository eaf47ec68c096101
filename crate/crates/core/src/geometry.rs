//! Planar engagement geometry. Headings are degrees, measured
//! counter-clockwise from +x.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AircraftState {
    pub x: f64,
    pub y: f64,
    pub heading_deg: f64,
}

impl AircraftState {
    pub fn new(x: f64, y: f64, heading_deg: f64) -> Self {
        AircraftState { x, y, heading_deg }
    }

    fn nose(&self) -> (f64, f64) {
        let h = self.heading_deg.to_radians();
        (h.cos(), h.sin())
    }
}

/// Relative geometry of an attacker against a target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Engagement {
    /// Angle at the target between its tail and the line of sight to the attacker.
    pub aspect_deg: f64,
    /// Angle at the attacker between its nose and the line of sight to the target.
    pub antenna_train_deg: f64,
    pub range: f64,
}

/// Unsigned angle between two vectors in degrees, in `[0, 180]`.
pub fn angle_between(u: (f64, f64), v: (f64, f64)) -> f64 {
    let cross = u.0 * v.1 - u.1 * v.0;
    let dot = u.0 * v.0 + u.1 * v.1;
    cross.abs().atan2(dot).to_degrees()
}

pub fn engagement(attacker: &AircraftState, target: &AircraftState) -> Engagement {
    let los = (target.x - attacker.x, target.y - attacker.y);
    let range = los.0.hypot(los.1);
    if range == 0.0 {
        return Engagement {
            aspect_deg: 0.0,
            antenna_train_deg: 0.0,
            range: 0.0,
        };
    }
    let nose = attacker.nose();
    let tnose = target.nose();
    Engagement {
        aspect_deg: angle_between((-tnose.0, -tnose.1), (-los.0, -los.1)),
        antenna_train_deg: angle_between(nose, los),
        range,
    }
}

/// Absolute direction of the line of sight from `from` to `to`, degrees in `(-180, 180]`.
pub fn bearing_deg(from: &AircraftState, to: &AircraftState) -> f64 {
    (to.y - from.y).atan2(to.x - from.x).to_degrees()
}

/// Wraps an angle difference into `(-180, 180]`.
pub fn wrap_deg(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_chase_and_head_on() {
        let red = AircraftState::new(0.0, 0.0, 0.0);
        let e = engagement(&AircraftState::new(-500.0, 0.0, 0.0), &red);
        assert_eq!((e.aspect_deg, e.antenna_train_deg, e.range), (0.0, 0.0, 500.0));
        let e = engagement(&AircraftState::new(500.0, 0.0, 180.0), &red);
        assert!((e.aspect_deg - 180.0).abs() < 1e-12);
        assert!(e.antenna_train_deg.abs() < 1e-12);
        let e = engagement(&red, &red);
        assert_eq!(e.range, 0.0);
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap_deg(190.0), -170.0);
        assert_eq!(wrap_deg(-190.0), 170.0);
        assert_eq!(wrap_deg(180.0), 180.0);
        assert_eq!(wrap_deg(720.5), 0.5);
    }
}
