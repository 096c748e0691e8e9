use serde::{Deserialize, Serialize};

use super::{GeometryError, Vec3};

const UNIT_TOLERANCE: f64 = 1e-9;

/// Unit quaternion stored as (x, y, z, w).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { x: 0.0, y: 0.0, z: 0.0, w: 1.0 };

    /// Builds a quaternion, rejecting inputs whose norm is not 1 ± 1e-9.
    pub fn new(x: f64, y: f64, z: f64, w: f64) -> Result<Self, GeometryError> {
        let q = Quat { x, y, z, w };
        let n = q.norm();
        if (n - 1.0).abs() > UNIT_TOLERANCE || !n.is_finite() {
            return Err(GeometryError::NonUnitQuaternion(n));
        }
        Ok(q)
    }

    /// Normalizes an arbitrary non-zero quaternion.
    pub fn normalized(x: f64, y: f64, z: f64, w: f64) -> Result<Self, GeometryError> {
        let n = (x * x + y * y + z * z + w * w).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(GeometryError::NonUnitQuaternion(n));
        }
        Ok(Quat { x: x / n, y: y / n, z: z / n, w: w / n })
    }

    /// Rotation of `angle` radians about the (normalized) `axis`.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let a = axis.normalize();
        let (s, c) = (0.5 * angle).sin_cos();
        Quat { x: a.x * s, y: a.y * s, z: a.z * s, w: c }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    pub fn conjugate(&self) -> Quat {
        Quat { x: -self.x, y: -self.y, z: -self.z, w: self.w }
    }

    /// Hamilton product `self * o` (apply `o` first, then `self`).
    pub fn mul(&self, o: &Quat) -> Quat {
        Quat {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        // v' = v + 2w(u×v) + 2u×(u×v)
        let u = Vec3::new(self.x, self.y, self.z);
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(t)
    }
}

/// Rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { position: Vec3::ZERO, orientation: Quat::IDENTITY };

    pub fn new(position: Vec3, orientation: Quat) -> Self {
        Self { position, orientation }
    }

    pub fn from_translation(position: Vec3) -> Self {
        Self { position, orientation: Quat::IDENTITY }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.orientation.rotate(p) + self.position
    }

    pub fn transform_dir(&self, d: Vec3) -> Vec3 {
        self.orientation.rotate(d)
    }

    /// `self ∘ other`: the pose of `other` (expressed in `self`'s frame) in world coordinates.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose { position: self.transform_point(other.position), orientation: self.orientation.mul(&other.orientation) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn quarter_turn_about_z_maps_x_to_y() {
        let q = Quat::from_axis_angle(Vec3::Z, FRAC_PI_2);
        let v = q.rotate(Vec3::X);
        assert!((v - Vec3::Y).length() < 1e-15);
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        assert!(Quat::new(0.0, 0.0, 0.0, 0.9).is_err());
        assert!(Quat::new(0.0, 0.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn compose_applies_inner_first() {
        let robot = Pose::new(Vec3::new(1.0, 0.0, 0.0), Quat::from_axis_angle(Vec3::Z, FRAC_PI_2));
        let mount = Pose::from_translation(Vec3::new(1.0, 0.0, 0.0));
        let sensor = robot.compose(&mount);
        assert!((sensor.position - Vec3::new(1.0, 1.0, 0.0)).length() < 1e-15);
    }
}
