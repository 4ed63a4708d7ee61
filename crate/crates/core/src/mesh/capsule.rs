use serde::{Deserialize, Serialize};

use crate::Vec3;

/// Swept sphere of `radius` around the segment `a`–`b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

impl Capsule {
    pub fn new(a: Vec3, b: Vec3, radius: f64) -> Self {
        Self { a, b, radius }
    }

    /// Parameter in [0, 1] of the segment point closest to `p`.
    pub fn closest_param(&self, p: &Vec3) -> f64 {
        let ab = self.b - self.a;
        let len2 = ab.norm_squared();
        if len2 == 0.0 {
            0.0
        } else {
            ((p - self.a).dot(&ab) / len2).clamp(0.0, 1.0)
        }
    }

    pub fn closest_point(&self, p: &Vec3) -> Vec3 {
        self.a + (self.b - self.a) * self.closest_param(p)
    }

    /// Negative inside, zero on the surface.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        (p - self.closest_point(p)).norm() - self.radius
    }

    /// Bounds `(min, max)` inflated by `margin`.
    pub fn aabb(&self, margin: f64) -> (Vec3, Vec3) {
        let r = Vec3::repeat(self.radius + margin);
        (self.a.inf(&self.b) - r, self.a.sup(&self.b) + r)
    }

    /// Distance from `origin` along unit `dir` at which the ray leaves the capsule,
    /// or `None` if the ray never reaches the capsule at `t > 0`.
    pub fn ray_exit(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        // A capsule is convex, so the ray meets it in one interval and its
        // exit is the largest exit among the two end spheres and the cylinder.
        let r2 = self.radius * self.radius;
        let sphere_exit = |c: &Vec3| {
            let oc = origin - c;
            let b = oc.dot(dir);
            let disc = b * b - (oc.norm_squared() - r2);
            (disc >= 0.0).then(|| -b + disc.sqrt())
        };
        let mut best = sphere_exit(&self.a).into_iter().chain(sphere_exit(&self.b)).fold(None, |m: Option<f64>, t| {
            Some(m.map_or(t, |m| m.max(t)))
        });
        let ab = self.b - self.a;
        let len = ab.norm();
        if len > 0.0 {
            let axis = ab / len;
            let oa = origin - self.a;
            let d_perp = dir - axis * dir.dot(&axis);
            let o_perp = oa - axis * oa.dot(&axis);
            let qa = d_perp.norm_squared();
            if qa > 1e-300 {
                let qb = d_perp.dot(&o_perp);
                let disc = qb * qb - qa * (o_perp.norm_squared() - r2);
                if disc >= 0.0 {
                    let t = (-qb + disc.sqrt()) / qa;
                    let s = (oa + dir * t).dot(&axis);
                    if (0.0..=len).contains(&s) {
                        best = Some(best.map_or(t, |m: f64| m.max(t)));
                    }
                }
            }
        }
        best.filter(|&t| t > 0.0)
    }
}
