//! Planar two-link arm (shoulder at the origin by default).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmGeometry {
    /// Upper-arm length (m).
    pub l_sld: f64,
    /// Forearm length (m).
    pub l_elb: f64,
}

impl Default for ArmGeometry {
    fn default() -> Self {
        Self { l_sld: 0.3, l_elb: 0.3 }
    }
}

impl ArmGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.l_sld > 0.0 && self.l_elb > 0.0 {
            Ok(())
        } else {
            Err(Error::Config("arm segment lengths must be positive".into()))
        }
    }

    pub fn reach(&self) -> f64 {
        self.l_sld + self.l_elb
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointState {
    pub theta_sld: f64,
    pub theta_elb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WristTarget {
    pub x: f64,
    pub y: f64,
}

impl WristTarget {
    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

pub fn forward_kinematics(j: JointState, arm: &ArmGeometry) -> WristTarget {
    let s12 = j.theta_sld + j.theta_elb;
    WristTarget {
        x: arm.l_sld * j.theta_sld.cos() + arm.l_elb * s12.cos(),
        y: arm.l_sld * j.theta_sld.sin() + arm.l_elb * s12.sin(),
    }
}

/// Closed-form inverse with the elbow angle in `[0, pi]`.
pub fn inverse_kinematics(target: WristTarget, arm: &ArmGeometry) -> Result<JointState> {
    inverse_kinematics_from(target, WristTarget::default(), arm)
}

pub fn inverse_kinematics_from(target: WristTarget, shoulder: WristTarget, arm: &ArmGeometry) -> Result<JointState> {
    arm.validate()?;
    let a = target.y - shoulder.y;
    let b = target.x - shoulder.x;
    let r2 = a * a + b * b;
    let r = r2.sqrt();
    let tol = 1e-12 * arm.reach();
    if !r.is_finite() || r > arm.reach() + tol || r < (arm.l_sld - arm.l_elb).abs() - tol {
        return Err(Error::Unreachable { x: target.x, y: target.y });
    }
    let (ls, le) = (arm.l_sld, arm.l_elb);
    let c = (r2 + ls * ls - le * le) / (2.0 * ls);
    let d = (r2 - ls * ls + le * le) / (2.0 * le);
    // Radicands vanish at full extension; clamp rounding below zero.
    let rc = (r2 - c * c).max(0.0).sqrt();
    let rd = (r2 - d * d).max(0.0).sqrt();
    let inner = rc.atan2(c);
    Ok(JointState {
        theta_sld: a.atan2(b) - inner,
        theta_elb: inner + rd.atan2(d),
    })
}

/// Maps wrist velocity/acceleration to joint velocity/acceleration at `j`.
pub fn joint_rates(
    j: JointState,
    arm: &ArmGeometry,
    wrist_vel: [f64; 2],
    wrist_acc: [f64; 2],
) -> Result<([f64; 2], [f64; 2])> {
    let (s1, c1) = j.theta_sld.sin_cos();
    let (s12, c12) = (j.theta_sld + j.theta_elb).sin_cos();
    let (l1, l2) = (arm.l_sld, arm.l_elb);
    let jac = [[-l1 * s1 - l2 * s12, -l2 * s12], [l1 * c1 + l2 * c12, l2 * c12]];
    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    if det.abs() < 1e-12 {
        return Err(Error::Singular("arm Jacobian is singular".into()));
    }
    let solve = |v: [f64; 2]| {
        [
            (jac[1][1] * v[0] - jac[0][1] * v[1]) / det,
            (-jac[1][0] * v[0] + jac[0][0] * v[1]) / det,
        ]
    };
    let qd = solve(wrist_vel);
    let w1 = qd[0];
    let w12 = qd[0] + qd[1];
    let bias = [
        -l1 * c1 * w1 * w1 - l2 * c12 * w12 * w12,
        -l1 * s1 * w1 * w1 - l2 * s12 * w12 * w12,
    ];
    let qdd = solve([wrist_acc[0] - bias[0], wrist_acc[1] - bias[1]]);
    Ok((qd, qdd))
}
