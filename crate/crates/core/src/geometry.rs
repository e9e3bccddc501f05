//! Alignment of a triangulated marker space with a ground-aligned human
//! frame, given three arrow vectors and an origin.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Arrow length used when synthesizing checkerboard frames (m).
pub const ARROW_LENGTH_M: f64 = 0.2;

/// Relative residual below which an arrow is considered dependent on the others.
const DEGENERACY_TOL: f64 = 1e-6;

pub fn roll(theta_x: f64) -> Mat3 {
    let (s, c) = theta_x.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn pitch(theta_y: f64) -> Mat3 {
    let (s, c) = theta_y.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn yaw(theta_z: f64) -> Mat3 {
    let (s, c) = theta_z.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Yaw(z) * Pitch(y) * Roll(x).
pub fn rot(theta_x: f64, theta_y: f64, theta_z: f64) -> Mat3 {
    yaw(theta_z) * pitch(theta_y) * roll(theta_x)
}

/// Arrow vectors (relative to the origin) and the origin point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame3 {
    pub x_arrow: Vec3,
    pub y_arrow: Vec3,
    pub z_arrow: Vec3,
    pub origin: Vec3,
}

impl Frame3 {
    pub fn new(x_arrow: Vec3, y_arrow: Vec3, z_arrow: Vec3, origin: Vec3) -> Self {
        Self { x_arrow, y_arrow, z_arrow, origin }
    }

    /// Builds a frame from arrow tip points and the origin point.
    pub fn from_points(x_tip: Vec3, y_tip: Vec3, z_tip: Vec3, origin: Vec3) -> Self {
        Self::new(x_tip - origin, y_tip - origin, z_tip - origin, origin)
    }

    /// Columns are the x, y, z arrows.
    pub fn matrix(&self) -> Mat3 {
        Mat3::from_columns(&[self.x_arrow, self.y_arrow, self.z_arrow])
    }

    pub fn tips(&self) -> [Vec3; 3] {
        [self.origin + self.x_arrow, self.origin + self.y_arrow, self.origin + self.z_arrow]
    }
}

fn unit(v: Vec3, scale: f64, what: &str) -> Result<Vec3> {
    let n = v.norm();
    if !n.is_finite() || n <= DEGENERACY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateFrame(format!("{what} arrow is (nearly) dependent")));
    }
    Ok(v / n)
}

/// Orthonormalizes in the order x-y, x-z, y-z, keeping the x direction.
pub fn gram_schmidt(frame: &Frame3) -> Result<Frame3> {
    let scale = [frame.x_arrow, frame.y_arrow, frame.z_arrow].iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !scale.is_finite() || scale == 0.0 {
        return Err(Error::DegenerateFrame("zero or non-finite arrows".into()));
    }
    let x = unit(frame.x_arrow, scale, "x")?;
    let y = frame.y_arrow - x * x.dot(&frame.y_arrow);
    let y = unit(y, frame.y_arrow.norm(), "y")?;
    let z = frame.z_arrow - x * x.dot(&frame.z_arrow);
    let z = z - y * y.dot(&z);
    let z = unit(z, frame.z_arrow.norm(), "z")?;
    Ok(Frame3::new(x, y, z, frame.origin))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn compose(&self, inner: &Self) -> Self {
        Self { rotation: self.rotation * inner.rotation, translation: self.rotation * inner.translation + self.translation }
    }

    /// Largest deviation of RᵀR from I and of det R from 1.
    pub fn orthonormality_error(&self) -> f64 {
        let e = (self.rotation.transpose() * self.rotation - Mat3::identity()).abs().max();
        e.max((self.rotation.determinant() - 1.0).abs())
    }
}

pub fn apply(tf: &RigidTransform, p: &Vec3) -> Vec3 {
    tf.apply(p)
}

fn orthonormal_basis(frame: &Frame3) -> Result<Mat3> {
    let q = gram_schmidt(frame)?.matrix();
    if q.determinant() < 0.0 {
        return Err(Error::DegenerateFrame("arrows form a left-handed frame".into()));
    }
    Ok(q)
}

/// Rotation R with R·[x y z] = I, via the transpose of the orthonormalized frame.
pub fn alignment_rotation(frame: &Frame3) -> Result<Mat3> {
    Ok(orthonormal_basis(frame)?.transpose())
}

/// Angles used by the axis-by-axis construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequentialAngles {
    pub x_step: (f64, f64),
    pub y_step: (f64, f64),
    pub z_step: (f64, f64),
    pub r_zz: f64,
}

fn in_cos_branch(theta: f64) -> bool {
    let d = theta.to_degrees().rem_euclid(360.0);
    !(45.0..=315.0).contains(&d) || (d > 135.0 && d < 225.0)
}

/// Axis-by-axis construction R = Rz' Ry Rx: Rx brings x onto e_x, Ry brings
/// y onto e_y, Rz' fixes the z sign.
pub fn sequential_rotation(frame: &Frame3) -> Result<(Mat3, SequentialAngles)> {
    let p1 = orthonormal_basis(frame)?;

    let x = p1.column(0);
    let ty1 = x[2].atan2(x[0]);
    let xr = if in_cos_branch(ty1) { x[0] / ty1.cos() } else { x[2] / ty1.sin() };
    let tz1 = -x[1].atan2(xr);
    let rx = rot(0.0, ty1, tz1);

    let p2 = rx * p1;
    let y = p2.column(1);
    let tx2 = -y[2].atan2(y[1]);
    let yr = if in_cos_branch(tx2) { y[1] / tx2.cos() } else { -y[2] / tx2.sin() };
    let tz2 = y[0].atan2(yr);
    let ry = rot(tx2, 0.0, tz2);

    let p3 = ry * p2;
    let z = p3.column(2);
    let tx3 = z[0].atan2(z[2]);
    let zr = if in_cos_branch(tx3) { z[2] / tx3.cos() } else { -z[1] / tx3.sin() };
    let ty3 = z[0].atan2(zr);
    let r_zz = rot(tx3, ty3, 0.0)[(2, 2)];
    let rz = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, r_zz));

    let angles = SequentialAngles { x_step: (ty1, tz1), y_step: (tx2, tz2), z_step: (tx3, ty3), r_zz };
    Ok((rz * ry * rx, angles))
}

/// Transform mapping the frame origin to zero and its arrows onto the canonical axes.
pub fn alignment_transform(frame: &Frame3) -> Result<RigidTransform> {
    let rotation = alignment_rotation(frame)?;
    Ok(RigidTransform { rotation, translation: -(rotation * frame.origin) })
}

/// Largest element-wise difference between the transpose and sequential constructions.
pub fn construction_discrepancy(frame: &Frame3) -> Result<f64> {
    let a = alignment_rotation(frame)?;
    let (b, _) = sequential_rotation(frame)?;
    Ok((a - b).abs().max())
}

/// JSON fixture `{arrows, origin, expected_R, expected_t}`; arrows are rows x, y, z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentFixture {
    pub arrows: [[f64; 3]; 3],
    pub origin: [f64; 3],
    #[serde(rename = "expected_R")]
    pub expected_r: [[f64; 3]; 3],
    pub expected_t: [f64; 3],
}

impl AlignmentFixture {
    pub fn frame(&self) -> Frame3 {
        let v = |a: [f64; 3]| Vec3::new(a[0], a[1], a[2]);
        Frame3::new(v(self.arrows[0]), v(self.arrows[1]), v(self.arrows[2]), v(self.origin))
    }

    pub fn from_frame(frame: &Frame3) -> Result<Self> {
        let tf = alignment_transform(frame)?;
        let row = |v: Vec3| [v[0], v[1], v[2]];
        let mut r = [[0.0; 3]; 3];
        for (i, row_out) in r.iter_mut().enumerate() {
            for (j, x) in row_out.iter_mut().enumerate() {
                *x = tf.rotation[(i, j)];
            }
        }
        Ok(Self {
            arrows: [row(frame.x_arrow), row(frame.y_arrow), row(frame.z_arrow)],
            origin: row(frame.origin),
            expected_r: r,
            expected_t: row(tf.translation),
        })
    }

    /// Largest deviation of the computed transform from the expected one.
    pub fn check(&self) -> Result<f64> {
        let tf = alignment_transform(&self.frame())?;
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                err = err.max((tf.rotation[(i, j)] - self.expected_r[i][j]).abs());
            }
            err = err.max((tf.translation[i] - self.expected_t[i]).abs());
        }
        Ok(err)
    }
}
