//! Full perspective camera with seven continuous parameters.
//!
//! A world point `X` maps to camera space as `X_c = R·X + (0, 0, d)` and to
//! pixels as `(f·x_c/z_c + u, f·y_c/z_c + v)`. The camera always looks at the
//! model origin, so the origin projects to the principal point `(u, v)`.
//!
//! `R` is composed as roll about the camera z-axis, then pitch about x, then
//! yaw about the world y-axis:
//!
//! ```text
//! R = Rz(inplane) · Rx(elevation) · Ry(azimuth)
//! ```
//!
//! With all three angles zero `R = I` and the camera sits on the world −Z side
//! at distance `d`, looking toward +Z. World +Y points down in the image.

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The seven pose/camera parameters, in sweep order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseParam {
    Azimuth,
    Elevation,
    Inplane,
    Depth,
    Focal,
    PrincipalU,
    PrincipalV,
}

impl PoseParam {
    pub const ALL: [PoseParam; 7] = [
        PoseParam::Azimuth,
        PoseParam::Elevation,
        PoseParam::Inplane,
        PoseParam::Depth,
        PoseParam::Focal,
        PoseParam::PrincipalU,
        PoseParam::PrincipalV,
    ];

    /// JSON field name of the parameter inside a pose object.
    pub fn field_name(self) -> &'static str {
        match self {
            PoseParam::Azimuth => "azimuth_deg",
            PoseParam::Elevation => "elevation_deg",
            PoseParam::Inplane => "inplane_deg",
            PoseParam::Depth => "depth",
            PoseParam::Focal => "focal",
            PoseParam::PrincipalU => "principal_u",
            PoseParam::PrincipalV => "principal_v",
        }
    }

    pub fn is_angle(self) -> bool {
        matches!(
            self,
            PoseParam::Azimuth | PoseParam::Elevation | PoseParam::Inplane
        )
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::str::FromStr for PoseParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let p = match s {
            "a" | "azimuth" | "azimuth_deg" => PoseParam::Azimuth,
            "e" | "elevation" | "elevation_deg" => PoseParam::Elevation,
            "theta" | "inplane" | "inplane_deg" => PoseParam::Inplane,
            "d" | "depth" => PoseParam::Depth,
            "f" | "focal" => PoseParam::Focal,
            "u" | "principal_u" => PoseParam::PrincipalU,
            "v" | "principal_v" => PoseParam::PrincipalV,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown pose parameter `{other}`"
                )))
            }
        };
        Ok(p)
    }
}

/// Object pose and camera intrinsics. Angles are in degrees, depth in world
/// units, focal length and principal point in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseParams {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub inplane_deg: f64,
    pub depth: f64,
    pub focal: f64,
    pub principal_u: f64,
    pub principal_v: f64,
}

impl PoseParams {
    /// Builds a validated, normalized pose.
    pub fn new(
        azimuth_deg: f64,
        elevation_deg: f64,
        inplane_deg: f64,
        depth: f64,
        focal: f64,
        principal_u: f64,
        principal_v: f64,
    ) -> Result<Self> {
        PoseParams {
            azimuth_deg,
            elevation_deg,
            inplane_deg,
            depth,
            focal,
            principal_u,
            principal_v,
        }
        .normalized()
    }

    /// Checks the strict invariants without modifying anything.
    pub fn validate(&self) -> Result<()> {
        let values = self.to_array();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{} is not finite",
                PoseParam::ALL[i].field_name()
            )));
        }
        if self.depth <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "depth must be positive, got {}",
                self.depth
            )));
        }
        if self.focal <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "focal must be positive, got {}",
                self.focal
            )));
        }
        if !(-90.0..=90.0).contains(&self.elevation_deg) {
            return Err(Error::InvalidParameter(format!(
                "elevation must lie in [-90, 90], got {}",
                self.elevation_deg
            )));
        }
        if !(0.0..360.0).contains(&self.azimuth_deg) {
            return Err(Error::InvalidParameter(format!(
                "azimuth must lie in [0, 360), got {}",
                self.azimuth_deg
            )));
        }
        if !(-180.0..180.0).contains(&self.inplane_deg) {
            return Err(Error::InvalidParameter(format!(
                "in-plane rotation must lie in [-180, 180), got {}",
                self.inplane_deg
            )));
        }
        Ok(())
    }

    /// Wraps azimuth into `[0, 360)` and in-plane rotation into `[-180, 180)`,
    /// clamps elevation to `[-90, 90]`, then validates.
    pub fn normalized(mut self) -> Result<Self> {
        self.azimuth_deg = wrap_degrees(self.azimuth_deg, 0.0);
        self.inplane_deg = wrap_degrees(self.inplane_deg, -180.0);
        if self.elevation_deg.is_finite() {
            self.elevation_deg = self.elevation_deg.clamp(-90.0, 90.0);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.azimuth_deg,
            self.elevation_deg,
            self.inplane_deg,
            self.depth,
            self.focal,
            self.principal_u,
            self.principal_v,
        ]
    }

    /// Inverse of [`to_array`](Self::to_array); no validation.
    pub fn from_array(v: [f64; 7]) -> Self {
        PoseParams {
            azimuth_deg: v[0],
            elevation_deg: v[1],
            inplane_deg: v[2],
            depth: v[3],
            focal: v[4],
            principal_u: v[5],
            principal_v: v[6],
        }
    }

    pub fn get(&self, param: PoseParam) -> f64 {
        self.to_array()[param.index()]
    }

    pub fn with(&self, param: PoseParam, value: f64) -> Self {
        let mut v = self.to_array();
        v[param.index()] = value;
        Self::from_array(v)
    }

    pub fn rotation(&self) -> Result<RotationMatrix> {
        rotation_from_angles(self.azimuth_deg, self.elevation_deg, self.inplane_deg)
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            focal: self.focal,
            principal_u: self.principal_u,
            principal_v: self.principal_v,
        }
    }

    pub fn projection_matrix(&self) -> Result<ProjectionMatrix> {
        Ok(ProjectionMatrix::compose(
            &self.intrinsics(),
            &self.rotation()?,
            self.depth,
        ))
    }
}

/// Maps `deg` into `[lo, lo + 360)`.
fn wrap_degrees(deg: f64, lo: f64) -> f64 {
    if !deg.is_finite() {
        return deg;
    }
    let w = (deg - lo).rem_euclid(360.0);
    // rem_euclid can round up to the modulus for tiny negative inputs
    if w >= 360.0 {
        lo
    } else {
        w + lo
    }
}

/// Orthonormal world-to-camera rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.0 * p
    }
}

impl std::ops::Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: Self) -> Self {
        RotationMatrix(self.0 * rhs.0)
    }
}

/// Builds `R = Rz(inplane) · Rx(elevation) · Ry(azimuth)` from angles in degrees.
pub fn rotation_from_angles(
    azimuth_deg: f64,
    elevation_deg: f64,
    inplane_deg: f64,
) -> Result<RotationMatrix> {
    if !(azimuth_deg.is_finite() && elevation_deg.is_finite() && inplane_deg.is_finite()) {
        return Err(Error::InvalidParameter(
            "rotation angles must be finite".into(),
        ));
    }
    // Reduce first so that whole turns give an exact identity.
    let (sa, ca) = azimuth_deg.rem_euclid(360.0).to_radians().sin_cos();
    let (se, ce) = elevation_deg.rem_euclid(360.0).to_radians().sin_cos();
    let (st, ct) = inplane_deg.rem_euclid(360.0).to_radians().sin_cos();

    #[rustfmt::skip]
    let yaw = Matrix3::new(
        ca,  0.0, sa,
        0.0, 1.0, 0.0,
        -sa, 0.0, ca,
    );
    #[rustfmt::skip]
    let pitch = Matrix3::new(
        1.0, 0.0, 0.0,
        0.0, ce,  -se,
        0.0, se,  ce,
    );
    #[rustfmt::skip]
    let roll = Matrix3::new(
        ct,  -st, 0.0,
        st,  ct,  0.0,
        0.0, 0.0, 1.0,
    );
    Ok(RotationMatrix(roll * pitch * yaw))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub focal: f64,
    pub principal_u: f64,
    pub principal_v: f64,
}

impl Intrinsics {
    /// The 3×3 upper-triangular calibration matrix (square pixels, no skew).
    pub fn matrix(&self) -> Matrix3<f64> {
        #[rustfmt::skip]
        let k = Matrix3::new(
            self.focal, 0.0,        self.principal_u,
            0.0,        self.focal, self.principal_v,
            0.0,        0.0,        1.0,
        );
        k
    }
}

/// `K·[R|T]` with `T = (0, 0, depth)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionMatrix(Matrix3x4<f64>);

impl ProjectionMatrix {
    pub fn compose(k: &Intrinsics, r: &RotationMatrix, depth: f64) -> Self {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(r.matrix());
        rt[(2, 3)] = depth;
        ProjectionMatrix(k.matrix() * rt)
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.0
    }

    /// Homogeneous projection; returns `None` when the homogeneous scale is
    /// not positive.
    pub fn project(&self, p: &Vector3<f64>) -> Option<[f64; 2]> {
        let h = self.0 * p.push(1.0);
        (h.z > 0.0).then(|| [h.x / h.z, h.y / h.z])
    }
}

/// Precomputed world-to-pixel mapping for one pose. This is the hot path used
/// by the rasterizer; [`project_point`] goes through the same arithmetic.
#[derive(Debug, Clone, Copy)]
pub struct Camera {
    rotation: RotationMatrix,
    depth: f64,
    intrinsics: Intrinsics,
}

impl Camera {
    pub fn new(pose: &PoseParams) -> Result<Self> {
        pose.validate()?;
        Ok(Camera {
            rotation: pose.rotation()?,
            depth: pose.depth,
            intrinsics: pose.intrinsics(),
        })
    }

    pub fn to_camera(&self, world: &Vector3<f64>) -> Vector3<f64> {
        let mut c = self.rotation.apply(world);
        c.z += self.depth;
        c
    }

    /// Pinhole division. The caller guarantees `cam.z > 0`.
    pub fn to_pixel(&self, cam: &Vector3<f64>) -> [f64; 2] {
        let k = &self.intrinsics;
        [
            k.focal * cam.x / cam.z + k.principal_u,
            k.focal * cam.y / cam.z + k.principal_v,
        ]
    }
}

/// Projects one world point to pixel coordinates.
pub fn project_point(pose: &PoseParams, world: &Vector3<f64>) -> Result<[f64; 2]> {
    let cam = Camera::new(pose)?;
    let c = cam.to_camera(world);
    if c.z <= 0.0 {
        return Err(Error::BehindCamera { depth: c.z });
    }
    Ok(cam.to_pixel(&c))
}

/// A projected point together with its camera-space depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    pub pixel: [f64; 2],
    pub depth: f64,
}

impl ProjectedPoint {
    pub fn in_front(&self) -> bool {
        self.depth > 0.0
    }
}

/// Batch projection. Points behind the camera are kept; check
/// [`ProjectedPoint::in_front`] before using their pixel coordinates.
pub fn project_points(pose: &PoseParams, points: &[Vector3<f64>]) -> Result<Vec<ProjectedPoint>> {
    let cam = Camera::new(pose)?;
    Ok(points
        .iter()
        .map(|p| {
            let c = cam.to_camera(p);
            ProjectedPoint {
                pixel: cam.to_pixel(&c),
                depth: c.z,
            }
        })
        .collect())
}
