//! Rigid camera model, pinhole projection and two-view epipolar relations.
//!
//! Conventions used throughout the crate:
//!
//! * A [`CameraPose`] is a rigid transform `x ↦ R·x + t`. Trajectories store
//!   camera-to-world transforms; the relative pose mapping reference-camera
//!   coordinates into target-camera coordinates is `T_t⁻¹ ∘ T_r`.
//! * Pixel coordinates are raw pixels with integer values at pixel centres;
//!   homogeneous pixels carry a third coordinate fixed at 1.

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector2, Vector3, SVD};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Drift threshold on `‖RᵀR − I‖_F` above which rotations are re-projected
/// onto SO(3).
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Points closer than this to the camera plane cannot be projected.
pub const MIN_PROJECT_DEPTH: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("warped point has non-positive depth {0} in the target camera")]
    NonPositiveTargetDepth(f64),
    #[error("reference depth must be positive, got {0}")]
    NonPositiveSourceDepth(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// Rigid transform on SE(3) tagged with the frame it belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub frame_id: usize,
}

impl CameraPose {
    pub fn new(rotation: Mat3, translation: Vec3, frame_id: usize) -> Self {
        Self {
            rotation,
            translation,
            frame_id,
        }
    }

    pub fn identity(frame_id: usize) -> Self {
        Self::new(Mat3::identity(), Vec3::zeros(), frame_id)
    }

    pub fn from_translation(translation: Vec3, frame_id: usize) -> Self {
        Self::new(Mat3::identity(), translation, frame_id)
    }

    /// Rotation of `angle` radians about `axis` (normalised internally).
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3, frame_id: usize) -> Self {
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        Self::new(*rot.matrix(), translation, frame_id)
    }

    /// Builds a pose from a unit quaternion given as `(x, y, z, w)`.
    pub fn from_quaternion(q: [f64; 4], translation: Vec3, frame_id: usize) -> Self {
        let quat = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[3], q[0], q[1], q[2]));
        Self::new(*quat.to_rotation_matrix().matrix(), translation, frame_id)
    }

    /// Rotation as a unit quaternion `(x, y, z, w)` with `w ≥ 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let c = q.quaternion().coords;
        // coords are stored (i, j, k, w)
        let sign = if c[3] < 0.0 { -1.0 } else { 1.0 };
        [sign * c[0], sign * c[1], sign * c[2], sign * c[3]]
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation), self.frame_id)
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &CameraPose) -> Self {
        se3_compose(self, other)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>, frame_id: usize) -> Self {
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
            frame_id,
        )
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Mat3::identity()).norm()
    }

    /// Geodesic rotation angle in radians.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    /// Right-perturbation `self ∘ exp(ξ)` with `ξ = (ω, ρ)`.
    pub fn perturbed(&self, omega: Vec3, rho: Vec3) -> Self {
        self.compose(&se3_exp(omega, rho, self.frame_id))
    }

    pub fn with_frame_id(mut self, frame_id: usize) -> Self {
        self.frame_id = frame_id;
        self
    }
}

/// Composition `a ∘ b` (apply `b`, then `a`). The result keeps `a.frame_id`.
pub fn se3_compose(a: &CameraPose, b: &CameraPose) -> CameraPose {
    let mut rotation = a.rotation * b.rotation;
    let translation = a.rotation * b.translation + a.translation;
    if (rotation.transpose() * rotation - Mat3::identity()).norm() > ORTHONORMAL_TOL {
        rotation = nearest_rotation(&rotation);
    }
    CameraPose::new(rotation, translation, a.frame_id)
}

/// Polar-decomposition projection onto SO(3).
pub fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = SVD::new(*m, true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u_fixed = u;
        u_fixed.column_mut(2).scale_mut(-1.0);
        r = u_fixed * v_t;
    }
    r
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues exponential on so(3).
pub fn so3_exp(omega: Vec3) -> Mat3 {
    let theta = omega.norm();
    let k = skew(&omega);
    if theta < 1e-12 {
        return Mat3::identity() + k;
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Mat3::identity() + k * a + k * k * b
}

/// Exponential map on se(3) with rotation part `omega` and translation part `rho`.
pub fn se3_exp(omega: Vec3, rho: Vec3, frame_id: usize) -> CameraPose {
    let theta = omega.norm();
    let k = skew(&omega);
    let v = if theta < 1e-12 {
        Mat3::identity() + k * 0.5
    } else {
        let t2 = theta * theta;
        Mat3::identity() + k * ((1.0 - theta.cos()) / t2) + k * k * ((theta - theta.sin()) / (t2 * theta))
    };
    CameraPose::new(so3_exp(omega), v * rho, frame_id)
}

/// Geodesic angle of a rotation matrix, robust near 0 and π.
pub fn rotation_angle(r: &Mat3) -> f64 {
    let s = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm() * 0.5;
    let c = (r.trace() - 1.0) * 0.5;
    s.atan2(c)
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Principal point at the image centre.
    pub fn centered(focal: f64, width: usize, height: usize) -> Self {
        Self {
            fx: focal,
            fy: focal,
            cx: (width as f64 - 1.0) * 0.5,
            cy: (height as f64 - 1.0) * 0.5,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok_focal = self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite();
        let ok_pp = self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64;
        if !ok_focal {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !ok_pp {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Mat3 {
        Mat3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Normalised ray `K⁻¹·(u, v, 1)` (third coordinate 1).
    pub fn normalized(&self, pixel: &Vec2) -> Vec3 {
        Vec3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, 1.0)
    }

    /// Camera-frame point at `depth` along the ray through `pixel`.
    pub fn backproject(&self, pixel: &Vec2, depth: f64) -> Vec3 {
        self.normalized(pixel) * depth
    }

    /// Perspective projection of a camera-frame point.
    pub fn project(&self, p: &Vec3) -> Result<Vec2, GeometryError> {
        if p.z <= MIN_PROJECT_DEPTH {
            return Err(GeometryError::NonPositiveTargetDepth(p.z));
        }
        Ok(Vec2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Pixel containing a sub-pixel position, if inside the image.
    pub fn pixel_index(&self, pixel: &Vec2) -> Option<(usize, usize)> {
        let col = pixel.x.round();
        let row = pixel.y.round();
        if col < 0.0 || row < 0.0 || col >= self.width as f64 || row >= self.height as f64 {
            return None;
        }
        Some((row as usize, col as usize))
    }
}

/// A reference pixel with its depth and an optional independent 3D motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCorrespondence {
    pub x_r: Vec2,
    pub x_t: Vec2,
    pub depth_r: f64,
    /// Object displacement in target-camera coordinates; zero for static points.
    pub displacement: Vec3,
}

impl PixelCorrespondence {
    pub fn new(x_r: Vec2, depth_r: f64, displacement: Vec3) -> Self {
        Self {
            x_r,
            x_t: x_r,
            depth_r,
            displacement,
        }
    }
}

/// Result of warping a reference pixel into the target view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Warped {
    pub pixel: Vec2,
    pub depth: f64,
}

/// Maps a reference pixel into the target camera:
/// `x_t = π(K·[R·D_r·K⁻¹·x_r + t + ΔX])`.
pub fn warp(corr: &PixelCorrespondence, relative: &CameraPose, k: &Intrinsics) -> Result<Warped, GeometryError> {
    if !(corr.depth_r > 0.0) {
        return Err(GeometryError::NonPositiveSourceDepth(corr.depth_r));
    }
    let p_ref = k.backproject(&corr.x_r, corr.depth_r);
    let p_tgt = relative.rotation * p_ref + relative.translation + corr.displacement;
    let pixel = k.project(&p_tgt)?;
    Ok(Warped { pixel, depth: p_tgt.z })
}

/// Essential matrix together with a flag marking the zero-baseline case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix {
    pub matrix: Mat3,
    /// Set when the translation vanishes; the matrix is then identically zero.
    pub degenerate: bool,
}

/// `E = [t]× R` for a relative pose mapping reference into target coordinates.
pub fn essential_matrix(relative: &CameraPose) -> EssentialMatrix {
    let degenerate = relative.translation.norm() == 0.0;
    EssentialMatrix {
        matrix: skew(&relative.translation) * relative.rotation,
        degenerate,
    }
}

/// Pixel-space counterpart `K⁻ᵀ E K⁻¹`; its bilinear form on raw pixels equals
/// the essential form on normalised coordinates.
pub fn fundamental_matrix(e: &Mat3, k: &Intrinsics) -> Mat3 {
    let k_inv = k.inverse_matrix();
    k_inv.transpose() * e * k_inv
}

fn homogeneous(x: &Vec2) -> Vec3 {
    Vec3::new(x.x, x.y, 1.0)
}

/// Signed bilinear residual `x̃_tᵀ M x̃_r`.
pub fn epipolar_residual(x_r: &Vec2, x_t: &Vec2, m: &Mat3) -> f64 {
    homogeneous(x_t).dot(&(m * homogeneous(x_r)))
}

/// Unit normal `(l₁, l₂)/‖(l₁, l₂)‖` of the epipolar line `l = M x̃_r`.
/// `None` when the line is undefined (zero in-plane component).
pub fn epipolar_line_normal(x_r: &Vec2, m: &Mat3) -> Option<Vec2> {
    let l = m * homogeneous(x_r);
    let n = Vec2::new(l.x, l.y);
    let norm = n.norm();
    (norm > 0.0).then(|| n / norm)
}

/// Signed distance of `x_t` from the epipolar line of `x_r`, i.e. the bilinear
/// residual with unit-normalised line coefficients.
pub fn epipolar_distance(x_r: &Vec2, x_t: &Vec2, m: &Mat3) -> Option<f64> {
    let l = m * homogeneous(x_r);
    let norm = Vec2::new(l.x, l.y).norm();
    (norm > 0.0).then(|| homogeneous(x_t).dot(&l) / norm)
}

/// Component of a 3D displacement that moves the image of a point across the
/// epipolar line, expressed per unit depth in normalised image coordinates.
///
/// `static_target` is the normalised static image position of the point in the
/// target view; the returned 2-vector is `ΔX_xy − ΔX_z·x̂_t`.
pub fn displacement_image_component(displacement: &Vec3, static_target: &Vec3) -> Vec2 {
    Vec2::new(
        displacement.x - displacement.z * static_target.x / static_target.z,
        displacement.y - displacement.z * static_target.y / static_target.z,
    )
}

/// First-order dynamic epipolar residual `(1/Z_r)·nᵀΔX_⊥` in normalised
/// coordinates for a correspondence observed under `relative`.
///
/// Returns `None` for a degenerate epipolar geometry (zero baseline, or the
/// reference ray passing through the epipole).
pub fn first_order_residual(corr: &PixelCorrespondence, relative: &CameraPose, k: &Intrinsics) -> Option<f64> {
    let e = essential_matrix(relative);
    if e.degenerate {
        return None;
    }
    let x_r = k.normalized(&corr.x_r);
    let n = epipolar_line_normal(&Vec2::new(x_r.x, x_r.y), &e.matrix)?;
    let p_static = relative.rotation * (x_r * corr.depth_r) + relative.translation;
    let perp = displacement_image_component(&corr.displacement, &p_static);
    Some(n.dot(&perp) / corr.depth_r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rot_z(angle: f64) -> Mat3 {
        *Rotation3::from_axis_angle(&Vec3::z_axis(), angle).matrix()
    }

    #[test]
    fn compose_identity() {
        let id = CameraPose::identity(0);
        let c = se3_compose(&id, &id);
        assert_eq!(c.rotation, Mat3::identity());
        assert_eq!(c.translation, Vec3::zeros());
    }

    #[test]
    fn compose_with_inverse_cancels() {
        let t = CameraPose::from_axis_angle(Vec3::new(0.3, -1.0, 0.2), 0.7, Vec3::new(1.0, -2.0, 0.5), 3);
        let c = t.compose(&t.inverse());
        assert!((c.rotation - Mat3::identity()).norm() < 1e-9);
        assert!(c.translation.norm() < 1e-9);
    }

    #[test]
    fn compose_matches_homogeneous_product() {
        let a = CameraPose::new(rot_z(std::f64::consts::FRAC_PI_2), Vec3::zeros(), 0);
        let b = CameraPose::from_translation(Vec3::new(1.0, 0.0, 0.0), 0);
        let c = se3_compose(&a, &b);
        let oracle = a.to_homogeneous() * b.to_homogeneous();
        assert!((c.to_homogeneous() - oracle).norm() < 1e-12);
        // rotate (1,0,0) by 90° about z
        assert_relative_eq!(c.translation, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn compose_reorthonormalizes_drift() {
        let mut a = CameraPose::new(rot_z(0.3), Vec3::zeros(), 0);
        a.rotation[(0, 1)] += 1e-6;
        let c = se3_compose(&a, &CameraPose::identity(0));
        assert!(c.orthonormality_error() < 1e-12);
        assert!((c.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quaternion_roundtrip() {
        let p = CameraPose::from_axis_angle(Vec3::new(1.0, 2.0, -0.5), 2.9, Vec3::new(0.1, 0.2, 0.3), 7);
        let q = p.quaternion();
        assert!(q[3] >= 0.0);
        let back = CameraPose::from_quaternion(q, p.translation, 7);
        assert!((back.rotation - p.rotation).norm() < 1e-12);
    }

    #[test]
    fn essential_of_unit_x_translation() {
        let e = essential_matrix(&CameraPose::from_translation(Vec3::new(1.0, 0.0, 0.0), 0));
        let expected = Mat3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert_eq!(e.matrix, expected);
        assert!(!e.degenerate);
    }

    #[test]
    fn essential_zero_translation_is_degenerate() {
        let e = essential_matrix(&CameraPose::identity(0));
        assert!(e.degenerate);
        assert_eq!(e.matrix, Mat3::zeros());
    }

    #[test]
    fn essential_matches_explicit_product() {
        let rel = CameraPose::new(rot_z(std::f64::consts::FRAC_PI_2), Vec3::new(0.0, 0.0, 1.0), 0);
        let e = essential_matrix(&rel);
        // [t]x for t = e3 written out by hand
        let tx = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let r = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((e.matrix - tx * r).norm() < 1e-15);
    }

    #[test]
    fn warp_identity_is_noop() {
        let k = Intrinsics::centered(50.0, 64, 48);
        let corr = PixelCorrespondence::new(Vec2::new(10.25, 33.5), 4.0, Vec3::zeros());
        let w = warp(&corr, &CameraPose::identity(0), &k).unwrap();
        assert_relative_eq!(w.pixel, corr.x_r, epsilon = 1e-12);
        assert_relative_eq!(w.depth, 4.0);
    }

    #[test]
    fn warp_axial_translation_keeps_principal_point() {
        let k = Intrinsics::centered(50.0, 64, 48);
        let pp = Vec2::new(k.cx, k.cy);
        let corr = PixelCorrespondence::new(pp, 2.0, Vec3::zeros());
        let w = warp(&corr, &CameraPose::from_translation(Vec3::new(0.0, 0.0, -1.0), 0), &k).unwrap();
        assert_relative_eq!(w.pixel, pp, epsilon = 1e-12);
        assert_relative_eq!(w.depth, 1.0);
    }

    #[test]
    fn warp_matches_homogeneous_pipeline() {
        let k = Intrinsics::new(60.0, 55.0, 31.0, 22.0, 64, 48).unwrap();
        let rel = CameraPose::from_axis_angle(Vec3::new(0.2, 1.0, 0.1), 0.05, Vec3::new(0.1, -0.05, 0.2), 1);
        let dx = Vec3::new(0.03, 0.01, -0.02);
        let corr = PixelCorrespondence::new(Vec2::new(12.0, 40.0), 3.5, dx);
        let w = warp(&corr, &rel, &k).unwrap();
        // 4x4 homogeneous route: X = [D K^-1 x; 1], Y = T X + [dX; 0], x = K Y / Y_z
        let x_h = k.inverse_matrix() * Vec3::new(12.0, 40.0, 1.0) * 3.5;
        let y = rel.to_homogeneous() * nalgebra::Vector4::new(x_h.x, x_h.y, x_h.z, 1.0)
            + nalgebra::Vector4::new(dx.x, dx.y, dx.z, 0.0);
        let img = k.matrix() * Vec3::new(y.x, y.y, y.z);
        assert_relative_eq!(w.pixel, Vec2::new(img.x / img.z, img.y / img.z), epsilon = 1e-10);
        assert_relative_eq!(w.depth, y.z, epsilon = 1e-12);
    }

    #[test]
    fn warp_behind_camera_errors() {
        let k = Intrinsics::centered(50.0, 64, 48);
        let corr = PixelCorrespondence::new(Vec2::new(k.cx, k.cy), 1.0, Vec3::zeros());
        let err = warp(&corr, &CameraPose::from_translation(Vec3::new(0.0, 0.0, -2.0), 0), &k).unwrap_err();
        assert!(matches!(err, GeometryError::NonPositiveTargetDepth(_)));
    }

    #[test]
    fn static_correspondence_satisfies_epipolar_constraint() {
        let k = Intrinsics::centered(50.0, 64, 48);
        let rel = CameraPose::from_axis_angle(Vec3::new(0.0, 1.0, 0.2), 0.04, Vec3::new(0.3, 0.02, 0.05), 1);
        let f = fundamental_matrix(&essential_matrix(&rel).matrix, &k);
        let corr = PixelCorrespondence::new(Vec2::new(20.0, 11.0), 5.0, Vec3::zeros());
        let w = warp(&corr, &rel, &k).unwrap();
        assert!(epipolar_residual(&corr.x_r, &w.pixel, &f).abs() < 1e-9);
    }

    #[test]
    fn displacement_along_epipolar_plane_leaves_no_residual() {
        let k = Intrinsics::centered(50.0, 64, 48);
        let rel = CameraPose::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), 0.02, Vec3::new(0.4, 0.1, 0.0), 1);
        let e = essential_matrix(&rel).matrix;
        let x_r = Vec2::new(40.0, 30.0);
        let l = e * k.normalized(&x_r);
        // any displacement orthogonal to l stays in the epipolar plane
        let dir = l.cross(&Vec3::new(0.0, 0.0, 1.0)).normalize();
        let dx = dir * 0.02;
        let corr = PixelCorrespondence::new(x_r, 4.0, dx);
        let w = warp(&corr, &rel, &k).unwrap();
        let f = fundamental_matrix(&e, &k);
        assert!(epipolar_residual(&x_r, &w.pixel, &f).abs() < 1e-6 * dx.norm());
    }

    #[test]
    fn first_order_residual_tracks_exact_distance() {
        let k = Intrinsics::centered(50.0, 64, 48);
        let rel = CameraPose::from_axis_angle(Vec3::new(0.1, 1.0, 0.0), 0.01, Vec3::new(0.05, 0.01, 0.0), 1);
        let e = essential_matrix(&rel).matrix;
        let x_r = Vec2::new(25.0, 14.0);
        let depth = 4.0;
        let dx = Vec3::new(0.0, 0.03, 0.005);
        let corr = PixelCorrespondence::new(x_r, depth, dx);
        let w = warp(&corr, &rel, &k).unwrap();
        let xr_n = k.normalized(&x_r);
        let xt_n = k.normalized(&w.pixel);
        let exact = epipolar_distance(&Vec2::new(xr_n.x, xr_n.y), &Vec2::new(xt_n.x, xt_n.y), &e).unwrap();
        let approx = first_order_residual(&corr, &rel, &k).unwrap();
        assert!(
            ((exact - approx) / approx).abs() < 0.05,
            "exact {exact} approx {approx}"
        );
    }

    #[test]
    fn rotation_angle_small_and_large() {
        assert_relative_eq!(rotation_angle(&rot_z(1e-9)), 1e-9, epsilon = 1e-20);
        assert_relative_eq!(rotation_angle(&rot_z(3.0)), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn se3_exp_small_step_is_close_to_identity_plus_xi() {
        let p = se3_exp(Vec3::new(1e-4, 0.0, 0.0), Vec3::new(0.0, 2e-4, 0.0), 0);
        assert!((p.translation - Vec3::new(0.0, 2e-4, 0.0)).norm() < 1e-7);
        assert!((p.rotation_angle() - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(Intrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 0.0, 3.9, 4, 4).is_ok());
    }
}
