//! Bounding boxes, IoU, and the downward pinhole camera that projects the
//! world-frame helipad into normalized image space.
//!
//! All image quantities are normalized to the frame: the image spans
//! `[0, 1] x [0, 1]`, x to the right (east), y down (south). Boxes may
//! hang over the frame edge by up to [`FRAME_OVERFLOW`] before they stop
//! being representable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How far past the frame edge a box extent may reach (fraction of the
/// frame side). Boxes beyond this are rejected rather than clipped so the
/// controller keeps seeing an honest box center during large offsets.
pub const FRAME_OVERFLOW: f64 = 0.25;

/// Minimum fraction of a projected box that must lie inside the frame for
/// the pad to count as visible.
pub const MIN_FRAME_OVERLAP: f64 = 0.25;

/// Altitude below which the downward camera is considered degenerate.
pub const MIN_CAMERA_ALTITUDE_M: f64 = 0.1;

/// Altitude at which the center box's ground footprint is defined.
/// With the default 90 deg camera and a 0.5 center box this footprint is
/// 2.16 m x 2.16 m, about 50 sq ft.
pub const TOUCHDOWN_REFERENCE_ALTITUDE_M: f64 = 2.16;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("box has non-positive extent: w={w}, h={h}")]
    DegenerateBox { w: f64, h: f64 },
    #[error("box overflows the frame beyond {FRAME_OVERFLOW}: cx={cx}, cy={cy}, w={w}, h={h}")]
    BoxOutOfFrame { cx: f64, cy: f64, w: f64, h: f64 },
    #[error("camera field of view must be in (0, 180) deg, got {0}")]
    InvalidFov(f64),
    #[error("altitude {0} m is below the usable camera minimum")]
    AltitudeTooLow(f64),
    #[error("helipad side must be positive, got {0}")]
    InvalidPadSide(f64),
}

/// Axis-aligned box in normalized image coordinates, center format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// Validating constructor: positive extent, overflow within bounds.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        if !(w > 0.0 && h > 0.0) {
            return Err(GeometryError::DegenerateBox { w, h });
        }
        let b = Self { cx, cy, w, h };
        if !b.within_overflow() {
            return Err(GeometryError::BoxOutOfFrame { cx, cy, w, h });
        }
        Ok(b)
    }

    /// Unvalidated constructor for internal boxes (e.g. Kalman
    /// predictions) that may drift outside the representable band.
    pub fn raw(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Extents as (x_min, y_min, x_max, y_max).
    pub fn extents(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    fn within_overflow(&self) -> bool {
        let (x0, y0, x1, y1) = self.extents();
        let lo = -FRAME_OVERFLOW;
        let hi = 1.0 + FRAME_OVERFLOW;
        x0 >= lo && y0 >= lo && x1 <= hi && y1 <= hi
    }

    /// Fraction of this box's area that lies inside the unit frame.
    pub fn frame_overlap(&self) -> f64 {
        let (x0, y0, x1, y1) = self.extents();
        let ix = (x1.min(1.0) - x0.max(0.0)).max(0.0);
        let iy = (y1.min(1.0) - y0.max(0.0)).max(0.0);
        ix * iy / self.area()
    }
}

/// Intersection-over-union of two boxes. Disjoint boxes give 0, identical
/// boxes give exactly 1.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.extents();
    let (bx0, by0, bx1, by1) = b.extents();
    let ix = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let iy = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// Vehicle (or pad-center) position in the world frame: meters east,
/// north, and altitude above the pad plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPose {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

/// Square landing pad on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Helipad {
    pub center: WorldPose,
    pub side_m: f64,
}

impl Helipad {
    pub fn new(center_x: f64, center_y: f64, side_m: f64) -> Result<Self, GeometryError> {
        if side_m <= 0.0 || side_m.is_nan() {
            return Err(GeometryError::InvalidPadSide(side_m));
        }
        Ok(Self {
            center: WorldPose::new(center_x, center_y, 0.0),
            side_m,
        })
    }
}

/// Downward-facing pinhole camera with a fixed center target box.
///
/// Image x points east and image y south, so a pad north of the vehicle
/// appears in the top half of the frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fov_deg: f64,
    pub image_px: u32,
    pub center_box: BoundingBox,
}

impl CameraModel {
    /// `center_side` is the normalized side of the fixed target box; it is
    /// centered in the frame.
    pub fn new(fov_deg: f64, image_px: u32, center_side: f64) -> Result<Self, GeometryError> {
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(GeometryError::InvalidFov(fov_deg));
        }
        let center_box = BoundingBox::new(0.5, 0.5, center_side, center_side)?;
        Ok(Self {
            fov_deg,
            image_px,
            center_box,
        })
    }

    /// 90 deg FOV, 640 px frame, 0.5 center box (a 50 sq ft ground
    /// footprint at the touchdown reference altitude).
    pub fn default_landing_camera() -> Self {
        Self::new(90.0, 640, 0.5).expect("default camera is valid")
    }

    /// Focal factor mapping a ground offset `d` at altitude `z` to a
    /// normalized image offset `f * d / z`.
    pub fn focal(&self) -> f64 {
        0.5 / (self.fov_deg.to_radians() / 2.0).tan()
    }
}

/// Project the pad onto the image plane.
///
/// Returns `Ok(None)` when the pad is out of view: its box either
/// overflows the frame band or has less than [`MIN_FRAME_OVERLAP`] of its
/// area inside the frame.
pub fn project_pad(
    pose: &WorldPose,
    pad: &Helipad,
    cam: &CameraModel,
) -> Result<Option<BoundingBox>, GeometryError> {
    if pose.z <= MIN_CAMERA_ALTITUDE_M {
        return Err(GeometryError::AltitudeTooLow(pose.z));
    }
    let f = cam.focal();
    let cx = 0.5 + f * (pad.center.x - pose.x) / pose.z;
    let cy = 0.5 - f * (pad.center.y - pose.y) / pose.z;
    let side = f * pad.side_m / pose.z;
    match BoundingBox::new(cx, cy, side, side) {
        Ok(b) if b.frame_overlap() >= MIN_FRAME_OVERLAP => Ok(Some(b)),
        _ => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Rasterized-overlap IoU: counts 1000x1000 cell centers falling in
    /// each box. Independent of the closed-form path.
    fn iou_rasterized(a: &BoundingBox, b: &BoundingBox) -> f64 {
        let n = 1000;
        let (mut inter, mut union) = (0u64, 0u64);
        // Cover the whole representable band, not just the frame.
        let (lo, hi) = (-0.5, 1.5);
        let step = (hi - lo) / n as f64;
        let inside = |bx: &BoundingBox, x: f64, y: f64| {
            let (x0, y0, x1, y1) = bx.extents();
            x >= x0 && x < x1 && y >= y0 && y < y1
        };
        for i in 0..n {
            let x = lo + (i as f64 + 0.5) * step;
            for j in 0..n {
                let y = lo + (j as f64 + 0.5) * step;
                let ia = inside(a, x, y);
                let ib = inside(b, x, y);
                if ia && ib {
                    inter += 1;
                }
                if ia || ib {
                    union += 1;
                }
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn iou_identical_boxes_is_one() {
        let b = BoundingBox::new(0.4, 0.6, 0.2, 0.3).unwrap();
        assert_eq!(iou(&b, &b), 1.0);
    }

    #[test]
    fn iou_disjoint_boxes_is_zero() {
        let a = BoundingBox::new(0.2, 0.2, 0.2, 0.2).unwrap();
        let b = BoundingBox::new(0.8, 0.8, 0.2, 0.2).unwrap();
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_quarter_offset_squares() {
        let a = BoundingBox::new(0.25, 0.25, 0.5, 0.5).unwrap();
        let b = BoundingBox::new(0.5, 0.5, 0.5, 0.5).unwrap();
        let v = iou(&a, &b);
        assert_abs_diff_eq!(v, 1.0 / 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v, iou_rasterized(&a, &b), epsilon = 2e-3);
    }

    #[test]
    fn box_validation() {
        assert!(BoundingBox::new(0.5, 0.5, 0.0, 0.1).is_err());
        assert!(BoundingBox::new(0.5, 0.5, 0.1, -0.1).is_err());
        // 25% overflow is the limit.
        assert!(BoundingBox::new(-0.15, 0.5, 0.2, 0.2).is_ok());
        assert!(BoundingBox::new(-0.3, 0.5, 0.2, 0.2).is_err());
        assert!(BoundingBox::new(0.5, 1.2, 0.2, 0.2).is_err());
    }

    #[test]
    fn projection_centered_above_pad() {
        let cam = CameraModel::default_landing_camera();
        let pad = Helipad::new(0.0, 0.0, 5.0).unwrap();
        let b = project_pad(&WorldPose::new(0.0, 0.0, 50.0), &pad, &cam)
            .unwrap()
            .unwrap();
        assert_abs_diff_eq!(b.cx, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b.cy, 0.5, epsilon = 1e-15);
        // f = 0.5 / tan(45 deg) = 0.5, so w = 0.5 * 5 / 50.
        assert_abs_diff_eq!(b.w, 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(b.h, 0.05, epsilon = 1e-12);
    }

    #[test]
    fn doubling_altitude_quarters_area() {
        let cam = CameraModel::default_landing_camera();
        let pad = Helipad::new(3.0, -2.0, 5.0).unwrap();
        let near = project_pad(&WorldPose::new(1.0, 1.0, 40.0), &pad, &cam)
            .unwrap()
            .unwrap();
        let far = project_pad(&WorldPose::new(1.0, 1.0, 80.0), &pad, &cam)
            .unwrap()
            .unwrap();
        assert_abs_diff_eq!(near.area() / far.area(), 4.0, epsilon = 1e-9);
    }

    #[test]
    fn altitude_too_low_is_an_error() {
        let cam = CameraModel::default_landing_camera();
        let pad = Helipad::new(0.0, 0.0, 5.0).unwrap();
        let err = project_pad(&WorldPose::new(0.0, 0.0, 0.05), &pad, &cam).unwrap_err();
        assert!(matches!(err, GeometryError::AltitudeTooLow(_)));
    }

    #[test]
    fn pad_behind_the_vehicle_is_invisible() {
        let cam = CameraModel::default_landing_camera();
        let pad = Helipad::new(0.0, 0.0, 5.0).unwrap();
        // Offset of 3z puts the projected center at 0.5 + 1.5.
        let seen = project_pad(&WorldPose::new(-90.0, 0.0, 30.0), &pad, &cam).unwrap();
        assert_eq!(seen, None);
    }

    #[test]
    fn north_offset_projects_into_top_half() {
        let cam = CameraModel::default_landing_camera();
        let pad = Helipad::new(0.0, 10.0, 5.0).unwrap();
        let b = project_pad(&WorldPose::new(0.0, 0.0, 50.0), &pad, &cam)
            .unwrap()
            .unwrap();
        assert!(b.cy < 0.5);
        assert_abs_diff_eq!(b.cx, 0.5, epsilon = 1e-15);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        // Boxes comfortably inside the representable band.
        (0.1f64..0.9, 0.1f64..0.9, 0.02f64..0.2, 0.02f64..0.2)
            .prop_map(|(cx, cy, w, h)| BoundingBox::new(cx, cy, w, h).unwrap())
    }

    proptest! {
        #[test]
        fn iou_is_symmetric(a in arb_box(), b in arb_box()) {
            prop_assert!((iou(&a, &b) - iou(&b, &a)).abs() < 1e-15);
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn projection_is_translation_consistent(
            dx in -20.0f64..20.0,
            dy in -20.0f64..20.0,
            px in -5.0f64..5.0,
            py in -5.0f64..5.0,
            z in 10.0f64..120.0,
        ) {
            let cam = CameraModel::default_landing_camera();
            let pad = Helipad::new(px, py, 5.0).unwrap();
            let shifted = Helipad::new(px + dx, py + dy, 5.0).unwrap();
            let a = project_pad(&WorldPose::new(0.0, 0.0, z), &pad, &cam).unwrap();
            let b = project_pad(&WorldPose::new(dx, dy, z), &shifted, &cam).unwrap();
            match (a, b) {
                (Some(a), Some(b)) => {
                    prop_assert!((a.cx - b.cx).abs() < 1e-12);
                    prop_assert!((a.cy - b.cy).abs() < 1e-12);
                    prop_assert!((a.w - b.w).abs() < 1e-12);
                }
                (a, b) => prop_assert_eq!(a.is_none(), b.is_none()),
            }
        }

        #[test]
        fn projected_area_shrinks_with_altitude(z in 5.0f64..100.0) {
            let cam = CameraModel::default_landing_camera();
            let pad = Helipad::new(2.0, 1.0, 5.0).unwrap();
            let lo = project_pad(&WorldPose::new(0.0, 0.0, z), &pad, &cam).unwrap();
            let hi = project_pad(&WorldPose::new(0.0, 0.0, z * 1.5), &pad, &cam).unwrap();
            if let (Some(lo), Some(hi)) = (lo, hi) {
                prop_assert!(hi.area() < lo.area());
            }
        }
    }
}
