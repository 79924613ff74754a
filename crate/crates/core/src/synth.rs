//! Synthetic scenes with closed-form ground-truth flows and images.
//!
//! Each scene is a rigid motion (pure translation, a translating disk, or a
//! rotation) on a fixed canvas over a time interval `[t0, t1]`. Because the
//! motions are rigid, the per-unit-time flow field, the bidirectional
//! displacement flows between any two times, and an anti-aliased rendering
//! are all available in closed form at every `t` - they act as the exact
//! oracle the encoding pipeline is verified against.
//!
//! Conventions: pixel centers sit at integer coordinates `(x, y)` with
//! `x in [0, width-1]`, `y in [0, height-1]`; flow-vector units are pixels
//! per unit time; intensities live in `[0, 1]`. Disk membership for the flow
//! oracle is decided by pixel-center containment (binary support, boundary
//! inclusive) so the oracle stays exact; anti-aliasing applies to images
//! only, via a fixed 4x4 supersample per pixel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowField, Image, NormalizedFlowField};

/// Subpixel sample offsets for 4x4 supersampled rendering: the centers of a
/// uniform 4x4 subdivision of one pixel. Dyadic values so sample positions
/// shift bit-exactly under integer translation.
const SUPERSAMPLE_OFFSETS: [f64; 4] = [-0.375, -0.125, 0.125, 0.375];

/// Rigid motion of a scene. The serialized form carries a `kind` tag with
/// motion-specific fields alongside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    /// The whole scene translates at a constant velocity; the flow is that
    /// velocity at every pixel. A disk of radius `min(w,h)/6` riding at the
    /// canvas center marks the motion in rendered images.
    Translation { velocity: [f64; 2] },
    /// A disk of the given radius starts centered at `center` and translates
    /// at `velocity`; the flow equals `velocity` inside the disk and zero
    /// outside. The rendered image shows the same disk.
    Circle { center: [f64; 2], radius: f64, velocity: [f64; 2] },
    /// The whole scene rotates about `center` at `rate` radians per unit
    /// time (counter-clockwise in x-y); the flow is the rigid velocity field
    /// `rate x (p - center)`. A disk of radius `min(w,h)/8` orbiting at
    /// distance `min(w,h)/4` marks the motion in rendered images.
    Rotation { center: [f64; 2], rate: f64 },
}

/// A synthetic scene: canvas, time interval, intensities, and one motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub t0: f64,
    pub t1: f64,
    #[serde(default = "default_background")]
    pub background: f64,
    #[serde(default = "default_foreground")]
    pub foreground: f64,
    #[serde(flatten)]
    pub motion: Motion,
}

fn default_background() -> f64 {
    0.0
}

fn default_foreground() -> f64 {
    1.0
}

impl SceneSpec {
    /// Checks canvas, interval, intensity, and containment invariants: the
    /// rendered marker must stay inside the pixel-center rectangle
    /// `[0, w-1] x [0, h-1]` for every `t` in `[t0, t1]`.
    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::InvalidConfig(format!(
                "canvas must be at least 2x2, got {}x{}",
                self.width, self.height
            )));
        }
        for (name, v) in [("t0", self.t0), ("t1", self.t1), ("background", self.background), ("foreground", self.foreground)] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite, got {v}")));
            }
        }
        if !(self.t1 > self.t0) {
            return Err(Error::InvalidConfig(format!(
                "time interval must satisfy t0 < t1, got [{}, {}]",
                self.t0, self.t1
            )));
        }
        for (name, v) in [("background", self.background), ("foreground", self.foreground)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        match self.motion {
            Motion::Translation { velocity } => {
                check_finite_pair("velocity", velocity)?;
                // Marker motion is linear, so the interval extremes bound it.
                for t in [self.t0, self.t1] {
                    let (cx, cy, r) = self.marker_at(t);
                    self.check_disk_inside(cx, cy, r, t)?;
                }
            }
            Motion::Circle { center, radius, velocity } => {
                check_finite_pair("center", center)?;
                check_finite_pair("velocity", velocity)?;
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidConfig(format!("radius must be positive, got {radius}")));
                }
                for t in [self.t0, self.t1] {
                    let (cx, cy, r) = self.marker_at(t);
                    self.check_disk_inside(cx, cy, r, t)?;
                }
            }
            Motion::Rotation { center, rate } => {
                check_finite_pair("center", center)?;
                if !rate.is_finite() {
                    return Err(Error::InvalidConfig(format!("rate must be finite, got {rate}")));
                }
                // The marker may reach any orbit angle, so bound it by the
                // full orbit circle regardless of the interval.
                let reach = self.orbit_distance() + self.marker_radius();
                self.check_disk_inside(center[0], center[1], reach, self.t0)?;
            }
        }
        Ok(())
    }

    fn check_disk_inside(&self, cx: f64, cy: f64, r: f64, t: f64) -> Result<()> {
        let (xmax, ymax) = ((self.width - 1) as f64, (self.height - 1) as f64);
        if cx - r < 0.0 || cx + r > xmax || cy - r < 0.0 || cy + r > ymax {
            return Err(Error::InvalidConfig(format!(
                "marker leaves the canvas at t={t}: disk center ({cx}, {cy}) radius {r} exceeds [0, {xmax}] x [0, {ymax}]"
            )));
        }
        Ok(())
    }

    fn min_extent(&self) -> f64 {
        self.width.min(self.height) as f64
    }

    /// Marker radius for the rendered disk; for circle scenes this is the
    /// flow-support radius itself.
    fn marker_radius(&self) -> f64 {
        match self.motion {
            Motion::Translation { .. } => self.min_extent() / 6.0,
            Motion::Circle { radius, .. } => radius,
            Motion::Rotation { .. } => self.min_extent() / 8.0,
        }
    }

    /// Orbit distance of the rotation marker from the rotation center.
    fn orbit_distance(&self) -> f64 {
        self.min_extent() / 4.0
    }

    /// Rendered marker disk `(cx, cy, r)` at time `t`.
    fn marker_at(&self, t: f64) -> (f64, f64, f64) {
        let r = self.marker_radius();
        match self.motion {
            Motion::Translation { velocity } => {
                let cx = (self.width - 1) as f64 / 2.0 + t * velocity[0];
                let cy = (self.height - 1) as f64 / 2.0 + t * velocity[1];
                (cx, cy, r)
            }
            Motion::Circle { center, velocity, .. } => {
                (center[0] + t * velocity[0], center[1] + t * velocity[1], r)
            }
            Motion::Rotation { center, rate } => {
                let a = rate * t;
                let d = self.orbit_distance();
                (center[0] + d * a.cos(), center[1] + d * a.sin(), r)
            }
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() || t < self.t0 || t > self.t1 {
            return Err(Error::TimeOutOfRange { t, t0: self.t0, t1: self.t1 });
        }
        Ok(())
    }

    /// Closed-form per-unit-time flow at time `t`, anchored at time-`t`
    /// positions. Translation: the velocity everywhere. Circle: the velocity
    /// inside the disk centered at `center + t*velocity`, zero outside
    /// (pixel-center containment, boundary inclusive). Rotation: the rigid
    /// field `rate * (-(y-cy), x-cx)`.
    pub fn scene_flow(&self, t: f64) -> Result<NormalizedFlowField> {
        self.validate()?;
        self.check_time(t)?;
        let flow = match self.motion {
            Motion::Translation { velocity } => {
                FlowField::from_fn(self.width, self.height, |_, _| velocity)
            }
            Motion::Circle { center, radius, velocity } => {
                let cx = center[0] + t * velocity[0];
                let cy = center[1] + t * velocity[1];
                let r2 = radius * radius;
                FlowField::from_fn(self.width, self.height, |x, y| {
                    let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                    if dx * dx + dy * dy <= r2 { velocity } else { [0.0, 0.0] }
                })
            }
            Motion::Rotation { center, rate } => {
                FlowField::from_fn(self.width, self.height, |x, y| {
                    let (dx, dy) = (x as f64 - center[0], y as f64 - center[1]);
                    [-rate * dy, rate * dx]
                })
            }
        };
        Ok(NormalizedFlowField { flow, t0: self.t0, t1: self.t1, divisor: self.t1 - self.t0 })
    }

    /// Anti-aliased grayscale rendering of the scene at time `t`: the marker
    /// disk in `foreground` over `background`, each pixel averaged over a
    /// fixed 4x4 supersample.
    pub fn scene_image(&self, t: f64) -> Result<Image> {
        self.validate()?;
        self.check_time(t)?;
        let (cx, cy, r) = self.marker_at(t);
        let r2 = r * r;
        let mut data = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut hits = 0u32;
                for oy in SUPERSAMPLE_OFFSETS {
                    for ox in SUPERSAMPLE_OFFSETS {
                        let (dx, dy) = (x as f64 + ox - cx, y as f64 + oy - cy);
                        if dx * dx + dy * dy <= r2 {
                            hits += 1;
                        }
                    }
                }
                let cover = f64::from(hits) / 16.0;
                data.push(self.background + (self.foreground - self.background) * cover);
            }
        }
        Image::new(self.width, self.height, 1, data)
    }

    /// Exact bidirectional displacement flows between `t0` and `t1` (both
    /// within the scene interval): `fwd` is anchored at time-`t0` positions
    /// and carries displacements to the time-`t1` correspondences, `bwd` the
    /// reverse. Circle flows are supported on the disk at their anchor time;
    /// rotation uses the exact rigid map, not a velocity linearization.
    pub fn scene_bidirectional(&self, t0: f64, t1: f64) -> Result<(FlowField, FlowField)> {
        self.validate()?;
        self.check_time(t0)?;
        self.check_time(t1)?;
        if !(t1 > t0) {
            return Err(Error::InvalidConfig(format!(
                "bidirectional flows need t0 < t1, got [{t0}, {t1}]"
            )));
        }
        let dt = t1 - t0;
        let pair = match self.motion {
            Motion::Translation { velocity } => {
                let d = [velocity[0] * dt, velocity[1] * dt];
                let fwd = FlowField::from_fn(self.width, self.height, |_, _| d);
                let bwd = FlowField::from_fn(self.width, self.height, |_, _| [-d[0], -d[1]]);
                (fwd, bwd)
            }
            Motion::Circle { center, radius, velocity } => {
                let d = [velocity[0] * dt, velocity[1] * dt];
                let r2 = radius * radius;
                let disk = |t: f64| {
                    (center[0] + t * velocity[0], center[1] + t * velocity[1])
                };
                let (c0x, c0y) = disk(t0);
                let (c1x, c1y) = disk(t1);
                let fwd = FlowField::from_fn(self.width, self.height, |x, y| {
                    let (dx, dy) = (x as f64 - c0x, y as f64 - c0y);
                    if dx * dx + dy * dy <= r2 { d } else { [0.0, 0.0] }
                });
                let bwd = FlowField::from_fn(self.width, self.height, |x, y| {
                    let (dx, dy) = (x as f64 - c1x, y as f64 - c1y);
                    if dx * dx + dy * dy <= r2 { [-d[0], -d[1]] } else { [0.0, 0.0] }
                });
                (fwd, bwd)
            }
            Motion::Rotation { center, rate } => {
                let a = rate * dt;
                let rot = move |angle: f64, x: usize, y: usize| -> [f64; 2] {
                    let (s, c) = angle.sin_cos();
                    let (dx, dy) = (x as f64 - center[0], y as f64 - center[1]);
                    [c * dx - s * dy - dx, s * dx + c * dy - dy]
                };
                let fwd = FlowField::from_fn(self.width, self.height, |x, y| rot(a, x, y));
                let bwd = FlowField::from_fn(self.width, self.height, |x, y| rot(-a, x, y));
                (fwd, bwd)
            }
        };
        Ok(pair)
    }

    /// Parses a scene from its TOML form and validates it.
    pub fn from_toml(text: &str) -> Result<SceneSpec> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| Error::SceneParse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Serializes the scene to TOML.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::SceneParse(e.to_string()))
    }
}

fn check_finite_pair(name: &str, v: [f64; 2]) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be finite, got [{}, {}]", v[0], v[1])))
    }
}
