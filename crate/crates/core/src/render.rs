//! Minimal CPU perspective splat renderer.
//!
//! Projection follows the usual EWA splatting recipe (`J W Σ Wᵀ Jᵀ` plus a
//! 0.3 px² floor), colors come from the SH DC term only, and Gaussians are
//! composited front to back with a 0.99 alpha cap over a black background.

use std::thread;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::gaussian::Gaussian3D;
use crate::set::GaussianSet;

pub const NEAR_PLANE: f64 = 0.01;
pub const COV2D_FLOOR: f64 = 0.3;
pub const ALPHA_CAP: f64 = 0.99;
pub const MIN_ALPHA: f64 = 1.0 / 255.0;
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

/// Pinhole camera, OpenCV convention (x right, y down, z forward).
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    /// Camera at `eye` looking at `target` with the given vertical field of view.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        fov_y: f64,
        width: usize,
        height: usize,
    ) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let f = 0.5 * height as f64 / (0.5 * fov_y).tan();
        Self {
            translation: -(rotation * eye),
            rotation,
            fx: f,
            fy: f,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = (self.rotation * self.rotation.transpose() - Matrix3::identity()).abs().max();
        if err > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "camera rotation is not orthonormal (error {err:e})"
            )));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidParameter("focal lengths must be positive".into()));
        }
        Ok(())
    }
}

/// Evaluation rig: `views` cameras on a horizontal circle of radius twice
/// the bounding-sphere radius, raised 20° above the equator, looking at the
/// sphere's center.
pub fn orbit_cameras(set: &GaussianSet, views: usize, width: usize, height: usize) -> Vec<Camera> {
    let (center, radius) = bounding_sphere(set);
    let distance = 2.0 * radius;
    let elevation = 20f64.to_radians();
    (0..views)
        .map(|i| {
            let azimuth = std::f64::consts::TAU * i as f64 / views as f64;
            let eye = center
                + Vector3::new(
                    distance * elevation.cos() * azimuth.cos(),
                    distance * elevation.sin(),
                    distance * elevation.cos() * azimuth.sin(),
                );
            // The sphere subtends 60°; leave a margin.
            Camera::look_at(eye, center, Vector3::y(), 70f64.to_radians(), width, height)
        })
        .collect()
}

/// Centroid of the active centers and the radius reaching every center
/// grown by three standard deviations of its largest axis.
pub fn bounding_sphere(set: &GaussianSet) -> (Vector3<f64>, f64) {
    let mut n = 0usize;
    let mut sum = Vector3::zeros();
    for (_, g) in set.iter_active() {
        sum += g.center;
        n += 1;
    }
    if n == 0 {
        return (Vector3::zeros(), 1.0);
    }
    let center = sum / n as f64;
    let radius = set
        .iter_active()
        .map(|(_, g)| (g.center - center).norm() + 3.0 * g.scale.max())
        .fold(0.0f64, f64::max);
    (center, radius.max(1e-6))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projected {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
    pub depth: f64,
}

/// Screen-space footprint of `g`, or `None` when it lies behind the near
/// plane.
pub fn project(g: &Gaussian3D, cam: &Camera) -> Option<Projected> {
    let t = cam.rotation * g.center + cam.translation;
    if t.z <= NEAR_PLANE {
        return None;
    }
    let (x, y, z) = (t.x, t.y, t.z);
    let mean = Vector2::new(cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy);
    let j = nalgebra::Matrix2x3::new(
        cam.fx / z,
        0.0,
        -cam.fx * x / (z * z),
        0.0,
        cam.fy / z,
        -cam.fy * y / (z * z),
    );
    let m = j * cam.rotation;
    let full = m * g.covariance() * m.transpose();
    let off = 0.5 * (full[(0, 1)] + full[(1, 0)]);
    let cov = Matrix2::new(
        full[(0, 0)] + COV2D_FLOOR,
        off,
        off,
        full[(1, 1)] + COV2D_FLOOR,
    );
    Some(Projected {
        mean,
        cov,
        depth: z,
    })
}

/// `H × W × 3` image, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::InvalidParameter(format!(
                "{} samples for a {width}x{height} image",
                data.len()
            )));
        }
        let mut img = Self {
            width,
            height,
            data,
        };
        for v in &mut img.data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(img)
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn bits_eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Straight 8-bit RGBA conversion for display surfaces.
    pub fn to_rgba8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width * self.height * 4);
        for px in self.data.chunks_exact(3) {
            for c in px {
                out.push((c * 255.0).round() as u8);
            }
            out.push(255);
        }
        out
    }
}

struct Splat {
    mean: Vector2<f64>,
    /// Inverse 2D covariance entries `(a, b, c)` for `[[a, b], [b, c]]`.
    conic: (f64, f64, f64),
    opacity: f64,
    color: [f64; 3],
    x_range: (usize, usize),
}

fn prepare(set: &GaussianSet, cam: &Camera) -> (Vec<Splat>, Vec<Vec<u32>>) {
    let mut visible: Vec<(f64, usize, Projected, &Gaussian3D)> = set
        .iter_active()
        .enumerate()
        .filter_map(|(i, (_, g))| project(g, cam).map(|p| (p.depth, i, p, g)))
        .collect();
    visible.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut splats = Vec::with_capacity(visible.len());
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); cam.height];
    for (_, _, p, g) in visible {
        let det = p.cov.determinant();
        if !(det > 0.0) {
            continue;
        }
        let conic = (p.cov[(1, 1)] / det, -p.cov[(0, 1)] / det, p.cov[(0, 0)] / det);
        let radius_x = 3.0 * p.cov[(0, 0)].sqrt();
        let radius_y = 3.0 * p.cov[(1, 1)].sqrt();
        let span = |center: f64, r: f64, size: usize| -> Option<(usize, usize)> {
            let lo = (center - r - 0.5).ceil().max(0.0);
            let hi = (center + r - 0.5).floor().min(size as f64 - 1.0);
            (lo <= hi).then_some((lo as usize, hi as usize))
        };
        let (Some(xr), Some(yr)) = (
            span(p.mean.x, radius_x, cam.width),
            span(p.mean.y, radius_y, cam.height),
        ) else {
            continue;
        };
        let idx = splats.len() as u32;
        for row in &mut rows[yr.0..=yr.1] {
            row.push(idx);
        }
        let color = g.sh_dc.map(|f| (0.5 + SH_C0 * f).clamp(0.0, 1.0));
        splats.push(Splat {
            mean: p.mean,
            conic,
            opacity: g.opacity,
            color,
            x_range: xr,
        });
    }
    (splats, rows)
}

fn shade_rows(
    splats: &[Splat],
    rows: &[Vec<u32>],
    width: usize,
    first_row: usize,
    out: &mut [f32],
) {
    for (r, row_out) in out.chunks_exact_mut(width * 3).enumerate() {
        let y = first_row + r;
        let list = &rows[y];
        let py = y as f64 + 0.5;
        for x in 0..width {
            let px = x as f64 + 0.5;
            let mut transmittance = 1.0f64;
            let mut color = [0.0f64; 3];
            for &i in list {
                let s = &splats[i as usize];
                if x < s.x_range.0 || x > s.x_range.1 {
                    continue;
                }
                let dx = px - s.mean.x;
                let dy = py - s.mean.y;
                let power = -0.5 * (s.conic.0 * dx * dx + s.conic.2 * dy * dy) - s.conic.1 * dx * dy;
                if power > 0.0 {
                    continue;
                }
                let alpha = (s.opacity * power.exp()).min(ALPHA_CAP);
                if alpha < MIN_ALPHA {
                    continue;
                }
                let w = alpha * transmittance;
                for c in 0..3 {
                    color[c] += s.color[c] * w;
                }
                transmittance *= 1.0 - alpha;
                if transmittance < MIN_TRANSMITTANCE {
                    break;
                }
            }
            let o = x * 3;
            for c in 0..3 {
                row_out[o + c] = color[c].clamp(0.0, 1.0) as f32;
            }
        }
    }
}

pub fn render(set: &GaussianSet, cam: &Camera) -> Image {
    render_with_workers(set, cam, 1)
}

/// Renders with image rows split into `workers` contiguous bands. Every
/// pixel is shaded independently from the same depth-sorted list, so the
/// output does not depend on the worker count.
pub fn render_with_workers(set: &GaussianSet, cam: &Camera, workers: usize) -> Image {
    let mut img = Image::new(cam.width, cam.height);
    if cam.width == 0 || cam.height == 0 {
        return img;
    }
    let (splats, rows) = prepare(set, cam);
    let workers = workers.clamp(1, cam.height);
    if workers == 1 {
        shade_rows(&splats, &rows, cam.width, 0, &mut img.data);
        return img;
    }
    let band = cam.height.div_ceil(workers);
    let stride = band * cam.width * 3;
    thread::scope(|scope| {
        for (b, chunk) in img.data.chunks_mut(stride).enumerate() {
            let (splats, rows) = (&splats, &rows);
            scope.spawn(move || shade_rows(splats, rows, cam.width, b * band, chunk));
        }
    });
    img
}

/// Worker count from `ARGS_THREADS`, capped by the available parallelism.
pub fn worker_count() -> usize {
    let available = thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("ARGS_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        Some(cap) if cap >= 1 => cap.min(available),
        _ => available,
    }
}
