//! Gaussian primitive algebra: covariance assembly, moments, the cross
//! (product) Gaussian and the moment-based merge operator.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Smallest admissible scale component, in scene units.
pub const MIN_SCALE: f64 = 1e-8;

/// Tolerance on the quaternion norm.
pub const QUAT_NORM_TOL: f64 = 1e-6;

/// Condition number above which a covariance sum is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// `(2π)^{3/2}`, the mass of a unit isotropic 3D Gaussian.
pub const TWO_PI_POW_1_5: f64 = 15.749_609_945_722_419;

/// One anisotropic Gaussian primitive.
///
/// `rotation` is a unit quaternion stored as nalgebra's `Quaternion`
/// (`w` is the scalar part). The first three feature values are the
/// degree-0 spherical harmonic coefficients; `sh_rest` carries any higher
/// order coefficients untouched except for merge fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian3D {
    pub center: Vector3<f64>,
    pub opacity: f64,
    pub scale: Vector3<f64>,
    pub rotation: Quaternion<f64>,
    pub sh_dc: [f64; 3],
    pub sh_rest: Vec<f64>,
}

impl Gaussian3D {
    /// Axis-aligned isotropic Gaussian with zero color features.
    pub fn isotropic(center: Vector3<f64>, opacity: f64, sigma: f64) -> Self {
        Self {
            center,
            opacity,
            scale: Vector3::repeat(sigma),
            rotation: Quaternion::identity(),
            sh_dc: [0.0; 3],
            sh_rest: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.opacity > 0.0 && self.opacity <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "opacity {} outside (0, 1]",
                self.opacity
            )));
        }
        if self.scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "scale {:?} must be positive",
                self.scale.as_slice()
            )));
        }
        if (self.rotation.norm() - 1.0).abs() > QUAT_NORM_TOL {
            return Err(Error::InvalidParameter(format!(
                "rotation quaternion norm {} is not 1",
                self.rotation.norm()
            )));
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite center".into()));
        }
        Ok(())
    }

    /// Applies the ingestion policy: floors scales at [`MIN_SCALE`],
    /// normalizes the quaternion when it is off by more than the norm
    /// tolerance and flips it to `w >= 0`.
    pub fn sanitized(mut self) -> Self {
        for s in self.scale.iter_mut() {
            if !(*s >= MIN_SCALE) {
                *s = MIN_SCALE;
            }
        }
        let norm = self.rotation.norm();
        if norm > 0.0 && (norm - 1.0).abs() > QUAT_NORM_TOL {
            self.rotation /= norm;
        } else if norm == 0.0 {
            self.rotation = Quaternion::identity();
        }
        self.rotation = canonical_quaternion(self.rotation);
        self
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        covariance_unchecked(&self.scale, &self.rotation)
    }

    /// Inverse covariance assembled from the factors, `R diag(1/s²) Rᵀ`.
    pub fn precision(&self) -> Matrix3<f64> {
        let inv = self.scale.map(|s| 1.0 / s);
        covariance_unchecked(&inv, &self.rotation)
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bits_eq(&self, other: &Self) -> bool {
        fn same(a: &[f64], b: &[f64]) -> bool {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        }
        same(self.center.as_slice(), other.center.as_slice())
            && self.opacity.to_bits() == other.opacity.to_bits()
            && same(self.scale.as_slice(), other.scale.as_slice())
            && same(self.rotation.coords.as_slice(), other.rotation.coords.as_slice())
            && same(&self.sh_dc, &other.sh_dc)
            && same(&self.sh_rest, &other.sh_rest)
    }
}

/// Zeroth and first moments of a Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSummary {
    pub m0: f64,
    pub m1: Vector3<f64>,
}

/// Product-of-Gaussians term accounting for the overlap of two primitives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossGaussian {
    pub center: Vector3<f64>,
    pub opacity: f64,
    pub cov: Matrix3<f64>,
}

impl CrossGaussian {
    pub fn moments(&self) -> MomentSummary {
        let m0 = self.opacity * TWO_PI_POW_1_5 * self.cov.determinant().max(0.0).sqrt();
        MomentSummary {
            m0,
            m1: self.center * m0,
        }
    }
}

/// Rotation matrix of a (normalized) quaternion.
pub fn rotation_matrix(q: &Quaternion<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// `Σ = R diag(scale²) Rᵀ` with an exactly symmetric result.
pub fn covariance(scale: &Vector3<f64>, rotation: &Quaternion<f64>) -> Result<Matrix3<f64>> {
    if scale.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "scale {:?} must be positive",
            scale.as_slice()
        )));
    }
    if (rotation.norm() - 1.0).abs() > QUAT_NORM_TOL {
        return Err(Error::InvalidParameter(format!(
            "rotation quaternion norm {} is not 1",
            rotation.norm()
        )));
    }
    Ok(covariance_unchecked(scale, rotation))
}

fn covariance_unchecked(scale: &Vector3<f64>, rotation: &Quaternion<f64>) -> Matrix3<f64> {
    let r = rotation_matrix(rotation);
    let m = r * Matrix3::from_diagonal(scale);
    let mut cov = Matrix3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let v = m[(i, 0)] * m[(j, 0)] + m[(i, 1)] * m[(j, 1)] + m[(i, 2)] * m[(j, 2)];
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

/// Covariance determinant, `(sx·sy·sz)²`.
pub fn det_cov(g: &Gaussian3D) -> f64 {
    let p = g.scale.x * g.scale.y * g.scale.z;
    p * p
}

pub fn moments(g: &Gaussian3D) -> MomentSummary {
    let m0 = g.opacity * TWO_PI_POW_1_5 * (g.scale.x * g.scale.y * g.scale.z);
    MomentSummary {
        m0,
        m1: g.center * m0,
    }
}

/// Symmetric 3×3 inverse via the adjugate; fails when the matrix is
/// numerically singular.
pub(crate) fn symmetric_inverse(a: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let c00 = a[(1, 1)] * a[(2, 2)] - a[(1, 2)] * a[(2, 1)];
    let c01 = a[(1, 2)] * a[(2, 0)] - a[(1, 0)] * a[(2, 2)];
    let c02 = a[(1, 0)] * a[(2, 1)] - a[(1, 1)] * a[(2, 0)];
    let c11 = a[(0, 0)] * a[(2, 2)] - a[(0, 2)] * a[(2, 0)];
    let c12 = a[(0, 1)] * a[(2, 0)] - a[(0, 0)] * a[(2, 1)];
    let c22 = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    let det = a[(0, 0)] * c00 + a[(0, 1)] * c01 + a[(0, 2)] * c02;
    if !(det.is_finite() && det > 0.0) {
        return Err(Error::NumericalDegeneracy(format!(
            "matrix determinant {det} is not positive"
        )));
    }
    let inv = Matrix3::new(c00, c01, c02, c01, c11, c12, c02, c12, c22) / det;
    let cond = a.norm() * inv.norm();
    if !(cond <= MAX_CONDITION) {
        return Err(Error::NumericalDegeneracy(format!(
            "condition number {cond:e} exceeds {MAX_CONDITION:e}"
        )));
    }
    Ok(inv)
}

/// `o_c = o1·o2`, `Σ_c = (Σ1⁻¹ + Σ2⁻¹)⁻¹`, `u_c = Σ_c(Σ1⁻¹u1 + Σ2⁻¹u2)`.
pub fn cross_gaussian(g1: &Gaussian3D, g2: &Gaussian3D) -> Result<CrossGaussian> {
    let p1 = g1.precision();
    let p2 = g2.precision();
    let cov = symmetric_inverse(&(p1 + p2))?;
    let center = cov * (p1 * g1.center + p2 * g2.center);
    Ok(CrossGaussian {
        center,
        opacity: g1.opacity * g2.opacity,
        cov,
    })
}

/// Everything the merge operator computes, including intermediates.
#[derive(Debug, Clone)]
pub struct MergeOutcome {
    pub gaussian: Gaussian3D,
    pub moments: MomentSummary,
    pub cross: CrossGaussian,
    /// Merged covariance before it is factored into scale and rotation.
    pub covariance: Matrix3<f64>,
    /// Set when the merged opacity had to be clamped into `(0, 1]`.
    pub opacity_clamped: bool,
}

/// Moment-based merge of two Gaussians. Every arithmetic step is
/// commutative in its two operands, so `merge(a, b)` and `merge(b, a)`
/// agree bit for bit.
pub fn merge(g1: &Gaussian3D, g2: &Gaussian3D) -> Result<(Gaussian3D, MomentSummary)> {
    let out = merge_detailed(g1, g2)?;
    Ok((out.gaussian, out.moments))
}

pub fn merge_detailed(g1: &Gaussian3D, g2: &Gaussian3D) -> Result<MergeOutcome> {
    let cross = cross_gaussian(g1, g2)?;
    let mc = cross.moments();
    let m1 = moments(g1);
    let m2 = moments(g2);

    let m0 = m1.m0 + m2.m0 - mc.m0;
    if !(m0 > 0.0) {
        return Err(Error::DegenerateMerge(m0));
    }
    let first = m1.m1 + m2.m1 - mc.m1;
    let center = first / m0;

    let mut opacity = g1.opacity + g2.opacity - cross.opacity;
    let mut opacity_clamped = false;
    if opacity > 1.0 {
        opacity = 1.0;
        opacity_clamped = true;
    } else if !(opacity > 0.0) {
        opacity = f64::MIN_POSITIVE;
        opacity_clamped = true;
    }

    let covariance = (g1.covariance() * m1.m0 + g2.covariance() * m2.m0) / m0;
    let (scale, rotation) = decompose_covariance(&covariance)?;

    let wsum = m1.m0 + m2.m0;
    let fuse = |a: f64, b: f64| (m1.m0 * a + m2.m0 * b) / wsum;
    let sh_dc = [
        fuse(g1.sh_dc[0], g2.sh_dc[0]),
        fuse(g1.sh_dc[1], g2.sh_dc[1]),
        fuse(g1.sh_dc[2], g2.sh_dc[2]),
    ];
    let rest_len = g1.sh_rest.len().max(g2.sh_rest.len());
    let sh_rest = (0..rest_len)
        .map(|i| {
            fuse(
                g1.sh_rest.get(i).copied().unwrap_or(0.0),
                g2.sh_rest.get(i).copied().unwrap_or(0.0),
            )
        })
        .collect();

    Ok(MergeOutcome {
        gaussian: Gaussian3D {
            center,
            opacity,
            scale,
            rotation,
            sh_dc,
            sh_rest,
        },
        moments: MomentSummary { m0, m1: first },
        cross,
        covariance,
        opacity_clamped,
    })
}

/// Canonical sign for a quaternion: `w > 0`, or for `w == 0` the first
/// nonzero vector component positive. `q` and `-q` map to the same value.
pub fn canonical_quaternion(q: Quaternion<f64>) -> Quaternion<f64> {
    let lead = [q.w, q.i, q.j, q.k]
        .into_iter()
        .find(|c| *c != 0.0)
        .unwrap_or(1.0);
    let q = if lead < 0.0 { -q } else { q };
    // Scrub negative zeros so the representation is unique.
    Quaternion::new(q.w + 0.0, q.i + 0.0, q.j + 0.0, q.k + 0.0)
}

/// Factors a symmetric positive definite covariance into `(scale, rotation)`.
///
/// Eigenvalues are sorted descending, each eigenvector is signed so its
/// largest-magnitude component is positive, the third axis is replaced by
/// the cross product of the first two and the quaternion is taken with
/// `w >= 0`.
pub fn decompose_covariance(cov: &Matrix3<f64>) -> Result<(Vector3<f64>, Quaternion<f64>)> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalDegeneracy("non-finite covariance".into()));
    }
    let eig = cov
        .try_symmetric_eigen(f64::EPSILON, 256)
        .ok_or_else(|| Error::NumericalDegeneracy("eigendecomposition did not converge".into()))?;

    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let signed = |col: usize| -> Vector3<f64> {
        let v: Vector3<f64> = eig.eigenvectors.column(col).into_owned().normalize();
        let mut lead = 0;
        for i in 1..3 {
            if v[i].abs() > v[lead].abs() {
                lead = i;
            }
        }
        if v[lead] < 0.0 {
            -v
        } else {
            v
        }
    };
    let e1 = signed(order[0]);
    let e2 = signed(order[1]);
    let e3 = e1.cross(&e2).normalize();

    let scale = Vector3::new(
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    )
    .map(|l| if l > 0.0 { l.sqrt().max(MIN_SCALE) } else { MIN_SCALE });

    let basis = Matrix3::from_columns(&[e1, e2, e3]);
    let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(basis));
    let q = rot.into_inner();
    let q = q / q.norm();
    Ok((scale, canonical_quaternion(q)))
}
