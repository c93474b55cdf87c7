//! Rational-arithmetic reference for the Gaussian algebra. Inputs are the
//! exact binary values of the f64 fields; only square roots leave the
//! rationals.

use nalgebra::{Matrix3, Vector3};
use num::{BigRational, One, ToPrimitive, Zero};

use splat_lod::Gaussian3D;

pub type R = BigRational;

fn r(v: f64) -> R {
    BigRational::from_float(v).expect("finite input")
}

pub fn to_f64(v: &R) -> f64 {
    v.to_f64().expect("representable")
}

#[derive(Clone, Debug)]
pub struct RMat(pub [[R; 3]; 3]);

#[derive(Clone, Debug)]
pub struct RVec(pub [R; 3]);

impl RMat {
    pub fn zero() -> Self {
        RMat(std::array::from_fn(|_| std::array::from_fn(|_| R::zero())))
    }

    pub fn mul(&self, o: &RMat) -> RMat {
        let mut m = RMat::zero();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = R::zero();
                for k in 0..3 {
                    s += &self.0[i][k] * &o.0[k][j];
                }
                m.0[i][j] = s;
            }
        }
        m
    }

    pub fn transpose(&self) -> RMat {
        RMat(std::array::from_fn(|i| std::array::from_fn(|j| self.0[j][i].clone())))
    }

    pub fn add(&self, o: &RMat) -> RMat {
        RMat(std::array::from_fn(|i| {
            std::array::from_fn(|j| &self.0[i][j] + &o.0[i][j])
        }))
    }

    pub fn scale(&self, s: &R) -> RMat {
        RMat(std::array::from_fn(|i| std::array::from_fn(|j| &self.0[i][j] * s)))
    }

    pub fn apply(&self, v: &RVec) -> RVec {
        RVec(std::array::from_fn(|i| {
            let mut s = R::zero();
            for k in 0..3 {
                s += &self.0[i][k] * &v.0[k];
            }
            s
        }))
    }

    pub fn det(&self) -> R {
        let a = &self.0;
        &a[0][0] * (&a[1][1] * &a[2][2] - &a[1][2] * &a[2][1])
            - &a[0][1] * (&a[1][0] * &a[2][2] - &a[1][2] * &a[2][0])
            + &a[0][2] * (&a[1][0] * &a[2][1] - &a[1][1] * &a[2][0])
    }

    /// Gauss-Jordan elimination with pivot search.
    pub fn inverse(&self) -> RMat {
        let mut a = self.0.clone();
        let mut inv = RMat::zero().0;
        for (i, row) in inv.iter_mut().enumerate() {
            row[i] = R::one();
        }
        for col in 0..3 {
            let p = (col..3).find(|&k| !a[k][col].is_zero()).expect("singular");
            a.swap(col, p);
            inv.swap(col, p);
            let d = a[col][col].clone();
            for j in 0..3 {
                a[col][j] = &a[col][j] / &d;
                inv[col][j] = &inv[col][j] / &d;
            }
            for k in 0..3 {
                if k != col && !a[k][col].is_zero() {
                    let factor = a[k][col].clone();
                    for j in 0..3 {
                        let t = &factor * &a[col][j];
                        a[k][j] -= t;
                        let t = &factor * &inv[col][j];
                        inv[k][j] -= t;
                    }
                }
            }
        }
        RMat(inv)
    }

    pub fn to_f64(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| to_f64(&self.0[i][j]))
    }
}

impl RVec {
    pub fn from_f64(v: &Vector3<f64>) -> Self {
        RVec(std::array::from_fn(|i| r(v[i])))
    }

    pub fn add(&self, o: &RVec) -> RVec {
        RVec(std::array::from_fn(|i| &self.0[i] + &o.0[i]))
    }

    pub fn to_f64(&self) -> Vector3<f64> {
        Vector3::from_fn(|i, _| to_f64(&self.0[i]))
    }
}

/// `R diag(s²) Rᵀ` for the stored quaternion, read as a rotation without
/// renormalizing.
pub fn covariance(g: &Gaussian3D) -> RMat {
    let (w, x, y, z) = (
        r(g.rotation.w),
        r(g.rotation.i),
        r(g.rotation.j),
        r(g.rotation.k),
    );
    let one = R::one();
    let two = &one + &one;
    let rot = RMat([
        [
            &one - &two * (&y * &y + &z * &z),
            &two * (&x * &y - &w * &z),
            &two * (&x * &z + &w * &y),
        ],
        [
            &two * (&x * &y + &w * &z),
            &one - &two * (&x * &x + &z * &z),
            &two * (&y * &z - &w * &x),
        ],
        [
            &two * (&x * &z - &w * &y),
            &two * (&y * &z + &w * &x),
            &one - &two * (&x * &x + &y * &y),
        ],
    ]);
    let mut d = RMat::zero();
    for i in 0..3 {
        let s = r(g.scale[i]);
        d.0[i][i] = &s * &s;
    }
    rot.mul(&d).mul(&rot.transpose())
}

/// Covariance and center of the product Gaussian.
pub fn cross(g1: &Gaussian3D, g2: &Gaussian3D) -> (RMat, RVec) {
    let p1 = covariance(g1).inverse();
    let p2 = covariance(g2).inverse();
    let cov = p1.add(&p2).inverse();
    let rhs = p1
        .apply(&RVec::from_f64(&g1.center))
        .add(&p2.apply(&RVec::from_f64(&g2.center)));
    let center = cov.apply(&rhs);
    (cov, center)
}

pub struct MergeRef {
    pub center: Vector3<f64>,
    /// Unclamped merged opacity.
    pub opacity: f64,
    pub m0: f64,
    pub cov: Matrix3<f64>,
    /// DC then higher-order coefficients.
    pub features: Vec<f64>,
}

fn mass(opacity: &R, det: &R) -> f64 {
    to_f64(opacity) * (2.0 * std::f64::consts::PI).powf(1.5) * to_f64(det).sqrt()
}

pub fn merge(g1: &Gaussian3D, g2: &Gaussian3D) -> MergeRef {
    let c1 = covariance(g1);
    let c2 = covariance(g2);
    let (cc, uc) = cross(g1, g2);
    let (o1, o2) = (r(g1.opacity), r(g2.opacity));
    let oc = &o1 * &o2;
    let m01 = mass(&o1, &c1.det());
    let m02 = mass(&o2, &c2.det());
    let m0c = mass(&oc, &cc.det());
    let m0 = m01 + m02 - m0c;

    let u1 = g1.center;
    let u2 = g2.center;
    let first = u1 * m01 + u2 * m02 - uc.to_f64() * m0c;
    let center = first / m0;

    let cov = (c1.to_f64() * m01 + c2.to_f64() * m02) / m0;

    let n = g1.sh_rest.len().max(g2.sh_rest.len());
    let feat = |g: &Gaussian3D| -> Vec<f64> {
        let mut v = g.sh_dc.to_vec();
        v.extend((0..n).map(|i| g.sh_rest.get(i).copied().unwrap_or(0.0)));
        v
    };
    let features = feat(g1)
        .into_iter()
        .zip(feat(g2))
        .map(|(a, b)| (m01 * a + m02 * b) / (m01 + m02))
        .collect();

    MergeRef {
        center,
        opacity: to_f64(&(&o1 + &o2 - &oc)),
        m0,
        cov,
        features,
    }
}
