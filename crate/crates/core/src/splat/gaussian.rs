use nalgebra::{Matrix3, Vector3, Vector4};

/// Logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse of [`sigmoid`].
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// One scene primitive.
///
/// Axis lengths are `exp(log_scale)` in world units, `rotation` is a
/// `(w, x, y, z)` quaternion and the opacity is `sigmoid(opacity_logit)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: [f64; 3],
    pub log_scale: [f64; 3],
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    pub albedo: [f64; 3],
}

/// Number of scalar parameters per primitive.
pub const GAUSSIAN_FIELDS: usize = 14;

impl Gaussian {
    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn mean(&self) -> Vector3<f64> {
        Vector3::from(self.mean)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        quaternion_to_matrix(&normalized(&Vector4::from(self.rotation)))
    }

    /// `R diag(exp(2 log_scale)) Rᵀ`.
    pub fn covariance(&self) -> Matrix3<f64> {
        let m = self.rotation_matrix() * Matrix3::from_diagonal(&self.scales());
        m * m.transpose()
    }

    pub fn scales(&self) -> Vector3<f64> {
        Vector3::from(self.log_scale).map(f64::exp)
    }

    pub fn normalize_rotation(&mut self) {
        let q = normalized(&Vector4::from(self.rotation));
        self.rotation = [q[0], q[1], q[2], q[3]];
    }

    /// Field order: mean, log_scale, rotation, opacity_logit, albedo.
    pub fn to_array(&self) -> [f64; GAUSSIAN_FIELDS] {
        let mut a = [0.0; GAUSSIAN_FIELDS];
        a[0..3].copy_from_slice(&self.mean);
        a[3..6].copy_from_slice(&self.log_scale);
        a[6..10].copy_from_slice(&self.rotation);
        a[10] = self.opacity_logit;
        a[11..14].copy_from_slice(&self.albedo);
        a
    }

    pub fn from_array(a: &[f64; GAUSSIAN_FIELDS]) -> Self {
        Self {
            mean: [a[0], a[1], a[2]],
            log_scale: [a[3], a[4], a[5]],
            rotation: [a[6], a[7], a[8], a[9]],
            opacity_logit: a[10],
            albedo: [a[11], a[12], a[13]],
        }
    }
}

/// Gradient of a scalar with respect to every [`Gaussian`] field.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GaussianGrad {
    pub mean: [f64; 3],
    pub log_scale: [f64; 3],
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    pub albedo: [f64; 3],
}

impl GaussianGrad {
    pub fn to_array(&self) -> [f64; GAUSSIAN_FIELDS] {
        let mut a = [0.0; GAUSSIAN_FIELDS];
        a[0..3].copy_from_slice(&self.mean);
        a[3..6].copy_from_slice(&self.log_scale);
        a[6..10].copy_from_slice(&self.rotation);
        a[10] = self.opacity_logit;
        a[11..14].copy_from_slice(&self.albedo);
        a
    }

    pub fn add_assign(&mut self, o: &GaussianGrad) {
        for i in 0..3 {
            self.mean[i] += o.mean[i];
            self.log_scale[i] += o.log_scale[i];
            self.albedo[i] += o.albedo[i];
        }
        for i in 0..4 {
            self.rotation[i] += o.rotation[i];
        }
        self.opacity_logit += o.opacity_logit;
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

pub(crate) fn normalized(q: &Vector4<f64>) -> Vector4<f64> {
    let n = q.norm();
    if n > 0.0 {
        q / n
    } else {
        Vector4::new(1.0, 0.0, 0.0, 0.0)
    }
}

/// Rotation matrix of a unit `(w, x, y, z)` quaternion.
pub(crate) fn quaternion_to_matrix(q: &Vector4<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
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

/// Pulls a gradient on the rotation matrix back to the raw quaternion,
/// through the normalization.
pub(crate) fn quaternion_backward(raw: &Vector4<f64>, d_r: &Matrix3<f64>) -> Vector4<f64> {
    let n = raw.norm();
    let q = normalized(raw);
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let g = |r: usize, c: usize| d_r[(r, c)];
    let dw = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let dx = 2.0
        * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2)
            + z * g(2, 0)
            + w * g(2, 1)
            - 2.0 * x * g(2, 2));
    let dy = 2.0
        * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2)
            - w * g(2, 0)
            + z * g(2, 1)
            - 2.0 * y * g(2, 2));
    let dz = 2.0
        * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1)
            + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1));
    let dq = Vector4::new(dw, dx, dy, dz);
    if n > 0.0 {
        (dq - q * q.dot(&dq)) / n
    } else {
        dq
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn base() -> Gaussian {
        Gaussian {
            mean: [0.0; 3],
            log_scale: [0.0; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: 0.0,
            albedo: [1.0; 3],
        }
    }

    #[test]
    fn unit_scales_give_identity_covariance() {
        assert!((base().covariance() - Matrix3::identity()).norm() < 1e-15);
    }

    #[test]
    fn scale_ln2_squares_to_four() {
        let mut g = base();
        g.log_scale = [std::f64::consts::LN_2, 0.0, 0.0];
        let expected = Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0));
        assert!((g.covariance() - expected).norm() < 1e-14);
    }

    #[test]
    fn random_rotation_keeps_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mut g = base();
            g.log_scale = [rng.random_range(-2.0..1.0), rng.random_range(-2.0..1.0), rng.random_range(-2.0..1.0)];
            g.rotation = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let cov = g.covariance();
            assert!((cov - cov.transpose()).norm() < 1e-14);
            let mut eig: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
            let mut want: Vec<f64> = g.log_scale.iter().map(|s| (2.0 * s).exp()).collect();
            eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
            want.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (a, b) in eig.iter().zip(&want) {
                assert!(*a > 0.0);
                assert!((a - b).abs() < 1e-10 * b.max(1.0));
            }
        }
    }

    #[test]
    fn quaternion_backward_matches_finite_differences() {
        let raw = Vector4::new(0.7, -0.3, 0.5, 0.2);
        let weights = Matrix3::new(0.3, -1.2, 0.4, 2.0, 0.1, -0.7, 0.5, 0.9, -0.2);
        let f = |q: &Vector4<f64>| quaternion_to_matrix(&normalized(q)).component_mul(&weights).sum();
        let analytic = quaternion_backward(&raw, &weights);
        for i in 0..4 {
            let h = 1e-6;
            let mut p = raw;
            let mut m = raw;
            p[i] += h;
            m[i] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            assert!((fd - analytic[i]).abs() < 1e-7, "component {i}: {fd} vs {}", analytic[i]);
        }
    }

    #[test]
    fn array_round_trip() {
        let g = Gaussian {
            mean: [1.0, 2.0, 3.0],
            log_scale: [4.0, 5.0, 6.0],
            rotation: [7.0, 8.0, 9.0, 10.0],
            opacity_logit: 11.0,
            albedo: [12.0, 13.0, 14.0],
        };
        assert_eq!(Gaussian::from_array(&g.to_array()), g);
    }
}
