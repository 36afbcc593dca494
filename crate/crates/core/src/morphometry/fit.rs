//! Least-squares primitive fits and small vector helpers shared by the
//! measurement recipes.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::linalg::svd;
use crate::shape::Point3;

/// Relative singular-value floor used to detect degenerate configurations.
const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereFit {
    pub center: Point3,
    pub radius: f64,
    pub rms_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFit {
    pub point: Point3,
    pub normal: Vector3<f64>,
    pub rms_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleFit3D {
    pub center: Point3,
    pub radius: f64,
    pub plane: PlaneFit,
    pub rms_residual: f64,
}

fn centroid(points: &[Point3]) -> Point3 {
    points.iter().sum::<Point3>() / points.len() as f64
}

/// Algebraic sphere fit: solves `|p|^2 = 2 c.p + k` in the least-squares
/// sense on centroid-shifted points.
pub fn fit_sphere(points: &[Point3]) -> Result<SphereFit> {
    if points.len() < 4 {
        return Err(Error::InsufficientData {
            what: "sphere fit".into(),
            needed: 4,
            got: points.len(),
        });
    }
    let c0 = centroid(points);
    let scale = points.iter().map(|p| (p - c0).norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::Degenerate("sphere fit: coincident points".into()));
    }
    let n = points.len();
    let mut a = DMatrix::zeros(n, 4);
    let mut b = DVector::zeros(n);
    for (i, p) in points.iter().enumerate() {
        let q = (p - c0) / scale;
        a[(i, 0)] = 2.0 * q.x;
        a[(i, 1)] = 2.0 * q.y;
        a[(i, 2)] = 2.0 * q.z;
        a[(i, 3)] = 1.0;
        b[i] = q.norm_squared();
    }
    let f = svd(&a)?;
    if f.smin() <= DEGENERACY_TOL * f.smax() {
        return Err(Error::Degenerate(
            "sphere fit: points are coplanar or collinear".into(),
        ));
    }
    let x = f.solve(&DMatrix::from_column_slice(n, 1, b.as_slice()));
    let c = Vector3::new(x[0], x[1], x[2]);
    let r2 = x[3] + c.norm_squared();
    if r2 <= 0.0 {
        return Err(Error::Degenerate("sphere fit: non-positive radius".into()));
    }
    let center = c0 + c * scale;
    let radius = r2.sqrt() * scale;
    let rms_residual = rms(points.iter().map(|p| (p - center).norm() - radius));
    Ok(SphereFit {
        center,
        radius,
        rms_residual,
    })
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (sum / n as f64).sqrt()
}

/// Flips `v` so its largest-magnitude component is positive.
fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    let i = v.iamax();
    if v[i] < 0.0 {
        -v
    } else {
        v
    }
}

/// Total-least-squares plane through the centroid.
pub fn fit_plane(points: &[Point3]) -> Result<PlaneFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData {
            what: "plane fit".into(),
            needed: 3,
            got: points.len(),
        });
    }
    let c = centroid(points);
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - c;
        scatter += d * d.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[2]];
    if largest <= 0.0 || eig.eigenvalues[order[1]] <= DEGENERACY_TOL * largest {
        return Err(Error::Degenerate("plane fit: points are collinear".into()));
    }
    let normal = canonical_sign(eig.eigenvectors.column(order[0]).normalize());
    let rms_residual = rms(points.iter().map(|p| (p - c).dot(&normal)));
    Ok(PlaneFit {
        point: c,
        normal,
        rms_residual,
    })
}

/// Orthonormal pair spanning the plane with unit normal `n`.
pub fn plane_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let axis = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vector3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let e1 = n.cross(&axis).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

/// Plane fit, projection into the plane, then the algebraic (Kasa) circle
/// fit in 2D; the centre is lifted back onto the plane.
pub fn fit_circle3d(points: &[Point3]) -> Result<CircleFit3D> {
    let plane = fit_plane(points)?;
    let (e1, e2) = plane_basis(&plane.normal);
    let uv: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let d = p - plane.point;
            (d.dot(&e1), d.dot(&e2))
        })
        .collect();
    let scale = uv
        .iter()
        .map(|(u, v)| u.hypot(*v))
        .fold(0.0, f64::max);
    let n = points.len();
    let mut a = DMatrix::zeros(n, 3);
    let mut b = DVector::zeros(n);
    for (i, (u, v)) in uv.iter().enumerate() {
        let (u, v) = (u / scale, v / scale);
        a[(i, 0)] = 2.0 * u;
        a[(i, 1)] = 2.0 * v;
        a[(i, 2)] = 1.0;
        b[i] = u * u + v * v;
    }
    let f = svd(&a)?;
    if f.smin() <= DEGENERACY_TOL * f.smax() {
        return Err(Error::Degenerate("circle fit: points are collinear".into()));
    }
    let x = f.solve(&DMatrix::from_column_slice(n, 1, b.as_slice()));
    let r2 = x[2] + x[0] * x[0] + x[1] * x[1];
    if r2 <= 0.0 {
        return Err(Error::Degenerate("circle fit: non-positive radius".into()));
    }
    let (cu, cv) = (x[0] * scale, x[1] * scale);
    let radius = r2.sqrt() * scale;
    let center = plane.point + e1 * cu + e2 * cv;
    let rms_residual = rms(uv.iter().map(|(u, v)| (u - cu).hypot(v - cv) - radius));
    Ok(CircleFit3D {
        center,
        radius,
        plane,
        rms_residual,
    })
}

/// Unsigned angle in degrees, in `[0, 180]`.
pub fn angle_deg(u: &Vector3<f64>, v: &Vector3<f64>) -> Result<f64> {
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(Error::Degenerate("angle of a zero-length vector".into()));
    }
    Ok((u.dot(v) / (nu * nv)).clamp(-1.0, 1.0).acos().to_degrees())
}

/// Angle in degrees from `from` to `to`, positive when counter-clockwise
/// about `axis`. Both vectors should already lie in the plane normal to
/// `axis`.
pub fn signed_angle_deg(from: &Vector3<f64>, to: &Vector3<f64>, axis: &Vector3<f64>) -> Result<f64> {
    if from.norm() == 0.0 || to.norm() == 0.0 {
        return Err(Error::Degenerate("angle of a zero-length vector".into()));
    }
    let sin = from.cross(to).dot(&axis.normalize());
    let cos = from.dot(to);
    Ok(sin.atan2(cos).to_degrees())
}

/// `v - (v.n) n` for unit `normal`.
pub fn project_onto_plane(v: &Vector3<f64>, normal: &Vector3<f64>) -> Vector3<f64> {
    v - normal * v.dot(normal)
}

#[cfg(test)]
mod tests {
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use super::*;

    fn sphere_points(center: Point3, r: f64) -> Vec<Point3> {
        let mut pts = vec![center + Vector3::new(0.0, 0.0, r)];
        for (polar, az0) in [(45.0f64, 0.0f64), (90.0, 45.0)] {
            for k in 0..4 {
                let (t, p) = (polar.to_radians(), (az0 + 90.0 * k as f64).to_radians());
                pts.push(center + r * Vector3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos()));
            }
        }
        pts
    }

    #[test]
    fn sphere_exact_nine_points() {
        let c = Point3::new(1.0, 2.0, 3.0);
        let f = fit_sphere(&sphere_points(c, 5.0)).unwrap();
        assert!((f.center - c).norm() < 1e-9);
        assert!((f.radius - 5.0).abs() < 1e-9);
        assert!(f.rms_residual < 1e-9);
    }

    #[test]
    fn sphere_regular_tetrahedron() {
        let s = 1.0 / 3f64.sqrt();
        let pts = vec![
            Point3::new(s, s, s),
            Point3::new(s, -s, -s),
            Point3::new(-s, s, -s),
            Point3::new(-s, -s, s),
        ];
        let f = fit_sphere(&pts).unwrap();
        assert!(f.center.norm() < 1e-12);
        assert!((f.radius - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_rejects_coplanar() {
        let pts: Vec<_> = (0..8)
            .map(|k| {
                let a = k as f64 * 0.7;
                Point3::new(a.cos(), a.sin(), 0.0)
            })
            .collect();
        assert!(matches!(fit_sphere(&pts), Err(Error::Degenerate(_))));
        assert!(fit_sphere(&pts[..3]).is_err());
    }

    /// Gauss-Newton on the geometric residuals `|p - c| - r`.
    fn geometric_sphere(points: &[Point3], mut c: Point3, mut r: f64) -> (Point3, f64) {
        for _ in 0..50 {
            let mut jtj = nalgebra::Matrix4::<f64>::zeros();
            let mut jtr = nalgebra::Vector4::<f64>::zeros();
            for p in points {
                let d = p - c;
                let dist = d.norm();
                let res = dist - r;
                let g = nalgebra::Vector4::new(-d.x / dist, -d.y / dist, -d.z / dist, -1.0);
                jtj += g * g.transpose();
                jtr += g * res;
            }
            let step = jtj.lu().solve(&(-jtr)).unwrap();
            c += Vector3::new(step[0], step[1], step[2]);
            r += step[3];
        }
        (c, r)
    }

    #[test]
    fn noisy_sphere_agrees_with_geometric_refit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let c = Point3::new(-4.0, 10.0, 2.0);
        let pts: Vec<_> = sphere_points(c, 26.0)
            .into_iter()
            .map(|p| p + Vector3::from_fn(|_, _| noise.sample(&mut rng)))
            .collect();
        let f = fit_sphere(&pts).unwrap();
        let (gc, gr) = geometric_sphere(&pts, c + Vector3::new(1.0, -1.0, 0.5), 20.0);
        assert!((f.center - gc).norm() < 0.05, "{} vs {}", f.center, gc);
        assert!((f.radius - gr).abs() < 0.05);
    }

    #[test]
    fn sphere_parameters_are_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let noise = Normal::new(0.0, 0.2).unwrap();
        let pts: Vec<_> = sphere_points(Point3::new(0.5, 0.0, -1.0), 12.0)
            .into_iter()
            .map(|p| p + Vector3::from_fn(|_, _| noise.sample(&mut rng)))
            .collect();
        let f = fit_sphere(&pts).unwrap();
        // the algebraic objective the fit minimises
        let objective = |c: Point3, r: f64| -> f64 {
            pts.iter()
                .map(|p| ((p - c).norm_squared() - r * r).powi(2))
                .sum()
        };
        let best = objective(f.center, f.radius);
        for axis in 0..4 {
            for sign in [-1.0, 1.0] {
                let mut c = f.center;
                let mut r = f.radius;
                if axis < 3 {
                    c[axis] += sign * 1e-4;
                } else {
                    r += sign * 1e-4;
                }
                assert!(objective(c, r) >= best * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn plane_axis_aligned() {
        let pts = vec![
            Point3::new(0.0, 0.0, 2.0),
            Point3::new(1.0, 0.0, 2.0),
            Point3::new(0.0, 3.0, 2.0),
            Point3::new(-2.0, 1.0, 2.0),
        ];
        let f = fit_plane(&pts).unwrap();
        assert!((f.normal - Vector3::z()).norm() < 1e-12);
        assert!((f.point.z - 2.0).abs() < 1e-12);
        assert!(f.rms_residual < 1e-12);
    }

    #[test]
    fn plane_three_points_exact() {
        let pts = vec![
            Point3::new(1.0, 0.3, 2.0),
            Point3::new(-1.0, 4.0, 0.0),
            Point3::new(2.0, -3.0, 1.0),
        ];
        let f = fit_plane(&pts).unwrap();
        assert!(f.rms_residual < 1e-12);
        assert!((f.normal.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plane_rejects_collinear() {
        let pts: Vec<_> = (0..5).map(|k| Point3::new(k as f64, 2.0 * k as f64, 1.0)).collect();
        assert!(matches!(fit_plane(&pts), Err(Error::Degenerate(_))));
    }

    #[test]
    fn plane_beats_random_normals() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let n_true = Vector3::new(0.2, -0.4, 0.9).normalize();
        let (e1, e2) = plane_basis(&n_true);
        let pts: Vec<Point3> = (0..40)
            .map(|_| {
                let u: f64 = rng.random_range(-10.0..10.0);
                let v: f64 = rng.random_range(-10.0..10.0);
                e1 * u + e2 * v + n_true * noise.sample(&mut rng)
            })
            .collect();
        let f = fit_plane(&pts).unwrap();
        let c = centroid(&pts);
        let objective = |n: &Vector3<f64>| -> f64 {
            (pts.iter().map(|p| (p - c).dot(n).powi(2)).sum::<f64>() / pts.len() as f64).sqrt()
        };
        assert!((objective(&f.normal) - f.rms_residual).abs() < 1e-12);
        for _ in 0..10_000 {
            let n = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if n.norm() < 1e-3 {
                continue;
            }
            assert!(objective(&n.normalize()) >= f.rms_residual - 1e-12);
        }
    }

    fn circle_points(center: Point3, normal: Vector3<f64>, r: f64, angles: &[f64]) -> Vec<Point3> {
        let (e1, e2) = plane_basis(&normal.normalize());
        angles
            .iter()
            .map(|a| center + r * (e1 * a.to_radians().cos() + e2 * a.to_radians().sin()))
            .collect()
    }

    #[test]
    fn circle_exact_tilted() {
        let c = Point3::new(10.0, -3.0, 7.0);
        let n = Vector3::new(0.3, 0.5, 0.8);
        let angles: Vec<f64> = (0..8).map(|k| 100.0 + 22.5 * k as f64).collect();
        let f = fit_circle3d(&circle_points(c, n, 14.3, &angles)).unwrap();
        assert!((f.radius - 14.3).abs() < 1e-9);
        assert!((f.center - c).norm() < 1e-9);
        assert!((f.center - f.plane.point).dot(&f.plane.normal).abs() < 1e-9);
    }

    #[test]
    fn circle_three_points_is_circumcircle() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(4.0, 0.0, 0.0);
        let c = Point3::new(0.0, 3.0, 0.0);
        let f = fit_circle3d(&[a, b, c]).unwrap();
        // right triangle: hypotenuse is a diameter
        assert!((f.radius - 2.5).abs() < 1e-12);
        assert!((f.center - Point3::new(2.0, 1.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn circle_rejects_collinear() {
        let pts: Vec<_> = (0..4).map(|k| Point3::new(k as f64, 0.0, 0.0)).collect();
        assert!(matches!(fit_circle3d(&pts), Err(Error::Degenerate(_))));
    }

    /// Kasa fit by 3x3 normal equations in the test's own plane basis.
    #[test]
    fn noisy_circle_matches_independent_kasa() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let noise = Normal::new(0.0, 0.2).unwrap();
        let n = Vector3::new(-0.4, 0.1, 0.7);
        let angles: Vec<f64> = (0..16).map(|k| 90.0 + 11.25 * k as f64).collect();
        let pts: Vec<Point3> = circle_points(Point3::new(3.0, 1.0, -2.0), n, 15.0, &angles)
            .into_iter()
            .map(|p| p + Vector3::from_fn(|_, _| noise.sample(&mut rng)))
            .collect();
        let f = fit_circle3d(&pts).unwrap();

        let plane = fit_plane(&pts).unwrap();
        let nn = plane.normal;
        let helper = if nn.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
        let u_axis = helper.cross(&nn).normalize();
        let v_axis = nn.cross(&u_axis);
        let (mut m, mut rhs) = (nalgebra::Matrix3::<f64>::zeros(), Vector3::<f64>::zeros());
        for p in &pts {
            let d = p - plane.point;
            let (u, v) = (d.dot(&u_axis), d.dot(&v_axis));
            let row = Vector3::new(u, v, 1.0);
            m += row * row.transpose();
            rhs += row * (u * u + v * v);
        }
        let sol = m.lu().solve(&rhs).unwrap();
        let (cu, cv) = (sol[0] / 2.0, sol[1] / 2.0);
        let r = (sol[2] + cu * cu + cv * cv).sqrt();
        let center = plane.point + u_axis * cu + v_axis * cv;
        assert!((f.radius - r).abs() < 1e-9);
        assert!((f.center - center).norm() < 1e-9);
    }

    #[test]
    fn angles() {
        let x = Vector3::x();
        assert!((angle_deg(&x, &Vector3::y()).unwrap() - 90.0).abs() < 1e-12);
        assert_eq!(angle_deg(&x, &x).unwrap(), 0.0);
        assert!((angle_deg(&Vector3::new(1.0, 1.0, 0.0), &x).unwrap() - 45.0).abs() < 1e-12);
        assert!(angle_deg(&Vector3::zeros(), &x).is_err());
        let s = signed_angle_deg(&x, &Vector3::new(1.0, 1.0, 0.0), &Vector3::z()).unwrap();
        assert!((s - 45.0).abs() < 1e-12);
        let s = signed_angle_deg(&x, &Vector3::new(1.0, -1.0, 0.0), &Vector3::z()).unwrap();
        assert!((s + 45.0).abs() < 1e-12);
    }

    #[test]
    fn projection_onto_plane() {
        let n = Vector3::new(1.0, 2.0, 2.0).normalize();
        assert!(project_onto_plane(&(n * 3.0), &n).norm() < 1e-12);
        let perp = Vector3::new(2.0, -1.0, 0.0);
        assert!((project_onto_plane(&perp, &n) - perp).norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..100 {
            let v = Vector3::from_fn(|_, _| rng.random_range(-10.0..10.0));
            let axis = Unit::new_normalize(Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)));
            let r = Rotation3::from_axis_angle(&axis, 1.0);
            let nn = r * n;
            assert!(project_onto_plane(&v, &nn).dot(&nn).abs() < 1e-12);
        }
    }
}
