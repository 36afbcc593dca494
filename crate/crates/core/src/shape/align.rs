use nalgebra::{DMatrix, DVector, Matrix3};

use super::{Point3, ShapeDataset, ShapeVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AlignOptions {
    /// Stop once the relative decrease of the objective falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AlignOptions {
    fn default() -> Self {
        AlignOptions {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Alignment {
    pub dataset: ShapeDataset,
    /// Sum of squared distances to the mean, one entry per iteration
    /// (entry 0 is the centred but unrotated dataset).
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Sum over shapes of the squared distance to the dataset mean.
pub fn procrustes_objective(dataset: &ShapeDataset) -> f64 {
    let mean = mean_coords(dataset.shapes());
    dataset
        .shapes()
        .iter()
        .map(|s| (s.coords() - &mean).norm_squared())
        .sum()
}

fn mean_coords(shapes: &[ShapeVector]) -> DVector<f64> {
    let mut mean = DVector::zeros(shapes[0].coords().len());
    for s in shapes {
        mean += s.coords();
    }
    mean / shapes.len() as f64
}

fn centred(points: &[Point3]) -> Vec<Point3> {
    let c = points.iter().sum::<Point3>() / points.len() as f64;
    points.iter().map(|p| p - c).collect()
}

/// Rotation `R` minimising `sum |R x_k - y_k|^2` over proper rotations,
/// both sets already centred.
fn kabsch(x: &[Point3], y: &[Point3]) -> Matrix3<f64> {
    let mut h = Matrix3::zeros();
    for (a, b) in x.iter().zip(y) {
        h += a * b.transpose();
    }
    let f = crate::linalg::svd(&DMatrix::from_fn(3, 3, |i, j| h[(i, j)])).expect("finite 3x3 matrix");
    let u = Matrix3::from_fn(|i, j| f.u[(i, j)]);
    let v = Matrix3::from_fn(|i, j| f.v_t[(j, i)]);
    let d = (v * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, d));
    v * correction * u.transpose()
}

/// Generalized rigid (rotation + translation, no scaling) alignment of a
/// dataset onto its iteratively re-estimated mean shape.
pub fn rigid_align(dataset: &ShapeDataset, opts: AlignOptions) -> Result<Alignment> {
    let mut shapes: Vec<Vec<Point3>> = Vec::with_capacity(dataset.len());
    for (s, name) in dataset.shapes().iter().zip(dataset.names()) {
        let pts = centred(&s.points());
        let spread: f64 = pts.iter().map(|p| p.norm_squared()).sum();
        if spread <= f64::EPSILON * f64::EPSILON {
            return Err(Error::Degenerate(format!(
                "shape `{name}`: all points coincident"
            )));
        }
        shapes.push(pts);
    }

    let to_dataset = |shapes: &[Vec<Point3>]| {
        dataset.with_shapes(shapes.iter().map(|p| ShapeVector::from_points(p)).collect())
    };

    let mut objective = vec![procrustes_objective(&to_dataset(&shapes))];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let n = shapes.len() as f64;
        let n_pts = shapes[0].len();
        let mean: Vec<Point3> = (0..n_pts)
            .map(|k| shapes.iter().map(|s| s[k]).sum::<Point3>() / n)
            .collect();
        for s in shapes.iter_mut() {
            let r = kabsch(s, &mean);
            for p in s.iter_mut() {
                *p = r * *p;
            }
        }
        let current = procrustes_objective(&to_dataset(&shapes));
        let previous = *objective.last().unwrap();
        objective.push(current);
        let scale = previous.max(f64::MIN_POSITIVE);
        if (previous - current) / scale < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(Alignment {
        dataset: to_dataset(&shapes),
        objective,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::shape::Topology;

    fn dataset(shapes: Vec<Vec<Point3>>) -> ShapeDataset {
        let n = shapes[0].len();
        let topo = Arc::new(Topology::new("t", n, vec![]).unwrap());
        let names = (0..shapes.len()).map(|i| i.to_string()).collect();
        ShapeDataset::new(
            topo,
            shapes.iter().map(|p| ShapeVector::from_points(p)).collect(),
            names,
        )
        .unwrap()
    }

    fn base_points() -> Vec<Point3> {
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(10.0, 1.0, 0.0),
            Point3::new(2.0, 7.0, 1.0),
            Point3::new(1.0, 2.0, 9.0),
            Point3::new(-3.0, 4.0, 2.0),
        ]
    }

    fn max_pair_gap(d: &ShapeDataset) -> f64 {
        let a = d.shapes()[0].coords();
        d.shapes()
            .iter()
            .map(|s| (s.coords() - a).amax())
            .fold(0.0, f64::max)
    }

    #[test]
    fn removes_pure_translation() {
        let p = base_points();
        let moved: Vec<_> = p.iter().map(|q| q + Point3::new(10.0, 0.0, 0.0)).collect();
        let out = rigid_align(&dataset(vec![p.clone(), p, moved]), AlignOptions::default()).unwrap();
        assert!(max_pair_gap(&out.dataset) < 1e-9);
    }

    #[test]
    fn removes_pure_rotation() {
        let p = base_points();
        let r = Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        let rotated: Vec<_> = p.iter().map(|q| r * q).collect();
        let out = rigid_align(&dataset(vec![p.clone(), rotated]), AlignOptions::default()).unwrap();
        assert!(max_pair_gap(&out.dataset) < 1e-9);
    }

    #[test]
    fn objective_non_increasing_and_rigid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base = base_points();
        let shapes: Vec<Vec<Point3>> = (0..3)
            .map(|_| {
                let axis = nalgebra::Unit::new_normalize(Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ));
                let r = Rotation3::from_axis_angle(&axis, rng.random_range(-3.0..3.0));
                let t = Point3::new(rng.random_range(-5.0..5.0), 3.0, -1.0);
                base.iter()
                    .map(|q| r * (q + Point3::new(rng.random_range(-0.5..0.5), 0.0, 0.0)) + t)
                    .collect()
            })
            .collect();
        let d = dataset(shapes.clone());
        let before = procrustes_objective(&d);
        let out = rigid_align(&d, AlignOptions::default()).unwrap();
        assert!(out.converged);
        let after = procrustes_objective(&out.dataset);
        assert!(after <= before);
        for w in out.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        for (orig, aligned) in shapes.iter().zip(out.dataset.shapes()) {
            let al = aligned.points();
            for i in 0..orig.len() {
                for j in 0..orig.len() {
                    let d0 = (orig[i] - orig[j]).norm();
                    let d1 = (al[i] - al[j]).norm();
                    assert!((d0 - d1).abs() <= 1e-9 * d0.max(1.0));
                }
            }
        }
        let again = rigid_align(&out.dataset, AlignOptions::default()).unwrap();
        let delta = (procrustes_objective(&again.dataset) - after).abs();
        assert!(delta < 1e-10 * after.max(1.0));
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let p = vec![Point3::new(1.0, 1.0, 1.0); 4];
        let err = rigid_align(&dataset(vec![p.clone(), p]), AlignOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }
}
