//! Small triangle-mesh builder for the parametric fixtures. Every primitive
//! appends vertices in a fixed order, so the face list depends only on the
//! call sequence and never on the parameter values.

use nalgebra::Vector3;

use crate::shape::Point3;

#[derive(Default)]
pub(crate) struct MeshBuilder {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[usize; 3]>,
}

/// Vertex indices of a UV sphere built by [`MeshBuilder::uv_sphere`].
pub(crate) struct UvSphere {
    base: usize,
    rings: usize,
    az: usize,
}

impl UvSphere {
    pub fn north(&self) -> usize {
        self.base
    }

    pub fn south(&self) -> usize {
        self.base + 1 + self.rings * self.az
    }

    /// Ring `ring` counts from 1 at the first ring below the north pole.
    pub fn at(&self, ring: usize, k: usize) -> usize {
        debug_assert!(ring >= 1 && ring <= self.rings && k < self.az);
        self.base + 1 + (ring - 1) * self.az + k
    }
}

impl MeshBuilder {
    fn quad(&mut self, a: usize, b: usize, c: usize, d: usize) {
        self.faces.push([a, b, c]);
        self.faces.push([a, c, d]);
    }

    /// Sphere with `polar_steps` latitude bands and `az` meridians. The
    /// pole lies along `e1 x e2`; azimuth 0 lies along `e1`.
    pub fn uv_sphere(
        &mut self,
        center: Point3,
        radius: f64,
        e1: Vector3<f64>,
        e2: Vector3<f64>,
        polar_steps: usize,
        az: usize,
    ) -> UvSphere {
        let pole = e1.cross(&e2);
        let base = self.vertices.len();
        self.vertices.push(center + pole * radius);
        for i in 1..polar_steps {
            let t = std::f64::consts::PI * i as f64 / polar_steps as f64;
            for k in 0..az {
                let p = std::f64::consts::TAU * k as f64 / az as f64;
                let dir = pole * t.cos() + (e1 * p.cos() + e2 * p.sin()) * t.sin();
                self.vertices.push(center + dir * radius);
            }
        }
        self.vertices.push(center - pole * radius);
        let s = UvSphere {
            base,
            rings: polar_steps - 1,
            az,
        };
        for k in 0..az {
            let k1 = (k + 1) % az;
            self.faces.push([s.north(), s.at(1, k), s.at(1, k1)]);
            self.faces.push([s.south(), s.at(s.rings, k1), s.at(s.rings, k)]);
        }
        for r in 1..s.rings {
            for k in 0..az {
                let k1 = (k + 1) % az;
                self.quad(s.at(r, k), s.at(r + 1, k), s.at(r + 1, k1), s.at(r, k1));
            }
        }
        s
    }

    /// Appends one ring of `az` vertices and returns its first index.
    pub fn ring(&mut self, center: Point3, radius: f64, e1: Vector3<f64>, e2: Vector3<f64>, az: usize) -> usize {
        let base = self.vertices.len();
        for k in 0..az {
            let p = std::f64::consts::TAU * k as f64 / az as f64;
            self.vertices.push(center + (e1 * p.cos() + e2 * p.sin()) * radius);
        }
        base
    }

    /// Connects two consecutive rings of equal size.
    pub fn stitch(&mut self, a: usize, b: usize, az: usize) {
        for k in 0..az {
            let k1 = (k + 1) % az;
            self.quad(a + k, b + k, b + k1, a + k1);
        }
    }

    /// Closes a ring with a fan to an apex vertex.
    pub fn cap(&mut self, ring: usize, apex: usize, az: usize) {
        for k in 0..az {
            self.faces.push([apex, ring + (k + 1) % az, ring + k]);
        }
    }

    pub fn point(&mut self, p: Point3) -> usize {
        self.vertices.push(p);
        self.vertices.len() - 1
    }

    /// Triangle `a b c` subdivided `k` times per edge. Returns a closure
    /// mapping barycentric steps `(i, j)` to vertex indices; `(0,0)` is `a`,
    /// `(k,0)` is `b`, `(0,k)` is `c`.
    pub fn subdivided_triangle(&mut self, a: Point3, b: Point3, c: Point3, k: usize) -> impl Fn(usize, usize) -> usize {
        let base = self.vertices.len();
        for i in 0..=k {
            for j in 0..=(k - i) {
                let (u, v) = (i as f64 / k as f64, j as f64 / k as f64);
                self.vertices.push(a + (b - a) * u + (c - a) * v);
            }
        }
        // row i starts after sum_{t < i} (k + 1 - t) vertices
        let index = move |i: usize, j: usize| base + i * (k + 1) - i * i.saturating_sub(1) / 2 + j;
        for i in 0..k {
            for j in 0..(k - i) {
                self.faces.push([index(i, j), index(i + 1, j), index(i, j + 1)]);
                if j + 1 < k - i {
                    self.faces.push([index(i + 1, j), index(i + 1, j + 1), index(i, j + 1)]);
                }
            }
        }
        index
    }
}
