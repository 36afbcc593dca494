//! Stylized long bone with exactly known morphometry.
//!
//! Frame: shaft along +z, femoral neck base at the origin. The neck axis
//! leans `nsa` degrees off +z towards the horizontal direction rotated
//! `version` degrees from +x about +z; the condylar line runs along +x.

use std::sync::{Arc, OnceLock};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::mesh::MeshBuilder;
use crate::error::{Error, Result};
use crate::morphometry::LandmarkSet;
use crate::shape::{CorrespondedMesh, Point3, Topology};

pub const FEMUR_TOPOLOGY: &str = "fixture-femur";

const SHAFT_RADIUS: f64 = 12.0;
const SHAFT_TOP: f64 = 30.0;
const SHAFT_RINGS: usize = 86;
const NECK_OFFSET: f64 = 45.0;
const NECK_RADIUS: f64 = 14.0;
const NECK_RINGS: usize = 5;
const CONDYLE_RADIUS: f64 = 20.0;
const AZ: usize = 24;
const POLAR_STEPS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FemurParams {
    /// Femur length, cm.
    pub length: f64,
    /// Head diameter, mm.
    pub head_diameter: f64,
    /// Neck-shaft angle, degrees.
    pub neck_shaft_angle: f64,
    /// Femoral version (torsion), degrees.
    pub version: f64,
    /// Bicondylar width, mm.
    pub condylar_width: f64,
}

impl Default for FemurParams {
    fn default() -> Self {
        FemurParams {
            length: 42.8,
            head_diameter: 52.1,
            neck_shaft_angle: 121.8,
            version: 13.9,
            condylar_width: 83.9,
        }
    }
}

impl FemurParams {
    pub const NAMES: [&'static str; 5] = ["length", "head_diameter", "neck_shaft_angle", "version", "condylar_width"];
    /// Measurement label recovering each parameter, in [`Self::NAMES`] order.
    pub const LABELS: [&'static str; 5] = ["FL", "HD", "NSA", "FV", "BW"];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.length,
            self.head_diameter,
            self.neck_shaft_angle,
            self.version,
            self.condylar_width,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 5 {
            return Err(Error::dimension("femur parameters", 5, v.len()));
        }
        Ok(FemurParams {
            length: v[0],
            head_diameter: v[1],
            neck_shaft_angle: v[2],
            version: v[3],
            condylar_width: v[4],
        })
    }

    fn neck_frame(&self) -> (Vector3<f64>, Vector3<f64>) {
        let (psi, tau) = (self.neck_shaft_angle.to_radians(), self.version.to_radians());
        let u = Vector3::new(tau.cos(), tau.sin(), 0.0);
        let n = Vector3::z() * psi.cos() + u * psi.sin();
        let v = -Vector3::z() * psi.sin() + u * psi.cos();
        (n, v)
    }

    fn superior_head(&self) -> Point3 {
        let (n, _) = self.neck_frame();
        n * NECK_OFFSET + Vector3::z() * (self.head_diameter / 2.0)
    }

    fn condyle_offset(&self) -> f64 {
        self.condylar_width / 2.0 - CONDYLE_RADIUS
    }

    /// Height of the condyle centres, chosen so that the superior head
    /// point and the inferior medial condyle are `length` cm apart.
    fn condyle_height(&self) -> Option<f64> {
        let sfh = self.superior_head();
        let horizontal = (sfh.x - self.condyle_offset()).hypot(sfh.y);
        let span = 10.0 * self.length;
        (span > horizontal).then(|| sfh.z - (span * span - horizontal * horizontal).sqrt() + CONDYLE_RADIUS)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::invalid("femur parameters", reason));
        if !self.to_vec().iter().all(|x| x.is_finite()) {
            return bad("non-finite value");
        }
        if self.head_diameter <= 0.0 {
            return bad("head diameter must be positive");
        }
        if !(self.neck_shaft_angle > 0.0 && self.neck_shaft_angle < 180.0) {
            return bad("neck-shaft angle must lie in (0, 180)");
        }
        if self.version.abs() >= 90.0 {
            return bad("version must lie in (-90, 90)");
        }
        if self.condyle_offset() <= 0.0 {
            return bad("condylar width must exceed the condyle diameter");
        }
        match self.condyle_height() {
            Some(zc) if zc < -2.0 * SHAFT_TOP => Ok(()),
            _ => bad("length too short for the proximal geometry"),
        }
    }
}

struct Built {
    mesh: MeshBuilder,
    landmarks: Vec<(&'static str, usize)>,
}

fn build(p: &FemurParams) -> Built {
    let mut m = MeshBuilder::default();
    let mut lm = Vec::new();
    let (n, v) = p.neck_frame();
    let zc = p.condyle_height().expect("validated");
    let (x, y) = (Vector3::x(), Vector3::y());

    // shaft, bottom ring first
    let mut prev = None;
    for i in 0..SHAFT_RINGS {
        let h = zc + (SHAFT_TOP - zc) * i as f64 / (SHAFT_RINGS - 1) as f64;
        let r = m.ring(Point3::new(0.0, 0.0, h), SHAFT_RADIUS, x, y, AZ);
        if i == 0 {
            lm.push(("FP", r + AZ / 4));
        }
        if i == SHAFT_RINGS - 1 {
            lm.push(("GT", r + AZ / 4));
        }
        if let Some(a) = prev {
            m.stitch(a, r, AZ);
        }
        prev = Some(r);
    }

    // neck: ring 0 carries SNS along +v and ISN along -v
    let w = n.cross(&v);
    let mut prev = None;
    for i in 0..NECK_RINGS {
        let t = 4.0 * i as f64;
        let r = m.ring(Point3::zeros() + n * t, NECK_RADIUS - 0.5 * i as f64, v, w, AZ);
        if i == 0 {
            lm.push(("SNS", r));
            lm.push(("ISN", r + AZ / 2));
        }
        if let Some(a) = prev {
            m.stitch(a, r, AZ);
        }
        prev = Some(r);
    }

    // head, pole along +z
    let head_center = Point3::zeros() + n * NECK_OFFSET;
    let head = m.uv_sphere(head_center, p.head_diameter / 2.0, x, y, POLAR_STEPS, AZ);
    lm.push(("SFH", head.north()));
    let q = AZ / 4;
    let mid = AZ / 8;
    let head_points = [
        head.at(3, 0),
        head.at(3, q),
        head.at(3, 2 * q),
        head.at(3, 3 * q),
        head.at(6, mid),
        head.at(6, q + mid),
        head.at(6, 2 * q + mid),
        head.at(6, 3 * q + mid),
    ];
    const HP: [&str; 8] = ["HP1", "HP2", "HP3", "HP4", "HP5", "HP6", "HP7", "HP8"];
    lm.extend(HP.iter().copied().zip(head_points));

    // condyles; equator ring 6, azimuth from +x
    let off = p.condyle_offset();
    let medial = m.uv_sphere(Point3::new(off, 0.0, zc), CONDYLE_RADIUS, x, y, POLAR_STEPS, AZ);
    lm.push(("MMC", medial.at(6, 0)));
    lm.push(("PMC", medial.at(6, 3 * q)));
    lm.push(("IMC", medial.south()));
    let lateral = m.uv_sphere(Point3::new(-off, 0.0, zc), CONDYLE_RADIUS, x, y, POLAR_STEPS, AZ);
    lm.push(("LLC", lateral.at(6, 2 * q)));
    lm.push(("PLC", lateral.at(6, 3 * q)));

    Built { mesh: m, landmarks: lm }
}

fn topology() -> &'static Arc<Topology> {
    static TOPO: OnceLock<Arc<Topology>> = OnceLock::new();
    TOPO.get_or_init(|| {
        let b = build(&FemurParams::default());
        let n = b.mesh.vertices.len();
        Arc::new(Topology::new(FEMUR_TOPOLOGY, n, b.mesh.faces).expect("fixture faces are valid"))
    })
}

/// Landmark indices shared by every femur fixture.
pub fn femur_landmarks() -> LandmarkSet {
    let b = build(&FemurParams::default());
    LandmarkSet::new(
        FEMUR_TOPOLOGY,
        b.landmarks.into_iter().map(|(k, i)| (k.to_string(), i)).collect(),
    )
}

pub fn make_femur(params: &FemurParams) -> Result<(CorrespondedMesh, LandmarkSet)> {
    params.validate()?;
    let b = build(params);
    let mesh = CorrespondedMesh::new(b.mesh.vertices, Arc::clone(topology()))?;
    let set = LandmarkSet::new(
        FEMUR_TOPOLOGY,
        b.landmarks.into_iter().map(|(k, i)| (k.to_string(), i)).collect(),
    );
    Ok((mesh, set))
}
