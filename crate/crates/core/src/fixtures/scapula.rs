//! Stylized scapula with exactly known morphometry.
//!
//! Frame: trigonum spinae at the origin, glenoid centre on +x, blade in the
//! z = 0 plane with the inferior angle towards +y. The glenoid normal is
//! `(1, tan inclination, tan version)`.

use std::sync::{Arc, OnceLock};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::mesh::MeshBuilder;
use crate::error::{Error, Result};
use crate::morphometry::LandmarkSet;
use crate::shape::{CorrespondedMesh, Point3, Topology};

pub const SCAPULA_TOPOLOGY: &str = "fixture-scapula";

/// Rim arcs are sampled every 7.5 degrees.
const ARC_STEPS: usize = 24;
const INNER_RINGS: usize = 3;
const BLADE_DIVISIONS: usize = 60;
const SPINE_RINGS: usize = 12;
const ACROMION_RINGS: usize = 6;
const TUBE_AZ: usize = 12;
const TUBE_RADIUS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScapulaParams {
    /// Scapula length AI-AS, mm.
    pub length: f64,
    /// Glenoid height, mm.
    pub glenoid_height: f64,
    /// Glenoid width (inferior circle diameter), mm.
    pub glenoid_width: f64,
    /// Glenoid inclination, degrees.
    pub inclination: f64,
    /// Glenoid version, degrees.
    pub version: f64,
    /// Critical shoulder angle, degrees.
    pub critical_shoulder_angle: f64,
}

impl Default for ScapulaParams {
    fn default() -> Self {
        ScapulaParams {
            length: 155.0,
            glenoid_height: 36.4,
            glenoid_width: 28.6,
            inclination: 11.0,
            version: -7.0,
            critical_shoulder_angle: 33.1,
        }
    }
}

impl ScapulaParams {
    pub const NAMES: [&'static str; 6] = [
        "length",
        "glenoid_height",
        "glenoid_width",
        "inclination",
        "version",
        "critical_shoulder_angle",
    ];
    pub const LABELS: [&'static str; 6] = ["SL", "GH", "GW", "GI", "GV", "CSA"];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.length,
            self.glenoid_height,
            self.glenoid_width,
            self.inclination,
            self.version,
            self.critical_shoulder_angle,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 6 {
            return Err(Error::dimension("scapula parameters", 6, v.len()));
        }
        Ok(ScapulaParams {
            length: v[0],
            glenoid_height: v[1],
            glenoid_width: v[2],
            inclination: v[3],
            version: v[4],
            critical_shoulder_angle: v[5],
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::invalid("scapula parameters", reason));
        if !self.to_vec().iter().all(|x| x.is_finite()) {
            return bad("non-finite value");
        }
        if self.length <= 0.0 || self.glenoid_width <= 0.0 {
            return bad("lengths must be positive");
        }
        if self.glenoid_height <= 0.8 * self.glenoid_width {
            return bad("glenoid height must exceed 0.8 x glenoid width");
        }
        if self.inclination.abs() >= 60.0 || self.version.abs() >= 60.0 {
            return bad("glenoid tilt must lie within +-60 degrees");
        }
        if !(self.critical_shoulder_angle > 0.0 && self.critical_shoulder_angle < 180.0) {
            return bad("critical shoulder angle must lie in (0, 180)");
        }
        Ok(())
    }
}

struct Built {
    mesh: MeshBuilder,
    landmarks: Vec<(String, usize)>,
}

fn build(p: &ScapulaParams) -> Built {
    let mut m = MeshBuilder::default();
    let mut lm: Vec<(String, usize)> = Vec::new();
    let sl = p.length;
    let z = Vector3::z();

    let ts = Point3::zeros();
    let gcp = Point3::new(0.55 * sl, 0.0, 0.0);
    let ai = Point3::new(-0.05 * sl, 0.62 * sl, 0.0);
    let as_ = ai - Vector3::new(0.0, sl, 0.0);

    let g = Vector3::new(1.0, p.inclination.to_radians().tan(), p.version.to_radians().tan()).normalize();
    let down = -Vector3::y();
    let sup = (down - g * down.dot(&g)).normalize();
    let ant = g.cross(&sup);

    // blade
    let neck = gcp - Vector3::new(0.12 * sl, 0.0, 0.0);
    let blade = m.subdivided_triangle(as_, ai, neck, BLADE_DIVISIONS);
    lm.push(("AS".into(), blade(0, 0)));
    lm.push(("AI".into(), blade(BLADE_DIVISIONS, 0)));

    // glenoid rim: inferior half circle about GCP, then a smaller superior
    // half circle ending at GS
    let half = p.glenoid_width / 2.0;
    let ru = 0.3 * p.glenoid_width;
    let gip = gcp - sup * half;
    let cu = gip + sup * (p.glenoid_height - ru);
    let mut rim = Vec::with_capacity(2 * (ARC_STEPS + 1));
    for k in 0..=ARC_STEPS {
        let th = (90.0 + 7.5 * k as f64).to_radians();
        rim.push(gcp + (sup * th.cos() + ant * th.sin()) * half);
    }
    for k in 0..=ARC_STEPS {
        let ph = (-90.0 + 7.5 * k as f64).to_radians();
        rim.push(cu + (sup * ph.cos() + ant * ph.sin()) * ru);
    }
    let rim_len = rim.len();
    let centre = rim.iter().sum::<Point3>() / rim_len as f64;
    let outer = m.vertices.len();
    for &q in &rim {
        m.point(q);
    }
    let mut prev = outer;
    for i in 1..=INNER_RINGS {
        let f = 1.0 - i as f64 / (INNER_RINGS + 1) as f64;
        let r = m.vertices.len();
        for &q in &rim {
            m.point(centre + (q - centre) * f);
        }
        m.stitch(prev, r, rim_len);
        prev = r;
    }
    let c = m.point(centre);
    m.cap(prev, c, rim_len);

    // lower arc step k sits at 90 + 7.5 k degrees
    let lower = |deg: f64| outer + ((deg - 90.0) / 7.5).round() as usize;
    let upper = |deg: f64| outer + ARC_STEPS + 1 + ((deg + 90.0) / 7.5).round() as usize;
    lm.push(("GIP".into(), lower(180.0)));
    lm.push(("GS".into(), upper(0.0)));
    for (i, deg) in [105.0, 120.0, 135.0, 150.0, 210.0, 225.0, 240.0, 255.0].iter().enumerate() {
        lm.push((format!("IGR{}", i + 1), lower(*deg)));
    }
    for (i, deg) in [-67.5, -45.0, -22.5, 22.5, 45.0, 67.5].iter().enumerate() {
        lm.push((format!("RIM{}", i + 1), upper(*deg)));
    }

    // spine from TS, then acromion out to LA
    let p_dir = (sup - z * sup.dot(&z)).normalize();
    let q_dir = z.cross(&p_dir);
    let csa = p.critical_shoulder_angle.to_radians();
    let la = gip + (p_dir * csa.cos() + q_dir * csa.sin()) * (0.3 * sl) + z * (0.1 * sl);
    let bend = Point3::new(0.45 * sl, -0.2 * sl, 0.1 * sl);

    let ts_i = m.point(ts);
    lm.push(("TS".into(), ts_i));
    let mut path = Vec::new();
    for i in 1..=SPINE_RINGS {
        let t = i as f64 / SPINE_RINGS as f64;
        path.push((ts + (bend - ts) * t, bend - ts));
    }
    for i in 1..ACROMION_RINGS {
        let t = i as f64 / ACROMION_RINGS as f64;
        path.push((bend + (la - bend) * t, la - bend));
    }
    let mut prev: Option<usize> = None;
    for (centre, dir) in path {
        let d = dir.normalize();
        let e1 = d.cross(&z).normalize();
        let e2 = d.cross(&e1);
        let r = m.ring(centre, TUBE_RADIUS, e1, e2, TUBE_AZ);
        match prev {
            None => m.cap(r, ts_i, TUBE_AZ),
            Some(a) => m.stitch(a, r, TUBE_AZ),
        }
        prev = Some(r);
    }
    let la_i = m.point(la);
    m.cap(prev.expect("non-empty path"), la_i, TUBE_AZ);
    lm.push(("LA".into(), la_i));

    Built { mesh: m, landmarks: lm }
}

fn topology() -> &'static Arc<Topology> {
    static TOPO: OnceLock<Arc<Topology>> = OnceLock::new();
    TOPO.get_or_init(|| {
        let b = build(&ScapulaParams::default());
        let n = b.mesh.vertices.len();
        Arc::new(Topology::new(SCAPULA_TOPOLOGY, n, b.mesh.faces).expect("fixture faces are valid"))
    })
}

pub fn scapula_landmarks() -> LandmarkSet {
    LandmarkSet::new(SCAPULA_TOPOLOGY, build(&ScapulaParams::default()).landmarks.into_iter().collect())
}

pub fn make_scapula(params: &ScapulaParams) -> Result<(CorrespondedMesh, LandmarkSet)> {
    params.validate()?;
    let b = build(params);
    let mesh = CorrespondedMesh::new(b.mesh.vertices, Arc::clone(topology()))?;
    Ok((mesh, LandmarkSet::new(SCAPULA_TOPOLOGY, b.landmarks.into_iter().collect())))
}
