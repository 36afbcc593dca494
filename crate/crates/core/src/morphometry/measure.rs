//! Built-in femoral and scapular measurement procedures.

use nalgebra::Vector3;

use super::fit::{angle_deg, fit_circle3d, fit_plane, fit_sphere, project_onto_plane, signed_angle_deg};
use super::{Measurement, MeasurementVector, NamedPoints, Unit};
use crate::error::{Error, Result};
use crate::shape::Point3;

pub const FEMUR_LABELS: [&str; 5] = ["NSA", "FV", "BW", "HD", "FL"];
pub const SCAPULA_LABELS: [&str; 6] = ["CSA", "GI", "GV", "GH", "GW", "SL"];

pub const FEMUR_HEAD: [&str; 9] = ["SFH", "HP1", "HP2", "HP3", "HP4", "HP5", "HP6", "HP7", "HP8"];
pub const FEMUR_LANDMARKS: [&str; 18] = [
    "SFH", "HP1", "HP2", "HP3", "HP4", "HP5", "HP6", "HP7", "HP8", "IMC", "MMC", "PMC", "LLC",
    "PLC", "ISN", "SNS", "FP", "GT",
];

pub const GLENOID_IGR: [&str; 8] = ["IGR1", "IGR2", "IGR3", "IGR4", "IGR5", "IGR6", "IGR7", "IGR8"];
pub const GLENOID_RIM: [&str; 16] = [
    "GS", "GIP", "IGR1", "IGR2", "IGR3", "IGR4", "IGR5", "IGR6", "IGR7", "IGR8", "RIM1", "RIM2",
    "RIM3", "RIM4", "RIM5", "RIM6",
];
pub const SCAPULA_LANDMARKS: [&str; 20] = [
    "GS", "GIP", "IGR1", "IGR2", "IGR3", "IGR4", "IGR5", "IGR6", "IGR7", "IGR8", "RIM1", "RIM2",
    "RIM3", "RIM4", "RIM5", "RIM6", "AI", "AS", "TS", "LA",
];

pub(crate) fn get(points: &NamedPoints, name: &str) -> Result<Point3> {
    points
        .get(name)
        .copied()
        .ok_or_else(|| Error::MissingLandmark(name.to_string()))
}

pub(crate) fn gather(points: &NamedPoints, names: &[impl AsRef<str>]) -> Result<Vec<Point3>> {
    names.iter().map(|n| get(points, n.as_ref())).collect()
}

fn unit_or_degenerate(v: Vector3<f64>, what: &str) -> Result<Vector3<f64>> {
    let n = v.norm();
    if n > 0.0 && n.is_finite() {
        Ok(v / n)
    } else {
        Err(Error::Degenerate(what.to_string()))
    }
}

/// Direction from the head centre to the foot of its perpendicular on the
/// ISN-SNS line, reversed so it points at the head.
pub fn femoral_neck_axis(head_center: Point3, isn: Point3, sns: Point3) -> Result<Vector3<f64>> {
    let line = sns - isn;
    let len2 = line.norm_squared();
    if len2 == 0.0 {
        return Err(Error::Degenerate("neck axis: ISN and SNS coincide".into()));
    }
    let foot = isn + line * ((head_center - isn).dot(&line) / len2);
    let axis = head_center - foot;
    if axis.norm() <= 1e-9 * len2.sqrt() {
        return Err(Error::Degenerate(
            "neck axis: head centre lies on the ISN-SNS line".into(),
        ));
    }
    Ok(axis)
}

pub fn measure_femur(points: &NamedPoints) -> Result<MeasurementVector> {
    let head = fit_sphere(&gather(points, &FEMUR_HEAD)?)?;
    let neck = femoral_neck_axis(head.center, get(points, "ISN")?, get(points, "SNS")?)?;
    let shaft = get(points, "GT")? - get(points, "FP")?;
    let shaft_dir = unit_or_degenerate(shaft, "shaft axis: FP and GT coincide")?;

    let nsa = angle_deg(&neck, &shaft)?;
    let condylar = project_onto_plane(&(get(points, "PMC")? - get(points, "PLC")?), &shaft_dir);
    let neck_proj = project_onto_plane(&neck, &shaft_dir);
    let fv = signed_angle_deg(&condylar, &neck_proj, &shaft_dir)?;
    let bw = (get(points, "LLC")? - get(points, "MMC")?).norm();
    let fl = (get(points, "IMC")? - get(points, "SFH")?).norm() / 10.0;

    Ok(MeasurementVector::new(vec![
        Measurement::new("NSA", nsa, Unit::Deg),
        Measurement::new("FV", fv, Unit::Deg),
        Measurement::new("BW", bw, Unit::Mm),
        Measurement::new("HD", 2.0 * head.radius, Unit::Mm),
        Measurement::new("FL", fl, Unit::Cm),
    ]))
}

/// Orthonormal scapular frame: `t` along TS->GCP, `n` normal to the
/// scapular plane (GCP, AI, TS), `b = n x t`.
#[derive(Debug, Clone, Copy)]
pub struct ScapularFrame {
    pub t: Vector3<f64>,
    pub n: Vector3<f64>,
    pub b: Vector3<f64>,
}

pub fn scapular_frame(gcp: Point3, ai: Point3, ts: Point3) -> Result<ScapularFrame> {
    let t = unit_or_degenerate(gcp - ts, "scapular frame: GCP coincides with TS")?;
    let n = unit_or_degenerate(
        (ai - gcp).cross(&(ts - gcp)),
        "scapular frame: GCP, AI and TS are collinear",
    )?;
    let b = n.cross(&t);
    Ok(ScapularFrame { t, n, b })
}

pub fn measure_scapula(points: &NamedPoints) -> Result<MeasurementVector> {
    let circle = fit_circle3d(&gather(points, &GLENOID_IGR)?)?;
    let gcp = circle.center;
    let frame = scapular_frame(gcp, get(points, "AI")?, get(points, "TS")?)?;

    let mut g = fit_plane(&gather(points, &GLENOID_RIM)?)?.normal;
    if g.dot(&frame.t) < 0.0 {
        g = -g;
    }
    let gv = g.dot(&frame.n).atan2(g.dot(&frame.t)).to_degrees();
    let gi = g.dot(&frame.b).atan2(g.dot(&frame.t)).to_degrees();

    let gip = get(points, "GIP")?;
    let gs = get(points, "GS")?;
    let la = get(points, "LA")?;
    let csa = angle_deg(
        &project_onto_plane(&(gs - gip), &frame.n),
        &project_onto_plane(&(la - gip), &frame.n),
    )?;
    let gh = (gip - gs).norm();
    let sl = (get(points, "AI")? - get(points, "AS")?).norm();

    Ok(MeasurementVector::new(vec![
        Measurement::new("CSA", csa, Unit::Deg),
        Measurement::new("GI", gi, Unit::Deg),
        Measurement::new("GV", gv, Unit::Deg),
        Measurement::new("GH", gh, Unit::Mm),
        Measurement::new("GW", 2.0 * circle.radius, Unit::Mm),
        Measurement::new("SL", sl, Unit::Mm),
    ]))
}
