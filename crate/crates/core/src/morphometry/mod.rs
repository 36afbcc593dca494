//! Landmark-based anatomical measurements.

mod fit;
mod landmarks;
mod measure;
mod recipe;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use fit::{
    angle_deg, fit_circle3d, fit_plane, fit_sphere, plane_basis, project_onto_plane, signed_angle_deg,
    CircleFit3D, PlaneFit, SphereFit,
};
pub use landmarks::{transfer_landmarks, LandmarkFile, LandmarkSet, NamedPoints};
pub use measure::{
    femoral_neck_axis, measure_femur, measure_scapula, scapular_frame, ScapularFrame, FEMUR_HEAD,
    FEMUR_LABELS, FEMUR_LANDMARKS, GLENOID_IGR, GLENOID_RIM, SCAPULA_LABELS, SCAPULA_LANDMARKS,
};
pub use recipe::{measure, MeasurementRecipe, RecipeRef, Step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Deg,
    Mm,
    Cm,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Deg => "deg",
            Unit::Mm => "mm",
            Unit::Cm => "cm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub label: String,
    pub value: f64,
    pub unit: Unit,
}

impl Measurement {
    pub fn new(label: impl Into<String>, value: f64, unit: Unit) -> Self {
        Measurement {
            label: label.into(),
            value,
            unit,
        }
    }
}

/// Labelled measurements in recipe order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MeasurementVector {
    entries: Vec<Measurement>,
}

impl MeasurementVector {
    pub fn new(entries: Vec<Measurement>) -> Self {
        MeasurementVector { entries }
    }

    pub fn entries(&self) -> &[Measurement] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<Measurement> {
        self.entries
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.entries.iter().find(|m| m.label == label).map(|m| m.value)
    }

    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|m| m.label.clone()).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|m| m.value).collect()
    }

    pub fn units(&self) -> Vec<Unit> {
        self.entries.iter().map(|m| m.unit).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Long-format CSV: `shape_id,label,value,unit`.
pub fn measurements_to_csv(rows: &[(String, MeasurementVector)]) -> String {
    let mut out = String::from("shape_id,label,value,unit\n");
    for (id, m) in rows {
        for e in m.entries() {
            let _ = writeln!(out, "{id},{},{:.16e},{}", e.label, e.value, e.unit.as_str());
        }
    }
    out
}

#[derive(Serialize)]
struct JsonRow<'a> {
    shape_id: &'a str,
    label: &'a str,
    #[serde(serialize_with = "crate::jsonfmt::f64_17")]
    value: f64,
    unit: Unit,
}

pub fn measurements_to_json(rows: &[(String, MeasurementVector)]) -> String {
    let flat: Vec<JsonRow> = rows
        .iter()
        .flat_map(|(id, m)| {
            m.entries().iter().map(move |e| JsonRow {
                shape_id: id,
                label: &e.label,
                value: e.value,
                unit: e.unit,
            })
        })
        .collect();
    serde_json::to_string_pretty(&flat).expect("measurement rows serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_rows() {
        let m = MeasurementVector::new(vec![
            Measurement::new("FL", 43.5, Unit::Cm),
            Measurement::new("NSA", 125.0, Unit::Deg),
        ]);
        let rows = vec![("s1".to_string(), m)];
        let csv = measurements_to_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("s1,FL,4.3500000000000000e1,cm"));
        let json: serde_json::Value = serde_json::from_str(&measurements_to_json(&rows)).unwrap();
        assert_eq!(json[1]["label"], "NSA");
        assert_eq!(json[1]["value"], 125.0);
        assert_eq!(json[0]["unit"], "cm");
    }
}
