//! Declarative measurement recipes.
//!
//! A recipe lists the landmark names it needs and a sequence of steps.
//! Point-producing steps (`centroid`, `sphere_center`, `circle_center`) add
//! a named point that later steps may reference; measuring steps append a
//! labelled value. The built-in `femur` and `scapula` steps emit their full
//! label sets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::fit::{angle_deg, fit_circle3d, fit_sphere};
use super::measure::{gather, get, measure_femur, measure_scapula, FEMUR_LANDMARKS, SCAPULA_LANDMARKS};
use super::{Measurement, MeasurementVector, NamedPoints, Unit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Step {
    Femur,
    Scapula,
    Centroid { name: String, points: Vec<String> },
    SphereCenter { name: String, points: Vec<String> },
    CircleCenter { name: String, points: Vec<String> },
    Distance {
        label: String,
        from: String,
        to: String,
        #[serde(default = "default_length_unit")]
        unit: Unit,
    },
    /// Angle at `vertex` between the rays to `a` and `b`.
    Angle {
        label: String,
        vertex: String,
        a: String,
        b: String,
    },
    SphereDiameter { label: String, points: Vec<String> },
    CircleDiameter { label: String, points: Vec<String> },
}

fn default_length_unit() -> Unit {
    Unit::Mm
}

impl Step {
    fn references(&self) -> Vec<&str> {
        match self {
            Step::Femur => FEMUR_LANDMARKS.to_vec(),
            Step::Scapula => SCAPULA_LANDMARKS.to_vec(),
            Step::Centroid { points, .. }
            | Step::SphereCenter { points, .. }
            | Step::CircleCenter { points, .. }
            | Step::SphereDiameter { points, .. }
            | Step::CircleDiameter { points, .. } => points.iter().map(String::as_str).collect(),
            Step::Distance { from, to, .. } => vec![from, to],
            Step::Angle { vertex, a, b, .. } => vec![vertex, a, b],
        }
    }

    fn defines(&self) -> Option<&str> {
        match self {
            Step::Centroid { name, .. }
            | Step::SphereCenter { name, .. }
            | Step::CircleCenter { name, .. } => Some(name),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecipe {
    pub id: String,
    pub landmarks: Vec<String>,
    pub steps: Vec<Step>,
}

/// A recipe given either by built-in name or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecipeRef {
    Named(String),
    Custom(MeasurementRecipe),
}

impl RecipeRef {
    pub fn resolve(&self) -> Result<MeasurementRecipe> {
        match self {
            RecipeRef::Named(name) => MeasurementRecipe::builtin(name),
            RecipeRef::Custom(r) => {
                r.validate()?;
                Ok(r.clone())
            }
        }
    }
}

impl MeasurementRecipe {
    pub fn femur() -> Self {
        MeasurementRecipe {
            id: "femur".into(),
            landmarks: FEMUR_LANDMARKS.iter().map(|s| s.to_string()).collect(),
            steps: vec![Step::Femur],
        }
    }

    pub fn scapula() -> Self {
        MeasurementRecipe {
            id: "scapula".into(),
            landmarks: SCAPULA_LANDMARKS.iter().map(|s| s.to_string()).collect(),
            steps: vec![Step::Scapula],
        }
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "femur" => Ok(Self::femur()),
            "scapula" => Ok(Self::scapula()),
            other => Err(Error::invalid("recipe", format!("unknown built-in recipe `{other}`"))),
        }
    }

    /// Every step may only use declared landmarks or points defined by an
    /// earlier step; labels must be unique.
    pub fn validate(&self) -> Result<()> {
        let mut known: BTreeSet<&str> = self.landmarks.iter().map(String::as_str).collect();
        if known.len() != self.landmarks.len() {
            return Err(Error::invalid(format!("recipe `{}`", self.id), "duplicate landmark name"));
        }
        for step in &self.steps {
            for r in step.references() {
                if !known.contains(r) {
                    return Err(Error::MissingLandmark(r.to_string()));
                }
            }
            if let Some(name) = step.defines() {
                known.insert(name);
            }
        }
        let labels = self.labels();
        let unique: BTreeSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(Error::invalid(format!("recipe `{}`", self.id), "duplicate measurement label"));
        }
        Ok(())
    }

    /// Output labels in emission order.
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        for step in &self.steps {
            match step {
                Step::Femur => out.extend(super::FEMUR_LABELS.iter().map(|s| s.to_string())),
                Step::Scapula => out.extend(super::SCAPULA_LABELS.iter().map(|s| s.to_string())),
                Step::Distance { label, .. }
                | Step::Angle { label, .. }
                | Step::SphereDiameter { label, .. }
                | Step::CircleDiameter { label, .. } => out.push(label.clone()),
                _ => {}
            }
        }
        out
    }
}

pub fn measure(recipe: &MeasurementRecipe, landmarks: &NamedPoints) -> Result<MeasurementVector> {
    for name in &recipe.landmarks {
        get(landmarks, name)?;
    }
    let mut points = landmarks.clone();
    let mut out = Vec::new();
    for step in &recipe.steps {
        match step {
            Step::Femur => out.extend(measure_femur(&points)?.into_entries()),
            Step::Scapula => out.extend(measure_scapula(&points)?.into_entries()),
            Step::Centroid { name, points: refs } => {
                let p = gather(&points, refs)?;
                if p.is_empty() {
                    return Err(Error::invalid(format!("centroid `{name}`"), "no points"));
                }
                let c = p.iter().sum::<crate::shape::Point3>() / p.len() as f64;
                points.insert(name.clone(), c);
            }
            Step::SphereCenter { name, points: refs } => {
                let c = fit_sphere(&gather(&points, refs)?)?.center;
                points.insert(name.clone(), c);
            }
            Step::CircleCenter { name, points: refs } => {
                let c = fit_circle3d(&gather(&points, refs)?)?.center;
                points.insert(name.clone(), c);
            }
            Step::Distance { label, from, to, unit } => {
                let d = (get(&points, to)? - get(&points, from)?).norm();
                let value = match unit {
                    Unit::Cm => d / 10.0,
                    Unit::Mm => d,
                    Unit::Deg => {
                        return Err(Error::invalid(format!("step `{label}`"), "distance in degrees"))
                    }
                };
                out.push(Measurement::new(label.clone(), value, *unit));
            }
            Step::Angle { label, vertex, a, b } => {
                let v = get(&points, vertex)?;
                let ang = angle_deg(&(get(&points, a)? - v), &(get(&points, b)? - v))?;
                out.push(Measurement::new(label.clone(), ang, Unit::Deg));
            }
            Step::SphereDiameter { label, points: refs } => {
                let f = fit_sphere(&gather(&points, refs)?)?;
                out.push(Measurement::new(label.clone(), 2.0 * f.radius, Unit::Mm));
            }
            Step::CircleDiameter { label, points: refs } => {
                let f = fit_circle3d(&gather(&points, refs)?)?;
                out.push(Measurement::new(label.clone(), 2.0 * f.radius, Unit::Mm));
            }
        }
    }
    Ok(MeasurementVector::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::Point3;

    fn pts() -> NamedPoints {
        [
            ("A", Point3::new(0.0, 0.0, 0.0)),
            ("B", Point3::new(3.0, 4.0, 0.0)),
            ("C", Point3::new(0.0, 4.0, 0.0)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    #[test]
    fn single_distance_step() {
        let r: MeasurementRecipe = serde_json::from_str(
            r#"{"id":"d","landmarks":["A","B"],"steps":[{"op":"distance","label":"AB","from":"A","to":"B"}]}"#,
        )
        .unwrap();
        r.validate().unwrap();
        let m = measure(&r, &pts()).unwrap();
        assert_eq!(m.get("AB"), Some(5.0));
        assert_eq!(m.entries()[0].unit, Unit::Mm);
    }

    #[test]
    fn derived_points_and_angles() {
        let r = MeasurementRecipe {
            id: "c".into(),
            landmarks: vec!["A".into(), "B".into(), "C".into()],
            steps: vec![
                Step::Centroid {
                    name: "M".into(),
                    points: vec!["A".into(), "B".into()],
                },
                Step::Angle {
                    label: "ang".into(),
                    vertex: "C".into(),
                    a: "A".into(),
                    b: "B".into(),
                },
                Step::Distance {
                    label: "cm".into(),
                    from: "M".into(),
                    to: "A".into(),
                    unit: Unit::Cm,
                },
            ],
        };
        r.validate().unwrap();
        let m = measure(&r, &pts()).unwrap();
        assert!((m.get("ang").unwrap() - 90.0).abs() < 1e-12);
        assert!((m.get("cm").unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn undeclared_reference_is_rejected() {
        let r = MeasurementRecipe {
            id: "bad".into(),
            landmarks: vec!["A".into()],
            steps: vec![Step::Distance {
                label: "x".into(),
                from: "A".into(),
                to: "Z".into(),
                unit: Unit::Mm,
            }],
        };
        assert!(matches!(r.validate(), Err(Error::MissingLandmark(s)) if s == "Z"));
        assert!(matches!(measure(&MeasurementRecipe::femur(), &pts()), Err(Error::MissingLandmark(_))));
    }

    #[test]
    fn recipe_ref_forms() {
        let named: RecipeRef = serde_json::from_str(r#""scapula""#).unwrap();
        assert_eq!(named.resolve().unwrap(), MeasurementRecipe::scapula());
        assert!(RecipeRef::Named("tibia".into()).resolve().is_err());
        assert_eq!(MeasurementRecipe::femur().labels(), ["NSA", "FV", "BW", "HD", "FL"]);
    }
}
