use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ControlSpec, LevyBaseMeasure, LevyError};

/// A named control together with the base measure it drives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlEntry {
    pub measure: String,
    #[serde(flatten)]
    pub spec: ControlSpec,
}

/// Declarative set of base measures and controls.
///
/// ```toml
/// [measures.poisson]
/// label = "poisson"
/// atoms = [{ location = 1.0, intensity = 2.0 }]
///
/// [controls.high_vol]
/// measure = "poisson"
/// breakpoints = [0.0, 1.0]
/// [[controls.high_vol.cells]]
/// branches = [{ when = { test = "always" }, alpha = 2.0, beta = { kind = "linear", slope = 1.0 } }]
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelCatalog {
    #[serde(default)]
    pub measures: BTreeMap<String, LevyBaseMeasure>,
    #[serde(default)]
    pub controls: BTreeMap<String, ControlEntry>,
}

impl ModelCatalog {
    pub fn from_toml_str(text: &str) -> Result<Self, LevyError> {
        let cat: ModelCatalog = toml::from_str(text).map_err(|e| LevyError::Config(e.to_string()))?;
        cat.check_references()?;
        Ok(cat)
    }

    pub fn to_toml_string(&self) -> Result<String, LevyError> {
        toml::to_string(self).map_err(|e| LevyError::Config(e.to_string()))
    }

    pub fn check_references(&self) -> Result<(), LevyError> {
        for (name, c) in &self.controls {
            if !self.measures.contains_key(&c.measure) {
                return Err(LevyError::Config(format!("control `{name}` references unknown measure `{}`", c.measure)));
            }
        }
        Ok(())
    }

    pub fn measure(&self, name: &str) -> Result<&LevyBaseMeasure, LevyError> {
        self.measures.get(name).ok_or_else(|| LevyError::Config(format!("unknown measure `{name}`")))
    }

    pub fn control(&self, name: &str) -> Result<&ControlEntry, LevyError> {
        self.controls.get(name).ok_or_else(|| LevyError::Config(format!("unknown control `{name}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"
[measures.two_sided]
label = "two_sided"
atoms = [{ location = 1.0, intensity = 2.0 }, { location = -1.0, intensity = 4.0 }]

[controls.switch]
measure = "two_sided"
breakpoints = [0.0, 0.5, 1.0]

[[controls.switch.cells]]
branches = [{ when = { test = "always" }, alpha = 1.0, beta = { kind = "linear", slope = 1.0 } }]

[[controls.switch.cells]]
branches = [
  { when = { test = "state_at_least", at = 0.5, level = 0.0 }, alpha = 2.0, beta = { kind = "linear", slope = 0.5 } },
  { when = { test = "state_below", at = 0.5, level = 0.0 }, alpha = 0.5, beta = { kind = "table", points = [{ x = 1.0, value = 1.5 }, { x = -1.0, value = -0.25 }] } },
]
"#;

    #[test]
    fn load_serialize_load_is_identity() {
        let a = ModelCatalog::from_toml_str(DOC).unwrap();
        let text = a.to_toml_string().unwrap();
        let b = ModelCatalog::from_toml_str(&text).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.control("switch").unwrap().spec.cells().len(), 2);
    }

    #[test]
    fn invalid_measure_is_a_config_error() {
        let bad = "[measures.m]\natoms = [{ location = 0.0, intensity = 1.0 }]\n";
        assert!(ModelCatalog::from_toml_str(bad).is_err());
        let dangling = "[controls.c]\nmeasure = \"nope\"\nbreakpoints = [0.0, 1.0]\n[[controls.c.cells]]\nbranches = [{ when = { test = \"always\" }, alpha = 1.0, beta = { kind = \"linear\", slope = 1.0 } }]\n";
        assert!(ModelCatalog::from_toml_str(dangling).is_err());
    }
}
