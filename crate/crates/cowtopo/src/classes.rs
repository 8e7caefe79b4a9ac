//! The 13-class Circle of Willis vessel taxonomy and configurable label-id maps.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The thirteen foreground vessel classes of the Circle of Willis.
///
/// Background is not a member; it is always label id 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CowClass {
    #[serde(rename = "BA")]
    Ba,
    #[serde(rename = "R-PCA")]
    RPca,
    #[serde(rename = "L-PCA")]
    LPca,
    #[serde(rename = "R-ICA")]
    RIca,
    #[serde(rename = "R-MCA")]
    RMca,
    #[serde(rename = "L-ICA")]
    LIca,
    #[serde(rename = "L-MCA")]
    LMca,
    #[serde(rename = "R-Pcom")]
    RPcom,
    #[serde(rename = "L-Pcom")]
    LPcom,
    #[serde(rename = "Acom")]
    Acom,
    #[serde(rename = "R-ACA")]
    RAca,
    #[serde(rename = "L-ACA")]
    LAca,
    #[serde(rename = "3rd-A2")]
    ThirdA2,
}

impl CowClass {
    /// All thirteen classes in canonical order.
    pub const ALL: [CowClass; 13] = [
        CowClass::Ba,
        CowClass::RPca,
        CowClass::LPca,
        CowClass::RIca,
        CowClass::RMca,
        CowClass::LIca,
        CowClass::LMca,
        CowClass::RPcom,
        CowClass::LPcom,
        CowClass::Acom,
        CowClass::RAca,
        CowClass::LAca,
        CowClass::ThirdA2,
    ];

    /// Canonical display name.
    pub fn name(self) -> &'static str {
        match self {
            CowClass::Ba => "BA",
            CowClass::RPca => "R-PCA",
            CowClass::LPca => "L-PCA",
            CowClass::RIca => "R-ICA",
            CowClass::RMca => "R-MCA",
            CowClass::LIca => "L-ICA",
            CowClass::LMca => "L-MCA",
            CowClass::RPcom => "R-Pcom",
            CowClass::LPcom => "L-Pcom",
            CowClass::Acom => "Acom",
            CowClass::RAca => "R-ACA",
            CowClass::LAca => "L-ACA",
            CowClass::ThirdA2 => "3rd-A2",
        }
    }

    /// Parse a class from its canonical name (case-insensitive).
    pub fn from_name(name: &str) -> Option<CowClass> {
        let lower = name.to_ascii_lowercase();
        CowClass::ALL
            .iter()
            .copied()
            .find(|c| c.name().to_ascii_lowercase() == lower)
    }

    /// Position in [`CowClass::ALL`].
    pub fn index(self) -> usize {
        CowClass::ALL.iter().position(|&c| c == self).unwrap()
    }

    /// Default label id: the 1-based position in the canonical order.
    pub fn default_id(self) -> u8 {
        self.index() as u8 + 1
    }
}

impl fmt::Display for CowClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Bidirectional mapping between [`CowClass`] members and integer label ids.
///
/// Label files in the wild do not agree on numeric ids, so the map is loadable
/// from a JSON object of the form `{ "BA": 1, "R-PCA": 2, ... }`. All thirteen
/// classes must be present, with distinct nonzero ids; background is always 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    id_of: [u8; 13],
    class_of: BTreeMap<u8, CowClass>,
}

impl Default for ClassMap {
    fn default() -> Self {
        let mut id_of = [0u8; 13];
        let mut class_of = BTreeMap::new();
        for class in CowClass::ALL {
            id_of[class.index()] = class.default_id();
            class_of.insert(class.default_id(), class);
        }
        ClassMap { id_of, class_of }
    }
}

impl ClassMap {
    /// Build a map from explicit (class, id) pairs. Ids must be distinct and nonzero.
    pub fn from_pairs(pairs: &[(CowClass, u8)]) -> Result<Self> {
        if pairs.len() != 13 {
            return Err(Error::InvalidConfig(format!(
                "class map must assign all 13 classes, got {}",
                pairs.len()
            )));
        }
        let mut id_of = [0u8; 13];
        let mut class_of = BTreeMap::new();
        for &(class, id) in pairs {
            if id == 0 {
                return Err(Error::InvalidConfig(format!(
                    "class {} mapped to reserved background id 0",
                    class
                )));
            }
            if class_of.insert(id, class).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate class id {id}")));
            }
            id_of[class.index()] = id;
        }
        if id_of.contains(&0) {
            return Err(Error::InvalidConfig(
                "class map leaves at least one class unassigned".into(),
            ));
        }
        Ok(ClassMap { id_of, class_of })
    }

    /// Load from a JSON file of the form `{ "BA": 1, "R-PCA": 2, ... }`.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: BTreeMap<String, u8> = serde_json::from_str(&text)
            .map_err(|e| Error::malformed(path, format!("class map json: {e}")))?;
        let mut pairs = Vec::with_capacity(raw.len());
        for (name, id) in &raw {
            let class = CowClass::from_name(name).ok_or_else(|| {
                Error::malformed(path, format!("unknown class name {name:?} in class map"))
            })?;
            pairs.push((class, *id));
        }
        Self::from_pairs(&pairs)
    }

    /// Label id of a class.
    pub fn id(&self, class: CowClass) -> u8 {
        self.id_of[class.index()]
    }

    /// Class of a label id, if the id is a valid foreground id.
    pub fn class(&self, id: u8) -> Option<CowClass> {
        self.class_of.get(&id).copied()
    }

    /// True when the id is background (0) or a mapped foreground class.
    pub fn is_valid_label(&self, id: u8) -> bool {
        id == 0 || self.class_of.contains_key(&id)
    }
}
