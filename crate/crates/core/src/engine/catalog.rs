//! Units, zones, locations and capacities.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Load,
    Wind,
    Solar,
}

impl Quantity {
    pub const ALL: [Quantity; 3] = [Quantity::Load, Quantity::Wind, Quantity::Solar];

    pub fn as_str(&self) -> &'static str {
        match self {
            Quantity::Load => "load",
            Quantity::Wind => "wind",
            Quantity::Solar => "solar",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "load" => Some(Quantity::Load),
            "wind" => Some(Quantity::Wind),
            "solar" => Some(Quantity::Solar),
            _ => None,
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One catalog row. Load units are the zones themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Asset {
    #[serde(rename = "unit_id")]
    pub id: String,
    pub quantity: Quantity,
    #[serde(rename = "zone_id")]
    pub zone: String,
    pub x: f64,
    pub y: f64,
    #[serde(rename = "capacity_mw")]
    pub capacity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetCatalog {
    pub assets: Vec<Asset>,
}

impl AssetCatalog {
    /// Checks that ids are unique, every load unit is its own zone, and every
    /// wind or solar asset sits in a load zone.
    pub fn new(assets: Vec<Asset>) -> Result<Self, EngineError> {
        let mut seen = BTreeMap::new();
        for a in &assets {
            if seen.insert(a.id.clone(), ()).is_some() {
                return Err(EngineError::Catalog(format!("duplicate unit {}", a.id)));
            }
            if a.quantity == Quantity::Load && a.zone != a.id {
                return Err(EngineError::Catalog(format!(
                    "load unit {} must be its own zone, found {}",
                    a.id, a.zone
                )));
            }
            if let Some(c) = a.capacity {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(EngineError::Catalog(format!("unit {} has capacity {c}", a.id)));
                }
            }
        }
        let catalog = Self { assets };
        let zones = catalog.zones();
        if zones.is_empty() {
            return Err(EngineError::Catalog("no load zones".into()));
        }
        for a in &catalog.assets {
            if !zones.contains(&a.zone) {
                return Err(EngineError::Catalog(format!(
                    "asset {} is in unknown zone {}",
                    a.id, a.zone
                )));
            }
        }
        Ok(catalog)
    }

    /// Load zones in catalog order.
    pub fn zones(&self) -> Vec<String> {
        self.units(Quantity::Load)
    }

    pub fn units(&self, q: Quantity) -> Vec<String> {
        self.assets
            .iter()
            .filter(|a| a.quantity == q)
            .map(|a| a.id.clone())
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<&Asset> {
        self.assets.iter().find(|a| a.id == id)
    }

    /// Zone index (into [`AssetCatalog::zones`]) of every unit of `q`.
    pub fn zone_indices(&self, q: Quantity) -> Vec<usize> {
        let zones = self.zones();
        self.assets
            .iter()
            .filter(|a| a.quantity == q)
            .map(|a| zones.iter().position(|z| *z == a.zone).expect("validated zone"))
            .collect()
    }

    pub fn capacities(&self, q: Quantity) -> Vec<Option<f64>> {
        self.assets
            .iter()
            .filter(|a| a.quantity == q)
            .map(|a| a.capacity)
            .collect()
    }

    pub fn locations(&self, q: Quantity) -> BTreeMap<String, (f64, f64)> {
        self.assets
            .iter()
            .filter(|a| a.quantity == q)
            .map(|a| (a.id.clone(), (a.x, a.y)))
            .collect()
    }

    /// `unit_id,quantity,zone_id,x,y,capacity_mw`, blank capacity for none.
    pub fn read_csv(path: &Path) -> Result<Self, EngineError> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| EngineError::Catalog(format!("{}: {e}", path.display())))?;
        let assets = reader
            .deserialize()
            .collect::<Result<Vec<Asset>, _>>()
            .map_err(|e| EngineError::Catalog(format!("{}: {e}", path.display())))?;
        Self::new(assets)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), EngineError> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| EngineError::Catalog(format!("{}: {e}", path.display())))?;
        for a in &self.assets {
            w.serialize(a)
                .map_err(|e| EngineError::Catalog(e.to_string()))?;
        }
        w.flush().map_err(|e| EngineError::Catalog(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn asset(id: &str, q: Quantity, zone: &str) -> Asset {
        Asset {
            id: id.into(),
            quantity: q,
            zone: zone.into(),
            x: 0.0,
            y: 0.0,
            capacity: if q == Quantity::Load { None } else { Some(10.0) },
        }
    }

    #[test]
    fn validation() {
        let ok = AssetCatalog::new(vec![
            asset("z1", Quantity::Load, "z1"),
            asset("z2", Quantity::Load, "z2"),
            asset("w1", Quantity::Wind, "z2"),
            asset("s1", Quantity::Solar, "z1"),
        ])
        .unwrap();
        assert_eq!(ok.zones(), vec!["z1", "z2"]);
        assert_eq!(ok.zone_indices(Quantity::Wind), vec![1]);
        assert!(AssetCatalog::new(vec![asset("z1", Quantity::Load, "z1"), asset("w", Quantity::Wind, "zz")]).is_err());
        assert!(AssetCatalog::new(vec![asset("w", Quantity::Wind, "w")]).is_err());
        assert!(AssetCatalog::new(vec![asset("z1", Quantity::Load, "z1"), asset("z1", Quantity::Load, "z1")]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.csv");
        let cat = AssetCatalog::new(vec![
            asset("z1", Quantity::Load, "z1"),
            asset("w1", Quantity::Wind, "z1"),
        ])
        .unwrap();
        cat.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("unit_id,quantity,zone_id,x,y,capacity_mw\nz1,load,z1,0.0,0.0,\n"));
        assert_eq!(AssetCatalog::read_csv(&path).unwrap(), cat);
    }
}
