// SPDX-License-Identifier: Apache-2.0
//! Design and platform catalogs.

use std::path::Path;
use std::sync::{Arc, OnceLock};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUILTIN_CATALOG: &str = include_str!("../../assets/catalog.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub name: String,
    pub gate_count: u64,
    /// Critical path of the unscaled netlist, in ns.
    pub base_crit_path: f64,
    /// Power at unit clock frequency and scale, in mW.
    pub base_power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlatformSpec {
    pub name: String,
    /// Feature-size factor, unitless.
    pub scale: f64,
    pub default_core_utilization: f64,
    pub default_density: f64,
    pub default_tns_end_percent: f64,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("failed to read catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed catalog: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("duplicate {kind} name `{name}`")]
    Duplicate { kind: &'static str, name: String },
    #[error("invalid {kind} `{name}`: {reason}")]
    Invalid { kind: &'static str, name: String, reason: String },
}

#[derive(Deserialize)]
struct CatalogFile {
    #[serde(default)]
    designs: Vec<DesignSpec>,
    #[serde(default)]
    platforms: Vec<PlatformSpec>,
}

/// Immutable lookup tables for designs and platforms.
#[derive(Clone, Debug, PartialEq)]
pub struct Catalog {
    designs: IndexMap<String, DesignSpec>,
    platforms: IndexMap<String, PlatformSpec>,
}

impl Catalog {
    /// The catalog shipped with the crate.
    pub fn builtin() -> Arc<Catalog> {
        static BUILTIN: OnceLock<Arc<Catalog>> = OnceLock::new();
        BUILTIN
            .get_or_init(|| Arc::new(Catalog::from_toml_str(BUILTIN_CATALOG).expect("embedded catalog is valid")))
            .clone()
    }

    pub fn from_toml_str(text: &str) -> Result<Catalog, CatalogError> {
        let file: CatalogFile = toml::from_str(text)?;
        Catalog::new(file.designs, file.platforms)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| CatalogError::Io { path: path.display().to_string(), source })?;
        Catalog::from_toml_str(&text)
    }

    pub fn new(designs: Vec<DesignSpec>, platforms: Vec<PlatformSpec>) -> Result<Catalog, CatalogError> {
        let mut design_map = IndexMap::new();
        for design in designs {
            validate_design(&design)?;
            if design_map.contains_key(&design.name) {
                return Err(CatalogError::Duplicate { kind: "design", name: design.name });
            }
            design_map.insert(design.name.clone(), design);
        }
        let mut platform_map = IndexMap::new();
        for platform in platforms {
            validate_platform(&platform)?;
            if platform_map.contains_key(&platform.name) {
                return Err(CatalogError::Duplicate { kind: "platform", name: platform.name });
            }
            platform_map.insert(platform.name.clone(), platform);
        }
        Ok(Catalog { designs: design_map, platforms: platform_map })
    }

    pub fn design(&self, name: &str) -> Option<&DesignSpec> {
        self.designs.get(name)
    }

    pub fn platform(&self, name: &str) -> Option<&PlatformSpec> {
        self.platforms.get(name)
    }

    pub fn designs(&self) -> impl Iterator<Item = &DesignSpec> {
        self.designs.values()
    }

    pub fn platforms(&self) -> impl Iterator<Item = &PlatformSpec> {
        self.platforms.values()
    }
}

fn invalid(kind: &'static str, name: &str, reason: &str) -> CatalogError {
    CatalogError::Invalid { kind, name: name.to_string(), reason: reason.to_string() }
}

fn validate_design(d: &DesignSpec) -> Result<(), CatalogError> {
    if d.name.is_empty() {
        return Err(invalid("design", &d.name, "empty name"));
    }
    if d.gate_count < 1 {
        return Err(invalid("design", &d.name, "gate_count must be at least 1"));
    }
    if !(d.base_crit_path.is_finite() && d.base_crit_path > 0.0) {
        return Err(invalid("design", &d.name, "base_crit_path must be positive"));
    }
    if !(d.base_power.is_finite() && d.base_power > 0.0) {
        return Err(invalid("design", &d.name, "base_power must be positive"));
    }
    Ok(())
}

fn validate_platform(p: &PlatformSpec) -> Result<(), CatalogError> {
    if p.name.is_empty() {
        return Err(invalid("platform", &p.name, "empty name"));
    }
    if !(p.scale.is_finite() && p.scale > 0.0) {
        return Err(invalid("platform", &p.name, "scale must be positive"));
    }
    if !(p.default_core_utilization > 0.0 && p.default_core_utilization <= 100.0) {
        return Err(invalid("platform", &p.name, "default_core_utilization must lie in (0, 100]"));
    }
    if !(p.default_density > 0.0 && p.default_density <= 1.0) {
        return Err(invalid("platform", &p.name, "default_density must lie in (0, 1]"));
    }
    if !(0.0..=100.0).contains(&p.default_tns_end_percent) {
        return Err(invalid("platform", &p.name, "default_tns_end_percent must lie in [0, 100]"));
    }
    Ok(())
}
