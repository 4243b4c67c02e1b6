//! Scene JSON: `{"dielectric": D, "targets": [{"position": [x, y, z], "reflectivity": r}], "material_map": {...}}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::forward::{MaterialMap, PointTarget, Scene};
use crate::medium::MediumModel;

use super::{read_json, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub dielectric: f64,
    #[serde(default)]
    pub targets: Vec<PointTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material_map: Option<MaterialMap>,
}

impl SceneFile {
    pub fn into_scene(self) -> Result<Scene> {
        let mut scene = Scene::new(self.targets, MediumModel::new(self.dielectric)?)?;
        scene.material_map = self.material_map;
        scene.validate()?;
        Ok(scene)
    }

    pub fn from_scene(scene: &Scene) -> Self {
        Self {
            dielectric: scene.medium.dielectric(),
            targets: scene.targets.clone(),
            material_map: scene.material_map.clone(),
        }
    }
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    read_json::<SceneFile>(path)?.into_scene()
}

pub fn write_scene(scene: &Scene, path: &Path) -> Result<()> {
    write_json(path, &SceneFile::from_scene(scene))
}
