//! Scene configuration file (TOML).
//!
//! ```toml
//! seed = 7
//!
//! [[material]]
//! name = "wall"
//! velocity = 0.1   # m/ns
//! A = 0.25
//! B = 0.35
//! C = 8.0
//!
//! [[mesh]]
//! path = "room.obj"                # relative to the config file
//! material = "wall"                # fallback binding for every part
//! groups = { door = "wood" }       # OBJ object/group or MTL name -> material
//! translation = [0.0, 0.0, 0.0]
//! rotation = [0.0, 0.0, 0.0, 1.0]  # quaternion x, y, z, w
//!
//! [[mesh]]
//! primitive = { kind = "box", min = [3.0, 2.0, -1.5], max = [4.0, 3.0, 3.0] }
//! material = "wall"
//!
//! [sensor]
//! n_azimuth = 400
//! range_resolution = 0.1
//! n_range_bins = 500
//! beam = { kind = "D3", width_deg = 10.0, p = 0.9, samples = 50 }
//!
//! [trace]     # max_bounces, min_energy, total_emitted_energy, f_rx, ...
//! [noise]     # range_blur_sigma, system, ambient, seed
//! [output]    # bit_depth = 16, scale = { kind = "linear" }
//!
//! [calibration]
//! max_evals = 200
//! tolerance = 1e-4
//! param = [{ name = "material.wall.A", lower = 0.0, upper = 0.9, initial = 0.5 }]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use radsim_core::calibration::{ParamRange, ParamSpec};
use radsim_core::geometry::io::load_mesh_parts;
use radsim_core::geometry::primitives::{box_mesh, cylinder, quad, uv_sphere, wall_x};
use radsim_core::imaging::QuantScale;
use radsim_core::{
    BeamKind, BeamModel, Material, MaterialTable, NoiseConfig, Pose, Quat, Scene, SensorModel, Simulation, TraceConfig,
    TriangleMesh, Vec3,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Quaternions further than this from unit norm are rejected rather than
/// normalized.
pub const QUATERNION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// Base seed; frame seeds are derived from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "material", default)]
    pub materials: Vec<Material>,
    #[serde(rename = "mesh", default)]
    pub meshes: Vec<MeshConfig>,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub trace: TraceConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primitive: Option<Primitive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub groups: BTreeMap<String, String>,
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default = "identity_rotation")]
    pub rotation: [f64; 4],
}

fn identity_rotation() -> [f64; 4] {
    [0.0, 0.0, 0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Primitive {
    Box {
        min: [f64; 3],
        max: [f64; 3],
    },
    Quad {
        center: [f64; 3],
        u: [f64; 3],
        v: [f64; 3],
        half_u: f64,
        half_v: f64,
    },
    /// Square wall facing the origin across the x axis.
    Wall {
        x: f64,
        half: f64,
    },
    Cylinder {
        radius: f64,
        z0: f64,
        z1: f64,
        segments: u32,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
        stacks: u32,
        slices: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub n_azimuth: u32,
    pub range_resolution: f64,
    pub n_range_bins: u32,
    pub beam: BeamConfig,
    pub mount: PoseConfig,
}

impl Default for SensorConfig {
    fn default() -> Self {
        let s = SensorModel::default();
        Self {
            n_azimuth: s.n_azimuth,
            range_resolution: s.range_resolution,
            n_range_bins: s.n_range_bins,
            beam: BeamConfig::default(),
            mount: PoseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamConfig {
    pub kind: BeamKind,
    /// Full cone width, degrees.
    pub width_deg: f64,
    /// Inside-cone probability for D3/D4.
    pub p: f64,
    /// Rays per azimuth.
    pub samples: u32,
}

impl Default for BeamConfig {
    fn default() -> Self {
        let b = BeamModel::default();
        Self { kind: b.kind, width_deg: b.width.to_degrees(), p: b.inside_prob, samples: b.n_samples }
    }
}

impl BeamConfig {
    pub fn model(&self) -> BeamModel {
        BeamModel { kind: self.kind, width: self.width_deg.to_radians(), inside_prob: self.p, n_samples: self.samples }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseConfig {
    pub translation: [f64; 3],
    /// Quaternion x, y, z, w.
    pub rotation: [f64; 4],
}

impl Default for PoseConfig {
    fn default() -> Self {
        Self { translation: [0.0; 3], rotation: identity_rotation() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// 8 or 16.
    pub bit_depth: u32,
    pub scale: QuantScale,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { bit_depth: 16, scale: QuantScale::Linear }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default = "default_max_evals")]
    pub max_evals: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(rename = "param")]
    pub params: Vec<ParamRange>,
}

fn default_max_evals() -> usize {
    200
}

fn default_tolerance() -> f64 {
    1e-4
}

/// Unit quaternion from `[x, y, z, w]`, normalizing small deviations.
pub fn quaternion(q: [f64; 4]) -> Result<Quat, String> {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !((n - 1.0).abs() <= QUATERNION_TOLERANCE) {
        return Err(format!("quaternion norm {n} is not within {QUATERNION_TOLERANCE} of 1"));
    }
    Quat::normalized(q[0], q[1], q[2], q[3]).map_err(|e| e.to_string())
}

fn pose(translation: [f64; 3], rotation: [f64; 4], field: &str) -> Result<Pose> {
    let q = quaternion(rotation).map_err(|m| CliError::config(format!("{field}.rotation"), m))?;
    Ok(Pose::new(Vec3::from(translation), q))
}

/// A parsed config together with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub config: SceneConfig,
    pub base_dir: PathBuf,
    pub simulation: Simulation,
}

impl SceneConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
            CliError::Parse { path: path.to_path_buf(), line, column, message: e.message().trim().to_string() }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene config is always representable in TOML")
    }

    pub fn material_table(&self) -> Result<MaterialTable> {
        let mut table = MaterialTable::default();
        for (i, m) in self.materials.iter().enumerate() {
            table.push(m.clone()).map_err(|e| CliError::config(format!("material[{i}] ({})", m.name), e))?;
        }
        Ok(table)
    }

    pub fn sensor_model(&self) -> Result<SensorModel> {
        let s = &self.sensor;
        let model = SensorModel {
            n_azimuth: s.n_azimuth,
            range_resolution: s.range_resolution,
            n_range_bins: s.n_range_bins,
            beam: s.beam.model(),
            mount: pose(s.mount.translation, s.mount.rotation, "sensor.mount")?,
        };
        model.beam.validate().map_err(|e| CliError::config("sensor.beam", e))?;
        model.validate().map_err(|e| CliError::config("sensor", e))?;
        Ok(model)
    }

    pub fn param_spec(&self) -> Result<ParamSpec> {
        let cal = self.calibration.as_ref().ok_or_else(|| CliError::config("calibration", "section missing"))?;
        ParamSpec::new(cal.params.clone()).map_err(|e| CliError::config("calibration.param", e))
    }

    /// Loads meshes (relative to `base_dir`), binds materials and validates
    /// everything.
    pub fn build(&self, base_dir: &Path) -> Result<Simulation> {
        let materials = self.material_table()?;
        let sensor = self.sensor_model()?;
        self.trace.validate().map_err(|e| CliError::config("trace", e))?;
        self.noise.validate().map_err(|m| CliError::config("noise", m))?;
        if self.output.bit_depth != 8 && self.output.bit_depth != 16 {
            return Err(CliError::config("output.bit_depth", format!("{} is not 8 or 16", self.output.bit_depth)));
        }
        if let QuantScale::Log { v_scale } = self.output.scale {
            if !(v_scale > 0.0 && v_scale.is_finite()) {
                return Err(CliError::config("output.scale.v_scale", format!("{v_scale} must be > 0")));
            }
        }
        if self.calibration.is_some() {
            self.param_spec()?;
        }

        let mut mesh = TriangleMesh::new(Vec::new(), Vec::new()).expect("empty mesh is valid");
        for (i, m) in self.meshes.iter().enumerate() {
            let field = format!("mesh[{i}]");
            let placement = pose(m.translation, m.rotation, &field)?;
            for (part, binding) in m.parts(base_dir, &field)? {
                let id = m
                    .bind(&part, binding.as_deref(), &materials)
                    .map_err(|msg| CliError::config(field.clone(), msg))?;
                let mut part = part;
                part.set_material(id);
                mesh.append(&part, &placement);
            }
        }
        let scene = Scene::new(mesh, materials)?;
        Ok(Simulation { scene, sensor, trace: self.trace, noise: self.noise })
    }

    /// Writes calibrated values back into the config. Accepts the same
    /// parameter paths as the calibration module.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        let unknown = || CliError::config("calibration.param", format!("unknown parameter `{name}`"));
        if let Some(rest) = name.strip_prefix("material.") {
            let (mat, field) = rest.rsplit_once('.').ok_or_else(unknown)?;
            let m = self.materials.iter_mut().find(|m| m.name == mat).ok_or_else(unknown)?;
            match field {
                "A" => m.a = value,
                "B" => m.b = value,
                "C" => m.c = value,
                "velocity" => m.velocity = value,
                _ => return Err(unknown()),
            }
            return Ok(());
        }
        match name {
            "trace.f_rx" => self.trace.f_rx = value,
            "beam.width_deg" => self.sensor.beam.width_deg = value,
            "beam.p" => self.sensor.beam.p = value,
            "noise.range_blur_sigma" => self.noise.range_blur_sigma = value,
            "noise.system.amplitude" => self.noise.system.set_amplitude(value),
            "noise.ambient.amplitude" => self.noise.ambient.set_amplitude(value),
            _ => return Err(unknown()),
        }
        Ok(())
    }
}

impl MeshConfig {
    /// The mesh pieces of this entry with the name each is bound by.
    fn parts(&self, base_dir: &Path, field: &str) -> Result<Vec<(TriangleMesh, Option<String>)>> {
        match (&self.path, &self.primitive) {
            (Some(path), None) => {
                let full = base_dir.join(path);
                if !full.is_file() {
                    return Err(CliError::config(
                        format!("{field}.path"),
                        format!("{} does not exist", full.display()),
                    ));
                }
                let parts = load_mesh_parts(&full).map_err(|source| CliError::Mesh { path: full.clone(), source })?;
                Ok(parts
                    .into_iter()
                    .map(|p| {
                        // Prefer the group name when it is bound explicitly,
                        // else the MTL material name.
                        let key =
                            if self.groups.contains_key(&p.name) { Some(p.name) } else { p.material.or(Some(p.name)) };
                        (p.mesh, key)
                    })
                    .collect())
            }
            (None, Some(prim)) => {
                Ok(vec![(prim.mesh().map_err(|m| CliError::config(format!("{field}.primitive"), m))?, None)])
            }
            _ => Err(CliError::config(field, "exactly one of `path` and `primitive` must be given")),
        }
    }

    fn bind(&self, part: &TriangleMesh, key: Option<&str>, materials: &MaterialTable) -> Result<u32, String> {
        let _ = part;
        let name = key
            .and_then(|k| self.groups.get(k).map(String::as_str).or_else(|| materials.id_of(k).map(|_| k)))
            .or(self.material.as_deref())
            .ok_or_else(|| format!("no material bound for part `{}`", key.unwrap_or("<primitive>")))?;
        materials.id_of(name).ok_or_else(|| format!("unknown material `{name}`"))
    }
}

impl Primitive {
    pub fn mesh(&self) -> Result<TriangleMesh, String> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(format!("{name}={v} must be > 0"))
            }
        };
        Ok(match *self {
            Primitive::Box { min, max } => {
                if (0..3).any(|i| !(min[i] < max[i])) {
                    return Err("box min must be below max on every axis".into());
                }
                box_mesh(Vec3::from(min), Vec3::from(max), 0)
            }
            Primitive::Quad { center, u, v, half_u, half_v } => {
                let (u, v) = (Vec3::from(u), Vec3::from(v));
                if u.cross(v).length() == 0.0 {
                    return Err("quad axes must not be parallel".into());
                }
                quad(Vec3::from(center), u, v, positive("half_u", half_u)?, positive("half_v", half_v)?, 0)
            }
            Primitive::Wall { x, half } => wall_x(x, positive("half", half)?, 0),
            Primitive::Cylinder { radius, z0, z1, segments } => {
                if !(z0 < z1) {
                    return Err("cylinder needs z0 < z1".into());
                }
                cylinder(positive("radius", radius)?, z0, z1, segments, 0)
            }
            Primitive::Sphere { center, radius, stacks, slices } => {
                uv_sphere(Vec3::from(center), positive("radius", radius)?, stacks, slices, 0)
            }
        })
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// Reads, parses and builds a scene config file.
pub fn load_scene(path: &Path) -> Result<LoadedScene> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let config = SceneConfig::from_toml(&text, path)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let simulation = config.build(&base_dir)?;
    Ok(LoadedScene { config, base_dir, simulation })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [[material]]
        name = "wall"
        velocity = 0.1
        A = 0.25
        B = 0.35
        C = 8.0

        [[mesh]]
        primitive = { kind = "box", min = [-1.0, -1.0, -1.0], max = [1.0, 1.0, 1.0] }
        material = "wall"
    "#;

    fn parse(text: &str) -> Result<SceneConfig> {
        SceneConfig::from_toml(text, Path::new("scene.toml"))
    }

    #[test]
    fn minimal_config_builds_a_box() {
        let sim = parse(MINIMAL).unwrap().build(Path::new(".")).unwrap();
        assert_eq!(sim.scene.triangle_count(), 12);
        assert_eq!(sim.sensor.n_azimuth, 400);
        assert_eq!(sim.sensor.beam.kind, BeamKind::D3);
        assert_eq!(sim.sensor.beam.n_samples, 50);
        assert!((sim.sensor.beam.width - 10f64.to_radians()).abs() < 1e-15);
        assert_eq!(sim.trace.max_bounces, 4);
    }

    #[test]
    fn material_constraint_is_reported() {
        let text = MINIMAL.replace("A = 0.25", "A = 0.7").replace("B = 0.35", "B = 0.5");
        let err = parse(&text).unwrap().build(Path::new(".")).unwrap_err();
        assert_eq!(err.kind(), "config");
        let msg = err.to_string();
        assert!(msg.contains("A+B") && msg.contains("material[0]"), "{msg}");
    }

    #[test]
    fn unknown_binding_is_rejected() {
        let text = MINIMAL.replace("material = \"wall\"", "material = \"brick\"");
        let err = parse(&text).unwrap().build(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("unknown material `brick`"), "{err}");
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = parse("seed = 1\n[sensor]\nn_azimuth = \"many\"\n").unwrap_err();
        match err {
            CliError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e:?}"),
        }
        let err = parse("[sensor]\nazimuths = 3\n").unwrap_err();
        assert!(err.to_string().contains("azimuths"), "{err}");
    }

    #[test]
    fn mesh_needs_exactly_one_source() {
        let text = "[[mesh]]\nmaterial = \"x\"\n";
        let err = parse(text).unwrap().build(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("mesh[0]"), "{err}");
    }

    #[test]
    fn rotations_far_from_unit_are_rejected() {
        assert!(quaternion([0.0, 0.0, 0.0, 1.0005]).is_ok());
        assert!(quaternion([0.0, 0.0, 0.0, 0.9]).is_err());
        let text = format!("{MINIMAL}rotation = [0.0, 0.0, 0.0, 2.0]\n");
        let err = parse(&text).unwrap().build(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("mesh[0].rotation"), "{err}");
    }

    #[test]
    fn set_param_addresses_config_paths() {
        let mut cfg = parse(MINIMAL).unwrap();
        cfg.set_param("material.wall.B", 0.1).unwrap();
        cfg.set_param("beam.width_deg", 12.0).unwrap();
        cfg.set_param("noise.ambient.amplitude", 1e-3).unwrap();
        assert_eq!(cfg.materials[0].b, 0.1);
        assert_eq!(cfg.sensor.beam.width_deg, 12.0);
        assert_eq!(cfg.noise.ambient.amplitude(), 1e-3);
        assert!(cfg.set_param("material.stone.A", 0.1).is_err());
        assert!(cfg.set_param("sensor.fov", 0.1).is_err());
    }
}
