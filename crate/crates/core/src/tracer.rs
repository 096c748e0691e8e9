//! Beam tracing: sampled rays, reflection/refraction branching and the two
//! return paths.
//!
//! Every sampled ray starts with `total_emitted_energy / N_s`. At each hit the
//! incident energy is split by Fresnel into a reflected share `E₁` and a
//! transmitted share `E₂`. Up to two returns are evaluated with the lobe of
//! the hit material:
//!
//! * back-path: the signal retraces its path; the return direction is `-v₀`,
//!   the return leg equals the path so far and the apparent range is the path.
//! * air-path: from the second hit on, the signal flies straight to the
//!   sensor if nothing blocks the segment; apparent range is
//!   `(path + |hit - sensor|) / 2`.
//!
//! A return direction on the incidence side of the surface draws from `E₁`
//! around the mirror direction, one on the far side from `E₂` around the Snell
//! direction. Returned energy is taken out of the share it came from; the
//! rest continues as the reflection and refraction children.
//!
//! Depth counts reflections only: a hit is traced while the ray has been
//! reflected fewer than `max_bounces` times, so every return has scattered at
//! most `max_bounces` times. Transmission does not add depth, which lets a
//! beam pass through a thin wall and still see what lies behind it.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{AccelIndex, GeometryError, Pose, TriangleMesh, Vec3, SELF_INTERSECTION_EPSILON};
use crate::imaging::{add_noise, bin_into, NoiseConfig, PolarImage};
use crate::rng::{hash_key, sample_stream};
use crate::sampling::{draw_offset, rotate_by_offset, BeamModel, RadiusSampler, SamplingError};
use crate::wave::{fresnel_split, reflect_dir, reflection_energy, snell_refract, MaterialTable, WaveError};

/// Surface interactions (reflections and transmissions) per sampled ray.
pub const MAX_INTERACTIONS: u32 = 32;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error("triangle {triangle} uses material {material}, but the table has {len} entries")]
    UnknownMaterial { triangle: usize, material: u32, len: usize },
    #[error("invalid sensor: {0}")]
    Sensor(String),
    #[error("invalid trace config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    /// Maximum number of reflections a returned signal may have undergone.
    pub max_bounces: u32,
    /// Children below `min_energy · total_emitted_energy / N_s` are pruned.
    pub min_energy: f64,
    pub total_emitted_energy: f64,
    /// Divide returns by `(return_leg / 1 m)²` (floored at 1 m).
    pub return_leg_attenuation: bool,
    /// Baseline: mean ray only, first hit only, material-independent.
    pub lidar_like: bool,
    /// Receiver aperture fraction applied to every return.
    pub f_rx: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            max_bounces: 4,
            min_energy: 1e-4,
            total_emitted_energy: 1.0,
            return_leg_attenuation: false,
            lidar_like: false,
            f_rx: 0.05,
        }
    }
}

impl TraceConfig {
    /// The lidar-like baseline preset.
    pub fn lidar_like() -> Self {
        Self { lidar_like: true, max_bounces: 1, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let fail = |m: String| Err(TraceError::Config(m));
        if self.max_bounces < 1 {
            return fail("max_bounces must be >= 1".into());
        }
        if !(self.min_energy > 0.0 && self.min_energy.is_finite()) {
            return fail(format!("min_energy={} must be > 0", self.min_energy));
        }
        if !(self.total_emitted_energy > 0.0 && self.total_emitted_energy.is_finite()) {
            return fail(format!("total_emitted_energy={} must be > 0", self.total_emitted_energy));
        }
        if !(self.f_rx > 0.0 && self.f_rx <= 1.0) {
            return fail(format!("f_rx={} must lie in (0, 1]", self.f_rx));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReturnPath {
    Back,
    Air,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnSignal {
    /// Half the total travel distance, meters.
    pub apparent_range: f64,
    pub energy: f64,
    /// Scattering events of this signal, the final one included.
    pub bounces: u32,
    pub path: ReturnPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    pub n_azimuth: u32,
    /// Meters per range bin.
    pub range_resolution: f64,
    pub n_range_bins: u32,
    pub beam: BeamModel,
    /// Sensor pose in the robot frame. Azimuth 0 looks along the sensor's +x,
    /// increasing counter-clockwise about its +z.
    pub mount: Pose,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            n_azimuth: 400,
            range_resolution: 0.1,
            n_range_bins: 500,
            beam: BeamModel::default(),
            mount: Pose::IDENTITY,
        }
    }
}

impl SensorModel {
    pub fn max_range(&self) -> f64 {
        self.range_resolution * self.n_range_bins as f64
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.n_azimuth < 1 {
            return Err(TraceError::Sensor("n_azimuth must be >= 1".into()));
        }
        if !(self.range_resolution > 0.0 && self.range_resolution.is_finite()) {
            return Err(TraceError::Sensor(format!("range_resolution={} must be > 0", self.range_resolution)));
        }
        if self.n_range_bins < 1 {
            return Err(TraceError::Sensor("n_range_bins must be >= 1".into()));
        }
        self.beam.validate()?;
        Ok(())
    }

    /// Unit boresight and left vectors of an azimuth column in world frame.
    pub fn column_frame(&self, sensor_pose: &Pose, azimuth: u32) -> (Vec3, Vec3) {
        let angle = TAU * azimuth as f64 / self.n_azimuth as f64;
        let (s, c) = angle.sin_cos();
        (sensor_pose.transform_dir(Vec3::new(c, s, 0.0)), sensor_pose.transform_dir(Vec3::new(-s, c, 0.0)))
    }
}

/// Geometry plus materials. The index sits behind an `Arc` so material
/// tables can be swapped (as calibration does) without rebuilding it.
#[derive(Debug, Clone)]
pub struct Scene {
    accel: Option<Arc<AccelIndex>>,
    materials: MaterialTable,
}

impl Scene {
    /// Builds the index. A mesh without usable triangles gives an empty scene.
    pub fn new(mesh: TriangleMesh, materials: MaterialTable) -> Result<Self, TraceError> {
        let accel = match AccelIndex::build(mesh) {
            Ok(a) => Some(Arc::new(a)),
            Err(GeometryError::EmptyMesh) => None,
            Err(e) => return Err(e.into()),
        };
        let scene = Self { accel, materials };
        scene.validate()?;
        Ok(scene)
    }

    pub fn empty() -> Self {
        Self { accel: None, materials: MaterialTable::default() }
    }

    /// Same geometry, different materials.
    pub fn with_materials(&self, materials: MaterialTable) -> Result<Self, TraceError> {
        let scene = Self { accel: self.accel.clone(), materials };
        scene.validate()?;
        Ok(scene)
    }

    pub fn accel(&self) -> Option<&AccelIndex> {
        self.accel.as_deref()
    }

    pub fn mesh(&self) -> Option<&TriangleMesh> {
        self.accel().map(AccelIndex::mesh)
    }

    pub fn materials(&self) -> &MaterialTable {
        &self.materials
    }

    pub fn triangle_count(&self) -> usize {
        self.mesh().map_or(0, TriangleMesh::len)
    }

    fn validate(&self) -> Result<(), TraceError> {
        self.materials.validate()?;
        let len = self.materials.len();
        if let Some(mesh) = self.mesh() {
            if let Some((i, t)) = mesh.triangles().iter().enumerate().find(|(_, t)| t.material_id as usize >= len) {
                return Err(TraceError::UnknownMaterial { triangle: i, material: t.material_id, len });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Ray {
    origin: Vec3,
    dir: Vec3,
    energy: f64,
    path: f64,
    medium: u32,
    reflections: u32,
    interactions: u32,
}

/// A validated scene/sensor/config triple, ready to trace columns.
#[derive(Debug, Clone)]
pub struct Tracer<'a> {
    scene: &'a Scene,
    sensor: SensorModel,
    cfg: TraceConfig,
    sampler: RadiusSampler,
    /// Wave velocity per material id.
    velocities: Vec<f64>,
    n_rays: u32,
    ray_energy: f64,
    prune_below: f64,
    max_range: f64,
}

impl<'a> Tracer<'a> {
    pub fn new(scene: &'a Scene, sensor: &SensorModel, cfg: &TraceConfig) -> Result<Self, TraceError> {
        sensor.validate()?;
        cfg.validate()?;
        let mut cfg = *cfg;
        if cfg.lidar_like {
            cfg.max_bounces = 1;
        }
        let n_rays = if cfg.lidar_like { 1 } else { sensor.beam.n_samples };
        let ray_energy = cfg.total_emitted_energy / n_rays as f64;
        Ok(Self {
            scene,
            sensor: *sensor,
            cfg,
            sampler: sensor.beam.radius_sampler()?,
            velocities: scene.materials.iter().map(|m| m.velocity).collect(),
            n_rays,
            ray_energy,
            prune_below: cfg.min_energy * ray_energy,
            max_range: sensor.max_range(),
        })
    }

    /// Appends the returns of one azimuth column to `out`.
    pub fn trace_column(&self, sensor_pose: &Pose, azimuth: u32, seed: u64, out: &mut Vec<ReturnSignal>) {
        let Some(accel) = self.scene.accel() else { return };
        let (boresight, left) = self.sensor.column_frame(sensor_pose, azimuth);
        let origin = sensor_pose.position;
        let mut stack = Vec::with_capacity(2 * self.cfg.max_bounces as usize + 2);
        for sample in 0..self.n_rays {
            let dir = if self.cfg.lidar_like {
                boresight
            } else {
                let mut rng = sample_stream(seed, azimuth, sample);
                rotate_by_offset(boresight, left, draw_offset(&self.sampler, &mut rng))
            };
            stack.push(Ray {
                origin,
                dir,
                energy: self.ray_energy,
                path: 0.0,
                medium: MaterialTable::AIR,
                reflections: 0,
                interactions: 0,
            });
            while let Some(ray) = stack.pop() {
                self.interact(accel, origin, ray, &mut stack, out);
            }
        }
    }

    fn return_energy(&self, available: f64, omega: f64, material: u32, leg: f64) -> f64 {
        let m = self.scene.materials.get(material).expect("validated material id");
        let e = (reflection_energy(available, omega.min(FRAC_PI_2), m) * self.cfg.f_rx).min(available);
        self.attenuate(e, leg)
    }

    fn attenuate(&self, e: f64, leg: f64) -> f64 {
        if self.cfg.return_leg_attenuation {
            e / (leg * leg).max(1.0)
        } else {
            e
        }
    }

    fn interact(&self, accel: &AccelIndex, sensor: Vec3, ray: Ray, stack: &mut Vec<Ray>, out: &mut Vec<ReturnSignal>) {
        let t_min = if ray.interactions == 0 { 0.0 } else { SELF_INTERSECTION_EPSILON };
        let t_max = 2.0 * self.max_range - ray.path;
        if t_max <= t_min {
            return;
        }
        let Some(hit) = accel.intersect(ray.origin, ray.dir, t_min, t_max) else { return };
        let path = ray.path + hit.t;
        let bounces = ray.reflections + 1;

        if self.cfg.lidar_like {
            if path <= self.max_range {
                let energy = self.attenuate(ray.energy * self.cfg.f_rx, path);
                out.push(ReturnSignal { apparent_range: path, energy, bounces, path: ReturnPath::Back });
            }
            return;
        }

        let n = hit.normal;
        let mat = hit.material_id;
        let next_medium = if mat == ray.medium { MaterialTable::AIR } else { mat };
        let (v1, v2) = (self.velocities[ray.medium as usize], self.velocities[next_medium as usize]);
        let theta0 = (-ray.dir.dot(n)).clamp(-1.0, 1.0).acos().min(FRAC_PI_2);
        let refl = reflect_dir(ray.dir, n);
        let trans = snell_refract(ray.dir, n, v1, v2);
        let (mut e1, mut e2) = match trans {
            Some(_) => {
                let s = fresnel_split(theta0, v1, v2, ray.energy);
                (s.reflected, s.refracted)
            }
            None => (ray.energy, 0.0),
        };

        if path <= self.max_range {
            let omega = refl.angle_to(-ray.dir);
            let e = self.return_energy(e1, omega, mat, path);
            if e > 0.0 {
                e1 -= e;
                out.push(ReturnSignal { apparent_range: path, energy: e, bounces, path: ReturnPath::Back });
            }
        }

        if ray.interactions >= 1 {
            let to_sensor = sensor - hit.point;
            let leg = to_sensor.length();
            let apparent = 0.5 * (path + leg);
            if leg > 0.0 && apparent <= self.max_range && !accel.occluded(hit.point, sensor) {
                let d = to_sensor / leg;
                let taken = if d.dot(n) > 0.0 {
                    let e = self.return_energy(e1, refl.angle_to(d), mat, leg);
                    e1 -= e;
                    e
                } else if let Some(t) = trans {
                    let e = self.return_energy(e2, t.angle_to(d), mat, leg);
                    e2 -= e;
                    e
                } else {
                    0.0
                };
                if taken > 0.0 {
                    out.push(ReturnSignal { apparent_range: apparent, energy: taken, bounces, path: ReturnPath::Air });
                }
            }
        }

        let interactions = ray.interactions + 1;
        if interactions >= MAX_INTERACTIONS {
            return;
        }
        if bounces < self.cfg.max_bounces && e1 >= self.prune_below {
            stack.push(Ray {
                origin: hit.point,
                dir: refl,
                energy: e1.max(0.0),
                path,
                medium: ray.medium,
                reflections: bounces,
                interactions,
            });
        }
        if let Some(t) = trans {
            if e2 >= self.prune_below {
                stack.push(Ray {
                    origin: hit.point,
                    dir: t,
                    energy: e2.max(0.0),
                    path,
                    medium: next_medium,
                    reflections: ray.reflections,
                    interactions,
                });
            }
        }
    }

    /// Traces every azimuth column in parallel on the current rayon pool.
    /// Output does not depend on the number of threads.
    pub fn render(&self, robot_pose: &Pose, seed: u64) -> PolarImage {
        let sensor_pose = robot_pose.compose(&self.sensor.mount);
        let n_r = self.sensor.n_range_bins as usize;
        let mut img = PolarImage::zeros(self.sensor.n_azimuth as usize, n_r, self.sensor.range_resolution);
        img.seed = seed;
        img.data_mut().par_chunks_mut(n_r).enumerate().for_each_init(Vec::new, |signals, (a, column)| {
            signals.clear();
            self.trace_column(&sensor_pose, a as u32, seed, signals);
            bin_into(column, signals, self.sensor.range_resolution);
        });
        img
    }
}

/// Returns of one azimuth column for a sensor at `sensor_pose`.
pub fn trace_beam(
    scene: &Scene,
    sensor_pose: &Pose,
    azimuth_index: u32,
    sensor: &SensorModel,
    cfg: &TraceConfig,
    seed: u64,
) -> Result<Vec<ReturnSignal>, TraceError> {
    if azimuth_index >= sensor.n_azimuth {
        return Err(TraceError::Sensor(format!("azimuth index {azimuth_index} outside [0, {})", sensor.n_azimuth)));
    }
    let tracer = Tracer::new(scene, sensor, cfg)?;
    let mut out = Vec::new();
    tracer.trace_column(sensor_pose, azimuth_index, seed, &mut out);
    Ok(out)
}

/// Raw (noise-free) polar image of one frame.
pub fn simulate_frame(
    scene: &Scene,
    robot_pose: &Pose,
    sensor: &SensorModel,
    cfg: &TraceConfig,
    seed: u64,
) -> Result<PolarImage, TraceError> {
    Ok(Tracer::new(scene, sensor, cfg)?.render(robot_pose, seed))
}

/// Everything needed to render a frame: scene, sensor, tracing and noise.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub scene: Scene,
    pub sensor: SensorModel,
    pub trace: TraceConfig,
    pub noise: NoiseConfig,
}

impl Simulation {
    /// Noise-free frame.
    pub fn render_raw(&self, robot_pose: &Pose, seed: u64) -> Result<PolarImage, TraceError> {
        simulate_frame(&self.scene, robot_pose, &self.sensor, &self.trace, seed)
    }

    /// Frame after the noise stages. The noise field is keyed by the
    /// configured noise seed and the frame seed; the lidar-like preset
    /// renders without noise.
    pub fn render(&self, robot_pose: &Pose, seed: u64) -> Result<PolarImage, TraceError> {
        let raw = self.render_raw(robot_pose, seed)?;
        if self.trace.lidar_like {
            return Ok(raw);
        }
        let noise = NoiseConfig { seed: hash_key(self.noise.seed, &[seed]), ..self.noise };
        let mut img = add_noise(&raw, &noise);
        img.seed = seed;
        Ok(img)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::{box_mesh, quad, wall_x};
    use crate::sampling::BeamKind;
    use crate::wave::Material;

    fn specular(velocity: f64) -> Material {
        Material::new("spec", velocity, 0.0, 0.0, 1.0).unwrap()
    }

    fn single(mesh: TriangleMesh, m: Material) -> Scene {
        Scene::new(mesh, MaterialTable::new([m]).unwrap()).unwrap()
    }

    fn narrow(n: u32) -> SensorModel {
        SensorModel {
            n_azimuth: 8,
            range_resolution: 0.05,
            n_range_bins: 800,
            beam: BeamModel { kind: BeamKind::D2, width: 1f64.to_radians(), inside_prob: 0.9, n_samples: n },
            mount: Pose::IDENTITY,
        }
    }

    #[test]
    fn empty_scene_returns_nothing() {
        let scene = Scene::empty();
        let out = trace_beam(&scene, &Pose::IDENTITY, 0, &SensorModel::default(), &TraceConfig::default(), 1).unwrap();
        assert!(out.is_empty());
        let img = simulate_frame(&scene, &Pose::IDENTITY, &SensorModel::default(), &TraceConfig::default(), 1).unwrap();
        assert_eq!(img.sum(), 0.0);
    }

    #[test]
    fn single_wall_first_bounce() {
        let scene = single(wall_x(10.0, 50.0, 1), specular(0.1));
        let sensor = narrow(100);
        let cfg = TraceConfig { max_bounces: 1, ..TraceConfig::default() };
        let out = trace_beam(&scene, &Pose::IDENTITY, 0, &sensor, &cfg, 3).unwrap();
        assert!(!out.is_empty());
        for s in &out {
            assert!((s.apparent_range - 10.0).abs() <= sensor.range_resolution, "{s:?}");
            assert_eq!(s.bounces, 1);
        }
    }

    #[test]
    fn azimuth_out_of_range_is_rejected() {
        let scene = Scene::empty();
        assert!(trace_beam(&scene, &Pose::IDENTITY, 8, &narrow(1), &TraceConfig::default(), 0).is_err());
    }

    #[test]
    fn unknown_material_rejected() {
        let err = Scene::new(wall_x(1.0, 1.0, 5), MaterialTable::default()).unwrap_err();
        assert!(matches!(err, TraceError::UnknownMaterial { material: 5, .. }));
    }

    #[test]
    fn energy_budget_in_box_room() {
        let m = Material::new("wall", 0.1, 0.3, 0.3, 4.0).unwrap();
        let scene = single(box_mesh(Vec3::splat(-5.0), Vec3::splat(5.0), 1), m);
        let sensor = SensorModel { n_range_bins: 2000, ..SensorModel::default() };
        let cfg = TraceConfig { f_rx: 1.0, max_bounces: 6, ..TraceConfig::default() };
        for a in [0, 57, 200] {
            let out = trace_beam(&scene, &Pose::IDENTITY, a, &sensor, &cfg, 9).unwrap();
            let total: f64 = out.iter().map(|s| s.energy).sum();
            assert!(total <= cfg.total_emitted_energy + 1e-12, "total {total}");
            assert!(out.iter().all(|s| s.energy >= 0.0 && s.bounces <= cfg.max_bounces));
            assert!(out.iter().all(|s| s.apparent_range <= sensor.max_range()));
        }
    }

    #[test]
    fn lidar_like_takes_first_hit_of_mean_ray() {
        let m = Material::new("wall", 0.1, 0.3, 0.3, 4.0).unwrap();
        let scene = single(box_mesh(Vec3::new(-5.0, -5.0, -5.0), Vec3::new(7.0, 5.0, 5.0), 1), m);
        let out =
            trace_beam(&scene, &Pose::IDENTITY, 0, &SensorModel::default(), &TraceConfig::lidar_like(), 4).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0].apparent_range - 7.0).abs() < 1e-12);
        assert!((out[0].energy - 0.05).abs() < 1e-15);
    }

    #[test]
    fn thin_glass_passes_signal_through() {
        // A glass pane at 3 m in front of a wall at 6 m.
        let glass = Material::new("glass", 0.2, 0.1, 0.1, 2.0).unwrap();
        let wall = Material::new("wall", 0.1, 0.2, 0.3, 4.0).unwrap();
        let mut mesh = box_mesh(Vec3::new(3.0, -4.0, -4.0), Vec3::new(3.01, 4.0, 4.0), 1);
        mesh.append(&wall_x(6.0, 8.0, 2), &Pose::IDENTITY);
        let scene = Scene::new(mesh, MaterialTable::new([glass, wall]).unwrap()).unwrap();
        let out = trace_beam(&scene, &Pose::IDENTITY, 0, &narrow(20), &TraceConfig::default(), 5).unwrap();
        assert!(out.iter().any(|s| (s.apparent_range - 3.0).abs() < 0.05));
        assert!(out.iter().any(|s| (s.apparent_range - 6.0).abs() < 0.05));
    }

    #[test]
    fn frame_is_thread_independent() {
        let m = Material::new("wall", 0.1, 0.2, 0.3, 6.0).unwrap();
        let mut mesh = box_mesh(Vec3::new(-6.0, -4.0, -2.0), Vec3::new(8.0, 5.0, 3.0), 1);
        mesh.append(&quad(Vec3::new(2.0, 1.0, 0.0), Vec3::Y, Vec3::Z, 0.5, 1.0, 1), &Pose::IDENTITY);
        let scene = single(mesh, m);
        let sensor = SensorModel {
            n_azimuth: 64,
            beam: BeamModel { n_samples: 20, ..BeamModel::default() },
            ..SensorModel::default()
        };
        let cfg = TraceConfig::default();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_frame(&scene, &Pose::IDENTITY, &sensor, &cfg, 77).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
        assert!(a.sum() > 0.0);
    }
}
