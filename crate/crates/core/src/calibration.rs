//! Fitting simulation parameters to reference frames by maximizing mean
//! mutual information.
//!
//! Parameters are addressed by path:
//!
//! | path                        | target                                |
//! |-----------------------------|---------------------------------------|
//! | `material.<name>.A` (`B`, `C`, `velocity`) | a material's lobe / speed |
//! | `trace.f_rx`                | receiver aperture fraction            |
//! | `beam.width_deg`, `beam.p`  | beam width (degrees), inside prob.    |
//! | `noise.range_blur_sigma`    | range blur, bins                      |
//! | `noise.system.amplitude`    | system noise amplitude                |
//! | `noise.ambient.amplitude`   | ambient noise amplitude               |
//!
//! The simulation seed stays fixed while optimizing, so the objective is a
//! deterministic function of the parameters.

use serde::{Deserialize, Serialize};

use crate::geometry::Pose;
use crate::imaging::PolarImage;
use crate::metrics::{mutual_information, MetricConfig, MetricError};
use crate::tracer::{Simulation, TraceError};

/// Distance kept from the `A + B = 1` boundary.
pub const CONSTRAINT_MARGIN: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error("invalid parameter spec: {0}")]
    Spec(String),
    #[error("unknown parameter '{0}'")]
    UnknownParam(String),
    #[error("parameter {name}={value} outside [{lower}, {upper}]")]
    OutOfBounds { name: String, value: f64, lower: f64, upper: f64 },
    #[error("{poses} poses but {references} reference frames")]
    FrameCount { poses: usize, references: usize },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRange {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub initial: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSpec {
    pub params: Vec<ParamRange>,
}

impl ParamSpec {
    pub fn new(params: Vec<ParamRange>) -> Result<Self, CalibrationError> {
        let spec = Self { params };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn initial(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.initial).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.params.is_empty() {
            return Err(CalibrationError::Spec("no parameters".into()));
        }
        for (i, p) in self.params.iter().enumerate() {
            if !(p.lower < p.upper) || !p.lower.is_finite() || !p.upper.is_finite() {
                return Err(CalibrationError::Spec(format!("{}: lower must be < upper", p.name)));
            }
            if !(p.lower..=p.upper).contains(&p.initial) {
                return Err(CalibrationError::Spec(format!("{}: initial {} outside bounds", p.name, p.initial)));
            }
            if self.params[..i].iter().any(|q| q.name == p.name) {
                return Err(CalibrationError::Spec(format!("{} listed twice", p.name)));
            }
        }
        Ok(())
    }

    pub fn check_bounds(&self, x: &[f64]) -> Result<(), CalibrationError> {
        if x.len() != self.dim() {
            return Err(CalibrationError::Spec(format!("expected {} values, got {}", self.dim(), x.len())));
        }
        for (p, &v) in self.params.iter().zip(x) {
            if !(p.lower..=p.upper).contains(&v) {
                return Err(CalibrationError::OutOfBounds {
                    name: p.name.clone(),
                    value: v,
                    lower: p.lower,
                    upper: p.upper,
                });
            }
        }
        Ok(())
    }

    /// Clamps into the box, then pulls every material's `(A, B)` pair back
    /// to `A + B <= 1 - margin`. A pair with both members free moves
    /// orthogonally onto the constraint line; otherwise the free member
    /// takes the whole correction. `fixed_ab` supplies the values of
    /// members that are not parameters.
    pub fn project(&self, x: &mut [f64], fixed_ab: impl Fn(&str) -> Option<(f64, f64)>) {
        for (v, p) in x.iter_mut().zip(&self.params) {
            *v = v.clamp(p.lower, p.upper);
        }
        let limit = 1.0 - CONSTRAINT_MARGIN;
        let mut seen: Vec<&str> = Vec::new();
        for p in &self.params {
            let Some((mat, _)) = material_field(&p.name) else { continue };
            if seen.contains(&mat) {
                continue;
            }
            seen.push(mat);
            let ia = self.index_of(&format!("material.{mat}.A"));
            let ib = self.index_of(&format!("material.{mat}.B"));
            let Some((fa, fb)) = fixed_ab(mat) else { continue };
            let a = ia.map_or(fa, |i| x[i]);
            let b = ib.map_or(fb, |i| x[i]);
            let excess = a + b - limit;
            if excess <= 0.0 {
                continue;
            }
            match (ia, ib) {
                (Some(i), Some(j)) => {
                    let (pi, pj) = (&self.params[i], &self.params[j]);
                    let mut na = (a - excess / 2.0).clamp(pi.lower, pi.upper);
                    let mut nb = (limit - na).clamp(pj.lower, pj.upper);
                    if na + nb > limit {
                        na = (limit - nb).clamp(pi.lower, pi.upper);
                    }
                    if na + nb > limit {
                        nb = (limit - na).max(pj.lower);
                    }
                    x[i] = na;
                    x[j] = nb;
                }
                (Some(i), None) => x[i] = (limit - b).max(self.params[i].lower),
                (None, Some(j)) => x[j] = (limit - a).max(self.params[j].lower),
                (None, None) => {}
            }
        }
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }
}

/// `material.<name>.<field>` → `(name, field)`.
fn material_field(path: &str) -> Option<(&str, &str)> {
    let rest = path.strip_prefix("material.")?;
    let dot = rest.rfind('.')?;
    Some((&rest[..dot], &rest[dot + 1..]))
}

/// Current `(A, B)` of a material in `sim`.
pub fn material_ab(sim: &Simulation, name: &str) -> Option<(f64, f64)> {
    let t = sim.scene.materials();
    t.get(t.id_of(name)?).map(|m| (m.a, m.b))
}

/// A copy of `base` with `values` written to the paths of `spec`.
pub fn apply_params(base: &Simulation, spec: &ParamSpec, values: &[f64]) -> Result<Simulation, CalibrationError> {
    spec.check_bounds(values)?;
    let mut sim = base.clone();
    let mut materials = base.scene.materials().clone();
    let mut materials_changed = false;
    for (p, &v) in spec.params.iter().zip(values) {
        if let Some((mat, field)) = material_field(&p.name) {
            let id = materials.id_of(mat).ok_or_else(|| CalibrationError::UnknownParam(p.name.clone()))?;
            let m = materials.get_mut(id).expect("id from table");
            match field {
                "A" => m.a = v,
                "B" => m.b = v,
                "C" => m.c = v,
                "velocity" => m.velocity = v,
                _ => return Err(CalibrationError::UnknownParam(p.name.clone())),
            }
            materials_changed = true;
            continue;
        }
        match p.name.as_str() {
            "trace.f_rx" => sim.trace.f_rx = v,
            "beam.width_deg" => sim.sensor.beam.width = v.to_radians(),
            "beam.p" => sim.sensor.beam.inside_prob = v,
            "noise.range_blur_sigma" => sim.noise.range_blur_sigma = v,
            "noise.system.amplitude" => sim.noise.system.set_amplitude(v),
            "noise.ambient.amplitude" => sim.noise.ambient.set_amplitude(v),
            _ => return Err(CalibrationError::UnknownParam(p.name.clone())),
        }
    }
    if materials_changed {
        sim.scene = base.scene.with_materials(materials)?;
    }
    sim.noise.validate().map_err(CalibrationError::Spec)?;
    Ok(sim)
}

/// Mean mutual information between frames rendered at `values` (all with
/// `seed`) and the references.
pub fn evaluate_objective(
    values: &[f64],
    spec: &ParamSpec,
    base: &Simulation,
    poses: &[Pose],
    references: &[PolarImage],
    seed: u64,
    metric: &MetricConfig,
) -> Result<f64, CalibrationError> {
    if poses.len() != references.len() || poses.is_empty() {
        return Err(CalibrationError::FrameCount { poses: poses.len(), references: references.len() });
    }
    let sim = apply_params(base, spec, values)?;
    let mut total = 0.0;
    for (pose, reference) in poses.iter().zip(references) {
        let frame = sim.render(pose, seed)?;
        total += mutual_information(&frame, reference, metric)?;
    }
    Ok(total / poses.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub names: Vec<String>,
    pub best: Vec<f64>,
    pub best_value: f64,
    /// Best objective seen after each iteration; non-decreasing.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

struct Budget<'a, F> {
    f: F,
    spec: &'a ParamSpec,
    project: &'a dyn Fn(&mut [f64]),
    used: usize,
    max: usize,
    best: Vec<f64>,
    best_value: f64,
}

impl<F: FnMut(&[f64]) -> f64> Budget<'_, F> {
    /// Projects `x` in place and evaluates it, or `None` once the budget is spent.
    fn eval(&mut self, x: &mut [f64]) -> Option<f64> {
        if self.used >= self.max {
            return None;
        }
        (self.project)(x);
        debug_assert!(self.spec.check_bounds(x).is_ok());
        self.used += 1;
        let v = match (self.f)(x) {
            v if v.is_nan() => f64::NEG_INFINITY,
            v => v,
        };
        if v > self.best_value || self.best.is_empty() {
            self.best_value = v;
            self.best = x.to_vec();
        }
        Some(v)
    }
}

/// Maximizes `f` with a box-projected Nelder–Mead simplex (reflection 1,
/// expansion 2, contraction ½, shrink ½). The initial simplex steps 10 % of
/// each parameter's range from the initial point. Stops when the spread of
/// objective values across the simplex drops below `tolerance` or after
/// `max_evals` evaluations.
///
/// `project` maps proposals onto the feasible set; use
/// [`ParamSpec::project`] for material constraints, or a box clamp.
pub fn nelder_mead(
    f: impl FnMut(&[f64]) -> f64,
    spec: &ParamSpec,
    project: &dyn Fn(&mut [f64]),
    max_evals: usize,
    tolerance: f64,
) -> CalibrationResult {
    let n = spec.dim();
    let mut b = Budget { f, spec, project, used: 0, max: max_evals, best: Vec::new(), best_value: f64::NEG_INFINITY };
    let mut trace = Vec::new();

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut x0 = spec.initial();
    if let Some(v) = b.eval(&mut x0) {
        simplex.push((x0, v));
    }
    for (i, p) in spec.params.iter().enumerate() {
        let mut x = simplex.first().map_or_else(|| spec.initial(), |s| s.0.clone());
        let step = 0.1 * (p.upper - p.lower);
        x[i] = if x[i] + step <= p.upper { x[i] + step } else { x[i] - step };
        match b.eval(&mut x) {
            Some(v) => simplex.push((x, v)),
            None => break,
        }
    }

    if simplex.len() == n + 1 {
        trace.push(b.best_value);
        'outer: loop {
            // Best first; the stable sort keeps earlier vertices ahead on ties.
            simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
            let (f_best, f_worst) = (simplex[0].1, simplex[n].1);
            if f_best - f_worst < tolerance || (f_best == f_worst) {
                break;
            }
            let f_second = simplex[n - 1].1;
            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v / n as f64;
                }
            }
            let worst = simplex[n].0.clone();
            let along = |t: f64, target: &[f64]| -> Vec<f64> {
                centroid.iter().zip(target).map(|(c, x)| c + t * (x - c)).collect()
            };

            let mut xr = along(-1.0, &worst);
            let Some(fr) = b.eval(&mut xr) else { break };
            if fr > f_best {
                let mut xe = along(2.0, &xr);
                let Some(fe) = b.eval(&mut xe) else {
                    simplex[n] = (xr, fr);
                    break;
                };
                simplex[n] = if fe > fr { (xe, fe) } else { (xr, fr) };
            } else if fr > f_second {
                simplex[n] = (xr, fr);
            } else {
                let outside = fr > simplex[n].1;
                let mut xc = if outside { along(0.5, &xr) } else { along(0.5, &worst) };
                let Some(fc) = b.eval(&mut xc) else { break };
                if (outside && fc >= fr) || (!outside && fc > simplex[n].1) {
                    simplex[n] = (xc, fc);
                } else {
                    let best = simplex[0].0.clone();
                    for vertex in simplex.iter_mut().skip(1) {
                        let mut xs: Vec<f64> = best.iter().zip(&vertex.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                        let Some(fs) = b.eval(&mut xs) else {
                            trace.push(b.best_value);
                            break 'outer;
                        };
                        *vertex = (xs, fs);
                    }
                }
            }
            trace.push(b.best_value);
        }
    }
    if trace.last() != Some(&b.best_value) && !b.best.is_empty() {
        trace.push(b.best_value);
    }
    CalibrationResult {
        names: spec.names(),
        best: if b.best.is_empty() { spec.initial() } else { b.best },
        best_value: b.best_value,
        trace,
        evaluations: b.used,
    }
}

/// Evaluates every point of a `points_per_dim^dim` lattice spanning the
/// bounds (midpoint for a single point) and returns the argmax; ties go to
/// the first point in lexicographic order.
pub fn grid_search(
    mut f: impl FnMut(&[f64]) -> f64,
    spec: &ParamSpec,
    project: &dyn Fn(&mut [f64]),
    points_per_dim: usize,
) -> CalibrationResult {
    let n = spec.dim();
    let axis = |p: &ParamRange, i: usize| -> f64 {
        if points_per_dim <= 1 {
            0.5 * (p.lower + p.upper)
        } else {
            p.lower + (p.upper - p.lower) * i as f64 / (points_per_dim - 1) as f64
        }
    };
    let total = points_per_dim.max(1).pow(n as u32);
    let (mut best, mut best_value) = (spec.initial(), f64::NEG_INFINITY);
    let mut trace = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    for k in 0..total {
        let mut x: Vec<f64> = spec.params.iter().zip(&idx).map(|(p, &i)| axis(p, i)).collect();
        project(&mut x);
        let v = match f(&x) {
            v if v.is_nan() => f64::NEG_INFINITY,
            v => v,
        };
        if v > best_value || k == 0 {
            best_value = v;
            best = x;
        }
        trace.push(best_value);
        for d in (0..n).rev() {
            idx[d] += 1;
            if idx[d] < points_per_dim {
                break;
            }
            idx[d] = 0;
        }
    }
    CalibrationResult { names: spec.names(), best, best_value, trace, evaluations: total }
}

/// Box clamp only.
pub fn clamp_to_box(spec: &ParamSpec) -> impl Fn(&mut [f64]) + '_ {
    move |x: &mut [f64]| spec.project(x, |_| None)
}

/// Box clamp plus the `A + B < 1` constraint, reading non-calibrated
/// members from `base`.
pub fn material_projection<'a>(spec: &'a ParamSpec, base: &'a Simulation) -> impl Fn(&mut [f64]) + 'a {
    move |x: &mut [f64]| spec.project(x, |m| material_ab(base, m))
}

/// Nelder–Mead over the simulation: maps errors to `-∞`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate(
    spec: &ParamSpec,
    base: &Simulation,
    poses: &[Pose],
    references: &[PolarImage],
    seed: u64,
    metric: &MetricConfig,
    max_evals: usize,
    tolerance: f64,
) -> Result<CalibrationResult, CalibrationError> {
    spec.validate()?;
    if poses.len() != references.len() || poses.is_empty() {
        return Err(CalibrationError::FrameCount { poses: poses.len(), references: references.len() });
    }
    // Surface configuration errors up front instead of as -∞ everywhere.
    apply_params(base, spec, &spec.initial())?;
    let project = material_projection(spec, base);
    let objective =
        |x: &[f64]| evaluate_objective(x, spec, base, poses, references, seed, metric).unwrap_or(f64::NEG_INFINITY);
    Ok(nelder_mead(objective, spec, &project, max_evals, tolerance))
}
