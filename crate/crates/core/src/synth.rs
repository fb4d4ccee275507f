//! Ray-cast synthetic LiDAR scenes with exact panoptic ground truth.
//!
//! The sensor sits at the origin and fires one ray through the center of
//! every pixel of its projection grid, so a noise-free scan projects back
//! with exactly one point per pixel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::PanopticFrame;
use crate::range_image::{Point, PointCloud, ProjectionConfig};

pub const CLASS_CAR: u32 = 10;
pub const CLASS_PERSON: u32 = 30;
pub const CLASS_ROAD: u32 = 40;
pub const CLASS_BUILDING: u32 = 50;
pub const CLASS_TRUNK: u32 = 71;

/// KITTI mounts the scanner this far above the road.
pub const SENSOR_HEIGHT: f64 = 1.73;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub projection: ProjectionConfig,
    pub min_range: f64,
    pub max_range: f64,
    /// Standard deviation of additive range noise, meters.
    pub range_noise: f64,
    /// Probability that a ray returns nothing.
    pub dropout: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            projection: ProjectionConfig::default(),
            min_range: 1.0,
            max_range: 80.0,
            range_noise: 0.0,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// Box rotated by `yaw` radians about the vertical axis.
    Box {
        center: [f64; 3],
        size: [f64; 3],
        #[serde(default)]
        yaw: f64,
    },
    /// Vertical cylinder.
    Cylinder {
        center: [f64; 2],
        radius: f64,
        z_min: f64,
        z_max: f64,
    },
    /// Vertical slab between two ground-plane endpoints.
    Wall {
        start: [f64; 2],
        end: [f64; 2],
        z_min: f64,
        z_max: f64,
        thickness: f64,
    },
    /// Infinite horizontal plane.
    Ground { z: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub class: u32,
    /// Ground-truth instance; 0 for stuff.
    #[serde(default)]
    pub instance: u32,
    #[serde(default = "default_remission")]
    pub remission: f32,
}

fn default_remission() -> f32 {
    0.5
}

impl SceneObject {
    pub fn new(shape: Shape, class: u32, instance: u32) -> Self {
        Self {
            shape,
            class,
            instance,
            remission: default_remission(),
        }
    }

    /// Box of `size` resting on the road with its center at (x, y).
    pub fn car(x: f64, y: f64, size: [f64; 3], yaw: f64, instance: u32) -> Self {
        let center = [x, y, -SENSOR_HEIGHT + size[2] / 2.0];
        Self::new(Shape::Box { center, size, yaw }, CLASS_CAR, instance)
    }

    pub fn person(x: f64, y: f64, instance: u32) -> Self {
        let shape = Shape::Cylinder {
            center: [x, y],
            radius: 0.3,
            z_min: -SENSOR_HEIGHT,
            z_max: -SENSOR_HEIGHT + 1.75,
        };
        Self::new(shape, CLASS_PERSON, instance)
    }

    pub fn road() -> Self {
        Self::new(Shape::Ground { z: -SENSOR_HEIGHT }, CLASS_ROAD, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default)]
    pub sensor: SensorModel,
    pub objects: Vec<SceneObject>,
}

/// Ray r(t) = t * dir from the origin.
#[derive(Debug, Clone, Copy)]
struct Ray {
    dir: [f64; 3],
}

enum Solid {
    Box {
        center: [f64; 3],
        half: [f64; 3],
        cos: f64,
        sin: f64,
    },
    Cylinder {
        center: [f64; 2],
        radius: f64,
        z_min: f64,
        z_max: f64,
    },
    Plane {
        z: f64,
    },
}

const EPS: f64 = 1e-9;

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl Solid {
    fn from_shape(shape: &Shape) -> Result<Self> {
        let bad = |what: &str| Err(Error::DegeneratePrimitive(what.to_string()));
        match *shape {
            Shape::Box { center, size, yaw } => {
                if !finite(&center) || !finite(&size) || !yaw.is_finite() || size.iter().any(|&s| s <= 0.0) {
                    return bad("box needs finite pose and positive size");
                }
                Ok(Solid::Box {
                    center,
                    half: [size[0] / 2.0, size[1] / 2.0, size[2] / 2.0],
                    cos: yaw.cos(),
                    sin: yaw.sin(),
                })
            }
            Shape::Cylinder {
                center,
                radius,
                z_min,
                z_max,
            } => {
                if !finite(&[center[0], center[1], radius, z_min, z_max]) || radius <= 0.0 || z_max <= z_min {
                    return bad("cylinder needs positive radius and height");
                }
                Ok(Solid::Cylinder {
                    center,
                    radius,
                    z_min,
                    z_max,
                })
            }
            Shape::Wall {
                start,
                end,
                z_min,
                z_max,
                thickness,
            } => {
                let (dx, dy) = (end[0] - start[0], end[1] - start[1]);
                let len = (dx * dx + dy * dy).sqrt();
                if !finite(&[start[0], start[1], end[0], end[1], z_min, z_max, thickness])
                    || len <= 0.0
                    || thickness <= 0.0
                    || z_max <= z_min
                {
                    return bad("wall needs distinct endpoints, thickness and height");
                }
                let yaw = dy.atan2(dx);
                Solid::from_shape(&Shape::Box {
                    center: [
                        (start[0] + end[0]) / 2.0,
                        (start[1] + end[1]) / 2.0,
                        (z_min + z_max) / 2.0,
                    ],
                    size: [len, thickness, z_max - z_min],
                    yaw,
                })
            }
            Shape::Ground { z } => {
                if !z.is_finite() {
                    return bad("ground height must be finite");
                }
                Ok(Solid::Plane { z })
            }
        }
    }

    /// Nearest positive hit distance.
    fn intersect(&self, ray: &Ray) -> Option<f64> {
        let d = ray.dir;
        match *self {
            Solid::Plane { z } => (d[2] * z > 0.0).then(|| z / d[2]),
            Solid::Box { center, half, cos, sin } => {
                // into the box frame: rotate by -yaw
                let o = [-center[0], -center[1], -center[2]];
                let ol = [cos * o[0] + sin * o[1], -sin * o[0] + cos * o[1], o[2]];
                let dl = [cos * d[0] + sin * d[1], -sin * d[0] + cos * d[1], d[2]];
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    if dl[k].abs() < EPS {
                        if ol[k].abs() > half[k] {
                            return None;
                        }
                    } else {
                        let a = (-half[k] - ol[k]) / dl[k];
                        let b = (half[k] - ol[k]) / dl[k];
                        t0 = t0.max(a.min(b));
                        t1 = t1.min(a.max(b));
                    }
                }
                if t0 > t1 || t1 <= EPS {
                    None
                } else if t0 > EPS {
                    Some(t0)
                } else {
                    Some(t1)
                }
            }
            Solid::Cylinder {
                center,
                radius,
                z_min,
                z_max,
            } => {
                let mut best: Option<f64> = None;
                let mut consider = |t: f64| {
                    if t > EPS && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                };
                let (ox, oy) = (-center[0], -center[1]);
                let a = d[0] * d[0] + d[1] * d[1];
                if a > EPS {
                    let b = 2.0 * (ox * d[0] + oy * d[1]);
                    let c = ox * ox + oy * oy - radius * radius;
                    let disc = b * b - 4.0 * a * c;
                    if disc >= 0.0 {
                        let s = disc.sqrt();
                        for t in [(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)] {
                            let z = t * d[2];
                            if z >= z_min && z <= z_max {
                                consider(t);
                            }
                        }
                    }
                }
                if d[2].abs() > EPS {
                    for cap in [z_min, z_max] {
                        let t = cap / d[2];
                        let (x, y) = (t * d[0] + ox, t * d[1] + oy);
                        if x * x + y * y <= radius * radius {
                            consider(t);
                        }
                    }
                }
                best
            }
        }
    }
}

/// Casts every sensor ray against the scene. Points come out in row-major
/// pixel order; `seed` drives range noise and dropout only.
pub fn synth_scene(spec: &SceneSpec, seed: u64) -> Result<(PointCloud, PanopticFrame)> {
    let sensor = &spec.sensor;
    sensor.projection.validate()?;
    if !(sensor.min_range >= 0.0 && sensor.max_range > sensor.min_range) {
        return Err(Error::InvalidConfig("sensor range window is empty".into()));
    }
    if !(0.0..1.0).contains(&sensor.dropout) || sensor.range_noise.is_nan() || sensor.range_noise < 0.0 {
        return Err(Error::InvalidConfig(
            "dropout must be in [0, 1) and noise non-negative".into(),
        ));
    }
    let solids = spec
        .objects
        .iter()
        .map(|o| Solid::from_shape(&o.shape))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sensor.range_noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let proj = &sensor.projection;
    let mut points = Vec::new();
    let mut semantics = Vec::new();
    let mut instances = Vec::new();

    if solids.is_empty() {
        return Ok((PointCloud::default(), PanopticFrame::default()));
    }

    for row in 0..proj.rows {
        let el = proj.row_elevation(row);
        for col in 0..proj.cols {
            let az = proj.col_azimuth(col);
            let dir = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
            let ray = Ray { dir };
            let hit = solids
                .iter()
                .enumerate()
                .filter_map(|(i, s)| s.intersect(&ray).map(|t| (t, i)))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            let Some((t, i)) = hit else { continue };
            if t < sensor.min_range || t > sensor.max_range {
                continue;
            }
            if sensor.dropout > 0.0 && rng.random::<f64>() < sensor.dropout {
                continue;
            }
            let t = if sensor.range_noise > 0.0 {
                (t + noise.sample(&mut rng)).max(sensor.min_range * 0.5).max(1e-3)
            } else {
                t
            };
            let obj = &spec.objects[i];
            points.push(Point::new(
                (t * dir[0]) as f32,
                (t * dir[1]) as f32,
                (t * dir[2]) as f32,
                obj.remission,
            ));
            semantics.push(obj.class);
            instances.push(obj.instance);
        }
    }
    Ok((PointCloud::new(points)?, PanopticFrame { semantics, instances }))
}

/// Knobs for [`random_street`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreetParams {
    /// Cars scattered over the driving lanes.
    pub cars: usize,
    /// Cars parked nose to tail along the curbs, 0.3 to 1.2 m apart.
    pub parked: usize,
    /// Pedestrians on the sidewalks, in groups of up to three.
    pub pedestrians: usize,
    pub buildings: bool,
    /// Objects are placed within this distance of the sensor along the street.
    pub radius: f64,
}

impl Default for StreetParams {
    fn default() -> Self {
        Self {
            cars: 4,
            parked: 6,
            pedestrians: 6,
            buildings: true,
            radius: 30.0,
        }
    }
}

type Footprint = [f64; 4];

fn disjoint(taken: &[Footprint], b: Footprint) -> bool {
    taken
        .iter()
        .all(|t| b[1] < t[0] || t[1] < b[0] || b[3] < t[2] || t[3] < b[2])
}

fn car_size(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [
        rng.random_range(3.8..4.8),
        rng.random_range(1.7..2.0),
        rng.random_range(1.4..1.7),
    ]
}

/// A randomized street: road, optional building fronts on both sides,
/// moving and parked cars, and pedestrians. Footprints never overlap, but
/// parked cars and pedestrian groups stand close together.
pub fn random_street(params: &StreetParams, sensor: SensorModel, seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe);
    let mut objects = vec![SceneObject::road()];
    if params.buildings {
        for side in [-1.0, 1.0] {
            let y = side * rng.random_range(14.0..20.0);
            objects.push(SceneObject::new(
                Shape::Wall {
                    start: [-60.0, y],
                    end: [60.0, y],
                    z_min: -SENSOR_HEIGHT,
                    z_max: 8.0,
                    thickness: 0.5,
                },
                CLASS_BUILDING,
                0,
            ));
        }
    }

    // keep the area around the sensor clear
    let mut taken: Vec<Footprint> = vec![[-3.0, 3.0, -2.0, 2.0]];
    let mut instance = 0;
    let radius = params.radius;

    let mut parked = 0;
    for _ in 0..params.parked * 20 {
        if parked == params.parked {
            break;
        }
        let y0 = if rng.random_bool(0.5) { -7.8 } else { 7.8 };
        let mut x = rng.random_range(-radius..radius);
        let run = rng.random_range(1..=params.parked - parked);
        for _ in 0..run {
            let size = car_size(&mut rng);
            let y = y0 + rng.random_range(-0.15..0.15);
            let b = [x, x + size[0], y - size[1] / 2.0, y + size[1] / 2.0];
            if b[1] > radius || !disjoint(&taken, b) {
                break;
            }
            taken.push(b);
            instance += 1;
            objects.push(SceneObject::car(x + size[0] / 2.0, y, size, 0.0, instance));
            parked += 1;
            x = b[1] + rng.random_range(0.3..1.2);
        }
    }

    let lanes = [-4.0, 4.0];
    let mut moving = 0;
    for _ in 0..params.cars * 50 {
        if moving == params.cars {
            break;
        }
        let size = car_size(&mut rng);
        let x = rng.random_range(-radius..radius);
        let y = lanes[rng.random_range(0..lanes.len())] + rng.random_range(-0.4..0.4);
        let yaw = rng.random_range(-0.15..0.15);
        let r = 0.5 * (size[0] * size[0] + size[1] * size[1]).sqrt() + 0.6;
        let b = [x - r, x + r, y - r, y + r];
        if disjoint(&taken, b) {
            taken.push(b);
            instance += 1;
            objects.push(SceneObject::car(x, y, size, yaw, instance));
            moving += 1;
        }
    }

    let mut walkers = 0;
    for _ in 0..params.pedestrians * 50 {
        if walkers == params.pedestrians {
            break;
        }
        let group = rng.random_range(1..=3usize).min(params.pedestrians - walkers);
        let x0 = rng.random_range(-radius..radius);
        let side = if rng.random_bool(0.5) { -1.0 } else { 1.0 };
        let y = side * rng.random_range(9.5..12.0);
        let spacing = rng.random_range(0.7..1.2);
        let b = [x0 - 0.3, x0 + spacing * (group - 1) as f64 + 0.3, y - 0.3, y + 0.3];
        if disjoint(&taken, b) {
            taken.push(b);
            for j in 0..group {
                instance += 1;
                objects.push(SceneObject::person(x0 + spacing * j as f64, y, instance));
            }
            walkers += group;
        }
    }
    SceneSpec { sensor, objects }
}

/// Two cars parked nose to tail 0.5 m apart, seen from the side.
pub fn close_parked_cars() -> SceneSpec {
    SceneSpec {
        sensor: SensorModel::default(),
        objects: vec![
            SceneObject::road(),
            SceneObject::car(8.2, 4.0, [4.4, 1.8, 1.5], 0.0, 1),
            SceneObject::car(13.1, 4.0, [4.4, 1.8, 1.5], 0.0, 2),
        ],
    }
}

/// Lower body of a car with the driver's upper body showing above it where
/// the windshield would be. Both are class car, instance 1. The driver is
/// the only part of the scene above `DRIVER_MIN_Z`.
pub fn driver_in_car() -> SceneSpec {
    let (x, y) = (10.0, 4.0);
    SceneSpec {
        sensor: SensorModel::default(),
        objects: vec![
            SceneObject::road(),
            SceneObject::new(
                Shape::Box {
                    center: [x, y, -SENSOR_HEIGHT + 0.45],
                    size: [4.2, 1.8, 0.9],
                    yaw: 0.0,
                },
                CLASS_CAR,
                1,
            ),
            SceneObject::new(
                Shape::Cylinder {
                    center: [x + 0.2, y],
                    radius: 0.25,
                    z_min: DRIVER_MIN_Z,
                    z_max: -0.1,
                },
                CLASS_CAR,
                1,
            ),
        ],
    }
}

pub const DRIVER_MIN_Z: f64 = -SENSOR_HEIGHT + 0.9;
