//! Scene description: buildings, sampling grids, terrain, and the
//! dimensionless coordinate transforms used by the surrogate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solar::Period;

/// Offset of the building centre in the local frame (unit = total size).
pub const LOCAL_CENTER_OFFSET: f64 = 0.2;

/// Polar bounds of the surrogate's valid sampling area.
pub const VALID_THETA_DEG: (f64, f64) = (30.0, 150.0);
pub const VALID_R: (f64, f64) = (0.2, 3.2);

/// A world-space point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

/// An oriented cuboid building.
///
/// `orientation_deg` is the counter-clockwise angle from east to the length
/// axis, normalised into `[0, 180)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub id: String,
    pub center_x_m: f64,
    pub center_y_m: f64,
    #[serde(default)]
    pub base_z_m: f64,
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub orientation_deg: f64,
}

impl Building {
    pub fn new(
        id: impl Into<String>,
        center: (f64, f64),
        dims: (f64, f64, f64),
        orientation_deg: f64,
    ) -> Result<Self> {
        let b = Self {
            id: id.into(),
            center_x_m: center.0,
            center_y_m: center.1,
            base_z_m: 0.0,
            length_m: dims.0,
            width_m: dims.1,
            height_m: dims.2,
            orientation_deg: normalize_orientation(orientation_deg),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn with_base(mut self, base_z_m: f64) -> Self {
        self.base_z_m = base_z_m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length_m", self.length_m),
            ("width_m", self.width_m),
            ("height_m", self.height_m),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::field(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("center_x_m", self.center_x_m),
            ("center_y_m", self.center_y_m),
            ("base_z_m", self.base_z_m),
        ] {
            if !v.is_finite() {
                return Err(Error::field(name, "must be finite"));
            }
        }
        if !(0.0..180.0).contains(&self.orientation_deg) {
            return Err(Error::field(
                "orientation_deg",
                format!("{} not in [0, 180)", self.orientation_deg),
            ));
        }
        Ok(())
    }

    pub fn top_z(&self) -> f64 {
        self.base_z_m + self.height_m
    }

    /// Unit vectors along the length and width axes.
    pub fn axes(&self) -> ((f64, f64), (f64, f64)) {
        let (s, c) = self.orientation_deg.to_radians().sin_cos();
        ((c, s), (-s, c))
    }

    /// Footprint corners, counter-clockwise.
    pub fn footprint(&self) -> [(f64, f64); 4] {
        let ((ux, uy), (vx, vy)) = self.axes();
        let (hl, hw) = (0.5 * self.length_m, 0.5 * self.width_m);
        let (cx, cy) = (self.center_x_m, self.center_y_m);
        [
            (cx - hl * ux - hw * vx, cy - hl * uy - hw * vy),
            (cx + hl * ux - hw * vx, cy + hl * uy - hw * vy),
            (cx + hl * ux + hw * vx, cy + hl * uy + hw * vy),
            (cx - hl * ux + hw * vx, cy - hl * uy + hw * vy),
        ]
    }

    /// Returns a copy with every length multiplied by `k` about the origin.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            center_x_m: self.center_x_m * k,
            center_y_m: self.center_y_m * k,
            base_z_m: self.base_z_m * k,
            length_m: self.length_m * k,
            width_m: self.width_m * k,
            height_m: self.height_m * k,
            ..self.clone()
        }
    }
}

/// Folds any angle into `[0, 180)`; a rectangle is symmetric under half turns.
pub fn normalize_orientation(deg: f64) -> f64 {
    let r = deg.rem_euclid(180.0);
    if r >= 180.0 {
        0.0
    } else {
        r
    }
}

/// Building size relative to its total size `L + W + H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeSize {
    pub r_l: f64,
    pub r_w: f64,
    pub r_h: f64,
}

/// Polar coordinates in the building's dimensionless local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalPolarPoint {
    pub theta_deg: f64,
    pub r: f64,
}

impl LocalPolarPoint {
    /// Converts local Cartesian coordinates (unit = total size).
    pub fn from_local_xy(x: f64, y: f64) -> Self {
        let theta_deg = y.atan2(x).to_degrees().clamp(0.0, 180.0);
        Self {
            theta_deg,
            r: x.hypot(y),
        }
    }
}

/// Relative size with an optional effective-height override.
pub fn relative_size(b: &Building, height_override: Option<f64>) -> Result<(RelativeSize, f64)> {
    let h = height_override.unwrap_or(b.height_m);
    if !(h > 0.0) {
        return Err(Error::field("height_m", format!("effective height {h} must be positive")));
    }
    let total = b.length_m + b.width_m + h;
    Ok((
        RelativeSize {
            r_l: b.length_m / total,
            r_w: b.width_m / total,
            r_h: h / total,
        },
        total,
    ))
}

/// Dimensionless surrogate inputs for a point in the building-centred frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateInputs {
    pub size: RelativeSize,
    pub polar: LocalPolarPoint,
    /// Ratio of the full total size to the height-reduced total size.
    pub eta: f64,
}

/// Maps a point `(x, y, z)` relative to the footprint centre and base onto
/// the surrogate's feature space, absorbing the point height into the
/// building (translation equivalence) and dividing out total size (scaling
/// equivalence).
pub fn to_surrogate_inputs(b: &Building, x: f64, y: f64, z: f64) -> Result<SurrogateInputs> {
    if z >= b.height_m {
        return Err(Error::AboveRoof);
    }
    let full = b.length_m + b.width_m + b.height_m;
    let reduced = full - z;
    let eta = full / reduced;
    let rx = x / reduced;
    let ry = y / reduced + LOCAL_CENTER_OFFSET;
    Ok(SurrogateInputs {
        size: RelativeSize {
            r_l: b.length_m / reduced,
            r_w: b.width_m / reduced,
            r_h: (b.height_m - z) / reduced,
        },
        polar: LocalPolarPoint::from_local_xy(rx, ry),
        eta,
    })
}

/// Translates a world point into the building-centred frame. The frame keeps
/// world axes; orientation reaches the surrogate as a feature instead.
pub fn world_to_building_frame(b: &Building, p: Point3) -> (f64, f64, f64) {
    (p.x - b.center_x_m, p.y - b.center_y_m, p.z - b.base_z_m)
}

pub fn in_valid_sampling_area(p: LocalPolarPoint) -> bool {
    (VALID_THETA_DEG.0..=VALID_THETA_DEG.1).contains(&p.theta_deg)
        && (VALID_R.0..=VALID_R.1).contains(&p.r)
}

/// True when `(x, y)` lies inside or on the rotated footprint.
pub fn point_under_building(b: &Building, x: f64, y: f64) -> bool {
    let (dx, dy) = (x - b.center_x_m, y - b.center_y_m);
    let reach = 0.5 * (b.length_m + b.width_m) + 1e-6;
    if dx.abs() > reach || dy.abs() > reach {
        return false;
    }
    let ((ux, uy), (vx, vy)) = b.axes();
    let along = dx * ux + dy * uy;
    let across = dx * vx + dy * vy;
    const EPS: f64 = 1e-9;
    along.abs() <= 0.5 * b.length_m + EPS && across.abs() <= 0.5 * b.width_m + EPS
}

/// A regular grid of sampling points on a horizontal plane (or draped over
/// terrain).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingGrid {
    pub origin_x_m: f64,
    pub origin_y_m: f64,
    pub spacing_m: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "default_plane_offset")]
    pub plane_offset_m: f64,
}

fn default_plane_offset() -> f64 {
    0.9
}

impl SamplingGrid {
    pub fn new(origin: (f64, f64), spacing_m: f64, nx: usize, ny: usize) -> Result<Self> {
        let g = Self {
            origin_x_m: origin.0,
            origin_y_m: origin.1,
            spacing_m,
            nx,
            ny,
            plane_offset_m: default_plane_offset(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_plane_offset(mut self, offset: f64) -> Self {
        self.plane_offset_m = offset;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing_m > 0.0) || !self.spacing_m.is_finite() {
            return Err(Error::field("spacing_m", "must be positive"));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::field("nx", "grid must have at least one cell per axis"));
        }
        if !self.origin_x_m.is_finite() || !self.origin_y_m.is_finite() || !self.plane_offset_m.is_finite() {
            return Err(Error::field("origin_x_m", "must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.origin_x_m + i as f64 * self.spacing_m
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.origin_y_m + j as f64 * self.spacing_m
    }

    /// Row-major cell index.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// All grid points in row-major order, lifted onto the terrain when given.
    pub fn points(&self, terrain: Option<&TerrainMesh>) -> Vec<Point3> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (x, y) = (self.x(i), self.y(j));
                let ground = terrain.and_then(|t| t.elevation_at(x, y)).unwrap_or(0.0);
                out.push(Point3::new(x, y, ground + self.plane_offset_m));
            }
        }
        out
    }
}

/// Triangulated ground surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

impl TerrainMesh {
    pub fn new(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let t = Self { vertices, triangles };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= self.vertices.len()) {
                return Err(Error::field(
                    format!("terrain.triangles[{k}]"),
                    "vertex index out of range",
                ));
            }
            let [a, b, c] = tri.map(|i| self.vertices[i]);
            let area2 = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            if area2.abs() <= 1e-12 {
                return Err(Error::field(
                    format!("terrain.triangles[{k}]"),
                    "degenerate triangle",
                ));
            }
        }
        Ok(())
    }

    /// Barycentric elevation at `(x, y)`, or `None` outside the mesh.
    pub fn elevation_at(&self, x: f64, y: f64) -> Option<f64> {
        const EPS: f64 = 1e-9;
        for tri in &self.triangles {
            let [a, b, c] = tri.map(|i| self.vertices[i]);
            let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
            let l1 = ((b[1] - c[1]) * (x - c[0]) + (c[0] - b[0]) * (y - c[1])) / det;
            let l2 = ((c[1] - a[1]) * (x - c[0]) + (a[0] - c[0]) * (y - c[1])) / det;
            let l3 = 1.0 - l1 - l2;
            if l1 >= -EPS && l2 >= -EPS && l3 >= -EPS {
                return Some(l1 * a[2] + l2 * b[2] + l3 * c[2]);
            }
        }
        None
    }
}

/// A site to assess.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub latitude_deg: f64,
    pub period: Period,
    pub buildings: Vec<Building>,
    pub terrain: Option<TerrainMesh>,
    pub min_sunlight_hours: f64,
}

impl Scene {
    pub fn new(latitude_deg: f64, buildings: Vec<Building>) -> Self {
        Self {
            latitude_deg,
            period: Period::default(),
            buildings,
            terrain: None,
            min_sunlight_hours: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.latitude_deg) {
            return Err(Error::field("latitude_deg", "must be within [-90, 90]"));
        }
        if !(25.0..=35.0).contains(&self.latitude_deg) {
            log::warn!(
                "latitude {} outside the surrogate's trained range [25, 35]",
                self.latitude_deg
            );
        }
        if !(self.period.start_ast < self.period.end_ast) {
            return Err(Error::field("period", "start_ast must precede end_ast"));
        }
        for (k, b) in self.buildings.iter().enumerate() {
            b.validate().map_err(|e| prefix_field(e, &format!("buildings[{k}]")))?;
        }
        if let Some(t) = &self.terrain {
            t.validate()?;
        }
        Ok(())
    }

    pub fn under_any_building(&self, x: f64, y: f64) -> bool {
        self.buildings.iter().any(|b| point_under_building(b, x, y))
    }
}

pub(crate) fn prefix_field(e: Error, prefix: &str) -> Error {
    match e {
        Error::InvalidField { field, message } => Error::InvalidField {
            field: format!("{prefix}.{field}"),
            message,
        },
        other => other,
    }
}
