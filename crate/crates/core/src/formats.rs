//! On-disk documents: scenes, model weights, heatmaps and loss histories.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::datagen::LossRecord;
use crate::error::{Error, Result};
use crate::heatmap::Heatmap;
use crate::mlp::{Dense, InputNorm, ModelMetadata, SurrogateModel, LAYER_DIMS};
use crate::scene::{normalize_orientation, Building, SamplingGrid, Scene, TerrainMesh};
use crate::solar::Period;

pub const SCENE_SCHEMA_VERSION: u32 = 1;
pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// How unknown fields are handled on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// Unknown fields are errors.
    #[default]
    Strict,
    /// Unknown fields are logged and ignored.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingDoc {
    pub id: String,
    pub center_x_m: f64,
    pub center_y_m: f64,
    #[serde(default)]
    pub base_z_m: f64,
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub orientation_deg: f64,
    /// Counts toward the second sunlight score when optimising.
    #[serde(default)]
    pub context_flag: bool,
    #[serde(default)]
    pub movable_flag: bool,
}

impl BuildingDoc {
    pub fn from_building(b: &Building) -> Self {
        Self {
            id: b.id.clone(),
            center_x_m: b.center_x_m,
            center_y_m: b.center_y_m,
            base_z_m: b.base_z_m,
            length_m: b.length_m,
            width_m: b.width_m,
            height_m: b.height_m,
            orientation_deg: b.orientation_deg,
            context_flag: false,
            movable_flag: false,
        }
    }

    pub fn to_building(&self) -> Building {
        Building {
            id: self.id.clone(),
            center_x_m: self.center_x_m,
            center_y_m: self.center_y_m,
            base_z_m: self.base_z_m,
            length_m: self.length_m,
            width_m: self.width_m,
            height_m: self.height_m,
            orientation_deg: normalize_orientation(self.orientation_deg),
        }
    }
}

fn default_min_hours() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDocument {
    pub schema_version: u32,
    pub latitude_deg: f64,
    #[serde(default)]
    pub period: Period,
    #[serde(default = "default_min_hours")]
    pub min_sunlight_hours: f64,
    pub buildings: Vec<BuildingDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terrain: Option<TerrainMesh>,
    pub grid: SamplingGrid,
}

const SCENE_KEYS: &[&str] = &[
    "schema_version",
    "latitude_deg",
    "period",
    "min_sunlight_hours",
    "buildings",
    "terrain",
    "grid",
];
const PERIOD_KEYS: &[&str] = &["date", "start_ast", "end_ast"];
const BUILDING_KEYS: &[&str] = &[
    "id",
    "center_x_m",
    "center_y_m",
    "base_z_m",
    "length_m",
    "width_m",
    "height_m",
    "orientation_deg",
    "context_flag",
    "movable_flag",
];
const TERRAIN_KEYS: &[&str] = &["vertices", "triangles"];
const GRID_KEYS: &[&str] = &["origin_x_m", "origin_y_m", "spacing_m", "nx", "ny", "plane_offset_m"];

/// Paths of object keys not in `known`.
fn unknown_keys(v: &Value, known: &[&str], path: &str, out: &mut Vec<String>) {
    if let Value::Object(map) = v {
        for k in map.keys() {
            if !known.contains(&k.as_str()) {
                out.push(if path.is_empty() { k.clone() } else { format!("{path}.{k}") });
            }
        }
    }
}

fn scene_unknown_keys(v: &Value) -> Vec<String> {
    let mut out = Vec::new();
    unknown_keys(v, SCENE_KEYS, "", &mut out);
    if let Some(p) = v.get("period") {
        unknown_keys(p, PERIOD_KEYS, "period", &mut out);
    }
    if let Some(Value::Array(bs)) = v.get("buildings") {
        for (k, b) in bs.iter().enumerate() {
            unknown_keys(b, BUILDING_KEYS, &format!("buildings[{k}]"), &mut out);
        }
    }
    if let Some(t) = v.get("terrain") {
        unknown_keys(t, TERRAIN_KEYS, "terrain", &mut out);
    }
    if let Some(g) = v.get("grid") {
        unknown_keys(g, GRID_KEYS, "grid", &mut out);
    }
    out
}

fn check_unknown(unknown: Vec<String>, mode: Strictness) -> Result<()> {
    match (unknown.first(), mode) {
        (None, _) => Ok(()),
        (Some(first), Strictness::Strict) => Err(Error::field(first.clone(), "unknown field")),
        (Some(_), Strictness::Lenient) => {
            for k in unknown {
                log::warn!("ignoring unknown field `{k}`");
            }
            Ok(())
        }
    }
}

fn check_version(v: &Value, expected: u32) -> Result<()> {
    let found = v
        .get("schema_version")
        .ok_or_else(|| Error::field("schema_version", "missing"))?
        .as_u64()
        .ok_or_else(|| Error::field("schema_version", "must be a non-negative integer"))?;
    if found != u64::from(expected) {
        return Err(Error::Version {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected,
        });
    }
    Ok(())
}

impl SceneDocument {
    pub fn new(scene: &Scene, grid: SamplingGrid) -> Self {
        Self {
            schema_version: SCENE_SCHEMA_VERSION,
            latitude_deg: scene.latitude_deg,
            period: scene.period,
            min_sunlight_hours: scene.min_sunlight_hours,
            buildings: scene.buildings.iter().map(BuildingDoc::from_building).collect(),
            terrain: scene.terrain.clone(),
            grid,
        }
    }

    /// Parses and validates a scene document.
    pub fn parse(text: &str, mode: Strictness) -> Result<Self> {
        let doc = Self::parse_schema(text, mode)?;
        doc.validate()?;
        Ok(doc)
    }

    /// Checks syntax, version and field names only; values are not validated.
    pub fn parse_schema(text: &str, mode: Strictness) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        check_version(&v, SCENE_SCHEMA_VERSION)?;
        check_unknown(scene_unknown_keys(&v), mode)?;
        let mut doc: SceneDocument = serde_json::from_value(v)?;
        for b in &mut doc.buildings {
            b.orientation_deg = normalize_orientation(b.orientation_deg);
        }
        Ok(doc)
    }

    pub fn load<R: Read>(mut r: R, mode: Strictness) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        Self::parse(&text, mode)
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCENE_SCHEMA_VERSION {
            return Err(Error::Version {
                found: self.schema_version,
                expected: SCENE_SCHEMA_VERSION,
            });
        }
        if !(self.min_sunlight_hours >= 0.0) {
            return Err(Error::field("min_sunlight_hours", "must be non-negative"));
        }
        self.scene().validate()?;
        self.grid.validate().map_err(|e| match e {
            Error::InvalidField { field, message } => Error::field(format!("grid.{field}"), message),
            e => e,
        })?;
        let mut ids: Vec<&str> = self.buildings.iter().map(|b| b.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::field("buildings", format!("duplicate id `{}`", w[0])));
        }
        Ok(())
    }

    pub fn scene(&self) -> Scene {
        Scene {
            latitude_deg: self.latitude_deg,
            period: self.period,
            buildings: self.buildings.iter().map(BuildingDoc::to_building).collect(),
            terrain: self.terrain.clone(),
            min_sunlight_hours: self.min_sunlight_hours,
        }
    }

    /// The scene without movable buildings, and the indices (into that
    /// scene) of context buildings.
    pub fn layout_base(&self) -> (Scene, Vec<usize>) {
        let mut scene = self.scene();
        let kept: Vec<&BuildingDoc> = self.buildings.iter().filter(|b| !b.movable_flag).collect();
        scene.buildings = kept.iter().map(|b| b.to_building()).collect();
        let context = (0..kept.len()).filter(|&k| kept[k].context_flag).collect();
        (scene, context)
    }

    /// Indices of buildings flagged as context.
    pub fn context_indices(&self) -> Vec<usize> {
        (0..self.buildings.len()).filter(|&k| self.buildings[k].context_flag).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDoc {
    /// Row-major `out x in`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub layer_dims: Vec<usize>,
    pub layers: Vec<LayerDoc>,
    pub input_norm: InputNorm,
    pub metadata: ModelMetadata,
}

impl ModelDocument {
    pub fn from_model(m: &SurrogateModel) -> Self {
        let mut dims = vec![m.layers.first().map_or(0, |l| l.in_dim)];
        dims.extend(m.layers.iter().map(|l| l.out_dim));
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            layer_dims: dims,
            layers: m
                .layers
                .iter()
                .map(|l| LayerDoc {
                    weights: l.weights.chunks(l.in_dim).map(<[f64]>::to_vec).collect(),
                    biases: l.biases.clone(),
                })
                .collect(),
            input_norm: m.input_norm.clone(),
            metadata: m.metadata.clone(),
        }
    }

    pub fn to_model(&self) -> Result<SurrogateModel> {
        if self.layer_dims != LAYER_DIMS {
            return Err(Error::ShapeMismatch(format!(
                "layer_dims {:?}, expected {LAYER_DIMS:?}",
                self.layer_dims
            )));
        }
        if self.layers.len() + 1 != self.layer_dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} layers for {} dims",
                self.layers.len(),
                self.layer_dims.len()
            )));
        }
        let mut layers = Vec::new();
        for (k, (l, w)) in self.layers.iter().zip(self.layer_dims.windows(2)).enumerate() {
            let (in_dim, out_dim) = (w[0], w[1]);
            if l.weights.len() != out_dim || l.weights.iter().any(|r| r.len() != in_dim) || l.biases.len() != out_dim {
                return Err(Error::ShapeMismatch(format!("layers[{k}] is not {out_dim}x{in_dim}")));
            }
            layers.push(Dense {
                in_dim,
                out_dim,
                weights: l.weights.concat(),
                biases: l.biases.clone(),
            });
        }
        let m = SurrogateModel {
            layers,
            input_norm: self.input_norm.clone(),
            metadata: self.metadata.clone(),
        };
        m.validate()?;
        Ok(m)
    }
}

/// Reads a model document. Malformed JSON is reported as a corrupt file.
pub fn load_model<R: Read>(mut r: R) -> Result<SurrogateModel> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::Corrupt(e.to_string()))?;
    check_version(&v, MODEL_SCHEMA_VERSION)?;
    let doc: ModelDocument = serde_json::from_value(v).map_err(|e| Error::Corrupt(e.to_string()))?;
    doc.to_model()
}

pub fn save_model<W: Write>(m: &SurrogateModel, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, &ModelDocument::from_model(m))?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn model_to_json(m: &SurrogateModel) -> String {
    serde_json::to_string_pretty(&ModelDocument::from_model(m)).expect("model serialises")
}

pub fn model_from_json(text: &str) -> Result<SurrogateModel> {
    load_model(text.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeatmapFormat {
    #[default]
    Csv,
    Json,
}

pub const HEATMAP_CSV_HEADER: [&str; 3] = ["x_m", "y_m", "sunlight_hours"];

/// One row per cell in row-major order, hours to four decimals.
pub fn export_heatmap(h: &Heatmap, format: HeatmapFormat) -> Result<Vec<u8>> {
    match format {
        HeatmapFormat::Json => Ok(serde_json::to_vec_pretty(h)?),
        HeatmapFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(HEATMAP_CSV_HEADER).map_err(csv_err)?;
            for j in 0..h.grid.ny {
                for i in 0..h.grid.nx {
                    w.write_record([
                        fmt_coord(h.grid.x(i)),
                        fmt_coord(h.grid.y(j)),
                        format!("{:.4}", h.get(i, j)),
                    ])
                    .map_err(csv_err)?;
                }
            }
            w.into_inner().map_err(|e| Error::Io(e.into_error()))
        }
    }
}

/// Shortest round-tripping decimal for grid coordinates.
fn fmt_coord(v: f64) -> String {
    let s = format!("{v}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Corrupt(e.to_string())
}

/// Rebuilds a heatmap from CSV rows. The grid is inferred from the
/// coordinates; the plane offset is not stored and comes from `plane_offset_m`.
pub fn import_heatmap_csv<R: Read>(r: R, plane_offset_m: f64) -> Result<Heatmap> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.iter().ne(HEATMAP_CSV_HEADER) {
        return Err(Error::Corrupt(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Corrupt(format!("bad number in row {}", rows.len() + 1)))
        };
        rows.push((num(0)?, num(1)?, num(2)?));
    }
    let Some(&(x0, y0, _)) = rows.first() else {
        return Err(Error::Corrupt("no cells".into()));
    };
    let nx = rows.iter().take_while(|r| r.1 == y0).count();
    if nx == 0 || rows.len() % nx != 0 {
        return Err(Error::Corrupt("rows do not form a grid".into()));
    }
    let ny = rows.len() / nx;
    let spacing = if nx > 1 {
        rows[1].0 - x0
    } else if ny > 1 {
        rows[nx].1 - y0
    } else {
        1.0
    };
    let grid = SamplingGrid {
        origin_x_m: x0,
        origin_y_m: y0,
        spacing_m: spacing,
        nx,
        ny,
        plane_offset_m,
    };
    grid.validate().map_err(|e| Error::Corrupt(e.to_string()))?;
    let tol = 1e-6 * spacing.abs().max(1.0);
    for (k, &(x, y, _)) in rows.iter().enumerate() {
        let (i, j) = (k % nx, k / nx);
        if (x - grid.x(i)).abs() > tol || (y - grid.y(j)).abs() > tol {
            return Err(Error::Corrupt(format!("row {} is off the grid", k + 1)));
        }
    }
    Ok(Heatmap {
        grid,
        values: rows.into_iter().map(|r| r.2).collect(),
    })
}

pub fn import_heatmap_json<R: Read>(r: R) -> Result<Heatmap> {
    let h: Heatmap = serde_json::from_reader(r)?;
    h.grid.validate()?;
    if h.values.len() != h.grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} values for a {}x{} grid",
            h.values.len(),
            h.grid.nx,
            h.grid.ny
        )));
    }
    Ok(h)
}

/// `update_index,batch_loss,trailing_avg`; the average is blank when it was
/// not evaluated at that update.
pub fn write_loss_csv<W: Write>(w: W, history: &[LossRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["update_index", "batch_loss", "trailing_avg"]).map_err(csv_err)?;
    for r in history {
        w.write_record([
            r.update_index.to_string(),
            format!("{}", r.batch_loss),
            r.trailing_avg.map(|a| format!("{a}")).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
