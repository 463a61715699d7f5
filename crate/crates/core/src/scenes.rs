//! Built-in demonstration sites.
//!
//! These are reconstructed analogs of typical residential layouts, not
//! surveyed sites. Every experiment that uses them says so in its report.

use crate::scene::{Building, SamplingGrid, Scene, TerrainMesh};

/// Latitude used by the demonstration sites (Shanghai, 31 deg 15 min N).
pub const DEMO_LATITUDE_DEG: f64 = 31.25;

/// A 150 m x 160 m neighbourhood block of 45 m slab buildings in three
/// rows, sampled on a 1 m grid.
pub fn multi_building_site() -> (Scene, SamplingGrid) {
    let mut buildings = Vec::new();
    let rows = [(18.0, 0.0), (78.0, 0.0), (138.0, 8.0)];
    for (r, &(y, phi)) in rows.iter().enumerate() {
        for (c, &x) in [38.0, 112.0].iter().enumerate() {
            let id = format!("r{}c{}", r + 1, c + 1);
            buildings.push(Building::new(id, (x, y), (42.0, 15.0, 45.0), phi).expect("valid demo building"));
        }
    }
    let scene = Scene::new(DEMO_LATITUDE_DEG, buildings);
    let grid = SamplingGrid::new((0.0, 0.0), 1.0, 151, 161).expect("valid demo grid");
    (scene, grid)
}

/// A 30 m building with a 60 m slab 10 m to its south. The taller slab
/// keeps the smaller building's south facade below two hours.
pub fn canyon_site() -> (Scene, SamplingGrid) {
    let north = Building::new("north", (0.0, 40.0), (40.0, 12.0, 30.0), 0.0).expect("valid demo building");
    let slab = Building::new("slab", (0.0, 18.0), (80.0, 12.0, 60.0), 0.0).expect("valid demo building");
    let grid = SamplingGrid::new((-40.0, -40.0), 1.0, 81, 101).expect("valid demo grid");
    (Scene::new(DEMO_LATITUDE_DEG, vec![north, slab]), grid)
}

/// Terrain height: a flat plateau around the origin with slopes on all
/// four sides (north and east rise, south and west fall).
fn slope_height(x: f64, y: f64) -> f64 {
    let along = |v: f64, lo: f64, hi: f64, z_lo: f64, z_hi: f64| {
        if v < -30.0 {
            z_lo * (-30.0 - v) / (-30.0 - lo)
        } else if v > 30.0 {
            z_hi * (v - 30.0) / (hi - 30.0)
        } else {
            0.0
        }
    };
    along(x, -150.0, 150.0, -10.0, 10.0) + along(y, -100.0, 250.0, -15.0, 25.0)
}

/// A 20 x 20 x 60 m tower on a flat plateau at elevation 0 surrounded by
/// four slopes, sampled on a 2 m grid draped over the terrain.
pub fn slope_site() -> (Scene, SamplingGrid) {
    let xs = [-150.0, -30.0, 30.0, 150.0];
    let ys = [-100.0, -30.0, 30.0, 250.0];
    let mut vertices = Vec::new();
    for &y in &ys {
        for &x in &xs {
            vertices.push([x, y, slope_height(x, y)]);
        }
    }
    let mut triangles = Vec::new();
    for j in 0..3 {
        for i in 0..3 {
            let a = j * 4 + i;
            triangles.push([a, a + 1, a + 5]);
            triangles.push([a, a + 5, a + 4]);
        }
    }
    let terrain = TerrainMesh::new(vertices, triangles).expect("valid demo terrain");
    let tower = Building::new("tower", (0.0, 0.0), (20.0, 20.0, 60.0), 0.0).expect("valid demo building");
    let mut scene = Scene::new(DEMO_LATITUDE_DEG, vec![tower]);
    scene.terrain = Some(terrain);
    let grid = SamplingGrid::new((-140.0, -60.0), 2.0, 141, 151).expect("valid demo grid");
    (scene, grid)
}

/// The plot available to the placed building in the optimisation analog:
/// its south-west bounding corner ranges over x in [0, 7.5], y in [30, 80].
///
/// Context: a row of 30 m slabs to the south and three 36 m slabs to the
/// north whose south facades form the second sunlight score.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationSite {
    pub scene: Scene,
    pub grid: SamplingGrid,
    /// Indices into `scene.buildings` of the context buildings that count
    /// toward the second sunlight score.
    pub northern: Vec<usize>,
}

pub fn optimization_site() -> OptimizationSite {
    let b = |id: &str, x: f64, y: f64, l: f64, w: f64, h: f64| {
        Building::new(id, (x, y), (l, w, h), 0.0).expect("valid demo building")
    };
    let buildings = vec![
        b("south-w", 0.0, 0.0, 42.0, 15.0, 30.0),
        b("south-e", 55.0, 0.0, 42.0, 15.0, 30.0),
        b("north-w", -20.0, 175.0, 36.0, 15.0, 36.0),
        b("north-c", 25.0, 175.0, 36.0, 15.0, 36.0),
        b("north-e", 70.0, 175.0, 36.0, 15.0, 36.0),
    ];
    let grid = SamplingGrid::new((-45.0, -15.0), 1.0, 146, 206).expect("valid demo grid");
    OptimizationSite {
        scene: Scene::new(DEMO_LATITUDE_DEG, buildings),
        grid,
        northern: vec![2, 3, 4],
    }
}
