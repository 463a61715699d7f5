use serde::{Deserialize, Serialize};

use crate::scene::SamplingGrid;

/// Sunlight hours per grid cell, row-major (`y` rows, `x` columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub grid: SamplingGrid,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn filled(grid: SamplingGrid, value: f64) -> Self {
        Self {
            values: vec![value; grid.len()],
            grid,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}
