//! Randomized stepping-stone environments and discrete contact states.
//!
//! Stones sit on a regular `columns x rows` grid (x is the walking direction),
//! are jittered in the plane and in height, and a fixed number of them is
//! removed. The start stance occupies the first columns of the grid and the
//! goal stance the last ones.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::robot::{EffectorPositions, Frame};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid grid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown stone id {0}")]
    UnknownStone(StoneId),
    #[error("invalid contact state: {0}")]
    InvalidState(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed environment file: {0}")]
    Format(#[from] serde_json::Error),
}

/// Index of a stone on the generation grid (`column * rows + row`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StoneId(pub u16);

impl StoneId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An axis-aligned square stepping stone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stone {
    pub id: StoneId,
    pub center: Vector3<f64>,
    pub half_extent: Vector2<f64>,
}

impl Stone {
    /// True when `p` lies over the stone top (xy containment, edges inclusive).
    pub fn contains_xy(&self, p: &Vector3<f64>) -> bool {
        (p.x - self.center.x).abs() <= self.half_extent.x
            && (p.y - self.center.y).abs() <= self.half_extent.y
    }
}

/// Per-effector stone assignment, ordered FL, FR, RL, RR for a quadruped.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContactState(pub Vec<StoneId>);

impl ContactState {
    pub fn new(ids: impl IntoIterator<Item = StoneId>) -> Self {
        ContactState(ids.into_iter().collect())
    }

    pub fn from_indices(ids: &[u16]) -> Self {
        ContactState(ids.iter().map(|&i| StoneId(i)).collect())
    }

    pub fn n_effectors(&self) -> usize {
        self.0.len()
    }

    pub fn stones(&self) -> &[StoneId] {
        &self.0
    }

    pub fn get(&self, effector: usize) -> StoneId {
        self.0[effector]
    }
}

/// Terminal test: assignments equal effector by effector.
pub fn is_goal(s: &ContactState, goal: &ContactState) -> bool {
    s == goal
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub columns: usize,
    pub rows: usize,
    /// Grid spacing `(e_x, e_y)` in meters.
    pub spacing: [f64; 2],
    /// Stone side length in meters.
    pub side: f64,
    pub n_removed: usize,
    /// Amplitude of the uniform planar jitter factor (0.75 nominal).
    pub displacement: f64,
    /// Half-width of the uniform height noise in meters.
    pub height_noise: f64,
    /// Grid cells between rear and front feet, and between right and left feet.
    pub stance_span: [usize; 2],
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            columns: 7,
            rows: 5,
            spacing: [0.19, 0.12],
            side: 0.085,
            n_removed: 9,
            displacement: 0.75,
            height_noise: 0.02,
            stance_span: [2, 2],
        }
    }
}

impl GridConfig {
    pub fn with_side(mut self, side: f64) -> Self {
        self.side = side;
        self
    }

    pub fn noiseless(mut self) -> Self {
        self.displacement = 0.0;
        self.height_noise = 0.0;
        self
    }

    pub fn n_stones(&self) -> usize {
        self.columns * self.rows
    }

    pub fn stone_id(&self, column: usize, row: usize) -> StoneId {
        StoneId((column * self.rows + row) as u16)
    }

    pub fn nominal_center(&self, column: usize, row: usize) -> Vector3<f64> {
        let y0 = (self.rows as f64 - 1.0) / 2.0;
        Vector3::new(
            column as f64 * self.spacing[0],
            (row as f64 - y0) * self.spacing[1],
            0.0,
        )
    }

    fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        if self.side <= 0.0 || !self.side.is_finite() {
            return bad("stone side must be positive");
        }
        if self.spacing.iter().any(|&e| e <= self.side) {
            return bad("spacing too small for the stone side, stones would overlap");
        }
        let [sx, sy] = self.stance_span;
        if sx == 0 || sy == 0 {
            return bad("stance span must be at least one cell in each direction");
        }
        if sy >= self.rows {
            return bad("stance does not fit across the grid rows");
        }
        if self.columns < sx + 2 {
            return bad("grid too short to place distinct start and goal stances");
        }
        if self.n_stones() > u16::MAX as usize {
            return bad("grid too large");
        }
        if !(0.0..=1.0).contains(&self.displacement) || self.height_noise < 0.0 {
            return bad("noise amplitudes out of range");
        }
        Ok(())
    }

    /// Stance with the rear feet in `column` (FL, FR, RL, RR order).
    pub fn stance_at(&self, column: usize) -> ContactState {
        let [sx, sy] = self.stance_span;
        let right = (self.rows - 1 - sy) / 2;
        let left = right + sy;
        ContactState(vec![
            self.stone_id(column + sx, left),
            self.stone_id(column + sx, right),
            self.stone_id(column, left),
            self.stone_id(column, right),
        ])
    }
}

#[derive(Debug, Clone)]
pub struct Environment {
    seed: u64,
    grid: [usize; 2],
    spacing: [f64; 2],
    side: f64,
    stones: Vec<Stone>,
    slots: Vec<Option<usize>>,
    start: ContactState,
    goal: ContactState,
    d_max_map: f64,
}

/// On-disk layout of an environment (lengths in meters).
#[derive(Debug, Serialize, Deserialize)]
struct EnvironmentFile {
    seed: u64,
    grid: [usize; 2],
    spacing: [f64; 2],
    side: f64,
    stones: Vec<Stone>,
    start: ContactState,
    goal: ContactState,
}

/// Builds a randomized environment. Pure function of `(seed, config)`.
pub fn generate_environment(seed: u64, config: &GridConfig) -> Result<Environment, EnvError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = config.side / 2.0;
    let amp = [
        config.displacement * (config.spacing[0] / 2.0 - half),
        config.displacement * (config.spacing[1] / 2.0 - half),
    ];

    let mut stones = Vec::with_capacity(config.n_stones());
    for column in 0..config.columns {
        for row in 0..config.rows {
            let mut center = config.nominal_center(column, row);
            center.x += amp[0] * (2.0 * rng.random::<f64>() - 1.0);
            center.y += amp[1] * (2.0 * rng.random::<f64>() - 1.0);
            center.z += config.height_noise * (2.0 * rng.random::<f64>() - 1.0);
            stones.push(Stone {
                id: config.stone_id(column, row),
                center,
                half_extent: Vector2::new(half, half),
            });
        }
    }

    let start = config.stance_at(0);
    let goal = config.stance_at(config.columns - 1 - config.stance_span[0]);
    let protected: HashSet<StoneId> = start.0.iter().chain(goal.0.iter()).copied().collect();
    let mut removable: Vec<StoneId> = stones
        .iter()
        .map(|s| s.id)
        .filter(|id| !protected.contains(id))
        .collect();
    if config.n_removed > removable.len() {
        return Err(EnvError::InvalidConfig(format!(
            "cannot remove {} stones, only {} are removable",
            config.n_removed,
            removable.len()
        )));
    }
    // partial Fisher-Yates: the first n_removed entries are the removed set
    for i in 0..config.n_removed {
        let j = rng.random_range(i..removable.len());
        removable.swap(i, j);
    }
    let removed: HashSet<StoneId> = removable[..config.n_removed].iter().copied().collect();
    stones.retain(|s| !removed.contains(&s.id));

    Environment::from_parts(
        seed,
        [config.columns, config.rows],
        config.spacing,
        config.side,
        stones,
        start,
        goal,
    )
}

impl Environment {
    /// Assembles an environment from explicit stones, e.g. hand-built corridors.
    pub fn from_parts(
        seed: u64,
        grid: [usize; 2],
        spacing: [f64; 2],
        side: f64,
        mut stones: Vec<Stone>,
        start: ContactState,
        goal: ContactState,
    ) -> Result<Environment, EnvError> {
        stones.sort_by_key(|s| s.id);
        let n_slots = stones.last().map_or(0, |s| s.id.index() + 1);
        let mut slots = vec![None; n_slots];
        for (i, stone) in stones.iter().enumerate() {
            if slots[stone.id.index()].replace(i).is_some() {
                return Err(EnvError::InvalidConfig(format!("duplicate stone id {}", stone.id)));
            }
            if stone.half_extent.iter().any(|&h| h <= 0.0) {
                return Err(EnvError::InvalidConfig(format!(
                    "stone {} has a non-positive half extent",
                    stone.id
                )));
            }
        }
        for (i, a) in stones.iter().enumerate() {
            for b in &stones[i + 1..] {
                let dx = (a.center.x - b.center.x).abs();
                let dy = (a.center.y - b.center.y).abs();
                if dx < a.half_extent.x + b.half_extent.x && dy < a.half_extent.y + b.half_extent.y {
                    return Err(EnvError::InvalidConfig(format!(
                        "stones {} and {} overlap",
                        a.id, b.id
                    )));
                }
            }
        }
        let mut env = Environment {
            seed,
            grid,
            spacing,
            side,
            stones,
            slots,
            start,
            goal,
            d_max_map: 0.0,
        };
        if env.start.n_effectors() != env.goal.n_effectors() || env.start.n_effectors() == 0 {
            return Err(EnvError::InvalidState(
                "start and goal must assign the same, nonzero number of effectors".into(),
            ));
        }
        env.validate_state(&env.start)?;
        env.validate_state(&env.goal)?;
        env.d_max_map = env.max_pair_distance();
        Ok(env)
    }

    fn max_pair_distance(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.stones.iter().enumerate() {
            for b in &self.stones[i + 1..] {
                best = best.max((a.center - b.center).norm());
            }
        }
        best
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stones(&self) -> &[Stone] {
        &self.stones
    }

    pub fn start(&self) -> &ContactState {
        &self.start
    }

    pub fn goal(&self) -> &ContactState {
        &self.goal
    }

    pub fn n_effectors(&self) -> usize {
        self.start.n_effectors()
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    /// Largest distance between two live stone centers.
    pub fn d_max_map(&self) -> f64 {
        self.d_max_map
    }

    pub fn stone(&self, id: StoneId) -> Result<&Stone, EnvError> {
        self.slots
            .get(id.index())
            .copied()
            .flatten()
            .map(|i| &self.stones[i])
            .ok_or(EnvError::UnknownStone(id))
    }

    pub fn is_live(&self, id: StoneId) -> bool {
        self.stone(id).is_ok()
    }

    pub fn center(&self, id: StoneId) -> Result<Vector3<f64>, EnvError> {
        self.stone(id).map(|s| s.center)
    }

    pub fn validate_state(&self, s: &ContactState) -> Result<(), EnvError> {
        let mut seen = HashSet::new();
        for &id in s.stones() {
            self.stone(id)?;
            if !seen.insert(id) {
                return Err(EnvError::InvalidState(format!(
                    "two effectors share stone {id}"
                )));
            }
        }
        Ok(())
    }

    /// World-frame contact locations of `s`, one row per effector.
    pub fn contact_locations(&self, s: &ContactState) -> Result<EffectorPositions, EnvError> {
        let points = s
            .stones()
            .iter()
            .map(|&id| self.center(id))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EffectorPositions::new(Frame::World, points))
    }

    pub fn to_json(&self) -> Result<String, EnvError> {
        let file = EnvironmentFile {
            seed: self.seed,
            grid: self.grid,
            spacing: self.spacing,
            side: self.side,
            stones: self.stones.clone(),
            start: self.start.clone(),
            goal: self.goal.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Environment, EnvError> {
        let f: EnvironmentFile = serde_json::from_str(text)?;
        Environment::from_parts(f.seed, f.grid, f.spacing, f.side, f.stones, f.start, f.goal)
    }

    pub fn save(&self, path: &Path) -> Result<(), EnvError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Environment, EnvError> {
        Environment::from_json(&std::fs::read_to_string(path)?)
    }
}
