//! Procedural maps and the progressive-training curriculum.
//!
//! Random maps are square areas with an optional grid-of-rooms floor plan and
//! optional scattered circular obstacles. The fixed training maps are seeded
//! presets per difficulty tier; tier and level tables live in
//! `data/curriculum.json`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gridworld::{point_square_dist2, Pose, ProfileKind, TaskProfile, WorldMap, FINE_RESOLUTION};
use crate::mapping::{clearance_mask, component_count, flood_fill};
use crate::rng::{self, derive_seed, Subsystem};

/// Agent radius used to verify that generated maps stay connected; the
/// largest radius among the task profiles.
pub const CONNECTIVITY_RADIUS: f64 = 0.15;

/// Whether maps are sized for mowing or exploration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapTask {
    Mow,
    Explore,
}

impl From<ProfileKind> for MapTask {
    fn from(kind: ProfileKind) -> Self {
        if kind.is_exploration() {
            Self::Explore
        } else {
            Self::Mow
        }
    }
}

impl MapTask {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mow => "mow",
            Self::Explore => "explore",
        }
    }
}

/// Random map generation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub side_range: (f64, f64),
    pub floorplan_prob: f64,
    pub obstacle_prob: f64,
    pub wall_keep_prob: f64,
    pub room_side: (f64, f64),
    pub wall_thickness: (f64, f64),
    pub door_width: (f64, f64),
    pub obstacle_radius: f64,
    /// One obstacle candidate per this many m² of map area.
    pub area_per_obstacle: f64,
    /// Minimum surface gap between an obstacle and any other obstacle or wall.
    pub min_gap: f64,
    pub resolution: f64,
}

impl GenParams {
    pub fn for_task(task: MapTask) -> Self {
        Self {
            side_range: match task {
                MapTask::Mow => (2.4, 7.5),
                MapTask::Explore => (9.6, 15.0),
            },
            floorplan_prob: 0.7,
            obstacle_prob: 0.7,
            wall_keep_prob: 0.9,
            room_side: (1.5, 4.8),
            wall_thickness: (0.075, 0.3),
            door_width: (0.6, 1.2),
            obstacle_radius: 0.25,
            area_per_obstacle: 4.0,
            min_gap: 0.6,
            resolution: FINE_RESOLUTION,
        }
    }
}

/// A generated map together with what went into it.
#[derive(Debug, Clone)]
pub struct GeneratedMap {
    pub world: WorldMap,
    /// Side of the square free area, meters; the area spans `[0, side]²`.
    pub side: f64,
    pub floorplan: bool,
    pub obstacles: bool,
    /// Centers of the placed circular obstacles.
    pub obstacle_centers: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy)]
struct Opening {
    lo: f64,
    hi: f64,
    closed: bool,
}

#[derive(Debug, Clone)]
struct Wall {
    vertical: bool,
    /// Center line coordinate (x for vertical walls, y for horizontal).
    at: f64,
    openings: Vec<Opening>,
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

fn snap_side(side: f64, resolution: f64) -> f64 {
    (side / resolution).round() * resolution
}

/// True if the clearance region of the map is a single connected component.
pub fn is_connected(world: &WorldMap, agent_radius: f64) -> bool {
    component_count(&world.spec, &clearance_mask(world, agent_radius)) == 1
}

fn draw_doors(rng: &mut ChaCha8Rng, walls: &mut [Wall], pitch: f64, n: usize, thickness: f64, door: f64) {
    for wall in walls.iter_mut() {
        wall.openings = (0..n)
            .map(|j| {
                let lo = j as f64 * pitch + thickness / 2.0;
                let hi = (j + 1) as f64 * pitch - thickness / 2.0;
                let start = if hi - lo > door { rng.random_range(lo..hi - door) } else { lo };
                Opening { lo: start, hi: (start + door).min(hi), closed: false }
            })
            .collect();
    }
    // close one opening per wall, for either every vertical or every horizontal wall
    let close_vertical: bool = rng.random_bool(0.5);
    for wall in walls.iter_mut().filter(|w| w.vertical == close_vertical) {
        let k = rng.random_range(0..wall.openings.len());
        wall.openings[k].closed = true;
    }
}

fn rasterize_floorplan(world: &mut WorldMap, walls: &[Wall], side: f64, thickness: f64) {
    let res = world.spec.resolution;
    let half = thickness / 2.0;
    for wall in walls {
        if wall.vertical {
            world.fill_rect(wall.at - half, 0.0, wall.at + half, side, true);
        } else {
            world.fill_rect(0.0, wall.at - half, side, wall.at + half, true);
        }
    }
    for wall in walls {
        for o in wall.openings.iter().filter(|o| !o.closed) {
            if wall.vertical {
                world.fill_rect(wall.at - half - res, o.lo, wall.at + half + res, o.hi, false);
            } else {
                world.fill_rect(o.lo, wall.at - half - res, o.hi, wall.at + half + res, false);
            }
        }
    }
}

fn floorplan_with_rooms(seed: u64, params: &GenParams, side: f64, room_side: (f64, f64)) -> GeneratedMap {
    let side = snap_side(side, params.resolution);
    let mut rng = rng::stream(seed, Subsystem::MapGen);
    let room = uniform(&mut rng, room_side);
    let thickness = uniform(&mut rng, params.wall_thickness);
    let door = uniform(&mut rng, params.door_width);
    let n = (side / room).floor() as usize;
    let empty = GeneratedMap { world: WorldMap::empty_square(side, params.resolution), side, floorplan: false, obstacles: false, obstacle_centers: vec![] };
    if n < 2 {
        return empty;
    }
    let pitch = side / n as f64;
    let door = door.min(pitch - thickness);
    let mut walls = Vec::new();
    for vertical in [true, false] {
        for k in 1..n {
            if rng.random_bool(params.wall_keep_prob) {
                walls.push(Wall { vertical, at: k as f64 * pitch, openings: vec![] });
            }
        }
    }
    if walls.is_empty() {
        return GeneratedMap { floorplan: true, ..empty };
    }
    for attempt in 0..=10 {
        draw_doors(&mut rng, &mut walls, pitch, n, thickness, door);
        if attempt == 10 {
            // give up on closed openings rather than return a disconnected map
            for w in &mut walls {
                for o in &mut w.openings {
                    o.closed = false;
                }
            }
        }
        let mut world = WorldMap::empty_square(side, params.resolution);
        rasterize_floorplan(&mut world, &walls, side, thickness);
        if attempt == 10 || is_connected(&world, CONNECTIVITY_RADIUS) {
            return GeneratedMap { world, side, floorplan: true, obstacles: false, obstacle_centers: vec![] };
        }
    }
    unreachable!("the last attempt always returns")
}

/// Grid-of-rooms floor plan over a `side × side` area.
///
/// Room side, wall thickness and door width are drawn uniformly; each
/// full-spanning wall is kept with `wall_keep_prob`; every pair of adjacent
/// rooms across a wall gets a door; one door per wall is closed for either all
/// vertical or all horizontal walls. A side too small for two rooms yields an
/// empty bounded map.
pub fn generate_floorplan(seed: u64, params: &GenParams, side: f64) -> GeneratedMap {
    floorplan_with_rooms(seed, params, side, params.room_side)
}

/// Scatters circular obstacles, one candidate per `area_per_obstacle` m²,
/// dropping any candidate closer than `min_gap` to existing obstacles or walls.
pub fn scatter_obstacles(seed: u64, mut map: GeneratedMap, params: &GenParams) -> GeneratedMap {
    let mut rng = rng::stream(derive_seed(seed, 0x0b57), Subsystem::MapGen);
    let side = map.side;
    let candidates = (side * side / params.area_per_obstacle).floor() as usize;
    let radius = params.obstacle_radius;
    let keep_out = radius + params.min_gap;
    let spec = map.world.spec;
    let mut placed: Vec<[f64; 2]> = map.obstacle_centers.clone();
    let mut added = false;
    for _ in 0..candidates {
        let c = [rng.random_range(0.0..side), rng.random_range(0.0..side)];
        if placed.iter().any(|p| (p[0] - c[0]).hypot(p[1] - c[1]) < 2.0 * radius + params.min_gap) {
            continue;
        }
        // walls and the outer boundary, measured to the cell squares
        let (i0, j0) = spec.cell_of_signed(c[0] - keep_out, c[1] - keep_out);
        let (i1, j1) = spec.cell_of_signed(c[0] + keep_out, c[1] + keep_out);
        let mut blocked = false;
        'scan: for j in j0..=j1 {
            for i in i0..=i1 {
                if map.world.is_obstacle_signed(i, j) && point_square_dist2(c[0], c[1], &spec, i, j) < keep_out * keep_out {
                    blocked = true;
                    break 'scan;
                }
            }
        }
        if blocked {
            continue;
        }
        map.world.fill_disk(c[0], c[1], radius);
        placed.push(c);
        added = true;
    }
    map.obstacle_centers = placed;
    map.obstacles |= added;
    map
}

/// Outcome flags of one random draw, before generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomMapDraw {
    pub side: f64,
    pub floorplan: bool,
    pub obstacles: bool,
}

pub fn draw_random_map(seed: u64, params: &GenParams) -> RandomMapDraw {
    let mut rng = rng::stream(seed, Subsystem::MapGen);
    let side = snap_side(uniform(&mut rng, params.side_range), params.resolution);
    let floorplan = rng.random_bool(params.floorplan_prob);
    let obstacles = rng.random_bool(params.obstacle_prob);
    RandomMapDraw { side, floorplan, obstacles }
}

/// A random training map: uniform side, floor plan with probability 0.7,
/// obstacles with probability 0.7 (so possibly an empty map).
pub fn generate_random_map(seed: u64, task: MapTask) -> GeneratedMap {
    generate_random_map_with(seed, &GenParams::for_task(task))
}

pub fn generate_random_map_with(seed: u64, params: &GenParams) -> GeneratedMap {
    let draw = draw_random_map(seed, params);
    let mut map = if draw.floorplan {
        generate_floorplan(derive_seed(seed, 1), params, draw.side)
    } else {
        GeneratedMap {
            world: WorldMap::empty_square(draw.side, params.resolution),
            side: draw.side,
            floorplan: false,
            obstacles: false,
            obstacle_centers: vec![],
        }
    };
    map.floorplan = draw.floorplan;
    if draw.obstacles {
        map = scatter_obstacles(derive_seed(seed, 2), map, params);
        map.obstacles = true;
    }
    map
}

/// One or two straight walls protruding from the boundary.
fn simple_walls(seed: u64, params: &GenParams, side: f64) -> GeneratedMap {
    let side = snap_side(side, params.resolution);
    let mut rng = rng::stream(seed, Subsystem::MapGen);
    let count = rng.random_range(1..=2);
    let thickness = 0.15;
    for _attempt in 0..20 {
        let mut world = WorldMap::empty_square(side, params.resolution);
        // walls leave from distinct sides so they never meet
        let first_side = rng.random_range(0..4u8);
        for k in 0..count {
            let boundary = (first_side + 2 * k as u8) % 4;
            let length = rng.random_range(0.3..0.6) * side;
            let at = rng.random_range(0.3..0.7) * side;
            let h = thickness / 2.0;
            match boundary {
                0 => world.fill_rect(at - h, 0.0, at + h, length, true),
                1 => world.fill_rect(side - length, at - h, side, at + h, true),
                2 => world.fill_rect(at - h, side - length, at + h, side, true),
                _ => world.fill_rect(0.0, at - h, length, at + h, true),
            }
        }
        if is_connected(&world, CONNECTIVITY_RADIUS) {
            return GeneratedMap { world, side, floorplan: false, obstacles: false, obstacle_centers: vec![] };
        }
    }
    GeneratedMap { world: WorldMap::empty_square(side, params.resolution), side, floorplan: false, obstacles: false, obstacle_centers: vec![] }
}

/// Feature set of a difficulty tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TierFeatures {
    Empty,
    SimpleWalls,
    Rooms,
    Cluttered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapTier {
    pub tier: u8,
    pub maps: usize,
    pub side_range: (f64, f64),
    pub features: TierFeatures,
    pub seed_base: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumLevel {
    pub level: u8,
    pub tiers: Vec<u8>,
    pub random_maps: bool,
    pub goal_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskCurriculum {
    pub tiers: Vec<MapTier>,
    pub levels: Vec<CurriculumLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumTable {
    pub version: u32,
    pub tasks: BTreeMap<String, TaskCurriculum>,
}

const CURRICULUM_JSON: &str = include_str!("../data/curriculum.json");

impl CurriculumTable {
    /// The tier and level tables shipped with the crate.
    pub fn embedded() -> Self {
        serde_json::from_str(CURRICULUM_JSON).expect("embedded curriculum table is valid JSON")
    }

    pub fn task(&self, task: MapTask) -> &TaskCurriculum {
        &self.tasks[task.name()]
    }
}

/// Generates fixed map `index` of `tier`. Pure in its arguments.
pub fn fixed_map(tier: &MapTier, index: usize, params: &GenParams) -> GeneratedMap {
    let seed = derive_seed(tier.seed_base, index as u64);
    let mut rng = rng::stream(seed, Subsystem::MapGen);
    let side = uniform(&mut rng, tier.side_range);
    match tier.features {
        TierFeatures::Empty => GeneratedMap {
            side: snap_side(side, params.resolution),
            world: WorldMap::empty_square(snap_side(side, params.resolution), params.resolution),
            floorplan: false,
            obstacles: false,
            obstacle_centers: vec![],
        },
        TierFeatures::SimpleWalls => simple_walls(seed, params, side),
        TierFeatures::Rooms => floorplan_with_rooms(seed, params, side, (params.room_side.0, params.room_side.1.min(side / 2.0))),
        TierFeatures::Cluttered => {
            let rooms = floorplan_with_rooms(seed, params, side, (params.room_side.0, params.room_side.1.min(side / 2.0)));
            scatter_obstacles(seed, rooms, params)
        }
    }
}

/// Identifies the map an episode ran on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MapId {
    Fixed { tier: u8, index: usize },
    Random { seed: u64, floorplan: bool, obstacles: bool },
    External(String),
}

impl std::fmt::Display for MapId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Fixed { tier, index } => write!(f, "tier{tier}-{index}"),
            Self::Random { seed, .. } => write!(f, "random-{seed}"),
            Self::External(name) => write!(f, "{name}"),
        }
    }
}

/// Result reported to the curriculum after each episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub map: MapId,
    pub reached_goal: bool,
}

/// Progress through the curriculum. Completion is tracked per level and kept
/// for the whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub task: MapTask,
    pub level: u8,
    completed: BTreeMap<u8, BTreeSet<(u8, usize)>>,
    random_floorplan_done: BTreeSet<u8>,
    random_obstacles_done: BTreeSet<u8>,
    #[serde(skip, default = "CurriculumTable::embedded")]
    table: CurriculumTable,
}

impl CurriculumState {
    pub fn new(task: MapTask) -> Self {
        Self::with_table(task, CurriculumTable::embedded())
    }

    pub fn with_table(task: MapTask, table: CurriculumTable) -> Self {
        Self { task, level: 1, completed: BTreeMap::new(), random_floorplan_done: BTreeSet::new(), random_obstacles_done: BTreeSet::new(), table }
    }

    pub fn current(&self) -> &CurriculumLevel {
        let levels = &self.table.task(self.task).levels;
        levels.iter().find(|l| l.level == self.level).unwrap_or_else(|| levels.last().expect("non-empty level table"))
    }

    pub fn tiers(&self) -> &[MapTier] {
        &self.table.task(self.task).tiers
    }

    /// Fixed maps of the current level.
    pub fn level_maps(&self) -> Vec<(u8, usize)> {
        let level = self.current();
        self.tiers()
            .iter()
            .filter(|t| level.tiers.contains(&t.tier))
            .flat_map(|t| (0..t.maps).map(move |i| (t.tier, i)))
            .collect()
    }

    pub fn max_level(&self) -> u8 {
        self.table.task(self.task).levels.iter().map(|l| l.level).max().unwrap_or(1)
    }

    /// Records an episode and advances the level once its requirements are met.
    pub fn step(&mut self, result: &EpisodeResult) -> &CurriculumLevel {
        if result.reached_goal {
            match &result.map {
                MapId::Fixed { tier, index } => {
                    self.completed.entry(self.level).or_default().insert((*tier, *index));
                }
                MapId::Random { floorplan, obstacles, .. } => {
                    if *floorplan {
                        self.random_floorplan_done.insert(self.level);
                    }
                    if *obstacles {
                        self.random_obstacles_done.insert(self.level);
                    }
                }
                MapId::External(_) => {}
            }
        }
        if self.level < self.max_level() && self.level_complete() {
            self.level += 1;
        }
        self.current()
    }

    fn level_complete(&self) -> bool {
        let done = self.completed.get(&self.level);
        let fixed_ok = self.level_maps().iter().all(|m| done.is_some_and(|d| d.contains(m)));
        if !self.current().random_maps {
            return fixed_ok;
        }
        fixed_ok && self.random_floorplan_done.contains(&self.level) && self.random_obstacles_done.contains(&self.level)
    }
}

/// A map and start pose for one episode.
#[derive(Debug, Clone)]
pub struct EpisodeMap {
    pub id: MapId,
    pub world: Arc<WorldMap>,
    pub start: Pose,
}

/// Caches fixed maps and draws episode maps for a curriculum level.
#[derive(Debug, Default)]
pub struct MapCatalog {
    fixed: HashMap<(MapTask, u8, usize), Arc<WorldMap>>,
}

impl MapCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fixed(&mut self, task: MapTask, tier: &MapTier, index: usize) -> Arc<WorldMap> {
        self.fixed
            .entry((task, tier.tier, index))
            .or_insert_with(|| Arc::new(fixed_map(tier, index, &GenParams::for_task(task)).world))
            .clone()
    }

    /// Picks the episode map: with random maps enabled, fixed vs random 50/50;
    /// otherwise uniform over the level's fixed maps. The start pose is uniform
    /// over collision-free cells of the largest connected free region.
    pub fn select_episode_map(&mut self, state: &CurriculumState, profile: &TaskProfile, seed: u64) -> EpisodeMap {
        let mut rng = rng::stream(seed, Subsystem::Episode);
        let level = state.current();
        let use_random = level.random_maps && rng.random_bool(0.5);
        let (id, world) = if use_random {
            let map_seed: u64 = rng.random();
            let m = generate_random_map(map_seed, state.task);
            (MapId::Random { seed: map_seed, floorplan: m.floorplan, obstacles: m.obstacles }, Arc::new(m.world))
        } else {
            let maps = state.level_maps();
            let (tier, index) = maps[rng.random_range(0..maps.len())];
            let tier_def = state.tiers().iter().find(|t| t.tier == tier).expect("tier listed in level exists").clone();
            (MapId::Fixed { tier, index }, self.fixed(state.task, &tier_def, index))
        };
        let start = random_start_pose(&world, profile.agent_radius, &mut rng);
        EpisodeMap { id, world, start }
    }
}

/// Uniform collision-free start pose inside the largest reachable region.
pub fn random_start_pose(world: &WorldMap, agent_radius: f64, rng: &mut ChaCha8Rng) -> Pose {
    let spec = world.spec;
    let clear = clearance_mask(world, agent_radius);
    let mut seen = vec![false; spec.len()];
    let mut best: Vec<usize> = Vec::new();
    for s in 0..spec.len() {
        if !clear[s] || seen[s] {
            continue;
        }
        let comp = flood_fill(&spec, &clear, &[s]);
        let cells: Vec<usize> = comp.iter().enumerate().filter(|(_, r)| **r).map(|(i, _)| i).collect();
        for &c in &cells {
            seen[c] = true;
        }
        if cells.len() > best.len() {
            best = cells;
        }
    }
    assert!(!best.is_empty(), "map has no collision-free cell");
    let idx = best[rng.random_range(0..best.len())];
    let (i, j) = spec.cell_from_index(idx);
    let (x, y) = spec.cell_center(i as i64, j as i64);
    Pose::new(x, y, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
}
