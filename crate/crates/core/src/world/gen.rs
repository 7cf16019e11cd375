//! Procedural terrain.
//!
//! Layout follows the familiar Crafter recipe: a grassy clearing around the
//! map center, lakes ringed by sand, forests on the grassland and mountain
//! ranges carved by caves and tunnels that hold the ores.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::noise::GradientNoise;
use super::{AgentState, CellSet, Direction, EpisodeConfig, Grid, Material, Position, RngStreams, Vitals, WorldError, WorldState};
use crate::rng::{SplitMix64, STREAM_COWS, STREAM_POLICY, STREAM_RESPAWN_RETRY, STREAM_WORLDGEN};
use crate::techtree::TechTree;

/// Attempts before generation gives up.
pub const MAX_GENERATION_ATTEMPTS: u32 = 16;

/// Materials that must be reachable from the spawn for a map to be accepted.
const REQUIRED: [Material; 6] = [
    Material::Tree,
    Material::Water,
    Material::Stone,
    Material::Coal,
    Material::Iron,
    Material::Diamond,
];

struct Channels {
    start: GradientNoise,
    water: GradientNoise,
    mountain: GradientNoise,
    caves: GradientNoise,
    tunnels_h: GradientNoise,
    tunnels_v: GradientNoise,
    coal: GradientNoise,
    iron: GradientNoise,
    lava: GradientNoise,
    sand: GradientNoise,
    trees: GradientNoise,
}

impl Channels {
    fn new(rng: &mut SplitMix64) -> Self {
        Self {
            start: GradientNoise::new(rng),
            water: GradientNoise::new(rng),
            mountain: GradientNoise::new(rng),
            caves: GradientNoise::new(rng),
            tunnels_h: GradientNoise::new(rng),
            tunnels_v: GradientNoise::new(rng),
            coal: GradientNoise::new(rng),
            iron: GradientNoise::new(rng),
            lava: GradientNoise::new(rng),
            sand: GradientNoise::new(rng),
            trees: GradientNoise::new(rng),
        }
    }
}

/// Build the initial state for `config`, regenerating with derived seeds
/// until the spawn can reach every required material.
pub fn generate_world(config: EpisodeConfig) -> Result<WorldState, WorldError> {
    validate_config(&config)?;
    let mut last_reason = String::new();
    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let attempt_seed = if attempt == 0 {
            config.seed
        } else {
            SplitMix64::substream(config.seed, STREAM_RESPAWN_RETRY, u64::from(attempt)).next_u64()
        };
        let mut rng = SplitMix64::substream(attempt_seed, STREAM_WORLDGEN, 0);
        let grid = terrain(config.width, config.height, &mut rng);
        let center = grid.center();
        match check_reachability(&grid, center) {
            Ok(()) => {}
            Err(missing) => {
                last_reason = format!("unreachable from spawn: {missing}");
                continue;
            }
        }
        let spawns = spawn_cells(&grid, config.n_agents as usize);
        if spawns.len() < config.n_agents as usize {
            last_reason = "not enough grass to spawn every agent".to_string();
            continue;
        }
        let mut cow_rng = SplitMix64::substream(attempt_seed, STREAM_COWS, 0);
        let cows = place_cows(&grid, center, &spawns, &mut cow_rng);
        let agents = spawns
            .iter()
            .enumerate()
            .map(|(i, p)| AgentState {
                id: super::AgentId(i as u32 + 1),
                position: *p,
                facing: Direction::Down,
                vitals: Vitals::full(),
                inventory: Default::default(),
                alive: true,
                sleeping: false,
                achievements: BTreeMap::new(),
                discovered: CellSet::new(config.width, config.height),
            })
            .collect();
        let rng = RngStreams {
            world: rng,
            policy: SplitMix64::substream(config.seed, STREAM_POLICY, 0),
        };
        return Ok(WorldState {
            config,
            grid,
            agents,
            cows,
            tick: 0,
            rng,
            techtree: TechTree::standard(),
            generation_attempt: attempt,
        });
    }
    Err(WorldError::GenerationFailed {
        attempts: MAX_GENERATION_ATTEMPTS,
        reason: last_reason,
    })
}

fn validate_config(config: &EpisodeConfig) -> Result<(), WorldError> {
    let bad = |msg: &str| Err(WorldError::InvalidConfig(msg.to_string()));
    if config.width < 16 || config.height < 16 {
        return bad("map must be at least 16x16");
    }
    if config.width > 1024 || config.height > 1024 {
        return bad("map must be at most 1024x1024");
    }
    if config.n_agents == 0 || config.n_agents > 64 {
        return bad("n_agents must be between 1 and 64");
    }
    if config.view_width < 1 || config.view_height < 1 || config.view_width % 2 == 0 || config.view_height % 2 == 0 {
        return bad("view dimensions must be odd and positive");
    }
    if config.max_ticks == 0 {
        return bad("max_ticks must be positive");
    }
    if !(config.time_penalty.is_finite() && config.time_penalty >= 0.0) {
        return bad("time_penalty must be a non-negative number");
    }
    Ok(())
}

fn terrain(width: i32, height: i32, rng: &mut SplitMix64) -> Grid {
    let ch = Channels::new(rng);
    let mut grid = Grid::filled(width, height, Material::Grass);
    let center = grid.center();
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (f64::from(x), f64::from(y));
            let dist = f64::from((x - center.x).pow(2) + (y - center.y).pow(2)).sqrt();
            let start = sigmoid(4.0 - dist + 2.0 * ch.start.sample(fx / 8.0, fy / 8.0));
            let mut water = ch.water.layered(fx, fy, &[(15.0, 1.0), (5.0, 0.15)]) + 0.1;
            water -= 2.0 * start;
            let mut mountain = ch.mountain.layered(fx, fy, &[(15.0, 1.0), (5.0, 0.3)]);
            mountain -= 4.0 * start + 0.3 * water;
            let u = rng.next_f64();
            let m = if start > 0.5 {
                Material::Grass
            } else if mountain > 0.15 {
                let cave = ch.caves.sample(fx / 6.0, fy / 6.0) > 0.15 && mountain > 0.3;
                let tunnel = ch.tunnels_h.sample(2.0 * fx / 7.0, fy / 35.0) > 0.4
                    || ch.tunnels_v.sample(fx / 35.0, 2.0 * fy / 7.0) > 0.4;
                if cave || tunnel {
                    Material::Path
                } else if ch.coal.sample(fx / 8.0, fy / 8.0) > 0.0 && u > 0.85 {
                    Material::Coal
                } else if ch.iron.sample(fx / 6.0, fy / 6.0) > 0.25 && u > 0.72 {
                    Material::Iron
                } else if mountain > 0.18 && u > 0.975 {
                    Material::Diamond
                } else if mountain > 0.3 && ch.lava.sample(fx / 5.0, fy / 5.0) > 0.35 {
                    Material::Lava
                } else {
                    Material::Stone
                }
            } else if water > 0.25 && water <= 0.35 && ch.sand.sample(fx / 9.0, fy / 9.0) > -0.2 {
                Material::Sand
            } else if water > 0.3 {
                Material::Water
            } else if ch.trees.sample(fx / 7.0, fy / 7.0) > 0.0 && u > 0.8 {
                Material::Tree
            } else {
                Material::Grass
            };
            grid.set(Position::new(x, y), m);
        }
    }
    grid
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Cells a fresh agent can eventually stand on: open ground plus minable stone.
fn passable_for_reachability(m: Material) -> bool {
    matches!(m, Material::Grass | Material::Sand | Material::Path | Material::Stone)
}

/// `Err` names the first required material no reachable cell touches.
fn check_reachability(grid: &Grid, spawn: Position) -> Result<(), Material> {
    if grid.get(spawn) != Some(Material::Grass) {
        return Err(Material::Grass);
    }
    let mut seen = BTreeSet::from([spawn]);
    let mut queue = VecDeque::from([spawn]);
    let mut touched = BTreeSet::new();
    while let Some(p) = queue.pop_front() {
        for d in Direction::ALL {
            let q = p.step(d);
            let Some(m) = grid.get(q) else { continue };
            touched.insert(m);
            if passable_for_reachability(m) && seen.insert(q) {
                queue.push_back(q);
            }
        }
    }
    match REQUIRED.into_iter().find(|m| !touched.contains(m)) {
        Some(m) => Err(m),
        None => Ok(()),
    }
}

/// Grass cells nearest the center, ordered by (L1 distance, y, x).
fn spawn_cells(grid: &Grid, n: usize) -> Vec<Position> {
    let center = grid.center();
    let mut cells: Vec<Position> = grid
        .positions()
        .filter(|p| grid.get(*p) == Some(Material::Grass))
        .collect();
    cells.sort_by_key(|p| (p.manhattan(center), p.y, p.x));
    cells.truncate(n);
    cells
}

fn place_cows(grid: &Grid, center: Position, spawns: &[Position], rng: &mut SplitMix64) -> BTreeSet<Position> {
    let mut cows = BTreeSet::new();
    for p in grid.positions() {
        if grid.get(p) != Some(Material::Grass) {
            continue;
        }
        let u = rng.next_f64();
        if p.manhattan(center) > 3 && u > 0.985 && !spawns.contains(&p) {
            cows.insert(p);
        }
    }
    cows
}
