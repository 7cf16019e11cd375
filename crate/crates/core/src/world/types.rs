use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::techtree::Task;

/// One terrain cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Material {
    Grass,
    Sand,
    Water,
    Stone,
    Tree,
    Coal,
    Iron,
    Diamond,
    Lava,
    Path,
    Table,
    Furnace,
    Plant,
}

impl Material {
    pub const ALL: [Material; 13] = [
        Material::Grass,
        Material::Sand,
        Material::Water,
        Material::Stone,
        Material::Tree,
        Material::Coal,
        Material::Iron,
        Material::Diamond,
        Material::Lava,
        Material::Path,
        Material::Table,
        Material::Furnace,
        Material::Plant,
    ];

    /// Destinations the navigator accepts.
    pub const NAVIGABLE: [Material; 9] = [
        Material::Tree,
        Material::Water,
        Material::Stone,
        Material::Iron,
        Material::Diamond,
        Material::Coal,
        Material::Grass,
        Material::Table,
        Material::Furnace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Material::Grass => "grass",
            Material::Sand => "sand",
            Material::Water => "water",
            Material::Stone => "stone",
            Material::Tree => "tree",
            Material::Coal => "coal",
            Material::Iron => "iron",
            Material::Diamond => "diamond",
            Material::Lava => "lava",
            Material::Path => "path",
            Material::Table => "table",
            Material::Furnace => "furnace",
            Material::Plant => "plant",
        }
    }

    /// Cells an agent can stand on. Lava is walkable and lethal.
    pub fn is_walkable(self) -> bool {
        matches!(
            self,
            Material::Grass | Material::Sand | Material::Path | Material::Lava
        )
    }

    /// Cells that turn into path when collected.
    pub fn is_mineral(self) -> bool {
        matches!(
            self,
            Material::Stone | Material::Coal | Material::Iron | Material::Diamond
        )
    }

    pub fn is_navigable(self) -> bool {
        Self::NAVIGABLE.contains(&self)
    }

    /// Single-character glyph used by the text map render.
    pub fn glyph(self) -> char {
        match self {
            Material::Grass => '.',
            Material::Sand => ':',
            Material::Water => '~',
            Material::Stone => '#',
            Material::Tree => 'T',
            Material::Coal => 'c',
            Material::Iron => 'i',
            Material::Diamond => 'D',
            Material::Lava => '!',
            Material::Path => '_',
            Material::Table => 't',
            Material::Furnace => 'f',
            Material::Plant => 'p',
        }
    }

    pub fn from_glyph(c: char) -> Option<Material> {
        Material::ALL.into_iter().find(|m| m.glyph() == c)
    }
}

impl fmt::Display for Material {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Material {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Material::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown material `{s}`"))
    }
}

/// Inventory items. Every item can be shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Item {
    Wood,
    Stone,
    Coal,
    Iron,
    Diamond,
    WoodPickaxe,
    StonePickaxe,
    IronPickaxe,
}

impl Item {
    pub const ALL: [Item; 8] = [
        Item::Wood,
        Item::Stone,
        Item::Coal,
        Item::Iron,
        Item::Diamond,
        Item::WoodPickaxe,
        Item::StonePickaxe,
        Item::IronPickaxe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Item::Wood => "wood",
            Item::Stone => "stone",
            Item::Coal => "coal",
            Item::Iron => "iron",
            Item::Diamond => "diamond",
            Item::WoodPickaxe => "wood_pickaxe",
            Item::StonePickaxe => "stone_pickaxe",
            Item::IronPickaxe => "iron_pickaxe",
        }
    }

    pub fn is_tool(self) -> bool {
        matches!(
            self,
            Item::WoodPickaxe | Item::StonePickaxe | Item::IronPickaxe
        )
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Item {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Item::ALL
            .into_iter()
            .find(|i| i.name() == s)
            .ok_or_else(|| format!("unknown item `{s}`"))
    }
}

/// Item counts. Zero entries are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Inventory(BTreeMap<Item, u32>);

impl Inventory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self, item: Item) -> u32 {
        self.0.get(&item).copied().unwrap_or(0)
    }

    pub fn has(&self, item: Item) -> bool {
        self.count(item) > 0
    }

    pub fn add(&mut self, item: Item, n: u32) {
        if n > 0 {
            *self.0.entry(item).or_insert(0) += n;
        }
    }

    /// Removes `n` units; returns false (and changes nothing) when fewer are held.
    pub fn remove(&mut self, item: Item, n: u32) -> bool {
        let have = self.count(item);
        if have < n {
            return false;
        }
        if have == n {
            self.0.remove(&item);
        } else {
            self.0.insert(item, have - n);
        }
        true
    }

    pub fn iter(&self) -> impl Iterator<Item = (Item, u32)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Signed per-item change from `before` to `self`.
    pub fn delta_from(&self, before: &Inventory) -> BTreeMap<Item, i64> {
        Item::ALL
            .into_iter()
            .filter_map(|item| {
                let d = i64::from(self.count(item)) - i64::from(before.count(item));
                (d != 0).then_some((item, d))
            })
            .collect()
    }
}

impl FromIterator<(Item, u32)> for Inventory {
    fn from_iter<T: IntoIterator<Item = (Item, u32)>>(iter: T) -> Self {
        let mut inv = Inventory::new();
        for (item, n) in iter {
            inv.add(item, n);
        }
        inv
    }
}

impl fmt::Display for Inventory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("empty");
        }
        let parts: Vec<String> = self.iter().map(|(i, n)| format!("{i}:{n}")).collect();
        f.write_str(&parts.join(", "))
    }
}

/// Agent identifier, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl AgentId {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Position {
    pub x: i32,
    pub y: i32,
}

impl Position {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn step(self, dir: Direction) -> Position {
        let (dx, dy) = dir.delta();
        Position::new(self.x + dx, self.y + dy)
    }

    pub fn manhattan(self, other: Position) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
}

impl Direction {
    /// Fixed expansion order used everywhere a direction must be picked.
    pub const ALL: [Direction; 4] = [
        Direction::Left,
        Direction::Right,
        Direction::Up,
        Direction::Down,
    ];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
            Direction::Up => (0, -1),
            Direction::Down => (0, 1),
        }
    }

    pub fn move_action(self) -> ActionKind {
        match self {
            Direction::Left => ActionKind::MoveLeft,
            Direction::Right => ActionKind::MoveRight,
            Direction::Up => ActionKind::MoveUp,
            Direction::Down => ActionKind::MoveDown,
        }
    }

    pub fn towards(from: Position, to: Position) -> Option<Direction> {
        Direction::ALL.into_iter().find(|d| from.step(*d) == to)
    }
}

/// Health, food, drink and energy, each in `[0, 9]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vitals {
    pub health: u8,
    pub food: u8,
    pub drink: u8,
    pub energy: u8,
}

impl Vitals {
    pub const MAX: u8 = 9;

    pub fn full() -> Self {
        Self {
            health: Self::MAX,
            food: Self::MAX,
            drink: Self::MAX,
            energy: Self::MAX,
        }
    }
}

impl fmt::Display for Vitals {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "health {}, food {}, drink {}, energy {}",
            self.health, self.food, self.drink, self.energy
        )
    }
}

/// What the cell in front of an agent holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Facing {
    Material(Material),
    Cow,
    OutOfBounds,
}

impl fmt::Display for Facing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Facing::Material(m) => write!(f, "{m}"),
            Facing::Cow => f.write_str("cow"),
            Facing::OutOfBounds => f.write_str("out_of_bounds"),
        }
    }
}

/// A fixed-size set of grid cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellSet {
    width: i32,
    height: i32,
    words: Vec<u64>,
}

impl CellSet {
    pub fn new(width: i32, height: i32) -> Self {
        let n = (width * height) as usize;
        Self {
            width,
            height,
            words: vec![0; n.div_ceil(64)],
        }
    }

    fn index(&self, p: Position) -> Option<usize> {
        (p.x >= 0 && p.y >= 0 && p.x < self.width && p.y < self.height)
            .then(|| (p.y * self.width + p.x) as usize)
    }

    pub fn contains(&self, p: Position) -> bool {
        self.index(p)
            .map(|i| self.words[i / 64] >> (i % 64) & 1 == 1)
            .unwrap_or(false)
    }

    pub fn insert(&mut self, p: Position) -> bool {
        match self.index(p) {
            Some(i) => {
                let fresh = self.words[i / 64] >> (i % 64) & 1 == 0;
                self.words[i / 64] |= 1 << (i % 64);
                fresh
            }
            None => false,
        }
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }
}

/// The full per-agent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub position: Position,
    pub facing: Direction,
    pub vitals: Vitals,
    pub inventory: Inventory,
    pub alive: bool,
    pub sleeping: bool,
    /// First-completion tick of each task.
    pub achievements: BTreeMap<Task, u64>,
    pub discovered: CellSet,
}

/// Every action an agent may submit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Noop,
    MoveLeft,
    MoveRight,
    MoveUp,
    MoveDown,
    Do,
    Sleep,
    PlaceStone,
    PlaceTable,
    PlaceFurnace,
    PlacePlant,
    MakeWoodPickaxe,
    MakeStonePickaxe,
    MakeIronPickaxe,
    Navigate { target: Material },
    Share { target_agent: AgentId, item: Item },
}

impl ActionKind {
    /// The payload-free actions, in their canonical order.
    pub const PRIMITIVES: [ActionKind; 14] = [
        ActionKind::Noop,
        ActionKind::MoveLeft,
        ActionKind::MoveRight,
        ActionKind::MoveUp,
        ActionKind::MoveDown,
        ActionKind::Do,
        ActionKind::Sleep,
        ActionKind::PlaceStone,
        ActionKind::PlaceTable,
        ActionKind::PlaceFurnace,
        ActionKind::PlacePlant,
        ActionKind::MakeWoodPickaxe,
        ActionKind::MakeStonePickaxe,
        ActionKind::MakeIronPickaxe,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ActionKind::Noop => "noop",
            ActionKind::MoveLeft => "move_left",
            ActionKind::MoveRight => "move_right",
            ActionKind::MoveUp => "move_up",
            ActionKind::MoveDown => "move_down",
            ActionKind::Do => "do",
            ActionKind::Sleep => "sleep",
            ActionKind::PlaceStone => "place_stone",
            ActionKind::PlaceTable => "place_table",
            ActionKind::PlaceFurnace => "place_furnace",
            ActionKind::PlacePlant => "place_plant",
            ActionKind::MakeWoodPickaxe => "make_wood_pickaxe",
            ActionKind::MakeStonePickaxe => "make_stone_pickaxe",
            ActionKind::MakeIronPickaxe => "make_iron_pickaxe",
            ActionKind::Navigate { .. } => "Navigator",
            ActionKind::Share { .. } => "share",
        }
    }

    pub fn direction(&self) -> Option<Direction> {
        match self {
            ActionKind::MoveLeft => Some(Direction::Left),
            ActionKind::MoveRight => Some(Direction::Right),
            ActionKind::MoveUp => Some(Direction::Up),
            ActionKind::MoveDown => Some(Direction::Down),
            _ => None,
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionKind::Navigate { target } => write!(f, "Navigator({target})"),
            ActionKind::Share { target_agent, item } => write!(f, "share({target_agent},{item})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionResult {
    Success,
    Failure,
    InProgress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeReason {
    Ok,
    PrereqUnmet,
    TargetGone,
    OutOfRange,
    Blocked,
    Dead,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub agent: AgentId,
    pub action: ActionKind,
    pub result: ActionResult,
    pub reason: OutcomeReason,
}

impl ActionOutcome {
    pub fn new(agent: AgentId, action: ActionKind, result: ActionResult, reason: OutcomeReason) -> Self {
        Self {
            agent,
            action,
            result,
            reason,
        }
    }

    pub fn is_success(&self) -> bool {
        self.result == ActionResult::Success
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeathCause {
    Lava,
    Vitals,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EventKind {
    Achievement { task: Task },
    Died { cause: DeathCause },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    pub agent: AgentId,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Episode parameters. Defaults are the documented reference configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub width: i32,
    pub height: i32,
    pub n_agents: u32,
    pub seed: u64,
    pub max_ticks: u64,
    pub view_width: i32,
    pub view_height: i32,
    /// Maximum L1 distance for `share`.
    pub share_range: u32,
    /// Reward subtracted per tick.
    pub time_penalty: f64,
    pub food_period: u64,
    pub drink_period: u64,
    pub energy_period: u64,
    pub regen_period: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            n_agents: 1,
            seed: 0,
            max_ticks: 400,
            view_width: 9,
            view_height: 7,
            share_range: 6,
            time_penalty: 0.01,
            food_period: 25,
            drink_period: 25,
            energy_period: 30,
            regen_period: 10,
        }
    }
}

impl EpisodeConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_agents(mut self, n: u32) -> Self {
        self.n_agents = n;
        self
    }
}
