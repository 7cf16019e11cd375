//! The crafting hierarchy as data.
//!
//! A [`TechTree`] holds one [`Recipe`] per task together with the depth of
//! every scored achievement. It answers "what is missing for this task?"
//! for the simulator, the planners and the prompt feedback block. The tree
//! round-trips through a JSON document so dependencies can be edited
//! without recompiling.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{Facing, Inventory, Item, Material};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TechTreeError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("`{0}` is not a scored achievement")]
    NotScored(String),
    #[error("tech tree document is malformed: {0}")]
    Malformed(String),
}

/// The twelve tasks of the crafting table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    CollectCow,
    CollectDrink,
    CollectWood,
    CollectStone,
    CollectCoal,
    CollectIron,
    CollectDiamond,
    PlaceTable,
    PlaceFurnace,
    MakeWoodPickaxe,
    MakeStonePickaxe,
    MakeIronPickaxe,
}

impl Task {
    pub const ALL: [Task; 12] = [
        Task::CollectCow,
        Task::CollectDrink,
        Task::CollectWood,
        Task::CollectStone,
        Task::CollectCoal,
        Task::CollectIron,
        Task::CollectDiamond,
        Task::PlaceTable,
        Task::PlaceFurnace,
        Task::MakeWoodPickaxe,
        Task::MakeStonePickaxe,
        Task::MakeIronPickaxe,
    ];

    /// The ten scored milestones in reporting order.
    pub const MILESTONES: [Task; 10] = [
        Task::CollectWood,
        Task::PlaceTable,
        Task::MakeWoodPickaxe,
        Task::CollectStone,
        Task::MakeStonePickaxe,
        Task::CollectIron,
        Task::CollectCoal,
        Task::PlaceFurnace,
        Task::MakeIronPickaxe,
        Task::CollectDiamond,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::CollectCow => "collect_cow",
            Task::CollectDrink => "collect_drink",
            Task::CollectWood => "collect_wood",
            Task::CollectStone => "collect_stone",
            Task::CollectCoal => "collect_coal",
            Task::CollectIron => "collect_iron",
            Task::CollectDiamond => "collect_diamond",
            Task::PlaceTable => "place_table",
            Task::PlaceFurnace => "place_furnace",
            Task::MakeWoodPickaxe => "make_wood_pickaxe",
            Task::MakeStonePickaxe => "make_stone_pickaxe",
            Task::MakeIronPickaxe => "make_iron_pickaxe",
        }
    }

    pub fn is_collect(self) -> bool {
        matches!(
            self,
            Task::CollectCow
                | Task::CollectDrink
                | Task::CollectWood
                | Task::CollectStone
                | Task::CollectCoal
                | Task::CollectIron
                | Task::CollectDiamond
        )
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = TechTreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| TechTreeError::UnknownTask(s.to_string()))
    }
}

/// What a successful task yields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Product {
    Item(Item),
    Station(Material),
    RestoreFood,
    RestoreDrink,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recipe {
    pub task: Task,
    pub facing: Facing,
    pub required: BTreeMap<Item, u32>,
    pub consumed: BTreeMap<Item, u32>,
    pub produces: Product,
}

impl Recipe {
    fn new(task: Task, facing: Facing, required: &[(Item, u32)], produces: Product) -> Self {
        let required: BTreeMap<Item, u32> = required.iter().copied().collect();
        // Materials are used up, tools are not.
        let consumed = required
            .iter()
            .filter(|(item, _)| !item.is_tool())
            .map(|(i, n)| (*i, *n))
            .collect();
        Self {
            task,
            facing,
            required,
            consumed,
            produces,
        }
    }
}

/// One missing prerequisite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Requirement {
    /// The agent must face this.
    Facing(Facing),
    /// `missing` more units of `item` are needed.
    Item { item: Item, missing: u32 },
    /// `do` was requested while facing nothing collectible.
    Collectible,
}

impl fmt::Display for Requirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Requirement::Facing(facing) => write!(f, "facing {facing}"),
            Requirement::Item { item, missing } => write!(f, "{item}:{missing}"),
            Requirement::Collectible => f.write_str("facing something collectible"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TechTree {
    pub recipes: Vec<Recipe>,
    pub depth: BTreeMap<Task, u8>,
}

impl Default for TechTree {
    fn default() -> Self {
        Self::standard()
    }
}

impl TechTree {
    pub const MAX_DEPTH: u8 = 7;

    /// The reference crafting table.
    pub fn standard() -> Self {
        use Item::*;
        let m = Facing::Material;
        let recipes = vec![
            Recipe::new(Task::CollectCow, Facing::Cow, &[], Product::RestoreFood),
            Recipe::new(Task::CollectDrink, m(Material::Water), &[], Product::RestoreDrink),
            Recipe::new(Task::CollectWood, m(Material::Tree), &[], Product::Item(Wood)),
            Recipe::new(Task::CollectStone, m(Material::Stone), &[(WoodPickaxe, 1)], Product::Item(Stone)),
            Recipe::new(Task::CollectCoal, m(Material::Coal), &[(WoodPickaxe, 1)], Product::Item(Coal)),
            Recipe::new(Task::CollectIron, m(Material::Iron), &[(StonePickaxe, 1)], Product::Item(Iron)),
            Recipe::new(
                Task::CollectDiamond,
                m(Material::Diamond),
                &[(IronPickaxe, 1)],
                Product::Item(Diamond),
            ),
            Recipe::new(Task::PlaceTable, m(Material::Grass), &[(Wood, 2)], Product::Station(Material::Table)),
            Recipe::new(
                Task::PlaceFurnace,
                m(Material::Grass),
                &[(Stone, 4)],
                Product::Station(Material::Furnace),
            ),
            Recipe::new(Task::MakeWoodPickaxe, m(Material::Table), &[(Wood, 1)], Product::Item(WoodPickaxe)),
            Recipe::new(
                Task::MakeStonePickaxe,
                m(Material::Table),
                &[(Stone, 1), (Wood, 1)],
                Product::Item(StonePickaxe),
            ),
            Recipe::new(
                Task::MakeIronPickaxe,
                m(Material::Furnace),
                &[(Iron, 1), (Coal, 1), (Wood, 1)],
                Product::Item(IronPickaxe),
            ),
        ];
        let depth = [
            (Task::CollectWood, 1),
            (Task::PlaceTable, 2),
            (Task::MakeWoodPickaxe, 3),
            (Task::CollectStone, 4),
            (Task::CollectCoal, 4),
            (Task::MakeStonePickaxe, 5),
            (Task::PlaceFurnace, 5),
            (Task::CollectIron, 5),
            (Task::MakeIronPickaxe, 6),
            (Task::CollectDiamond, 7),
        ]
        .into_iter()
        .collect();
        Self { recipes, depth }
    }

    pub fn recipe(&self, task: Task) -> Option<&Recipe> {
        self.recipes.iter().find(|r| r.task == task)
    }

    /// Lookup by task name.
    pub fn recipe_for(&self, name: &str) -> Result<&Recipe, TechTreeError> {
        let task: Task = name.parse()?;
        self.recipe(task)
            .ok_or_else(|| TechTreeError::UnknownTask(name.to_string()))
    }

    /// Score depth of a milestone. Survival tasks carry no depth.
    pub fn depth_of(&self, task: Task) -> Result<u8, TechTreeError> {
        self.depth
            .get(&task)
            .copied()
            .ok_or_else(|| TechTreeError::NotScored(task.name().to_string()))
    }

    /// The collect recipe that `do` triggers while facing `facing`.
    pub fn collect_recipe(&self, facing: Facing) -> Option<&Recipe> {
        self.recipes
            .iter()
            .find(|r| r.task.is_collect() && r.facing == facing)
    }

    /// The task whose product is `item`.
    pub fn producer_of(&self, item: Item) -> Option<Task> {
        self.recipes
            .iter()
            .find(|r| r.produces == Product::Item(item))
            .map(|r| r.task)
    }

    /// Every shortfall for `task`; empty iff the task can be performed now.
    pub fn unmet_requirements(&self, inventory: &Inventory, facing: Facing, task: Task) -> Vec<Requirement> {
        let Some(recipe) = self.recipe(task) else {
            return vec![Requirement::Collectible];
        };
        let mut unmet = Vec::new();
        if recipe.facing != facing {
            unmet.push(Requirement::Facing(recipe.facing));
        }
        unmet.extend(item_shortfalls(recipe, inventory));
        unmet
    }

    /// Item shortfalls only, ignoring what the agent faces.
    pub fn missing_items(&self, inventory: &Inventory, task: Task) -> Vec<(Item, u32)> {
        self.recipe(task)
            .map(|r| {
                item_shortfalls(r, inventory)
                    .filter_map(|req| match req {
                        Requirement::Item { item, missing } => Some((item, missing)),
                        _ => None,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// The prompt "feedback" block: one line per action type with its
    /// prerequisites and whether they hold right now.
    pub fn feedback_lines(&self, inventory: &Inventory, facing: Facing, share_range: u32) -> Vec<String> {
        let mark = |unmet: &[Requirement]| {
            if unmet.is_empty() {
                "[met]".to_string()
            } else {
                let parts: Vec<String> = unmet.iter().map(|r| r.to_string()).collect();
                format!("[unmet: {}]", parts.join(", "))
            }
        };
        let task_line = |action: &str, task: Task| {
            let unmet = self.unmet_requirements(inventory, facing, task);
            format!("{action}: {} {}", self.describe(task), mark(&unmet))
        };
        let collects: Vec<String> = self
            .recipes
            .iter()
            .filter(|r| r.task.is_collect())
            .map(|r| {
                let unmet = self.unmet_requirements(inventory, facing, r.task);
                let state = if unmet.is_empty() { "met" } else { "unmet" };
                format!("{} {{{}}} {state}", r.task, self.describe(r.task))
            })
            .collect();
        let place_stone_unmet = place_stone_unmet(inventory, facing);
        let place_plant_unmet = place_plant_unmet(facing);
        let share_state = if inventory.is_empty() {
            "[unmet: empty inventory]"
        } else {
            "[met]"
        };
        let destinations: Vec<&str> = Material::NAVIGABLE.iter().map(|m| m.name()).collect();
        vec![
            "noop: no requirements [met]".to_string(),
            "move_left: step west when the cell is free, otherwise turn west [met]".to_string(),
            "move_right: step east when the cell is free, otherwise turn east [met]".to_string(),
            "move_up: step north when the cell is free, otherwise turn north [met]".to_string(),
            "move_down: step south when the cell is free, otherwise turn south [met]".to_string(),
            format!("do: {}", collects.join("; ")),
            "sleep: restores energy while asleep [met]".to_string(),
            format!("place_stone: facing grass/sand/path/water/lava, stone 1 {}", mark(&place_stone_unmet)),
            task_line("place_table", Task::PlaceTable),
            task_line("place_furnace", Task::PlaceFurnace),
            format!("place_plant: facing grass {}", mark(&place_plant_unmet)),
            task_line("make_wood_pickaxe", Task::MakeWoodPickaxe),
            task_line("make_stone_pickaxe", Task::MakeStonePickaxe),
            task_line("make_iron_pickaxe", Task::MakeIronPickaxe),
            format!("Navigator: walk toward one of {} [met]", destinations.join(", ")),
            format!("share: give one item to an agent within {share_range} cells {share_state}"),
        ]
    }

    /// `facing X, item n, ...` for a task.
    pub fn describe(&self, task: Task) -> String {
        match self.recipe(task) {
            Some(r) => {
                let mut parts = vec![format!("facing {}", r.facing)];
                parts.extend(r.required.iter().map(|(i, n)| format!("{i} {n}")));
                parts.join(", ")
            }
            None => "unavailable".to_string(),
        }
    }

    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("tech tree serializes")
    }

    pub fn from_document(doc: &str) -> Result<Self, TechTreeError> {
        let tree: TechTree =
            serde_json::from_str(doc).map_err(|e| TechTreeError::Malformed(e.to_string()))?;
        tree.validate()?;
        Ok(tree)
    }

    pub fn validate(&self) -> Result<(), TechTreeError> {
        for task in Task::ALL {
            let n = self.recipes.iter().filter(|r| r.task == task).count();
            if n > 1 {
                return Err(TechTreeError::Malformed(format!("task {task} listed {n} times")));
            }
        }
        for r in &self.recipes {
            for (item, n) in &r.consumed {
                if r.required.get(item).copied().unwrap_or(0) < *n {
                    return Err(TechTreeError::Malformed(format!(
                        "{}: consumes {item} beyond its requirement",
                        r.task
                    )));
                }
            }
        }
        if let Some((task, d)) = self
            .depth
            .iter()
            .find(|(_, d)| **d == 0 || **d > Self::MAX_DEPTH)
        {
            return Err(TechTreeError::Malformed(format!("{task}: depth {d} outside 1..=7")));
        }
        Ok(())
    }
}

fn item_shortfalls<'a>(recipe: &'a Recipe, inventory: &'a Inventory) -> impl Iterator<Item = Requirement> + 'a {
    recipe.required.iter().filter_map(|(item, need)| {
        let have = inventory.count(*item);
        (have < *need).then(|| Requirement::Item {
            item: *item,
            missing: need - have,
        })
    })
}

/// Cells a stone block may be placed onto.
pub const STONE_TARGETS: [Material; 5] = [
    Material::Grass,
    Material::Sand,
    Material::Path,
    Material::Water,
    Material::Lava,
];

pub(crate) fn place_stone_unmet(inventory: &Inventory, facing: Facing) -> Vec<Requirement> {
    let mut unmet = Vec::new();
    match facing {
        Facing::Material(m) if STONE_TARGETS.contains(&m) => {}
        _ => unmet.push(Requirement::Facing(Facing::Material(Material::Grass))),
    }
    if !inventory.has(Item::Stone) {
        unmet.push(Requirement::Item {
            item: Item::Stone,
            missing: 1,
        });
    }
    unmet
}

pub(crate) fn place_plant_unmet(facing: Facing) -> Vec<Requirement> {
    if facing == Facing::Material(Material::Grass) {
        Vec::new()
    } else {
        vec![Requirement::Facing(Facing::Material(Material::Grass))]
    }
}
