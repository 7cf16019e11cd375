//! Wire codec for the planner's structured response.
//!
//! A [`ResponseEvent`] is the JSON document a planner (scripted or remote)
//! returns every tick. Field order and enum spellings are fixed so the same
//! bytes round-trip. [`parse_response`] validates a document and names the
//! offending field on failure; [`extract_action`] turns a valid event into a
//! simulator action.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::techtree::Task;
use crate::world::{ActionKind, AgentId, Facing, Item, Material};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("response is not valid JSON: {0}")]
    Syntax(String),
    #[error("field `{path}`: {message}")]
    Field { path: String, message: String },
    #[error("inconsistent intent: {0}")]
    InconsistentIntent(String),
}

macro_rules! wire_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident = $wire:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $wire)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $wire),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| format!("`{s}` is not a valid {}", stringify!($name)))
            }
        }
    };
}

wire_enum!(ResultType {
    Success = "success",
    Failure = "failure",
    InProgress = "in_progress",
});

wire_enum!(ActionType {
    Noop = "noop",
    MoveLeft = "move_left",
    MoveRight = "move_right",
    MoveUp = "move_up",
    MoveDown = "move_down",
    Do = "do",
    Sleep = "sleep",
    PlaceStone = "place_stone",
    PlaceTable = "place_table",
    PlaceFurnace = "place_furnace",
    PlacePlant = "place_plant",
    MakeWoodPickaxe = "make_wood_pickaxe",
    MakeStonePickaxe = "make_stone_pickaxe",
    MakeIronPickaxe = "make_iron_pickaxe",
    Navigator = "Navigator",
    Share = "share",
});

wire_enum!(GoalType {
    CollectWood = "collect_wood",
    MakeWoodPickaxe = "make_wood_pickaxe",
    CollectStone = "collect_stone",
    MakeStonePickaxe = "make_stone_pickaxe",
    CollectIron = "collect_iron",
    MakeIronPickaxe = "make_iron_pickaxe",
    CollectDiamond = "collect_diamond",
    PlaceTable = "place_table",
    PlaceFurnace = "place_furnace",
    CollectCoal = "collect_coal",
    Share = "share",
});

wire_enum!(LongTermGoalType {
    MakeWoodPickaxe = "make_wood_pickaxe",
    MakeStonePickaxe = "make_stone_pickaxe",
    MakeIronPickaxe = "make_iron_pickaxe",
    PlaceTable = "place_table",
    PlaceFurnace = "place_furnace",
    CollectDiamond = "collect_diamond",
    HelpAgent = "help_agent",
});

wire_enum!(MaterialType {
    Table = "table",
    Furnace = "furnace",
    Grass = "grass",
    Sand = "sand",
    Lava = "lava",
    Tree = "tree",
    Water = "water",
    Stone = "stone",
    Coal = "coal",
    Iron = "iron",
    Diamond = "diamond",
});

wire_enum!(NavigationDestination {
    Tree = "tree",
    Water = "water",
    Stone = "stone",
    Iron = "iron",
    Diamond = "diamond",
    Coal = "coal",
    Grass = "grass",
    Table = "table",
    Furnace = "furnace",
    NotApplicable = "not_applicable",
});

wire_enum!(ShareableItem {
    Wood = "wood",
    Stone = "stone",
    Coal = "coal",
    Iron = "iron",
    Diamond = "diamond",
    WoodPickaxe = "wood_pickaxe",
    StonePickaxe = "stone_pickaxe",
    IronPickaxe = "iron_pickaxe",
    NotApplicable = "not_applicable",
});

wire_enum!(InventoryItem {
    Wood = "wood",
    Stone = "stone",
    Coal = "coal",
    Iron = "iron",
    Diamond = "diamond",
    WoodPickaxe = "wood_pickaxe",
    StonePickaxe = "stone_pickaxe",
    IronPickaxe = "iron_pickaxe",
});

impl MaterialType {
    /// Terrain-only cells are reported as their nearest wire value:
    /// path as sand, plant as grass, a cow as grass and the map edge as water.
    pub fn from_material(m: Material) -> Self {
        match m {
            Material::Grass | Material::Plant => MaterialType::Grass,
            Material::Sand | Material::Path => MaterialType::Sand,
            Material::Water => MaterialType::Water,
            Material::Stone => MaterialType::Stone,
            Material::Tree => MaterialType::Tree,
            Material::Coal => MaterialType::Coal,
            Material::Iron => MaterialType::Iron,
            Material::Diamond => MaterialType::Diamond,
            Material::Lava => MaterialType::Lava,
            Material::Table => MaterialType::Table,
            Material::Furnace => MaterialType::Furnace,
        }
    }

    pub fn from_facing(f: Facing) -> Self {
        match f {
            Facing::Material(m) => Self::from_material(m),
            Facing::Cow => MaterialType::Grass,
            Facing::OutOfBounds => MaterialType::Water,
        }
    }
}

impl NavigationDestination {
    pub fn material(self) -> Option<Material> {
        match self {
            NavigationDestination::Tree => Some(Material::Tree),
            NavigationDestination::Water => Some(Material::Water),
            NavigationDestination::Stone => Some(Material::Stone),
            NavigationDestination::Iron => Some(Material::Iron),
            NavigationDestination::Diamond => Some(Material::Diamond),
            NavigationDestination::Coal => Some(Material::Coal),
            NavigationDestination::Grass => Some(Material::Grass),
            NavigationDestination::Table => Some(Material::Table),
            NavigationDestination::Furnace => Some(Material::Furnace),
            NavigationDestination::NotApplicable => None,
        }
    }

    pub fn from_material(m: Material) -> Self {
        Self::ALL
            .iter()
            .copied()
            .find(|d| d.material() == Some(m))
            .unwrap_or(NavigationDestination::NotApplicable)
    }
}

impl ShareableItem {
    pub fn item(self) -> Option<Item> {
        self.as_str().parse().ok()
    }

    pub fn from_item(item: Item) -> Self {
        item.name().parse().expect("every item is shareable")
    }
}

impl InventoryItem {
    pub fn item(self) -> Item {
        self.as_str().parse().expect("inventory items mirror world items")
    }

    pub fn from_item(item: Item) -> Self {
        item.name().parse().expect("every item is an inventory item")
    }
}

impl ActionType {
    pub fn from_action(a: &ActionKind) -> Self {
        a.name().parse().expect("action names mirror the wire enum")
    }

    /// The primitive for payload-free types.
    pub fn primitive(self) -> Option<ActionKind> {
        ActionKind::PRIMITIVES.into_iter().find(|a| a.name() == self.as_str())
    }
}

impl GoalType {
    /// The tech-tree task behind this goal; `share` has none.
    pub fn task(self) -> Option<Task> {
        self.as_str().parse().ok()
    }

    pub fn from_task(task: Task) -> Option<Self> {
        task.name().parse().ok()
    }
}

impl LongTermGoalType {
    pub fn task(self) -> Option<Task> {
        self.as_str().parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reflection {
    pub vision: Vec<MaterialType>,
    pub last_action: ActionType,
    pub last_action_result: ResultType,
    pub last_action_result_reflection: String,
    pub last_action_repeated_reflection: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub ultimate_goal: LongTermGoalType,
    pub long_term_goal: LongTermGoalType,
    pub long_term_goal_subgoals: String,
    pub long_term_goal_progress: GoalType,
    pub long_term_goal_status: ResultType,
    pub current_goal: GoalType,
    pub current_goal_reason: String,
    pub current_goal_status: ResultType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryItemsCount {
    pub item: InventoryItem,
    pub count: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextAction {
    pub next_action: ActionType,
    pub next_action_reason: String,
    pub next_action_prerequisites_status: ResultType,
    pub next_action_prerequisites: String,
    pub final_next_action: ActionType,
    pub final_next_action_reason: String,
    pub final_target_material_to_collect: NavigationDestination,
    pub final_target_material_to_share: ShareableItem,
    /// `-1` when no agent is targeted.
    pub final_target_agent_id: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Collaboration {
    /// `-1` when helping nobody.
    pub target_agent_to_help: i64,
    pub target_agent_need: ShareableItem,
    pub help_method: String,
    pub can_help_now: ResultType,
    /// `-1` when nobody is helping.
    pub being_helped_by_agent: i64,
    pub help_method_by_agent: String,
    pub change_in_plan: String,
}

impl Collaboration {
    pub fn none() -> Self {
        Self {
            target_agent_to_help: -1,
            target_agent_need: ShareableItem::NotApplicable,
            help_method: "not applicable".to_string(),
            can_help_now: ResultType::Failure,
            being_helped_by_agent: -1,
            help_method_by_agent: "not applicable".to_string(),
            change_in_plan: "none".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseEvent {
    #[serde(alias = "epsiode_number")]
    pub episode_number: i64,
    pub timestep: i64,
    pub past_events: String,
    pub current_facing_direction: MaterialType,
    pub current_inventory: Vec<InventoryItemsCount>,
    pub collaboration: Collaboration,
    pub reflection: Reflection,
    pub goal: Goal,
    pub action: NextAction,
    pub summary: String,
}

const RESPONSE_FIELDS: [&str; 10] = [
    "episode_number",
    "timestep",
    "past_events",
    "current_facing_direction",
    "current_inventory",
    "collaboration",
    "reflection",
    "goal",
    "action",
    "summary",
];
const COLLABORATION_FIELDS: [&str; 7] = [
    "target_agent_to_help",
    "target_agent_need",
    "help_method",
    "can_help_now",
    "being_helped_by_agent",
    "help_method_by_agent",
    "change_in_plan",
];
const REFLECTION_FIELDS: [&str; 5] = [
    "vision",
    "last_action",
    "last_action_result",
    "last_action_result_reflection",
    "last_action_repeated_reflection",
];
const GOAL_FIELDS: [&str; 8] = [
    "ultimate_goal",
    "long_term_goal",
    "long_term_goal_subgoals",
    "long_term_goal_progress",
    "long_term_goal_status",
    "current_goal",
    "current_goal_reason",
    "current_goal_status",
];
const ACTION_FIELDS: [&str; 9] = [
    "next_action",
    "next_action_reason",
    "next_action_prerequisites_status",
    "next_action_prerequisites",
    "final_next_action",
    "final_next_action_reason",
    "final_target_material_to_collect",
    "final_target_material_to_share",
    "final_target_agent_id",
];
const INVENTORY_FIELDS: [&str; 2] = ["item", "count"];

/// A parsed event plus the non-fatal issues found on the way.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed {
    pub event: ResponseEvent,
    pub warnings: Vec<String>,
}

/// Parse and validate a response document. Unknown fields are ignored and
/// reported as warnings.
pub fn parse_response(document: &str) -> Result<Parsed, SchemaError> {
    let value: Value = serde_json::from_str(document).map_err(|e| SchemaError::Syntax(e.to_string()))?;
    let mut warnings = Vec::new();
    unknown_fields(&value, &mut warnings);
    let event: ResponseEvent = serde_path_to_error::deserialize(&value).map_err(|e| {
        let path = e.path().to_string();
        SchemaError::Field {
            path: if path == "." { "<root>".to_string() } else { path },
            message: e.into_inner().to_string(),
        }
    })?;
    for (i, entry) in event.current_inventory.iter().enumerate() {
        if entry.count <= 0 {
            return Err(SchemaError::Field {
                path: format!("current_inventory[{i}].count"),
                message: format!("count must be positive, got {}", entry.count),
            });
        }
    }
    if value.get("episode_number").is_some() && value.get("epsiode_number").is_some() {
        warnings.push("both `episode_number` and `epsiode_number` present; the first wins".to_string());
    }
    log::debug!("parsed response with {} warning(s)", warnings.len());
    Ok(Parsed { event, warnings })
}

fn unknown_fields(value: &Value, warnings: &mut Vec<String>) {
    let Some(root) = value.as_object() else { return };
    let mut check = |path: &str, obj: &serde_json::Map<String, Value>, known: &[&str]| {
        for key in obj.keys() {
            if !known.contains(&key.as_str()) && !(path.is_empty() && key == "epsiode_number") {
                let full = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
                warnings.push(format!("ignored unknown field `{full}`"));
            }
        }
    };
    check("", root, &RESPONSE_FIELDS);
    let nested: [(&str, &[&str]); 4] = [
        ("collaboration", &COLLABORATION_FIELDS),
        ("reflection", &REFLECTION_FIELDS),
        ("goal", &GOAL_FIELDS),
        ("action", &ACTION_FIELDS),
    ];
    for (name, known) in nested {
        if let Some(obj) = root.get(name).and_then(Value::as_object) {
            check(name, obj, known);
        }
    }
    if let Some(items) = root.get("current_inventory").and_then(Value::as_array) {
        for (i, item) in items.iter().enumerate() {
            if let Some(obj) = item.as_object() {
                check(&format!("current_inventory[{i}]"), obj, &INVENTORY_FIELDS);
            }
        }
    }
}

/// Canonical compact encoding.
pub fn to_document(event: &ResponseEvent) -> String {
    serde_json::to_string(event).expect("response serializes")
}

/// Canonical indented encoding.
pub fn to_document_pretty(event: &ResponseEvent) -> String {
    serde_json::to_string_pretty(event).expect("response serializes")
}

/// The action a valid event asks for.
pub fn extract_action(event: &ResponseEvent, n_agents: u32) -> Result<ActionKind, SchemaError> {
    let a = &event.action;
    match a.final_next_action {
        ActionType::Navigator => match a.final_target_material_to_collect.material() {
            Some(target) => Ok(ActionKind::Navigate { target }),
            None => Err(SchemaError::InconsistentIntent(
                "Navigator requires a destination other than not_applicable".to_string(),
            )),
        },
        ActionType::Share => {
            let Some(item) = a.final_target_material_to_share.item() else {
                return Err(SchemaError::InconsistentIntent(
                    "share requires an item other than not_applicable".to_string(),
                ));
            };
            let id = a.final_target_agent_id;
            if id == -1 {
                return Err(SchemaError::InconsistentIntent("share requires a target agent, got -1".to_string()));
            }
            if id < 1 || id > i64::from(n_agents) {
                return Err(SchemaError::InconsistentIntent(format!(
                    "share target {id} is not an agent in 1..={n_agents}"
                )));
            }
            Ok(ActionKind::Share {
                target_agent: AgentId(id as u32),
                item,
            })
        }
        other => Ok(other.primitive().expect("payload-free action types map to primitives")),
    }
}

/// [`extract_action`] that also rejects sharing with oneself.
pub fn extract_action_for(event: &ResponseEvent, agent: AgentId, n_agents: u32) -> Result<ActionKind, SchemaError> {
    let action = extract_action(event, n_agents)?;
    if let ActionKind::Share { target_agent, .. } = action {
        if target_agent == agent {
            return Err(SchemaError::InconsistentIntent(format!("agent {agent} cannot share with itself")));
        }
    }
    Ok(action)
}

/// Warnings when the collaboration block strays from the help hierarchy
/// (agent `i` helps `i-1` or the leader `1`) or names agents that do not exist.
pub fn validate_collaboration(event: &ResponseEvent, agent: AgentId, n_agents: u32) -> Vec<String> {
    let mut warnings = Vec::new();
    let n = i64::from(n_agents);
    let me = i64::from(agent.0);
    let c = &event.collaboration;
    let target = c.target_agent_to_help;
    if target != -1 {
        if target < 1 || target > n {
            warnings.push(format!("target_agent_to_help {target} does not exist (agents 1..={n})"));
        } else if target == me {
            warnings.push(format!("target_agent_to_help {target} is the agent itself"));
        } else if target != me - 1 && target != 1 {
            warnings.push(format!(
                "agent {me} helping {target} skips the hierarchy (expected {} or 1)",
                me - 1
            ));
        } else if me == 1 {
            warnings.push("the leader is not expected to help other agents".to_string());
        }
    }
    let helper = c.being_helped_by_agent;
    if helper != -1 && (helper < 1 || helper > n || helper == me) {
        warnings.push(format!("being_helped_by_agent {helper} is not another agent"));
    }
    warnings
}

fn enum_schema(description: &str, values: Vec<&'static str>) -> Value {
    json!({ "type": "string", "description": description, "enum": values })
}

fn object_schema(description: &str, props: Vec<(&str, Value)>) -> Value {
    let required: Vec<&str> = props.iter().map(|(k, _)| *k).collect();
    let mut map = serde_json::Map::new();
    for (k, v) in props {
        map.insert(k.to_string(), v);
    }
    json!({
        "type": "object",
        "description": description,
        "properties": map,
        "required": required,
        "additionalProperties": false
    })
}

fn text(description: &str) -> Value {
    json!({ "type": "string", "description": description })
}

fn integer(description: &str) -> Value {
    json!({ "type": "integer", "description": description })
}

fn reference(name: &str) -> Value {
    json!({ "$ref": format!("#/$defs/{name}") })
}

fn values<T: Copy>(all: &[T], f: fn(T) -> &'static str) -> Vec<&'static str> {
    all.iter().copied().map(f).collect()
}

/// JSON Schema for [`ResponseEvent`], suitable for schema-constrained decoding.
pub fn schema_document() -> String {
    let defs = json!({
        "ResultType": enum_schema("Outcome status.", values(ResultType::ALL, ResultType::as_str)),
        "ActionType": enum_schema("Every action the environment accepts.", values(ActionType::ALL, ActionType::as_str)),
        "GoalType": enum_schema("Short-term goals.", values(GoalType::ALL, GoalType::as_str)),
        "LongTermGoalType": enum_schema("Long-term goals.", values(LongTermGoalType::ALL, LongTermGoalType::as_str)),
        "MaterialType": enum_schema("Materials an agent can see or face.", values(MaterialType::ALL, MaterialType::as_str)),
        "NavigationDestinationItems": enum_schema(
            "Destinations for the Navigator action.",
            values(NavigationDestination::ALL, NavigationDestination::as_str)
        ),
        "ShareableItems": enum_schema("Items that can be given to another agent.", values(ShareableItem::ALL, ShareableItem::as_str)),
        "InventoryItems": enum_schema("Items an inventory can hold.", values(InventoryItem::ALL, InventoryItem::as_str)),
        "InventoryItemsCount": object_schema("One inventory entry.", vec![
            ("item", reference("InventoryItems")),
            ("count", integer("Units held, at least 1.")),
        ]),
        "Collaboration": object_schema("Who you help and who helps you.", vec![
            ("target_agent_to_help", integer("Agent you are helping, or -1.")),
            ("target_agent_need", reference("ShareableItems")),
            ("help_method", text("How you will help that agent.")),
            ("can_help_now", reference("ResultType")),
            ("being_helped_by_agent", integer("Agent helping you, or -1.")),
            ("help_method_by_agent", text("How that agent is helping you.")),
            ("change_in_plan", text("How the help changes your plan.")),
        ]),
        "Reflection": object_schema("Review of the previous tick.", vec![
            ("vision", json!({ "type": "array", "description": "Materials currently in view.", "items": reference("MaterialType") })),
            ("last_action", reference("ActionType")),
            ("last_action_result", reference("ResultType")),
            ("last_action_result_reflection", text("Why the last action turned out as it did.")),
            ("last_action_repeated_reflection", text("Whether the last action was a repeat, and why.")),
        ]),
        "Goal": object_schema("Current and long-term objectives.", vec![
            ("ultimate_goal", reference("LongTermGoalType")),
            ("long_term_goal", reference("LongTermGoalType")),
            ("long_term_goal_subgoals", text("Steps toward the long-term goal.")),
            ("long_term_goal_progress", reference("GoalType")),
            ("long_term_goal_status", reference("ResultType")),
            ("current_goal", reference("GoalType")),
            ("current_goal_reason", text("Why this goal now.")),
            ("current_goal_status", reference("ResultType")),
        ]),
        "NextAction": object_schema("The chosen action.", vec![
            ("next_action", reference("ActionType")),
            ("next_action_reason", text("Why this action.")),
            ("next_action_prerequisites_status", reference("ResultType")),
            ("next_action_prerequisites", text("Prerequisites still missing.")),
            ("final_next_action", reference("ActionType")),
            ("final_next_action_reason", text("Why this is the final choice.")),
            ("final_target_material_to_collect", reference("NavigationDestinationItems")),
            ("final_target_material_to_share", reference("ShareableItems")),
            ("final_target_agent_id", integer("Agent to share with, or -1.")),
        ]),
    });
    let mut root = object_schema("One planning step.", vec![
        ("episode_number", integer("Episode index.")),
        ("timestep", integer("Tick within the episode.")),
        ("past_events", text("Short account of what has happened so far.")),
        ("current_facing_direction", reference("MaterialType")),
        ("current_inventory", json!({
            "type": "array",
            "description": "Items held, only those with a positive count.",
            "items": reference("InventoryItemsCount")
        })),
        ("collaboration", reference("Collaboration")),
        ("reflection", reference("Reflection")),
        ("goal", reference("Goal")),
        ("action", reference("NextAction")),
        ("summary", text("Concise past-tense note on progress, decisions and plans.")),
    ]);
    let obj = root.as_object_mut().expect("object schema");
    obj.insert("$schema".to_string(), json!("https://json-schema.org/draft/2020-12/schema"));
    obj.insert("title".to_string(), json!("ResponseEvent"));
    obj.insert("$defs".to_string(), defs);
    serde_json::to_string_pretty(&root).expect("schema serializes")
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn sample() -> ResponseEvent {
        ResponseEvent {
            episode_number: 1,
            timestep: 3,
            past_events: "collected wood".to_string(),
            current_facing_direction: MaterialType::Tree,
            current_inventory: vec![InventoryItemsCount {
                item: InventoryItem::Wood,
                count: 2,
            }],
            collaboration: Collaboration::none(),
            reflection: Reflection {
                vision: vec![MaterialType::Grass, MaterialType::Tree],
                last_action: ActionType::Do,
                last_action_result: ResultType::Success,
                last_action_result_reflection: "got wood".to_string(),
                last_action_repeated_reflection: "no".to_string(),
            },
            goal: Goal {
                ultimate_goal: LongTermGoalType::CollectDiamond,
                long_term_goal: LongTermGoalType::PlaceTable,
                long_term_goal_subgoals: "collect wood".to_string(),
                long_term_goal_progress: GoalType::CollectWood,
                long_term_goal_status: ResultType::InProgress,
                current_goal: GoalType::CollectWood,
                current_goal_reason: "need wood".to_string(),
                current_goal_status: ResultType::InProgress,
            },
            action: NextAction {
                next_action: ActionType::Navigator,
                next_action_reason: "tree nearby".to_string(),
                next_action_prerequisites_status: ResultType::Success,
                next_action_prerequisites: "none".to_string(),
                final_next_action: ActionType::Navigator,
                final_next_action_reason: "tree nearby".to_string(),
                final_target_material_to_collect: NavigationDestination::Tree,
                final_target_material_to_share: ShareableItem::NotApplicable,
                final_target_agent_id: -1,
            },
            summary: "went for wood".to_string(),
        }
    }

    #[test]
    fn enum_sizes() {
        assert_eq!(ActionType::ALL.len(), 16);
        assert_eq!(ResultType::ALL.len(), 3);
        assert_eq!(MaterialType::ALL.len(), 11);
        assert_eq!(ShareableItem::ALL.len(), 9);
        assert_eq!(NavigationDestination::ALL.len(), 10);
        assert_eq!(GoalType::ALL.len(), 11);
        assert_eq!(LongTermGoalType::ALL.len(), 7);
        assert_eq!(InventoryItem::ALL.len(), 8);
    }

    #[test]
    fn field_order_on_emission() {
        let doc = to_document(&sample());
        let keys: Vec<String> = serde_json::from_str::<serde_json::Map<String, Value>>(&doc)
            .unwrap()
            .keys()
            .cloned()
            .collect();
        assert_eq!(keys, RESPONSE_FIELDS);
        let pos = |k: &str| doc.find(&format!("\"{k}\":")).unwrap();
        assert!(pos("next_action_prerequisites_status") < pos("next_action_prerequisites"));
    }

    #[test]
    fn round_trip_and_alias() {
        let doc = to_document(&sample());
        let parsed = parse_response(&doc).unwrap();
        assert_eq!(parsed.event, sample());
        assert!(parsed.warnings.is_empty());
        assert_eq!(to_document(&parsed.event), doc);
        let legacy = doc.replacen("\"episode_number\"", "\"epsiode_number\"", 1);
        assert_eq!(parse_response(&legacy).unwrap().event, sample());
    }

    #[test]
    fn bad_enum_names_path_and_value() {
        let doc = to_document(&sample()).replace(
            "\"final_next_action\":\"Navigator\"",
            "\"final_next_action\":\"fly\"",
        );
        match parse_response(&doc) {
            Err(SchemaError::Field { path, message }) => {
                assert_eq!(path, "action.final_next_action");
                assert!(message.contains("fly"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_integer_agent_id() {
        let doc = to_document(&sample()).replace("\"final_target_agent_id\":-1", "\"final_target_agent_id\":\"two\"");
        match parse_response(&doc) {
            Err(SchemaError::Field { path, message }) => {
                assert_eq!(path, "action.final_target_agent_id");
                assert!(message.contains("two"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_field_and_unknown_field() {
        let mut v: Value = serde_json::from_str(&to_document(&sample())).unwrap();
        v["goal"].as_object_mut().unwrap().remove("current_goal");
        match parse_response(&v.to_string()) {
            Err(SchemaError::Field { path, message }) => {
                assert_eq!(path, "goal");
                assert!(message.contains("current_goal"));
            }
            other => panic!("{other:?}"),
        }
        let mut v: Value = serde_json::from_str(&to_document(&sample())).unwrap();
        v["reflection"]["mood"] = json!("good");
        let parsed = parse_response(&v.to_string()).unwrap();
        assert_eq!(parsed.warnings, vec!["ignored unknown field `reflection.mood`"]);
    }

    #[test]
    fn rejects_non_positive_counts() {
        let doc = to_document(&sample()).replace("\"count\":2", "\"count\":0");
        assert!(matches!(parse_response(&doc), Err(SchemaError::Field { path, .. }) if path == "current_inventory[0].count"));
    }

    #[test]
    fn extraction() {
        let mut e = sample();
        e.action.final_target_material_to_collect = NavigationDestination::Diamond;
        assert_eq!(
            extract_action(&e, 2).unwrap(),
            ActionKind::Navigate {
                target: Material::Diamond
            }
        );
        e.action.final_target_material_to_collect = NavigationDestination::NotApplicable;
        assert!(matches!(extract_action(&e, 2), Err(SchemaError::InconsistentIntent(_))));

        e.action.final_next_action = ActionType::Share;
        e.action.final_target_material_to_share = ShareableItem::WoodPickaxe;
        e.action.final_target_agent_id = 2;
        assert_eq!(
            extract_action(&e, 2).unwrap(),
            ActionKind::Share {
                target_agent: AgentId(2),
                item: Item::WoodPickaxe
            }
        );
        assert!(extract_action_for(&e, AgentId(2), 2).is_err());
        e.action.final_target_agent_id = -1;
        assert!(matches!(extract_action(&e, 2), Err(SchemaError::InconsistentIntent(_))));

        e.action.final_next_action = ActionType::PlaceTable;
        assert_eq!(extract_action(&e, 2).unwrap(), ActionKind::PlaceTable);
    }

    #[test]
    fn collaboration_warnings() {
        let mut e = sample();
        e.collaboration.target_agent_to_help = 3;
        assert!(validate_collaboration(&e, AgentId(4), 6).is_empty());
        e.collaboration.target_agent_to_help = 9;
        let w = validate_collaboration(&e, AgentId(4), 6);
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("does not exist"));
        e.collaboration.target_agent_to_help = -1;
        assert!(validate_collaboration(&e, AgentId(1), 6).is_empty());
        e.collaboration.target_agent_to_help = 5;
        assert!(validate_collaboration(&e, AgentId(3), 6)[0].contains("hierarchy"));
    }

    #[test]
    fn schema_document_is_stable_and_complete() {
        let a = schema_document();
        assert_eq!(a, schema_document());
        let v: Value = serde_json::from_str(&a).unwrap();
        let actions = v["$defs"]["ActionType"]["enum"].as_array().unwrap();
        assert_eq!(actions.len(), 16);
        assert!(actions.contains(&json!("Navigator")) && actions.contains(&json!("share")));
        assert_eq!(v["$defs"]["ResultType"]["enum"], json!(["success", "failure", "in_progress"]));
        assert_eq!(v["required"].as_array().unwrap().len(), 10);
    }

    #[test]
    fn world_mappings() {
        for m in Material::NAVIGABLE {
            assert_eq!(NavigationDestination::from_material(m).material(), Some(m));
        }
        for item in Item::ALL {
            assert_eq!(ShareableItem::from_item(item).item(), Some(item));
            assert_eq!(InventoryItem::from_item(item).item(), item);
        }
        for a in ActionKind::PRIMITIVES {
            assert_eq!(ActionType::from_action(&a).primitive(), Some(a));
        }
        assert_eq!(MaterialType::from_material(Material::Path), MaterialType::Sand);
        assert_eq!(GoalType::Share.task(), None);
        assert_eq!(GoalType::CollectIron.task(), Some(Task::CollectIron));
    }
}
