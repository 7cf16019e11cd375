//! Deterministic rule planners.
//!
//! The graph baselines follow the crafting chain using the tech tree to
//! check every prerequisite before acting. The basic surrogate only sees its
//! observation and the last few actions, guesses ingredient counts and learns
//! from failures still visible in its log.

use crate::comms::Message;
use crate::schema::{
    ActionType, Collaboration, Goal, GoalType, LongTermGoalType, MaterialType, NextAction, Reflection,
    ResponseEvent, ResultType, ShareableItem,
};
use crate::techtree::{Requirement, Task};
use crate::world::{
    approach, explore_step, navigate_step, ActionKind, ActionResult, AgentId, Facing, Inventory, Item, Material,
    NavGoal, OutcomeReason, Plan, Position, WorldState,
};

use super::{
    destination, inventory_entries, last_action_fields, vision, BaselineKind, Decision, DecisionRequest,
    PlannerBackend, PolicyError,
};

/// A vital below this triggers the survival rule.
pub const SURVIVAL_THRESHOLD: u8 = 3;

/// Farthest (L1) a known station may be before a new one is placed instead.
const STATION_RANGE: u32 = 12;

/// Extra wood gathered up front for a second table.
const SPARE_WOOD: u32 = 2;

/// The rule planner. Stateless; all memory arrives with the request.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedBackend;

impl PlannerBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn decide(&self, request: &DecisionRequest<'_>) -> Result<Decision, PolicyError> {
        let choice = match request.baseline {
            BaselineKind::Basic => basic_choice(request),
            _ => oracle_choice(request),
        };
        Ok(Decision {
            event: render_event(request, choice),
            retries: 0,
        })
    }
}

/// What the planner settled on, before it is written out as a response.
#[derive(Debug, Clone)]
struct Choice {
    goal: GoalType,
    long_term: LongTermGoalType,
    subgoals: String,
    action: ActionKind,
    reason: String,
    collaboration: Collaboration,
}

struct Ctx<'a> {
    req: &'a DecisionRequest<'a>,
    id: AgentId,
    inv: &'a Inventory,
    position: Position,
}

impl<'a> Ctx<'a> {
    fn new(req: &'a DecisionRequest<'a>) -> Self {
        Self {
            req,
            id: req.observation.agent,
            inv: &req.observation.inventory,
            position: req.observation.position,
        }
    }

    fn world(&self) -> &'a WorldState {
        self.req.world
    }

    fn has(&self, item: Item) -> bool {
        self.inv.has(item)
    }

    fn count(&self, item: Item) -> u32 {
        self.inv.count(item)
    }

    fn facing(&self) -> Facing {
        self.req.observation.facing
    }

    fn facing_material(&self, m: Material) -> bool {
        self.facing() == Facing::Material(m)
    }

    /// Nearest discovered cell of `m` by L1 distance.
    fn nearest_known(&self, m: Material) -> Option<(Position, u32)> {
        let world = self.world();
        let agent = world.agent(self.id)?;
        world
            .grid
            .positions()
            .filter(|p| agent.discovered.contains(*p) && world.grid.get(*p) == Some(m))
            .map(|p| (p, p.manhattan(self.position)))
            .min_by_key(|(p, d)| (*d, p.y, p.x))
    }

    fn station_near(&self, m: Material) -> bool {
        self.nearest_known(m).map(|(_, d)| d <= STATION_RANGE).unwrap_or(false)
    }

    fn achieved(&self, task: Task) -> bool {
        self.req.graph.achievements.contains_key(&task)
    }

    /// A navigate action when the navigator can make progress, otherwise an
    /// exploration step or a noop.
    fn go(&self, target: Material) -> ActionKind {
        match navigate_step(self.world(), self.id, target) {
            Ok(_) => ActionKind::Navigate { target },
            Err(_) => self.explore(),
        }
    }

    fn explore(&self) -> ActionKind {
        explore_step(self.world(), self.id).ok().flatten().unwrap_or(ActionKind::Noop)
    }
}

fn choice(goal: GoalType, long_term: LongTermGoalType, action: ActionKind, reason: impl Into<String>) -> Choice {
    Choice {
        goal,
        long_term,
        subgoals: String::new(),
        action,
        reason: reason.into(),
        collaboration: Collaboration::none(),
    }
}

/// Survival rule shared by both planners: the lowest vital under the
/// threshold wins; ties go drink, food, energy.
fn survival(ctx: &Ctx<'_>, goal: GoalType, long_term: LongTermGoalType) -> Option<Choice> {
    let obs = ctx.req.observation;
    if obs.sleeping {
        return Some(choice(goal, long_term, ActionKind::Sleep, "still asleep; keep resting until energy is full"));
    }
    let v = obs.vitals;
    let mut low: Vec<(u8, u8)> = [(v.drink, 0), (v.food, 1), (v.energy, 2)]
        .into_iter()
        .filter(|(x, _)| *x < SURVIVAL_THRESHOLD)
        .collect();
    low.sort();
    let (_, which) = *low.first()?;
    Some(match which {
        0 => choice(goal, long_term, ctx.go(Material::Water), "drink is low; heading to water"),
        1 => choice(goal, long_term, eat(ctx), "food is low; hunting a cow"),
        _ => choice(goal, long_term, ActionKind::Sleep, "energy is low; sleeping"),
    })
}

fn eat(ctx: &Ctx<'_>) -> ActionKind {
    if ctx.facing() == Facing::Cow {
        return ActionKind::Do;
    }
    let world = ctx.world();
    let Some(agent) = world.agent(ctx.id) else {
        return ActionKind::Noop;
    };
    let cows: Vec<Position> = world.cows.iter().copied().filter(|c| agent.discovered.contains(*c)).collect();
    if !cows.is_empty() {
        match approach(world, ctx.id, &NavGoal::FaceAny(cows)) {
            Ok(Plan::Arrived) => return ActionKind::Do,
            Ok(Plan::Step(a)) => return a,
            _ => {}
        }
    }
    ctx.explore()
}

/// Items the agent still needs for the rest of its own chain.
fn reserve(ctx: &Ctx<'_>, item: Item) -> u32 {
    let ip = ctx.has(Item::IronPickaxe);
    let sp = ctx.has(Item::StonePickaxe) || ip;
    let wp = ctx.has(Item::WoodPickaxe) || sp;
    let table = if sp || ctx.station_near(Material::Table) { 0 } else { 2 };
    let furnace = if ip || ctx.station_near(Material::Furnace) { 0 } else { 4 };
    let missing = |have: bool| u32::from(!have);
    match item {
        Item::Wood => missing(wp) + missing(sp) + missing(ip) + table,
        Item::Stone => missing(sp) + furnace,
        Item::Coal | Item::Iron => missing(ip),
        Item::WoodPickaxe => 1,
        Item::StonePickaxe => u32::from(!ip),
        Item::IronPickaxe | Item::Diamond => u32::MAX,
    }
}

fn latest_from(inbox: &[Message], sender: AgentId) -> Option<&Message> {
    inbox.iter().filter(|m| m.sender == sender).max_by_key(|m| m.tick)
}

fn team_has_stone_pickaxe(ctx: &Ctx<'_>) -> bool {
    ctx.has(Item::StonePickaxe)
        || ctx.has(Item::IronPickaxe)
        || ctx.req.inbox().iter().any(|m| m.resources.has(Item::StonePickaxe))
}

fn seeking_diamond(ctx: &Ctx<'_>) -> bool {
    ctx.req
        .graph
        .ltgs
        .iter()
        .any(|l| l.long_term_goal == LongTermGoalType::CollectDiamond)
        || team_has_stone_pickaxe(ctx)
}

/// Collaboration block and an optional share action for a helper.
fn help(ctx: &Ctx<'_>, seeker_active: bool) -> (Collaboration, Option<(AgentId, Item)>) {
    let mut collab = Collaboration::none();
    if !ctx.req.baseline.communicates() {
        return (collab, None);
    }
    let inbox = ctx.req.inbox();
    // Who says they are helping us.
    if let Some(m) = inbox
        .iter()
        .find(|m| m.collaboration.target_agent_to_help == i64::from(ctx.id.0))
    {
        collab.being_helped_by_agent = i64::from(m.sender.0);
        collab.help_method_by_agent = m.collaboration.help_method.clone();
    }
    if seeker_active {
        collab.change_in_plan = "stopped assisting to go for the diamond".to_string();
        return (collab, None);
    }
    let range = ctx.world().config.share_range;
    for target in &ctx.req.role.targets {
        let Some(msg) = latest_from(inbox, *target) else {
            continue;
        };
        collab.target_agent_to_help = i64::from(target.0);
        let Some(request) = msg.assistance_request else {
            collab.help_method = "watch for requests".to_string();
            continue;
        };
        collab.target_agent_need = ShareableItem::from_item(request.item);
        collab.help_method = format!("share {}", request.item);
        let spare = ctx.count(request.item) > reserve(ctx, request.item);
        let near = msg.status.position.manhattan(ctx.position) <= range;
        if spare && near {
            collab.can_help_now = ResultType::Success;
            collab.change_in_plan = format!("pause own goal to hand {} to agent {target}", request.item);
            return (collab, Some((*target, request.item)));
        }
        collab.can_help_now = ResultType::Failure;
        collab.change_in_plan = if spare {
            format!("agent {target} is out of sharing range")
        } else {
            format!("no spare {}", request.item)
        };
        return (collab, None);
    }
    (collab, None)
}

/// Pick the crafting-chain step for an agent that knows every recipe.
fn chain_step(ctx: &Ctx<'_>) -> Choice {
    let tree = &ctx.world().techtree;
    let inv = ctx.inv;
    let first = |task: Task, craft: GoalType| {
        if ctx.achieved(task) {
            craft
        } else {
            GoalType::from_task(task).unwrap_or(craft)
        }
    };
    let gather = |m: Material, item: Item, craft: GoalType, ltg: LongTermGoalType| {
        let task = tree.producer_of(item).unwrap_or(Task::CollectWood);
        let action = if ctx.facing_material(m) && tree.unmet_requirements(inv, ctx.facing(), task).is_empty() {
            ActionKind::Do
        } else {
            ctx.go(m)
        };
        choice(first(task, craft), ltg, action, format!("need {item} for {craft}"))
    };
    let place = |station: ActionKind, task: Task, ltg: LongTermGoalType| {
        let goal = GoalType::from_task(task).expect("placement tasks are goals");
        if tree.unmet_requirements(inv, ctx.facing(), task).is_empty() {
            choice(goal, ltg, station, format!("placing for {ltg}"))
        } else {
            choice(goal, ltg, ctx.go(Material::Grass), format!("finding grass to place for {ltg}"))
        }
    };
    let craft = |station: Material, make: ActionKind, task: Task| {
        let goal = GoalType::from_task(task).expect("crafting tasks are goals");
        let ltg = LongTermGoalType::ALL
            .iter()
            .copied()
            .find(|l| l.task() == Some(task))
            .unwrap_or(LongTermGoalType::CollectDiamond);
        if tree.unmet_requirements(inv, ctx.facing(), task).is_empty() {
            choice(goal, ltg, make, format!("crafting at the {station}"))
        } else {
            choice(goal, ltg, ctx.go(station), format!("walking to the {station}"))
        }
    };

    use LongTermGoalType as L;
    if ctx.has(Item::IronPickaxe) {
        return gather(Material::Diamond, Item::Diamond, GoalType::CollectDiamond, L::CollectDiamond);
    }
    if ctx.has(Item::StonePickaxe) {
        let g = GoalType::MakeIronPickaxe;
        if ctx.count(Item::Wood) < 1 {
            return gather(Material::Tree, Item::Wood, g, L::MakeIronPickaxe);
        }
        if ctx.count(Item::Coal) < 1 {
            return gather(Material::Coal, Item::Coal, g, L::MakeIronPickaxe);
        }
        if ctx.count(Item::Iron) < 1 {
            return gather(Material::Iron, Item::Iron, g, L::MakeIronPickaxe);
        }
        if !ctx.station_near(Material::Furnace) {
            if ctx.count(Item::Stone) < 4 {
                return gather(Material::Stone, Item::Stone, GoalType::PlaceFurnace, L::PlaceFurnace);
            }
            return place(ActionKind::PlaceFurnace, Task::PlaceFurnace, L::MakeIronPickaxe);
        }
        return craft(Material::Furnace, ActionKind::MakeIronPickaxe, Task::MakeIronPickaxe);
    }
    if ctx.has(Item::WoodPickaxe) {
        let g = GoalType::MakeStonePickaxe;
        if ctx.count(Item::Wood) < 1 {
            return gather(Material::Tree, Item::Wood, g, L::MakeStonePickaxe);
        }
        if ctx.count(Item::Stone) < 5 {
            return gather(Material::Stone, Item::Stone, g, L::MakeStonePickaxe);
        }
        if !ctx.station_near(Material::Table) && ctx.count(Item::Wood) >= 3 {
            return place(ActionKind::PlaceTable, Task::PlaceTable, L::MakeStonePickaxe);
        }
        return craft(Material::Table, ActionKind::MakeStonePickaxe, Task::MakeStonePickaxe);
    }
    if !ctx.station_near(Material::Table) {
        if ctx.count(Item::Wood) < 2 {
            return gather(Material::Tree, Item::Wood, GoalType::PlaceTable, L::PlaceTable);
        }
        return place(ActionKind::PlaceTable, Task::PlaceTable, L::PlaceTable);
    }
    if ctx.count(Item::Wood) < 3 + SPARE_WOOD {
        return gather(Material::Tree, Item::Wood, GoalType::MakeWoodPickaxe, L::MakeWoodPickaxe);
    }
    craft(Material::Table, ActionKind::MakeWoodPickaxe, Task::MakeWoodPickaxe)
}

fn oracle_choice(req: &DecisionRequest<'_>) -> Choice {
    let ctx = Ctx::new(req);
    let seeker_active = req.baseline.communicates() && req.role.diamond_seeker && seeking_diamond(&ctx);
    let mut step = chain_step(&ctx);
    if seeker_active {
        step.long_term = LongTermGoalType::CollectDiamond;
    }
    let (collaboration, share) = help(&ctx, seeker_active);
    let mut out = if let Some(c) = survival(&ctx, step.goal, step.long_term) {
        c
    } else if let Some((target, item)) = share {
        choice(
            GoalType::Share,
            LongTermGoalType::HelpAgent,
            ActionKind::Share {
                target_agent: target,
                item,
            },
            format!("agent {target} asked for {item} and is in range"),
        )
    } else {
        step
    };
    out.subgoals = subgoal_text(&ctx, out.long_term);
    out.collaboration = collaboration;
    out
}

fn subgoal_text(ctx: &Ctx<'_>, ltg: LongTermGoalType) -> String {
    let Some(task) = ltg.task() else {
        return "support teammates with spare items".to_string();
    };
    let missing = ctx.world().techtree.missing_items(ctx.inv, task);
    if missing.is_empty() {
        return format!("all items for {task} in hand");
    }
    let parts: Vec<String> = missing.iter().map(|(i, n)| format!("{i} x{n}")).collect();
    format!("gather {}", parts.join(", "))
}

/// Failed attempts at `action` still visible in the log.
fn failures(req: &DecisionRequest<'_>, action: ActionKind) -> u32 {
    req.log
        .iter()
        .filter(|e| e.action == action && e.result == ActionResult::Failure && e.reason == OutcomeReason::PrereqUnmet)
        .count() as u32
}

fn logged_success(req: &DecisionRequest<'_>, action: ActionKind) -> bool {
    req.log.iter().any(|e| e.action == action && e.result == ActionResult::Success)
}

fn visible(req: &DecisionRequest<'_>, m: Material) -> bool {
    req.observation.window.known_cells().any(|(_, c)| c == m)
}

/// A valuable mineral in view that the surrogate goes for without checking
/// its tools, unless a failed attempt on it is still in the log.
fn tempting(req: &DecisionRequest<'_>, ctx: &Ctx<'_>) -> Option<Material> {
    let wanted = [
        (Material::Diamond, !ctx.has(Item::Diamond)),
        (Material::Iron, ctx.count(Item::Iron) == 0 && !ctx.has(Item::IronPickaxe)),
    ];
    wanted.into_iter().find_map(|(m, want)| {
        let failed = req.log.iter().any(|e| {
            e.action == ActionKind::Navigate { target: m } && e.result == ActionResult::Failure
        });
        (want && !failed && visible(req, m)).then_some(m)
    })
}

/// The prerequisite-blind surrogate. It knows which station and which
/// ingredients a step involves but not how many, assumes one of each, and
/// raises its guess by one per failure still in its log. A station counts as
/// known only while it is in view or its placement is still logged. Diamond
/// and iron in view pull it off course whatever it holds.
fn basic_choice(req: &DecisionRequest<'_>) -> Choice {
    use LongTermGoalType as L;
    let ctx = Ctx::new(req);
    let guess = |action: ActionKind| 1 + failures(req, action);
    let station_known = |m: Material, placed: ActionKind| visible(req, m) || logged_success(req, placed);
    let collect = |m: Material, goal: GoalType, ltg: L| {
        let action = if ctx.facing_material(m) { ActionKind::Do } else { ctx.go(m) };
        choice(goal, ltg, action, format!("getting {m}"))
    };
    let place = |station: ActionKind, goal: GoalType, ltg: L| {
        let action = if ctx.facing_material(Material::Grass) { station } else { ctx.go(Material::Grass) };
        choice(goal, ltg, action, "placing a station")
    };
    let use_station = |m: Material, make: ActionKind, goal: GoalType, ltg: L| {
        let action = if ctx.facing_material(m) { make } else { ctx.go(m) };
        choice(goal, ltg, action, format!("crafting at the {m}"))
    };

    let (goal, ltg, ingredients, station, placer, make): (GoalType, L, &[(Item, Material)], Material, ActionKind, ActionKind) =
        if ctx.has(Item::IronPickaxe) {
            let c = collect(Material::Diamond, GoalType::CollectDiamond, L::CollectDiamond);
            return survival(&ctx, c.goal, c.long_term).unwrap_or(c);
        } else if ctx.has(Item::StonePickaxe) {
            (
                GoalType::MakeIronPickaxe,
                L::MakeIronPickaxe,
                &[(Item::Wood, Material::Tree), (Item::Coal, Material::Coal), (Item::Iron, Material::Iron)],
                Material::Furnace,
                ActionKind::PlaceFurnace,
                ActionKind::MakeIronPickaxe,
            )
        } else if ctx.has(Item::WoodPickaxe) {
            (
                GoalType::MakeStonePickaxe,
                L::MakeStonePickaxe,
                &[(Item::Wood, Material::Tree), (Item::Stone, Material::Stone)],
                Material::Table,
                ActionKind::PlaceTable,
                ActionKind::MakeStonePickaxe,
            )
        } else {
            (
                GoalType::MakeWoodPickaxe,
                L::MakeWoodPickaxe,
                &[(Item::Wood, Material::Tree)],
                Material::Table,
                ActionKind::PlaceTable,
                ActionKind::MakeWoodPickaxe,
            )
        };
    let need = guess(make);
    let step = if let Some(m) = tempting(req, &ctx) {
        collect(m, goal, ltg)
    } else if let Some((_, m)) = ingredients.iter().find(|(item, _)| ctx.count(*item) < need) {
        collect(*m, goal, ltg)
    } else if !station_known(station, placer) {
        let material = if station == Material::Table { Material::Tree } else { Material::Stone };
        let item = if station == Material::Table { Item::Wood } else { Item::Stone };
        let place_goal = if station == Material::Table { GoalType::PlaceTable } else { GoalType::PlaceFurnace };
        if ctx.count(item) < need + guess(placer) {
            collect(material, place_goal, ltg)
        } else {
            place(placer, place_goal, ltg)
        }
    } else {
        use_station(station, make, goal, ltg)
    };
    survival(&ctx, step.goal, step.long_term).unwrap_or(step)
}

/// Write a choice out as a full response.
fn render_event(req: &DecisionRequest<'_>, choice: Choice) -> ResponseEvent {
    let obs = req.observation;
    let world = req.world;
    let (last_action, last_result) = last_action_fields(req.last_outcome);
    let repeated = req
        .log
        .iter()
        .rev()
        .take_while(|e| Some(e.action) == req.log.last().map(|l| l.action))
        .count();
    let last_reflection = match req.last_outcome {
        None => "first decision of the episode".to_string(),
        Some(o) => {
            let reason = serde_json::to_value(o.reason)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            format!("{} ended with {reason}", o.action)
        }
    };
    let (action_type, target, share_item, share_agent) = match choice.action {
        ActionKind::Navigate { target } => (ActionType::Navigator, destination(target), ShareableItem::NotApplicable, -1),
        ActionKind::Share { target_agent, item } => (
            ActionType::Share,
            crate::schema::NavigationDestination::NotApplicable,
            ShareableItem::from_item(item),
            i64::from(target_agent.0),
        ),
        other => (
            ActionType::from_action(&other),
            crate::schema::NavigationDestination::NotApplicable,
            ShareableItem::NotApplicable,
            -1,
        ),
    };
    let agent = world.agent(obs.agent);
    let prereq = match (choice.action, agent) {
        (ActionKind::Navigate { .. } | ActionKind::Share { .. }, _) | (_, None) => Vec::new(),
        (a, Some(agent)) => match world.check_prerequisites(agent, obs.facing, a) {
            crate::world::PrereqResult::Satisfied => Vec::new(),
            crate::world::PrereqResult::Unmet(list) => list,
        },
    };
    let prereq_ok = prereq.is_empty() || action_type.primitive().map(is_movement).unwrap_or(true);
    let prereq_text = if prereq.is_empty() {
        "none".to_string()
    } else {
        prereq.iter().map(Requirement::to_string).collect::<Vec<_>>().join(", ")
    };
    let past_events = req
        .graph
        .experiences
        .last()
        .map(|e| e.digest())
        .or_else(|| req.log.last().map(|e| e.to_string()))
        .unwrap_or_else(|| "none".to_string());
    ResponseEvent {
        episode_number: req.episode,
        timestep: obs.tick as i64,
        past_events,
        current_facing_direction: MaterialType::from_facing(obs.facing),
        current_inventory: inventory_entries(obs),
        collaboration: choice.collaboration,
        reflection: Reflection {
            vision: vision(obs),
            last_action,
            last_action_result: last_result,
            last_action_result_reflection: last_reflection,
            last_action_repeated_reflection: if repeated > 1 {
                format!("{} repeated {repeated} times", last_action)
            } else {
                "not repeated".to_string()
            },
        },
        goal: Goal {
            ultimate_goal: LongTermGoalType::CollectDiamond,
            long_term_goal: choice.long_term,
            long_term_goal_subgoals: if choice.subgoals.is_empty() {
                "follow the crafting chain".to_string()
            } else {
                choice.subgoals
            },
            long_term_goal_progress: choice.goal,
            long_term_goal_status: ResultType::InProgress,
            current_goal: choice.goal,
            current_goal_reason: choice.reason.clone(),
            current_goal_status: ResultType::InProgress,
        },
        action: NextAction {
            next_action: action_type,
            next_action_reason: choice.reason.clone(),
            next_action_prerequisites_status: if prereq_ok { ResultType::Success } else { ResultType::Failure },
            next_action_prerequisites: prereq_text,
            final_next_action: action_type,
            final_next_action_reason: choice.reason,
            final_target_material_to_collect: target,
            final_target_material_to_share: share_item,
            final_target_agent_id: share_agent,
        },
        summary: String::new(),
    }
}

fn is_movement(a: ActionKind) -> bool {
    a.direction().is_some() || matches!(a, ActionKind::Noop | ActionKind::Sleep)
}
