//! Shared fixtures and generators for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use crafter_coop::memory::{Experience, PostStage, PreStage};
use crafter_coop::schema::*;
use crafter_coop::techtree::Task;
use crafter_coop::world::*;
use proptest::prelude::*;

/// An all-grass world without cows; agents keep their spawn cells.
pub fn flat_world(n: u32, seed: u64) -> WorldState {
    let mut w = WorldState::generate(EpisodeConfig::default().with_seed(seed).with_agents(n)).unwrap();
    w.grid = Grid::filled(w.grid.width, w.grid.height, Material::Grass);
    w.cows.clear();
    w
}

pub fn all_agents(w: &WorldState, action: ActionKind) -> BTreeMap<AgentId, ActionKind> {
    w.agent_ids().map(|id| (id, action)).collect()
}

pub fn every_facing() -> Vec<Facing> {
    let mut out: Vec<Facing> = Material::ALL.iter().map(|m| Facing::Material(*m)).collect();
    out.push(Facing::Cow);
    out.push(Facing::OutOfBounds);
    out
}

/// The crafting table written out by hand: required facing and items per task.
pub fn literal_row(task: Task) -> (Facing, &'static [(Item, u32)]) {
    use Item::*;
    let m = Facing::Material;
    match task {
        Task::CollectCow => (Facing::Cow, &[]),
        Task::CollectDrink => (m(Material::Water), &[]),
        Task::CollectWood => (m(Material::Tree), &[]),
        Task::CollectStone => (m(Material::Stone), &[(WoodPickaxe, 1)]),
        Task::CollectCoal => (m(Material::Coal), &[(WoodPickaxe, 1)]),
        Task::CollectIron => (m(Material::Iron), &[(StonePickaxe, 1)]),
        Task::CollectDiamond => (m(Material::Diamond), &[(IronPickaxe, 1)]),
        Task::PlaceTable => (m(Material::Grass), &[(Wood, 2)]),
        Task::PlaceFurnace => (m(Material::Grass), &[(Stone, 4)]),
        Task::MakeWoodPickaxe => (m(Material::Table), &[(Wood, 1)]),
        Task::MakeStonePickaxe => (m(Material::Table), &[(Wood, 1), (Stone, 1)]),
        Task::MakeIronPickaxe => (m(Material::Furnace), &[(Wood, 1), (Coal, 1), (Iron, 1)]),
    }
}

fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        3 => "[a-z ]{0,24}",
        1 => "\\PC{0,12}",
        1 => Just("quote \" backslash \\ newline \n tab \t".to_string()),
    ]
}

fn pick<T: Copy + std::fmt::Debug + 'static>(all: &'static [T]) -> impl Strategy<Value = T> {
    prop::sample::select(all)
}

fn agent_ref() -> impl Strategy<Value = i64> {
    -1i64..=6
}

fn collaboration() -> impl Strategy<Value = Collaboration> {
    (agent_ref(), pick(ShareableItem::ALL), text(), pick(ResultType::ALL), agent_ref(), text(), text()).prop_map(
        |(t, need, method, now, by, by_method, change)| Collaboration {
            target_agent_to_help: t,
            target_agent_need: need,
            help_method: method,
            can_help_now: now,
            being_helped_by_agent: by,
            help_method_by_agent: by_method,
            change_in_plan: change,
        },
    )
}

fn reflection() -> impl Strategy<Value = Reflection> {
    (
        prop::collection::vec(pick(MaterialType::ALL), 0..6),
        pick(ActionType::ALL),
        pick(ResultType::ALL),
        text(),
        text(),
    )
        .prop_map(|(vision, last, result, r1, r2)| Reflection {
            vision,
            last_action: last,
            last_action_result: result,
            last_action_result_reflection: r1,
            last_action_repeated_reflection: r2,
        })
}

fn goal() -> impl Strategy<Value = Goal> {
    (
        pick(LongTermGoalType::ALL),
        pick(LongTermGoalType::ALL),
        text(),
        pick(GoalType::ALL),
        pick(ResultType::ALL),
        pick(GoalType::ALL),
        text(),
        pick(ResultType::ALL),
    )
        .prop_map(|(u, l, subgoals, progress, lstatus, current, reason, cstatus)| Goal {
            ultimate_goal: u,
            long_term_goal: l,
            long_term_goal_subgoals: subgoals,
            long_term_goal_progress: progress,
            long_term_goal_status: lstatus,
            current_goal: current,
            current_goal_reason: reason,
            current_goal_status: cstatus,
        })
}

fn next_action() -> impl Strategy<Value = NextAction> {
    (
        pick(ActionType::ALL),
        text(),
        pick(ResultType::ALL),
        text(),
        pick(ActionType::ALL),
        text(),
        pick(NavigationDestination::ALL),
        pick(ShareableItem::ALL),
        agent_ref(),
    )
        .prop_map(|(n, nr, ps, p, f, fr, dest, share, agent)| NextAction {
            next_action: n,
            next_action_reason: nr,
            next_action_prerequisites_status: ps,
            next_action_prerequisites: p,
            final_next_action: f,
            final_next_action_reason: fr,
            final_target_material_to_collect: dest,
            final_target_material_to_share: share,
            final_target_agent_id: agent,
        })
}

/// Any response that the parser must accept.
pub fn response_event() -> impl Strategy<Value = ResponseEvent> {
    let inventory = prop::collection::vec(
        (pick(InventoryItem::ALL), 1i64..1000).prop_map(|(item, count)| InventoryItemsCount { item, count }),
        0..5,
    );
    (
        (any::<i64>(), 0i64..100_000, text(), pick(MaterialType::ALL), inventory),
        collaboration(),
        reflection(),
        goal(),
        next_action(),
        text(),
    )
        .prop_map(|((episode, timestep, past, facing, inv), collab, refl, goal, action, summary)| ResponseEvent {
            episode_number: episode,
            timestep,
            past_events: past,
            current_facing_direction: facing,
            current_inventory: inv,
            collaboration: collab,
            reflection: refl,
            goal,
            action,
            summary,
        })
}

/// One consolidation input: the goal pair, an optional summary and a tick gap.
#[derive(Debug, Clone)]
pub struct Step {
    pub goal: GoalType,
    pub long_term: LongTermGoalType,
    pub summary: String,
    pub gap: u64,
    pub unlocked: Vec<Task>,
    /// Feed a malformed copy first; it must be rejected without changes.
    pub bad_first: Option<u8>,
}

pub fn steps(max: usize) -> impl Strategy<Value = Vec<Step>> {
    let step = (
        prop::sample::select(&GoalType::ALL[..4]),
        prop::sample::select(&LongTermGoalType::ALL[..3]),
        prop_oneof!["", "[a-z]{1,8}"],
        1u64..4,
        prop::collection::vec(prop::sample::select(&Task::MILESTONES[..]), 0..2),
        prop::option::weighted(0.1, 0u8..3),
    )
        .prop_map(|(goal, long_term, summary, gap, unlocked, bad_first)| Step {
            goal,
            long_term,
            summary,
            gap,
            unlocked,
            bad_first,
        });
    prop::collection::vec(step, 1..max)
}

/// Turn a step into an experience for agent 1 at `tick`.
pub fn experience(base: &ResponseEvent, pre: &PreStage, step: &Step, tick: u64) -> Experience {
    let mut response = base.clone();
    response.goal.current_goal = step.goal;
    response.goal.long_term_goal = step.long_term;
    response.summary = step.summary.clone();
    Experience {
        agent: AgentId(1),
        tick,
        pre_stage: pre.clone(),
        post_stage: Some(PostStage {
            response,
            outcome: ActionOutcome::new(AgentId(1), ActionKind::Noop, ActionResult::Success, OutcomeReason::Ok),
            unlocked: step.unlocked.clone(),
        }),
    }
}

pub fn base_pre_stage() -> PreStage {
    let mut w = WorldState::generate(EpisodeConfig::default()).unwrap();
    PreStage::from_observation(&w.observe(AgentId(1), Vec::new()).unwrap())
}

/// Draw `cases` values from a strategy with a fixed seed.
pub fn samples<S: Strategy>(strategy: S, cases: usize, seed: u8) -> Vec<S::Value> {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
    let rng = TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]);
    let mut runner = TestRunner::new_with_rng(Config::default(), rng);
    (0..cases)
        .map(|_| strategy.new_tree(&mut runner).expect("strategy draws").current())
        .collect()
}

/// Consolidate `steps` into a fresh graph and report every invariant
/// violation found along the way, checked independently of the graph's own
/// `check_invariants`.
pub fn graph_violations(steps: &[Step], base: &ResponseEvent, pre: &PreStage) -> Vec<String> {
    use crafter_coop::memory::KnowledgeGraph;
    let mut g = KnowledgeGraph::new();
    let mut out = Vec::new();
    let mut tick = 0u64;
    let mut accepted = 0usize;
    let mut goal_changes = 0usize;
    let mut last_goal: Option<GoalType> = None;
    let mut first_unlock: BTreeMap<Task, u64> = BTreeMap::new();
    for (i, step) in steps.iter().enumerate() {
        tick += step.gap;
        let good = experience(base, pre, step, tick);
        if let Some(kind) = step.bad_first {
            let mut bad = good.clone();
            match kind {
                0 => bad.post_stage = None,
                1 if accepted > 0 => bad.tick = tick - step.gap,
                _ if accepted > 0 => bad.agent = AgentId(2),
                _ => bad.post_stage = None,
            }
            let before = g.clone();
            if g.consolidate(bad).is_ok() {
                out.push(format!("step {i}: malformed experience accepted"));
            }
            if g != before {
                out.push(format!("step {i}: rejected experience changed the graph"));
            }
        }
        if let Err(e) = g.consolidate(good) {
            out.push(format!("step {i}: valid experience rejected: {e}"));
            continue;
        }
        accepted += 1;
        if last_goal != Some(step.goal) {
            goal_changes += 1;
        }
        last_goal = Some(step.goal);
        for t in &step.unlocked {
            first_unlock.entry(*t).or_insert(tick);
        }

        if let Err(e) = g.check_invariants() {
            out.push(format!("step {i}: {e}"));
        }
        if g.experiences.len() != accepted || g.steps.len() != accepted {
            out.push(format!("step {i}: {} experiences, {} steps, {accepted} accepted", g.experiences.len(), g.steps.len()));
        }
        if g.goals.len() != goal_changes {
            out.push(format!("step {i}: {} goal nodes for {goal_changes} goal changes", g.goals.len()));
        }
        if g.chain().len() != g.goals.len() {
            out.push(format!("step {i}: goal chain covers {} of {} goals", g.chain().len(), g.goals.len()));
        }
        for s in &g.steps {
            let owners = g.goals.iter().filter(|goal| goal.steps.contains(&s.id)).count();
            if owners != 1 || !g.goals[s.goal].steps.contains(&s.id) {
                out.push(format!("step {i}: experience node {} has {owners} parents", s.id));
            }
        }
        for goal in &g.goals {
            let owners = g.ltgs.iter().filter(|l| l.goals.contains(&goal.id)).count();
            if owners != 1 || g.ltgs[goal.ltg].goals.iter().all(|x| *x != goal.id) {
                out.push(format!("step {i}: goal {} belongs to {owners} long-term goals", goal.id));
            }
            if goal.summary.is_empty() {
                out.push(format!("step {i}: goal {} has no summary", goal.id));
            }
        }
        let mut kinds: Vec<_> = g.ltgs.iter().map(|l| l.long_term_goal).collect();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != g.ltgs.len() {
            out.push(format!("step {i}: duplicate long-term goal nodes"));
        }
        if g.current().map(|c| c.goal) != Some(step.goal) {
            out.push(format!("step {i}: current goal is not {}", step.goal));
        }
        if g.achievements != first_unlock {
            out.push(format!("step {i}: achievements differ from first unlocks"));
        }
    }
    out
}

/// A mineral contested by `n` agents standing on the four neighbours of one
/// cell (several may share a neighbour), each holding every pickaxe.
#[derive(Debug, Clone)]
pub struct Contest {
    pub n: u32,
    pub mineral: Material,
    /// Neighbour index (0..4) per agent.
    pub sides: Vec<usize>,
    pub seed: u64,
}

pub fn contest() -> impl Strategy<Value = Contest> {
    (2u32..=6, prop::sample::select(&[Material::Stone, Material::Coal, Material::Iron, Material::Diamond][..]), any::<u64>())
        .prop_flat_map(|(n, mineral, seed)| {
            prop::collection::vec(0usize..4, n as usize).prop_map(move |sides| Contest {
                n,
                mineral,
                sides,
                seed: seed % 1000,
            })
        })
}

/// Run one contested `do`; returns the ids whose action succeeded.
pub fn run_contest(c: &Contest) -> Vec<AgentId> {
    let mut w = flat_world(c.n, c.seed);
    let target = Position::new(30, 30);
    w.grid.set(target, c.mineral);
    for (a, side) in w.agents.iter_mut().zip(&c.sides) {
        let dir = Direction::ALL[*side];
        a.position = target.step(dir);
        a.facing = Direction::ALL
            .into_iter()
            .find(|d| a.position.step(*d) == target)
            .unwrap();
        for tool in [Item::WoodPickaxe, Item::StonePickaxe, Item::IronPickaxe] {
            a.inventory.add(tool, 1);
        }
    }
    let report = w.step(&all_agents(&w, ActionKind::Do)).unwrap();
    report
        .outcomes
        .iter()
        .filter(|o| o.result == ActionResult::Success)
        .map(|o| o.agent)
        .collect()
}

/// Any action an agent of an `n`-agent world may submit.
pub fn action(n: u32) -> impl Strategy<Value = ActionKind> {
    prop_oneof![
        6 => prop::sample::select(&ActionKind::PRIMITIVES[..]),
        1 => prop::sample::select(&Material::NAVIGABLE[..]).prop_map(|target| ActionKind::Navigate { target }),
        1 => (1..=n, prop::sample::select(&Item::ALL[..]))
            .prop_map(|(t, item)| ActionKind::Share { target_agent: AgentId(t), item }),
    ]
}
