//! Shortest-path navigation over what an agent has discovered.
//!
//! The search runs over `(position, facing)` states so that turning toward a
//! target costs a tick, exactly as it does in the simulator. With a wood
//! pickaxe the planner may tunnel through stone (mine, then step in).
//! Ties are broken by insertion order and the fixed direction order, which
//! keeps every plan deterministic.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{ActionKind, AgentId, AgentState, Direction, Item, Material, Position, WorldError, WorldState};

/// How cells the agent has never seen are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NavMode {
    /// Unseen cells are impassable.
    Known,
    /// Unseen cells are assumed open.
    Optimistic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NavGoal {
    /// Stand facing a discovered cell of this material.
    Face(Material),
    /// Stand facing any of these cells.
    FaceAny(Vec<Position>),
    /// Stand within `radius` (L1) of `center`.
    Within { center: Position, radius: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plan {
    Arrived,
    Step(ActionKind),
    Unreachable,
}

/// Spacing between exploration rings and between waypoints on a ring.
const RING_SPACING: i32 = 6;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Cell {
    Open,
    Blocked,
    Stone,
    Lava,
    Unknown,
}

struct Search<'a> {
    state: &'a WorldState,
    agent: &'a AgentState,
    mode: NavMode,
    can_mine: bool,
}

impl Search<'_> {
    fn known(&self, q: Position) -> bool {
        self.agent.discovered.contains(q) || q.manhattan(self.agent.position) <= 1
    }

    fn cell(&self, q: Position) -> Cell {
        let Some(m) = self.state.grid.get(q) else {
            return Cell::Blocked;
        };
        if !self.known(q) {
            return match self.mode {
                NavMode::Known => Cell::Unknown,
                NavMode::Optimistic => Cell::Open,
            };
        }
        if self.state.cows.contains(&q) {
            Cell::Blocked
        } else if m == Material::Lava {
            Cell::Lava
        } else if m.is_walkable() {
            Cell::Open
        } else if m == Material::Stone {
            Cell::Stone
        } else {
            Cell::Blocked
        }
    }

    fn satisfied(&self, p: Position, f: Direction, goal: &NavGoal) -> bool {
        let front = p.step(f);
        match goal {
            NavGoal::Face(m) => {
                self.known(front)
                    && self.state.grid.get(front) == Some(*m)
                    && !self.state.cows.contains(&front)
                    && (*m != Material::Grass
                        || !self.state.agents.iter().any(|a| a.alive && a.position == front))
            }
            NavGoal::FaceAny(cells) => cells.contains(&front),
            NavGoal::Within { center, radius } => p.manhattan(*center) <= *radius,
        }
    }

    fn run(&self, goal: &NavGoal) -> Plan {
        let grid = &self.state.grid;
        let (w, h) = (grid.width, grid.height);
        let node = |p: Position, f: Direction| ((p.y * w + p.x) as usize) * 4 + dir_index(f);
        let start = (self.agent.position, self.agent.facing);
        if self.satisfied(start.0, start.1, goal) {
            return Plan::Arrived;
        }
        let mut dist = vec![u32::MAX; (w * h) as usize * 4];
        let mut first: Vec<Option<ActionKind>> = vec![None; dist.len()];
        let mut heap = BinaryHeap::new();
        let mut counter = 0u64;
        dist[node(start.0, start.1)] = 0;
        heap.push(Reverse((0u32, counter, start.0, start.1)));

        while let Some(Reverse((cost, _, p, f))) = heap.pop() {
            let here = node(p, f);
            if cost > dist[here] {
                continue;
            }
            if cost > 0 && self.satisfied(p, f, goal) {
                return Plan::Step(first[here].expect("non-start nodes carry a first action"));
            }
            for d in Direction::ALL {
                let q = p.step(d);
                let mut edges: [Option<(Position, Direction, u32, ActionKind)>; 2] = [None, None];
                match self.cell(q) {
                    Cell::Open => edges[0] = Some((q, d, 1, d.move_action())),
                    Cell::Blocked => {
                        if f != d {
                            edges[0] = Some((p, d, 1, d.move_action()));
                        }
                    }
                    Cell::Stone => {
                        if f != d {
                            edges[0] = Some((p, d, 1, d.move_action()));
                        } else if self.can_mine {
                            edges[1] = Some((q, d, 2, ActionKind::Do));
                        }
                    }
                    Cell::Lava | Cell::Unknown => {}
                }
                for (np, nf, c, action) in edges.into_iter().flatten() {
                    let next = node(np, nf);
                    let nc = cost + c;
                    if nc < dist[next] {
                        dist[next] = nc;
                        first[next] = if cost == 0 { Some(action) } else { first[here] };
                        counter += 1;
                        heap.push(Reverse((nc, counter, np, nf)));
                    }
                }
            }
        }
        Plan::Unreachable
    }
}

fn dir_index(d: Direction) -> usize {
    match d {
        Direction::Left => 0,
        Direction::Right => 1,
        Direction::Up => 2,
        Direction::Down => 3,
    }
}

fn living(state: &WorldState, id: AgentId) -> Result<&AgentState, WorldError> {
    let agent = state.agent(id).ok_or(WorldError::UnknownAgent(id))?;
    if !agent.alive {
        return Err(WorldError::NotAlive(id));
    }
    Ok(agent)
}

/// One search in the given mode.
pub fn plan_step(state: &WorldState, id: AgentId, goal: &NavGoal, mode: NavMode) -> Result<Plan, WorldError> {
    let agent = living(state, id)?;
    let search = Search {
        state,
        agent,
        mode,
        can_mine: agent.inventory.has(Item::WoodPickaxe),
    };
    Ok(search.run(goal))
}

/// Known cells first, then an optimistic search through unseen ones.
pub fn approach(state: &WorldState, id: AgentId, goal: &NavGoal) -> Result<Plan, WorldError> {
    match plan_step(state, id, goal, NavMode::Known)? {
        Plan::Unreachable => plan_step(state, id, goal, NavMode::Optimistic),
        plan => Ok(plan),
    }
}

/// Square-spiral waypoints around the map center, each ring rotated so that
/// different agents fan out in different directions.
pub fn exploration_waypoints(width: i32, height: i32, id: AgentId, n_agents: u32) -> Vec<Position> {
    let center = Position::new(width / 2, height / 2);
    let max_ring = width.max(height) / (2 * RING_SPACING) + 1;
    let clamp = |p: Position| Position::new(p.x.clamp(1, width - 2), p.y.clamp(1, height - 2));
    let mut out = Vec::new();
    for r in 1..=max_ring {
        let s = r * RING_SPACING;
        let mut ring = Vec::new();
        // Clockwise from the top-left corner.
        let mut x = -s;
        while x < s {
            ring.push(Position::new(center.x + x, center.y - s));
            x += RING_SPACING;
        }
        let mut y = -s;
        while y < s {
            ring.push(Position::new(center.x + s, center.y + y));
            y += RING_SPACING;
        }
        let mut x = s;
        while x > -s {
            ring.push(Position::new(center.x + x, center.y + s));
            x -= RING_SPACING;
        }
        let mut y = s;
        while y > -s {
            ring.push(Position::new(center.x - s, center.y + y));
            y -= RING_SPACING;
        }
        let shift = (id.0.saturating_sub(1) as usize * ring.len()) / n_agents.max(1) as usize;
        let len = ring.len();
        ring.rotate_left(shift % len);
        for p in ring {
            let p = clamp(p);
            if !out.contains(&p) {
                out.push(p);
            }
        }
    }
    out
}

/// Next step toward the first undiscovered, reachable exploration waypoint.
pub fn explore_step(state: &WorldState, id: AgentId) -> Result<Option<ActionKind>, WorldError> {
    let agent = living(state, id)?;
    let waypoints = exploration_waypoints(state.grid.width, state.grid.height, id, state.config.n_agents);
    for wp in waypoints {
        if agent.discovered.contains(wp) {
            continue;
        }
        let goal = NavGoal::Within { center: wp, radius: 0 };
        if let Plan::Step(a) = plan_step(state, id, &goal, NavMode::Optimistic)? {
            return Ok(Some(a));
        }
    }
    Ok(None)
}

/// The primitive the `Navigator` action resolves to this tick: a move or
/// turn while travelling, `do` once the agent faces the target, or an
/// exploration step while no instance of the target has been seen.
pub fn navigate_step(state: &WorldState, id: AgentId, target: Material) -> Result<ActionKind, WorldError> {
    if !target.is_navigable() {
        return Err(WorldError::ContractViolation(format!(
            "`{target}` is not a navigation destination"
        )));
    }
    let agent = living(state, id)?;
    let seen = state
        .grid
        .positions()
        .any(|p| agent.discovered.contains(p) && state.grid.get(p) == Some(target));
    if seen {
        match approach(state, id, &NavGoal::Face(target))? {
            Plan::Arrived => return Ok(ActionKind::Do),
            Plan::Step(a) => return Ok(a),
            Plan::Unreachable => {}
        }
    }
    explore_step(state, id)?.ok_or(WorldError::NoPath(target))
}
