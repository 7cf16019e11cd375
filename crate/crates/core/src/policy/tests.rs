use super::*;
use crate::comms::compose_message;
use crate::schema::{parse_response, to_document};
use crate::world::{Direction, EpisodeConfig, Facing, Grid, Item, Position, Vitals};

/// All-grass world with `n` agents placed at `positions`, facing down, every cell discovered.
fn open_world(positions: &[Position]) -> WorldState {
    let n = positions.len() as u32;
    let mut w = WorldState::generate(EpisodeConfig::default().with_seed(1).with_agents(n)).unwrap();
    w.grid = Grid::filled(w.grid.width, w.grid.height, Material::Grass);
    w.cows.clear();
    let cells: Vec<Position> = w.grid.positions().collect();
    for (a, p) in w.agents.iter_mut().zip(positions) {
        a.position = *p;
        a.facing = Direction::Down;
        for c in &cells {
            a.discovered.insert(*c);
        }
    }
    w
}

fn decide(world: &mut WorldState, id: u32, inbox: Vec<Message>, baseline: BaselineKind) -> TickDecision {
    let rt = AgentRuntime::new(AgentId(id));
    run_tick(world, &rt, inbox, &ScriptedBackend, baseline, 0).unwrap()
}

#[test]
fn role_directive_for_a_middle_agent() {
    assert_eq!(
        role_directive(AgentId(3), 6, BaselineKind::MemComm),
        "assist agent 2; assist leader 1"
    );
    assert_eq!(role_directive(AgentId(2), 6, BaselineKind::MemComm), "assist leader 1");
    assert!(role_directive(AgentId(1), 6, BaselineKind::MemComm).starts_with("lead the team"));
    assert!(role_directive(AgentId(6), 6, BaselineKind::MemComm).starts_with("assist agent 5; assist leader 1;"));
    assert!(role_directive(AgentId(3), 6, BaselineKind::Mem).starts_with("work alone"));
}

#[test]
fn basic_prompt_has_action_log_and_no_retrospection() {
    let mut w = WorldState::generate(EpisodeConfig::default()).unwrap();
    let mut rt = AgentRuntime::new(AgentId(1));
    rt.log.push(LogEntry {
        tick: 0,
        action: ActionKind::MoveLeft,
        result: crate::world::ActionResult::Success,
        reason: crate::world::OutcomeReason::Ok,
    });
    let plan = prepare_tick(&mut w, &rt, Vec::new(), BaselineKind::Basic).unwrap();
    let text = plan.bundle.user_text();
    assert!(text.contains("## Recent actions\nt0: move_left -> success (ok)"));
    assert!(!text.contains("Retrospection"));
    assert_eq!(plan.bundle.inbox_rendering, "communication disabled\n");
}

#[test]
fn action_log_keeps_the_last_twenty() {
    let mut log = ActionLog::new();
    for t in 0..25 {
        log.push(LogEntry {
            tick: t,
            action: ActionKind::Noop,
            result: crate::world::ActionResult::Success,
            reason: crate::world::OutcomeReason::Ok,
        });
    }
    assert_eq!(log.len(), ACTION_LOG_LEN);
    assert_eq!(log.iter().next().unwrap().tick, 5);
    assert_eq!(log.render().lines().count(), ACTION_LOG_LEN);
}

#[test]
fn mem_prompt_never_contains_messages() {
    let mut w = WorldState::generate(EpisodeConfig::default().with_agents(2)).unwrap();
    let obs = w.observe(AgentId(2), Vec::new()).unwrap();
    let mut response = crate::schema::tests::sample();
    response.collaboration.help_method = "MARKER-TEXT-7731".to_string();
    let msg = compose_message(&obs, &response, &w.techtree);
    let rt = AgentRuntime::new(AgentId(1));
    let plan = prepare_tick(&mut w, &rt, vec![msg.clone()], BaselineKind::Mem).unwrap();
    assert_eq!(plan.bundle.inbox_rendering, "communication disabled\n");
    assert!(!plan.bundle.user_text().contains("MARKER-TEXT-7731"));
    assert!(plan.observation.inbox.is_empty());
    let plan = prepare_tick(&mut w, &rt, vec![msg], BaselineKind::MemComm).unwrap();
    assert!(plan.bundle.user_text().contains("MARKER-TEXT-7731"));
}

#[test]
fn identical_inputs_give_identical_bundles() {
    let mut a = WorldState::generate(EpisodeConfig::default().with_seed(3)).unwrap();
    let mut b = a.clone();
    let rt = AgentRuntime::new(AgentId(1));
    let pa = prepare_tick(&mut a, &rt, Vec::new(), BaselineKind::Mem).unwrap();
    let pb = prepare_tick(&mut b, &rt, Vec::new(), BaselineKind::Mem).unwrap();
    assert_eq!(pa.bundle, pb.bundle);
}

#[test]
fn environment_description_is_fixed_and_lists_recipes() {
    let tree = TechTree::standard();
    let a = environment_description(&tree);
    assert_eq!(a, environment_description(&tree));
    assert!(a.contains("- place_table: facing grass, wood 2"));
    assert!(a.contains("- collect_diamond: facing diamond, iron_pickaxe 1"));
}

#[test]
fn first_scripted_action_heads_for_a_tree() {
    let mut w = WorldState::generate(EpisodeConfig::default().with_seed(7)).unwrap();
    let d = decide(&mut w, 1, Vec::new(), BaselineKind::Mem);
    assert_eq!(d.action, ActionKind::Navigate { target: Material::Tree });
    assert_eq!(d.response.goal.current_goal, GoalType::CollectWood);
}

#[test]
fn two_wood_facing_grass_places_a_table() {
    let mut w = open_world(&[Position::new(10, 10)]);
    w.agents[0].inventory.add(Item::Wood, 2);
    let d = decide(&mut w, 1, Vec::new(), BaselineKind::Mem);
    assert_eq!(d.response.action.final_next_action, ActionType::PlaceTable);
    assert_eq!(d.action, ActionKind::PlaceTable);
}

#[test]
fn low_drink_overrides_the_goal() {
    let mut w = open_world(&[Position::new(10, 10)]);
    w.grid.set(Position::new(20, 10), Material::Water);
    w.agents[0].vitals.drink = 2;
    let d = decide(&mut w, 1, Vec::new(), BaselineKind::Mem);
    assert_eq!(d.action, ActionKind::Navigate { target: Material::Water });
    assert_eq!(d.response.action.final_target_material_to_collect, NavigationDestination::Water);
}

#[test]
fn low_energy_sleeps_and_low_food_hunts() {
    let mut w = open_world(&[Position::new(10, 10)]);
    w.agents[0].vitals.energy = 1;
    assert_eq!(decide(&mut w, 1, Vec::new(), BaselineKind::Mem).action, ActionKind::Sleep);
    let mut w = open_world(&[Position::new(10, 10)]);
    w.agents[0].vitals.food = 2;
    w.cows.insert(Position::new(10, 13));
    // Facing down toward the cow two cells away: step down first.
    assert_eq!(decide(&mut w, 1, Vec::new(), BaselineKind::Mem).action, ActionKind::MoveDown);
    w.cows.clear();
    w.cows.insert(Position::new(10, 11));
    assert_eq!(decide(&mut w, 1, Vec::new(), BaselineKind::Mem).action, ActionKind::Do);
}

#[test]
fn helper_shares_a_spare_pickaxe_with_its_predecessor() {
    let mut w = open_world(&[
        Position::new(30, 30),
        Position::new(10, 10),
        Position::new(13, 10),
        Position::new(40, 40),
    ]);
    w.agents[2].inventory.add(Item::WoodPickaxe, 2);
    let obs = w.observe(AgentId(2), Vec::new()).unwrap();
    let mut response = crate::schema::tests::sample();
    response.goal.current_goal = GoalType::CollectStone;
    let msg = compose_message(&obs, &response, &w.techtree);
    assert_eq!(msg.assistance_request.map(|r| r.item), Some(Item::WoodPickaxe));
    let d = decide(&mut w, 3, vec![msg], BaselineKind::MemComm);
    assert_eq!(
        d.action,
        ActionKind::Share {
            target_agent: AgentId(2),
            item: Item::WoodPickaxe
        }
    );
    assert_eq!(d.response.collaboration.target_agent_to_help, 2);
    assert_eq!(d.response.collaboration.can_help_now, ResultType::Success);
}

#[test]
fn helper_keeps_its_only_pickaxe() {
    let mut w = open_world(&[
        Position::new(30, 30),
        Position::new(10, 10),
        Position::new(13, 10),
        Position::new(40, 40),
    ]);
    w.agents[2].inventory.add(Item::WoodPickaxe, 1);
    let obs = w.observe(AgentId(2), Vec::new()).unwrap();
    let mut response = crate::schema::tests::sample();
    response.goal.current_goal = GoalType::CollectStone;
    let msg = compose_message(&obs, &response, &w.techtree);
    let d = decide(&mut w, 3, vec![msg], BaselineKind::MemComm);
    assert!(!matches!(d.action, ActionKind::Share { .. }));
    assert_eq!(d.response.collaboration.can_help_now, ResultType::Failure);
}

#[test]
fn mem_messages_are_not_for_delivery() {
    let mut w = WorldState::generate(EpisodeConfig::default().with_agents(2)).unwrap();
    assert!(!decide(&mut w, 1, Vec::new(), BaselineKind::Mem).deliver);
    assert!(decide(&mut w, 1, Vec::new(), BaselineKind::MemComm).deliver);
}

#[test]
fn dead_agent_is_a_precondition_error() {
    let mut w = WorldState::generate(EpisodeConfig::default()).unwrap();
    w.agents[0].alive = false;
    w.agents[0].vitals = Vitals {
        health: 0,
        ..Vitals::full()
    };
    let rt = AgentRuntime::new(AgentId(1));
    let err = run_tick(&mut w, &rt, Vec::new(), &ScriptedBackend, BaselineKind::Mem, 0).unwrap_err();
    assert!(matches!(err, PolicyError::World(WorldError::NotAlive(AgentId(1)))));
}

#[test]
fn scripted_responses_parse_back_identically() {
    let mut w = WorldState::generate(EpisodeConfig::default().with_seed(2)).unwrap();
    for baseline in BaselineKind::ALL {
        let d = decide(&mut w, 1, Vec::new(), baseline);
        let parsed = parse_response(&to_document(&d.response)).unwrap();
        assert_eq!(parsed.event, d.response);
        assert!(parsed.warnings.is_empty());
    }
}

#[test]
fn finish_consolidates_for_graph_baselines_only() {
    let mut w = WorldState::generate(EpisodeConfig::default()).unwrap();
    for (baseline, expect_graph) in [(BaselineKind::Mem, true), (BaselineKind::Basic, false)] {
        let mut rt = AgentRuntime::new(AgentId(1));
        let d = run_tick(&mut w, &rt, Vec::new(), &ScriptedBackend, baseline, 0).unwrap();
        let action = d.action;
        let report = w.step(&[(AgentId(1), action)].into_iter().collect()).unwrap();
        rt.finish(d, report.outcomes[0].clone(), &report.events, baseline).unwrap();
        assert_eq!(rt.log.len(), 1);
        assert_eq!(!rt.graph.is_empty(), expect_graph);
        assert_eq!(rt.last_outcome.as_ref().map(|o| o.action), Some(action));
    }
}

struct Failing;

impl PlannerBackend for Failing {
    fn name(&self) -> &str {
        "failing"
    }
    fn is_deterministic(&self) -> bool {
        true
    }
    fn decide(&self, _: &DecisionRequest<'_>) -> Result<Decision, PolicyError> {
        Err(PolicyError::Transport("connection refused".to_string()))
    }
}

#[test]
fn backend_failure_becomes_a_recorded_noop() {
    let mut w = WorldState::generate(EpisodeConfig::default()).unwrap();
    let rt = AgentRuntime::new(AgentId(1));
    let d = run_tick(&mut w, &rt, Vec::new(), &Failing, BaselineKind::Mem, 0).unwrap();
    assert_eq!(d.action, ActionKind::Noop);
    assert!(d.failure.as_deref().unwrap().contains("connection refused"));
    assert!(parse_response(&to_document(&d.response)).is_ok());
}

#[test]
fn baseline_names_round_trip() {
    for b in BaselineKind::ALL {
        assert_eq!(b.as_str().parse::<BaselineKind>().unwrap(), b);
    }
    assert!("both".parse::<BaselineKind>().is_err());
}

#[test]
fn sleeping_agent_keeps_sleeping() {
    let mut w = open_world(&[Position::new(10, 10)]);
    w.agents[0].sleeping = true;
    w.agents[0].vitals.energy = 5;
    assert_eq!(decide(&mut w, 1, Vec::new(), BaselineKind::Mem).action, ActionKind::Sleep);
    assert_eq!(w.agents[0].facing, Direction::Down);
    let _ = Facing::Cow;
}

mod remote_mock {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};
    use std::thread::JoinHandle;

    /// Seen request: header block and body.
    type Seen = Arc<Mutex<Vec<(String, String)>>>;

    /// Serve one canned chat reply per connection, in order.
    fn serve(contents: Vec<String>) -> (String, Seen, JoinHandle<()>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let seen: Seen = Arc::default();
        let log = seen.clone();
        let handle = std::thread::spawn(move || {
            for content in contents {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut head = String::new();
                let mut length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                    head.push_str(&line);
                }
                let mut body = vec![0u8; length];
                reader.read_exact(&mut body).unwrap();
                log.lock().unwrap().push((head, String::from_utf8(body).unwrap()));
                let reply = serde_json::json!({
                    "choices": [{ "message": { "role": "assistant", "content": content } }]
                })
                .to_string();
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    reply.len(),
                    reply
                )
                .unwrap();
            }
        });
        (url, seen, handle)
    }

    fn backend(url: String, key: Option<&str>) -> RemoteBackend {
        let config = RemoteConfig {
            endpoint: url,
            timeout_secs: 10,
            ..RemoteConfig::default()
        };
        RemoteBackend::with_key(config, key.map(str::to_string)).unwrap()
    }

    fn valid() -> String {
        to_document(&crate::schema::tests::sample())
    }

    #[test]
    fn valid_reply_is_used() {
        let (url, seen, handle) = serve(vec![valid()]);
        let b = backend(url, Some("sk-test-123"));
        let mut w = WorldState::generate(EpisodeConfig::default()).unwrap();
        let rt = AgentRuntime::new(AgentId(1));
        let d = run_tick(&mut w, &rt, Vec::new(), &b, BaselineKind::Mem, 0).unwrap();
        handle.join().unwrap();
        assert_eq!(d.retries, 0);
        assert!(d.failure.is_none());
        assert_eq!(d.response, crate::schema::tests::sample());
        let seen = seen.lock().unwrap();
        let (head, body) = &seen[0];
        assert!(head.to_ascii_lowercase().contains("authorization: bearer sk-test-123"));
        let body: serde_json::Value = serde_json::from_str(body).unwrap();
        assert_eq!(body["messages"].as_array().unwrap().len(), 2);
        assert_eq!(body["response_format"]["json_schema"]["strict"], true);
    }

    #[test]
    fn no_key_sends_no_auth_header() {
        let (url, seen, handle) = serve(vec![valid()]);
        let b = backend(url, None);
        assert!(!format!("{b:?}").contains("sk-"));
        let mut w = WorldState::generate(EpisodeConfig::default()).unwrap();
        let rt = AgentRuntime::new(AgentId(1));
        run_tick(&mut w, &rt, Vec::new(), &b, BaselineKind::Mem, 0).unwrap();
        handle.join().unwrap();
        assert!(!seen.lock().unwrap()[0].0.to_ascii_lowercase().contains("authorization"));
    }

    #[test]
    fn debug_output_masks_the_key() {
        let b = backend("http://127.0.0.1:1/x".to_string(), Some("sk-secret-999"));
        assert!(!format!("{b:?}").contains("sk-secret-999"));
    }

    #[test]
    fn invalid_then_valid_counts_one_retry() {
        let (url, seen, handle) = serve(vec!["not json at all".to_string(), valid()]);
        let b = backend(url, None);
        let mut w = WorldState::generate(EpisodeConfig::default()).unwrap();
        let rt = AgentRuntime::new(AgentId(1));
        let d = run_tick(&mut w, &rt, Vec::new(), &b, BaselineKind::Mem, 0).unwrap();
        handle.join().unwrap();
        assert_eq!(d.retries, 1);
        assert!(d.failure.is_none());
        let seen = seen.lock().unwrap();
        let second: serde_json::Value = serde_json::from_str(&seen[1].1).unwrap();
        let msgs = second["messages"].as_array().unwrap();
        assert_eq!(msgs.len(), 4);
        assert_eq!(msgs[2]["content"], "not json at all");
        assert!(msgs[3]["content"].as_str().unwrap().contains("rejected"));
    }

    #[test]
    fn exhausted_retries_become_a_noop() {
        let bad = vec!["{}".to_string(); MAX_ATTEMPTS as usize];
        let (url, _, handle) = serve(bad);
        let b = backend(url, None);
        let mut w = WorldState::generate(EpisodeConfig::default()).unwrap();
        let rt = AgentRuntime::new(AgentId(1));
        let d = run_tick(&mut w, &rt, Vec::new(), &b, BaselineKind::Mem, 0).unwrap();
        handle.join().unwrap();
        assert_eq!(d.action, ActionKind::Noop);
        assert!(d.failure.as_deref().unwrap().contains(&MAX_ATTEMPTS.to_string()));
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_failure() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        drop(listener);
        let b = backend(url, None);
        let mut w = WorldState::generate(EpisodeConfig::default()).unwrap();
        let rt = AgentRuntime::new(AgentId(1));
        let d = run_tick(&mut w, &rt, Vec::new(), &b, BaselineKind::Mem, 0).unwrap();
        assert_eq!(d.action, ActionKind::Noop);
        assert!(d.failure.is_some());
    }

    #[test]
    fn rejects_bad_config() {
        let config = RemoteConfig {
            temperature: -1.0,
            ..RemoteConfig::default()
        };
        assert!(matches!(RemoteBackend::with_key(config, None), Err(PolicyError::Config(_))));
        let config = RemoteConfig {
            endpoint: String::new(),
            ..RemoteConfig::default()
        };
        assert!(RemoteBackend::with_key(config, None).is_err());
    }
}
