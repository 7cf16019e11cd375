use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_crafter-coop");

fn cli(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("CRAFTER_COOP_API_KEY")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Every file under `dir`, keyed by relative path.
fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn six_agent_sweep_writes_records_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = cli(&[
        "run", "--agents", "6", "--baseline", "mem_comm", "--runs", "10", "--backend", "scripted", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let files = tree(&out);
    assert_eq!(files.keys().filter(|k| k.starts_with("records")).count(), 10);
    assert_eq!(files.keys().filter(|k| k.starts_with("graphs") && k.ends_with(".dot")).count(), 60);
    assert!(files.contains_key("metrics.csv") && files.contains_key("metrics.txt"));
    let resolved = String::from_utf8(files["run.toml"].clone()).unwrap();
    assert!(resolved.contains("agents = 6") && resolved.contains("record_format = 1"));
    assert!(stdout(&o).contains("collect_diamond"));
    let msgs = String::from_utf8(files["messages/seed-0000.jsonl"].clone()).unwrap();
    assert!(msgs.lines().count() > 0);

    // The resolved settings file reproduces the run.
    let again = dir.path().join("again");
    let o = cli(&["run", "--config", out.join("run.toml").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut a = tree(&out);
    let mut b = tree(&again);
    a.remove("run.toml");
    b.remove("run.toml");
    assert_eq!(a, b);
}

#[test]
fn same_seed_gives_identical_output_trees() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = cli(&["run", "--agents", "1", "--backend", "scripted", "--seed", "7", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let (ta, mut tb) = (tree(&a), tree(&b));
    // Only the output path differs.
    let fix = |t: &mut BTreeMap<String, Vec<u8>>| {
        let s = String::from_utf8(t["run.toml"].clone()).unwrap();
        t.insert("run.toml".into(), s.replace(b.to_str().unwrap(), a.to_str().unwrap()).into_bytes());
    };
    fix(&mut tb);
    assert_eq!(ta, tb);
}

#[test]
fn config_file_values_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let out = dir.path().join("o");
    std::fs::write(&cfg, "[run]\nseed = 4\nruns = 2\n[episode]\nmax_ticks = 15\n").unwrap();
    let o = cli(&["run", "--config", cfg.to_str().unwrap(), "--max-ticks", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let files = tree(&out);
    assert!(files.contains_key("records/seed-0004.jsonl") && files.contains_key("records/seed-0005.jsonl"));
    let record = String::from_utf8(files["records/seed-0004.jsonl"].clone()).unwrap();
    assert_eq!(record.lines().count(), 10 + 2);
}

#[test]
fn default_config_file_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let out = dir.path().join("o");
    let o = cli(&["run", "--config", cfg.to_str().unwrap(), "--max-ticks", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_one() {
    let o = cli(&["run", "--config", "/definitely/missing.toml"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("/definitely/missing.toml"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[run]\nbaseline = \"basic\"\ncommunication = true\n").unwrap();
    let o = cli(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("communication"));

    assert_eq!(code(&cli(&["run", "--baseline", "both"])), 1);
    assert_eq!(code(&cli(&["run", "--runs", "0"])), 1);
    assert_eq!(code(&cli(&["frobnicate"])), 1);
    assert_eq!(code(&cli(&["--help"])), 0);
}

#[test]
fn api_key_is_never_taken_from_flags_or_config() {
    assert_eq!(code(&cli(&["run", "--api-key", "sk-1"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("k.toml");
    std::fs::write(&cfg, "[remote]\napi_key = \"sk-1\"\n").unwrap();
    let o = cli(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("CRAFTER_COOP_API_KEY"));
}

#[test]
fn remote_backend_sends_the_environment_key() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let server = std::thread::spawn(move || {
        let mut heads = Vec::new();
        for _ in 0..3 {
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
            heads.push(head);
            let reply = r#"{"choices":[{"message":{"content":"no json here"}}]}"#;
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
        }
        heads
    });
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("r.toml");
    std::fs::write(&cfg, format!("[remote]\nendpoint = \"{endpoint}\"\ntimeout_secs = 10\n")).unwrap();
    let out = dir.path().join("o");
    let o = Command::new(BIN)
        .args(["run", "--config", cfg.to_str().unwrap(), "--backend", "remote", "--max-ticks", "1"])
        .args(["--out", out.to_str().unwrap()])
        .env("CRAFTER_COOP_API_KEY", "sk-from-env")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let heads = server.join().unwrap();
    assert!(heads.iter().all(|h| h.to_ascii_lowercase().contains("authorization: bearer sk-from-env")));
    let record = std::fs::read_to_string(out.join("records/seed-0000.jsonl")).unwrap();
    assert!(record.contains("\"backend_failures\":1"));
    assert!(record.contains("\"noop\""));
    assert!(!std::fs::read_to_string(out.join("run.toml")).unwrap().contains("sk-from-env"));
}

#[test]
fn replay_reports_fidelity_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = cli(&["run", "--seed", "2", "--max-ticks", "60", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let record = out.join("records/seed-0002.jsonl");
    let trace = dir.path().join("trace.jsonl");
    let o = cli(&["replay", record.to_str().unwrap(), "--trace", trace.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("fidelity OK"));
    assert_eq!(std::fs::read_to_string(&trace).unwrap().lines().count(), 60);

    let text = std::fs::read_to_string(&record).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let line = &lines[10];
    let at = line.find("\"actions\":{\"1\":").unwrap() + "\"actions\":{\"1\":".len();
    let replaced = if line[at..].starts_with("\"noop\"") {
        format!("{}\"sleep\"{}", &line[..at], &line[at + 6..])
    } else {
        let end = line[at..].find("},\"outcomes\"").unwrap() + at;
        format!("{}\"noop\"{}", &line[..at], &line[end..])
    };
    lines[10] = replaced;
    let tampered = dir.path().join("tampered.jsonl");
    std::fs::write(&tampered, lines.join("\n") + "\n").unwrap();
    let o = cli(&["replay", tampered.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("tick 9"));

    std::fs::write(&tampered, "{\"header\":{\"format_version\":99}}\n").unwrap();
    assert_eq!(code(&cli(&["replay", tampered.to_str().unwrap()])), 3);
    assert_eq!(code(&cli(&["replay", "/missing/record.jsonl"])), 2);
    let o = cli(&["table", tampered.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn schema_lists_all_action_types() {
    let o = cli(&["schema"]);
    assert_eq!(code(&o), 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let text = doc.to_string();
    for a in [
        "noop", "move_left", "move_right", "move_up", "move_down", "do", "sleep", "place_stone", "place_table",
        "place_furnace", "place_plant", "make_wood_pickaxe", "make_stone_pickaxe", "make_iron_pickaxe", "Navigator",
        "share",
    ] {
        assert!(text.contains(&format!("\"{a}\"")), "{a}");
    }
}

#[test]
fn export_graph_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = cli(&["run", "--runs", "2", "--max-ticks", "30", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let graph = out.join("graphs/seed-0000-agent-1.json");
    let o = cli(&["export-graph", graph.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dot = stdout(&o);
    for color in ["fillcolor=blue", "fillcolor=green", "fillcolor=red"] {
        assert!(dot.contains(color), "{color}");
    }
    assert_eq!(dot, std::fs::read_to_string(out.join("graphs/seed-0000-agent-1.dot")).unwrap());
    assert_eq!(code(&cli(&["export-graph", graph.to_str().unwrap(), "--format", "svg"])), 1);

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\"steps\": 1}").unwrap();
    assert_eq!(code(&cli(&["export-graph", broken.to_str().unwrap()])), 3);

    let o = cli(&["table", out.to_str().unwrap(), "--csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o), std::fs::read_to_string(out.join("metrics.csv")).unwrap());
    assert_eq!(code(&cli(&["table", dir.path().join("none").to_str().unwrap()])), 2);
}
