//! A tiny in-process stand-in for the GitHub REST endpoints the exporter
//! uses, plus a fake clock.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use prsafe_fetch::Clock;
use serde_json::{json, Value};

#[derive(Debug, Clone, Default)]
pub struct RepoData {
    pub stars: u64,
    pub pulls: Vec<Value>,
    pub issue_comments: Vec<Value>,
    pub review_comments: Vec<Value>,
    pub reviews: BTreeMap<u64, Vec<Value>>,
    pub events: Vec<Value>,
    pub commits: Vec<Value>,
}

#[derive(Debug, Clone)]
pub struct Recorded {
    pub path: String,
    pub authorization: Option<String>,
}

#[derive(Default)]
pub struct State {
    pub repos: BTreeMap<String, RepoData>,
    pub requests: Vec<Recorded>,
    /// Answer this many requests with a primary rate-limit 403 first.
    pub rate_limited: usize,
    pub reset_epoch: i64,
    /// After this many more successful answers, reply 500 to everything.
    pub fail_after: Option<usize>,
}

pub struct MockGithub {
    pub base: String,
    pub state: Arc<Mutex<State>>,
}

impl MockGithub {
    pub fn start() -> MockGithub {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let state = Arc::new(Mutex::new(State::default()));
        let shared = state.clone();
        let base_clone = base.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let st = shared.clone();
                let b = base_clone.clone();
                std::thread::spawn(move || serve(stream, &st, &b));
            }
        });
        MockGithub { base, state }
    }

    pub fn insert(&self, name: &str, data: RepoData) {
        self.state.lock().unwrap().repos.insert(name.to_string(), data);
    }

    pub fn requests(&self) -> Vec<Recorded> {
        self.state.lock().unwrap().requests.clone()
    }

    pub fn clear_requests(&self) {
        self.state.lock().unwrap().requests.clear();
    }
}

struct Reply {
    status: u16,
    headers: Vec<(String, String)>,
    body: String,
}

fn serve(mut stream: TcpStream, state: &Mutex<State>, base: &str) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
        return;
    }
    let mut authorization = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("authorization") {
                authorization = Some(v.trim().to_string());
            }
        }
    }
    let target = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let reply = route(&target, authorization, state, base);
    let reason = match reply.status {
        200 => "OK",
        403 => "Forbidden",
        404 => "Not Found",
        _ => "Status",
    };
    let mut head = format!(
        "HTTP/1.1 {} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n",
        reply.status,
        reply.body.len()
    );
    for (k, v) in &reply.headers {
        head.push_str(&format!("{k}: {v}\r\n"));
    }
    head.push_str("\r\n");
    let _ = stream.write_all(head.as_bytes());
    let _ = stream.write_all(reply.body.as_bytes());
    let _ = stream.flush();
}

fn query(target: &str) -> (String, BTreeMap<String, String>) {
    let (path, q) = target.split_once('?').unwrap_or((target, ""));
    let params = q
        .split('&')
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    (path.to_string(), params)
}

fn page(items: &[Value], path: &str, params: &BTreeMap<String, String>, base: &str) -> Reply {
    let per_page: usize = params.get("per_page").and_then(|v| v.parse().ok()).unwrap_or(30);
    let page: usize = params.get("page").and_then(|v| v.parse().ok()).unwrap_or(1);
    let start = (page - 1) * per_page;
    let slice: Vec<Value> = items.iter().skip(start).take(per_page).cloned().collect();
    let last = items.len().div_ceil(per_page).max(1);
    let mut headers = Vec::new();
    if page < last {
        let mut rest: Vec<String> = params
            .iter()
            .filter(|(k, _)| k.as_str() != "page")
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        rest.sort();
        let q = rest.join("&");
        headers.push((
            "Link".to_string(),
            format!(
                "<{base}{path}?{q}&page={}>; rel=\"next\", <{base}{path}?{q}&page={last}>; rel=\"last\"",
                page + 1
            ),
        ));
    }
    Reply {
        status: 200,
        headers,
        body: Value::Array(slice).to_string(),
    }
}

fn not_found() -> Reply {
    Reply {
        status: 404,
        headers: vec![],
        body: json!({"message": "Not Found"}).to_string(),
    }
}

fn route(target: &str, authorization: Option<String>, state: &Mutex<State>, base: &str) -> Reply {
    let mut st = state.lock().unwrap();
    let (path, params) = query(target);
    st.requests.push(Recorded {
        path: target.to_string(),
        authorization,
    });
    if st.rate_limited > 0 {
        st.rate_limited -= 1;
        return Reply {
            status: 403,
            headers: vec![
                ("X-RateLimit-Remaining".into(), "0".into()),
                ("X-RateLimit-Reset".into(), st.reset_epoch.to_string()),
            ],
            body: json!({"message": "API rate limit exceeded"}).to_string(),
        };
    }
    if let Some(n) = st.fail_after {
        if n == 0 {
            return Reply {
                status: 500,
                headers: vec![],
                body: "{}".into(),
            };
        }
        st.fail_after = Some(n - 1);
    }
    let parts: Vec<&str> = path.trim_start_matches('/').split('/').collect();
    if parts.len() < 3 || parts[0] != "repos" {
        return not_found();
    }
    let name = format!("{}/{}", parts[1], parts[2]);
    let Some(repo) = st.repos.get(&name) else {
        return not_found();
    };
    match &parts[3..] {
        [] => Reply {
            status: 200,
            headers: vec![],
            body: json!({"full_name": name, "stargazers_count": repo.stars, "private": false}).to_string(),
        },
        ["pulls"] => page(&repo.pulls, &path, &params, base),
        ["issues", "comments"] => page(&repo.issue_comments, &path, &params, base),
        ["pulls", "comments"] => page(&repo.review_comments, &path, &params, base),
        ["issues", "events"] => page(&repo.events, &path, &params, base),
        ["commits"] => page(&repo.commits, &path, &params, base),
        ["pulls", n, "reviews"] => match n.parse::<u64>().ok().and_then(|n| repo.reviews.get(&n)) {
            Some(reviews) => page(reviews, &path, &params, base),
            None if repo.pulls.iter().any(|p| p["number"].to_string() == *n) => page(&[], &path, &params, base),
            None => not_found(),
        },
        _ => not_found(),
    }
}

/// Small deterministic generator so fixtures need no RNG dependency.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        self.0 >> 33
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }
}

fn ts(minutes: u64) -> String {
    let t = chrono::DateTime::parse_from_rfc3339("2018-01-01T00:00:00Z").unwrap() + chrono::Duration::minutes(minutes as i64);
    t.with_timezone(&chrono::Utc).format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

const USERS: [&str; 6] = ["alice", "bob", "carol", "dave", "erin", "frank"];
const ASSOC: [&str; 4] = ["OWNER", "MEMBER", "CONTRIBUTOR", "NONE"];

/// A repository with `n_pulls` PRs interleaved with plain issues, comments on
/// both, reviews, events and commits (some without a linked account).
pub fn generate_repo(seed: u64, n_pulls: u64, first_id: u64) -> RepoData {
    let mut rng = Lcg(seed);
    let mut data = RepoData {
        stars: 10 + rng.below(1000),
        ..RepoData::default()
    };
    let mut id = first_id;
    let mut next_id = || {
        id += 1;
        id
    };
    let mut number = 0;
    let mut pr_numbers = Vec::new();
    for i in 0..n_pulls {
        number += 1 + rng.below(2); // plain issues take the skipped numbers
        pr_numbers.push(number);
        let merged = rng.below(3) > 0;
        let closed = merged || rng.below(2) == 0;
        let created = i * 600;
        data.pulls.push(json!({
            "id": next_id(), "number": number, "state": if closed { "closed" } else { "open" },
            "user": {"login": USERS[rng.below(6) as usize]},
            "created_at": ts(created),
            "closed_at": if closed { json!(ts(created + 300)) } else { Value::Null },
            "merged_at": if merged { json!(ts(created + 300)) } else { Value::Null },
        }));
        if closed {
            data.events.push(json!({
                "id": next_id(), "event": if merged { "merged" } else { "closed" },
                "actor": {"login": USERS[rng.below(2) as usize]}, "issue": {"number": number},
                "created_at": ts(created + 300),
            }));
        }
        if rng.below(5) == 0 {
            data.events.push(json!({
                "id": next_id(), "event": "reopened", "actor": {"login": "bob"},
                "issue": {"number": number}, "created_at": ts(created + 200),
            }));
        }
        let reviews: Vec<Value> = (0..rng.below(3))
            .map(|k| {
                json!({
                    "id": next_id(), "user": {"login": USERS[rng.below(6) as usize]},
                    "body": if rng.below(2) == 0 { "" } else { "looks fine" },
                    "state": "COMMENTED", "submitted_at": ts(created + 100 + k),
                    "author_association": ASSOC[rng.below(4) as usize],
                })
            })
            .collect();
        if !reviews.is_empty() {
            data.reviews.insert(number, reviews);
        }
    }
    for k in 0..(n_pulls * 2) {
        let on_pr = rng.below(4) > 0 && !pr_numbers.is_empty();
        let n = if on_pr { pr_numbers[rng.below(pr_numbers.len() as u64) as usize] } else { number + 1 + rng.below(5) };
        let body = ["thanks @bob", "merge conflict here", "\u{1F389} great", "lgtm", ""][rng.below(5) as usize];
        data.issue_comments.push(json!({
            "id": next_id(), "issue_url": format!("https://api.github.com/repos/x/y/issues/{n}"),
            "user": if rng.below(30) == 0 { Value::Null } else { json!({"login": USERS[rng.below(6) as usize]}) },
            "body": body, "created_at": ts(k * 300 + 17), "author_association": ASSOC[rng.below(4) as usize],
        }));
    }
    for k in 0..n_pulls {
        if pr_numbers.is_empty() || rng.below(2) == 0 {
            continue;
        }
        let n = pr_numbers[rng.below(pr_numbers.len() as u64) as usize];
        data.review_comments.push(json!({
            "id": next_id(), "pull_request_url": format!("https://api.github.com/repos/x/y/pulls/{n}"),
            "user": {"login": USERS[rng.below(6) as usize]}, "body": "nit: spacing",
            "created_at": ts(k * 450 + 5), "author_association": ASSOC[rng.below(4) as usize],
        }));
    }
    for k in 0..(n_pulls * 3) {
        let linked = rng.below(8) > 0;
        data.commits.push(json!({
            "sha": format!("{:040x}", seed.wrapping_mul(1_000_003).wrapping_add(k)),
            "author": if linked { json!({"login": USERS[rng.below(6) as usize]}) } else { Value::Null },
            "commit": {"author": {"name": "x", "date": ts(k * 200)}},
        }));
    }
    data
}

/// Clock that advances only when slept on.
pub struct FakeClock {
    inner: Mutex<(i64, Vec<Duration>)>,
}

impl FakeClock {
    pub fn new(now: i64) -> Arc<FakeClock> {
        Arc::new(FakeClock {
            inner: Mutex::new((now, Vec::new())),
        })
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.inner.lock().unwrap().1.clone()
    }
}

impl Clock for FakeClock {
    fn now_epoch_secs(&self) -> i64 {
        self.inner.lock().unwrap().0
    }

    fn sleep(&self, d: Duration) {
        let mut g = self.inner.lock().unwrap();
        g.0 += d.as_secs() as i64;
        g.1.push(d);
    }
}

/// Independent enumeration: raw sockets, following `Link: rel="next"` rather
/// than counting pages.
pub fn enumerate(url: &str) -> Vec<Value> {
    let mut out = Vec::new();
    let mut next = Some(url.to_string());
    while let Some(u) = next.take() {
        let rest = u.strip_prefix("http://").unwrap();
        let (host, path) = rest.split_once('/').unwrap();
        let mut s = TcpStream::connect(host).unwrap();
        write!(s, "GET /{path} HTTP/1.1\r\nHost: {host}\r\nConnection: close\r\n\r\n").unwrap();
        let mut raw = String::new();
        s.read_to_string(&mut raw).unwrap();
        let (head, body) = raw.split_once("\r\n\r\n").unwrap();
        assert!(head.starts_with("HTTP/1.1 200"), "{head}");
        for line in head.lines() {
            if let Some(v) = line.strip_prefix("Link: ") {
                for part in v.split(", ") {
                    if part.ends_with("rel=\"next\"") {
                        next = Some(part[1..part.find('>').unwrap()].to_string());
                    }
                }
            }
        }
        match serde_json::from_str::<Value>(body).unwrap() {
            Value::Array(items) => out.extend(items),
            other => panic!("expected array, got {other}"),
        }
    }
    out
}
