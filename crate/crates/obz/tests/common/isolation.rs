use super::*;
use obz::client::Window;
use obz::wire::IngestEnvelope;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reqwest::blocking::Client as Http;
use reqwest::Method;
use serde_json::json;

struct Tenant {
    token: String,
    project: String,
    log: String,
    token_hash: String,
}

fn seed_tenant(srv: &TestServer, user: &str, seed: u64) -> Tenant {
    let token = srv.token(user);
    let c = srv.client(&token);
    let project = c.create_project("shared-name").unwrap().project_id;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let imgs: Vec<Vec<u16>> = (0..60).map(|_| ref_image(&mut rng)).collect();
    c.upload_ref(&project, &fof_upload(imgs.iter().map(|i| fof(i).values().to_vec()).collect()), false)
        .unwrap();
    let mut env = IngestEnvelope::new("s");
    env.image = Some(b64(&obzt(&imgs[0])));
    env.heatmaps.insert("gradcam".into(), b64(&obzt(&imgs[1])));
    let log = c.ingest(&project, &env).unwrap().log_id;
    Tenant { token_hash: obz::storage::hash_token(&token), token, project, log }
}

/// Every route, aimed at `victim`'s resources.
fn requests(victim: &Tenant) -> Vec<(Method, String, Option<serde_json::Value>)> {
    let p = &victim.project;
    let l = &victim.log;
    let fof_body = json!({
        "feature_names": obz_core::FEATURE_NAMES,
        "rows": vec![vec![1.0; 16]; 30],
    });
    let env = json!({ "sample_id": "x", "features": { "names": obz_core::FEATURE_NAMES, "values": vec![1.0; 16] } });
    vec![
        (Method::GET, format!("/v1/projects/{p}"), None),
        (Method::POST, format!("/v1/projects/{p}/ref_features"), Some(fof_body.clone())),
        (Method::POST, format!("/v1/projects/{p}/ref_features?refit=true"), Some(fof_body)),
        (Method::GET, format!("/v1/projects/{p}/detectors"), None),
        (Method::POST, format!("/v1/projects/{p}/logs"), Some(env)),
        (Method::GET, format!("/v1/projects/{p}/logs"), None),
        (Method::GET, format!("/v1/projects/{p}/logs?outlier_only=true"), None),
        (Method::GET, format!("/v1/projects/{p}/summary?metrics=mean"), None),
        (Method::GET, format!("/v1/projects/{p}/export.csv"), None),
        (Method::GET, format!("/v1/logs/{l}"), None),
        (Method::GET, format!("/v1/logs/{l}/image"), None),
        (Method::GET, format!("/v1/logs/{l}/heatmap/gradcam"), None),
        (Method::DELETE, format!("/v1/logs/{l}"), None),
        (Method::DELETE, format!("/v1/tokens/{}", victim.token_hash), None),
    ]
}

fn send(http: &Http, base: &str, token: Option<&str>, req: &(Method, String, Option<serde_json::Value>)) -> u16 {
    let mut rb = http.request(req.0.clone(), format!("{base}{}", req.1));
    if let Some(t) = token {
        rb = rb.bearer_auth(t);
    }
    if let Some(b) = &req.2 {
        rb = rb.header("content-type", "application/json").body(b.to_string());
    }
    rb.send().unwrap().status().as_u16()
}

/// Everything the owner can observe about their tenant.
fn snapshot(srv: &TestServer, t: &Tenant) -> String {
    let c = srv.client(&t.token);
    let detail = c.log(&t.log).unwrap();
    let page = c.list_logs(&t.project, &Window::default()).unwrap();
    let dets = c.detectors(&t.project).unwrap();
    let image = c.image(&t.log).unwrap();
    let hm = c.heatmap(&t.log, "gradcam").unwrap();
    let projects = c.list_projects().unwrap();
    serde_json::to_string(&json!({
        "detail": detail, "page": page, "dets": dets, "image": b64(&image), "hm": b64(&hm),
        "projects": projects, "me": c.whoami().unwrap(),
    }))
    .unwrap()
}

/// Runs the two-user matrix against a fresh server and returns the number of
/// rejected cells checked.
pub fn two_user_matrix() -> usize {
    let srv = TestServer::start();
    let a = seed_tenant(&srv, "alice", 1);
    let b = seed_tenant(&srv, "bob", 2);
    let revoked = srv.token("alice");
    obz::storage::Storage::open_dir(&srv.root).unwrap().revoke_token(&revoked).unwrap();
    let before = (snapshot(&srv, &a), snapshot(&srv, &b));
    let http = Http::new();

    let mut cells = 0;
    for (attacker, victim) in [(&b, &a), (&a, &b)] {
        for req in requests(victim) {
            let s = send(&http, &srv.url, Some(&attacker.token), &req);
            assert!(s == 403 || s == 404, "{} {} as other user -> {s}", req.0, req.1);
            for tok in [None, Some("obz_not_a_token"), Some(revoked.as_str())] {
                let s = send(&http, &srv.url, tok, &req);
                assert_eq!(s, 401, "{} {} with {tok:?}", req.0, req.1);
            }
            cells += 4;
        }
    }
    assert_eq!(cells, 2 * 14 * 4);

    // project listings never leak the other tenant
    let la = srv.client(&a.token).list_projects().unwrap();
    assert!(la.iter().all(|p| p.owner_user_id == "alice") && la.len() == 1);
    let lb = srv.client(&b.token).list_projects().unwrap();
    assert!(lb.iter().all(|p| p.owner_user_id == "bob") && lb.len() == 1);

    assert_eq!((snapshot(&srv, &a), snapshot(&srv, &b)), before, "state changed by a rejected request");

    // positive control: owners reach their own read routes
    for t in [&a, &b] {
        for req in requests(t).into_iter().filter(|r| r.0 == Method::GET) {
            let s = send(&http, &srv.url, Some(&t.token), &req);
            assert!((200..300).contains(&s), "{} {} as owner -> {s}", req.0, req.1);
        }
    }
    cells
}
