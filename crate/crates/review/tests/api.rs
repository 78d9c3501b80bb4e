use std::collections::HashMap;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use curate_core::frame::FrameSource;
use curate_core::review::{create_study, ReviewStore, StudyKind};
use curate_core::{CaptionRecord, FilterVerdict, SourceDataset, Stage, VideoRecord};
use curate_review::{router, AppState, ServeOptions};

const SYNTH: &str = r#"synth:{"width":64,"height":36,"fps":4,"seed":1,"segments":[{"start_s":0,"end_s":12,"kind":"solid","color":[10,200,30]}]}"#;

fn curated(i: usize) -> VideoRecord {
    let id = format!("vid{i:03}");
    let mut r = VideoRecord::new(&id, SourceDataset::Webvid, SYNTH, 12.0 + (i % 18) as f64);
    r.original_caption = Some(format!("original caption {id}"));
    for stage in [Stage::Duration, Stage::Scenecut, Stage::Motion, Stage::Semantic] {
        r.record(FilterVerdict::pass(stage, Some(30.0), ""));
    }
    r.caption = Some(CaptionRecord {
        clip_captions: vec![],
        final_caption: format!("our caption {id}"),
        word_count: 3,
    });
    r.record(FilterVerdict::pass(Stage::Caption, None, ""));
    r
}

struct Harness {
    app: Router,
    dir: tempfile::TempDir,
}

impl Harness {
    fn new(pool: usize, studies: &[(StudyKind, usize, u64)]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let records: Vec<VideoRecord> = (0..pool).map(curated).collect();
        let mut store = ReviewStore::open(dir.path().join("review.jsonl")).unwrap();
        for &(kind, n, seed) in studies {
            store.add_tasks(create_study(&records, kind, n, seed).unwrap()).unwrap();
        }
        let state = AppState::new(store, &records, FrameSource::default());
        Self {
            app: router(Arc::new(state), &ServeOptions::default()),
            dir,
        }
    }

    async fn call(&self, req: Request<Body>) -> (StatusCode, Vec<u8>, axum::http::HeaderMap) {
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let headers = resp.headers().clone();
        let body = to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec();
        (status, body, headers)
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        let (s, body, _) = self.call(Request::get(uri).body(Body::empty()).unwrap()).await;
        (s, serde_json::from_slice(&body).unwrap_or(Value::Null))
    }

    async fn post(&self, body: Value) -> (StatusCode, Value) {
        let req = Request::post("/api/response")
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        let (s, body, _) = self.call(req).await;
        (s, serde_json::from_slice(&body).unwrap_or(Value::Null))
    }

    async fn next(&self, rater: &str, kind: &str) -> Option<Value> {
        let (s, v) = self.get(&format!("/api/task?rater={rater}&kind={kind}")).await;
        match s {
            StatusCode::OK => Some(v),
            StatusCode::NO_CONTENT => None,
            other => panic!("unexpected {other}: {v}"),
        }
    }

    fn store_events(&self) -> Vec<Value> {
        std::fs::read_to_string(self.dir.path().join("review.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }
}

#[tokio::test]
async fn task_query_validation() {
    let h = Harness::new(5, &[(StudyKind::LongTake, 5, 1)]);
    assert_eq!(h.get("/api/task?kind=long_take").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(h.get("/api/task?rater=r").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(h.get("/api/task?rater=r&kind=sharpness").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(h.get("/api/metrics?kind=long_take").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn submit_status_codes() {
    let h = Harness::new(5, &[(StudyKind::DynamicDegree, 3, 1)]);
    let task = h.next("r1", "dynamic_degree").await.unwrap();
    let id = task["task_id"].as_str().unwrap();
    assert_eq!(task["media_url"], format!("/media/{}", task["video_id"].as_str().unwrap()));

    let bad = h.post(json!({"task_id": id, "rater_id": "r1", "answer": 4})).await;
    assert_eq!(bad.0, StatusCode::BAD_REQUEST, "{}", bad.1);
    let wrong_type = h.post(json!({"task_id": id, "rater_id": "r1", "answer": true})).await;
    assert_eq!(wrong_type.0, StatusCode::BAD_REQUEST);
    let ok = h.post(json!({"task_id": id, "rater_id": "r1", "answer": 2})).await;
    assert_eq!(ok.0, StatusCode::OK);
    assert_eq!(ok.1["ok"], true);
    let dup = h.post(json!({"task_id": id, "rater_id": "r1", "answer": 3})).await;
    assert_eq!(dup.0, StatusCode::CONFLICT);
    let other_rater = h.post(json!({"task_id": id, "rater_id": "r2", "answer": 3})).await;
    assert_eq!(other_rater.0, StatusCode::OK);
    let missing = h.post(json!({"task_id": "nope", "rater_id": "r1", "answer": 1})).await;
    assert_eq!(missing.0, StatusCode::NOT_FOUND);

    let req = Request::post("/api/response")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    assert_eq!(h.call(req).await.0, StatusCode::BAD_REQUEST);

    let (s, m) = h.get("/api/metrics?kind=dynamic_degree").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(m["dynamic_degree"]["counts"], json!([0, 1, 1]));
    assert_eq!(m["dynamic_degree"]["mean"], 2.5);
}

#[tokio::test]
async fn rater_sees_each_task_once_then_no_content() {
    let h = Harness::new(10, &[(StudyKind::DynamicDegree, 10, 4)]);
    let mut seen = Vec::new();
    while let Some(task) = h.next("r", "dynamic_degree").await {
        let id = task["task_id"].as_str().unwrap().to_string();
        assert!(!seen.contains(&id));
        assert_eq!(h.post(json!({"task_id": id, "rater_id": "r", "answer": 3})).await.0, StatusCode::OK);
        seen.push(id);
    }
    assert_eq!(seen.len(), 10);
    let (_, m) = h.get("/api/metrics?kind=dynamic_degree").await;
    assert_eq!(m["dynamic_degree"]["mean"], 3.0);
    assert_eq!(m["dynamic_degree"]["distribution"], json!([0.0, 0.0, 1.0]));
}

#[tokio::test]
async fn long_take_study_replays_to_77_5_percent() {
    let h = Harness::new(60, &[(StudyKind::LongTake, 40, 7)]);
    let mut answered = 0;
    while let Some(task) = h.next("rater-1", "long_take").await {
        let yes = answered < 31;
        let (s, _) = h.post(json!({"task_id": task["task_id"], "rater_id": "rater-1", "answer": yes})).await;
        assert_eq!(s, StatusCode::OK);
        answered += 1;
    }
    assert_eq!(answered, 40);
    let (s, m) = h.get("/api/metrics?kind=long_take").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!((m["long_take"]["yes"].as_u64(), m["long_take"]["no"].as_u64()), (Some(31), Some(9)));
    let rate = m["long_take"]["rate"].as_f64().unwrap();
    assert_eq!(format!("{:.1}%", rate * 100.0), "77.5%");
}

#[tokio::test]
async fn caption_preference_matches_recount_for_three_seeds() {
    let mut rates = Vec::new();
    for seed in [11u64, 29, 404] {
        let h = Harness::new(25, &[(StudyKind::CaptionPref, 25, seed)]);
        // The simulated rater prefers our caption for every video whose number is not a multiple of 3,
        // judging only from the caption text it is shown.
        let mut choice = HashMap::new();
        while let Some(task) = h.next("r", "caption_pref").await {
            assert!(task.get("ours").is_none() && task.get("captions").is_none());
            let video = task["video_id"].as_str().unwrap();
            let n: usize = video[3..].parse().unwrap();
            let a_is_ours = task["caption_a"].as_str().unwrap().starts_with("our caption");
            let pick = if (n % 3 != 0) == a_is_ours { "A" } else { "B" };
            choice.insert(task["task_id"].as_str().unwrap().to_string(), pick);
            let (s, _) = h.post(json!({"task_id": task["task_id"], "rater_id": "r", "answer": pick})).await;
            assert_eq!(s, StatusCode::OK);
        }
        assert_eq!(choice.len(), 25);

        let events = h.store_events();
        let truth: HashMap<&str, &str> = events
            .iter()
            .filter(|e| e["event"] == "task")
            .map(|e| (e["task_id"].as_str().unwrap(), e["captions"]["ours"].as_str().unwrap()))
            .collect();
        let sides_a = truth.values().filter(|s| **s == "A").count();
        assert!(sides_a > 0 && sides_a < 25, "sides are randomized");
        let recount = events
            .iter()
            .filter(|e| e["event"] == "response")
            .filter(|e| truth[e["task_id"].as_str().unwrap()] == e["answer"].as_str().unwrap())
            .count();

        let (_, m) = h.get("/api/metrics?kind=caption_pref").await;
        assert_eq!(m["caption_pref"]["ours"].as_u64().unwrap() as usize, recount);
        let rate = m["caption_pref"]["rate"].as_f64().unwrap();
        assert_eq!(rate, recount as f64 / 25.0);
        rates.push(rate);
    }
    // 9 of vid000..vid024 are multiples of 3
    assert!(rates.iter().all(|&r| r == 16.0 / 25.0), "{rates:?}");
}

#[tokio::test]
async fn media_serves_png_grid() {
    let h = Harness::new(3, &[]);
    let (s, body, headers) = h.call(Request::get("/media/vid001").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(headers[header::CONTENT_TYPE], "image/png");
    assert_eq!(&body[..8], b"\x89PNG\r\n\x1a\n");
    let width = u32::from_be_bytes(body[16..20].try_into().unwrap());
    let height = u32::from_be_bytes(body[20..24].try_into().unwrap());
    assert_eq!((width, height), (192, 72));
    assert_eq!(h.get("/media/unknown").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn cors_preflight_is_answered() {
    let h = Harness::new(1, &[]);
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/api/response")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .header(header::ACCESS_CONTROL_REQUEST_HEADERS, "content-type")
        .body(Body::empty())
        .unwrap();
    let (s, _, headers) = h.call(req).await;
    assert!(s.is_success());
    assert_eq!(headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");
}

#[tokio::test]
async fn metrics_without_kind_lists_answered_studies() {
    let h = Harness::new(6, &[(StudyKind::LongTake, 3, 1), (StudyKind::DynamicDegree, 3, 1)]);
    let t = h.next("r", "long_take").await.unwrap();
    h.post(json!({"task_id": t["task_id"], "rater_id": "r", "answer": false})).await;
    let (s, m) = h.get("/api/metrics").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(m["long_take"]["long_take"]["rate"], 0.0);
    assert!(m.get("dynamic_degree").is_none());
}
