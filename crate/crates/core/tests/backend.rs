use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use autocomp_core::backend::{
    call_backend, Backend, BackendError, BackendRequest, BackendResponse, BackendResult, CachedBackend, Capability,
    DetectPayload, EmbedPayload, Fixture, FixtureResponse, HttpBackend, HttpConfig, ImageGenPayload, ImageRef,
    MockBackend, MockMode, MockScript, Payload, TextGenPayload, VqaPayload, PROTOCOL_VERSION,
};
use autocomp_core::evaluator::{embed_scores, Trial, ScoreKey};
use autocomp_core::dataset::ImageEntry;
use autocomp_core::negatives::Scheme;
use autocomp_core::raster::{encode_png, RasterSpec};
use autocomp_core::validation::{BBox, Detection};
use autocomp_core::{sha256_hex, TaskKind, Track};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use proptest::prelude::*;
use serde_json::{json, Value};

fn text_gen() -> impl Strategy<Value = Payload> {
    (".{0,40}", ".{0,80}", 0.0..2.0f64, 0.0..1.0f64, 1u32..512, any::<u64>()).prop_map(
        |(system, prompt, temperature, top_p, max_new_tokens, seed)| {
            Payload::TextGen(TextGenPayload { system, prompt, temperature, top_p, max_new_tokens, seed })
        },
    )
}

fn image_ref() -> impl Strategy<Value = ImageRef> {
    ("[0-9a-f]{64}", "[a-z/]{1,20}\\.png").prop_map(|(sha256, path)| ImageRef { sha256, path })
}

fn payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        text_gen(),
        (".{0,60}", 1u32..2048, 1u32..2048, 1u32..100, 0.0..20.0f64, any::<u64>()).prop_map(
            |(prompt, width, height, steps, guidance, seed)| {
                Payload::ImageGen(ImageGenPayload { prompt, width, height, steps, guidance, seed })
            }
        ),
        (image_ref(), prop::collection::vec("[a-z ]{1,12}", 0..4), 0.0..1.0f64, 0.0..1.0f64).prop_map(
            |(image, labels, box_threshold, text_threshold)| {
                Payload::Detect(DetectPayload { image, labels, box_threshold, text_threshold })
            }
        ),
        (image_ref(), ".{0,40}", prop::collection::vec("[a-z]{1,8}", 0..5)).prop_map(
            |(image, question, allowed_answers)| Payload::Vqa(VqaPayload { image, question, allowed_answers })
        ),
        (prop::collection::vec(".{0,30}", 0..4), prop::option::of(image_ref()))
            .prop_map(|(texts, image)| Payload::Embed(EmbedPayload { texts, image })),
    ]
}

fn result() -> impl Strategy<Value = BackendResult> {
    let bbox = (0.0..0.5f64, 0.0..0.5f64, 0.5..1.0f64, 0.5..1.0f64).prop_map(|(x0, y0, x1, y1)| BBox { x0, y0, x1, y1 });
    let detection = ("[a-z]{1,8}", 0.0..1.0f64, bbox, prop::option::of(image_ref()))
        .prop_map(|(label, score, bbox, mask)| Detection { label, score, bbox, mask });
    prop_oneof![
        ".{0,60}".prop_map(|text| BackendResult::Text { text }),
        image_ref().prop_map(|image| BackendResult::Image { image }),
        prop::collection::vec(detection, 0..4).prop_map(|detections| BackendResult::Detections { detections }),
        "[a-z]{0,8}".prop_map(|answer| BackendResult::Answer { answer }),
        (
            prop::collection::vec(prop::collection::vec(-1.0e3f32..1.0e3, 0..6), 0..4),
            prop::option::of(prop::collection::vec(-1.0e3f32..1.0e3, 0..6))
        )
            .prop_map(|(text_vectors, image_vector)| BackendResult::Vectors { text_vectors, image_vector }),
    ]
}

proptest! {
    #[test]
    fn requests_round_trip(payload in payload()) {
        let req = BackendRequest::new(payload);
        let text = serde_json::to_string(&req).unwrap();
        let back: BackendRequest = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &req);
        prop_assert_eq!(BackendRequest::new(back.payload.clone()).request_id, req.request_id);
    }

    #[test]
    fn responses_round_trip(result in result(), latency_ms in any::<u64>(), id in "[0-9a-f]{64}") {
        let resp = BackendResponse { request_id: id, model_id: "m".into(), latency_ms, result };
        let text = serde_json::to_string(&resp).unwrap();
        let back: BackendResponse = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, resp);
    }

    #[test]
    fn request_id_ignores_key_order(payload in payload()) {
        let value = serde_json::to_value(&payload).unwrap();
        let reordered: Value = serde_json::from_str(&reverse_keys(&value).to_string()).unwrap();
        let parsed: Payload = serde_json::from_value(reordered).unwrap();
        prop_assert_eq!(BackendRequest::new(parsed).request_id, BackendRequest::new(payload).request_id);
    }
}

fn reverse_keys(value: &Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut out = serde_json::Map::new();
            let mut entries: Vec<_> = map.iter().collect();
            entries.reverse();
            for (k, v) in entries {
                out.insert(k.clone(), reverse_keys(v));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.iter().map(reverse_keys).collect()),
        other => other.clone(),
    }
}

fn text_fixture(prompt: &str, reply: &str) -> Fixture {
    Fixture {
        capability: Capability::TextGen,
        request_id: None,
        contains: vec![prompt.into()],
        response: Some(FixtureResponse::Text { text: reply.into() }),
        error: None,
    }
}

#[test]
fn cache_hit_makes_no_remote_call() {
    let dir = tempfile::tempdir().unwrap();
    let script = MockScript {
        mode: MockMode::Keyed,
        model_id: "mock".into(),
        fixtures: vec![
            text_fixture("hello", "world"),
            Fixture {
                capability: Capability::ImageGen,
                request_id: None,
                contains: Vec::new(),
                response: Some(FixtureResponse::Raster { raster: RasterSpec::solid(8, 8, [255, 255, 255]) }),
                error: None,
            },
        ],
    };
    let mock = MockBackend::new(script, dir.path().join("mock-blobs"));
    let cached = CachedBackend::new(mock, dir.path().join("cache"));
    let text = BackendRequest::new(Payload::TextGen(TextGenPayload::new("sys", "hello", 1)));
    let image = BackendRequest::new(Payload::ImageGen(ImageGenPayload::new("a cube", 2)));

    let first = (call_backend(&cached, &text).unwrap(), call_backend(&cached, &image).unwrap());
    assert_eq!(cached.remote_calls(), 2);
    let second = (call_backend(&cached, &text).unwrap(), call_backend(&cached, &image).unwrap());
    assert_eq!(cached.remote_calls(), 2);
    assert_eq!((cached.hits(), cached.misses()), (2, 2));
    assert_eq!(first, second);
    assert!(dir.path().join("cache/text_gen").join(&text.request_id).is_file());
    assert!(dir.path().join("cache/text_gen").join(format!("{}.meta.json", text.request_id)).is_file());

    let BackendResult::Image { image: stored } = &second.1.result else { panic!("not an image") };
    assert!(stored.path.starts_with(dir.path().join("cache/blobs").to_str().unwrap()));
    let fresh = CachedBackend::new(MockBackend::new(MockScript { mode: MockMode::Keyed, model_id: "x".into(), fixtures: Vec::new() }, dir.path()), dir.path().join("cache"));
    assert_eq!(call_backend(&fresh, &text).unwrap(), first.0);
    assert_eq!(fresh.remote_calls(), 0);
}

#[test]
fn corrupt_cache_entry_is_refetched() {
    let dir = tempfile::tempdir().unwrap();
    let script = MockScript { mode: MockMode::Keyed, model_id: "mock".into(), fixtures: vec![text_fixture("hi", "there")] };
    let cached = CachedBackend::new(MockBackend::new(script, dir.path()), dir.path().join("cache"));
    let req = BackendRequest::new(Payload::TextGen(TextGenPayload::new("", "hi", 0)));
    call_backend(&cached, &req).unwrap();
    std::fs::write(dir.path().join("cache/text_gen").join(&req.request_id), "{not json").unwrap();
    assert_eq!(call_backend(&cached, &req).unwrap().text(), Some("there"));
    assert_eq!(cached.remote_calls(), 2);
}

#[test]
fn embed_scores_rank_by_cosine() {
    let dir = tempfile::tempdir().unwrap();
    let script = MockScript {
        mode: MockMode::Keyed,
        model_id: "clip".into(),
        fixtures: vec![Fixture {
            capability: Capability::Embed,
            request_id: None,
            contains: vec!["a red cube".into()],
            response: Some(FixtureResponse::Vectors {
                text_vectors: vec![vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, 1.0]],
                image_vector: Some(vec![2.0, 0.0]),
            }),
            error: None,
        }],
    };
    let mock = MockBackend::new(script, dir.path());
    let trial = Trial {
        trial_id: "c:minimal:swap".into(),
        key: ScoreKey { task: TaskKind::ColorBinding, n: 2, track: Track::Minimal, scheme: Scheme::Swap },
        relation: None,
        image: Some(ImageEntry { path: "images/minimal/c.png".into(), sha256: "ab".repeat(32), model_id: "m".into() }),
        candidate_ids: vec!["pos".into(), "neg:0".into(), "neg:1".into()],
        candidates: vec!["a red cube".into(), "a blue cube".into(), "a green cube".into()],
        arrangements: Vec::new(),
    };
    let mut imageless = trial.clone();
    imageless.image = None;
    let scores = embed_scores(&[trial, imageless], &mock).unwrap();
    assert_eq!(scores.len(), 1);
    let s = &scores[0].scores;
    assert!((s[0] - 1.0).abs() < 1e-6 && (s[1] - 0.6).abs() < 1e-6 && s[2].abs() < 1e-6, "{s:?}");
    assert_eq!(mock.calls(), 1);
}

/// A one-thread HTTP/1.1 server speaking the backend wire format.
struct FakeServer {
    url: String,
    requests: Arc<AtomicUsize>,
}

fn read_request(stream: &mut std::net::TcpStream) -> Option<(String, String, String)> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let mut length = 0usize;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).ok()?;
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((k, v)) = header.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body).ok()?;
    Some((method, path, String::from_utf8(body).ok()?))
}

fn respond(stream: &mut std::net::TcpStream, status: u16, body: &Value) {
    let text = body.to_string();
    let reply = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
    let _ = stream.write_all(reply.as_bytes());
}

fn start_server(png: Vec<u8>) -> FakeServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let counter = requests.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let Some((method, path, body)) = read_request(&mut stream) else { continue };
            counter.fetch_add(1, Ordering::SeqCst);
            if method == "GET" && path == "/healthz" {
                respond(&mut stream, 200, &json!({"protocol_version": PROTOCOL_VERSION, "models": {"text_gen": "echo"}}));
                continue;
            }
            let req: Value = serde_json::from_str(&body).unwrap_or(Value::Null);
            let id = req["request_id"].clone();
            match path.as_str() {
                "/v1/text" => {
                    let prompt = req["payload"]["prompt"].as_str().unwrap_or("").to_uppercase();
                    respond(&mut stream, 200, &json!({"request_id": id, "model_id": "echo", "latency_ms": 0,
                        "result": {"kind": "text", "text": prompt}}));
                }
                "/v1/image" => {
                    let sha = sha256_hex(&png);
                    respond(&mut stream, 200, &json!({"request_id": id, "model_id": "painter", "latency_ms": 5,
                        "result": {"kind": "image", "image": {"sha256": sha, "path": "remote.png"}},
                        "attachments": {sha.clone(): STANDARD.encode(&png)}}));
                }
                "/v1/vqa" => {
                    let attached = req["attachments"].as_object().map(|m| m.len()).unwrap_or(0);
                    respond(&mut stream, 200, &json!({"request_id": id, "model_id": "vqa", "latency_ms": 1,
                        "result": {"kind": "answer", "answer": format!("{attached}")}}));
                }
                "/v1/detect" => respond(&mut stream, 503, &json!({"code": "BackendUnavailable", "message": "loading"})),
                "/v1/embed" => respond(&mut stream, 422, &json!({"code": "BadInput", "message": "no texts"})),
                _ => respond(&mut stream, 404, &json!({})),
            }
        }
    });
    FakeServer { url, requests }
}

#[test]
fn http_backend_speaks_the_wire_format() {
    let dir = tempfile::tempdir().unwrap();
    let png = encode_png(&RasterSpec::solid(4, 4, [10, 20, 30]).render()).unwrap();
    let server = start_server(png.clone());
    let backend = HttpBackend::new(HttpConfig::new(format!("{}/", server.url), dir.path(), dir.path().join("blobs")));

    let health = backend.health().unwrap();
    assert_eq!(health.protocol_version, PROTOCOL_VERSION);
    assert_eq!(health.models["text_gen"], "echo");

    let text = call_backend(&backend, &BackendRequest::new(Payload::TextGen(TextGenPayload::new("s", "shout", 3)))).unwrap();
    assert_eq!(text.text(), Some("SHOUT"));

    let image = call_backend(&backend, &BackendRequest::new(Payload::ImageGen(ImageGenPayload::new("p", 1)))).unwrap();
    let BackendResult::Image { image } = image.result else { panic!("not an image") };
    assert_eq!(image.sha256, sha256_hex(&png));
    assert_eq!(std::fs::read(&image.path).unwrap(), png);

    std::fs::write(dir.path().join("local.png"), &png).unwrap();
    let local = ImageRef { sha256: sha256_hex(&png), path: "local.png".into() };
    let vqa = VqaPayload { image: local.clone(), question: "q?".into(), allowed_answers: vec!["yes".into()] };
    let answer = call_backend(&backend, &BackendRequest::new(Payload::Vqa(vqa))).unwrap();
    assert_eq!(answer.result, BackendResult::Answer { answer: "1".into() });

    let detect = BackendRequest::new(Payload::Detect(DetectPayload::new(local, vec!["cube".into()])));
    let err = call_backend(&backend, &detect).unwrap_err();
    assert!(err.is_unavailable(), "{err:?}");

    let embed = BackendRequest::new(Payload::Embed(EmbedPayload { texts: Vec::new(), image: None }));
    match call_backend(&backend, &embed).unwrap_err() {
        BackendError::Remote { code, .. } => assert_eq!(code, "BadInput"),
        other => panic!("{other:?}"),
    }
    assert_eq!(backend.remote_calls(), 5);
    assert_eq!(server.requests.load(Ordering::SeqCst), 6);
}

#[test]
fn unreachable_server_is_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let backend = HttpBackend::new(HttpConfig::new(format!("http://127.0.0.1:{port}"), dir.path(), dir.path()));
    assert!(backend.health().unwrap_err().is_unavailable());
    let req = BackendRequest::new(Payload::TextGen(TextGenPayload::new("", "x", 0)));
    assert!(call_backend(&backend, &req).unwrap_err().is_unavailable());
}
