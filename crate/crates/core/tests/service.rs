mod common;

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::Arc;

use hpeis::io::read_trial_log;
use hpeis::media::MediaSpace;
use hpeis::service::{ErrorCode, Server, ServerHandle, ServerMessage, ServiceContext, SessionConfig, TrialLog};
use hpeis::vae::{LatentCoord, ModelCheckpoint, DEFAULT_HIDDEN};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use tungstenite::Message;

fn start(log: Option<TrialLog>, media: Option<MediaSpace>) -> ServerHandle {
    let model = ModelCheckpoint::untrained(&DEFAULT_HIDDEN, 2);
    let targets = vec![LatentCoord::new(0.25, 0.75), LatentCoord::new(0.6, 0.4)];
    let ctx = Arc::new(ServiceContext::new(model, targets, media, log).unwrap());
    let cfg = SessionConfig {
        media_k: 2,
        ..SessionConfig::default()
    };
    Server::bind("127.0.0.1:0", ctx, cfg).unwrap().spawn().unwrap()
}

struct LineClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl LineClient {
    fn connect(server: &ServerHandle) -> Self {
        let writer = TcpStream::connect(server.local_addr()).unwrap();
        Self {
            reader: BufReader::new(writer.try_clone().unwrap()),
            writer,
        }
    }

    fn send_raw(&mut self, line: &str) {
        self.writer.write_all(line.as_bytes()).unwrap();
        self.writer.write_all(b"\n").unwrap();
    }

    fn send(&mut self, v: serde_json::Value) {
        self.send_raw(&v.to_string());
    }

    fn recv(&mut self) -> ServerMessage {
        let mut line = String::new();
        self.reader.read_line(&mut line).unwrap();
        serde_json::from_str(&line).unwrap()
    }
}

fn frame(seq: u64) -> serde_json::Value {
    let mut rng = ChaCha8Rng::seed_from_u64(seq);
    let landmarks: Vec<[f64; 3]> = common::random_landmarks(&mut rng).iter().map(|p| [p.x, p.y, p.z]).collect();
    json!({"type": "frame", "seq": seq, "t_ms": 33 * seq, "landmarks": landmarks})
}

#[test]
fn line_session_runs_a_trial_and_logs_it() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trials.jsonl");
    let server = start(Some(TrialLog::new(Box::new(File::create(&path).unwrap()))), None);
    let mut c = LineClient::connect(&server);

    c.send(json!({"type": "set_condition", "guidance": false, "stable": true, "smooth": false}));
    assert_eq!(
        c.recv(),
        ServerMessage::Condition {
            guidance: false,
            stable: true,
            smooth: false
        }
    );

    c.send(json!({"type": "start_trial"}));
    let ServerMessage::TrialStarted { trial, target } = c.recv() else { panic!("expected trial_started") };
    assert_eq!((trial, target), (0, LatentCoord::new(0.25, 0.75)));

    let mut last = None;
    for seq in 0..12 {
        c.send(frame(seq));
        let ServerMessage::State(s) = c.recv() else { panic!("expected state") };
        assert_eq!(s.seq, seq);
        assert!(s.guidance.is_none());
        assert_eq!(s.smooth, s.stable);
        last = Some(s.smooth);
    }

    c.send(json!({"type": "mark"}));
    let ServerMessage::TrialResult(r) = c.recv() else { panic!("expected trial_result") };
    assert_eq!(r.frames, 12);
    assert_eq!(r.completion_time_s, 12.0 / 30.0);
    assert_eq!(r.marked, last.unwrap());
    assert_eq!(r.final_distance, r.marked.distance(&target));
    assert_eq!(r.next_target, LatentCoord::new(0.6, 0.4));
    assert!(!r.conditions.guidance && r.conditions.stable && !r.conditions.smooth);

    drop(c);
    server.shutdown();
    let logged = read_trial_log(BufReader::new(File::open(&path).unwrap())).unwrap();
    assert_eq!(logged.len(), 1);
    assert_eq!(logged[0].marked, r.marked);
    assert_eq!(logged[0].target, target);
    assert_eq!(logged[0].completion_time_s, r.completion_time_s);
    assert_eq!(logged[0].frames.len(), 12);
}

#[test]
fn malformed_input_gets_an_error_and_the_connection_survives() {
    let server = start(None, None);
    let mut c = LineClient::connect(&server);
    c.send_raw("{not json");
    assert!(matches!(c.recv(), ServerMessage::Error { code: ErrorCode::ParseError, .. }));
    c.send(json!({"type": "frame", "seq": 3, "t_ms": 0, "landmarks": [[0.0, 0.0, 0.0]]}));
    assert!(matches!(
        c.recv(),
        ServerMessage::Error {
            code: ErrorCode::InvalidFrame,
            seq: Some(3),
            ..
        }
    ));
    c.send(json!({"type": "mark"}));
    assert!(matches!(c.recv(), ServerMessage::Error { code: ErrorCode::NoTrial, .. }));
    c.send(frame(4));
    assert!(matches!(c.recv(), ServerMessage::State(s) if s.seq == 4));
}

#[test]
fn guidance_and_media_ride_on_state_messages() {
    let media = MediaSpace::new(
        vec!["anger".into()],
        vec![
            ("a".into(), [0.0, 0.0], vec![0.1]),
            ("b".into(), [10.0, 10.0], vec![0.9]),
            ("c".into(), [5.0, 5.0], vec![0.5]),
        ],
    )
    .unwrap();
    let server = start(None, Some(media));
    let mut c = LineClient::connect(&server);
    c.send(json!({"type": "angles", "seq": 0, "angles": [0.2, 0.4, 0.3, 0.1, -0.3, 0.5, 0.2, 0.1]}));
    let ServerMessage::State(s) = c.recv() else { panic!("expected state") };
    let g = s.guidance.expect("guidance");
    assert_eq!(g.directional.len(), 4);
    assert_eq!(g.edge_anchors.len(), 8);
    let hits = s.media.expect("media");
    assert_eq!(hits.len(), 2);
    assert!(hits[0].distance <= hits[1].distance);
}

#[test]
fn websocket_clients_share_the_port() {
    let server = start(None, None);
    let url = format!("ws://{}/", server.local_addr());
    let (mut ws, _) = tungstenite::connect(url).unwrap();
    ws.send(Message::text(frame(1).to_string())).unwrap();
    let Message::Text(text) = ws.read().unwrap() else { panic!("expected text") };
    assert!(matches!(serde_json::from_str(text.as_str()).unwrap(), ServerMessage::State(s) if s.seq == 1));

    ws.send(Message::binary(vec![1u8, 2, 3])).unwrap();
    let Message::Text(text) = ws.read().unwrap() else { panic!("expected text") };
    assert!(matches!(
        serde_json::from_str(text.as_str()).unwrap(),
        ServerMessage::Error { code: ErrorCode::ParseError, .. }
    ));

    ws.send(Message::text(json!({"type": "start_trial", "target": [0.5, 0.5]}).to_string()))
        .unwrap();
    let Message::Text(text) = ws.read().unwrap() else { panic!("expected text") };
    assert!(matches!(
        serde_json::from_str(text.as_str()).unwrap(),
        ServerMessage::TrialStarted { trial: 0, .. }
    ));
    ws.close(None).unwrap();
}

#[test]
fn sessions_are_independent() {
    let server = start(None, None);
    let mut a = LineClient::connect(&server);
    let mut b = LineClient::connect(&server);
    a.send(json!({"type": "start_trial"}));
    assert!(matches!(a.recv(), ServerMessage::TrialStarted { .. }));
    b.send(json!({"type": "mark"}));
    assert!(matches!(b.recv(), ServerMessage::Error { code: ErrorCode::NoTrial, .. }));
}
