use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use thirdview::harness::Scenario;
use thirdview_telemetry::{ClientMessage, Role, Server, ServerMessage, SimRunner};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn start(rate: f64) -> (SimRunner, String) {
    let mut scenario = Scenario::builtin("tracking").unwrap();
    scenario.events.clear();
    let runner = SimRunner::start(&scenario, Box::new(std::io::sink()), 1.0).unwrap();
    let server = Server::bind("127.0.0.1:0", runner.handle(), rate).await.unwrap();
    let url = format!("ws://{}", server.local_addr());
    tokio::spawn(server.run());
    (runner, url)
}

async fn connect(url: &str) -> Client {
    let (ws, _) = tokio_tungstenite::connect_async(url).await.unwrap();
    ws
}

async fn recv(ws: &mut Client) -> ServerMessage {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next())
            .await
            .expect("no message within 5 s")
            .unwrap()
            .unwrap();
        if let Message::Text(t) = msg {
            return ServerMessage::parse(t.as_str()).unwrap();
        }
    }
}

/// Next message that is not a snapshot.
async fn reply(ws: &mut Client) -> ServerMessage {
    loop {
        match recv(ws).await {
            ServerMessage::Snapshot(_) => continue,
            other => return other,
        }
    }
}

async fn send(ws: &mut Client, msg: &ClientMessage) {
    ws.send(Message::text(msg.to_text())).await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn snapshots_arrive_at_the_configured_rate() {
    let (_runner, url) = start(20.0).await;
    let mut ws = connect(&url).await;
    assert!(matches!(
        recv(&mut ws).await,
        ServerMessage::Welcome { role: Role::Viewer, .. }
    ));
    // let the stream settle before counting
    while !matches!(recv(&mut ws).await, ServerMessage::Snapshot(_)) {}
    let window = Duration::from_secs(3);
    let start = tokio::time::Instant::now();
    let mut count = 0;
    let mut last_t = f64::NEG_INFINITY;
    while start.elapsed() < window {
        let Ok(msg) = tokio::time::timeout_at(start + window, recv(&mut ws)).await else {
            break;
        };
        if let ServerMessage::Snapshot(s) = msg {
            assert!(s.t > last_t, "snapshot time went backwards");
            last_t = s.t;
            count += 1;
        }
    }
    let rate = f64::from(count) / window.as_secs_f64();
    assert!((19.0..=21.0).contains(&rate), "{rate} snapshots/s");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn lower_rate_is_respected() {
    let (_runner, url) = start(5.0).await;
    let mut ws = connect(&url).await;
    recv(&mut ws).await;
    while !matches!(recv(&mut ws).await, ServerMessage::Snapshot(_)) {}
    let start = tokio::time::Instant::now();
    let mut count = 0;
    while start.elapsed() < Duration::from_secs(2) {
        if let ServerMessage::Snapshot(_) = recv(&mut ws).await {
            count += 1;
        }
    }
    assert!((9..=11).contains(&count), "{count} snapshots in 2 s");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn malformed_payload_keeps_the_session_open() {
    let (_runner, url) = start(20.0).await;
    let mut ws = connect(&url).await;
    recv(&mut ws).await;
    ws.send(Message::text("{not json")).await.unwrap();
    assert!(matches!(reply(&mut ws).await, ServerMessage::Error { .. }));
    send(&mut ws, &ClientMessage::Hello { role: Role::Driver }).await;
    assert_eq!(reply(&mut ws).await, ServerMessage::Role { role: Role::Driver });
    send(
        &mut ws,
        &ClientMessage::Command(serde_json::json!({"type": "transfer", "to": "ugv9"})),
    )
    .await;
    match reply(&mut ws).await {
        ServerMessage::Error { reason } => assert!(reason.contains("ugv9"), "{reason}"),
        other => panic!("expected rejection, got {other:?}"),
    }
    send(&mut ws, &ClientMessage::Ping).await;
    assert_eq!(reply(&mut ws).await, ServerMessage::Pong);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn drive_command_is_clamped_in_the_next_snapshots() {
    let (_runner, url) = start(20.0).await;
    let mut ws = connect(&url).await;
    recv(&mut ws).await;
    send(&mut ws, &ClientMessage::Hello { role: Role::Driver }).await;
    reply(&mut ws).await;
    send(
        &mut ws,
        &ClientMessage::Command(serde_json::json!({"type": "drive", "ugv": "ugv0", "linear": 5.0, "angular": 0.0})),
    )
    .await;
    assert_eq!(
        reply(&mut ws).await,
        ServerMessage::Ack {
            command: "drive".into()
        }
    );
    for _ in 0..20 {
        if let ServerMessage::Snapshot(s) = recv(&mut ws).await {
            if s.ugvs[0].linear != 0.0 {
                assert_eq!(s.ugvs[0].linear, 0.6);
                return;
            }
        }
    }
    panic!("drive never showed up in a snapshot");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn only_the_first_driver_may_command() {
    let (_runner, url) = start(20.0).await;
    let mut first = connect(&url).await;
    let mut second = connect(&url).await;
    recv(&mut first).await;
    recv(&mut second).await;
    send(&mut first, &ClientMessage::Hello { role: Role::Driver }).await;
    assert_eq!(reply(&mut first).await, ServerMessage::Role { role: Role::Driver });
    send(&mut second, &ClientMessage::Hello { role: Role::Driver }).await;
    assert_eq!(reply(&mut second).await, ServerMessage::Role { role: Role::Viewer });
    send(
        &mut second,
        &ClientMessage::Command(serde_json::json!({"type": "return_home"})),
    )
    .await;
    assert!(matches!(reply(&mut second).await, ServerMessage::Error { .. }));

    // the seat frees up when the driver leaves
    first.close(None).await.unwrap();
    drop(first);
    tokio::time::sleep(Duration::from_millis(200)).await;
    send(&mut second, &ClientMessage::Hello { role: Role::Driver }).await;
    assert_eq!(reply(&mut second).await, ServerMessage::Role { role: Role::Driver });
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn test_hooks_are_not_operator_commands() {
    let (_runner, url) = start(20.0).await;
    let mut ws = connect(&url).await;
    recv(&mut ws).await;
    send(&mut ws, &ClientMessage::Hello { role: Role::Driver }).await;
    reply(&mut ws).await;
    send(
        &mut ws,
        &ClientMessage::Command(serde_json::json!({"type": "inject_offset", "v": [1.0, 0.0, 0.0]})),
    )
    .await;
    assert!(matches!(reply(&mut ws).await, ServerMessage::Error { .. }));
}

#[test]
fn stopped_session_log_is_complete_and_replayable() {
    use thirdview::harness::sim::SharedBuffer;
    use thirdview::harness::{compute_metrics, read_log};

    let mut scenario = Scenario::builtin("tracking").unwrap();
    scenario.events.clear();
    let buf = SharedBuffer::default();
    let runner = SimRunner::start(&scenario, Box::new(buf.clone()), 20.0).unwrap();
    runner.handle().send(thirdview::command::Command::ReturnHome).unwrap();
    std::thread::sleep(Duration::from_millis(300));
    let live = runner.stop().unwrap();
    let records = read_log(std::io::Cursor::new(buf.take())).unwrap();
    assert_eq!(compute_metrics(&records).unwrap(), live);
    assert!(records.iter().any(|r| r.kind() == "command"));
}
