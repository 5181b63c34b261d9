//! Serves the tracking scenario on a local port, connects as the driver,
//! drives the UGV forward for two seconds and prints what the console would
//! see.

use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use thirdview::harness::Scenario;
use thirdview_telemetry::{ClientMessage, Role, Server, ServerMessage, SimRunner};
use tokio_tungstenite::tungstenite::Message;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut scenario = Scenario::builtin("tracking")?;
    scenario.events.clear();
    let runner = SimRunner::start(&scenario, Box::new(std::io::sink()), 1.0)?;
    let server = Server::bind("127.0.0.1:0", runner.handle(), 20.0).await?;
    let url = format!("ws://{}", server.local_addr());
    tokio::spawn(server.run());

    let (mut ws, _) = tokio_tungstenite::connect_async(&url).await?;
    ws.send(Message::text(ClientMessage::Hello { role: Role::Driver }.to_text()))
        .await?;
    let drive = serde_json::json!({"type": "drive", "ugv": "ugv0", "linear": 0.3, "angular": 0.0});
    ws.send(Message::text(ClientMessage::Command(drive).to_text())).await?;

    let until = tokio::time::Instant::now() + Duration::from_secs(2);
    let mut snapshots = 0;
    while let Ok(Some(msg)) = tokio::time::timeout_at(until, ws.next()).await {
        let Message::Text(text) = msg? else { continue };
        match ServerMessage::parse(text.as_str())? {
            ServerMessage::Snapshot(s) => {
                snapshots += 1;
                if snapshots % 10 == 0 {
                    let u = &s.ugvs[0];
                    println!(
                        "t={:5.2} phase={:?} ugv=({:.2}, {:.2}) v={:.2}",
                        s.t, s.phase, u.truth.translation.x, u.truth.translation.y, u.linear
                    );
                }
            }
            other => println!("{other:?}"),
        }
    }
    println!("{snapshots} snapshots in 2 s");
    let metrics = runner.stop()?;
    println!("detections {} in {:.1} s", metrics.detections, metrics.duration);
    Ok(())
}
