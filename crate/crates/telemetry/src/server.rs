//! WebSocket sessions: snapshot push plus command intake.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use thirdview::command::validate_command;
use tokio::net::{TcpListener, TcpStream, ToSocketAddrs};
use tokio::time::Instant;
use tokio_tungstenite::tungstenite::Message;

use crate::protocol::{ClientMessage, Role, ServerMessage};
use crate::runner::SimHandle;

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot bind: {0}")]
    Bind(std::io::Error),
    #[error("snapshot rate must be positive and finite, got {0}")]
    Rate(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Session id currently holding the driver seat.
type DriverSeat = Arc<Mutex<Option<u64>>>;

pub struct Server {
    listener: TcpListener,
    sim: SimHandle,
    rate: f64,
    driver: DriverSeat,
    next_id: AtomicU64,
}

impl Server {
    pub async fn bind(addr: impl ToSocketAddrs, sim: SimHandle, rate: f64) -> Result<Self, ServerError> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(ServerError::Rate(rate));
        }
        let listener = TcpListener::bind(addr).await.map_err(ServerError::Bind)?;
        Ok(Self {
            listener,
            sim,
            rate,
            driver: Arc::default(),
            next_id: AtomicU64::new(1),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    pub async fn run(self) -> Result<(), ServerError> {
        self.run_until(std::future::pending()).await
    }

    /// Accepts sessions until `shutdown` resolves.
    pub async fn run_until(self, shutdown: impl Future<Output = ()>) -> Result<(), ServerError> {
        tokio::pin!(shutdown);
        loop {
            tokio::select! {
                _ = &mut shutdown => return Ok(()),
                accepted = self.listener.accept() => {
                    let (stream, _) = accepted?;
                    let id = self.next_id.fetch_add(1, Ordering::Relaxed);
                    let session = Session {
                        id,
                        sim: self.sim.clone(),
                        rate: self.rate,
                        driver: self.driver.clone(),
                        role: Role::Viewer,
                    };
                    tokio::spawn(session.run(stream));
                }
            }
        }
    }
}

struct Session {
    id: u64,
    sim: SimHandle,
    rate: f64,
    driver: DriverSeat,
    role: Role,
}

impl Session {
    async fn run(mut self, stream: TcpStream) {
        let Ok(ws) = tokio_tungstenite::accept_async(stream).await else {
            return;
        };
        let (mut out, mut inbox) = ws.split();
        let welcome = ServerMessage::Welcome {
            role: self.role,
            robots: self.sim.robots().to_vec(),
            rate: self.rate,
        };
        if out.send(Message::text(welcome.to_text())).await.is_err() {
            return;
        }

        let period = Duration::from_secs_f64(1.0 / self.rate);
        let mut snapshots = self.sim.subscribe();
        // sends sit on a fixed grid so the average rate holds whatever the sim jitter
        let mut next_due = Instant::now();
        let mut sent_tick = None;
        let mut pending = false;
        loop {
            let reply = tokio::select! {
                changed = snapshots.changed() => {
                    if changed.is_err() {
                        break;
                    }
                    pending = true;
                    if Instant::now() >= next_due {
                        self.take_snapshot(&snapshots, &mut sent_tick, &mut next_due, period, &mut pending)
                    } else {
                        None
                    }
                }
                _ = tokio::time::sleep_until(next_due), if pending => {
                    self.take_snapshot(&snapshots, &mut sent_tick, &mut next_due, period, &mut pending)
                }
                msg = inbox.next() => match msg {
                    Some(Ok(Message::Text(text))) => Some(self.handle(text.as_str()).to_text().into()),
                    Some(Ok(Message::Binary(_))) => Some(
                        ServerMessage::Error { reason: "binary frames are not supported".into() }.to_text().into(),
                    ),
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => None,
                },
            };
            if let Some(text) = reply {
                if out.send(Message::Text(text)).await.is_err() {
                    break;
                }
            }
        }
        self.release();
    }

    fn take_snapshot(
        &self,
        snapshots: &tokio::sync::watch::Receiver<Option<Arc<crate::runner::Published>>>,
        sent_tick: &mut Option<u64>,
        next_due: &mut Instant,
        period: Duration,
        pending: &mut bool,
    ) -> Option<tokio_tungstenite::tungstenite::Utf8Bytes> {
        *pending = false;
        let latest = snapshots.borrow().clone()?;
        if *sent_tick == Some(latest.snapshot.tick) {
            return None;
        }
        *sent_tick = Some(latest.snapshot.tick);
        let now = Instant::now();
        *next_due += period;
        if *next_due + period < now {
            // fell behind; no burst to catch up
            *next_due = now;
        }
        Some(latest.text.as_ref().into())
    }

    fn handle(&mut self, text: &str) -> ServerMessage {
        let msg = match ClientMessage::parse(text) {
            Ok(m) => m,
            Err(e) => return ServerMessage::Error { reason: e.to_string() },
        };
        match msg {
            ClientMessage::Ping => ServerMessage::Pong,
            ClientMessage::Hello { role } => {
                self.role = self.claim(role);
                ServerMessage::Role { role: self.role }
            }
            ClientMessage::Command(raw) => {
                if self.role != Role::Driver {
                    return ServerMessage::Error {
                        reason: "read-only session; send hello with role driver".into(),
                    };
                }
                let robots = self.sim.robots();
                match validate_command(&raw, robots.iter().map(String::as_str)) {
                    Ok(cmd) => {
                        let kind = cmd.kind().to_string();
                        match self.sim.send(cmd) {
                            Ok(()) => ServerMessage::Ack { command: kind },
                            Err(e) => ServerMessage::Error { reason: e.to_string() },
                        }
                    }
                    Err(e) => ServerMessage::Error { reason: e.to_string() },
                }
            }
        }
    }

    /// First come holds the driver seat until it leaves or steps down.
    fn claim(&self, wanted: Role) -> Role {
        let mut seat = self.driver.lock().expect("driver seat poisoned");
        match wanted {
            Role::Driver => match *seat {
                None => {
                    *seat = Some(self.id);
                    Role::Driver
                }
                Some(id) if id == self.id => Role::Driver,
                Some(_) => Role::Viewer,
            },
            Role::Viewer => {
                if *seat == Some(self.id) {
                    *seat = None;
                }
                Role::Viewer
            }
        }
    }

    fn release(&self) {
        let mut seat = self.driver.lock().expect("driver seat poisoned");
        if *seat == Some(self.id) {
            *seat = None;
        }
    }
}
