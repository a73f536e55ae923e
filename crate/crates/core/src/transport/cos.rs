use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

use super::config::CosConfig;
use super::frame::{read_frame, write_frame, Frame, FrameBody, FrameError};
use super::gateway;
use super::hub::Hub;

/// A running controller service.
pub struct CosHandle {
    pub addr: SocketAddr,
    pub gateway_addr: Option<SocketAddr>,
    pub hub: Arc<Hub>,
    tasks: Vec<JoinHandle<()>>,
}

impl CosHandle {
    pub fn shutdown(self) {
        for t in self.tasks {
            t.abort();
        }
    }

    /// Waits until every task of the service has stopped.
    pub async fn join(self) {
        for t in self.tasks {
            let _ = t.await;
        }
    }
}

/// Starts the controller service and, if configured, the manager gateway.
pub async fn serve_cos(cfg: &CosConfig) -> anyhow::Result<CosHandle> {
    let hub = Hub::from_config(cfg)?;
    let listener = TcpListener::bind(&cfg.listen).await?;
    let addr = listener.local_addr()?;
    let mut tasks = vec![tokio::spawn(accept_loop(hub.clone(), listener))];
    let ticker = hub.clone();
    tasks.push(tokio::spawn(async move {
        let mut every = tokio::time::interval(Duration::from_millis(50));
        loop {
            every.tick().await;
            ticker.pump();
        }
    }));
    let mut gateway_addr = None;
    if let Some(g) = &cfg.gateway {
        let l = TcpListener::bind(g).await?;
        gateway_addr = Some(l.local_addr()?);
        let app = gateway::router(hub.clone(), cfg);
        tasks.push(tokio::spawn(async move {
            if let Err(e) = axum::serve(l, app).await {
                eprintln!("gateway stopped: {e}");
            }
        }));
    }
    Ok(CosHandle { addr, gateway_addr, hub, tasks })
}

async fn accept_loop(hub: Arc<Hub>, listener: TcpListener) {
    loop {
        match listener.accept().await {
            Ok((stream, _)) => {
                tokio::spawn(connection(hub.clone(), stream));
            }
            Err(e) => {
                eprintln!("accept failed: {e}");
                tokio::time::sleep(Duration::from_millis(50)).await;
            }
        }
    }
}

async fn connection(hub: Arc<Hub>, stream: TcpStream) {
    let (mut rd, mut wr) = stream.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Frame>();
    let writer = tokio::spawn(async move {
        while let Some(f) = rx.recv().await {
            if write_frame(&mut wr, &f).await.is_err() {
                break;
            }
        }
    });
    let mut mine = Vec::new();
    loop {
        let frame = match read_frame(&mut rd).await {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(FrameError::Io(_)) => break,
            Err(e) => {
                let _ = tx.send(Frame::error(e.to_string()));
                if e.is_fatal() {
                    break;
                }
                continue;
            }
        };
        let reply = match frame.body {
            FrameBody::Adopt { cert, law, pool } => match hub.adopt(&cert, &law, pool, Some(tx.clone())) {
                Ok(id) => {
                    mine.push(id.clone());
                    Frame::ack(Some(id), None)
                }
                Err(e) => Frame::error(format!("adoption refused: {e}")),
            },
            FrameBody::Send { from, to, payload } => {
                if !mine.contains(&from) {
                    Frame::error("unknown agent")
                } else {
                    match hub.send(&from, &to, payload) {
                        Ok(step) => Frame::ack(Some(from), Some(step.forwarded)),
                        Err(e) => Frame::error(e.to_string()),
                    }
                }
            }
            FrameBody::Envelope(env) => {
                hub.inject(env);
                Frame::ack(None, None)
            }
            _ => Frame::error("unexpected frame kind from client"),
        };
        if tx.send(reply).is_err() {
            break;
        }
    }
    hub.forget_routes(&mine);
    drop(tx);
    let _ = writer.await;
}
