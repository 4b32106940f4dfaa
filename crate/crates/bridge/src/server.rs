//! WebSocket front end.

use std::net::SocketAddr;

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;

use crate::protocol::{encode_server_message, parse_command, salvage_seq, Rejection, ServerMessage};
use crate::service::{spawn_session, ServiceOptions, SessionHandle};
use crate::session::Session;

/// Accepts WebSocket clients on `listener` until the task is cancelled.
pub async fn serve(listener: TcpListener, handle: SessionHandle) -> std::io::Result<()> {
    loop {
        let (stream, peer) = listener.accept().await?;
        let handle = handle.clone();
        tokio::spawn(async move {
            if let Err(e) = connection(stream, peer, handle).await {
                log::warn!("{peer}: {e}");
            }
        });
    }
}

/// Binds `addr`, starts the session loop and serves it.
pub async fn run_bridge(addr: SocketAddr, session: Session, options: ServiceOptions) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    log::info!("bridge listening on ws://{}", listener.local_addr()?);
    let (handle, _task) = spawn_session(session, options);
    serve(listener, handle).await
}

async fn connection(stream: TcpStream, peer: SocketAddr, handle: SessionHandle) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    log::info!("{peer}: connected");
    let (mut sink, mut source) = ws.split();
    let mut events = handle.subscribe();
    loop {
        tokio::select! {
            incoming = source.next() => {
                let Some(msg) = incoming else { break };
                let text = match msg? {
                    Message::Text(t) => t.to_string(),
                    Message::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
                    Message::Close(_) => break,
                    _ => continue,
                };
                let reply = match parse_command(&text) {
                    Ok((seq, command)) => match handle.request(seq, command).await {
                        Some((_, encoded)) => encoded,
                        None => break,
                    },
                    Err(e) => {
                        let state = handle.status().state;
                        let rejection = ServerMessage::Rejected(Rejection { command: None, state, reason: e.to_string() });
                        encode_server_message(salvage_seq(&text), &rejection)
                    }
                };
                sink.send(Message::text(reply)).await?;
            }
            event = events.next() => {
                let Some(text) = event else { break };
                sink.send(Message::text(text)).await?;
            }
        }
    }
    log::info!("{peer}: disconnected");
    Ok(())
}
