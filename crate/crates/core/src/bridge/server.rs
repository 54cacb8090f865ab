//! WebSocket transport: one thread per connection, all state in the [`Hub`].

use super::hub::Hub;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;
use tungstenite::{Message, WebSocket};

pub const DEFAULT_PORT: u16 = 8181;
const POLL: Duration = Duration::from_millis(2);

pub struct BridgeServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl BridgeServer {
    /// Binds `endpoint` (e.g. `127.0.0.1:8181`, port 0 for any) and starts
    /// accepting connections into `hub`.
    pub fn bind(endpoint: &str, hub: Arc<Hub>) -> io::Result<Self> {
        let listener = TcpListener::bind(endpoint)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let stop = shutdown.clone();
        let accept = thread::Builder::new()
            .name("bridge-accept".into())
            .spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    match listener.accept() {
                        Ok((stream, peer)) => {
                            let hub = hub.clone();
                            let stop = stop.clone();
                            let _ = thread::Builder::new()
                                .name(format!("bridge-{peer}"))
                                .spawn(move || {
                                    if let Err(e) = connection(stream, hub, stop) {
                                        tracing::debug!(%peer, error = %e, "connection closed");
                                    }
                                });
                        }
                        Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
                        Err(e) => {
                            tracing::warn!(error = %e, "accept failed");
                            thread::sleep(POLL);
                        }
                    }
                }
            })?;
        tracing::info!(%addr, "bridge listening");
        Ok(Self {
            addr,
            shutdown,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for BridgeServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn would_block(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut))
}

fn connection(stream: TcpStream, hub: Arc<Hub>, stop: Arc<AtomicBool>) -> Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    let conn = hub.connect();
    let result = pump(&mut ws, &hub, conn, &stop);
    hub.disconnect(conn);
    result
}

fn pump(ws: &mut WebSocket<TcpStream>, hub: &Hub, conn: u64, stop: &AtomicBool) -> Result<(), tungstenite::Error> {
    loop {
        if stop.load(Ordering::Relaxed) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        match ws.read() {
            Ok(Message::Text(t)) => hub.receive_text(conn, t.as_str()),
            Ok(Message::Binary(_)) => hub.reply(
                conn,
                super::Frame::error(None, "bad_frame", "unexpected binary message"),
            ),
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(e) if would_block(&e) => {}
            Err(tungstenite::Error::ConnectionClosed) => return Ok(()),
            Err(e) => return Err(e),
        }
        for o in hub.take_outgoing(conn) {
            ws.write(Message::Text(o.frame.encode().into()))?;
            if let Some(b) = o.binary {
                ws.write(Message::Binary(b.as_ref().clone().into()))?;
            }
        }
        match ws.flush() {
            Err(e) if !would_block(&e) => return Err(e),
            _ => {}
        }
    }
}
