//! Socket front end. One thread per connection; a connection that opens with
//! an HTTP `GET` is upgraded to WebSocket (one JSON message per text frame),
//! anything else is read as newline-delimited JSON.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use tungstenite::Message;

use super::protocol::{ErrorCode, ServerMessage};
use super::session::{ServiceContext, Session, SessionConfig};
use crate::error::{Error, Result};

pub struct Server {
    listener: TcpListener,
    ctx: Arc<ServiceContext>,
    cfg: SessionConfig,
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl Server {
    pub fn bind(addr: &str, ctx: Arc<ServiceContext>, cfg: SessionConfig) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        Ok(Self { listener, ctx, cfg })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts connections on the calling thread until the process exits.
    pub fn run(self) -> Result<()> {
        let stop = Arc::new(AtomicBool::new(false));
        self.accept_loop(&stop);
        Ok(())
    }

    pub fn spawn(self) -> Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let thread = thread::Builder::new()
            .name("hpeis-accept".into())
            .spawn(move || self.accept_loop(&flag))?;
        Ok(ServerHandle {
            addr,
            stop,
            thread: Some(thread),
        })
    }

    fn accept_loop(&self, stop: &AtomicBool) {
        for stream in self.listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let ctx = Arc::clone(&self.ctx);
            let cfg = self.cfg;
            let spawned = thread::Builder::new().name("hpeis-conn".into()).spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = serve_connection(stream, ctx, cfg) {
                    log::info!("connection {peer:?} closed: {e}");
                }
            });
            if let Err(e) = spawned {
                log::error!("could not spawn a connection thread: {e}");
            }
        }
    }
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting; open connections run until their clients disconnect.
    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.stop_accepting();
        }
    }
}

fn is_http(stream: &TcpStream) -> Result<bool> {
    let mut buf = [0u8; 4];
    for _ in 0..200 {
        let n = stream.peek(&mut buf)?;
        if n == 0 {
            return Ok(false);
        }
        if n == buf.len() || !b"GET ".starts_with(&buf[..n]) {
            return Ok(&buf[..n] == b"GET ");
        }
        thread::sleep(Duration::from_millis(5));
    }
    Ok(false)
}

pub fn serve_connection(stream: TcpStream, ctx: Arc<ServiceContext>, cfg: SessionConfig) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut session = Session::new(ctx, cfg);
    log::info!("session {} opened", session.id());
    if is_http(&stream)? {
        serve_websocket(stream, &mut session)
    } else {
        serve_lines(stream, &mut session)
    }
}

fn serve_lines(stream: TcpStream, session: &mut Session) -> Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        for msg in session.handle_line(&line) {
            serde_json::to_writer(&mut writer, &msg)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
    }
    Ok(())
}

fn serve_websocket(stream: TcpStream, session: &mut Session) -> Result<()> {
    let mut ws = tungstenite::accept(stream).map_err(|e| Error::Protocol(format!("websocket handshake: {e}")))?;
    let ws_err = |e: tungstenite::Error| Error::Protocol(e.to_string());
    loop {
        let replies = match ws.read() {
            Ok(Message::Text(text)) => session.handle_line(text.as_str()),
            Ok(Message::Binary(_)) => vec![ServerMessage::error(ErrorCode::ParseError, "binary frames are not accepted", None)],
            Ok(Message::Close(_)) => break,
            Ok(_) => continue,
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break,
            Err(e) => return Err(ws_err(e)),
        };
        for msg in replies {
            ws.write(Message::text(serde_json::to_string(&msg)?)).map_err(ws_err)?;
        }
        ws.flush().map_err(ws_err)?;
    }
    Ok(())
}
