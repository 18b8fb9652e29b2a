//! Transports for the protocol: a TCP listener with one thread per
//! connection, and a stdio loop for subprocess embedding.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;

use crate::protocol::{ServerContext, Session};

/// Serves one line-oriented stream until EOF. Blank lines are skipped.
pub fn serve_stream<R: BufRead, W: Write>(ctx: Arc<ServerContext>, input: R, mut output: W) -> std::io::Result<()> {
    let mut session = Session::new(ctx);
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(output, "{}", session.handle_line(&line))?;
        output.flush()?;
    }
    session.finish();
    Ok(())
}

pub fn serve_stdio(ctx: Arc<ServerContext>) -> std::io::Result<()> {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    serve_stream(ctx, stdin.lock(), stdout.lock())
}

pub struct Server {
    listener: TcpListener,
    ctx: Arc<ServerContext>,
    stop: Arc<AtomicBool>,
}

/// Stops a running [`Server`] from another thread.
#[derive(Clone)]
pub struct ShutdownHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
}

impl ShutdownHandle {
    pub fn shutdown(&self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
    }
}

impl Server {
    pub fn bind(addr: &str, ctx: Arc<ServerContext>) -> std::io::Result<Self> {
        Ok(Self { listener: TcpListener::bind(addr)?, ctx, stop: Arc::new(AtomicBool::new(false)) })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn shutdown_handle(&self) -> std::io::Result<ShutdownHandle> {
        Ok(ShutdownHandle { addr: self.local_addr()?, stop: self.stop.clone() })
    }

    /// Accepts connections until shut down, then waits for open sessions to
    /// end so their episodes reach the log.
    pub fn run(self) -> std::io::Result<()> {
        let mut workers = Vec::new();
        for stream in self.listener.incoming() {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("accept failed: {e}");
                    continue;
                }
            };
            let ctx = self.ctx.clone();
            workers.push(thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                let reader = match stream.try_clone() {
                    Ok(r) => BufReader::new(r),
                    Err(e) => {
                        eprintln!("connection setup failed: {e}");
                        return;
                    }
                };
                if let Err(e) = serve_stream(ctx, reader, BufWriter::new(stream)) {
                    eprintln!("connection {peer:?} ended with error: {e}");
                }
            }));
            workers.retain(|w| !w.is_finished());
        }
        for w in workers {
            let _ = w.join();
        }
        Ok(())
    }
}
