//! Blocking TCP plumbing for the frame protocol. A data host serves one
//! coordinator connection at a time; the coordinator keeps one long-lived
//! connection per host and serves query clients on its own listener.

use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream, ToSocketAddrs};

use crate::error::{Error, Result};
use crate::value::HostId;

use super::host::HostNode;
use super::wire::{error_frame, Frame, FrameBody};
use super::{Federation, Transport};

/// Coordinator-side transport: one socket per peer, connected on first use
/// and kept open. `peers[i]` is the address of host `i`.
pub struct TcpTransport {
    peers: Vec<String>,
    conns: Vec<Option<TcpStream>>,
}

impl TcpTransport {
    pub fn new(peers: Vec<String>) -> TcpTransport {
        let conns = peers.iter().map(|_| None).collect();
        TcpTransport { peers, conns }
    }

    fn conn(&mut self, host: HostId) -> Result<&mut TcpStream> {
        let i = host as usize;
        if i >= self.peers.len() {
            return Err(Error::TransportError(format!("no host {host}")));
        }
        if self.conns[i].is_none() {
            let stream = TcpStream::connect(&self.peers[i]).map_err(|e| {
                Error::TransportError(format!("connect to {}: {e}", self.peers[i]))
            })?;
            stream.set_nodelay(true).ok();
            self.conns[i] = Some(stream);
        }
        Ok(self.conns[i].as_mut().expect("just connected"))
    }
}

impl Transport for TcpTransport {
    fn hosts(&self) -> u32 {
        self.peers.len() as u32
    }

    fn round_trip(&mut self, host: HostId, frame: Frame) -> Result<Frame> {
        {
            let stream = self.conn(host)?;
            match frame.write_to(stream).and_then(|()| Frame::read_from(stream)) {
                Ok(reply) => return Ok(reply),
                // reconnect once, for the idle-drop case
                Err(e) if is_disconnect(&e) => {}
                Err(e) => return Err(e),
            }
        }
        self.conns[host as usize] = None;
        let stream = self.conn(host)?;
        frame.write_to(stream)?;
        Frame::read_from(stream)
    }
}

fn is_disconnect(err: &Error) -> bool {
    matches!(err, Error::Io(e) if matches!(e.kind(), ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset | ErrorKind::BrokenPipe))
}

/// Serves one data host forever: accepts a connection, answers its frames
/// until it closes, then accepts the next.
pub fn serve_host(node: &mut HostNode, listener: &TcpListener) -> Result<()> {
    loop {
        let (mut stream, _) = listener.accept()?;
        stream.set_nodelay(true).ok();
        loop {
            let frame = match Frame::read_from(&mut stream) {
                Ok(f) => f,
                Err(e) if is_disconnect(&e) => break,
                Err(e) => return Err(e),
            };
            node.handle(frame).write_to(&mut stream)?;
        }
    }
}

/// Serves query clients on `listener`: every `SubmitQuery` frame runs one
/// query against the federation and is answered with its outcome.
pub fn serve_coordinator<T: Transport>(
    fed: &mut Federation<T>,
    listener: &TcpListener,
) -> Result<()> {
    loop {
        let (mut stream, _) = listener.accept()?;
        stream.set_nodelay(true).ok();
        loop {
            let frame = match Frame::read_from(&mut stream) {
                Ok(f) => f,
                Err(e) if is_disconnect(&e) => break,
                Err(e) => return Err(e),
            };
            let qid = frame.qid;
            let reply = match frame.body {
                FrameBody::SubmitQuery { sql, mode, k } => match fed.submit(&sql, mode, k) {
                    Ok(outcome) => Frame::new(qid, false, FrameBody::QueryResult(outcome)),
                    Err(e) => error_frame(qid, &e),
                },
                _ => error_frame(
                    qid,
                    &Error::TransportError("coordinator accepts query submissions only".into()),
                ),
            };
            reply.write_to(&mut stream)?;
        }
    }
}

/// A query client talking to a serving coordinator.
pub struct Client {
    stream: TcpStream,
    next_qid: u64,
}

impl Client {
    pub fn connect<A: ToSocketAddrs + std::fmt::Display>(addr: A) -> Result<Client> {
        let stream = TcpStream::connect(&addr)
            .map_err(|e| Error::TransportError(format!("connect to {addr}: {e}")))?;
        stream.set_nodelay(true).ok();
        Ok(Client { stream, next_qid: 0 })
    }

    pub fn submit(
        &mut self,
        sql: &str,
        mode: crate::executor::Mode,
        k: u64,
    ) -> Result<super::wire::QueryOutcome> {
        self.next_qid += 1;
        let frame = Frame::new(
            self.next_qid,
            false,
            FrameBody::SubmitQuery { sql: sql.to_string(), mode, k },
        );
        frame.write_to(&mut self.stream)?;
        let reply = Frame::read_from(&mut self.stream)?.into_result()?;
        match reply.body {
            FrameBody::QueryResult(outcome) => Ok(outcome),
            _ => Err(Error::TransportError("submission answered with a non-result".into())),
        }
    }
}
