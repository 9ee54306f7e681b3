use std::net::{TcpListener, TcpStream};
use std::time::Duration;

use super::wire::{read_message, write_message, Message, MessageKind, WireError};
use super::{check_seq, error_payload, CouplingError, Handshake, SubsurfaceSide};

struct Conn {
    stream: TcpStream,
    send_seq: u64,
    recv_seq: Option<u64>,
}

impl Conn {
    fn send(&mut self, kind: MessageKind, t: f64, payload: Vec<f64>) -> Result<(), WireError> {
        write_message(&mut self.stream, &Message::new(kind, self.send_seq, t, payload))?;
        self.send_seq += 1;
        Ok(())
    }

    fn recv(&mut self) -> Result<Message, CouplingError> {
        let msg = read_message(&mut self.stream)?;
        check_seq(&mut self.recv_seq, msg.seq)?;
        Ok(msg)
    }

    /// Reports `err` to the peer, best effort, and hands it back.
    fn fail(&mut self, t: f64, err: crate::Error) -> crate::Error {
        let _ = self.send(MessageKind::Error, t, error_payload(&err));
        err
    }
}

/// Binds `addr` and serves one surface peer until it halts.
pub fn serve_subsurface(addr: &str, side: &mut SubsurfaceSide, timeout: Duration) -> Result<usize, crate::Error> {
    let listener = TcpListener::bind(addr).map_err(|source| CouplingError::Io {
        context: format!("binding {addr}"),
        source,
    })?;
    serve_on(listener, side, timeout)
}

/// Accepts one connection on `listener` and answers its exchanges. Returns
/// the number of exchanges served. The side keeps its state on error, so
/// the caller can still write what it has.
pub fn serve_on(listener: TcpListener, side: &mut SubsurfaceSide, timeout: Duration) -> Result<usize, crate::Error> {
    let io = |context: &'static str| move |source| CouplingError::Io {
        context: context.into(),
        source,
    };
    let (stream, _) = listener.accept().map_err(io("accepting a peer"))?;
    stream.set_read_timeout(Some(timeout)).map_err(io("socket timeout"))?;
    stream.set_nodelay(true).map_err(io("socket option"))?;
    let mut conn = Conn {
        stream,
        send_seq: 0,
        recv_seq: None,
    };

    let hello = match conn.recv() {
        Ok(m) if m.kind == MessageKind::Hello => m,
        Ok(m) => {
            let e = CouplingError::Protocol(format!("expected HELLO, got {:?}", m.kind)).into();
            return Err(conn.fail(m.t, e));
        }
        Err(e) => return Err(conn.fail(0.0, e.into())),
    };
    let theirs = match Handshake::from_payload(&hello.payload) {
        Ok(h) => h,
        Err(e) => return Err(conn.fail(hello.t, e.into())),
    };
    let ours = side.handshake(theirs.want_h_filtr, theirs.schedule.clone());
    if let Err(e) = theirs.check(&ours).and_then(|_| side.set_schedule(&theirs.schedule)) {
        return Err(conn.fail(hello.t, e.into()));
    }
    conn.send(MessageKind::Hello, hello.t, ours.to_payload()).map_err(CouplingError::from)?;

    let mut served = 0;
    loop {
        let msg = match conn.recv() {
            Ok(m) => m,
            Err(e) => return Err(conn.fail(0.0, e.into())),
        };
        match msg.kind {
            MessageKind::SurfaceState => {
                let result = match side.advance(&msg.payload, theirs.want_h_filtr) {
                    Ok(r) => r,
                    Err(e) => return Err(conn.fail(msg.t, e)),
                };
                let mut payload = result.rates;
                if let Some(h) = result.h_filtr {
                    payload.extend(h);
                }
                conn.send(MessageKind::SubsurfaceResult, msg.t, payload).map_err(CouplingError::from)?;
                served += 1;
            }
            MessageKind::Halt => {
                conn.send(MessageKind::Halt, msg.t, Vec::new()).map_err(CouplingError::from)?;
                return Ok(served);
            }
            other => {
                let e = CouplingError::Protocol(format!("unexpected {other:?}")).into();
                return Err(conn.fail(msg.t, e));
            }
        }
    }
}

