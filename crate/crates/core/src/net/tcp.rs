//! Loopback TCP transport.
//!
//! Frame layout, all little-endian:
//! `[u32 length][u64 round][u16 sender][u16 receiver][u16 topic][payload]`
//! where `length` counts every byte after the length field.

use std::io::{BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};

use super::{Envelope, PartyId, Shared};
use crate::error::{Error, Result};

const HEADER: usize = 8 + 2 + 2 + 2;

pub(crate) struct TcpLinks {
    outbound: Vec<Option<Mutex<TcpStream>>>,
}

impl TcpLinks {
    pub(crate) fn send(&self, to: PartyId, env: &Envelope) -> Result<()> {
        let stream = self.outbound[to.index()]
            .as_ref()
            .ok_or_else(|| Error::Transport(format!("no link to {to}")))?;
        let frame = encode_frame(env);
        stream
            .lock()
            .expect("tcp link poisoned")
            .write_all(&frame)
            .map_err(|e| Error::Transport(format!("write to {to}: {e}")))
    }
}

impl Drop for TcpLinks {
    fn drop(&mut self) {
        for s in self.outbound.iter().flatten() {
            if let Ok(s) = s.lock() {
                let _ = s.shutdown(std::net::Shutdown::Both);
            }
        }
    }
}

pub fn encode_frame(env: &Envelope) -> Vec<u8> {
    let len = (HEADER + env.payload.len()) as u32;
    let mut out = Vec::with_capacity(4 + len as usize);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&env.round.to_le_bytes());
    out.extend_from_slice(&env.sender.0.to_le_bytes());
    out.extend_from_slice(&env.receiver.to_le_bytes());
    out.extend_from_slice(&env.topic.to_le_bytes());
    out.extend_from_slice(&env.payload);
    out
}

/// Reads one frame; `Ok(None)` on clean end of stream.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Envelope>> {
    let mut len_buf = [0u8; 4];
    match r.read_exact(&mut len_buf) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(Error::Transport(format!("read frame length: {e}"))),
    }
    let len = u32::from_le_bytes(len_buf) as usize;
    if len < HEADER {
        return Err(Error::Transport(format!("frame length {len} shorter than header")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| Error::Transport(format!("read frame body: {e}")))?;
    let round = u64::from_le_bytes(body[0..8].try_into().expect("8 bytes"));
    let sender = u16::from_le_bytes(body[8..10].try_into().expect("2 bytes"));
    let receiver = u16::from_le_bytes(body[10..12].try_into().expect("2 bytes"));
    let topic = u16::from_le_bytes(body[12..14].try_into().expect("2 bytes"));
    Ok(Some(Envelope { round, sender: PartyId(sender), receiver, topic, payload: body[HEADER..].to_vec() }))
}

pub(crate) fn connect_mesh(shared: &Arc<Shared>) -> Result<Vec<TcpLinks>> {
    let m = shared.parties;
    let listeners: Vec<TcpListener> = (0..m)
        .map(|_| TcpListener::bind("127.0.0.1:0").map_err(|e| Error::Transport(format!("bind: {e}"))))
        .collect::<Result<_>>()?;
    let addrs = listeners
        .iter()
        .map(|l| l.local_addr().map_err(|e| Error::Transport(format!("local_addr: {e}"))))
        .collect::<Result<Vec<_>>>()?;

    for (owner, listener) in listeners.into_iter().enumerate() {
        let shared = Arc::clone(shared);
        std::thread::spawn(move || {
            for _ in 0..m.saturating_sub(1) {
                let stream = match listener.accept() {
                    Ok((s, _)) => s,
                    Err(e) => {
                        shared.mailboxes[owner].fail(Error::Transport(format!("accept: {e}")));
                        return;
                    }
                };
                let shared = Arc::clone(&shared);
                std::thread::spawn(move || pump(stream, owner, &shared));
            }
        });
    }

    (0..m)
        .map(|i| {
            let outbound = (0..m)
                .map(|j| {
                    if i == j {
                        return Ok(None);
                    }
                    let s = TcpStream::connect(addrs[j])
                        .map_err(|e| Error::Transport(format!("connect p{i}->p{j}: {e}")))?;
                    s.set_nodelay(true).map_err(|e| Error::Transport(format!("nodelay: {e}")))?;
                    Ok(Some(Mutex::new(s)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TcpLinks { outbound })
        })
        .collect()
}

fn pump(stream: TcpStream, owner: usize, shared: &Shared) {
    let mut reader = BufReader::new(stream);
    loop {
        match read_frame(&mut reader) {
            Ok(Some(env)) => {
                if let Err(e) = shared.mailboxes[owner].deliver((env.round, env.sender.0, env.topic), env.payload) {
                    shared.mailboxes[owner].fail(e);
                }
            }
            Ok(None) => return,
            Err(e) => {
                // A reset after the peer dropped its link is a normal shutdown.
                if !matches!(&e, Error::Transport(msg) if msg.contains("reset")) {
                    shared.mailboxes[owner].fail(e);
                }
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_layout() {
        let env = Envelope { round: 3, sender: PartyId(1), receiver: 2, topic: 0x0102, payload: vec![9, 8] };
        let f = encode_frame(&env);
        assert_eq!(&f[0..4], &16u32.to_le_bytes());
        assert_eq!(&f[4..12], &3u64.to_le_bytes());
        assert_eq!(&f[12..14], &1u16.to_le_bytes());
        assert_eq!(&f[14..16], &2u16.to_le_bytes());
        assert_eq!(&f[16..18], &0x0102u16.to_le_bytes());
        assert_eq!(&f[18..], &[9, 8]);
        assert_eq!(read_frame(&mut f.as_slice()).unwrap(), Some(env));
        assert_eq!(read_frame(&mut [].as_slice()).unwrap(), None);
    }
}
