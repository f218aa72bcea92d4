//! Length-prefixed frame protocol for out-of-process denoisers.
//!
//! Each frame is a `u32` little-endian payload length followed by the payload.
//! A request payload is the noise level as `f64` little-endian followed by a raw
//! tensor; the response payload is a raw tensor of the same shape. One request
//! is in flight per connection.

use std::io::{ErrorKind, Read, Write};
use std::net::TcpStream;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::{decode_raw, encode_raw};
use crate::scalar::Scalar;

use super::{Denoiser, DEFAULT_EPSILON};

pub const MAX_FRAME_LEN: usize = 1 << 30;

pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> Result<()> {
    if payload.len() > MAX_FRAME_LEN {
        return Err(Error::Protocol(format!(
            "frame of {} bytes exceeds limit",
            payload.len()
        )));
    }
    w.write_all(&(payload.len() as u32).to_le_bytes())?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream before the length prefix.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME_LEN {
        return Err(Error::Protocol(format!("frame length {len} exceeds limit")));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Protocol(format!("stream ended inside a {len}-byte frame")),
        _ => e.into(),
    })?;
    Ok(Some(payload))
}

/// Client side of the protocol over any byte stream.
#[derive(Debug)]
pub struct RemoteDenoiser<S> {
    stream: S,
    epsilon: f64,
}

impl RemoteDenoiser<TcpStream> {
    pub fn connect(endpoint: &str) -> Result<Self> {
        let stream = TcpStream::connect(endpoint)?;
        stream.set_nodelay(true)?;
        Ok(Self::new(stream))
    }
}

impl<S: Read + Write> RemoteDenoiser<S> {
    pub fn new(stream: S) -> Self {
        Self {
            stream,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}

impl<T: Scalar, S: Read + Write> Denoiser<T> for RemoteDenoiser<S> {
    fn epsilon(&self) -> T {
        T::of(self.epsilon)
    }

    fn denoise_above_epsilon(&mut self, x: &Image<T>, sigma: T) -> Result<Image<T>> {
        let tensor = encode_raw(x);
        let mut payload = Vec::with_capacity(8 + tensor.len());
        payload.extend_from_slice(&sigma.as_f64().to_le_bytes());
        payload.extend_from_slice(&tensor);
        write_frame(&mut self.stream, &payload)?;
        let response =
            read_frame(&mut self.stream)?.ok_or_else(|| Error::Protocol("connection closed before response".into()))?;
        let out: Image<T> = decode_raw(&response).map_err(|e| Error::Protocol(format!("bad response tensor: {e}")))?;
        if out.shape() != x.shape() {
            return Err(Error::Protocol(format!(
                "response shape {} differs from request {}",
                out.shape(),
                x.shape()
            )));
        }
        Ok(out)
    }
}

/// Answers requests on `stream` with `denoiser` until the peer closes it.
/// Returns the number of requests served.
pub fn serve_connection<S: Read + Write, D: Denoiser<f64>>(mut stream: S, denoiser: &mut D) -> Result<usize> {
    let mut served = 0;
    while let Some(payload) = read_frame(&mut stream)? {
        if payload.len() < 8 {
            return Err(Error::Protocol("request shorter than its noise level".into()));
        }
        let sigma = f64::from_le_bytes(payload[..8].try_into().unwrap());
        let x: Image<f64> = decode_raw(&payload[8..])?;
        let out = denoiser.denoise(&x, sigma)?;
        write_frame(&mut stream, &encode_raw(&out))?;
        served += 1;
    }
    Ok(served)
}
