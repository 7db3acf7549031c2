//! Binary encoding of [`GmmBelief`], the only message exchanged between
//! sensor nodes.
//!
//! Layout, little-endian: `u32` body length, then the body: `u32` sensor,
//! `f64` time, `u16` component count, and per component `u32` track id,
//! `f64` weight, four `f64` mean (x, y, vx, vy), three `f64` for the upper
//! triangle of the position covariance and three for the velocity block.

use alloc::vec::Vec;

use glam::{DMat2, DVec2};
use thiserror::Error;

use super::gmm::{BlockCovariance, GmmBelief, GmmComponent};
use super::{SensorId, TrackId};

const HEADER: usize = 4 + 8 + 2;
const COMPONENT: usize = 4 + 8 * 11;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("message truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("declared length {declared} does not match body of {actual} bytes")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("{0} components do not fit in one message")]
    TooManyComponents(usize),
}

pub fn encoded_len(belief: &GmmBelief) -> usize {
    4 + HEADER + COMPONENT * belief.components.len()
}

pub fn encode(belief: &GmmBelief) -> Result<Vec<u8>, WireError> {
    let n = belief.components.len();
    let count = u16::try_from(n).map_err(|_| WireError::TooManyComponents(n))?;
    let mut out = Vec::with_capacity(encoded_len(belief));
    out.extend_from_slice(&((HEADER + COMPONENT * n) as u32).to_le_bytes());
    out.extend_from_slice(&belief.sensor.0.to_le_bytes());
    out.extend_from_slice(&belief.time.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for c in &belief.components {
        out.extend_from_slice(&c.track.0.to_le_bytes());
        let p = &c.covariance.position;
        let v = &c.covariance.velocity;
        for x in [
            c.weight,
            c.position.x,
            c.position.y,
            c.velocity.x,
            c.velocity.y,
            p.x_axis.x,
            p.y_axis.x,
            p.y_axis.y,
            v.x_axis.x,
            v.y_axis.x,
            v.y_axis.y,
        ] {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let mut b = [0; N];
        b.copy_from_slice(&self.buf[self.at..self.at + N]);
        self.at += N;
        b
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

/// Decodes one message. Structural problems are errors; the numbers
/// themselves are not checked, use [`GmmBelief::validate`] for that.
pub fn decode(bytes: &[u8]) -> Result<GmmBelief, WireError> {
    if bytes.len() < 4 + HEADER {
        return Err(WireError::Truncated { needed: 4 + HEADER, available: bytes.len() });
    }
    let declared = u32::from_le_bytes(bytes[..4].try_into().unwrap_or([0; 4])) as usize;
    let body = &bytes[4..];
    if declared != body.len() {
        if declared > body.len() {
            return Err(WireError::Truncated { needed: 4 + declared, available: bytes.len() });
        }
        return Err(WireError::LengthMismatch { declared, actual: body.len() });
    }
    let mut r = Reader { buf: body, at: 0 };
    let sensor = SensorId(u32::from_le_bytes(r.take()));
    let time = r.f64();
    let count = u16::from_le_bytes(r.take()) as usize;
    let expected = HEADER + COMPONENT * count;
    if expected != body.len() {
        return Err(WireError::LengthMismatch { declared: expected, actual: body.len() });
    }
    let mut components = Vec::with_capacity(count);
    for _ in 0..count {
        let track = TrackId(u32::from_le_bytes(r.take()));
        let weight = r.f64();
        let position = DVec2::new(r.f64(), r.f64());
        let velocity = DVec2::new(r.f64(), r.f64());
        let sym = |r: &mut Reader| {
            let (xx, xy, yy) = (r.f64(), r.f64(), r.f64());
            DMat2::from_cols(DVec2::new(xx, xy), DVec2::new(xy, yy))
        };
        let pos_cov = sym(&mut r);
        let vel_cov = sym(&mut r);
        components.push(GmmComponent {
            track,
            weight,
            position,
            velocity,
            covariance: BlockCovariance { position: pos_cov, velocity: vel_cov },
        });
    }
    Ok(GmmBelief { sensor, time, components })
}
