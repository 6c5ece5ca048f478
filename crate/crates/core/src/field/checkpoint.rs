//! `NFW1` weight checkpoints.
//!
//! Layout (little endian): magic, `u32` input width, `u32` node count, then
//! per node its name, weight kind (`0` dense, `1` low rank), `u32` out, in
//! and rank, activation tag with an `f32` parameter, the source table, the
//! weights row-major as `f32` (`W`, or `U` then `V`) and the `f32` bias.
//! A head table of names and node indices follows, optionally trailed by
//! `TAG1` and a length-prefixed UTF-8 tag.

use std::path::Path;

use ndarray::{Array1, Array2};

use super::layer::{Activation, Node, Source, Weights};
use super::network::FieldNetwork;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NFW1";

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn put_f32s<'a>(out: &mut Vec<u8>, values: impl Iterator<Item = &'a f64>) {
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

pub const TAG_MAGIC: &[u8; 4] = b"TAG1";

pub fn encode(net: &FieldNetwork) -> Vec<u8> {
    encode_tagged(net, None)
}

/// [`encode`] with an optional trailing tag, e.g. a manifest hash.
pub fn encode_tagged(net: &FieldNetwork, tag: Option<&str>) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    put_u32(&mut out, net.input_dim);
    put_u32(&mut out, net.nodes.len());
    for n in &net.nodes {
        put_str(&mut out, &n.name);
        out.push(matches!(n.weights, Weights::LowRank { .. }) as u8);
        put_u32(&mut out, n.out_dim());
        put_u32(&mut out, n.in_dim());
        put_u32(&mut out, n.weights.rank().unwrap_or(0));
        let (tag, param) = match n.activation {
            Activation::Identity => (0u8, 0.0),
            Activation::Relu => (1, 0.0),
            Activation::Sigmoid => (2, 0.0),
            Activation::Sine { omega0 } => (3, omega0),
        };
        out.push(tag);
        out.extend_from_slice(&(param as f32).to_le_bytes());
        put_u32(&mut out, n.sources.len());
        for s in &n.sources {
            let (kind, a, b) = match *s {
                Source::Input { start, len } => (0u8, start, len),
                Source::Node { index } => (1, index, 0),
            };
            out.push(kind);
            put_u32(&mut out, a);
            put_u32(&mut out, b);
        }
        for m in n.weights.matrices() {
            put_f32s(&mut out, m.iter());
        }
        put_f32s(&mut out, n.bias.iter());
    }
    put_u32(&mut out, net.heads.len());
    for (name, idx) in &net.heads {
        put_str(&mut out, name);
        put_u32(&mut out, *idx);
    }
    if let Some(t) = tag {
        out.extend_from_slice(TAG_MAGIC);
        put_str(&mut out, t);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::data("truncated checkpoint"));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as f64)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::data("checkpoint name is not UTF-8"))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let v = (0..rows * cols).map(|_| self.f32()).collect::<Result<Vec<_>>>()?;
        Ok(Array2::from_shape_vec((rows, cols), v).expect("shape"))
    }
}

pub fn decode(bytes: &[u8]) -> Result<FieldNetwork> {
    Ok(decode_tagged(bytes)?.0)
}

pub fn decode_tagged(bytes: &[u8]) -> Result<(FieldNetwork, Option<String>)> {
    let mut r = Reader { bytes };
    if r.take(4)? != MAGIC {
        return Err(Error::data("not an NFW1 checkpoint"));
    }
    let mut net = FieldNetwork::new(r.u32()?);
    let count = r.u32()?;
    for _ in 0..count {
        let name = r.string()?;
        let low_rank = match r.u8()? {
            0 => false,
            1 => true,
            k => return Err(Error::data(format!("unknown weight kind {k}"))),
        };
        let (out, inp, rank) = (r.u32()?, r.u32()?, r.u32()?);
        let tag = r.u8()?;
        let param = r.f32()?;
        let activation = match tag {
            0 => Activation::Identity,
            1 => Activation::Relu,
            2 => Activation::Sigmoid,
            3 => Activation::Sine { omega0: param },
            k => return Err(Error::data(format!("unknown activation tag {k}"))),
        };
        let mut sources = Vec::new();
        for _ in 0..r.u32()? {
            let kind = r.u8()?;
            let (a, b) = (r.u32()?, r.u32()?);
            sources.push(match kind {
                0 => Source::Input { start: a, len: b },
                1 => Source::Node { index: a },
                k => return Err(Error::data(format!("unknown source kind {k}"))),
            });
        }
        let weights = if low_rank {
            let u = r.matrix(out, rank)?;
            let v = r.matrix(rank, inp)?;
            Weights::low_rank(u, v).map_err(|e| Error::data(e.to_string()))?
        } else {
            Weights::Dense(r.matrix(out, inp)?)
        };
        let bias = Array1::from_vec((0..out).map(|_| r.f32()).collect::<Result<Vec<_>>>()?);
        net.push(Node { name, weights, bias, activation, sources }).map_err(|e| Error::data(e.to_string()))?;
    }
    for _ in 0..r.u32()? {
        let name = r.string()?;
        let idx = r.u32()?;
        net.add_head(&name, idx).map_err(|e| Error::data(e.to_string()))?;
    }
    let mut tag = None;
    if r.bytes.starts_with(TAG_MAGIC) {
        r.take(4)?;
        tag = Some(r.string()?);
    }
    if !r.bytes.is_empty() {
        return Err(Error::data("trailing bytes after checkpoint"));
    }
    Ok((net, tag))
}

pub fn save(path: &Path, net: &FieldNetwork) -> Result<()> {
    crate::io::atomic_write(path, &encode(net))
}

pub fn load(path: &Path) -> Result<FieldNetwork> {
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::super::arch::Architecture;
    use super::*;
    use crate::rng;

    #[test]
    fn round_trip_is_exact_after_f32_rounding() {
        let net = Architecture::Nerf { width: 16, depth: 4, rank: Some(4), skip: 2 }
            .build(&[9, 6], &mut rng::stream(0, 0))
            .unwrap();
        let once = decode(&encode(&net)).unwrap();
        assert_eq!(once.nodes.len(), net.nodes.len());
        assert_eq!(once.heads, net.heads);
        for (a, b) in once.params().iter().zip(net.params()) {
            assert_eq!(*a, b as f32 as f64);
        }
        assert_eq!(decode(&encode(&once)).unwrap(), once);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let net = Architecture::ct_default().build(&[5], &mut rng::stream(0, 0)).unwrap();
        let bytes = encode(&net);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"NFW0").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
    }

    #[test]
    fn tag_round_trip() {
        let net = Architecture::ct_default().build(&[5], &mut rng::stream(0, 0)).unwrap();
        let (back, tag) = decode_tagged(&encode_tagged(&net, Some("abc"))).unwrap();
        assert_eq!(tag.as_deref(), Some("abc"));
        assert_eq!(back, decode(&encode(&net)).unwrap());
        assert_eq!(decode_tagged(&encode(&net)).unwrap().1, None);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.nfw");
        let net = Architecture::ct_default().build(&[5], &mut rng::stream(0, 0)).unwrap();
        save(&p, &net).unwrap();
        assert_eq!(load(&p).unwrap(), decode(&encode(&net)).unwrap());
    }
}
