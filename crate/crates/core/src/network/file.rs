//! Model file: `magic | version u32 | payload length u64 | payload | sha256(payload)`.
//!
//! Payload, little endian: nine `u32` widths, map text, map fingerprint,
//! feature config, the four normalizer vectors, then the ten parameter
//! tensors in [`Params::slices`] order. Vectors are `u32` length + `f64`s.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use super::{Arch, Network, NetworkError, Params};
use crate::features::{FeatureConfig, Normalizer};
use crate::rules::MapDef;

pub const MODEL_MAGIC: &[u8; 8] = b"RGCNMODL";
pub const MODEL_VERSION: u32 = 1;

fn put_vec(buf: &mut Vec<u8>, v: &[f64]) {
    buf.write_u32::<LE>(v.len() as u32).unwrap();
    for &x in v {
        buf.write_f64::<LE>(x).unwrap();
    }
}

fn get_vec(r: &mut Cursor<&[u8]>, expect: Option<usize>) -> Result<Vec<f64>, NetworkError> {
    let n = r.read_u32::<LE>()? as usize;
    if let Some(e) = expect {
        if n != e {
            return Err(NetworkError::Malformed(format!("vector of length {n}, expected {e}")));
        }
    }
    let remaining = r.get_ref().len() - r.position() as usize;
    if n * 8 > remaining {
        return Err(NetworkError::Malformed("vector runs past the payload".into()));
    }
    (0..n).map(|_| r.read_f64::<LE>().map_err(NetworkError::from)).collect()
}

impl Network {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut p = Vec::new();
        let a = &self.arch;
        for d in [
            a.nodes,
            a.board_dim,
            a.global_dim,
            a.gcn1,
            a.gcn2,
            a.fc1,
            a.fc2,
            a.fc3,
            a.outputs,
        ] {
            p.write_u32::<LE>(d as u32).unwrap();
        }
        let text = self.map().to_text();
        p.write_u32::<LE>(text.len() as u32).unwrap();
        p.extend_from_slice(text.as_bytes());
        p.write_u64::<LE>(self.map().fingerprint()).unwrap();
        p.write_f64::<LE>(self.feature_config.defence_cap).unwrap();
        p.write_u32::<LE>(self.feature_config.card_cap).unwrap();
        let n = &self.normalizer;
        for v in [&n.global_mean, &n.global_std, &n.board_mean, &n.board_std] {
            put_vec(&mut p, v);
        }
        for s in self.params.slices() {
            put_vec(&mut p, s);
        }

        let mut out = Vec::with_capacity(p.len() + 52);
        out.extend_from_slice(MODEL_MAGIC);
        out.write_u32::<LE>(MODEL_VERSION).unwrap();
        out.write_u64::<LE>(p.len() as u64).unwrap();
        out.extend_from_slice(&p);
        out.extend_from_slice(&Sha256::digest(&p));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Network, NetworkError> {
        if bytes.len() < 8 || &bytes[..8] != MODEL_MAGIC {
            return Err(NetworkError::Magic);
        }
        let mut head = Cursor::new(&bytes[8..]);
        let version = head.read_u32::<LE>().map_err(|_| NetworkError::Checksum)?;
        if version != MODEL_VERSION {
            return Err(NetworkError::Version {
                found: version,
                expected: MODEL_VERSION,
            });
        }
        let len = head.read_u64::<LE>().map_err(|_| NetworkError::Checksum)? as usize;
        let body = &bytes[20..];
        if body.len() != len.saturating_add(32) {
            return Err(NetworkError::Checksum);
        }
        let (payload, digest) = body.split_at(len);
        if Sha256::digest(payload).as_slice() != digest {
            return Err(NetworkError::Checksum);
        }

        let mut r = Cursor::new(payload);
        let mut dims = [0usize; 9];
        for d in dims.iter_mut() {
            *d = r.read_u32::<LE>()? as usize;
        }
        let arch = Arch {
            nodes: dims[0],
            board_dim: dims[1],
            global_dim: dims[2],
            gcn1: dims[3],
            gcn2: dims[4],
            fc1: dims[5],
            fc2: dims[6],
            fc3: dims[7],
            outputs: dims[8],
        };
        let text_len = r.read_u32::<LE>()? as usize;
        let mut text = vec![0u8; text_len];
        r.read_exact(&mut text)?;
        let text = String::from_utf8(text).map_err(|e| NetworkError::Malformed(e.to_string()))?;
        let map = MapDef::parse(&text).map_err(|e| NetworkError::Malformed(e.to_string()))?;
        if r.read_u64::<LE>()? != map.fingerprint() {
            return Err(NetworkError::MapMismatch);
        }
        let feature_config = FeatureConfig {
            defence_cap: r.read_f64::<LE>()?,
            card_cap: r.read_u32::<LE>()?,
        };
        let normalizer = Normalizer {
            global_mean: get_vec(&mut r, Some(arch.global_dim))?,
            global_std: get_vec(&mut r, Some(arch.global_dim))?,
            board_mean: get_vec(&mut r, Some(arch.board_dim))?,
            board_std: get_vec(&mut r, Some(arch.board_dim))?,
        };
        let mut params = Params::zeros(&arch);
        for dst in params.slices_mut() {
            let v = get_vec(&mut r, Some(dst.len()))?;
            dst.copy_from_slice(&v);
        }
        if (r.position() as usize) != payload.len() {
            return Err(NetworkError::Malformed("trailing bytes in payload".into()));
        }
        let mut net = Network::new(&map, arch, params)?;
        net.normalizer = normalizer;
        net.feature_config = feature_config;
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetworkError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Network, NetworkError> {
        Network::from_bytes(&fs::read(path)?)
    }

    /// Loads and checks the model was built for `map`.
    pub fn load_for(path: impl AsRef<Path>, map: &MapDef) -> Result<Network, NetworkError> {
        let net = Network::load(path)?;
        if net.map().fingerprint() != map.fingerprint() {
            return Err(NetworkError::MapMismatch);
        }
        Ok(net)
    }
}
