//! Binary trajectory files.
//!
//! Header, little-endian:
//!
//! | bytes | field                  |
//! |-------|------------------------|
//! | 4     | magic `KBE1`           |
//! | 2     | version (`1`)          |
//! | 4     | n_k                    |
//! | 4     | N_t (steps)            |
//! | 8     | Δt                     |
//! | 1     | band count (`2`)       |
//! | 4     | flags                  |
//! | 4     | frontier               |
//!
//! Body: `f64` real/imag pairs for every entry, ordered
//! `(component, k, j, m, i, l)` from slowest to fastest, component 0
//! being G<.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use kbe_core::linalg::Mat2;
use kbe_core::state::{Component, TwoTimeGF, TwoTimeStore};
use kbe_core::C64;

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"KBE1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 31;

pub const FLAG_LANGRETH: u32 = 1;
pub const FLAG_SIMPSON: u32 = 1 << 1;
pub const FLAG_HF: u32 = 1 << 2;

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Header {
    pub version: u16,
    pub n_k: u32,
    pub n_t: u32,
    pub dt: f64,
    pub bands: u8,
    pub flags: u32,
    pub frontier: u32,
}

impl Header {
    fn body_len(&self) -> u64 {
        let p = self.n_t as u64 + 1;
        2 * self.n_k as u64 * 4 * p * p * 16
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(HEADER_LEN);
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&self.version.to_le_bytes());
        b.extend_from_slice(&self.n_k.to_le_bytes());
        b.extend_from_slice(&self.n_t.to_le_bytes());
        b.extend_from_slice(&self.dt.to_le_bytes());
        b.push(self.bands);
        b.extend_from_slice(&self.flags.to_le_bytes());
        b.extend_from_slice(&self.frontier.to_le_bytes());
        b
    }

    fn parse(b: &[u8; HEADER_LEN]) -> CliResult<Self> {
        if &b[0..4] != MAGIC {
            return Err(CliError::Io("not a trajectory file (bad magic)".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let h = Header {
            version: u16::from_le_bytes([b[4], b[5]]),
            n_k: u32_at(6),
            n_t: u32_at(10),
            dt: f64::from_le_bytes(b[14..22].try_into().unwrap()),
            bands: b[22],
            flags: u32_at(23),
            frontier: u32_at(27),
        };
        if h.version != VERSION {
            return Err(CliError::Io(format!("unsupported trajectory version {}", h.version)));
        }
        if h.bands != 2 {
            return Err(CliError::Io(format!("unsupported band count {}", h.bands)));
        }
        if h.frontier > h.n_t {
            return Err(CliError::Io("frontier beyond N_t".into()));
        }
        Ok(h)
    }
}

fn components() -> [Component; 2] {
    [Component::Lesser, Component::Greater]
}

/// Serialises a full (single-store) state.
pub fn write_trajectory_to(w: impl Write, state: &TwoTimeGF, flags: u32) -> CliResult<()> {
    let mut w = BufWriter::new(w);
    let points = state.n_steps() + 1;
    let header = Header {
        version: VERSION,
        n_k: state.n_k_local() as u32,
        n_t: state.n_steps() as u32,
        dt: state.dt(),
        bands: 2,
        flags,
        frontier: state.frontier() as u32,
    };
    w.write_all(&header.to_bytes())?;
    for c in components() {
        for k in 0..state.n_k_local() {
            for j in 0..2 {
                for m in 0..2 {
                    for i in 0..points {
                        for l in 0..points {
                            let z = state.store.get(c, k, i, l).get(j, m);
                            w.write_all(&z.re.to_le_bytes())?;
                            w.write_all(&z.im.to_le_bytes())?;
                        }
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory(path: &Path, state: &TwoTimeGF, flags: u32) -> CliResult<()> {
    let f = std::fs::File::create(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    write_trajectory_to(f, state, flags)
}

/// Parses a trajectory. Nothing is returned unless the whole file is
/// consistent with its header.
pub fn read_trajectory_from(r: impl Read) -> CliResult<(Header, TwoTimeGF)> {
    let mut r = BufReader::new(r);
    let mut hb = [0u8; HEADER_LEN];
    r.read_exact(&mut hb)
        .map_err(|_| CliError::Io("truncated trajectory header".into()))?;
    let header = Header::parse(&hb)?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() as u64 != header.body_len() {
        return Err(CliError::Io(format!(
            "trajectory body has {} bytes, header implies {}",
            body.len(),
            header.body_len()
        )));
    }
    let n_k = header.n_k as usize;
    let points = header.n_t as usize + 1;
    let mut store = TwoTimeStore::zeros(points, n_k, 0);
    let mut vals = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for c in components() {
        for k in 0..n_k {
            for j in 0..2 {
                for m in 0..2 {
                    for i in 0..points {
                        for l in 0..points {
                            let re = vals.next().unwrap();
                            let im = vals.next().unwrap();
                            let mut x: Mat2 = store.get(c, k, i, l);
                            x.set(j, m, C64::new(re, im));
                            store.set(c, k, i, l, x);
                        }
                    }
                }
            }
        }
    }
    let state = TwoTimeGF::from_store(store, n_k, header.dt, header.frontier as usize);
    Ok((header, state))
}

pub fn read_trajectory(path: &Path) -> CliResult<(Header, TwoTimeGF)> {
    let f = std::fs::File::open(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    read_trajectory_from(f)
}

/// Reads only the header.
pub fn read_header(path: &Path) -> CliResult<Header> {
    let mut f = std::fs::File::open(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut hb = [0u8; HEADER_LEN];
    f.read_exact(&mut hb)
        .map_err(|_| CliError::Io("truncated trajectory header".into()))?;
    Header::parse(&hb)
}
