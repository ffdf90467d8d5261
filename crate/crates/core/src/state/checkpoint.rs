//! Binary checkpoints of [`TtnState`].
//!
//! Layout, all integers little-endian `u64` unless noted:
//!
//! ```text
//! magic  b"TTNCKPT\0"
//! version
//! lx, ly, orientation (0 standard, 1 rotated90)
//! topology hash: 64 ASCII hex bytes
//! n_nodes, then bond dimension per node (0 for the root)
//! gauge center (u64::MAX if none)
//! per node: rank, shape..., then re/im f64 pairs in row-major order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use super::{node_legs, TtnState};
use crate::tnalg::Tensor;
use crate::topology::{build_lattice, build_tree, Orientation, TreeTopology};
use crate::C64;

const MAGIC: &[u8; 8] = b"TTNCKPT\0";
const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u64),
    #[error("topology hash mismatch: file {file}, rebuilt {rebuilt}")]
    TopologyHash { file: String, rebuilt: String },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

fn put(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get(r: &mut impl Read) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn save_checkpoint(state: &TtnState, path: &Path) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(state, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_checkpoint(state: &TtnState, w: &mut impl Write) -> Result<(), CheckpointError> {
    let topo = state.topology();
    w.write_all(MAGIC)?;
    put(w, FORMAT_VERSION)?;
    put(w, topo.lattice.lx as u64)?;
    put(w, topo.lattice.ly as u64)?;
    put(
        w,
        match topo.orientation {
            Orientation::Standard => 0,
            Orientation::Rotated90 => 1,
        },
    )?;
    w.write_all(topo.hash().as_bytes())?;
    put(w, topo.n_nodes() as u64)?;
    for d in state.bond_dims() {
        put(w, d as u64)?;
    }
    put(w, state.center().map_or(u64::MAX, |c| c as u64))?;
    for t in state.tensors() {
        put(w, t.rank() as u64)?;
        for &d in t.shape() {
            put(w, d as u64)?;
        }
        for z in t.as_slice() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TtnState, CheckpointError> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<TtnState, CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = get(r)?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let lx = get(r)? as usize;
    let ly = get(r)? as usize;
    let orientation = match get(r)? {
        0 => Orientation::Standard,
        1 => Orientation::Rotated90,
        o => return Err(CheckpointError::Corrupt(format!("orientation {o}"))),
    };
    let mut hash = [0u8; 64];
    r.read_exact(&mut hash)?;
    let file_hash = String::from_utf8_lossy(&hash).into_owned();
    let lattice =
        build_lattice(lx, ly).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let topo: TreeTopology = build_tree(&lattice, orientation);
    let rebuilt = topo.hash();
    if rebuilt != file_hash {
        return Err(CheckpointError::TopologyHash {
            file: file_hash,
            rebuilt,
        });
    }
    let n_nodes = get(r)? as usize;
    if n_nodes != topo.n_nodes() {
        return Err(CheckpointError::Corrupt(format!("{n_nodes} nodes")));
    }
    let bonds: Vec<u64> = (0..n_nodes).map(|_| get(r)).collect::<Result<_, _>>()?;
    let center = match get(r)? {
        u64::MAX => None,
        c if (c as usize) < n_nodes => Some(c as usize),
        c => return Err(CheckpointError::Corrupt(format!("center {c}"))),
    };
    let mut tensors = Vec::with_capacity(n_nodes);
    for id in 0..n_nodes {
        let rank = get(r)? as usize;
        if rank > 3 {
            return Err(CheckpointError::Corrupt(format!("rank {rank}")));
        }
        let shape: Vec<usize> = (0..rank)
            .map(|_| get(r).map(|d| d as usize))
            .collect::<Result<_, _>>()?;
        let len: usize = shape.iter().product();
        if len > 1 << 31 {
            return Err(CheckpointError::Corrupt(format!("tensor of {len} entries")));
        }
        let mut raw = vec![0u8; len * 16];
        r.read_exact(&mut raw)?;
        let data: Vec<C64> = raw
            .chunks_exact(16)
            .map(|c| {
                C64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        let t = Tensor::from_vec(node_legs(&topo, id), &shape, data)
            .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        if rank == 3 && bonds[id] as usize != shape[2] {
            return Err(CheckpointError::Corrupt(format!("bond of node {id}")));
        }
        tensors.push(t);
    }
    TtnState::from_tensors(Arc::new(topo), tensors, center)
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))
}
