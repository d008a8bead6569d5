//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "SAILNET\0"
//! version    u32      currently 1
//! n_nets     u32
//! per network:
//!   n_layers u32
//!   per layer: fan_in u32, fan_out u32, activation u8 (0 relu, 1 tanh, 2 sigmoid, 3 identity)
//!   params   f64 bits as u64, layer by layer: weights row-major (fan_in x fan_out), then bias
//! ```
//!
//! Values are stored as raw IEEE-754 bits so a load reproduces every
//! parameter exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::mlp::{Activation, Mlp};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SAILNET\0";
const FORMAT_VERSION: u32 = 1;

pub fn write_networks<W: Write>(mut w: W, nets: &[&Mlp]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(nets.len() as u32).to_le_bytes())?;
    for net in nets {
        w.write_all(&(net.layers().len() as u32).to_le_bytes())?;
        for layer in net.layers() {
            w.write_all(&(layer.fan_in as u32).to_le_bytes())?;
            w.write_all(&(layer.fan_out as u32).to_le_bytes())?;
            w.write_all(&[layer.activation.code()])?;
        }
        for p in net.params() {
            w.write_all(&p.to_bits().to_le_bytes())?;
        }
    }
    w.flush()
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::parse("checkpoint", e.to_string()))?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_networks<R: Read>(mut r: R) -> Result<Vec<Mlp>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::parse("checkpoint header", e.to_string()))?;
    if &magic != MAGIC {
        return Err(Error::parse("checkpoint header", "bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::parse(
            "checkpoint header",
            format!("unsupported format version {version}"),
        ));
    }
    let n_nets = read_u32(&mut r)? as usize;
    let mut nets = Vec::with_capacity(n_nets);
    for _ in 0..n_nets {
        let n_layers = read_u32(&mut r)? as usize;
        let mut dims = Vec::with_capacity(n_layers + 1);
        let mut acts = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let fan_in = read_u32(&mut r)? as usize;
            let fan_out = read_u32(&mut r)? as usize;
            let mut code = [0u8; 1];
            r.read_exact(&mut code)
                .map_err(|e| Error::parse("checkpoint layer", e.to_string()))?;
            if i == 0 {
                dims.push(fan_in);
            } else if dims[i] != fan_in {
                return Err(Error::parse("checkpoint layer", "layer widths do not chain"));
            }
            dims.push(fan_out);
            acts.push(Activation::from_code(code[0])?);
        }
        let mut net = Mlp::zeros(&dims, &acts)?;
        let mut buf = [0u8; 8];
        for p in net.params_mut() {
            r.read_exact(&mut buf)
                .map_err(|e| Error::parse("checkpoint params", e.to_string()))?;
            *p = f64::from_bits(u64::from_le_bytes(buf));
        }
        nets.push(net);
    }
    Ok(nets)
}

pub fn save_networks(path: &Path, nets: &[&Mlp]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_networks(BufWriter::new(file), nets).map_err(|e| Error::io(path, e))
}

pub fn load_networks(path: &Path) -> Result<Vec<Mlp>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_networks(BufReader::new(file))
}
