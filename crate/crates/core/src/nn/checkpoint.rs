//! Binary parameter checkpoints.
//!
//! Layout (little endian):
//!
//! ```text
//! magic    8 bytes  "ADVNET01"
//! hlen     u32      length of the JSON header
//! header   hlen     {"spec": NetworkSpec, "seed": u64}
//! count    u64      number of parameters
//! params   count × f64, declaration order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Network, NetworkSpec, NnError, Result};

const MAGIC: &[u8; 8] = b"ADVNET01";

#[derive(Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    seed: u64,
}

pub fn write_checkpoint<W: Write>(net: &Network, mut out: W) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        spec: net.spec().clone(),
        seed: net.seed(),
    })
    .map_err(|e| NnError::Checkpoint(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&(header.len() as u32).to_le_bytes())?;
    out.write_all(&header)?;
    out.write_all(&(net.params().len() as u64).to_le_bytes())?;
    for p in net.params() {
        out.write_all(&p.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Rebuilds the network from its header, then overwrites the parameters.
/// The dropout stream restarts from the seed.
pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Network> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let mut header = vec![0u8; u32::from_le_bytes(word) as usize];
    input.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    let mut net = Network::new(header.spec, header.seed)?;
    let mut long = [0u8; 8];
    input.read_exact(&mut long)?;
    let count = u64::from_le_bytes(long) as usize;
    if count != net.parameter_count() {
        return Err(NnError::Checkpoint(format!(
            "{count} parameters stored, spec needs {}",
            net.parameter_count()
        )));
    }
    for p in net.params_mut() {
        input.read_exact(&mut long)?;
        *p = f64::from_le_bytes(long);
    }
    Ok(net)
}

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(net, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
