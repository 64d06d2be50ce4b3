//! Checkpoint file format `CSLNET01`: 8-byte magic, little-endian u64
//! header length, a text header (the spec descriptor plus the init seed),
//! then per-layer little-endian f64 payloads (weights row-major, then bias)
//! in layer order. Loading reproduces evaluation output bit for bit.

use super::{NetworkSpec, NetworkState};
use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use std::io::{Read, Write};
use std::path::Path;

const NET_MAGIC: &[u8; 8] = b"CSLNET01";

pub fn save_checkpoint(path: &Path, spec: &NetworkSpec, state: &NetworkState) -> Result<()> {
    let mut header = spec.descriptor();
    header.push_str(&format!("seed {}\n", state.rng_seed));
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(NET_MAGIC)?;
    f.write_all(&(header.len() as u64).to_le_bytes())?;
    f.write_all(header.as_bytes())?;
    for layer in state.layers() {
        for v in layer.w.iter() {
            f.write_all(&v.to_le_bytes())?;
        }
        for v in layer.b.iter() {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

fn parse_header(header: &str) -> Result<(NetworkSpec, u64)> {
    let mut input_shape = None;
    let mut conv_channels = Vec::new();
    let mut fc_hidden = Vec::new();
    let mut seed = 0u64;
    let mut output_seen = false;
    for line in header.lines() {
        let mut parts = line.split_whitespace();
        let word = parts.next().unwrap_or("");
        let mut nums = || -> Result<Vec<u64>> {
            parts
                .by_ref()
                .map(|p| {
                    p.parse::<u64>()
                        .map_err(|_| Error::Format(format!("bad checkpoint header line {line:?}")))
                })
                .collect()
        };
        match word {
            "input" => {
                let v = nums()?;
                if v.len() != 3 {
                    return Err(Error::Format("input line needs 3 dims".into()));
                }
                input_shape = Some((v[0] as usize, v[1] as usize, v[2] as usize));
            }
            "conv" => conv_channels.push(nums()?[0] as usize),
            "fc" => {
                if output_seen {
                    return Err(Error::Format("fc after output line".into()));
                }
                fc_hidden.push(nums()?[0] as usize)
            }
            "output" => output_seen = true,
            "seed" => seed = nums()?[0],
            "" => {}
            other => {
                return Err(Error::Format(format!("unknown checkpoint header word {other:?}")))
            }
        }
    }
    let input_shape =
        input_shape.ok_or_else(|| Error::Format("checkpoint header missing input line".into()))?;
    Ok((NetworkSpec { input_shape, conv_channels, fc_hidden }, seed))
}

pub fn load_checkpoint(path: &Path) -> Result<(NetworkSpec, NetworkState)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != NET_MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic in {}", path.display())));
    }
    let mut u = [0u8; 8];
    f.read_exact(&mut u)?;
    let header_len = u64::from_le_bytes(u) as usize;
    let mut header = vec![0u8; header_len];
    f.read_exact(&mut header)?;
    let header =
        String::from_utf8(header).map_err(|_| Error::Format("non-UTF-8 header".into()))?;
    let (spec, seed) = parse_header(&header)?;
    spec.validate()?;

    let mut tensors = Vec::new();
    let mut buf = [0u8; 8];
    let mut read_f64 = |f: &mut std::io::BufReader<std::fs::File>| -> Result<f64> {
        f.read_exact(&mut buf)?;
        Ok(f64::from_le_bytes(buf))
    };
    for shape in spec.layer_shapes() {
        let (rows, cols) = match shape {
            super::LayerShape::Conv { in_ch, out_ch } => (out_ch, in_ch * 9),
            super::LayerShape::Fc { inp, out } => (out, inp),
        };
        let mut w = Array2::zeros((rows, cols));
        for v in w.iter_mut() {
            *v = read_f64(&mut f)?;
        }
        let mut b = Array1::zeros(rows);
        for v in b.iter_mut() {
            *v = read_f64(&mut f)?;
        }
        tensors.push((w, b));
    }
    Ok((spec.clone(), NetworkState::from_layer_tensors(tensors, seed)))
}
