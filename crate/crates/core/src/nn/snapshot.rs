//! Flat binary parameter snapshots.
//!
//! Layout (all little-endian):
//!
//! ```text
//! b"WOLP" | version: u32 | layer count L: u32 | L × size: u32 | params: f64*
//! ```
//!
//! Parameters follow layer order, each layer's weights (row-major,
//! outputs × inputs) before its biases.

use std::io::{Read, Write};

use super::mlp::Mlp;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"WOLP";
pub const VERSION: u32 = 1;

pub fn write_snapshot<W: Write>(net: &Mlp, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let sizes = net.layer_sizes();
    out.write_all(&(sizes.len() as u32).to_le_bytes())?;
    for s in &sizes {
        out.write_all(&(*s as u32).to_le_bytes())?;
    }
    for p in net.params() {
        out.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn snapshot_bytes(net: &Mlp) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + 8 * net.num_params());
    write_snapshot(net, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

/// Decoded snapshot; apply it to a network with [`Snapshot::load_into`].
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub layer_sizes: Vec<usize>,
    pub params: Vec<f64>,
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<Snapshot> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad snapshot magic".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let count = read_u32(&mut input)? as usize;
    if !(2..=1024).contains(&count) {
        return Err(Error::Format(format!("implausible layer count {count}")));
    }
    let layer_sizes = (0..count)
        .map(|_| read_u32(&mut input).map(|s| s as usize))
        .collect::<Result<Vec<_>>>()?;
    let n: usize = layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let mut params = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        input.read_exact(&mut b)?;
        params.push(f64::from_le_bytes(b));
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", rest.len())));
    }
    Ok(Snapshot {
        layer_sizes,
        params,
    })
}

impl Snapshot {
    pub fn load_into(&self, net: &mut Mlp) -> Result<()> {
        if net.layer_sizes() != self.layer_sizes {
            return Err(Error::ArchitectureMismatch(
                net.layer_sizes(),
                self.layer_sizes.clone(),
            ));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("snapshot parameter".into()));
        }
        for (p, v) in net.params_mut().zip(&self.params) {
            *p = *v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, OutputActivation};
    use crate::rng;

    #[test]
    fn header_layout() {
        let mut net = Mlp::zeros(&[2, 1], Activation::Relu, OutputActivation::Identity).unwrap();
        net.layers_mut()[0].weights_mut().copy_from_slice(&[1.5, -2.0]);
        net.layers_mut()[0].biases_mut()[0] = 0.25;
        let bytes = snapshot_bytes(&net);
        let mut expected = b"WOLP".to_vec();
        expected.extend(1u32.to_le_bytes());
        expected.extend(2u32.to_le_bytes());
        expected.extend(2u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        for v in [1.5f64, -2.0, 0.25] {
            expected.extend(v.to_le_bytes());
        }
        assert_eq!(bytes, expected);
    }

    #[test]
    fn roundtrip_restores_parameters() {
        let mut r = rng::stream(4, 0);
        let net = Mlp::new(&[3, 5, 2], Activation::Tanh, OutputActivation::Identity, &mut r).unwrap();
        let snap = read_snapshot(snapshot_bytes(&net).as_slice()).unwrap();
        let mut fresh = Mlp::zeros(&[3, 5, 2], Activation::Tanh, OutputActivation::Identity).unwrap();
        snap.load_into(&mut fresh).unwrap();
        assert_eq!(fresh, net);
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(read_snapshot(&b"NOPE\x01\0\0\0"[..]).is_err());
        let net = Mlp::zeros(&[2, 2], Activation::Relu, OutputActivation::Identity).unwrap();
        let mut bytes = snapshot_bytes(&net);
        bytes.pop();
        assert!(read_snapshot(bytes.as_slice()).is_err());
    }
}
