//! Weight persistence: `WWNN` magic, version, topology hash, then the raw f32
//! parameters in canonical traversal order. Loads are bit-exact and refuse
//! mismatched topologies.

use super::model::NetworkWeights;
use crate::error::{Error, Result};
use std::io::Read;
use std::path::Path;

const MAGIC: &[u8; 4] = b"WWNN";
const VERSION: u32 = 1;

pub fn save_weights(net: &NetworkWeights, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(24 + net.param_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&net.topology_hash().to_le_bytes());
    out.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    net.visit_params(&mut |_, vals| {
        for v in vals {
            out.extend_from_slice(&v.to_le_bytes());
        }
    });
    std::fs::write(path, out)?;
    Ok(())
}

/// Load weights into a freshly constructed network of the expected topology.
pub fn load_weights(net: &mut NetworkWeights, path: &Path) -> Result<()> {
    let bytes = std::fs::read(path)?;
    let mut r = bytes.as_slice();
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadFormat("weight file magic mismatch".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::BadFormat(format!("unsupported weight version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let hash = u64::from_le_bytes(b8);
    let expected = net.topology_hash();
    if hash != expected {
        return Err(Error::TopologyMismatch { expected, found: hash });
    }
    r.read_exact(&mut b8)?;
    let count = u64::from_le_bytes(b8) as usize;
    if count != net.param_count() {
        return Err(Error::BadFormat(format!(
            "parameter count mismatch: file {count}, topology {}",
            net.param_count()
        )));
    }
    if r.len() != count * 4 {
        return Err(Error::BadFormat(format!(
            "weight payload truncated: {} bytes for {count} parameters",
            r.len()
        )));
    }
    let mut offset = 0usize;
    net.visit_params_mut(&mut |_, vals| {
        for v in vals.iter_mut() {
            let b: [u8; 4] = r[offset..offset + 4].try_into().unwrap();
            *v = f32::from_le_bytes(b);
            offset += 4;
        }
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::EncoderConfig;

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = EncoderConfig { input_res: 8, widths: [3, 4, 5], mlp_width: 16, latent: 64, angular_width: 128 };
        let net = NetworkWeights::init(9, cfg);
        let dir = std::env::temp_dir().join("woven_nn_io");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("w.wwnn");
        save_weights(&net, &path).unwrap();

        let mut back = NetworkWeights::init(1234, cfg);
        load_weights(&mut back, &path).unwrap();
        let mut a = Vec::new();
        net.visit_params(&mut |_, v| a.extend_from_slice(v));
        let mut b = Vec::new();
        back.visit_params(&mut |_, v| b.extend_from_slice(v));
        assert_eq!(a.len(), b.len());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));

        // saving the reloaded network reproduces the file byte for byte
        let path2 = dir.join("w2.wwnn");
        save_weights(&back, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn topology_mismatch_is_rejected() {
        let small = NetworkWeights::init(
            9,
            EncoderConfig { input_res: 8, widths: [3, 4, 5], mlp_width: 16, latent: 64, angular_width: 128 },
        );
        let dir = std::env::temp_dir().join("woven_nn_io");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("small.wwnn");
        save_weights(&small, &path).unwrap();
        let mut big = NetworkWeights::init(9, EncoderConfig::default());
        match load_weights(&mut big, &path) {
            Err(Error::TopologyMismatch { .. }) => {}
            other => panic!("expected topology mismatch, got {other:?}"),
        }
    }

    #[test]
    fn shipped_network_fits_the_storage_budget() {
        let net = NetworkWeights::init(0, EncoderConfig::default());
        let bytes = 24 + net.param_count() * 4;
        assert!(
            bytes < 5 * 1024 * 1024,
            "{} parameters -> {bytes} bytes",
            net.param_count()
        );
    }
}
