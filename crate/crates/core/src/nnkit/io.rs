//! Little-endian binary parameter format.
//!
//! ```text
//! magic      "DIRN"
//! version    u32 (= 1)
//! [filtration: count u32, then count × u32 kept indices]   inverse dynamics models only
//! layers     u32
//! per layer  rows u32 (inputs), cols u32 (outputs),
//!            rows·cols f64 weights (row-major), cols f64 biases
//! head tag   u32: 0 none, 1 Gaussian, 2 categorical
//! Gaussian   dim u32, log_std_min f64, log_std_max f64, dim × f64 log_std
//! categorical n u32
//! ```
//!
//! Decoding then re-encoding any valid blob reproduces it byte for byte.

use ndarray::Array2;

use super::dist::{DistNet, Head};
use super::mlp::{Dense, Mlp};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DIRN";
pub const VERSION: u32 = 1;

const TAG_NONE: u32 = 0;
const TAG_GAUSSIAN: u32 = 1;
const TAG_CATEGORICAL: u32 = 2;

struct Writer(Vec<u8>);

impl Writer {
    fn header() -> Self {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn mlp(&mut self, net: &Mlp) {
        self.u32(net.layers.len() as u32);
        for layer in &net.layers {
            self.u32(layer.inputs() as u32);
            self.u32(layer.outputs() as u32);
            for v in layer.weight.iter() {
                self.f64(*v);
            }
            for v in layer.bias.iter() {
                self.f64(*v);
            }
        }
    }

    fn head(&mut self, head: Option<&Head>) {
        match head {
            None => self.u32(TAG_NONE),
            Some(Head::Gaussian {
                log_std,
                log_std_min,
                log_std_max,
            }) => {
                self.u32(TAG_GAUSSIAN);
                self.u32(log_std.ncols() as u32);
                self.f64(*log_std_min);
                self.f64(*log_std_max);
                for v in log_std.iter() {
                    self.f64(*v);
                }
            }
            Some(Head::Categorical { n }) => {
                self.u32(TAG_CATEGORICAL);
                self.u32(*n as u32);
            }
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Corrupt("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Corrupt(format!("unsupported version {version}")));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let n = self.u32()? as usize;
        // every counted element takes at least four bytes
        if n > self.bytes.len() {
            return Err(Error::Corrupt(format!("implausible {what} count {n}")));
        }
        Ok(n)
    }

    fn array(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt("implausible tensor size".into()))?;
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
    }

    fn mlp(&mut self) -> Result<Mlp> {
        let n = self.count("layer")?;
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let rows = self.count("row")?;
            let cols = self.count("column")?;
            let weight = self.array(rows, cols)?;
            let bias = self.array(1, cols)?;
            layers.push(Dense { weight, bias });
        }
        Mlp::from_layers(layers).map_err(|e| Error::Corrupt(e.to_string()))
    }

    fn head(&mut self) -> Result<Option<Head>> {
        match self.u32()? {
            TAG_NONE => Ok(None),
            TAG_GAUSSIAN => {
                let dim = self.count("action")?;
                let log_std_min = self.f64()?;
                let log_std_max = self.f64()?;
                let log_std = self.array(1, dim)?;
                Ok(Some(Head::Gaussian {
                    log_std,
                    log_std_min,
                    log_std_max,
                }))
            }
            TAG_CATEGORICAL => Ok(Some(Head::Categorical {
                n: self.u32()? as usize,
            })),
            t => Err(Error::Corrupt(format!("unknown head tag {t}"))),
        }
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn encode_mlp(net: &Mlp) -> Vec<u8> {
    let mut w = Writer::header();
    w.mlp(net);
    w.head(None);
    w.0
}

pub fn decode_mlp(bytes: &[u8]) -> Result<Mlp> {
    let mut r = Reader::new(bytes)?;
    let net = r.mlp()?;
    if r.head()?.is_some() {
        return Err(Error::Corrupt("expected a plain network, found a head".into()));
    }
    r.finish()?;
    Ok(net)
}

pub fn encode_dist_net(net: &DistNet) -> Vec<u8> {
    let mut w = Writer::header();
    w.mlp(&net.net);
    w.head(Some(&net.head));
    w.0
}

fn dist_net_body(r: &mut Reader<'_>) -> Result<DistNet> {
    let net = r.mlp()?;
    let head = r
        .head()?
        .ok_or_else(|| Error::Corrupt("missing distribution head".into()))?;
    DistNet::new(net, head).map_err(|e| Error::Corrupt(e.to_string()))
}

pub fn decode_dist_net(bytes: &[u8]) -> Result<DistNet> {
    let mut r = Reader::new(bytes)?;
    let net = dist_net_body(&mut r)?;
    r.finish()?;
    Ok(net)
}

/// Encodes a network together with the filtration header used by inverse
/// dynamics models.
pub fn encode_with_filtration(net: &DistNet, keep: &[usize]) -> Vec<u8> {
    let mut w = Writer::header();
    w.u32(keep.len() as u32);
    for &i in keep {
        w.u32(i as u32);
    }
    w.mlp(&net.net);
    w.head(Some(&net.head));
    w.0
}

pub fn decode_with_filtration(bytes: &[u8]) -> Result<(DistNet, Vec<usize>)> {
    let mut r = Reader::new(bytes)?;
    let n = r.count("filtration index")?;
    let keep = (0..n)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let net = dist_net_body(&mut r)?;
    r.finish()?;
    Ok((net, keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;

    fn sample_net(seed: u64, gaussian: bool) -> DistNet {
        let mut rng = seed::rng(seed);
        let net = Mlp::new(&[3, 5, 2], 0.5, &mut rng);
        let head = if gaussian {
            Head::gaussian(2, -0.3)
        } else {
            Head::categorical(2)
        };
        DistNet::new(net, head).unwrap()
    }

    proptest! {
        #[test]
        fn dist_net_round_trip_is_bit_exact(seed in any::<u64>(), gaussian in any::<bool>()) {
            let net = sample_net(seed, gaussian);
            let bytes = encode_dist_net(&net);
            let back = decode_dist_net(&bytes).unwrap();
            prop_assert_eq!(&back, &net);
            prop_assert_eq!(encode_dist_net(&back), bytes);
        }
    }

    #[test]
    fn layout_prefix() {
        let net = sample_net(1, true);
        let bytes = encode_dist_net(&net);
        assert_eq!(&bytes[..4], b"DIRN");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 5);
        let w00 = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
        assert_eq!(w00, net.net.layers[0].weight[[0, 0]]);
    }

    #[test]
    fn filtration_header_round_trip() {
        let net = sample_net(2, true);
        let bytes = encode_with_filtration(&net, &[0, 3]);
        let (back, keep) = decode_with_filtration(&bytes).unwrap();
        assert_eq!(keep, vec![0, 3]);
        assert_eq!(back, net);
    }

    #[test]
    fn truncated_and_garbage_inputs_fail_cleanly() {
        let bytes = encode_dist_net(&sample_net(3, false));
        for cut in [0, 3, 8, 20, bytes.len() - 1] {
            assert!(matches!(decode_dist_net(&bytes[..cut]), Err(Error::Corrupt(_))));
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_dist_net(&extra).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(decode_dist_net(&bad).is_err());
    }

    #[test]
    fn plain_mlp_round_trip() {
        let net = Mlp::new(&[4, 3, 1], 1.0, &mut seed::rng(9));
        let bytes = encode_mlp(&net);
        assert_eq!(decode_mlp(&bytes).unwrap(), net);
        assert!(decode_dist_net(&bytes).is_err());
    }
}
