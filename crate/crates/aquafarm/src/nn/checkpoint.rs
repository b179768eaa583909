//! Network checkpoints.
//!
//! Flat little-endian layout:
//!   magic      8 bytes "AQNN0001"
//!   activation u8 (0 = tanh, 1 = relu)
//!   output     u8 (0 = identity, 1 = abs)
//!   n_widths   u64, widths u64 each
//!   input box  lo f64 × input width, hi f64 × input width
//!   weights    f64, row-major, layer by layer
//!   biases     f64, layer by layer

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::mlp::{Activation, Mlp, OutputTransform};

const MAGIC: &[u8; 8] = b"AQNN0001";

fn write_f64s<W: Write>(out: &mut W, data: &[f64]) -> io::Result<()> {
    for &v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(input: &mut R, n: usize) -> io::Result<Vec<f64>> {
    let mut raw = vec![0u8; 8 * n];
    input.read_exact(&mut raw)?;
    Ok(raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect())
}

impl Mlp {
    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_all(&[
            match self.activation {
                Activation::Tanh => 0u8,
                Activation::Relu => 1u8,
            },
            match self.output {
                OutputTransform::Identity => 0u8,
                OutputTransform::Abs => 1u8,
            },
        ])?;
        out.write_all(&(self.widths.len() as u64).to_le_bytes())?;
        for &w in &self.widths {
            out.write_all(&(w as u64).to_le_bytes())?;
        }
        write_f64s(&mut out, &self.input_lo)?;
        write_f64s(&mut out, &self.input_hi)?;
        for w in &self.weights {
            write_f64s(&mut out, w)?;
        }
        for b in &self.biases {
            write_f64s(&mut out, b)?;
        }
        out.flush()
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let mut input = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "not a network checkpoint"));
        }
        let mut tags = [0u8; 2];
        input.read_exact(&mut tags)?;
        let activation = match tags[0] {
            0 => Activation::Tanh,
            1 => Activation::Relu,
            t => return Err(io::Error::new(io::ErrorKind::InvalidData, format!("bad activation tag {t}"))),
        };
        let output = match tags[1] {
            0 => OutputTransform::Identity,
            1 => OutputTransform::Abs,
            t => return Err(io::Error::new(io::ErrorKind::InvalidData, format!("bad output tag {t}"))),
        };
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b8)?;
        let n_widths = u64::from_le_bytes(b8) as usize;
        let mut widths = Vec::with_capacity(n_widths);
        for _ in 0..n_widths {
            input.read_exact(&mut b8)?;
            widths.push(u64::from_le_bytes(b8) as usize);
        }
        let dim = widths[0];
        let input_lo = read_f64s(&mut input, dim)?;
        let input_hi = read_f64s(&mut input, dim)?;
        let mut weights = Vec::with_capacity(n_widths - 1);
        for l in 0..n_widths - 1 {
            weights.push(read_f64s(&mut input, widths[l] * widths[l + 1])?);
        }
        let mut biases = Vec::with_capacity(n_widths - 1);
        for l in 0..n_widths - 1 {
            biases.push(read_f64s(&mut input, widths[l + 1])?);
        }
        Ok(Mlp {
            widths,
            activation,
            output,
            weights,
            biases,
            input_lo,
            input_hi,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let net = Mlp::new(
            &[5, 32, 32, 32, 1],
            Activation::Tanh,
            OutputTransform::Identity,
            &[0.0, 0.005, 0.1, 0.0019, 0.0055],
            &[3.0, 3.3, 1.1, 0.3856, 0.2635],
            1234,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        net.save(&path).unwrap();
        let back = Mlp::load(&path).unwrap();
        assert_eq!(net, back);
        for (a, b) in net.weights.iter().flatten().zip(back.weights.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
