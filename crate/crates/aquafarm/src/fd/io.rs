//! Binary dump of a solved field.
//!
//! Layout (little endian):
//!   magic   8 bytes  "AQFD0001"
//!   mode    u8       0 = variational inequality, 1 = control only
//!   horizon f64, dt f64, n_steps u64, policy_stride u64
//!   5 axes (w, h, pF, pB, control): lo f64, hi f64, n u64
//!   n_time_steps u64
//!   v0 f64
//!   n_retained u64, then the retained step indices as u64
//!   per retained slice: n_nodes f32 values   (t-major, then w, h, pF, pB)
//!   per retained slice: n_nodes f32 controls (same order)

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::grid::{AxisSpec, GridSpec};
use super::solver::{FdSolution, SolveMode};

const MAGIC: &[u8; 8] = b"AQFD0001";

fn write_f32s<W: Write>(out: &mut W, data: &[f32]) -> io::Result<()> {
    for &v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f32s<R: Read>(input: &mut R, n: usize) -> io::Result<Vec<f32>> {
    let mut raw = vec![0u8; 4 * n];
    input.read_exact(&mut raw)?;
    Ok(raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

fn read_f64<R: Read>(input: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_u64<R: Read>(input: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

impl FdSolution {
    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_all(&[match self.mode {
            SolveMode::VariationalInequality => 0u8,
            SolveMode::ControlOnly => 1u8,
        }])?;
        out.write_all(&self.horizon.to_le_bytes())?;
        out.write_all(&self.dt.to_le_bytes())?;
        out.write_all(&(self.n_steps as u64).to_le_bytes())?;
        out.write_all(&(self.grid.policy_stride as u64).to_le_bytes())?;
        for axis in [
            &self.grid.w,
            &self.grid.h,
            &self.grid.p_f,
            &self.grid.p_b,
            &self.grid.control,
        ] {
            out.write_all(&axis.lo.to_le_bytes())?;
            out.write_all(&axis.hi.to_le_bytes())?;
            out.write_all(&(axis.n as u64).to_le_bytes())?;
        }
        out.write_all(&(self.grid.n_time_steps as u64).to_le_bytes())?;
        out.write_all(&self.v0.to_le_bytes())?;
        out.write_all(&(self.retained_steps.len() as u64).to_le_bytes())?;
        for &s in &self.retained_steps {
            out.write_all(&(s as u64).to_le_bytes())?;
        }
        for slice in &self.values {
            write_f32s(&mut out, slice)?;
        }
        for slice in &self.policies {
            write_f32s(&mut out, slice)?;
        }
        out.flush()
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let mut input = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "not a solver dump (bad magic)",
            ));
        }
        let mut mode_byte = [0u8; 1];
        input.read_exact(&mut mode_byte)?;
        let mode = match mode_byte[0] {
            0 => SolveMode::VariationalInequality,
            1 => SolveMode::ControlOnly,
            other => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("unknown mode byte {other}"),
                ))
            }
        };
        let horizon = read_f64(&mut input)?;
        let dt = read_f64(&mut input)?;
        let n_steps = read_u64(&mut input)? as usize;
        let policy_stride = read_u64(&mut input)? as usize;
        let mut axes = Vec::with_capacity(5);
        for _ in 0..5 {
            let lo = read_f64(&mut input)?;
            let hi = read_f64(&mut input)?;
            let n = read_u64(&mut input)? as usize;
            axes.push(AxisSpec { lo, hi, n });
        }
        let n_time_steps = read_u64(&mut input)? as usize;
        let grid = GridSpec {
            w: axes[0],
            h: axes[1],
            p_f: axes[2],
            p_b: axes[3],
            control: axes[4],
            n_time_steps,
            policy_stride,
        };
        let v0 = read_f64(&mut input)?;
        let n_retained = read_u64(&mut input)? as usize;
        let mut retained_steps = Vec::with_capacity(n_retained);
        for _ in 0..n_retained {
            retained_steps.push(read_u64(&mut input)? as usize);
        }
        let n_nodes = grid.n_nodes();
        let mut values = Vec::with_capacity(n_retained);
        for _ in 0..n_retained {
            values.push(read_f32s(&mut input, n_nodes)?);
        }
        let mut policies = Vec::with_capacity(n_retained);
        for _ in 0..n_retained {
            policies.push(read_f32s(&mut input, n_nodes)?);
        }
        Ok(FdSolution {
            grid,
            mode,
            horizon,
            dt,
            n_steps,
            retained_steps,
            values,
            policies,
            v0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd::solver::{solve, SolveOptions};
    use crate::model::{FeedingStrategy, ModelParams};

    #[test]
    fn dump_round_trips_bit_exactly() {
        let p = ModelParams::baseline();
        let s = FeedingStrategy::linear_baseline();
        let grid = GridSpec::toy(&p, 5, 256, 6);
        let sol = solve(&grid, &p, &s, &SolveOptions::new(SolveMode::VariationalInequality)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sol.bin");
        sol.save(&path).unwrap();
        let back = FdSolution::load(&path).unwrap();
        assert_eq!(back.grid, sol.grid);
        assert_eq!(back.mode, sol.mode);
        assert_eq!(back.retained_steps, sol.retained_steps);
        assert_eq!(back.values, sol.values);
        assert_eq!(back.policies, sol.policies);
        assert_eq!(back.v0.to_bits(), sol.v0.to_bits());
        assert_eq!(back.horizon.to_bits(), sol.horizon.to_bits());
    }
}
