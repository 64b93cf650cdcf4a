//! Binary dump of solved tables.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      4 bytes  "STAQ"
//! version    u32      currently 1
//! n_classes  u32
//! n_servers  u32
//! n_epochs   u32      decision steps; the grid has n_epochs + 1 points
//! dt         f64
//! n_combos   u64
//! reject_q        n_combos * (n_epochs + 1) f64, combination-major
//! critical_price  n_combos * n_classes * (n_epochs + 1) f64,
//!                 ordered (combination, class, epoch); slots of full
//!                 combinations are written as 0 and never consulted
//! ```

use super::SolvedTables;
use crate::domain::ProblemInstance;
use std::io::{self, Read, Write};
use thiserror::Error;

const MAGIC: &[u8; 4] = b"STAQ";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("not a table dump (bad magic)")]
    BadMagic,
    #[error("unsupported dump version {0}")]
    BadVersion(u32),
    #[error("dump does not match the instance: {0}")]
    Mismatch(String),
}

impl SolvedTables {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), DumpError> {
        let n_combos = self.set.len();
        let n_classes = self.set.n_classes();
        let grid = self.n_epochs + 1;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(n_classes as u32).to_le_bytes())?;
        w.write_all(&(self.set.n_servers() as u32).to_le_bytes())?;
        w.write_all(&(self.n_epochs as u32).to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&(n_combos as u64).to_le_bytes())?;
        // In-memory layout is epoch-major; the dump is combination-major.
        for combo in 0..n_combos {
            for epoch in 0..grid {
                w.write_all(&self.reject_q[epoch * n_combos + combo].to_le_bytes())?;
            }
        }
        for combo in 0..n_combos {
            for class in 0..n_classes {
                for epoch in 0..grid {
                    let v = self.critical_price[(epoch * n_combos + combo) * n_classes + class];
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    /// Reads a dump produced by [`SolvedTables::write_to`], validating it
    /// against `instance` (which supplies the service rates and price
    /// distributions the dump does not carry).
    pub fn read_from<R: Read>(mut r: R, instance: &ProblemInstance) -> Result<SolvedTables, DumpError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(DumpError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(DumpError::BadVersion(version));
        }
        let n_classes = read_u32(&mut r)? as usize;
        let n_servers = read_u32(&mut r)? as u16;
        let n_epochs = read_u32(&mut r)? as usize;
        let dt = read_f64(&mut r)?;
        let n_combos = read_u64(&mut r)? as usize;

        if n_classes != instance.n_classes() {
            return Err(DumpError::Mismatch(format!(
                "dump has {n_classes} classes, instance has {}",
                instance.n_classes()
            )));
        }
        if n_servers != instance.n_servers {
            return Err(DumpError::Mismatch(format!(
                "dump has {n_servers} servers, instance has {}",
                instance.n_servers
            )));
        }
        if n_epochs != instance.n_epochs() || (dt - instance.dt).abs() > 1e-12 {
            return Err(DumpError::Mismatch(format!(
                "dump grid ({n_epochs} epochs, dt {dt}) differs from instance ({} epochs, dt {})",
                instance.n_epochs(),
                instance.dt
            )));
        }
        let set = instance.combination_set();
        if n_combos != set.len() {
            return Err(DumpError::Mismatch(format!(
                "dump has {n_combos} combinations, instance has {}",
                set.len()
            )));
        }

        let grid = n_epochs + 1;
        let mut reject_q = vec![0.0f64; grid * n_combos];
        for combo in 0..n_combos {
            for epoch in 0..grid {
                reject_q[epoch * n_combos + combo] = read_f64(&mut r)?;
            }
        }
        let mut critical_price = vec![0.0f64; grid * n_combos * n_classes];
        for combo in 0..n_combos {
            for class in 0..n_classes {
                for epoch in 0..grid {
                    critical_price[(epoch * n_combos + combo) * n_classes + class] = read_f64(&mut r)?;
                }
            }
        }

        let full: Vec<bool> = set.combos().iter().map(|c| c.is_full(n_servers)).collect();
        Ok(SolvedTables {
            set,
            service_rates: instance.classes.iter().map(|c| c.service_rate).collect(),
            dt,
            horizon: instance.horizon,
            n_epochs,
            reject_q,
            critical_price,
            full,
        })
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
