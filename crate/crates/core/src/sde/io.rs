use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::numerics::RngStream;
use crate::toy::ToyState;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"CLCK";
const VERSION: u32 = 1;

/// Columns `t, u_1..u_m1, theta_1..theta_m2`. Floats use Rust's shortest
/// round-trip formatting, so equal states give equal bytes.
pub fn write_trajectory_csv<W: Write>(mut w: W, states: &[ToyState]) -> Result<()> {
    let Some(first) = states.first() else {
        return Err(Error::invalid("empty trajectory"));
    };
    let (m1, m2) = (first.u.len(), first.theta.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=m1).map(|i| format!("u_{i}")));
    header.extend((1..=m2).map(|i| format!("theta_{i}")));
    writeln!(w, "{}", header.join(","))?;
    for s in states {
        if s.u.len() != m1 || s.theta.len() != m2 {
            return Err(Error::invalid("trajectory states differ in dimension"));
        }
        let row: Vec<String> = std::iter::once(s.t)
            .chain(s.u.iter().copied())
            .chain(s.theta.iter().copied())
            .map(|x| x.to_string())
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Resumable chain state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub dt: f64,
    pub stream: RngStream,
    pub step: u64,
    pub state: ToyState,
}

pub fn write_checkpoint<W: Write>(mut w: W, c: &Checkpoint) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u64::<LittleEndian>(c.state.u.len() as u64)?;
    w.write_u64::<LittleEndian>(c.state.theta.len() as u64)?;
    w.write_f64::<LittleEndian>(c.dt)?;
    w.write_u64::<LittleEndian>(c.stream.root_seed)?;
    w.write_u64::<LittleEndian>(c.stream.stream_id)?;
    w.write_u64::<LittleEndian>(c.step)?;
    w.write_f64::<LittleEndian>(c.state.t)?;
    for x in c.state.u.iter().chain(&c.state.theta) {
        w.write_f64::<LittleEndian>(*x)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let m1 = r.read_u64::<LittleEndian>()? as usize;
    let m2 = r.read_u64::<LittleEndian>()? as usize;
    if m1 > 1 << 20 || m2 > 1 << 20 {
        return Err(Error::Format("implausible checkpoint dimensions".into()));
    }
    let dt = r.read_f64::<LittleEndian>()?;
    let root_seed = r.read_u64::<LittleEndian>()?;
    let stream_id = r.read_u64::<LittleEndian>()?;
    let step = r.read_u64::<LittleEndian>()?;
    let t = r.read_f64::<LittleEndian>()?;
    let mut read = |n: usize| -> Result<Vec<f64>> {
        (0..n).map(|_| Ok(r.read_f64::<LittleEndian>()?)).collect()
    };
    let u = read(m1)?;
    let theta = read(m2)?;
    Ok(Checkpoint {
        dt,
        stream: RngStream {
            root_seed,
            stream_id,
        },
        step,
        state: ToyState { u, theta, t },
    })
}
