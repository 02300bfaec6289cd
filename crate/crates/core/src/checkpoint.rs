//! Parameter checkpoint format.
//!
//! Little-endian layout:
//!
//! ```text
//! magic     8 bytes   "STEERPRM"
//! version   u32       1
//! count     u32       number of parameters
//! per parameter:
//!   name_len  u32
//!   name      name_len bytes, UTF-8
//!   rank      u32
//!   extents   rank x u64
//!   payload   product(extents) x f64
//! ```

use std::io::{Read, Write};

use crate::binio::{put_f64s, put_text, put_u32, put_u64, OffsetReader};
use crate::error::Result;
use crate::tape::Parameter;
use crate::tensor::Tensor;

pub const PARAM_MAGIC: &[u8; 8] = b"STEERPRM";
pub const PARAM_VERSION: u32 = 1;

const MAX_NAME: usize = 4096;
const MAX_RANK: usize = 8;

pub fn write_params(w: &mut impl Write, params: &[Parameter]) -> Result<()> {
    w.write_all(PARAM_MAGIC)?;
    put_u32(w, PARAM_VERSION)?;
    put_u32(w, params.len() as u32)?;
    for p in params {
        put_text(w, &p.name)?;
        put_u32(w, p.value.rank() as u32)?;
        for &e in p.value.shape() {
            put_u64(w, e as u64)?;
        }
        put_f64s(w, p.value.data())?;
    }
    Ok(())
}

pub fn read_params(r: &mut impl Read) -> Result<Vec<Parameter>> {
    let mut r = OffsetReader::new(r);
    read_params_from(&mut r)
}

pub(crate) fn read_params_from<R: Read>(r: &mut OffsetReader<R>) -> Result<Vec<Parameter>> {
    r.magic(PARAM_MAGIC)?;
    r.version(PARAM_VERSION)?;
    let count = r.u32("parameter count")? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name = r.text(MAX_NAME, "parameter name")?;
        let rank = r.u32("rank")? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(r.corrupt(format!("parameter `{name}` has invalid rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let e = r.u64("extent")?;
            if e == 0 || e > u32::MAX as u64 {
                return Err(r.corrupt(format!("parameter `{name}` has invalid extent {e}")));
            }
            shape.push(e as usize);
        }
        let n: usize = shape.iter().product();
        let data = r.f64s(n, "parameter payload")?;
        let value = Tensor::new(shape, data).map_err(|e| r.corrupt(e.to_string()))?;
        out.push(Parameter::new(name, value));
    }
    Ok(out)
}
