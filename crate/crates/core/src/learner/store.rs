//! Binary model file, one per action.
//!
//! All integers and floats are little-endian; strings are a u32 byte length
//! followed by UTF-8 bytes.
//!
//! ```text
//! magic            4 bytes  "CDAM"
//! version          u16      (1)
//! action code      str
//! action kind      u8       0 = lab, 1 = medication
//! n_groups         u32
//!   group id       u32
//!   group name     str
//! n_columns        u32
//!   column index   u32      (catalog feature index, ascending)
//! weights          f64 x n_columns
//! bias             f64
//! C                f64
//! epochs           u32
//! seed             u64
//! n_bins           u32
//!   lower, upper, center, rate   f64 x 4
//!   count          u64
//! auc              f64
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{CalibratedActionModel, CalibrationBin, Calibrator, LinearModel, TrainConfig};
use crate::error::{Error, Result};
use crate::segmentation::{Action, ActionKind};

pub const MODEL_MAGIC: &[u8; 4] = b"CDAM";
pub const MODEL_FORMAT_VERSION: u16 = 1;

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LE>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::ModelFormat(format!("invalid UTF-8: {e}")))
}

pub fn write_model<W: Write>(mut w: W, m: &CalibratedActionModel) -> Result<()> {
    if m.groups.len() != m.group_names.len() || m.columns.len() != m.model.weights.len() {
        return Err(Error::ModelFormat("inconsistent model dimensions".into()));
    }
    w.write_all(MODEL_MAGIC)?;
    w.write_u16::<LE>(MODEL_FORMAT_VERSION)?;
    write_str(&mut w, &m.action.code)?;
    w.write_u8(match m.action.kind {
        ActionKind::Lab => 0,
        ActionKind::Medication => 1,
    })?;
    w.write_u32::<LE>(m.groups.len() as u32)?;
    for (id, name) in m.groups.iter().zip(&m.group_names) {
        w.write_u32::<LE>(*id as u32)?;
        write_str(&mut w, name)?;
    }
    w.write_u32::<LE>(m.columns.len() as u32)?;
    for &c in &m.columns {
        w.write_u32::<LE>(c as u32)?;
    }
    for &v in &m.model.weights {
        w.write_f64::<LE>(v)?;
    }
    w.write_f64::<LE>(m.model.bias)?;
    w.write_f64::<LE>(m.model.config.c)?;
    w.write_u32::<LE>(m.model.config.epochs)?;
    w.write_u64::<LE>(m.model.config.seed)?;
    w.write_u32::<LE>(m.calibrator.bins.len() as u32)?;
    for b in &m.calibrator.bins {
        for v in [b.lower, b.upper, b.center, b.rate] {
            w.write_f64::<LE>(v)?;
        }
        w.write_u64::<LE>(b.count)?;
    }
    w.write_f64::<LE>(m.auc)?;
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<CalibratedActionModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::ModelFormat("bad magic, not a model file".into()));
    }
    let version = r.read_u16::<LE>()?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let code = read_str(&mut r)?;
    let kind = match r.read_u8()? {
        0 => ActionKind::Lab,
        1 => ActionKind::Medication,
        k => return Err(Error::ModelFormat(format!("unknown action kind {k}"))),
    };
    let n_groups = r.read_u32::<LE>()? as usize;
    let mut groups = Vec::with_capacity(n_groups);
    let mut group_names = Vec::with_capacity(n_groups);
    for _ in 0..n_groups {
        groups.push(r.read_u32::<LE>()? as usize);
        group_names.push(read_str(&mut r)?);
    }
    let n_cols = r.read_u32::<LE>()? as usize;
    let columns = (0..n_cols)
        .map(|_| r.read_u32::<LE>().map(|c| c as usize))
        .collect::<std::io::Result<Vec<_>>>()?;
    let mut weights = vec![0.0; n_cols];
    r.read_f64_into::<LE>(&mut weights)?;
    let bias = r.read_f64::<LE>()?;
    let config = TrainConfig {
        c: r.read_f64::<LE>()?,
        epochs: r.read_u32::<LE>()?,
        seed: r.read_u64::<LE>()?,
    };
    let n_bins = r.read_u32::<LE>()? as usize;
    if n_bins == 0 {
        return Err(Error::ModelFormat("calibrator has no bins".into()));
    }
    let mut bins = Vec::with_capacity(n_bins);
    for _ in 0..n_bins {
        bins.push(CalibrationBin {
            lower: r.read_f64::<LE>()?,
            upper: r.read_f64::<LE>()?,
            center: r.read_f64::<LE>()?,
            rate: r.read_f64::<LE>()?,
            count: r.read_u64::<LE>()?,
        });
    }
    let auc = r.read_f64::<LE>()?;
    Ok(CalibratedActionModel {
        action: Action { code, kind },
        groups,
        group_names,
        columns,
        model: LinearModel {
            weights,
            bias,
            config,
            objective_history: vec![],
        },
        calibrator: Calibrator { bins },
        auc,
    })
}
