//! `HFWC` window cache: a little-endian dump of labelled windows.

use std::io::{Read, Write};

use crate::binio::*;
use crate::error::{Error, Result};

use super::{TrendLabel, WindowPair};

const MAGIC: &[u8; 4] = b"HFWC";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct WindowCache {
    pub in_len: usize,
    pub out_len: usize,
    pub windows: Vec<WindowPair>,
}

pub fn write_cache(w: &mut impl Write, cache: &WindowCache) -> Result<()> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    write_u32(w, cache.in_len as u32)?;
    write_u32(w, cache.out_len as u32)?;
    write_u64(w, cache.windows.len() as u64)?;
    for win in &cache.windows {
        if win.input.len() != cache.in_len || win.target.len() != cache.out_len {
            return Err(Error::Geometry(format!(
                "window {}@{} is {}+{}, cache is {}+{}",
                win.recording_id,
                win.offset,
                win.input.len(),
                win.target.len(),
                cache.in_len,
                cache.out_len
            )));
        }
        write_u8(w, win.label.code())?;
        write_f64s(w, &win.input)?;
        write_f64s(w, &win.target)?;
        match &win.input_rpm {
            Some(rpm) if rpm.len() == cache.in_len => {
                write_u8(w, 1)?;
                write_f64s(w, rpm)?;
            }
            Some(rpm) => {
                return Err(Error::Geometry(format!(
                    "rpm block has {} values, expected {}",
                    rpm.len(),
                    cache.in_len
                )))
            }
            None => write_u8(w, 0)?,
        }
        write_str(w, &win.recording_id)?;
        write_u64(w, win.offset as u64)?;
    }
    Ok(())
}

pub fn read_cache(r: &mut impl Read) -> Result<WindowCache> {
    expect_magic(r, MAGIC)?;
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported cache version {version}")));
    }
    let in_len = read_u32(r)? as usize;
    let out_len = read_u32(r)? as usize;
    let count = read_u64(r)?;
    let mut windows = Vec::with_capacity(count.min(1 << 20) as usize);
    for _ in 0..count {
        let code = read_u8(r)?;
        let label = TrendLabel::from_code(code)
            .ok_or_else(|| Error::Format(format!("bad label byte {code}")))?;
        let mut input = read_f64s(r, in_len + out_len)?;
        let target = input.split_off(in_len);
        let input_rpm = match read_u8(r)? {
            0 => None,
            1 => Some(read_f64s(r, in_len)?),
            flag => return Err(Error::Format(format!("bad rpm presence flag {flag}"))),
        };
        let recording_id = read_str(r)?;
        let offset = read_u64(r)? as usize;
        windows.push(WindowPair {
            input,
            target,
            input_rpm,
            label,
            recording_id,
            offset,
        });
    }
    Ok(WindowCache {
        in_len,
        out_len,
        windows,
    })
}
