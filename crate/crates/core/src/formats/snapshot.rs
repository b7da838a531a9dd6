//! Gallery snapshots in a canonical text form and a compact binary form.
//!
//! Text:
//!
//! ```text
//! psearch-table 1
//! dim 512
//! next_id 2
//! capacity none
//! slot 0 front 1.5e-2 -3.1e-1 ...
//! slot 1 side ...
//! ```
//!
//! Slots are listed in `(id, orientation)` order and floats use the shortest
//! representation that parses back to the same bits.
//!
//! Binary, little-endian: magic `PSTB`, `u16` version, `u16` zero, `u32` dim,
//! `u64` next_id, `u64` capacity (`u64::MAX` for none), `u64` slot count, then
//! per slot `u64` id, `u8` orientation, `dim` × `f64`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::matcher::PooledTable;
use crate::types::{l2_norm, Orientation, ORIENTATION_COUNT};

const TEXT_HEADER: &str = "psearch-table 1";
const MAGIC: &[u8; 4] = b"PSTB";
const VERSION: u16 = 1;

/// Stored features may drift from unit length by at most this much.
const NORM_TOLERANCE: f64 = 1e-9;

type Slots = Vec<[Option<Vec<f64>>; ORIENTATION_COUNT]>;

fn slots_to_table(dim: usize, capacity: Option<usize>, slots: Slots) -> Result<PooledTable, String> {
    if dim == 0 {
        return Err("dim must be positive".into());
    }
    if let Some(cap) = capacity {
        if slots.len() > cap {
            return Err(format!("{} identities exceed capacity {cap}", slots.len()));
        }
    }
    let mut table = PooledTable::new(dim, capacity);
    for (id, row) in slots.into_iter().enumerate() {
        if row.iter().all(Option::is_none) {
            return Err(format!("identity {id} has no slots"));
        }
        for f in row.iter().flatten() {
            if f.iter().any(|x| !x.is_finite()) || (l2_norm(f) - 1.0).abs() > NORM_TOLERANCE {
                return Err(format!("identity {id} holds a feature that is not unit length"));
            }
        }
        table.push_entry(row).map_err(|e| e.to_string())?;
    }
    Ok(table)
}

fn empty_slots(n: u64) -> Result<Slots, String> {
    if n > 1 << 32 {
        return Err(format!("next_id {n} is implausibly large"));
    }
    Ok((0..n).map(|_| [None, None, None]).collect())
}

pub fn to_text(table: &PooledTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{TEXT_HEADER}");
    let _ = writeln!(s, "dim {}", table.dim());
    let _ = writeln!(s, "next_id {}", table.next_id().0);
    match table.capacity() {
        Some(c) => {
            let _ = writeln!(s, "capacity {c}");
        }
        None => s.push_str("capacity none\n"),
    }
    for (id, slots) in table.entries() {
        for (o, slot) in Orientation::ALL.into_iter().zip(slots) {
            if let Some(f) = slot {
                let _ = write!(s, "slot {} {}", id.0, o.name());
                for x in f {
                    let _ = write!(s, " {x:e}");
                }
                s.push('\n');
            }
        }
    }
    s
}

fn header_value<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Result<(usize, &'a str)> {
    let (n, line) = lines.next().ok_or_else(|| Error::parse(0, format!("missing {key} line")))?;
    let value = line
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| Error::parse(n, format!("expected `{key} <value>`")))?;
    Ok((n, value.trim()))
}

pub fn from_text(text: &str) -> Result<PooledTable> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == TEXT_HEADER => {}
        Some((n, _)) => return Err(Error::parse(n, format!("expected `{TEXT_HEADER}`"))),
        None => return Err(Error::parse(1, "empty snapshot")),
    }
    let (n, v) = header_value(&mut lines, "dim")?;
    let dim: usize = v.parse().map_err(|_| Error::parse(n, format!("invalid dim {v:?}")))?;
    let (n, v) = header_value(&mut lines, "next_id")?;
    let next_id: u64 = v.parse().map_err(|_| Error::parse(n, format!("invalid next_id {v:?}")))?;
    let (n, v) = header_value(&mut lines, "capacity")?;
    let capacity = match v {
        "none" => None,
        _ => Some(v.parse::<usize>().map_err(|_| Error::parse(n, format!("invalid capacity {v:?}")))?),
    };

    let mut slots = empty_slots(next_id).map_err(|m| Error::parse(n, m))?;
    let mut last: Option<(u64, usize)> = None;
    for (n, line) in lines {
        let mut parts = line.split_ascii_whitespace();
        if parts.next() != Some("slot") {
            return Err(Error::parse(n, "expected a slot line"));
        }
        let id: u64 = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(n, "invalid identity"))?;
        let o = parts
            .next()
            .and_then(|t| Orientation::ALL.into_iter().find(|o| o.name() == t))
            .ok_or_else(|| Error::parse(n, "invalid orientation"))?;
        if id >= next_id {
            return Err(Error::parse(n, format!("identity {id} is not below next_id {next_id}")));
        }
        if last.is_some_and(|prev| prev >= (id, o.index())) {
            return Err(Error::parse(n, "slots must be sorted and unique"));
        }
        last = Some((id, o.index()));
        let feature = parts
            .map(|t| t.parse::<f64>().map_err(|_| Error::parse(n, format!("invalid number {t:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        if feature.len() != dim {
            return Err(Error::parse(n, format!("expected {dim} values, found {}", feature.len())));
        }
        slots[id as usize][o.index()] = Some(feature);
    }
    slots_to_table(dim, capacity, slots).map_err(|m| Error::parse(0, m))
}

pub fn to_binary(table: &PooledTable) -> Vec<u8> {
    let dim = table.dim();
    let slot_count: usize = Orientation::ALL.iter().map(|&o| table.occupied(o)).sum();
    let mut out = Vec::with_capacity(36 + slot_count * (9 + 8 * dim));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&table.next_id().0.to_le_bytes());
    out.extend_from_slice(&table.capacity().map_or(u64::MAX, |c| c as u64).to_le_bytes());
    out.extend_from_slice(&(slot_count as u64).to_le_bytes());
    for (id, slots) in table.entries() {
        for (o, slot) in Orientation::ALL.into_iter().zip(slots) {
            if let Some(f) = slot {
                out.extend_from_slice(&id.0.to_le_bytes());
                out.push(o.index() as u8);
                for x in f {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated snapshot")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], String> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u64(&mut self) -> Result<u64, String> {
        self.array().map(u64::from_le_bytes)
    }
}

fn decode_binary(bytes: &[u8]) -> Result<PooledTable, String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = u16::from_le_bytes(c.array()?);
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    c.take(2)?;
    let dim = u32::from_le_bytes(c.array()?) as usize;
    let next_id = c.u64()?;
    let capacity = match c.u64()? {
        u64::MAX => None,
        v => Some(usize::try_from(v).map_err(|_| "capacity out of range")?),
    };
    let count = c.u64()?;
    let mut slots = empty_slots(next_id)?;
    let mut last: Option<(u64, usize)> = None;
    for _ in 0..count {
        let id = c.u64()?;
        let o = Orientation::from_index(c.take(1)?[0] as usize).ok_or("invalid orientation")?;
        if id >= next_id {
            return Err(format!("identity {id} is not below next_id {next_id}"));
        }
        if last.is_some_and(|prev| prev >= (id, o.index())) {
            return Err("slots must be sorted and unique".into());
        }
        last = Some((id, o.index()));
        let raw = c.take(dim.checked_mul(8).ok_or("dim out of range")?)?;
        let feature = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        slots[id as usize][o.index()] = Some(feature);
    }
    if c.pos != bytes.len() {
        return Err("trailing bytes".into());
    }
    slots_to_table(dim, capacity, slots)
}

pub fn from_binary(bytes: &[u8]) -> Result<PooledTable> {
    decode_binary(bytes).map_err(Error::config)
}
