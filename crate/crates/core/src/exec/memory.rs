use std::collections::HashMap;

use crate::lower::size_of;
use crate::ops::{Value, NULL_BUF};
use crate::types::HType;

use super::TrapKind;

/// Largest single allocation the arena will grant.
pub const MAX_ALLOC: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufKind {
    /// A stack slot owned by one call frame.
    Stack,
    /// Allocated by `malloc`; released by `free`.
    Heap,
    /// A module global or a buffer created while marshaling arguments.
    Static,
}

#[derive(Debug, Clone)]
pub struct Buffer {
    pub bytes: Vec<u8>,
    /// Scalar element type used for width checks; `None` for untyped
    /// heap memory and aggregates.
    pub elem: Option<HType>,
    pub live: bool,
    pub kind: BufKind,
}

/// Dense symbol ids in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct Interner {
    ids: HashMap<String, u32>,
    names: Vec<String>,
}

impl Interner {
    pub fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.names.len() as u32;
        self.ids.insert(s.to_string(), id);
        self.names.push(s.to_string());
        id
    }

    pub fn lookup(&self, s: &str) -> Option<u32> {
        self.ids.get(s).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// The interpreter's address space: a list of bounds-checked buffers.
#[derive(Debug, Clone, Default)]
pub struct Memory {
    pub buffers: Vec<Buffer>,
}

/// Pointers are stored in memory as `((buf + 1) << 32) | off`, with 0 for
/// null. Offsets that do not fit in 32 bits encode an invalid buffer.
fn encode_ptr(buf: u32, off: u64) -> u64 {
    if buf == NULL_BUF {
        return if off == 0 { 0 } else { (u32::MAX as u64) << 32 };
    }
    if off > u32::MAX as u64 {
        return (u32::MAX as u64) << 32;
    }
    ((buf as u64 + 1) << 32) | off
}

fn decode_ptr(raw: u64) -> Value {
    if raw == 0 {
        return Value::null();
    }
    let hi = (raw >> 32) as u32;
    if hi == u32::MAX {
        return Value::Ptr { buf: NULL_BUF - 1, off: 0 };
    }
    Value::Ptr { buf: hi - 1, off: raw & 0xFFFF_FFFF }
}

fn scalar_size(t: &HType) -> Option<u64> {
    if t.is_scalar() {
        size_of(t).ok()
    } else {
        None
    }
}

impl Memory {
    pub fn alloc(&mut self, size: u64, elem: Option<HType>, kind: BufKind) -> Result<u32, TrapKind> {
        if size > MAX_ALLOC || self.buffers.len() >= (NULL_BUF - 1) as usize {
            return Err(TrapKind::AllocFailed);
        }
        let elem = elem.filter(|t| t.is_scalar());
        self.buffers.push(Buffer { bytes: vec![0; size as usize], elem, live: true, kind });
        Ok((self.buffers.len() - 1) as u32)
    }

    /// Allocates a buffer holding `len` elements of `elem`.
    pub fn alloc_array(&mut self, elem: &HType, len: u64, kind: BufKind) -> Result<u32, TrapKind> {
        let size = size_of(elem).map_err(|_| TrapKind::BadAccess)?;
        let total = size.checked_mul(len).ok_or(TrapKind::AllocFailed)?;
        self.alloc(total, Some(elem.clone()), kind)
    }

    pub fn free(&mut self, ptr: Value) -> Result<(), TrapKind> {
        let Value::Ptr { buf, off } = ptr else { return Err(TrapKind::BadAccess) };
        if buf == NULL_BUF {
            return Ok(());
        }
        let b = self.buffers.get_mut(buf as usize).ok_or(TrapKind::BadAccess)?;
        if b.kind != BufKind::Heap || off != 0 {
            return Err(TrapKind::BadAccess);
        }
        if !b.live {
            return Err(TrapKind::UseAfterFree);
        }
        b.live = false;
        b.bytes = Vec::new();
        Ok(())
    }

    /// Marks buffers dead and drops dead buffers from the end of the arena.
    pub fn release(&mut self, bufs: &[u32]) {
        for &b in bufs {
            if let Some(b) = self.buffers.get_mut(b as usize) {
                b.live = false;
                b.bytes = Vec::new();
            }
        }
        while self.buffers.last().is_some_and(|b| !b.live && b.kind == BufKind::Stack) {
            self.buffers.pop();
        }
    }

    fn locate(&self, ptr: Value, t: &HType, oob: TrapKind) -> Result<(usize, usize, usize), TrapKind> {
        let Value::Ptr { buf, off } = ptr else { return Err(TrapKind::BadAccess) };
        let size = scalar_size(t).ok_or(TrapKind::BadAccess)?;
        let b = self.buffers.get(buf as usize).ok_or_else(|| oob.clone())?;
        if !b.live {
            return Err(TrapKind::UseAfterFree);
        }
        if let Some(e) = &b.elem {
            if scalar_size(e) != Some(size) {
                return Err(TrapKind::BadAccess);
            }
        }
        let end = off.checked_add(size).ok_or_else(|| oob.clone())?;
        if end > b.bytes.len() as u64 {
            return Err(oob);
        }
        Ok((buf as usize, off as usize, size as usize))
    }

    pub fn load(&self, ptr: Value, t: &HType) -> Result<Value, TrapKind> {
        let (buf, off, size) = self.locate(ptr, t, TrapKind::OobLoad)?;
        let mut raw = [0u8; 8];
        raw[..size].copy_from_slice(&self.buffers[buf].bytes[off..off + size]);
        let bits = u64::from_le_bytes(raw);
        Ok(match t {
            HType::Int(w) => Value::Int { width: *w, bits: crate::ops::mask(*w, bits) },
            HType::F32 => Value::F32(bits as u32),
            HType::F64 => Value::F64(bits),
            HType::Ptr(_) => decode_ptr(bits),
            HType::Sym => Value::Sym(bits as u32),
            HType::HostBool => Value::Bool(bits != 0),
            HType::Handle => Value::Handle(bits as u32),
            _ => return Err(TrapKind::BadAccess),
        })
    }

    pub fn store(&mut self, ptr: Value, t: &HType, v: Value) -> Result<(), TrapKind> {
        let (buf, off, size) = self.locate(ptr, t, TrapKind::OobStore)?;
        let bits = match v {
            Value::Int { bits, .. } => bits,
            Value::F32(b) => b as u64,
            Value::F64(b) => b,
            Value::Ptr { buf, off } => encode_ptr(buf, off),
            Value::Sym(s) => s as u64,
            Value::Bool(b) => b as u64,
            Value::Handle(h) => h as u64,
            Value::Unit => return Err(TrapKind::BadAccess),
        };
        self.buffers[buf].bytes[off..off + size].copy_from_slice(&bits.to_le_bytes()[..size]);
        Ok(())
    }

    /// Bytes remaining in the buffer past `ptr`, if it points into a live buffer.
    pub fn remaining(&self, ptr: Value) -> Option<u64> {
        let Value::Ptr { buf, off } = ptr else { return None };
        let b = self.buffers.get(buf as usize).filter(|b| b.live)?;
        (b.bytes.len() as u64).checked_sub(off)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_scalars() {
        let mut m = Memory::default();
        let b = m.alloc(16, None, BufKind::Heap).unwrap();
        let p = Value::Ptr { buf: b, off: 8 };
        m.store(p, &HType::F64, Value::f64(1.5)).unwrap();
        assert_eq!(m.load(p, &HType::F64).unwrap(), Value::f64(1.5));
        let q = Value::Ptr { buf: b, off: 0 };
        m.store(q, &HType::ptr(HType::F64), p).unwrap();
        assert_eq!(m.load(q, &HType::ptr(HType::F64)).unwrap(), p);
        m.store(q, &HType::ptr(HType::F64), Value::null()).unwrap();
        assert_eq!(m.load(q, &HType::ptr(HType::F64)).unwrap(), Value::null());
    }

    #[test]
    fn bounds_and_liveness() {
        let mut m = Memory::default();
        let b = m.alloc_array(&HType::i32(), 2, BufKind::Heap).unwrap();
        assert_eq!(m.load(Value::Ptr { buf: b, off: 8 }, &HType::i32()), Err(TrapKind::OobLoad));
        assert_eq!(m.store(Value::Ptr { buf: b, off: 6 }, &HType::i32(), Value::int(32, 1)), Err(TrapKind::OobStore));
        assert_eq!(m.load(Value::Ptr { buf: b, off: 0 }, &HType::i64()), Err(TrapKind::BadAccess));
        assert_eq!(m.load(Value::null(), &HType::i32()), Err(TrapKind::OobLoad));
        m.free(Value::Ptr { buf: b, off: 0 }).unwrap();
        assert_eq!(m.load(Value::Ptr { buf: b, off: 0 }, &HType::i32()), Err(TrapKind::UseAfterFree));
    }

    #[test]
    fn interner_is_dense() {
        let mut i = Interner::default();
        assert_eq!((i.intern("c"), i.intern("a"), i.intern("c")), (0, 1, 0));
        assert_eq!(i.name(1), Some("a"));
    }
}
