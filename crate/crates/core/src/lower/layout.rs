use thiserror::Error;

use crate::types::HType;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub size: u64,
    pub align: u64,
    /// Byte offset of each struct field, in declaration order.
    pub field_offsets: Vec<u64>,
    /// Element stride for arrays.
    pub stride: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("type {0} has no size")]
pub struct UnsizedType(pub HType);

fn scalar(size: u64) -> Layout {
    Layout { size, align: size, field_offsets: vec![], stride: None }
}

fn round_up(n: u64, align: u64) -> u64 {
    n.div_ceil(align) * align
}

pub fn layout_of(t: &HType) -> Result<Layout, UnsizedType> {
    Ok(match t {
        HType::Int(1) | HType::Int(8) | HType::HostBool => scalar(1),
        HType::Int(16) => scalar(2),
        HType::Int(32) | HType::F32 => scalar(4),
        HType::Int(64) | HType::F64 | HType::Ptr(_) | HType::Sym | HType::Handle => scalar(8),
        HType::Array(elem, Some(n)) => {
            let e = layout_of(elem)?;
            let stride = round_up(e.size, e.align);
            Layout { size: stride * n, align: e.align, field_offsets: vec![], stride: Some(stride) }
        }
        HType::Struct(fields) => {
            let mut off = 0;
            let mut align = 1;
            let mut offsets = Vec::with_capacity(fields.len());
            for (_, ft) in fields {
                let l = layout_of(ft)?;
                off = round_up(off, l.align);
                offsets.push(off);
                off += l.size;
                align = align.max(l.align);
            }
            Layout { size: round_up(off, align), align, field_offsets: offsets, stride: None }
        }
        _ => return Err(UnsizedType(t.clone())),
    })
}

/// Size of a sized type, used for pointer arithmetic.
pub fn size_of(t: &HType) -> Result<u64, UnsizedType> {
    layout_of(t).map(|l| round_up(l.size, l.align))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalars() {
        assert_eq!(layout_of(&HType::i64()).unwrap(), scalar(8));
        assert_eq!(layout_of(&HType::i1()).unwrap().size, 1);
        assert_eq!(layout_of(&HType::Int(16)).unwrap().size, 2);
        assert_eq!(layout_of(&HType::ptr(HType::F32)).unwrap().size, 8);
    }

    #[test]
    fn struct_padding() {
        let t = HType::Struct(vec![("a".into(), HType::i32()), ("b".into(), HType::i64())]);
        let l = layout_of(&t).unwrap();
        assert_eq!((l.size, l.align, l.field_offsets.clone()), (16, 8, vec![0, 8]));
        let t = HType::Struct(vec![("a".into(), HType::i64()), ("b".into(), HType::i8())]);
        assert_eq!(layout_of(&t).unwrap().size, 16);
    }

    #[test]
    fn arrays() {
        let l = layout_of(&HType::array(HType::F32, 10)).unwrap();
        assert_eq!((l.size, l.align, l.stride), (40, 4, Some(4)));
        assert!(layout_of(&HType::Array(Box::new(HType::F32), None)).is_err());
        assert!(layout_of(&HType::Void).is_err());
    }
}
