//! Binary weights file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "RPNT"  magic
//! u32     format version (1)
//! u32     tensor count
//! per tensor:
//!   u16   name length, then that many UTF-8 bytes
//!   u8    rank
//!   u32   each dimension
//!   f32   data, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};
use crate::io_util::write_atomic;

pub const MAGIC: &[u8; 4] = b"RPNT";
pub const VERSION: u32 = 1;

/// Named tensors in a stable order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightSet {
    entries: Vec<(String, Tensor)>,
}

impl WeightSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `name`, keeping the original position on replace.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = tensor,
            None => self.entries.push((name, tensor)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Weights(format!("missing tensor `{name}`")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, t) in &self.entries {
            let bytes = name.as_bytes();
            let len = u16::try_from(bytes.len())
                .map_err(|_| Error::Weights(format!("tensor name `{name}` too long")))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(bytes)?;
            let rank = u8::try_from(t.rank())
                .map_err(|_| Error::Weights(format!("tensor `{name}` rank too large")))?;
            w.write_all(&[rank])?;
            for &d in t.shape() {
                let d = u32::try_from(d)
                    .map_err(|_| Error::Weights(format!("tensor `{name}` dimension too large")))?;
                w.write_all(&d.to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(t.len() * 4);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Weights("bad magic, not an RPNT weights file".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Weights(format!("unsupported format version {version}")));
        }
        let count = read_u32(r)?;
        let mut set = WeightSet::new();
        for _ in 0..count {
            let mut len = [0u8; 2];
            r.read_exact(&mut len)?;
            let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Weights("tensor name is not UTF-8".into()))?;
            let mut rank = [0u8; 1];
            r.read_exact(&mut rank)?;
            let shape = (0..rank[0])
                .map(|_| read_u32(r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let mut raw = vec![0u8; n * 4];
            r.read_exact(&mut raw)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if set.get(&name).is_some() {
                return Err(Error::Weights(format!("duplicate tensor `{name}`")));
            }
            set.insert(name, Tensor::from_vec(&shape, data)?);
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let mut w = WeightSet::new();
        w.insert("ab", Tensor::from_vec(&[2], vec![1.0, -2.0]).unwrap());
        let b = w.to_bytes().unwrap();
        let mut want = Vec::new();
        want.extend_from_slice(b"RPNT");
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&2u16.to_le_bytes());
        want.extend_from_slice(b"ab");
        want.push(1);
        want.extend_from_slice(&2u32.to_le_bytes());
        want.extend_from_slice(&1.0f32.to_le_bytes());
        want.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(b, want);
    }

    #[test]
    fn rejects_garbage() {
        assert!(WeightSet::read_from(&mut &b"NOPE\x01\0\0\0"[..]).is_err());
        let mut w = WeightSet::new();
        w.insert("x", Tensor::zeros(&[3]));
        let b = w.to_bytes().unwrap();
        assert!(WeightSet::read_from(&mut &b[..b.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn bit_exact_round_trip(seed in any::<u64>(), dims in proptest::collection::vec(1usize..4, 0..4), names in 1usize..4) {
            let mut rng = Rng::new(seed);
            let mut w = WeightSet::new();
            for i in 0..names {
                let mut t = Tensor::randn(&dims, 3.0, &mut rng);
                if let Some(v) = t.data_mut().first_mut() { *v = -0.0; }
                w.insert(format!("layer{i}.weight"), t);
            }
            let bytes = w.to_bytes().unwrap();
            let back = WeightSet::read_from(&mut bytes.as_slice()).unwrap();
            prop_assert_eq!(back.to_bytes().unwrap(), bytes);
            for ((n1, t1), (n2, t2)) in w.iter().zip(back.iter()) {
                prop_assert_eq!(n1, n2);
                prop_assert_eq!(t1.shape(), t2.shape());
                let b1: Vec<u32> = t1.data().iter().map(|v| v.to_bits()).collect();
                let b2: Vec<u32> = t2.data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(b1, b2);
            }
        }
    }
}
