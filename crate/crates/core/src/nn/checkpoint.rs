//! Self-describing binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!   magic "MMBEAMNN" | u32 version | u32 tensor count |
//!   per tensor: u32 name length | name bytes | u8 trainable |
//!               u32 ndim | u64 dims... | f64 data...

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::tape::ParamSet;
use super::tensor::Tensor;

const MAGIC: &[u8; 8] = b"MMBEAMNN";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum CheckpointError {
    BadMagic,
    UnsupportedVersion(u32),
    Truncated,
    /// Stored shape disagrees with the parameter of the same name.
    ShapeMismatch { name: String, stored: Vec<usize>, expected: Vec<usize> },
    /// The checkpoint has no tensor for this parameter.
    MissingTensor(String),
    /// The checkpoint carries a tensor the target set does not know.
    UnknownTensor(String),
    MalformedName,
}

impl core::fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CheckpointError::BadMagic => write!(f, "not a parameter checkpoint (bad magic)"),
            CheckpointError::UnsupportedVersion(v) => write!(f, "unsupported checkpoint version {v}"),
            CheckpointError::Truncated => write!(f, "checkpoint truncated"),
            CheckpointError::ShapeMismatch { name, stored, expected } => write!(
                f,
                "tensor {name:?}: stored shape {stored:?} does not match expected {expected:?}"
            ),
            CheckpointError::MissingTensor(name) => write!(f, "checkpoint lacks tensor {name:?}"),
            CheckpointError::UnknownTensor(name) => write!(f, "checkpoint has unknown tensor {name:?}"),
            CheckpointError::MalformedName => write!(f, "tensor name is not valid UTF-8"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CheckpointError {}

pub fn encode_checkpoint(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for entry in params.entries() {
        out.extend_from_slice(&(entry.name.len() as u32).to_le_bytes());
        out.extend_from_slice(entry.name.as_bytes());
        out.push(entry.trainable as u8);
        out.extend_from_slice(&(entry.tensor.shape().len() as u32).to_le_bytes());
        for &dim in entry.tensor.shape() {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for &v in entry.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
}

/// Decodes a checkpoint into a fresh parameter set.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParamSet, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let count = r.u32()? as usize;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = core::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CheckpointError::MalformedName)?
            .to_string();
        let trainable = r.u8()? != 0;
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
        }
        let tensor = Tensor::from_vec(&shape, data)
            .map_err(|_| CheckpointError::Truncated)?;
        params.add(name, tensor, trainable);
    }
    Ok(params)
}

/// Loads checkpoint values into an existing parameter set by name. Every
/// parameter must be present with a matching shape; mismatches are rejected
/// by name before anything is written.
pub fn load_checkpoint_into(
    params: &mut ParamSet,
    bytes: &[u8],
) -> Result<(), CheckpointError> {
    let loaded = decode_checkpoint(bytes)?;
    for entry in loaded.entries() {
        let Some(slot) = params.slot(&entry.name) else {
            return Err(CheckpointError::UnknownTensor(entry.name.clone()));
        };
        let expected = params.tensor(slot).shape();
        if expected != entry.tensor.shape() {
            return Err(CheckpointError::ShapeMismatch {
                name: entry.name.clone(),
                stored: entry.tensor.shape().to_vec(),
                expected: expected.to_vec(),
            });
        }
    }
    for entry in params.entries() {
        if loaded.slot(&entry.name).is_none() {
            return Err(CheckpointError::MissingTensor(entry.name.clone()));
        }
    }
    for entry in loaded.entries() {
        let slot = params.slot(&entry.name).expect("checked above");
        *params.tensor_mut(slot) = entry.tensor.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sample_params() -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("a.w", Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.5, 0.0, 1e-9, -7.25]).unwrap(), true);
        ps.add("a.b", Tensor::from_vec(&[2], vec![0.5, -0.5]).unwrap(), true);
        ps.add("bn.mean", Tensor::from_vec(&[2], vec![0.1, 0.2]).unwrap(), false);
        ps
    }

    #[test]
    fn round_trip_is_lossless() {
        let ps = sample_params();
        let bytes = encode_checkpoint(&ps);
        let decoded = decode_checkpoint(&bytes).unwrap();
        assert_eq!(ps, decoded);
    }

    #[test]
    fn shape_mismatch_is_rejected_by_name() {
        let ps = sample_params();
        let bytes = encode_checkpoint(&ps);
        let mut target = ParamSet::new();
        target.add("a.w", Tensor::zeros(&[3, 2]), true);
        target.add("a.b", Tensor::zeros(&[2]), true);
        target.add("bn.mean", Tensor::zeros(&[2]), false);
        let err = load_checkpoint_into(&mut target, &bytes).unwrap_err();
        assert!(matches!(err, CheckpointError::ShapeMismatch { ref name, .. } if name == "a.w"));
        // Nothing was written.
        assert_eq!(target.tensor(1).data(), &[0.0, 0.0]);
    }

    #[test]
    fn missing_and_unknown_tensors_are_rejected() {
        let ps = sample_params();
        let bytes = encode_checkpoint(&ps);

        let mut extra = sample_params();
        extra.add("extra", Tensor::zeros(&[1]), true);
        assert!(matches!(
            load_checkpoint_into(&mut extra, &bytes),
            Err(CheckpointError::MissingTensor(ref n)) if n == "extra"
        ));

        let mut fewer = ParamSet::new();
        fewer.add("a.w", Tensor::zeros(&[2, 3]), true);
        assert!(matches!(
            load_checkpoint_into(&mut fewer, &bytes),
            Err(CheckpointError::UnknownTensor(_))
        ));
    }

    #[test]
    fn garbage_is_rejected() {
        assert_eq!(decode_checkpoint(b"junkjunk"), Err(CheckpointError::BadMagic));
        let ps = sample_params();
        let bytes = encode_checkpoint(&ps);
        assert_eq!(
            decode_checkpoint(&bytes[..bytes.len() - 3]),
            Err(CheckpointError::Truncated)
        );
    }
}
