//! Model checkpoint serialization.
//!
//! Layout (all integers little-endian):
//!   magic "DLAB" | version u16 | spec u32 length + UTF-8 JSON |
//!   per parameter: name u32 length + UTF-8 | rank u32 | extents u32 each |
//!   f32 payload.
//!
//! Loading validates magic, version, the embedded spec, and that the stored
//! parameters match the spec's template name-for-name and shape-for-shape.
//! Round-trips are bitwise lossless.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Model, ModelSpec, Param};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"DLAB";
const VERSION: u16 = 1;

/// Serializes a model to the checkpoint byte layout.
pub fn checkpoint_bytes(model: &Model) -> Result<Vec<u8>> {
    let spec_json = serde_json::to_string(model.spec())?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(spec_json.len() as u32).to_le_bytes());
    out.extend_from_slice(spec_json.as_bytes());
    for p in model.params() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.tensor.rank() as u32).to_le_bytes());
        for &e in p.tensor.shape() {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in p.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(model)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(format!(
                "truncated checkpoint: wanted {n} bytes for {what} at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::format(format!("{what} is not UTF-8")))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

/// Parses checkpoint bytes into a model, validating against the embedded spec.
pub fn parse_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::format(format!(
            "unsupported checkpoint version {version}, expected {VERSION}"
        )));
    }
    let spec: ModelSpec = serde_json::from_str(&r.string("spec")?)
        .map_err(|e| Error::format(format!("bad embedded spec: {e}")))?;
    let template = spec.parameter_template()?;

    let mut params = Vec::with_capacity(template.len());
    for (want_name, want_shape) in &template {
        let name = r.string("parameter name")?;
        if &name != want_name {
            return Err(Error::format(format!(
                "parameter {} does not match spec (expected {want_name})",
                name
            )));
        }
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("extent")? as usize);
        }
        if &shape != want_shape {
            return Err(Error::format(format!(
                "parameter {name} shape {shape:?} does not match spec {want_shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(4 * n, "payload")?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(shape, data)?.with_grad();
        params.push(Param { name, tensor });
    }
    if !r.done() {
        return Err(Error::format(format!(
            "trailing bytes after last parameter at offset {}",
            r.pos
        )));
    }
    Ok(Model::from_parts(spec, params))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::format(format!("cannot read checkpoint {}: {e}", path.display())))?;
    parse_checkpoint(&bytes)
}

/// Hex SHA-256 digest of a model's checkpoint bytes. Content address for the
/// teacher cache and determinism checks.
pub fn model_digest(model: &Model) -> Result<String> {
    let bytes = checkpoint_bytes(model)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex_string(&hasher.finalize()))
}

pub fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Family;

    fn spec() -> ModelSpec {
        ModelSpec {
            family: Family::Mlp,
            depth_factor: 2,
            width_factor: 2,
            input_shape: vec![5],
            num_classes: 4,
            init_seed: 3,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let model = Model::build(&spec()).unwrap();
        let bytes = checkpoint_bytes(&model).unwrap();
        let loaded = parse_checkpoint(&bytes).unwrap();
        assert_eq!(loaded.spec(), model.spec());
        for (a, b) in model.params().iter().zip(loaded.params()) {
            assert_eq!(a.name, b.name);
            let bits_a: Vec<u32> = a.tensor.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = b.tensor.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
        // And the re-serialization is byte-identical.
        assert_eq!(checkpoint_bytes(&loaded).unwrap(), bytes);
    }

    #[test]
    fn wrong_magic_rejected() {
        let model = Model::build(&spec()).unwrap();
        let mut bytes = checkpoint_bytes(&model).unwrap();
        bytes[0] = b'X';
        let err = parse_checkpoint(&bytes).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn truncation_rejected() {
        let model = Model::build(&spec()).unwrap();
        let bytes = checkpoint_bytes(&model).unwrap();
        let err = parse_checkpoint(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn trailing_bytes_rejected() {
        let model = Model::build(&spec()).unwrap();
        let mut bytes = checkpoint_bytes(&model).unwrap();
        bytes.push(0);
        assert!(matches!(parse_checkpoint(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn digest_is_stable_and_content_sensitive() {
        let a = Model::build(&spec()).unwrap();
        let b = Model::build(&spec()).unwrap();
        assert_eq!(model_digest(&a).unwrap(), model_digest(&b).unwrap());
        let c = Model::build(&ModelSpec { init_seed: 4, ..spec() }).unwrap();
        assert_ne!(model_digest(&a).unwrap(), model_digest(&c).unwrap());
    }

    #[test]
    fn save_and_load_via_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = Model::build(&spec()).unwrap();
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(model_digest(&model).unwrap(), model_digest(&loaded).unwrap());
    }
}
