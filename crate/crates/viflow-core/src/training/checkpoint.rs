//! VIFW checkpoint files holding model weights and optimizer state.
//!
//! Layout: the magic bytes `VIFW`, a little-endian u32 version, a u32
//! length-prefixed JSON blob with the model configuration, then a fixed
//! sequence of tensors. Each tensor is a u16 name length, the name bytes,
//! a u8 rank, one u32 per extent, and the row-major little-endian f32 data.
//! Tensors appear as the model parameters in declaration order, the step
//! counter under `adam.step`, then per parameter the first and second
//! moments under `adam.m.<name>` and `adam.v.<name>`.

use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::training::optimizer::AdamState;

/// Leading bytes of every checkpoint file.
pub const VIFW_MAGIC: &[u8; 4] = b"VIFW";
/// Current format version.
pub const VIFW_VERSION: u32 = 1;

/// Writes the model and optimizer state to `path`.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &Model,
    state: &AdamState,
) -> Result<()> {
    let path = path.as_ref();
    let params = model.params();
    if state.first_moments().len() != params.len() {
        return Err(Error::Shape(format!(
            "optimizer state holds {} moment slots, model has {} parameters",
            state.first_moments().len(),
            params.len()
        )));
    }
    let mut bytes = Vec::new();
    bytes.extend_from_slice(VIFW_MAGIC);
    bytes.extend_from_slice(&VIFW_VERSION.to_le_bytes());
    let config = serde_json::to_string(model.config()).expect("plain config serializes");
    bytes.extend_from_slice(&(config.len() as u32).to_le_bytes());
    bytes.extend_from_slice(config.as_bytes());
    for id in params.ids() {
        write_tensor(&mut bytes, params.name(id), params.value(id));
    }
    let step = Tensor::new(vec![1], vec![state.step() as f32]).expect("one element");
    write_tensor(&mut bytes, "adam.step", &step);
    for (slot, id) in params.ids().enumerate() {
        write_tensor(
            &mut bytes,
            &format!("adam.m.{}", params.name(id)),
            &state.first_moments()[slot],
        );
        write_tensor(
            &mut bytes,
            &format!("adam.v.{}", params.name(id)),
            &state.second_moments()[slot],
        );
    }
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a checkpoint back into a model and optimizer state.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model, AdamState)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_checkpoint(&bytes)
}

fn write_tensor(bytes: &mut Vec<u8>, name: &str, tensor: &Tensor<f32>) {
    let name_len = u16::try_from(name.len()).expect("tensor names stay short");
    bytes.extend_from_slice(&name_len.to_le_bytes());
    bytes.extend_from_slice(name.as_bytes());
    let rank = u8::try_from(tensor.shape().len()).expect("tensor ranks stay small");
    bytes.push(rank);
    for &extent in tensor.shape() {
        bytes.extend_from_slice(&(extent as u32).to_le_bytes());
    }
    for &value in tensor.data() {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("file ends inside {what}"),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(slice)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2, what)?.try_into().expect("length checked"),
        ))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("length checked"),
        ))
    }
}

fn read_tensor(cursor: &mut Cursor) -> Result<(String, Tensor<f32>, u64)> {
    let header = cursor.pos as u64;
    let name_len = cursor.u16("a tensor name length")? as usize;
    let name_bytes = cursor.take(name_len, "a tensor name")?;
    let name = std::str::from_utf8(name_bytes)
        .map_err(|_| Error::Format {
            offset: header + 2,
            message: "tensor name is not UTF-8".to_string(),
        })?
        .to_string();
    let rank = cursor.take(1, "a tensor rank")?[0] as usize;
    let mut extents = Vec::with_capacity(rank);
    for _ in 0..rank {
        extents.push(cursor.u32("a tensor extent")? as usize);
    }
    let byte_len = extents
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format {
            offset: header,
            message: format!("tensor {name:?} extents {extents:?} overflow"),
        })?;
    let data_bytes = cursor.take(byte_len, &format!("tensor {name:?} data"))?;
    let data: Vec<f32> = data_bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunked by four")))
        .collect();
    let tensor = Tensor::new(extents, data).map_err(|e| Error::Format {
        offset: header,
        message: format!("tensor {name:?} is malformed: {e}"),
    })?;
    Ok((name, tensor, header))
}

fn expect_tensor(cursor: &mut Cursor, name: &str, shape: &[usize]) -> Result<Tensor<f32>> {
    let (found, tensor, header) = read_tensor(cursor)?;
    if found != name {
        return Err(Error::Format {
            offset: header,
            message: format!("expected tensor {name:?}, found {found:?}"),
        });
    }
    if tensor.shape() != shape {
        return Err(Error::Format {
            offset: header,
            message: format!(
                "tensor {name:?} is {:?}, expected {shape:?}",
                tensor.shape()
            ),
        });
    }
    Ok(tensor)
}

fn parse_checkpoint(bytes: &[u8]) -> Result<(Model, AdamState)> {
    let mut cursor = Cursor { bytes, pos: 0 };
    let magic = cursor.take(4, "the magic")?;
    if magic != VIFW_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "missing the VIFW magic".to_string(),
        });
    }
    let version = cursor.u32("the version")?;
    if version != VIFW_VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported version {version}, expected {VIFW_VERSION}"),
        });
    }
    let config_len = cursor.u32("the config length")? as usize;
    let config_bytes = cursor.take(config_len, "the config blob")?;
    let config: ModelConfig = serde_json::from_slice(config_bytes).map_err(|e| Error::Format {
        offset: 12,
        message: format!("config blob does not parse: {e}"),
    })?;
    let mut model = Model::build(config, 0)?;

    let ids: Vec<_> = model.params().ids().collect();
    for &id in &ids {
        let name = model.params().name(id).to_string();
        let shape = model.params().value(id).shape().to_vec();
        let tensor = expect_tensor(&mut cursor, &name, &shape)?;
        *model.params_mut().value_mut(id) = tensor;
    }

    let step_header = cursor.pos as u64;
    let step_tensor = expect_tensor(&mut cursor, "adam.step", &[1])?;
    let raw_step = step_tensor.data()[0];
    if !raw_step.is_finite() || raw_step < 0.0 || raw_step.fract() != 0.0 {
        return Err(Error::Format {
            offset: step_header,
            message: format!("adam.step must be a whole non-negative count, got {raw_step}"),
        });
    }
    let step = raw_step as u64;

    let mut m = Vec::with_capacity(ids.len());
    let mut v = Vec::with_capacity(ids.len());
    for &id in &ids {
        let name = model.params().name(id).to_string();
        let shape = model.params().value(id).shape().to_vec();
        m.push(expect_tensor(&mut cursor, &format!("adam.m.{name}"), &shape)?);
        v.push(expect_tensor(&mut cursor, &format!("adam.v.{name}"), &shape)?);
    }
    if cursor.pos != bytes.len() {
        return Err(Error::Format {
            offset: cursor.pos as u64,
            message: "trailing bytes after the last tensor".to_string(),
        });
    }
    let state = AdamState::from_parts(m, v, step)?;
    Ok((model, state))
}
