//! Directory checkpoints: a text `manifest.txt` describing every tensor plus
//! a `tensors.bin` payload of little-endian values in the training dtype.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::tensor::{Real, Tensor};
use crate::{Error, Result};

const MAGIC: &str = "ecg-jepa-checkpoint 1";
const MANIFEST: &str = "manifest.txt";
const PAYLOAD: &str = "tensors.bin";

/// Exact position of a ChaCha generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }

    fn encode(&self) -> String {
        let hex: String = self.seed.iter().map(|b| format!("{b:02x}")).collect();
        format!("{hex} {} {}", self.stream, self.word_pos)
    }

    fn decode(s: &str) -> Option<Self> {
        let mut it = s.split_whitespace();
        let hex = it.next()?;
        if hex.len() != 64 {
            return None;
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).ok()?;
        }
        Some(Self {
            seed,
            stream: it.next()?.parse().ok()?,
            word_pos: it.next()?.parse().ok()?,
        })
    }
}

/// Everything needed to resume training or run evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub step: u64,
    pub rng: Option<RngState>,
    /// Free-form `key = value` metadata, typically the resolved run config.
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor<T>)>,
}

impl<T: Real> Checkpoint<T> {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Tensors under `prefix`, with the prefix stripped.
    pub fn group(&self, prefix: &str) -> Vec<(String, Tensor<T>)> {
        self.tensors
            .iter()
            .filter_map(|(n, t)| n.strip_prefix(prefix).map(|s| (s.to_string(), t.clone())))
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = format!("{MAGIC}\ndtype {}\nstep {}\n", T::DTYPE, self.step);
        if let Some(rng) = &self.rng {
            let _ = writeln!(manifest, "rng {}", rng.encode());
        }
        for (k, v) in &self.meta {
            if k.contains(char::is_whitespace) || v.contains('\n') {
                return Err(Error::Checkpoint(format!("unstorable metadata key {k:?}")));
            }
            let _ = writeln!(manifest, "meta {k} {v}");
        }
        let mut payload = Vec::new();
        let mut offset = 0usize;
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            let _ = writeln!(manifest, "tensor {name} [{}] {offset} {}", dims.join(","), t.len());
            for &x in t.data() {
                x.write_le(&mut payload);
            }
            offset += t.len();
        }
        // Payload first so a manifest never points at a missing file.
        write_atomic(&dir.join(PAYLOAD), &payload)?;
        write_atomic(&dir.join(MANIFEST), manifest.as_bytes())
    }

    /// Loads a checkpoint, converting stored values to `T` when the dtypes differ.
    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST);
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let bad = |m: String| Error::format(&mpath, m);
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("not an ecg-jepa checkpoint".into()));
        }
        let ppath = dir.join(PAYLOAD);
        let payload = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
        let mut dtype = None;
        let mut ck = Checkpoint {
            step: 0,
            rng: None,
            meta: Vec::new(),
            tensors: Vec::new(),
        };
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (kind, rest) = line.split_once(' ').ok_or_else(|| bad(format!("bad line {line:?}")))?;
            match kind {
                "dtype" => dtype = Some(rest.to_string()),
                "step" => ck.step = rest.parse().map_err(|_| bad(format!("bad step {rest:?}")))?,
                "rng" => ck.rng = Some(RngState::decode(rest).ok_or_else(|| bad("bad rng state".into()))?),
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    ck.meta.push((k.to_string(), v.to_string()));
                }
                "tensor" => {
                    let width = match dtype.as_deref() {
                        Some("f32") => 4,
                        Some("f64") => 8,
                        other => return Err(bad(format!("unsupported dtype {other:?}"))),
                    };
                    let (name, shape, offset, count) =
                        parse_tensor_line(rest).ok_or_else(|| bad(format!("bad tensor line {line:?}")))?;
                    let end = (offset + count) * width;
                    if end > payload.len() {
                        return Err(bad(format!("tensor {name} runs past end of payload")));
                    }
                    let data = payload[offset * width..end]
                        .chunks_exact(width)
                        .map(|b| if width == 4 { T::c(f32::read_le(b) as f64) } else { T::c(f64::read_le(b)) })
                        .collect();
                    ck.tensors.push((name, Tensor::new(shape, data)?));
                }
                _ => return Err(bad(format!("unknown entry {kind:?}"))),
            }
        }
        Ok(ck)
    }
}

fn parse_tensor_line(rest: &str) -> Option<(String, Vec<usize>, usize, usize)> {
    let mut it = rest.split_whitespace();
    let name = it.next()?.to_string();
    let dims = it.next()?.strip_prefix('[')?.strip_suffix(']')?;
    let shape = if dims.is_empty() {
        vec![]
    } else {
        dims.split(',').map(|d| d.parse().ok()).collect::<Option<Vec<_>>>()?
    };
    let offset = it.next()?.parse().ok()?;
    let count: usize = it.next()?.parse().ok()?;
    (shape.iter().product::<usize>() == count).then_some((name, shape, offset, count))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
