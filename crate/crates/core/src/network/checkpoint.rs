//! Versioned checkpoint container.
//!
//! ```text
//! GLOMSEG-CHECKPOINT 1
//! [config]
//! key=value ...            network shape, see NetConfig::to_text
//! [meta]
//! taxonomy=<fingerprint>
//! norm_mean=r,g,b
//! norm_std=r,g,b
//! weights=<sha-256 of the parameter values>
//! <free key=value pairs: epoch, val_dice, ...>
//! [params]
//! <name>\t<dim>x<dim>...\t<count>     one line per tensor, layout order
//! [data]
//! <count * 4 bytes: f32 little-endian>
//! ```

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{DynamicHeadNet, NetConfig};
use crate::data::Normalization;
use crate::error::{bail, Error, Result};
use crate::taxonomy::Taxonomy;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "GLOMSEG-CHECKPOINT";
const DATA_MARKER: &[u8] = b"[data]\n";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetConfig,
    pub taxonomy_fingerprint: String,
    pub normalization: Normalization,
    /// Training-run metadata in insertion order.
    pub metadata: Vec<(String, String)>,
    pub params: Vec<f32>,
}

fn triple(v: [f32; 3]) -> String {
    format!("{:?},{:?},{:?}", v[0], v[1], v[2])
}

fn parse_triple(s: &str) -> Result<[f32; 3]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        bail!(Format, "expected three comma-separated values, got `{s}`");
    }
    let mut out = [0f32; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| Error::Format(format!("bad number `{p}`")))?;
    }
    Ok(out)
}

impl Checkpoint {
    pub fn from_model(model: &DynamicHeadNet<f32>, normalization: Normalization) -> Self {
        Checkpoint {
            config: model.config().clone(),
            taxonomy_fingerprint: Taxonomy::canonical().fingerprint(),
            normalization,
            metadata: Vec::new(),
            params: model.params().to_vec(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.set_meta(key, value);
        self
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.metadata.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.metadata.push((key.to_string(), value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Rebuild the network; fails on registry or layout mismatch.
    pub fn to_model(&self) -> Result<DynamicHeadNet<f32>> {
        Taxonomy::canonical().check_fingerprint(&self.taxonomy_fingerprint)?;
        DynamicHeadNet::from_params(self.config.clone(), self.params.clone())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let layout = super::build_modules(&self.config)?.0;
        if layout.total() != self.params.len() {
            bail!(Shape, "checkpoint holds {} parameters, network needs {}", self.params.len(), layout.total());
        }
        let mut text = format!("{MAGIC} {CHECKPOINT_VERSION}\n[config]\n");
        text.push_str(&self.config.to_text());
        text.push_str("[meta]\n");
        text.push_str(&format!("taxonomy={}\n", self.taxonomy_fingerprint));
        text.push_str(&format!("norm_mean={}\n", triple(self.normalization.mean)));
        text.push_str(&format!("norm_std={}\n", triple(self.normalization.std)));
        text.push_str(&format!("weights={}\n", super::digest_values(&self.params)));
        for (k, v) in &self.metadata {
            if k.contains(['=', '\n']) || v.contains('\n') {
                bail!(InvalidArgument, "metadata `{k}` cannot be stored on one line");
            }
            text.push_str(&format!("{k}={v}\n"));
        }
        text.push_str("[params]\n");
        for spec in layout.specs() {
            let shape: Vec<String> = spec.shape.iter().map(|d| format!("{d}")).collect();
            text.push_str(&format!("{}\t{}\t{}\n", spec.name, shape.join("x"), spec.len));
        }
        let mut bytes = text.into_bytes();
        bytes.extend_from_slice(DATA_MARKER);
        bytes.reserve(self.params.len() * 4);
        for v in &self.params {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        Ok(bytes)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .windows(DATA_MARKER.len())
            .position(|w| w == DATA_MARKER)
            .ok_or_else(|| Error::Format("checkpoint has no [data] section".into()))?;
        let header = core::str::from_utf8(&bytes[..split])
            .map_err(|_| Error::Format("checkpoint header is not UTF-8".into()))?;
        let data = &bytes[split + DATA_MARKER.len()..];

        let mut lines = header.lines();
        let first = lines.next().unwrap_or_default();
        let version = first
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| Error::Format("not a checkpoint file".into()))?;
        if version != format!("{CHECKPOINT_VERSION}") {
            bail!(Format, "unsupported checkpoint version {version}");
        }

        let (mut config_text, mut meta, mut params) = (String::new(), Vec::new(), Vec::new());
        let mut section = "";
        for line in lines {
            if line.starts_with('[') {
                section = line;
                continue;
            }
            match section {
                "[config]" => {
                    config_text.push_str(line);
                    config_text.push('\n');
                }
                "[meta]" => {
                    let (k, v) = line
                        .split_once('=')
                        .ok_or_else(|| Error::Format(format!("bad metadata line `{line}`")))?;
                    meta.push((k.to_string(), v.to_string()));
                }
                "[params]" => params.push(line),
                other => bail!(Format, "unexpected content in section `{other}`"),
            }
        }
        let config = NetConfig::from_text(&config_text)?;
        let take = |meta: &mut Vec<(String, String)>, key: &str| -> Result<String> {
            let pos = meta
                .iter()
                .position(|(k, _)| k == key)
                .ok_or_else(|| Error::Format(format!("checkpoint metadata lacks `{key}`")))?;
            Ok(meta.remove(pos).1)
        };
        let taxonomy_fingerprint = take(&mut meta, "taxonomy")?;
        let normalization = Normalization {
            mean: parse_triple(&take(&mut meta, "norm_mean")?)?,
            std: parse_triple(&take(&mut meta, "norm_std")?)?,
        };

        let layout = super::build_modules(&config)?.0;
        let specs = layout.specs();
        if specs.len() != params.len() {
            bail!(Format, "checkpoint lists {} tensors, network has {}", params.len(), specs.len());
        }
        for (line, spec) in params.iter().zip(specs) {
            let fields: Vec<&str> = line.split('\t').collect();
            let shape: Vec<String> = spec.shape.iter().map(|d| format!("{d}")).collect();
            if fields.len() != 3 || fields[0] != spec.name || fields[1] != shape.join("x") {
                bail!(Format, "tensor entry `{line}` does not match `{}`", spec.name);
            }
        }
        let total = layout.total();
        if data.len() != total * 4 {
            bail!(Format, "checkpoint data holds {} bytes, expected {}", data.len(), total * 4);
        }
        let values =
            data.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect::<Vec<_>>();
        let expected = take(&mut meta, "weights")?;
        let found = super::digest_values(&values);
        if found != expected {
            return Err(Error::FingerprintMismatch { expected, found });
        }
        Ok(Checkpoint { config, taxonomy_fingerprint, normalization, metadata: meta, params: values })
    }
}
