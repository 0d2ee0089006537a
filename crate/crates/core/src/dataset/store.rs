//! Dataset persistence: a JSON manifest plus one packed little-endian f32
//! record per transition, with a CRC-32 trailer over the record bytes.

use crate::dataset::transitions::{Dataset, Transition};
use crate::dataset::DatasetError;
use crate::pipeline::actions::NormalizationStats;
use crate::pipeline::episode::Embodiment;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    schema_version: u32,
    embodiment: Embodiment,
    transition_count: usize,
    chunk_len: usize,
    action_dim: usize,
    entries: usize,
    entry_dim: usize,
    hands: usize,
    embed_dim: usize,
    step: usize,
    /// Per-transition f32 layout, in order.
    layout: String,
    stats: NormalizationStats,
    episodes: Vec<String>,
    skipped: Vec<String>,
}

fn stride(ds: &Dataset) -> usize {
    ds.state_dim() + ds.embed_width() + ds.chunk_len * ds.action_dim
}

pub fn save_dataset(dir: &Path, ds: &Dataset) -> Result<(), DatasetError> {
    fs::create_dir_all(dir)?;
    let manifest = DatasetManifest {
        schema_version: DATASET_SCHEMA_VERSION,
        embodiment: ds.embodiment,
        transition_count: ds.len(),
        chunk_len: ds.chunk_len,
        action_dim: ds.action_dim,
        entries: ds.entries,
        entry_dim: ds.entry_dim,
        hands: ds.hands,
        embed_dim: ds.embed_dim,
        step: ds.step,
        layout: "state | embeddings | chunk".into(),
        stats: ds.stats.clone(),
        episodes: ds.episodes.clone(),
        skipped: ds.skipped.clone(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;

    let mut bytes = Vec::with_capacity(ds.len() * stride(ds) * 4 + 4);
    for t in &ds.transitions {
        for v in t.state.iter().chain(&t.embeds).chain(&t.chunk) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    fs::write(dir.join("transitions.bin"), bytes)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let manifest: DatasetManifest =
        serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    if manifest.schema_version != DATASET_SCHEMA_VERSION {
        return Err(DatasetError::SchemaMismatch {
            expected: DATASET_SCHEMA_VERSION,
            found: manifest.schema_version,
        });
    }

    let bytes = fs::read(dir.join("transitions.bin"))?;
    if bytes.len() < 4 {
        return Err(DatasetError::CorruptFile("transitions.bin shorter than its trailer".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(DatasetError::CorruptFile("checksum mismatch".into()));
    }

    let state_dim = manifest.entries * manifest.entry_dim;
    let embed_width = manifest.hands * 2 * manifest.embed_dim;
    let chunk_dim = manifest.chunk_len * manifest.action_dim;
    let stride = state_dim + embed_width + chunk_dim;
    if body.len() != manifest.transition_count * stride * 4 {
        return Err(DatasetError::CorruptFile(format!(
            "expected {} transition bytes, found {}",
            manifest.transition_count * stride * 4,
            body.len()
        )));
    }

    let floats: Vec<f32> = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let transitions = floats
        .chunks_exact(stride)
        .map(|rec| Transition {
            state: rec[..state_dim].to_vec(),
            embeds: rec[state_dim..state_dim + embed_width].to_vec(),
            chunk: rec[state_dim + embed_width..].to_vec(),
        })
        .collect();

    Ok(Dataset {
        embodiment: manifest.embodiment,
        chunk_len: manifest.chunk_len,
        action_dim: manifest.action_dim,
        entries: manifest.entries,
        entry_dim: manifest.entry_dim,
        hands: manifest.hands,
        embed_dim: manifest.embed_dim,
        step: manifest.step,
        stats: manifest.stats,
        episodes: manifest.episodes,
        skipped: manifest.skipped,
        transitions,
    })
}
