//! Checkpoints: one snapshot file per network plus a JSON manifest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Agent;
use crate::nn::snapshot::{read_snapshot, write_snapshot};
use crate::nn::Mlp;
use crate::Result;

pub const MANIFEST_FILE: &str = "manifest.json";
const NETWORKS: [&str; 4] = ["actor", "critic", "target_actor", "target_critic"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    /// The experiment configuration the checkpoint came from, echoed verbatim.
    pub config: serde_json::Value,
    pub seed: u64,
    pub env_steps: u64,
    pub updates: u64,
    pub k: usize,
    pub target_k: usize,
    pub layer_sizes: Vec<Vec<usize>>,
}

fn nets(agent: &Agent) -> [&Mlp; 4] {
    [&agent.actor, &agent.critic, &agent.target_actor, &agent.target_critic]
}

fn nets_mut(agent: &mut Agent) -> [&mut Mlp; 4] {
    [
        &mut agent.actor,
        &mut agent.critic,
        &mut agent.target_actor,
        &mut agent.target_critic,
    ]
}

/// Writes `actor.wolp`, `critic.wolp`, `target_actor.wolp`,
/// `target_critic.wolp` and the manifest into `dir`.
pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    agent: &Agent,
    config: serde_json::Value,
    seed: u64,
    env_steps: u64,
    updates: u64,
) -> Result<CheckpointManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    for (name, net) in NETWORKS.iter().zip(nets(agent)) {
        let mut out = BufWriter::new(File::create(dir.join(format!("{name}.wolp")))?);
        write_snapshot(net, &mut out)?;
        out.flush()?;
    }
    let manifest = CheckpointManifest {
        config,
        seed,
        env_steps,
        updates,
        k: agent.k,
        target_k: agent.target_k,
        layer_sizes: nets(agent).iter().map(|n| n.layer_sizes()).collect(),
    };
    let out = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(out, &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<CheckpointManifest> {
    let file = File::open(dir.as_ref().join(MANIFEST_FILE))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Loads the four networks of a checkpoint into an agent of matching shape.
pub fn load_checkpoint(dir: impl AsRef<Path>, agent: &mut Agent) -> Result<CheckpointManifest> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    for (name, net) in NETWORKS.iter().zip(nets_mut(agent)) {
        let snap = read_snapshot(BufReader::new(File::open(dir.join(format!("{name}.wolp")))?))?;
        snap.load_into(net)?;
    }
    Ok(manifest)
}
