mod diagnostics;
mod net;
mod rate;
mod report;

pub use diagnostics::{cmd_h2, cmd_theta};
pub use net::{cmd_net, NetArgs};
pub use rate::{cmd_rate, cmd_simulate};
pub use report::cmd_report;

use std::path::{Path, PathBuf};

use anyhow::Result;

use crate::config::ExperimentConfig;

/// Options shared by the config-driven subcommands.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub timing: bool,
}

impl RunOptions {
    pub fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let cfg = ExperimentConfig::load(&self.config)?;
        let dir = self
            .out
            .clone()
            .unwrap_or_else(|| cfg.output.directory.clone());
        Ok((cfg, dir))
    }
}

pub fn display(p: &Path) -> String {
    p.display().to_string()
}
