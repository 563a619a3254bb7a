use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use hedgenet_core::timenets::{eta_net, EtaNetParams};

#[derive(Debug, Clone)]
pub struct NetArgs {
    pub horizon: f64,
    pub n: usize,
    pub eta: f64,
    pub out: Option<PathBuf>,
}

/// Writes the knots of an eta-net and reports mesh statistics.
pub fn cmd_net(args: &NetArgs) -> Result<()> {
    let net = eta_net(EtaNetParams::new(args.horizon, args.n, args.eta)?)?;
    let csv = net.to_csv();
    let stats = format!(
        "n = {}, eta = {}, T = {}: min spacing {:.6e}, max spacing {:.6e}",
        net.intervals(),
        args.eta,
        args.horizon,
        net.min_spacing(),
        net.max_spacing()
    );
    match &args.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
            println!("{stats}");
        }
        None => {
            std::io::stdout().write_all(csv.as_bytes())?;
            eprintln!("{stats}");
        }
    }
    Ok(())
}
