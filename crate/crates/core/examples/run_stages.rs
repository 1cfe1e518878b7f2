//! Drives the staged pipeline into a temporary directory and prints the
//! report, the same way the `slowvar` binary does.

use slowvar::config::PipelineConfig;
use slowvar::stages::{run_stage, Stage};

fn main() -> slowvar::Result<()> {
    let dir = std::env::temp_dir().join("slowvar-example");
    let mut cfg = PipelineConfig::default();
    cfg.apply_text(&format!("system = cs1\nspectrum_k = 20\nlcs = 100,1000\nout_dir = {}\n", dir.display()))?;
    for stage in Stage::PIPELINE {
        for o in run_stage(stage, &cfg)? {
            println!("{:<12} {:>7.2}s  {}", o.stage.to_string(), o.runtime_s, o.summary);
        }
    }
    println!("{}", std::fs::read_to_string(dir.join("report.json"))?);
    Ok(())
}
