//! Building and running a scenario in code instead of from a TOML file.

use porovisco::cli::{run_config, RunFlags, ScenarioConfig};

fn main() {
    let cfg = ScenarioConfig::from_toml(
        r#"
seed = 3
[params]
lambda_e = 1.0
mu = 1.0
alpha = 1.0
kappa = 1.0
c0 = 0.2
delta1 = 0.1

[mesh]
dim = 1
n = 32

[time]
dt = 0.01
t_end = 0.2

[initial]
p0 = { kind = "broadband", kmax = 8 }
u0 = { x = { kind = "sine", k = 1, amplitude = 0.1 } }

[outputs]
spectrum = true
"#,
    )
    .expect("valid scenario");
    let dir = std::env::temp_dir().join("porovisco-scenario-api");
    match run_config(&cfg, &dir, &RunFlags::default()) {
        Ok(o) => {
            println!("{} -> {}", o.regime, o.dir.display());
            for f in [
                "trajectory.csv",
                "ledger.csv",
                "identities.csv",
                "spectrum.json",
                "manifest.json",
            ] {
                let len = std::fs::metadata(dir.join(f)).map(|m| m.len()).unwrap_or(0);
                println!("  {f:<16} {len:>8} bytes");
            }
        }
        Err(e) => {
            eprintln!("error ({}): {e}", e.code);
            std::process::exit(e.code);
        }
    }
}
