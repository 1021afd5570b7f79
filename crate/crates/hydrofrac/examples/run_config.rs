//! A TOML scenario run end to end: series, profiles, fronts and summary in `out/run`.

use hydrofrac::cli::{run, RunConfig};

const SCENARIO: &str = r#"
geometry = "kgd"

[fluid]
preset = "shear-thinning"

[grid]
cells = 6

[times]
t_end = 3.0
profiles = [1.5, 2.0]

[output]
dir = "out/run"
series_every = 10
"#;

fn main() -> hydrofrac::Result<()> {
    let cfg = RunConfig::from_toml(SCENARIO)?;
    let summary = run(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
