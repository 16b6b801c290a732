//! Regenerates the bundled synthetic dataset under `crates/cli/data`.

use std::path::Path;

fn main() -> anyhow::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    stackbess_cli::bundle::write_bundle(&data)?;
    println!("wrote {}", data.display());
    Ok(())
}
