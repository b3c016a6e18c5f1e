//! Export the bundled catalog to a directory, load it back, and compare
//! normalized hashes.

use vlaperf::catalog::Catalog;

fn main() -> anyhow::Result<()> {
    let dir = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("vlaperf-catalog"));
    let bundled = Catalog::bundled();
    bundled.write_dir(&dir)?;
    let loaded = Catalog::load_dir(&dir)?;
    println!("wrote {}", dir.display());
    for p in loaded.provenance.iter().take(8) {
        println!("  {} {} {}:{} {}", p.kind, p.key, p.path, p.line, &p.sha256[..12]);
    }
    println!("bundled {}", bundled.normalized_hash());
    println!("loaded  {}", loaded.normalized_hash());
    anyhow::ensure!(bundled.normalized_hash() == loaded.normalized_hash(), "round trip changed the catalog");
    Ok(())
}
