//! Serve the bundled catalog on 127.0.0.1:8080 (or the address given).

use vlaperf::catalog::Catalog;

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let addr = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:8080".into()).parse()?;
    println!("listening on http://{addr}/api/hardware");
    vlaperf::service::serve(Catalog::bundled(), addr).await?;
    Ok(())
}
