//! Serve a generated over-split wafer for the merge client.
//!
//! ```text
//! cargo run --release --example serve_session -- 8080
//! curl localhost:8080/api/session
//! curl -X POST localhost:8080/api/merge -H 'content-type: application/json' -d '{"ids":["P0","P1"]}'
//! ```

use std::net::SocketAddr;

use xrdmap::pipeline;
use xrdmap::service::{serve, AppState, SystemClock};
use xrdmap::signal::Threshold;
use xrdmap::synth::{fixtures, generate};

#[tokio::main]
async fn main() -> xrdmap::Result<()> {
    let port: u16 = std::env::args().nth(1).and_then(|p| p.parse().ok()).unwrap_or(8080);
    let fixture = fixtures::over_split(3, 500);
    let out = generate(&fixture.config)?;
    let result = pipeline::run(
        &out.dataset,
        &fixture.binarization,
        Threshold::Fixed(fixture.binarization.intensity_threshold),
        &fixture.mapping,
    )?;
    println!("{} phases; serving on port {port}", result.catalog.len());
    serve(
        AppState::new(out.dataset, result, SystemClock),
        SocketAddr::from(([127, 0, 0, 1], port)),
        None,
    )
    .await
}
