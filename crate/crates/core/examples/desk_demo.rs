use std::time::Instant;

use tta_gps::demo::{run_desk_demo, DemoConfig};

fn main() -> tta_gps::Result<()> {
    let seeds: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    for seed in if seeds.is_empty() { vec![0] } else { seeds } {
        let t0 = Instant::now();
        let report = run_desk_demo(&DemoConfig::desk(seed))?;
        println!("seed {seed} ({:.1}s)\n{}", t0.elapsed().as_secs_f64(), report.to_text());
    }
    Ok(())
}
