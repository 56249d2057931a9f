//! Prints QRC versus classical cost across a loss sweep at a fixed RTT.
//!
//! cargo run --release --example sweep -- [iterations] [rtt_ms]

use ikesim::harness::{parse_config, run_batch, BatchOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let iterations: u32 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(1000);
    let rtt: f64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(66.0);
    let mut text = format!("scenario_id = \"sweep\"\niterations = {iterations}\n[link]\nrtt_ms = {rtt}\n");
    for name in ["FL-PA-2", "LA-NY-1", "FL-PA-1", "JPN-SWI", "LA-NY-2", "WIFI-12", "WIFI-16", "WIFI-20"] {
        text.push_str(&format!("[[sweep]]\npreset = \"{name}\"\n"));
    }
    let config = parse_config(&text)?;
    println!(
        "{:<10} {:>7} {:>12} {:>12} {:>8} {:>10} {:>10} {:>8} {:>6}",
        "point", "loss%", "c_p95_B", "q_p95_B", "ratioB", "c_med_ms", "q_med_ms", "ratioT", "rho"
    );
    for set in run_batch(&config, &BatchOptions::default())? {
        let c = set.summary("classical").unwrap();
        let q = set.summary("qrc").unwrap();
        let amp = &set.amplification[0];
        println!(
            "{:<10} {:>7.3} {:>12.0} {:>12.0} {:>8.1} {:>10.0} {:>10.0} {:>8.2} {:>6.3}",
            set.loss_point.label,
            set.loss_point.loss_rate * 100.0,
            c.total_bytes.unwrap().p95,
            q.total_bytes.unwrap().p95,
            amp.total_bytes_p95_ratio,
            c.setup_time_ms.unwrap().median,
            q.setup_time_ms.unwrap().median,
            amp.setup_time_p95_ratio.unwrap_or(f64::NAN),
            amp.total_bytes_order_correlation.unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
