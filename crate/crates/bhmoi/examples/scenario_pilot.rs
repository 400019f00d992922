//! Small operating-characteristics run for one standard scenario.
//!
//! Usage: scenario_pilot [scenario 1-6] [reps] [method ...]

use bhmoi::{run_study, ComparatorMethod, ScenarioSpec, StudyConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let index: usize = args.first().map_or(1, |s| s.parse().expect("scenario index"));
    let reps: usize = args.get(1).map_or(100, |s| s.parse().expect("rep count"));
    let methods: Vec<ComparatorMethod> = if args.len() > 2 {
        args[2..]
            .iter()
            .map(|s| ComparatorMethod::parse(s).expect("method name"))
            .collect()
    } else {
        vec![ComparatorMethod::Bhmoi]
    };

    let spec = ScenarioSpec::standard(index).expect("standard scenario");
    let config = StudyConfig { reps, methods, ..Default::default() };
    let start = std::time::Instant::now();
    let study = run_study(std::slice::from_ref(&spec), &config).expect("study run");
    let elapsed = start.elapsed();

    println!("scenario {} (rates {:?}), {} reps, {:.1?}", index, spec.rates, reps, elapsed);
    for oc in &study.results {
        println!("method {}", oc.method);
        println!("  reject: {:?}", oc.rejection_rate.iter().map(|r| (r * 1e4).round() / 1e4).collect::<Vec<_>>());
        println!("  mse:    {:?}", oc.mse.iter().map(|m| (m * 1e6).round() / 1e6).collect::<Vec<_>>());
        println!("  bias:   {:?}", oc.bias.iter().map(|b| (b * 1e4).round() / 1e4).collect::<Vec<_>>());
    }
}
