//! Sweeps the DiR bonus scale on the walker.
//!
//! For each α on the grid and each seed, trains a three-policy population and
//! prints the per-leg duty descriptors, the minimum pairwise descriptor
//! distance and every policy's return relative to policy 1. The chosen α is
//! the largest one whose policies all keep at least 70% of policy 1's return
//! on every seed.
//!
//! ```text
//! cargo run --release -p dirlab --example alpha_sweep -- [seeds] [alphas]
//! cargo run --release -p dirlab --example alpha_sweep -- 1,2,3 0.05,0.03,0.02,0.01
//! ```

use dirlab::dir::{run_open_ended, DirConfig, PolicyArchive};
use dirlab::env::{EnvConfig, EnvHandle, FiltrationSpec, WalkerParams};
use dirlab::evalkit::{behavior_descriptor, few_shot_adapt, min_pairwise_distance};
use dirlab::ppo::PpoConfig;

const RETURN_FLOOR: f64 = 0.7;

fn list<T: std::str::FromStr>(arg: Option<String>, default: &str) -> Vec<T> {
    arg.as_deref()
        .unwrap_or(default)
        .split(',')
        .map(|x| x.parse().ok().expect("comma-separated numbers"))
        .collect()
}

fn main() {
    let mut args = std::env::args().skip(1);
    let seeds: Vec<u64> = list(args.next(), "1,2,3");
    let alphas: Vec<f64> = list(args.next(), "0.05,0.03,0.02,0.01");
    let env = EnvHandle::new(EnvConfig::DutyWalker(WalkerParams::default()));
    let filtration = FiltrationSpec::new(vec![0, 1, 4, 5]).expect("increasing indices");
    let mut chosen = None;
    for &alpha in &alphas {
        let mut all_keep = true;
        for &seed in &seeds {
            let dir = DirConfig {
                alpha,
                ..DirConfig::default()
            };
            let mut archive =
                PolicyArchive::new(env.clone(), filtration.clone(), dir, PpoConfig::default(), seed)
                    .expect("valid configuration");
            run_open_ended(&mut archive, None).expect("training succeeds");
            let descs: Vec<_> = archive
                .policies()
                .iter()
                .map(|p| behavior_descriptor(p, &env, 20, 7).expect("walker has descriptors"))
                .collect();
            let returns = few_shot_adapt(&archive, &env, 20, 7).expect("nonempty archive").mean_returns;
            let ratios: Vec<f64> = returns.iter().map(|r| r / returns[0]).collect();
            all_keep &= ratios.iter().all(|&r| r >= RETURN_FLOOR);
            let duty: Vec<String> = descs
                .iter()
                .map(|d| format!("[{:.2} {:.2}]", d.channels[0], d.channels[1]))
                .collect();
            let ratio: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
            println!(
                "alpha {alpha} seed {seed}: duty {} min distance {:.4} return ratios {}",
                duty.join(" "),
                min_pairwise_distance(&descs).unwrap_or(0.0),
                ratio.join(" ")
            );
        }
        if all_keep && chosen.is_none() {
            chosen = Some(alpha);
        }
    }
    match chosen {
        Some(a) => println!("largest alpha keeping {RETURN_FLOOR} of policy 1's return: {a}"),
        None => println!("no alpha on the grid keeps {RETURN_FLOOR} of policy 1's return"),
    }
}
