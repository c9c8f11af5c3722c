use anyhow::{Context, Result};

use wmamba_core::io::load_dir;
use wmamba_core::losses::LossWeights;
use wmamba_core::model::{Ablation, ModelConfig};
use wmamba_core::train::{train_loop, TrainConfig, TrainOutputs};

use crate::TrainArgs;

pub fn config_from_args(args: &TrainArgs) -> TrainConfig {
    let ablation = Ablation {
        disable_wfe: args.disable_wfe,
        disable_cafm: args.disable_cafm,
        disable_gam: args.disable_gam,
        reverse_frequency: args.reverse_frequency,
    };
    TrainConfig {
        lr: args.lr,
        batch: args.batch,
        patch: args.patch,
        steps: args.steps,
        seed: args.seed,
        loss: LossWeights { lambda_int: args.lambda_int, lambda_grad: args.lambda_grad },
        model: ModelConfig { c_prime: args.width, n_state: args.n_state, ablation, ..ModelConfig::default() },
        clip_norm: (!args.no_clip).then_some(1.0),
        checkpoint_every: args.checkpoint_every,
    }
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let config = config_from_args(args);
    config.validate().context("invalid training configuration")?;
    let pairs = load_dir::<f32>(&args.data).with_context(|| format!("loading pairs from {}", args.data.display()))?;
    let log = args.log.clone().unwrap_or_else(|| args.out.with_extension("csv"));
    let outputs = TrainOutputs { checkpoint: args.out.clone(), log: Some(log.clone()) };
    let (_, logs) = train_loop(&pairs, config, &outputs).context("training failed")?;
    match (logs.first(), logs.last()) {
        (Some(first), Some(last)) => println!(
            "trained {} steps on {} pairs: loss {:.6} -> {:.6}; checkpoint {}; log {}",
            logs.len(),
            pairs.len(),
            first.total,
            last.total,
            args.out.display(),
            log.display()
        ),
        _ => println!("0 steps requested; wrote untrained checkpoint {}", args.out.display()),
    }
    Ok(())
}
