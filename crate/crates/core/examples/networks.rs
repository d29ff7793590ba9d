//! Builds every network variant, runs one forward/backward pass on random
//! 64x64 input and prints parameter counts and timings.

use std::time::Instant;

use distillgrasp::networks::{build_variant, DepthNet, NetConfig, Variant};
use distillgrasp::numerics::{Mode, ParamStore, Tape, Tensor};
use distillgrasp::rng::DetRng;

fn main() -> distillgrasp::Result<()> {
    let cfg = NetConfig::default();
    let mut data_rng = DetRng::new(7);
    let rgb = Tensor::from_fn(&[2, 3, 64, 64], |_| data_rng.uniform());
    let depth = Tensor::from_fn(&[2, 1, 64, 64], |_| data_rng.range(0.3, 2.0));

    for variant in Variant::ALL {
        let mut store = ParamStore::new();
        let net = build_variant(variant, &cfg, &mut store, &mut DetRng::new(0))?;
        let started = Instant::now();
        let tape = Tape::new();
        let p = store.bind(&tape, false);
        let out = net.forward(&p, &tape.constant(rgb.clone()), &tape.constant(depth.clone()), Mode::Train)?;
        let loss = out.mean()?;
        let forward = started.elapsed();
        tape.backward(loss)?;
        println!(
            "{:<13} params {:>9}  out {:?}  mean {:.4}  fwd {:>6.1} ms  fwd+bwd {:>6.1} ms",
            variant.name(),
            store.num_trainable(),
            out.dims(),
            loss.item(),
            forward.as_secs_f64() * 1e3,
            started.elapsed().as_secs_f64() * 1e3,
        );
    }
    Ok(())
}
