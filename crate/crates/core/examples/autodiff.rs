//! Reverse-mode gradients on a small two-layer regression, checked against
//! central differences, then a few Adam steps.

use distillgrasp::numerics::optim::{Adam, AdamConfig};
use distillgrasp::numerics::{grad_check, ParamKind, ParamStore, Tape, Tensor};
use distillgrasp::rng::DetRng;

fn main() -> distillgrasp::Result<()> {
    let mut rng = DetRng::new(1);
    let x = Tensor::from_fn(&[8, 3], |_| rng.range(-1.0, 1.0));
    let y = Tensor::from_fn(&[8, 1], |i| (x.data()[3 * i] - 0.5 * x.data()[3 * i + 2]).sin());

    let tape = Tape::new();
    let a = tape.leaf(x.clone());
    let out = a.matmul(&a.permute(&[1, 0])?)?.softmax_last()?.sum()?;
    let grads = tape.backward(out)?;
    println!("d sum(softmax(x x^T)) / dx has shape {:?}", grads.wrt(a).dims());

    let weights = Tensor::from_fn(&[8, 3], |i| (i as f64).cos());
    let err = grad_check(
        |v| {
            let t = v.tape();
            let ln = v.gelu()?.layer_norm(&t.constant(Tensor::ones(&[3])), &t.constant(Tensor::zeros(&[3])), 1e-5)?;
            ln.mul(&t.constant(weights.clone()))?.sum()
        },
        &x,
        1e-6,
    )?;
    println!("gelu -> layer norm -> weighted sum: max relative gradient error {err:.2e}");

    let mut store = ParamStore::new();
    store.insert("net.w1", Tensor::from_fn(&[3, 16], |_| rng.range(-0.5, 0.5)), ParamKind::Trainable)?;
    store.insert("net.b1", Tensor::zeros(&[16]), ParamKind::Trainable)?;
    store.insert("net.w2", Tensor::from_fn(&[16, 1], |_| rng.range(-0.5, 0.5)), ParamKind::Trainable)?;
    let mut adam = Adam::new(AdamConfig { lr: 1e-2, ..AdamConfig::default() }, "net");
    for step in 0..=200 {
        let tape = Tape::new();
        let p = store.bind(&tape, false);
        let h = tape.constant(x.clone()).linear(&p.var("net.w1")?, Some(&p.var("net.b1")?))?.relu()?;
        let loss = h.matmul(&p.var("net.w2")?)?.sub(&tape.constant(y.clone()))?.square()?.mean()?;
        if step % 50 == 0 {
            println!("step {step:>3}: mse {:.6}", loss.item());
        }
        let grads = tape.backward(loss)?;
        store.set_grads(&p, &grads);
        adam.step(&mut store);
        store.zero_grads();
    }
    Ok(())
}
