//! Shifted-window partitioning and the two-pass correlation block on a
//! small token grid.

use distillgrasp::blocks::{window_partition, window_reverse, AttentionConfig, BlockMode, PcbBlock, WindowAttention};
use distillgrasp::numerics::{ParamStore, Tape, Tensor};
use distillgrasp::rng::DetRng;

fn main() -> distillgrasp::Result<()> {
    let (h, w, c, win) = (8, 8, 16, 4);
    let mut rng = DetRng::new(0);
    // Every channel of a cell holds the cell's flat index.
    let grid = Tensor::from_fn(&[1, h, w, c], |i| (i / c) as f64);

    let tape = Tape::new();
    let x = tape.constant(grid.clone());
    for shift in [0, win / 2] {
        let windows = window_partition(&x, win, shift)?;
        let back = window_reverse(&windows, 1, h, w, win, shift)?;
        let cell = windows.value().data()[0] as usize;
        println!(
            "shift {shift}: windows {:?}, first token of window 0 is cell ({}, {}), round trip exact {}",
            windows.dims(),
            cell / w,
            cell % w,
            *back.value() == grid
        );
    }

    let cfg = AttentionConfig::new(win, c, 2)?;
    let mut store = ParamStore::new();
    let attn = WindowAttention::new(&mut store, "attn", cfg, &mut rng)?;
    let p = store.bind(&tape, true);
    let tokens = window_partition(&x, win, 0)?;
    let res = attn.forward(&p, &tokens, &tokens, &tokens, None)?;
    let weights = res.weights.value();
    let t = win * win;
    let worst = weights.data().chunks(t).map(|row| (row.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    println!("attention weights {:?}, worst row-sum error {worst:.1e}", weights.dims());

    let mut store = ParamStore::new();
    let block = PcbBlock::new(&mut store, "pcb", cfg, BlockMode::Correlation, &mut rng)?;
    let rgb = Tensor::from_fn(&[1, h, w, c], |_| rng.range(-1.0, 1.0));
    let depth = Tensor::from_fn(&[1, h, w, c], |_| rng.range(-1.0, 1.0));
    let tape = Tape::new();
    let p = store.bind(&tape, true);
    let out = block.forward(&p, &tape.constant(rgb), &tape.constant(depth))?;
    println!("correlation block: {} parameters, output {:?}", store.num_trainable(), out.dims());
    Ok(())
}
