//! Finite-difference oracle checks for every differentiable primitive.
//!
//! Each primitive is wired into a scalar through a fixed random projection,
//! evaluated once at 64-bit and once at 32-bit, and both analytic gradients
//! are compared against an independent 64-bit central difference:
//! 64-bit analytic within 1e-6, 32-bit analytic within 1e-3.

use obfbench::gradkit::check::{central_diff, max_rel_err};
use obfbench::gradkit::{Element, NodeId, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL_F64: f64 = 1e-6;
const TOL_F32: f64 = 1e-3;
const FD_STEP: f64 = 1e-5;

fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::new(
        [rows, cols],
        (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect(),
    )
    .unwrap()
}

/// Evaluate `graph` over the given leaves at precision `T`, returning the
/// scalar output and the analytic gradients of every leaf.
fn eval<T: Element>(
    leaves: &[Tensor<f64>],
    graph: &dyn Fn(&mut Tape<T>, &[NodeId]) -> NodeId,
) -> (f64, Vec<Tensor<T>>) {
    let mut tape = Tape::<T>::new();
    let ids: Vec<NodeId> = leaves
        .iter()
        .map(|t| tape.param(t.cast::<T>()).unwrap())
        .collect();
    let out = graph(&mut tape, &ids);
    let value = tape.value(out).item().to_f64();
    let grads = tape.backward(out).unwrap();
    (value, ids.iter().map(|&id| grads.wrt(id)).collect())
}

/// Check analytic gradients of every leaf against 64-bit central
/// differences, at both precisions.
fn check(
    name: &str,
    leaves: Vec<Tensor<f64>>,
    graph64: impl Fn(&mut Tape<f64>, &[NodeId]) -> NodeId,
    graph32: impl Fn(&mut Tape<f32>, &[NodeId]) -> NodeId,
) {
    let (_, grads64) = eval::<f64>(&leaves, &graph64);
    let (_, grads32) = eval::<f32>(&leaves, &graph32);
    for wrt in 0..leaves.len() {
        let mut f = |probe: &Tensor<f64>| {
            let mut alt = leaves.clone();
            alt[wrt] = probe.clone();
            let (v, _) = eval::<f64>(&alt, &graph64);
            Ok(v)
        };
        let fd = central_diff(&mut f, &leaves[wrt], FD_STEP).unwrap();
        let e64 = max_rel_err(&grads64[wrt], &fd);
        let e32 = max_rel_err(&grads32[wrt], &fd);
        assert!(e64 < TOL_F64, "{name} leaf {wrt}: f64 error {e64}");
        assert!(e32 < TOL_F32, "{name} leaf {wrt}: f32 error {e32}");
    }
}

/// Project a rank-2 node to a scalar with a fixed pseudo-random matrix so
/// every entry of the op output receives a distinct gradient signal.
fn project<T: Element>(tape: &mut Tape<T>, x: NodeId, seed: u64) -> NodeId {
    let (rows, cols) = {
        let v = tape.value(x);
        (v.rows(), v.cols())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::<f64>::new(
        [cols, 1],
        (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let w = tape.leaf(w.cast::<T>()).unwrap();
    let col = tape.matmul(x, w).unwrap();
    let _ = rows;
    tape.sum(col).unwrap()
}

#[test]
fn matmul_plain_and_transposed() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for round in 0..5 {
        let (n, k, m) = (
            rng.gen_range(1..5),
            rng.gen_range(1..5),
            rng.gen_range(1..5),
        );
        let a = rand_tensor(&mut rng, n, k);
        let b = rand_tensor(&mut rng, k, m);
        check(
            "matmul_nn",
            vec![a.clone(), b],
            move |t, ids| {
                let y = t.matmul(ids[0], ids[1]).unwrap();
                project(t, y, 100 + round)
            },
            move |t, ids| {
                let y = t.matmul(ids[0], ids[1]).unwrap();
                project(t, y, 100 + round)
            },
        );
        let bt = rand_tensor(&mut rng, m, k);
        check(
            "matmul_nt",
            vec![a, bt],
            move |t, ids| {
                let y = t.matmul_nt(ids[0], ids[1]).unwrap();
                project(t, y, 200 + round)
            },
            move |t, ids| {
                let y = t.matmul_nt(ids[0], ids[1]).unwrap();
                project(t, y, 200 + round)
            },
        );
    }
}

#[test]
fn add_and_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for round in 0..5 {
        let (n, m) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let a = rand_tensor(&mut rng, n, m);
        let b = rand_tensor(&mut rng, n, m);
        check(
            "add",
            vec![a.clone(), b],
            move |t, ids| {
                let y = t.add(ids[0], ids[1]).unwrap();
                project(t, y, 300 + round)
            },
            move |t, ids| {
                let y = t.add(ids[0], ids[1]).unwrap();
                project(t, y, 300 + round)
            },
        );
        check(
            "scale",
            vec![a],
            move |t, ids| {
                let y = t.scale(ids[0], Element::from_f64(0.37)).unwrap();
                project(t, y, 400 + round)
            },
            move |t, ids| {
                let y = t.scale(ids[0], Element::from_f64(0.37)).unwrap();
                project(t, y, 400 + round)
            },
        );
    }
}

#[test]
fn tanh_and_gelu() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for round in 0..5 {
        let (n, m) = (rng.gen_range(1..5), rng.gen_range(1..5));
        let x = rand_tensor(&mut rng, n, m);
        check(
            "tanh",
            vec![x.clone()],
            move |t, ids| {
                let y = t.tanh(ids[0]).unwrap();
                project(t, y, 500 + round)
            },
            move |t, ids| {
                let y = t.tanh(ids[0]).unwrap();
                project(t, y, 500 + round)
            },
        );
        check(
            "gelu",
            vec![x],
            move |t, ids| {
                let y = t.gelu(ids[0]).unwrap();
                project(t, y, 600 + round)
            },
            move |t, ids| {
                let y = t.gelu(ids[0]).unwrap();
                project(t, y, 600 + round)
            },
        );
    }
}

#[test]
fn softmax_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for round in 0..5 {
        let (n, m) = (rng.gen_range(1..4), rng.gen_range(2..6));
        let x = rand_tensor(&mut rng, n, m);
        check(
            "softmax",
            vec![x],
            move |t, ids| {
                let y = t.softmax(ids[0]).unwrap();
                project(t, y, 700 + round)
            },
            move |t, ids| {
                let y = t.softmax(ids[0]).unwrap();
                project(t, y, 700 + round)
            },
        );
    }
}

#[test]
fn layer_norm_inputs_gain_and_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for round in 0..5 {
        // Rows of width >= 4: two-element rows normalize to exactly ±1,
        // which makes the input gradient a pure cancellation that 32-bit
        // arithmetic cannot resolve. The models never go below width 16.
        let (n, m) = (rng.gen_range(1..4), rng.gen_range(4..9));
        let x = rand_tensor(&mut rng, n, m);
        let gain = Tensor::<f64>::new([m], (0..m).map(|_| rng.gen_range(0.5..1.5)).collect()).unwrap();
        let bias = Tensor::<f64>::new([m], (0..m).map(|_| rng.gen_range(-0.5..0.5)).collect()).unwrap();
        check(
            "layer_norm",
            vec![x, gain, bias],
            move |t, ids| {
                let y = t
                    .layer_norm(ids[0], ids[1], ids[2], Element::from_f64(1e-5))
                    .unwrap();
                project(t, y, 800 + round)
            },
            move |t, ids| {
                let y = t
                    .layer_norm(ids[0], ids[1], ids[2], Element::from_f64(1e-5))
                    .unwrap();
                project(t, y, 800 + round)
            },
        );
    }
}

#[test]
fn gather_scatters_into_table() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for round in 0..5 {
        let rows = rng.gen_range(3..8);
        let cols = rng.gen_range(2..5);
        let table = rand_tensor(&mut rng, rows, cols);
        let ids: Vec<u32> = (0..rng.gen_range(1..6))
            .map(|_| rng.gen_range(0..rows as u32))
            .collect();
        let ids64 = ids.clone();
        let ids32 = ids;
        check(
            "gather",
            vec![table],
            move |t, leaves| {
                let y = t.gather(leaves[0], &ids64).unwrap();
                project(t, y, 900 + round)
            },
            move |t, leaves| {
                let y = t.gather(leaves[0], &ids32).unwrap();
                project(t, y, 900 + round)
            },
        );
    }
}

#[test]
fn gather_gradient_is_exactly_zero_off_row() {
    // The attack reads a single gathered row; every other table row must
    // receive an exact zero, not a rounding-level one.
    let mut tape = Tape::<f32>::new();
    let table = tape
        .param(Tensor::new([4, 3], (0..12).map(|i| i as f32 * 0.1).collect()).unwrap())
        .unwrap();
    let picked = tape.gather(table, &[2]).unwrap();
    let s = tape.sum(picked).unwrap();
    let grads = tape.backward(s).unwrap();
    let g = grads.wrt(table);
    for r in 0..4 {
        for c in 0..3 {
            let expect = if r == 2 { 1.0 } else { 0.0 };
            assert_eq!(g.at(r, c), expect, "row {r} col {c}");
        }
    }
}

#[test]
fn cross_entropy_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let (n, v) = (rng.gen_range(1..5), rng.gen_range(2..7));
        let logits = rand_tensor(&mut rng, n, v);
        let targets: Vec<u32> = (0..n).map(|_| rng.gen_range(0..v as u32)).collect();
        let t64 = targets.clone();
        let t32 = targets;
        check(
            "cross_entropy",
            vec![logits],
            move |t, ids| t.cross_entropy(ids[0], &t64, None).unwrap(),
            move |t, ids| t.cross_entropy(ids[0], &t32, None).unwrap(),
        );
    }
}

#[test]
fn concat_and_slice_both_axes() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for round in 0..5 {
        let m = rng.gen_range(2..5);
        let (ra, rb) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let a = rand_tensor(&mut rng, ra, m);
        let b = rand_tensor(&mut rng, rb, m);
        check(
            "concat_rows_then_slice",
            vec![a.clone(), b.clone()],
            move |t, ids| {
                let y = t.concat_rows(&[ids[0], ids[1]]).unwrap();
                let y = t.slice_rows(y, 0..t.value(y).rows()).unwrap();
                project(t, y, 1000 + round)
            },
            move |t, ids| {
                let y = t.concat_rows(&[ids[0], ids[1]]).unwrap();
                let y = t.slice_rows(y, 0..t.value(y).rows()).unwrap();
                project(t, y, 1000 + round)
            },
        );
        let rows = rng.gen_range(1..4);
        let (ca, cb) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let c = rand_tensor(&mut rng, rows, ca);
        let d = rand_tensor(&mut rng, rows, cb);
        check(
            "concat_cols_then_slice",
            vec![c.clone(), d.clone()],
            move |t, ids| {
                let y = t.concat_cols(&[ids[0], ids[1]]).unwrap();
                let keep = t.value(y).cols() - 1;
                let y = t.slice_cols(y, 0..keep.max(1)).unwrap();
                project(t, y, 1100 + round)
            },
            move |t, ids| {
                let y = t.concat_cols(&[ids[0], ids[1]]).unwrap();
                let keep = t.value(y).cols() - 1;
                let y = t.slice_cols(y, 0..keep.max(1)).unwrap();
                project(t, y, 1100 + round)
            },
        );
    }
}

#[test]
fn slice_rows_mid_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = rand_tensor(&mut rng, 5, 3);
    check(
        "slice_rows_mid",
        vec![x],
        |t, ids| {
            let y = t.slice_rows(ids[0], 1..4).unwrap();
            project(t, y, 1200)
        },
        |t, ids| {
            let y = t.slice_rows(ids[0], 1..4).unwrap();
            project(t, y, 1200)
        },
    );
}
