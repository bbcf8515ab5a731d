//! Scratch probe: decompose the full-model gradient-check error into
//! finite-difference truncation vs 32-bit rounding.

use obfbench::gradkit::check::{central_diff, max_rel_err};
use obfbench::gradkit::Tensor;
use obfbench::seqmodels::{load_seq2seq, Seq2SeqModel};
use obfbench::textkit::{gen_synthetic_corpus, ReorderRule, SyntheticLangSpec, TokenSeq};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let lang = SyntheticLangSpec {
        vocab_size: 64,
        min_len: 3,
        max_len: 20,
        reorder_rule: ReorderRule::SwapEvenAdjacent,
        seed: 7,
    };
    let nmt: Seq2SeqModel = load_seq2seq(std::path::Path::new("/tmp/cal_nmt.obfb")).unwrap();
    let nmt64: Seq2SeqModel<f64> = nmt.cast();

    let suite = gen_synthetic_corpus(
        &SyntheticLangSpec { min_len: 14, max_len: 14, seed: 1007, ..lang },
        50,
    )
    .unwrap();
    let target = gen_synthetic_corpus(
        &SyntheticLangSpec { min_len: 10, max_len: 10, seed: 4242, ..lang },
        12,
    )
    .unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for round in 0..6 {
        let x = &suite.pairs[rng.gen_range(0..50)].0;
        let t_len = rng.gen_range(4..=10usize);
        let t = target.pairs[8].0.prefix(t_len);
        let omega: u32 = rng.gen_range(4..68);
        let y = nmt.translate(x).unwrap();

        let e_x = nmt.emb(x).unwrap();
        let e_t = nmt.emb(&t).unwrap();
        let e_o = nmt.emb(&TokenSeq::new(vec![omega])).unwrap();
        let full = Tensor::stack_rows(&[&e_x, &e_o, &e_t]).unwrap();
        let (_, g32) = nmt.nmt_loss_with_grad(&full, &y).unwrap();
        let g32_o = g32.slice_rows(e_x.rows(), e_x.rows() + 1).unwrap();

        let e_x64 = e_x.cast::<f64>();
        let e_t64 = e_t.cast::<f64>();
        let e_o64 = e_o.cast::<f64>();
        let full64 = Tensor::stack_rows(&[&e_x64, &e_o64, &e_t64]).unwrap();
        let (_, g64) = nmt64.nmt_loss_with_grad(&full64, &y).unwrap();
        let g64_o = g64.slice_rows(e_x64.rows(), e_x64.rows() + 1).unwrap();

        for h in [1e-3, 3e-4, 1e-4] {
            let mut f = |probe: &Tensor<f64>| {
                let full = Tensor::stack_rows(&[&e_x64, probe, &e_t64]).unwrap();
                nmt64
                    .nmt_loss(&full, &y)
                    .map_err(|_| obfbench::gradkit::GradError::NonFinite { op: "loss" })
            };
            let fd = central_diff(&mut f, &e_o64, h).unwrap();
            println!(
                "round {round} h {h:.0e}: f32-vs-fd {:.3e} f64-vs-fd {:.3e} f32-vs-f64 {:.3e}",
                max_rel_err(&g32_o, &fd),
                max_rel_err(&g64_o, &fd),
                max_rel_err(&g32_o, &g64_o)
            );
        }
    }
}
