//! Fast invariant suite behind `wmamba selfcheck`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wmamba_core::autograd::Graph;
use wmamba_core::gradcheck::finite_diff_check_params;
use wmamba_core::io::{load_checkpoint, save_checkpoint};
use wmamba_core::losses::{evaluate as loss_terms, LossWeights};
use wmamba_core::model::{interleave, Ablation, GatedAttention, ModelConfig, WMamba, WfeBlock};
use wmamba_core::ssm::{selective_scan, Direction, ScanInputs};
use wmamba_core::wavelet::{dwt2, idwt2};
use wmamba_core::{Tensor, Tensor32, Tensor64};
use wmamba_metrics::{entropy, evaluate_all, GrayImage};

type Check = fn() -> Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn haar_reconstruction() -> Result<(), String> {
    let x = Tensor64::rand_uniform([2, 3, 16, 12], -2.0, 2.0, &mut rng(1));
    let err = idwt2(&dwt2(&x).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?.max_abs_diff(&x);
    ensure(err < 1e-12, || format!("f64 error {err:e}"))?;
    let x: Tensor32 = x.cast();
    let err = idwt2(&dwt2(&x).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?.max_abs_diff(&x);
    ensure(err < 1e-6, || format!("f32 error {err:e}"))
}

fn scan_recurrence() -> Result<(), String> {
    let mut r = rng(2);
    let (l, e, s) = (33, 3, 5);
    let inputs = ScanInputs {
        u: Tensor64::rand_uniform([l, e], -1.0, 1.0, &mut r),
        delta: Tensor64::rand_uniform([l, e], 0.01, 0.5, &mut r),
        a: Tensor64::rand_uniform([e, s], -3.0, -0.1, &mut r),
        b: Tensor64::rand_uniform([l, s], -1.0, 1.0, &mut r),
        c: Tensor64::rand_uniform([l, s], -1.0, 1.0, &mut r),
        d: Tensor64::rand_uniform([e], -1.0, 1.0, &mut r),
    };
    let y = selective_scan(&inputs, Direction::Forward).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for ch in 0..e {
        let mut h = vec![0.0; s];
        for t in 0..l {
            let (x, dt) = (inputs.u.data()[t * e + ch], inputs.delta.data()[t * e + ch]);
            let mut want = inputs.d.data()[ch] * x;
            for k in 0..s {
                h[k] = (dt * inputs.a.data()[ch * s + k]).exp() * h[k] + dt * inputs.b.data()[t * s + k] * x;
                want += inputs.c.data()[t * s + k] * h[k];
            }
            worst = worst.max((y.data()[t * e + ch] - want).abs());
        }
    }
    ensure(worst < 1e-12, || format!("max deviation {worst:e}"))?;

    let zero_b = ScanInputs { b: Tensor::zeros([l, s]), ..inputs.clone() };
    let y = selective_scan(&zero_b, Direction::Bidirectional).map_err(|e| e.to_string())?;
    let exact = y.data().iter().enumerate().all(|(i, &v)| v == 2.0 * inputs.d.data()[i % e] * inputs.u.data()[i]);
    ensure(exact, || "B = 0 does not reduce to the skip term".into())
}

fn gradients() -> Result<(), String> {
    let mut gam = GatedAttention::<f64>::new("gam", 4, &mut rng(3));
    let x = Tensor64::rand_uniform([1, 4, 4, 4], -1.0, 1.0, &mut rng(4));
    let w = Tensor64::rand_uniform([1, 4, 4, 4], -1.0, 1.0, &mut rng(5));
    let report = finite_diff_check_params(&mut gam, |g, m| Ok(m.forward(g, g.constant(x.clone()))?.mul(g.constant(w.clone()))?.sum()), 1e-4)
        .map_err(|e| e.to_string())?;
    ensure(report.passes(1e-3), || format!("{report:?}"))
}

fn residual_identities() -> Result<(), String> {
    let x = Tensor32::rand_uniform([1, 4, 8, 8], -1.0, 1.0, &mut rng(6));
    let run = |f: &dyn Fn(&Graph<f32>) -> wmamba_core::Result<Tensor32>| f(&Graph::inference()).map_err(|e| e.to_string());

    let mut wfe = WfeBlock::<f32>::new("wfe", 4, 4, false, true, &mut rng(7));
    wfe.zero_output_projections();
    let y = run(&|g| Ok((*wfe.forward(g, g.constant(x.clone()))?.value()).clone()))?;
    ensure(y == x, || "zeroed WFE block is not the identity".into())?;

    let mut gam = GatedAttention::<f32>::new("gam", 4, &mut rng(8));
    gam.pw.zero();
    let y = run(&|g| Ok((*gam.forward(g, g.constant(x.clone()))?.value()).clone()))?;
    ensure(y == x, || "zeroed gated attention is not the identity".into())?;

    // without GAM the block equals one with a zeroed GAM projection
    let mut with = WfeBlock::<f32>::new("wfe", 4, 4, false, true, &mut rng(9));
    let without = WfeBlock { gam: None, ..with.clone() };
    with.gam.as_mut().expect("built with GAM").pw.zero();
    let a = run(&|g| Ok((*with.forward(g, g.constant(x.clone()))?.value()).clone()))?;
    let b = run(&|g| Ok((*without.forward(g, g.constant(x.clone()))?.value()).clone()))?;
    ensure(a == b, || "disable_gam differs from a zeroed GAM".into())?;

    // disable_wfe and disable_cafm together pass shallow features straight through
    let config = ModelConfig {
        c_prime: 4,
        n_state: 4,
        ablation: Ablation { disable_wfe: true, disable_cafm: true, ..Ablation::default() },
        ..ModelConfig::default()
    };
    let model = WMamba::<f32>::new(config, 10).map_err(|e| e.to_string())?;
    let img = Tensor32::rand_uniform([1, 1, 8, 8], 0.0, 1.0, &mut rng(11));
    let g = Graph::inference();
    let (vi, ir) = model.features(&g, g.constant(img.clone()), g.constant(img)).map_err(|e| e.to_string())?;
    ensure(vi.f_ccf.value() == vi.f_sf.value() && ir.f_ccf.value() == ir.f_sf.value(), || "disabled stages altered features".into())
}

fn cafm_interleave() -> Result<(), String> {
    let own = Tensor32::rand_uniform([1, 3, 2, 2], -1.0, 1.0, &mut rng(12));
    let other = Tensor32::rand_uniform([1, 3, 2, 2], -1.0, 1.0, &mut rng(13));
    let g = Graph::inference();
    let out = interleave(g.constant(own.clone()), g.constant(other.clone())).map_err(|e| e.to_string())?.value();
    for k in 0..3 {
        let even = out.narrow(1, 2 * k, 1).map_err(|e| e.to_string())?;
        let odd = out.narrow(1, 2 * k + 1, 1).map_err(|e| e.to_string())?;
        ensure(even == own.narrow(1, k, 1).unwrap() && odd == other.narrow(1, k, 1).unwrap(), || format!("channel pair {k} out of order"))?;
    }
    Ok(())
}

fn loss_exactness() -> Result<(), String> {
    let ir = Tensor64::rand_uniform([1, 1, 8, 8], 0.0, 1.0, &mut rng(14));
    let vi = Tensor64::rand_uniform([1, 1, 8, 8], 0.0, 1.0, &mut rng(15));
    let target = ir.zip_map(&vi, f64::max).map_err(|e| e.to_string())?;
    let w = LossWeights::default();
    let t = loss_terms(&target, &ir, &vi, w).map_err(|e| e.to_string())?;
    ensure(t.int == 0.0, || format!("L_int = {:e} at the elementwise max", t.int))?;
    ensure((t.total - (10.0 * t.int + t.grad)).abs() < 1e-7, || "weighted sum mismatch".into())?;
    let same = loss_terms(&ir, &ir, &ir, w).map_err(|e| e.to_string())?;
    ensure(same.grad == 0.0, || format!("L_grad = {:e} on identical images", same.grad))
}

fn metric_oracles() -> Result<(), String> {
    let img = GrayImage::from_fn(32, 32, |r, c| ((r * 7 + c * 3 + (r * c) % 11) % 256) as u8).map_err(|e| e.to_string())?;
    let m = evaluate_all(&img, &img, &img).map_err(|e| e.to_string())?;
    ensure((m.mi - 2.0 * entropy(&img)).abs() < 1e-9, || format!("mi {}", m.mi))?;
    for (name, v) in [("ncie", m.ncie), ("qabf", m.qabf), ("qy", m.qy), ("vif", m.vif)] {
        ensure((v - 1.0).abs() < 1e-6, || format!("{name} {v}"))?;
    }
    ensure(m.qp >= 0.999, || format!("qp {}", m.qp))
}

fn checkpoint_round_trip() -> Result<(), String> {
    let model = WMamba::<f32>::new(ModelConfig::with_width(4), 16).map_err(|e| e.to_string())?;
    let (back, _) = load_checkpoint::<f32>(&save_checkpoint(&model, None)).map_err(|e| e.to_string())?;
    let ir = Tensor32::rand_uniform([1, 1, 8, 8], 0.0, 1.0, &mut rng(17));
    let vi = Tensor32::rand_uniform([1, 1, 8, 8], 0.0, 1.0, &mut rng(18));
    let (a, b) = (model.fuse(&ir, &vi).map_err(|e| e.to_string())?, back.fuse(&ir, &vi).map_err(|e| e.to_string())?);
    ensure(a == b, || "reloaded model fuses differently".into())
}

pub const CHECKS: [(&str, Check); 8] = [
    ("haar perfect reconstruction", haar_reconstruction),
    ("selective scan recurrence", scan_recurrence),
    ("layer gradients", gradients),
    ("residual identities and ablation flags", residual_identities),
    ("cross-modal interleave order", cafm_interleave),
    ("loss exactness", loss_exactness),
    ("metric oracles", metric_oracles),
    ("checkpoint round trip", checkpoint_round_trip),
];

/// Run every check, print one line each, and report whether all passed.
pub fn run(out: &mut dyn Write) -> bool {
    let mut all = true;
    for (name, check) in CHECKS {
        let result = check();
        let line = match &result {
            Ok(()) => format!("PASS  {name}"),
            Err(why) => format!("FAIL  {name}: {why}"),
        };
        all &= result.is_ok();
        let _ = writeln!(out, "{line}");
    }
    all
}
