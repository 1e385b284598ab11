//! Cross-module scenarios: kernels with nontrivial block structure driven
//! through the minimizing-family tables and the variational sweeps.

use nlplab_core::discretize::{Backend, Field, Grid, GridShape};
use nlplab_core::kernel::{
    JordanBlockSpec, JordanStructure, KernelSpec, LinearMapSpec, PsiProfile, PsiShape,
};
use nlplab_core::linalg::Matrix;
use nlplab_core::minimizers;
use nlplab_core::spectral::{self, MinimizeOpts};
use std::sync::Arc;

/// A = C diag(2, 1/2) C^{-1} with a shearing C: |det A| = 1, so the first
/// eigenvalue vanishes and every route must agree on that.
fn det_one_spec() -> KernelSpec {
    let blocks = vec![
        JordanBlockSpec::real(2.0, 1).unwrap(),
        JordanBlockSpec::real(0.5, 1).unwrap(),
    ];
    let conj = Matrix::from_rows(2, vec![1.0, 0.4, -0.2, 1.0]).unwrap();
    let j = JordanStructure {
        blocks: blocks.clone(),
        conjugation: conj.clone(),
    }
    .assemble();
    let a = conj.matmul(&j).matmul(&conj.inverse().unwrap());
    let map = LinearMapSpec::with_blocks(a, blocks, conj).unwrap();
    KernelSpec::new(PsiProfile::new(PsiShape::Box, 0.5, 2).unwrap(), map).unwrap()
}

#[test]
fn det_one_kernel_has_vanishing_eigenvalue_all_routes() {
    let spec = det_one_spec();
    let closed = spectral::lambda_closed_form(2.0, &spec.map, &spec.psi).unwrap();
    // det(C J C^-1) = 1 up to rounding in the product
    assert!(closed.value < 1e-30, "closed form {}", closed.value);

    // the upper-bound table must sink toward zero
    let rows = minimizers::verify_upper_bound(&spec, 2.0, &[4, 16, 64], 200_000, 99).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].upper_bound <= w[0].upper_bound + 1e-12);
    }
    assert!(
        rows.last().unwrap().upper_bound < 0.2,
        "bound should sink for |det A| = 1, got {:?}",
        rows.last().unwrap()
    );
    for r in &rows {
        assert!(
            (r.quotient_mc - r.quotient_closed).abs() <= 3.0 * r.mc_stderr,
            "MC disagrees with the cell series: {r:?}"
        );
    }

    // variational estimates decrease with the ball and stay nonnegative
    let opts = MinimizeOpts {
        max_iters: 30_000,
        ..Default::default()
    };
    let ests = spectral::expanding_domain_sweep(&spec, 2.0, &[2.0, 3.0], 0.25, &opts).unwrap();
    assert!(ests[1].value <= ests[0].value + 1e-8);
    assert!(ests.iter().all(|e| e.value >= 0.0));
}

#[test]
fn contractive_map_converges_to_its_closed_form() {
    // |det| = 1/2: lambda = 2 (sqrt(2) - 1)^2, reached by the contractive
    // construction.
    let psi = PsiProfile::new(PsiShape::Box, 0.5, 1).unwrap();
    let contracting = LinearMapSpec::scalar(0.5).unwrap();
    let lc = spectral::lambda_closed_form(2.0, &contracting, &psi)
        .unwrap()
        .value;
    let expect = 2.0 * (2.0f64.sqrt() - 1.0) * (2.0f64.sqrt() - 1.0);
    assert!((lc - expect).abs() < 1e-14, "lambda {lc} vs {expect}");

    let spec = KernelSpec::new(psi, contracting).unwrap();
    let rows = minimizers::verify_upper_bound(&spec, 2.0, &[10, 1000], 200_000, 3).unwrap();
    let last = rows.last().unwrap();
    assert!(
        (last.upper_bound - lc) / lc < 0.02,
        "contractive bound at n=1000: {} vs {}",
        last.upper_bound,
        lc
    );

    // and the sampled minimizer field reproduces its closed quotient
    let tensor = minimizers::tensor_for_map(&spec.map, 2.0, 2).unwrap();
    let scale = 24.0;
    let grid = Arc::new(Grid::new(1, scale, 1.0 / 32.0, GridShape::Box).unwrap());
    let u = Field::from_fn(Arc::clone(&grid), |x| tensor.eval(&[x[0] / scale]).unwrap()).unwrap();
    let q = spectral::rayleigh_quotient(&u, &spec, 2.0, Backend::Grid).unwrap();
    let target = 2.0
        * spec.psi.integral()
        * minimizers::quotient_closed_form(minimizers::FamilyKind::Contractive, 0.5, 2.0, 2)
            .unwrap();
    assert!(
        (q - target).abs() < 0.05 * target,
        "sampled {q} vs closed {target}"
    );
}

#[test]
fn mixed_block_map_in_three_dimensions() {
    // expansive(1.5) x rotation pair of modulus 1: |det A| = 1.5; the
    // unitary factor drops out of the product quotient.
    let blocks = vec![
        JordanBlockSpec::real(1.5, 1).unwrap(),
        JordanBlockSpec::complex(0.6, 0.8, 1).unwrap(),
    ];
    let conj = Matrix::identity(3);
    let j = JordanStructure {
        blocks: blocks.clone(),
        conjugation: conj.clone(),
    }
    .assemble();
    let map = LinearMapSpec::with_blocks(j, blocks, conj).unwrap();
    let psi = PsiProfile::new(PsiShape::SmoothBump, 1.0, 3).unwrap();
    let spec = KernelSpec::new(psi, map).unwrap();

    let lambda = spectral::lambda_closed_form(2.0, &spec.map, &spec.psi)
        .unwrap()
        .value;
    assert!(lambda > 0.0);
    let rows = minimizers::verify_upper_bound(&spec, 2.0, &[8, 64, 512], 200_000, 12).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].upper_bound <= w[0].upper_bound + 1e-12);
    }
    for r in &rows {
        assert!(r.upper_bound >= lambda - 1e-12);
        assert!(
            (r.quotient_mc - r.quotient_closed).abs() <= 3.0 * r.mc_stderr,
            "MC disagrees: {r:?}"
        );
    }
    // the relative gap closes like 1/n (the constant grows as |det A|
    // nears 1, so pin the decay rate rather than a fixed percentage)
    let gap = |r: &minimizers::BoundRow| (r.upper_bound - lambda) / lambda;
    let g64 = gap(&rows[1]);
    let g512 = gap(&rows[2]);
    assert!(g512 < 0.1, "bound gap at n=512 is {g512}");
    assert!(
        g512 < 0.2 * g64,
        "gap should shrink ~8x from n=64 to n=512: {g64} -> {g512}"
    );
}
