//! Objective terms: adversarial losses, the multi-positive contrastive loss
//! (optionally with labeled real anchors), the content-consistency loss and
//! their weighted combination.
//!
//! Every function records onto a [`Tape`] so the result can be differentiated.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Scalar, Tape, Tensor};
use crate::error::{CdganError, Result};

/// Stand-in for `-inf` when masking logits; `exp` of it underflows to exactly 0.
const MASKED: f64 = -1e30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight of the contrastive term.
    pub beta1: f64,
    /// Weight of the content term.
    pub beta2: f64,
    /// Softmax temperature of the contrastive term.
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            beta1: 1.0,
            beta2: 0.05,
            tau: 0.07,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(CdganError::validation(format!("tau must be > 0, got {}", self.tau)));
        }
        for (name, w) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(CdganError::validation(format!("{name} must be finite and >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// Generator adversarial objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanMode {
    /// `mean log(1 − σ(D(G(z, c))))`, the literal minimax form.
    Minimax,
    /// `−mean log σ(D(G(z, c)))`.
    #[default]
    NonSaturating,
}

/// `log(1 + eˣ)` per element of an `N×1` column, via log-sum-exp over `[0, x]`.
fn softplus<T: Scalar>(tape: &mut Tape<T>, x: Tensor) -> Result<Tensor> {
    let [n, c] = tape.shape(x);
    if c != 1 {
        return Err(CdganError::Shape {
            op: "softplus",
            lhs: [n, c],
            rhs: [n, 1],
        });
    }
    let zeros = tape.constant(&Matrix::zeros(n, 1));
    let pair = tape.concat(&[zeros, x], 1)?;
    tape.log_sum_exp(pair, 1)
}

fn non_empty<T: Scalar>(tape: &Tape<T>, x: Tensor, what: &str) -> Result<()> {
    let [n, c] = tape.shape(x);
    if n == 0 || c != 1 {
        return Err(CdganError::contract(format!("{what} must be a non-empty N×1 column, got {n}x{c}")));
    }
    Ok(())
}

/// Binary cross-entropy with real → 1 and fake → 0, on raw logits.
pub fn d_loss<T: Scalar>(tape: &mut Tape<T>, real_logits: Tensor, fake_logits: Tensor) -> Result<Tensor> {
    non_empty(tape, real_logits, "real logits")?;
    non_empty(tape, fake_logits, "fake logits")?;
    let neg_real = tape.neg(real_logits);
    let sp_real = softplus(tape, neg_real)?;
    let sp_fake = softplus(tape, fake_logits)?;
    let a = tape.mean(sp_real);
    let b = tape.mean(sp_fake);
    tape.add(a, b)
}

pub fn g_loss<T: Scalar>(tape: &mut Tape<T>, fake_logits: Tensor, mode: GanMode) -> Result<Tensor> {
    non_empty(tape, fake_logits, "fake logits")?;
    match mode {
        GanMode::Minimax => {
            // log(1 − σ(x)) = −softplus(x)
            let sp = softplus(tape, fake_logits)?;
            let m = tape.mean(sp);
            Ok(tape.neg(m))
        }
        GanMode::NonSaturating => {
            let neg = tape.neg(fake_logits);
            let sp = softplus(tape, neg)?;
            Ok(tape.mean(sp))
        }
    }
}

/// Labeled real-image features that join the contrast as extra columns.
#[derive(Clone, Copy, Debug)]
pub struct Anchors<'a> {
    pub features: Tensor,
    pub labels: &'a [usize],
    /// When false, anchors of other classes are excluded from the denominator.
    pub as_negatives: bool,
}

/// Row weights and positive weights of the contrastive estimator.
struct ContrastPlan<T> {
    n_valid: usize,
    /// `N×1`; `1/n_valid` on rows with at least one positive.
    row_weight: Matrix<T>,
    /// `N×(N+M)`; `row_weight / |P(i)|` on positives.
    pos_weight: Matrix<T>,
    /// `N×(N+M)`; `MASKED` on the self-similarity diagonal.
    self_mask: Matrix<T>,
}

fn plan<T: Scalar>(labels: &[usize], anchor_labels: &[usize], anchor_negatives: bool) -> ContrastPlan<T> {
    let n = labels.len();
    let cols = n + anchor_labels.len();
    let positives: Vec<Vec<usize>> = labels
        .iter()
        .enumerate()
        .map(|(i, &li)| {
            labels
                .iter()
                .chain(anchor_labels)
                .enumerate()
                .filter(|&(j, &lj)| j != i && lj == li)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let n_valid = positives.iter().filter(|p| !p.is_empty()).count();
    let mut row_weight = Matrix::zeros(n, 1);
    let mut pos_weight = Matrix::zeros(n, cols);
    for (i, pos) in positives.iter().enumerate() {
        if pos.is_empty() {
            continue;
        }
        let w = 1.0 / n_valid as f64;
        row_weight.as_mut_slice()[i] = T::of(w);
        let pw = T::of(w / pos.len() as f64);
        for &j in pos {
            pos_weight.as_mut_slice()[i * cols + j] = pw;
        }
    }
    let self_mask = Matrix::from_fn(n, cols, |i, j| {
        let foreign_anchor = j >= n && !anchor_negatives && anchor_labels[j - n] != labels[i];
        if i == j || foreign_anchor {
            T::of(MASKED)
        } else {
            T::zero()
        }
    });
    ContrastPlan {
        n_valid,
        row_weight,
        pos_weight,
        self_mask,
    }
}

/// Multi-positive contrastive loss over L2-normalized features.
///
/// For every row `i` with at least one positive, the term is
/// `−(1/|P(i)|) Σ_{p∈P(i)} log softmax_{a∈A(i)}(fᵢ·f_a / τ)[p]`, where `P(i)` is
/// every other sample (generated or anchor) with the same label and `A(i)` is
/// every other sample. Rows without a positive only act as negatives. The
/// result is the mean over contributing rows.
pub fn contrastive_loss<T: Scalar>(
    tape: &mut Tape<T>,
    f: Tensor,
    labels: &[usize],
    tau: f64,
    anchors: Option<Anchors<'_>>,
) -> Result<Tensor> {
    if !(tau > 0.0) {
        return Err(CdganError::validation(format!("tau must be > 0, got {tau}")));
    }
    let [n, d] = tape.shape(f);
    if labels.len() != n {
        return Err(CdganError::contract(format!("{n} feature rows for {} labels", labels.len())));
    }
    let (all, anchor_labels, anchor_negatives) = match anchors {
        Some(a) => {
            let [m, da] = tape.shape(a.features);
            if da != d || a.labels.len() != m {
                return Err(CdganError::Shape {
                    op: "contrastive_loss anchors",
                    lhs: [n, d],
                    rhs: [a.labels.len(), da],
                });
            }
            (tape.concat(&[f, a.features], 0)?, a.labels, a.as_negatives)
        }
        None => (f, &[][..], true),
    };

    let plan = plan::<T>(labels, anchor_labels, anchor_negatives);
    if plan.n_valid == 0 {
        return Err(CdganError::DegenerateContrastive);
    }

    let sim = tape.matmul_t(f, all)?;
    let logits = tape.scale(sim, T::of(1.0 / tau));
    let mask = tape.constant(&plan.self_mask);
    let logits = tape.add(logits, mask)?;

    let lse = tape.log_sum_exp(logits, 1)?;
    let rw = tape.constant(&plan.row_weight);
    let weighted_lse = tape.mul(lse, rw)?;
    let denom = tape.sum(weighted_lse);

    let pw = tape.constant(&plan.pos_weight);
    let weighted_pos = tape.mul(logits, pw)?;
    let numer = tape.sum(weighted_pos);
    tape.sub(denom, numer)
}

/// Value the contrastive loss takes under a perfect encoder (`f = f⁺`),
/// up to the constant `1/τ`:
/// mean over rows with a positive of `log(e^{1/τ} + Σ_{negatives} e^{fᵢ·f⁻/τ})`.
///
/// On single-positive batches with identical positive features,
/// `contrastive_loss = ideal_encoder_bound − 1/τ`.
pub fn ideal_encoder_bound<T: Scalar>(
    tape: &mut Tape<T>,
    f: Tensor,
    labels: &[usize],
    tau: f64,
) -> Result<Tensor> {
    if !(tau > 0.0) {
        return Err(CdganError::validation(format!("tau must be > 0, got {tau}")));
    }
    let [n, _] = tape.shape(f);
    if labels.len() != n {
        return Err(CdganError::contract(format!("{n} feature rows for {} labels", labels.len())));
    }
    let plan = plan::<T>(labels, &[], true);
    if plan.n_valid == 0 {
        return Err(CdganError::DegenerateContrastive);
    }
    let same_class = Matrix::from_fn(n, n, |i, j| {
        if labels[i] == labels[j] {
            T::of(MASKED)
        } else {
            T::zero()
        }
    });

    let sim = tape.matmul_t(f, f)?;
    let logits = tape.scale(sim, T::of(1.0 / tau));
    let mask = tape.constant(&same_class);
    let negatives = tape.add(logits, mask)?;
    let positive = tape.constant(&Matrix::from_fn(n, 1, |_, _| T::of(1.0 / tau)));
    let row = tape.concat(&[positive, negatives], 1)?;
    let lse = tape.log_sum_exp(row, 1)?;
    let rw = tape.constant(&plan.row_weight);
    let weighted = tape.mul(lse, rw)?;
    Ok(tape.sum(weighted))
}

/// Mean over the batch of `‖zᵢ − eᵢ‖²`.
pub fn content_loss<T: Scalar>(tape: &mut Tape<T>, z: Tensor, e: Tensor) -> Result<Tensor> {
    let diff = tape.sub(z, e).map_err(|err| match err {
        CdganError::Shape { lhs, rhs, .. } => CdganError::Shape {
            op: "content_loss",
            lhs,
            rhs,
        },
        other => other,
    })?;
    let n = tape.shape(diff)[0];
    let sq = tape.mul(diff, diff)?;
    let total = tape.sum(sq);
    Ok(tape.scale(total, T::of(1.0 / n as f64)))
}

/// `l_gan + β₁·l_c + β₂·l_z`.
pub fn total_g_loss<T: Scalar>(
    tape: &mut Tape<T>,
    l_gan: Tensor,
    l_c: Tensor,
    l_z: Tensor,
    w: &LossWeights,
) -> Result<Tensor> {
    let c = tape.scale(l_c, T::of(w.beta1));
    let z = tape.scale(l_z, T::of(w.beta2));
    let partial = tape.add(l_gan, c)?;
    tape.add(partial, z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(tape: &mut Tape<f64>, v: &[f64]) -> Tensor {
        tape.param(&Matrix::new(v.len(), 1, v.to_vec()).unwrap())
    }

    fn rows(tape: &mut Tape<f64>, r: &[Vec<f64>]) -> Tensor {
        tape.param(&Matrix::from_rows(r).unwrap())
    }

    fn eval(tape: &Tape<f64>, t: Tensor) -> f64 {
        tape.scalar(t).unwrap()
    }

    #[test]
    fn discriminator_loss_values() {
        let mut tape = Tape::new();
        let r = col(&mut tape, &[0.0, 0.0]);
        let f = col(&mut tape, &[0.0, 0.0]);
        let l = d_loss(&mut tape, r, f).unwrap();
        assert!((eval(&tape, l) - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);

        let r = col(&mut tape, &[60.0]);
        let f = col(&mut tape, &[-60.0]);
        let l = d_loss(&mut tape, r, f).unwrap();
        assert!(eval(&tape, l) < 1e-20 && eval(&tape, l) >= 0.0);
    }

    #[test]
    fn generator_loss_modes() {
        let mut tape = Tape::new();
        let f = col(&mut tape, &[0.0]);
        let mm = g_loss(&mut tape, f, GanMode::Minimax).unwrap();
        let ns = g_loss(&mut tape, f, GanMode::NonSaturating).unwrap();
        assert!((eval(&tape, mm) + std::f64::consts::LN_2).abs() < 1e-12);
        assert!((eval(&tape, ns) - std::f64::consts::LN_2).abs() < 1e-12);

        for mode in [GanMode::Minimax, GanMode::NonSaturating] {
            let mut tape = Tape::new();
            let f = col(&mut tape, &[0.3]);
            let l = g_loss(&mut tape, f, mode).unwrap();
            let g = tape.backward(l).unwrap();
            assert!(g.get(f).unwrap()[0] < 0.0, "{mode:?}");
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        let mut tape = Tape::<f64>::new();
        let wide = tape.param(&Matrix::zeros(1, 2));
        let ok = col(&mut tape, &[0.0]);
        assert!(d_loss(&mut tape, wide, ok).is_err());
    }

    #[test]
    fn contrastive_three_sample_example() {
        let mut tape = Tape::new();
        let f = rows(&mut tape, &[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        let l = contrastive_loss(&mut tape, f, &[0, 0, 1], 1.0, None).unwrap();
        let want = (1.0 + (-1.0f64).exp()).ln();
        assert!((eval(&tape, l) - want).abs() < 1e-12);
        assert!((want - 0.31326).abs() < 1e-5);
    }

    #[test]
    fn identical_features_give_log_one_plus_m() {
        // one positive pair and m negatives, all features equal
        for m in 0..5 {
            let mut labels = vec![0, 0];
            labels.extend(1..=m);
            let r = vec![vec![0.6, 0.8]; labels.len()];
            let mut tape = Tape::new();
            let f = rows(&mut tape, &r);
            let l = contrastive_loss(&mut tape, f, &labels, 0.5, None).unwrap();
            // the two class-0 rows are the only contributors
            let want = ((1 + m) as f64).ln();
            assert!((eval(&tape, l) - want).abs() < 1e-12, "m={m}");
        }
    }

    #[test]
    fn contrastive_errors() {
        let mut tape = Tape::new();
        let f = rows(&mut tape, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(
            contrastive_loss(&mut tape, f, &[0, 1], 1.0, None),
            Err(CdganError::DegenerateContrastive)
        ));
        assert!(matches!(
            contrastive_loss(&mut tape, f, &[0, 0], 0.0, None),
            Err(CdganError::Validation(_))
        ));
    }

    #[test]
    fn anchors_supply_positives() {
        let mut tape = Tape::new();
        let f = rows(&mut tape, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let a = tape.constant(&Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let anchors = Anchors { features: a, labels: &[0, 1], as_negatives: true };
        let l = contrastive_loss(&mut tape, f, &[0, 1], 1.0, Some(anchors)).unwrap();
        // row 0: positive anchor sim 1, others sim 0 (f1, anchor 1)
        let want = (1.0f64.exp() + 2.0).ln() - 1.0;
        assert!((eval(&tape, l) - want).abs() < 1e-12);

        let anchors = Anchors { features: a, labels: &[0, 1], as_negatives: false };
        let l = contrastive_loss(&mut tape, f, &[0, 1], 1.0, Some(anchors)).unwrap();
        let want = (1.0f64.exp() + 1.0).ln() - 1.0;
        assert!((eval(&tape, l) - want).abs() < 1e-12);
    }

    #[test]
    fn ideal_bound_examples() {
        let mut tape = Tape::new();
        let f = rows(&mut tape, &[vec![1.0, 0.0], vec![1.0, 0.0]]);
        let b = ideal_encoder_bound(&mut tape, f, &[0, 0], 0.25).unwrap();
        assert!((eval(&tape, b) - 4.0).abs() < 1e-12);

        let f = rows(&mut tape, &[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]]);
        let labels = [0, 0, 1, 1];
        let b = ideal_encoder_bound(&mut tape, f, &labels, 1.0).unwrap();
        // each row sees e^1 plus two orthogonal negatives
        assert!((eval(&tape, b) - (1.0f64.exp() + 2.0).ln()).abs() < 1e-12);

        let f = rows(&mut tape, &[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        let b = ideal_encoder_bound(&mut tape, f, &[0, 0, 1], 1.0).unwrap();
        assert!((eval(&tape, b) - (1.0f64.exp() + 1.0).ln()).abs() < 1e-12);
        assert!((eval(&tape, b) - 1.3133).abs() < 1e-4);
        let c = contrastive_loss(&mut tape, f, &[0, 0, 1], 1.0, None).unwrap();
        assert!((eval(&tape, c) - (eval(&tape, b) - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn content_loss_values() {
        let mut tape = Tape::new();
        let z = rows(&mut tape, &[vec![1.0, 0.0]]);
        let e = rows(&mut tape, &[vec![0.0, 0.0]]);
        let l = content_loss(&mut tape, z, e).unwrap();
        assert_eq!(eval(&tape, l), 1.0);
        let l0 = content_loss(&mut tape, z, z).unwrap();
        assert_eq!(eval(&tape, l0), 0.0);

        let z2 = rows(&mut tape, &[vec![2.0, 0.0]]);
        let l2 = content_loss(&mut tape, z2, e).unwrap();
        assert_eq!(eval(&tape, l2), 4.0 * eval(&tape, l));

        let wrong = rows(&mut tape, &[vec![0.0, 0.0, 0.0]]);
        assert!(matches!(content_loss(&mut tape, z, wrong), Err(CdganError::Shape { .. })));
    }

    #[test]
    fn total_loss_combines_terms() {
        let mut tape = Tape::<f64>::new();
        let g = tape.scalar_constant(1.0);
        let c = tape.scalar_constant(0.1);
        let z = tape.scalar_constant(2.0);
        let w = LossWeights { beta1: 50.0, beta2: 0.0005, tau: 0.07 };
        let t = total_g_loss(&mut tape, g, c, z, &w).unwrap();
        assert!((eval(&tape, t) - 6.001).abs() < 1e-12);
        let off = LossWeights { beta1: 0.0, beta2: 0.0, tau: 0.07 };
        let t = total_g_loss(&mut tape, g, c, z, &off).unwrap();
        assert_eq!(eval(&tape, t), 1.0);
    }

    #[test]
    fn weights_validate() {
        assert!(LossWeights::default().validate().is_ok());
        assert!(LossWeights { tau: 0.0, ..Default::default() }.validate().is_err());
        assert!(LossWeights { beta1: -1.0, ..Default::default() }.validate().is_err());
    }
}
