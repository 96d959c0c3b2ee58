//! Heatmap metrics and adversarial-input generation.
//!
//! Localization error follows the reference-vs-candidate recipe: both maps
//! are turned into probability distributions, the cross entropy is taken at
//! every time step, and the minimum over steps is the error. Maps are first
//! scaled to unit sum and only then smoothed, so the metric is invariant
//! under positive rescaling of either map.

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::interpret::Heatmap;
use crate::snn::{InputNodes, Network, UnrollMode};
use crate::Tensor64;

/// Default smoothing for distribution normalization; keeps all-zero steps
/// finite without visibly distorting informative maps.
pub const EPS_SMOOTH: f64 = 1e-8;

/// Turns a non-negative map into a probability distribution.
///
/// Values are divided by their sum first, then uniformly smoothed:
/// q_i = (v_i/s + eps) / (1 + n*eps). An all-zero map with eps > 0 becomes
/// the uniform distribution; with eps = 0 it is an error.
pub fn normalize_to_distribution(values: &Tensor64, eps: f64) -> Result<Tensor64> {
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::invalid("normalize", format!("bad smoothing epsilon {}", eps)));
    }
    let n = values.numel();
    if n == 0 {
        return Err(Error::invalid("normalize", "empty map"));
    }
    if values.data().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("normalize", "negative heatmap value"));
    }
    let s: f64 = values.data().iter().sum();
    if !s.is_finite() {
        return Err(Error::non_finite("normalize", format!("map sum is {}", s)));
    }
    if s == 0.0 {
        if eps == 0.0 {
            return Err(Error::invalid(
                "normalize",
                "all-zero map cannot become a distribution without smoothing",
            ));
        }
        return Ok(Tensor64::filled(values.shape(), 1.0 / n as f64));
    }
    let denom = 1.0 + n as f64 * eps;
    let out: Vec<f64> = values.data().iter().map(|&v| (v / s + eps) / denom).collect();
    Tensor64::from_vec(values.shape(), out)
}

/// Shannon entropy of a distribution in nats; zero-probability entries
/// contribute nothing.
pub fn entropy(p: &Tensor64) -> Result<f64> {
    let mut h = 0.0;
    for &v in p.data() {
        if v < 0.0 {
            return Err(Error::invalid("entropy", "negative probability"));
        }
        if v > 0.0 {
            h -= v * v.ln();
        }
    }
    if !h.is_finite() {
        return Err(Error::non_finite("entropy", format!("value {}", h)));
    }
    Ok(h)
}

/// Cross entropy H(p, q) in nats, skipping entries where p is zero.
pub fn cross_entropy(p: &Tensor64, q: &Tensor64) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::shape(
            "cross_entropy",
            format!("{:?} vs {:?}", p.shape(), q.shape()),
        ));
    }
    let mut h = 0.0;
    for (&pi, &qi) in p.data().iter().zip(q.data().iter()) {
        if pi < 0.0 || qi < 0.0 {
            return Err(Error::invalid("cross_entropy", "negative probability"));
        }
        if pi > 0.0 {
            if qi == 0.0 {
                return Err(Error::invalid(
                    "cross_entropy",
                    "candidate assigns zero mass where the reference is positive",
                ));
            }
            h -= pi * qi.ln();
        }
    }
    if !h.is_finite() {
        return Err(Error::non_finite("cross_entropy", format!("value {}", h)));
    }
    Ok(h)
}

#[derive(Debug, Clone)]
pub struct LocalizationResult {
    /// Cross entropy against the reference at each time step.
    pub per_step: Vec<f64>,
    /// min over `per_step`; the localization error.
    pub min_error: f64,
    /// First time step attaining the minimum.
    pub argmin_step: usize,
    /// Entropy of the reference distribution, the floor of every per-step
    /// value.
    pub reference_entropy: f64,
}

/// Localization error: the minimum over time steps of the cross entropy
/// between the reference map and each candidate. All maps must already share
/// one resolution; upsample first.
pub fn localization_error(
    candidates: &[Heatmap],
    reference: &Heatmap,
    eps: f64,
) -> Result<LocalizationResult> {
    if candidates.is_empty() {
        return Err(Error::invalid("localization", "no candidate maps"));
    }
    for c in candidates {
        if c.values.shape() != reference.values.shape() {
            return Err(Error::shape(
                "localization",
                format!(
                    "candidate {:?} vs reference {:?}; resample to a common resolution first",
                    c.values.shape(),
                    reference.values.shape()
                ),
            ));
        }
    }
    let p = normalize_to_distribution(&reference.values, eps)?;
    let reference_entropy = entropy(&p)?;
    let mut per_step = Vec::with_capacity(candidates.len());
    for c in candidates {
        let q = normalize_to_distribution(&c.values, eps)?;
        per_step.push(cross_entropy(&p, &q)?);
    }
    let mut argmin_step = 0;
    for (i, &v) in per_step.iter().enumerate() {
        if v < per_step[argmin_step] {
            argmin_step = i;
        }
    }
    Ok(LocalizationResult {
        min_error: per_step[argmin_step],
        argmin_step,
        per_step,
        reference_entropy,
    })
}

/// Population variance of the pixel values.
pub fn heatmap_variance(map: &Heatmap) -> Result<f64> {
    let n = map.values.numel();
    if n == 0 {
        return Err(Error::invalid("variance", "empty map"));
    }
    let mean: f64 = map.values.data().iter().sum::<f64>() / n as f64;
    let var =
        map.values.data().iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Ok(var)
}

/// Maximum per-step variance across a heatmap sequence.
pub fn variance_max_over_time(maps: &[Heatmap]) -> Result<f64> {
    if maps.is_empty() {
        return Err(Error::invalid("variance", "no maps"));
    }
    let mut best = f64::NEG_INFINITY;
    for m in maps {
        best = best.max(heatmap_variance(m)?);
    }
    Ok(best)
}

/// Affinely rescales values to [0, 1]; a constant map becomes all zeros.
pub fn minmax_normalize(values: &Tensor64) -> Result<Tensor64> {
    values.ensure_finite("minmax_normalize")?;
    let lo = values.min_value().ok_or_else(|| Error::invalid("minmax_normalize", "empty map"))?;
    let hi = values.max_value().expect("non-empty after min_value");
    if hi == lo {
        return Ok(Tensor64::zeros(values.shape()));
    }
    let span = hi - lo;
    Ok(values.map(|v| (v - lo) / span))
}

/// Mean absolute difference between two maps already scaled to [0, 1].
pub fn heatmap_l1(a: &Tensor64, b: &Tensor64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape("heatmap_l1", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    if a.numel() == 0 {
        return Err(Error::invalid("heatmap_l1", "empty map"));
    }
    for t in [a, b] {
        if t.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::invalid("heatmap_l1", "values outside [0, 1]; normalize first"));
        }
    }
    let total: f64 = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| (x - y).abs()).sum();
    Ok(total / a.numel() as f64)
}

/// Per-step L1 distances reduced by max, for spiking heatmap sequences.
/// Each map is min-max normalized before differencing.
pub fn heatmap_l1_max_over_time(clean: &[Heatmap], adv: &[Heatmap]) -> Result<f64> {
    if clean.len() != adv.len() || clean.is_empty() {
        return Err(Error::invalid(
            "heatmap_l1",
            format!("sequence lengths {} vs {}", clean.len(), adv.len()),
        ));
    }
    let mut best = f64::NEG_INFINITY;
    for (c, a) in clean.iter().zip(adv.iter()) {
        let cn = minmax_normalize(&c.values)?;
        let an = minmax_normalize(&a.values)?;
        best = best.max(heatmap_l1(&cn, &an)?);
    }
    Ok(best)
}

/// Result of a single-step gradient-sign attack.
#[derive(Debug, Clone)]
pub struct FgsmOutcome {
    /// Perturbed unit-range image, same shape as the input.
    pub image: Tensor64,
    /// Pixels left unchanged because the loss gradient there was exactly
    /// zero.
    pub zero_grad_pixels: usize,
}

fn check_attack_inputs(net: &Network, image: &Tensor64, label: usize, eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) || !eps.is_finite() {
        return Err(Error::invalid("fgsm", format!("epsilon {} outside [0, 1]", eps)));
    }
    if image.shape().len() != 3 {
        return Err(Error::shape(
            "fgsm",
            format!("expected [C, H, W] image, got {:?}", image.shape()),
        ));
    }
    if image.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::invalid("fgsm", "image values outside [0, 1]"));
    }
    if label >= net.config.classes {
        return Err(Error::invalid(
            "fgsm",
            format!("label {} out of range ({} classes)", label, net.config.classes),
        ));
    }
    Ok(())
}

/// Applies `eps * sign(grad)` and clips to the unit pixel range. Returns the
/// perturbed image and the number of pixels left untouched by a zero
/// gradient.
pub fn perturb_by_sign(image: &Tensor64, grad: &Tensor64, eps: f64) -> (Tensor64, usize) {
    let mut zero = 0usize;
    let data: Vec<f64> = image
        .data()
        .iter()
        .zip(grad.data().iter())
        .map(|(&x, &g)| {
            let sign = if g > 0.0 {
                1.0
            } else if g < 0.0 {
                -1.0
            } else {
                zero += 1;
                0.0
            };
            (x + eps * sign).clamp(0.0, 1.0)
        })
        .collect();
    let adv =
        Tensor64::from_vec(image.shape(), data).expect("perturbed image keeps the input shape");
    (adv, zero)
}

/// Fast gradient sign attack on the analog network. The perturbation is
/// exactly eps times the sign of the input gradient of the training loss,
/// clipped back to the unit pixel range.
pub fn fgsm(net: &Network, image: &Tensor64, label: usize, eps: f64) -> Result<FgsmOutcome> {
    check_attack_inputs(net, image, label, eps)?;
    let mut shape = vec![1usize];
    shape.extend_from_slice(image.shape());
    let mut tape = Tape::new();
    let input = tape.leaf(image.clone().reshaped(&shape)?)?;
    let taped = net.ann_on_tape(&mut tape, input, None)?;
    let loss = tape.softmax_cross_entropy(taped.logits, &[label])?;
    let grads = tape.backward(loss)?;
    let g = grads.get(input).clone().reshaped(image.shape())?;
    let (adv, zero_grad_pixels) = perturb_by_sign(image, &g, eps);
    Ok(FgsmOutcome { image: adv, zero_grad_pixels })
}

/// Gradient-sign attack against the spiking network through an expected-rate
/// relaxation: the Bernoulli encoder is replaced by its mean, so every step
/// receives the pixel intensity itself and the loss becomes differentiable
/// in the pixels. The spike nonlinearity keeps its surrogate derivative.
/// This is a proxy for attacks on the sampled network, not an exact
/// white-box gradient; outputs should be labeled accordingly.
pub fn snn_fgsm_proxy(
    net: &Network,
    image: &Tensor64,
    label: usize,
    eps: f64,
) -> Result<FgsmOutcome> {
    check_attack_inputs(net, image, label, eps)?;
    let mut shape = vec![1usize];
    shape.extend_from_slice(image.shape());
    let mut tape = Tape::new();
    let input = tape.leaf(image.clone().reshaped(&shape)?)?;
    let unrolled = net.unroll_on_tape(
        &mut tape,
        InputNodes::Constant(input),
        net.config.time_steps,
        UnrollMode { train_stats: false },
    )?;
    let loss = tape.softmax_cross_entropy(unrolled.output, &[label])?;
    let grads = tape.backward(loss)?;
    let g = grads.get(input).clone().reshaped(image.shape())?;
    let (adv, zero_grad_pixels) = perturb_by_sign(image, &g, eps);
    Ok(FgsmOutcome { image: adv, zero_grad_pixels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::NetworkConfig;
    use approx::assert_relative_eq;

    fn map(shape: &[usize], v: Vec<f64>) -> Heatmap {
        Heatmap::new(Tensor64::from_vec(shape, v).unwrap(), None).unwrap()
    }

    #[test]
    fn normalization_handles_zero_and_plain_maps() {
        let t = Tensor64::from_vec(&[1, 2], vec![1.0, 3.0]).unwrap();
        let q = normalize_to_distribution(&t, 0.0).unwrap();
        assert_relative_eq!(q.data()[0], 0.25);
        assert_relative_eq!(q.data()[1], 0.75);

        let z = Tensor64::zeros(&[2, 2]);
        let qz = normalize_to_distribution(&z, 1e-8).unwrap();
        for &v in qz.data() {
            assert_relative_eq!(v, 0.25);
        }
        assert!(normalize_to_distribution(&z, 0.0).is_err());
    }

    #[test]
    fn normalization_is_scale_invariant() {
        let t = Tensor64::from_vec(&[1, 3], vec![0.1, 0.5, 0.9]).unwrap();
        let s = t.scale(37.0);
        let q1 = normalize_to_distribution(&t, 1e-8).unwrap();
        let q2 = normalize_to_distribution(&s, 1e-8).unwrap();
        for (a, b) in q1.data().iter().zip(q2.data().iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn localization_identities() {
        let h = map(&[2, 2], vec![0.1, 0.2, 0.3, 0.4]);
        let res = localization_error(std::slice::from_ref(&h), &h, EPS_SMOOTH).unwrap();
        assert!((res.min_error - res.reference_entropy).abs() < 1e-12);

        let u = map(&[2, 2], vec![1.0, 1.0, 1.0, 1.0]);
        let res = localization_error(std::slice::from_ref(&u), &u, EPS_SMOOTH).unwrap();
        assert_relative_eq!(res.min_error, (4.0f64).ln(), max_relative = 1e-9);

        // hand case: p = [0.25, 0.75] vs uniform q
        let p = map(&[1, 2], vec![1.0, 3.0]);
        let q = map(&[1, 2], vec![1.0, 1.0]);
        let res = localization_error(std::slice::from_ref(&q), &p, 0.0).unwrap();
        assert_relative_eq!(res.min_error, (2.0f64).ln(), max_relative = 1e-12);
    }

    #[test]
    fn localization_picks_the_best_step_and_respects_gibbs() {
        let reference = map(&[1, 2], vec![1.0, 3.0]);
        let steps = vec![
            map(&[1, 2], vec![1.0, 1.0]),
            map(&[1, 2], vec![1.0, 3.0]),
            map(&[1, 2], vec![3.0, 1.0]),
        ];
        let res = localization_error(&steps, &reference, EPS_SMOOTH).unwrap();
        assert_eq!(res.argmin_step, 1);
        for &v in &res.per_step {
            assert!(v >= res.reference_entropy - 1e-12);
            assert!(v >= res.min_error);
        }
    }

    #[test]
    fn localization_rejects_resolution_mismatch() {
        let a = map(&[2, 2], vec![1.0; 4]);
        let b = map(&[1, 2], vec![1.0; 2]);
        assert!(localization_error(std::slice::from_ref(&a), &b, EPS_SMOOTH).is_err());
    }

    #[test]
    fn variance_basics() {
        let c = map(&[2, 2], vec![0.7; 4]);
        assert_relative_eq!(heatmap_variance(&c).unwrap(), 0.0);
        let two = map(&[1, 2], vec![0.0, 1.0]);
        assert_relative_eq!(heatmap_variance(&two).unwrap(), 0.25);
        let scaled = map(&[1, 2], vec![0.0, 3.0]);
        assert_relative_eq!(heatmap_variance(&scaled).unwrap(), 9.0 * 0.25);
        assert_relative_eq!(variance_max_over_time(&[c, two]).unwrap(), 0.25);
    }

    #[test]
    fn minmax_and_l1() {
        let t = Tensor64::from_vec(&[1, 3], vec![2.0, 4.0, 6.0]).unwrap();
        let n = minmax_normalize(&t).unwrap();
        assert_eq!(n.data(), &[0.0, 0.5, 1.0]);
        let c = minmax_normalize(&Tensor64::filled(&[2], 5.0)).unwrap();
        assert_eq!(c.data(), &[0.0, 0.0]);

        let a = Tensor64::from_vec(&[1, 2], vec![0.2, 0.8]).unwrap();
        let b = Tensor64::from_vec(&[1, 2], vec![0.4, 0.4]).unwrap();
        assert_relative_eq!(heatmap_l1(&a, &b).unwrap(), 0.3);
        assert_relative_eq!(heatmap_l1(&a, &a).unwrap(), 0.0);
        let z = Tensor64::from_vec(&[1, 2], vec![0.0, 1.0]).unwrap();
        let o = Tensor64::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap();
        assert_relative_eq!(heatmap_l1(&z, &o).unwrap(), 1.0);
    }

    #[test]
    fn fgsm_contracts_on_a_tiny_ann() {
        let cfg = NetworkConfig::ann_preset([1, 8, 8], 4, 5);
        let net = Network::new(cfg).unwrap();
        let mut px = vec![0.0f64; 64];
        for (i, p) in px.iter_mut().enumerate() {
            *p = (i % 7) as f64 / 10.0 + 0.15;
        }
        let image = Tensor64::from_vec(&[1, 8, 8], px).unwrap();

        let clean = fgsm(&net, &image, 1, 0.0).unwrap();
        assert_eq!(clean.image.data(), image.data());

        let eps = 4.0 / 255.0;
        let out = fgsm(&net, &image, 1, eps).unwrap();
        for ((&x, &y), i) in image.data().iter().zip(out.image.data().iter()).zip(0..) {
            let d = (y - x).abs();
            assert!(d <= eps + 1e-15, "pixel {} moved {}", i, d);
            assert!((0.0..=1.0).contains(&y));
        }
    }

    #[test]
    fn snn_proxy_respects_the_bound() {
        let cfg = NetworkConfig::snn_preset([1, 8, 8], 4, 4, 0.99, 1.0, 0.3, 77);
        let net = Network::new(cfg).unwrap();
        let image = Tensor64::filled(&[1, 8, 8], 0.6);
        let eps = 4.0 / 255.0;
        let out = snn_fgsm_proxy(&net, &image, 2, eps).unwrap();
        for (&x, &y) in image.data().iter().zip(out.image.data().iter()) {
            assert!((y - x).abs() <= eps + 1e-15);
            assert!((0.0..=1.0).contains(&y));
        }
    }
}
