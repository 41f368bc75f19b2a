//! Finite-difference oracle for analytic gradients.

use crate::rng::Rng;

use super::{NumericsError, Result, Tensor};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step per coordinate.
    pub step: f64,
    /// Number of randomly sampled coordinates to probe (all, if fewer exist).
    pub sample_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            sample_coords: 200,
            seed: 0x5eed,
        }
    }
}

/// Compares analytic gradients against central differences.
///
/// `eval` computes the scalar objective at a parameter point; `analytic`
/// returns one gradient tensor per parameter, evaluated once at `params`.
/// Returns the maximum relative error
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)` over the
/// sampled coordinates.
pub fn gradcheck<E, G>(
    params: &[Tensor],
    eval: E,
    analytic: G,
    config: &GradCheckConfig,
) -> Result<f64>
where
    E: Fn(&[Tensor]) -> Result<f64>,
    G: Fn(&[Tensor]) -> Result<Vec<Tensor>>,
{
    let grads = analytic(params)?;
    assert_eq!(grads.len(), params.len(), "one gradient per parameter");
    for g in &grads {
        if !g.all_finite() {
            return Err(NumericsError::NonFinite("gradcheck analytic gradient"));
        }
    }

    let total: usize = params.iter().map(|p| p.numel()).sum();
    let n = config.sample_coords.min(total);
    let mut rng = Rng::new(config.seed);
    let mut coords: Vec<usize> = if n == total {
        (0..total).collect()
    } else {
        let mut all: Vec<usize> = (0..total).collect();
        rng.shuffle(&mut all);
        all.truncate(n);
        all.sort_unstable();
        all
    };
    coords.dedup();

    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_rel = 0.0f64;
    for flat in coords {
        let (pi, off) = locate(params, flat);
        let orig = work[pi].data()[off];

        work[pi].data_mut()[off] = orig + config.step;
        let up = eval(&work)?;
        work[pi].data_mut()[off] = orig - config.step;
        let down = eval(&work)?;
        work[pi].data_mut()[off] = orig;

        if !up.is_finite() || !down.is_finite() {
            return Err(NumericsError::NonFinite("gradcheck objective"));
        }
        let numeric = (up - down) / (2.0 * config.step);
        let exact = grads[pi].data()[off];
        let rel = (exact - numeric).abs() / exact.abs().max(numeric.abs()).max(1e-8);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

fn locate(params: &[Tensor], mut flat: usize) -> (usize, usize) {
    for (i, p) in params.iter().enumerate() {
        if flat < p.numel() {
            return (i, flat);
        }
        flat -= p.numel();
    }
    unreachable!("coordinate out of range");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Graph;

    #[test]
    fn quadratic_matches_analytic_slope() {
        // f(w) = w^2 at w = 3: analytic 6, numeric 6 within 1e-9 relative.
        let params = vec![Tensor::scalar(3.0)];
        let err = gradcheck(
            &params,
            |p| Ok(p[0].item() * p[0].item()),
            |p| Ok(vec![Tensor::scalar(2.0 * p[0].item())]),
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(err < 1e-9, "max rel err {err}");
    }

    #[test]
    fn masked_softmax_cross_entropy_toy() {
        // Softmax over partially masked scores feeding a BCE head.
        let run = |p: &[Tensor], want_grad: bool| -> Result<(f64, Vec<Tensor>)> {
            let mut g = Graph::new();
            let x = g.leaf(p[0].clone());
            let mask = [true, true, false, true, true, true, true, false];
            let sm = g.masked_softmax(x, &mask)?;
            let labels = [1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
            let loss = g.masked_bce_sum(sm, &labels, &mask)?;
            let val = g.value(loss).item();
            let grads = if want_grad {
                g.backward(loss)?;
                vec![g.grad_tensor(x)]
            } else {
                Vec::new()
            };
            Ok((val, grads))
        };
        let params = vec![Tensor::new(
            vec![2, 4],
            vec![0.3, -1.2, 9.0, 0.4, 2.0, -0.5, 0.7, -9.0],
        )
        .unwrap()];
        let err = gradcheck(
            &params,
            |p| run(p, false).map(|(v, _)| v),
            |p| run(p, true).map(|(_, g)| g),
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(err <= 1e-4, "max rel err {err}");
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let params = vec![Tensor::scalar(0.0)];
        let res = gradcheck(
            &params,
            |_| Ok(f64::INFINITY),
            |_| Ok(vec![Tensor::scalar(0.0)]),
            &GradCheckConfig::default(),
        );
        assert!(res.is_err());
    }
}
