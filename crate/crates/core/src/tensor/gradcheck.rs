//! Finite-difference verification of analytic gradients.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, OpKind, Var};
use super::value::{GradStore, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Tensors larger than this are probed on a random sample of
    /// `sample_size` elements instead of exhaustively.
    pub exhaustive_limit: usize,
    pub sample_size: usize,
    pub seed: u64,
    /// Negative control: corrupt this op's backward rule.
    pub fault: Option<OpKind>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            exhaustive_limit: 400,
            sample_size: 100,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TensorCheck {
    pub name: String,
    pub probed: usize,
    pub max_rel_error: f64,
    /// Flat index of the worst element.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }

    /// Names of tensors whose error exceeds the tolerance.
    pub fn failures(&self) -> Vec<&str> {
        self.tensors
            .iter()
            .filter(|t| t.max_rel_error >= self.tolerance)
            .map(|t| t.name.as_str())
            .collect()
    }
}

/// Relative error with a small absolute floor, so that gradients which are
/// both essentially zero compare equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

/// Compares the analytic gradient of the scalar built by `build` against
/// central differences for every parameter in `params`.
///
/// `build` must be deterministic; it is called once for the analytic pass
/// and twice per probed element.
pub fn grad_check<F>(
    params: &mut ParamStore,
    build: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let mut grads = GradStore::zeros_like(params);
    {
        let mut graph = Graph::new(params);
        if let Some(kind) = cfg.fault {
            graph.inject_fault(kind);
        }
        let loss = build(&mut graph)?;
        graph.backward(loss, &mut grads)?;
    }

    let eval = |params: &ParamStore| -> Result<f64> {
        let mut graph = Graph::new(params);
        let loss = build(&mut graph)?;
        let v = graph.value(loss).data()[0];
        if !v.is_finite() {
            return Err(Error::Numeric {
                op: "grad_check",
                msg: "non-finite loss while probing".into(),
            });
        }
        Ok(v)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tensors = Vec::with_capacity(params.len());
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let numel = params.get(id).numel();
        let probes: Vec<usize> = if numel <= cfg.exhaustive_limit {
            (0..numel).collect()
        } else {
            let mut s = index::sample(&mut rng, numel, cfg.sample_size.min(numel)).into_vec();
            s.sort_unstable();
            s
        };
        let mut check = TensorCheck {
            name: params.name(id).to_string(),
            probed: probes.len(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in probes {
            let original = params.get(id).data()[i];
            params.get_mut(id).data_mut()[i] = original + cfg.step;
            let plus = eval(params);
            params.get_mut(id).data_mut()[i] = original - cfg.step;
            let minus = eval(params);
            params.get_mut(id).data_mut()[i] = original;
            let numeric = (plus? - minus?) / (2.0 * cfg.step);
            let analytic = grads.get(id).data()[i];
            let err = relative_error(analytic, numeric);
            if err >= check.max_rel_error {
                check.max_rel_error = err;
                check.worst_index = i;
                check.analytic = analytic;
                check.numeric = numeric;
            }
        }
        tensors.push(check);
    }
    Ok(GradCheckReport {
        tensors,
        tolerance: cfg.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn linear(params: &mut ParamStore) {
        params
            .add("w", Tensor::vector(vec![0.3, -1.2, 2.0]))
            .unwrap();
    }

    #[test]
    fn linear_function_is_exact() {
        let mut p = ParamStore::new();
        linear(&mut p);
        let x = Tensor::vector(vec![1.5, 2.0, -0.5]);
        for step in [1e-2, 1e-5, 1e-7] {
            let cfg = GradCheckConfig {
                step,
                ..Default::default()
            };
            let report = grad_check(
                &mut p,
                |g| {
                    let w = g.param_named("w")?;
                    let xs = g.constant(x.clone())?;
                    let prod = g.mul(w, xs)?;
                    g.sum(prod, 0)
                },
                &cfg,
            )
            .unwrap();
            assert!(report.max_rel_error() < 1e-6, "{report:?}");
        }
    }

    #[test]
    fn softmax_cross_entropy_passes() {
        let mut p = ParamStore::new();
        p.add("logits", Tensor::vector(vec![0.2, -0.7, 1.1, 0.05]))
            .unwrap();
        let report = grad_check(
            &mut p,
            |g| {
                let l = g.param_named("logits")?;
                let s = g.softmax(l)?;
                g.cross_entropy(s, 2)
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn corrupted_backward_is_caught() {
        let mut p = ParamStore::new();
        p.add("logits", Tensor::vector(vec![0.2, -0.7, 1.1]))
            .unwrap();
        let cfg = GradCheckConfig {
            fault: Some(OpKind::Softmax),
            ..Default::default()
        };
        let report = grad_check(
            &mut p,
            |g| {
                let l = g.param_named("logits")?;
                let s = g.softmax(l)?;
                g.cross_entropy(s, 0)
            },
            &cfg,
        )
        .unwrap();
        assert!(!report.passed());
        assert_eq!(report.failures(), vec!["logits"]);
    }
}
