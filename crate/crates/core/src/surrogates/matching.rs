use crate::configspace::{train, Configuration, Trajectory};
use crate::error::{Error, Result};
use crate::measures::WeightedDataset;
use crate::models::{mean_grad, mean_grad_unchecked};
use crate::numkit::{norm2, sub, RealVec, RngStream};

use super::SyntheticSet;

/// Gradient-matching objective with the target-side mean gradients cached.
#[derive(Debug, Clone)]
pub struct GmContext {
    pub cfg: Configuration,
    pub anchors: Vec<RealVec>,
    target_grads: Vec<Vec<f64>>,
}

impl GmContext {
    pub fn new(target: &WeightedDataset, cfg: &Configuration, anchors: Vec<RealVec>) -> Result<Self> {
        if anchors.is_empty() {
            return Err(crate::error::invalid("gradient matching needs at least one anchor"));
        }
        let target_grads = anchors
            .iter()
            .map(|a| mean_grad(&cfg.model, a, target))
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            anchors,
            target_grads,
        })
    }

    /// Anchors at `n_anchors` evenly spaced checkpoints of a fresh
    /// `steps`-step trajectory on `target`.
    pub fn sample(
        target: &WeightedDataset,
        cfg: &Configuration,
        n_anchors: usize,
        steps: usize,
        rng: &RngStream,
    ) -> Result<Self> {
        let anchors = anchor_checkpoints(target, cfg, n_anchors, steps, rng)?;
        Self::new(target, cfg, anchors)
    }

    pub fn value(&self, source: &WeightedDataset) -> Result<f64> {
        self.cfg.model.check_dataset(source)?;
        let total: f64 = self
            .anchors
            .iter()
            .zip(&self.target_grads)
            .map(|(a, tg)| norm2(&sub(&mean_grad_unchecked(&self.cfg.model, a, source), tg)))
            .sum();
        Ok(total / self.anchors.len() as f64)
    }
}

pub(crate) fn anchor_checkpoints(
    target: &WeightedDataset,
    cfg: &Configuration,
    n_anchors: usize,
    steps: usize,
    rng: &RngStream,
) -> Result<Vec<RealVec>> {
    if n_anchors == 0 {
        return Err(crate::error::invalid("need at least one anchor"));
    }
    let theta0 = cfg.init_params(&rng.fork("anchor-init"));
    let traj = train(cfg, target, &theta0, steps, &rng.fork("anchor-schedule"))?;
    Ok((0..n_anchors)
        .map(|i| {
            let t = if n_anchors == 1 { 0 } else { (i * steps + (n_anchors - 1) / 2) / (n_anchors - 1) };
            traj.params[t.min(steps)].clone()
        })
        .collect())
}

/// Mean over anchors of `|E_{mu(xi)} g - E_target g|`.
pub fn gm_objective(xi: &SyntheticSet, target: &WeightedDataset, cfg: &Configuration, anchors: &[RealVec]) -> Result<f64> {
    GmContext::new(target, cfg, anchors.to_vec())?.value(&xi.to_measure())
}

/// Trajectory-matching objective with the target trajectory cached.
#[derive(Debug, Clone)]
pub struct TmContext {
    pub cfg: Configuration,
    pub theta0: RealVec,
    pub weights: Vec<f64>,
    schedule: RngStream,
    target_traj: Trajectory,
}

impl TmContext {
    pub fn new(
        target: &WeightedDataset,
        cfg: &Configuration,
        theta0: RealVec,
        unroll: usize,
        weights: Vec<f64>,
        schedule: RngStream,
    ) -> Result<Self> {
        if unroll == 0 {
            return Err(crate::error::invalid("trajectory matching needs at least one step"));
        }
        if weights.len() != unroll + 1 || weights.iter().any(|w| !(*w > 0.0)) {
            return Err(crate::error::invalid(format!(
                "need {} positive path weights, got {:?}",
                unroll + 1,
                weights
            )));
        }
        let target_traj = train(cfg, target, &theta0, unroll, &schedule)?;
        Ok(Self {
            cfg: cfg.clone(),
            theta0,
            weights,
            schedule,
            target_traj,
        })
    }

    /// Fresh shared initialisation and schedule from `rng`, unit weights.
    pub fn sample(target: &WeightedDataset, cfg: &Configuration, unroll: usize, rng: &RngStream) -> Result<Self> {
        let theta0 = cfg.init_params(&rng.fork("tm-init"));
        Self::new(target, cfg, theta0, unroll, vec![1.0; unroll + 1], rng.fork("tm-schedule"))
    }

    pub fn unroll(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn target_trajectory(&self) -> &Trajectory {
        &self.target_traj
    }

    pub fn source_trajectory(&self, source: &WeightedDataset) -> Result<Trajectory> {
        train(&self.cfg, source, &self.theta0, self.unroll(), &self.schedule)
    }

    pub fn value(&self, source: &WeightedDataset) -> Result<f64> {
        let traj = self.source_trajectory(source)?;
        if traj.params.len() != self.target_traj.params.len() {
            return Err(Error::DimMismatch("trajectory lengths differ".into()));
        }
        Ok(self
            .weights
            .iter()
            .zip(traj.params.iter().zip(&self.target_traj.params))
            .map(|(w, (s, t))| w * norm2(&sub(s, t)))
            .sum())
    }
}

/// `sum_t w_t |theta_t^(s) - theta_t^(target)|` over `unroll` shared steps.
pub fn tm_objective(
    xi: &SyntheticSet,
    target: &WeightedDataset,
    cfg: &Configuration,
    theta0: &RealVec,
    unroll: usize,
    weights: &[f64],
    schedule: &RngStream,
) -> Result<f64> {
    TmContext::new(target, cfg, theta0.clone(), unroll, weights.to_vec(), schedule.clone())?.value(&xi.to_measure())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::{step, Augmentation, OptimizerState, Preconditioner};
    use crate::measures::{make_gaussian_mixture, LabeledPoint};
    use crate::models::{grad, ModelSpec};

    fn setup() -> (WeightedDataset, Configuration) {
        let ds = make_gaussian_mixture(2, 2, 6, 2.0, 1.0, &RngStream::new(1)).unwrap();
        let spec = ModelSpec::softmax_linear(2, 2).unwrap();
        let cfg = Configuration::new("src", spec, Preconditioner::Identity, 0.2, Augmentation::None, 64).unwrap();
        (ds, cfg)
    }

    fn as_synthetic(ds: &WeightedDataset) -> SyntheticSet {
        let mut idx: Vec<usize> = (0..ds.len()).collect();
        idx.sort_by_key(|&i| ds.points()[i].label);
        SyntheticSet::new(
            idx.iter().map(|&i| ds.points()[i].features.clone()).collect(),
            idx.iter().map(|&i| ds.points()[i].label).collect(),
            ds.num_classes(),
        )
        .unwrap()
    }

    #[test]
    fn gm_zero_on_identical_measure() {
        let (ds, cfg) = setup();
        let ctx = GmContext::sample(&ds, &cfg, 5, 20, &RngStream::new(2)).unwrap();
        assert_eq!(ctx.anchors.len(), 5);
        let xi = as_synthetic(&ds);
        // same atoms in a different order: equal up to summation order
        assert!(ctx.value(&xi.to_measure()).unwrap() < 1e-14);
        assert_eq!(ctx.value(&ds).unwrap(), 0.0);
    }

    #[test]
    fn gm_singletons_direct() {
        let (_, cfg) = setup();
        let zs = LabeledPoint::new(vec![0.5, -1.0], 1);
        let zt = LabeledPoint::new(vec![2.0, 0.3], 1);
        let s = WeightedDataset::uniform(vec![zs.clone()], 2).unwrap();
        let t = WeightedDataset::uniform(vec![zt.clone()], 2).unwrap();
        let theta = cfg.init_params(&RngStream::new(3));
        let ctx = GmContext::new(&t, &cfg, vec![theta.clone()]).unwrap();
        let direct = norm2(&sub(&grad(&cfg.model, &theta, &zs).unwrap(), &grad(&cfg.model, &theta, &zt).unwrap()));
        assert!((ctx.value(&s).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn gm_anchor_order_irrelevant() {
        let (ds, cfg) = setup();
        let ctx = GmContext::sample(&ds, &cfg, 4, 12, &RngStream::new(2)).unwrap();
        let mut rev = ctx.anchors.clone();
        rev.reverse();
        let xi = SyntheticSet::new(
            vec![vec![1.0, 0.0].into(), vec![0.0, 1.0].into()],
            vec![0, 1],
            2,
        )
        .unwrap();
        let a = gm_objective(&xi, &ds, &cfg, &ctx.anchors).unwrap();
        let b = gm_objective(&xi, &ds, &cfg, &rev).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn tm_zero_on_identical_measure() {
        let (ds, cfg) = setup();
        let ctx = TmContext::sample(&ds, &cfg, 5, &RngStream::new(4)).unwrap();
        assert_eq!(ctx.value(&ds).unwrap(), 0.0);
    }

    #[test]
    fn tm_one_step_algebra() {
        let (ds, cfg) = setup();
        let xi = SyntheticSet::new(vec![vec![1.0, 0.5].into(), vec![-0.2, 2.0].into()], vec![0, 1], 2).unwrap();
        let theta0 = cfg.init_params(&RngStream::new(5));
        let sched = RngStream::new(6);
        let w = [1.0, 0.7];
        let got = tm_objective(&xi, &ds, &cfg, &theta0, 1, &w, &sched).unwrap();
        let mut r = RngStream::new(0);
        let s1 = step(&cfg, &theta0, &xi.to_measure(), &mut OptimizerState::default(), &mut r).unwrap();
        let t1 = step(&cfg, &theta0, &ds, &mut OptimizerState::default(), &mut r).unwrap();
        assert!((got - 0.7 * norm2(&sub(&s1, &t1))).abs() < 1e-14);
        let gs = mean_grad(&cfg.model, &theta0, &xi.to_measure()).unwrap();
        let gt = mean_grad(&cfg.model, &theta0, &ds).unwrap();
        assert!((got - 0.7 * cfg.step_size * norm2(&sub(&gs, &gt))).abs() < 1e-12);
        let doubled = tm_objective(&xi, &ds, &cfg, &theta0, 1, &[2.0, 1.4], &sched).unwrap();
        assert!((doubled - 2.0 * got).abs() < 1e-14);
    }

    #[test]
    fn tm_rejects_bad_weights() {
        let (ds, cfg) = setup();
        let th = cfg.init_params(&RngStream::new(5));
        assert!(TmContext::new(&ds, &cfg, th.clone(), 2, vec![1.0, 1.0], RngStream::new(0)).is_err());
        assert!(TmContext::new(&ds, &cfg, th, 1, vec![1.0, 0.0], RngStream::new(0)).is_err());
    }
}
