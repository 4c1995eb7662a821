//! One-dimensional Gaussian mixture fitted by expectation maximization, and
//! FG seed selection from the fitted components.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, SeedMask};

pub const VARIANCE_FLOOR: f64 = 1e-6;
/// Effective responsibility mass below which a component counts as empty.
const EMPTY_COMPONENT_MASS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

impl GaussianComponent {
    #[inline]
    pub fn pdf(&self, x: f64) -> f64 {
        let d = x - self.mean;
        (-d * d / (2.0 * self.variance)).exp() / (2.0 * std::f64::consts::PI * self.variance).sqrt()
    }

    #[inline]
    pub fn peak_density(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.variance).sqrt()
    }

    #[inline]
    fn log_pdf(&self, x: f64) -> f64 {
        let d = x - self.mean;
        -d * d / (2.0 * self.variance) - 0.5 * (2.0 * std::f64::consts::PI * self.variance).ln()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub components: Vec<GaussianComponent>,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        let mut logs = vec![0.0; self.k()];
        samples
            .iter()
            .map(|&x| {
                for (l, c) in logs.iter_mut().zip(&self.components) {
                    *l = c.weight.ln() + c.log_pdf(x);
                }
                log_sum_exp(&logs)
            })
            .sum()
    }
}

#[inline]
fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for GmmParams {
    fn default() -> Self {
        GmmParams {
            k: 3,
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub model: GmmModel,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood of the initial model followed by one entry per iteration.
    pub log_likelihoods: Vec<f64>,
    /// Iterations (1-based) in which an empty component was re-seeded.
    pub reseeded_at: Vec<usize>,
}

impl GmmFit {
    pub fn warning(&self) -> Option<String> {
        (!self.converged).then(|| {
            format!(
                "EM stopped after {} iterations without reaching tolerance",
                self.iterations
            )
        })
    }
}

/// Sample quantile with linear interpolation on sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

pub fn fit_gmm(grid: &ImageGrid, params: &GmmParams) -> Result<GmmFit> {
    fit_gmm_samples(grid.values(), params)
}

/// EM with deterministic initialization: means at the `(2i+1)/(2K)` sample
/// quantiles, uniform weights, variance `global variance / K`.
pub fn fit_gmm_samples(samples: &[f64], params: &GmmParams) -> Result<GmmFit> {
    let k = params.k;
    if k < 2 {
        return Err(Error::param(format!("GMM needs K >= 2, got {k}")));
    }
    if samples.len() < 10 * k {
        return Err(Error::param(format!(
            "GMM with K={k} needs at least {} samples, got {}",
            10 * k,
            samples.len()
        )));
    }
    if !(params.tol > 0.0) {
        return Err(Error::param("GMM tolerance must be > 0"));
    }
    let n = samples.len() as f64;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = samples.iter().sum::<f64>() / n;
    let global_var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let init_var = (global_var / k as f64).max(VARIANCE_FLOOR);

    let mut model = GmmModel {
        components: (0..k)
            .map(|i| GaussianComponent {
                weight: 1.0 / k as f64,
                mean: quantile(&sorted, (2 * i + 1) as f64 / (2 * k) as f64),
                variance: init_var,
            })
            .collect(),
    };

    let mut ll_prev = model.log_likelihood(samples);
    let mut trace = vec![ll_prev];
    let mut reseeded_at = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut best = (ll_prev, model.clone());

    let mut resp = vec![0.0f64; k];
    for it in 1..=params.max_iter {
        iterations = it;
        let mut mass = vec![0.0f64; k];
        let mut first = vec![0.0f64; k];
        let mut second = vec![0.0f64; k];
        for &x in samples {
            for (r, c) in resp.iter_mut().zip(&model.components) {
                *r = c.weight.ln() + c.log_pdf(x);
            }
            let norm = log_sum_exp(&resp);
            for j in 0..k {
                let r = (resp[j] - norm).exp();
                mass[j] += r;
                first[j] += r * x;
                second[j] += r * x * x;
            }
        }

        let mut next = model.clone();
        let mut reseed = false;
        for j in 0..k {
            if mass[j] < EMPTY_COMPONENT_MASS * n {
                reseed = true;
                continue;
            }
            let mu = first[j] / mass[j];
            let var = (second[j] / mass[j] - mu * mu).max(VARIANCE_FLOOR);
            next.components[j] = GaussianComponent {
                weight: mass[j] / n,
                mean: mu,
                variance: var,
            };
        }
        if reseed {
            // re-seed empty components at the worst-explained sample
            let worst = samples
                .iter()
                .copied()
                .min_by(|a, b| {
                    let fa = mixture_log_density(&next, *a);
                    let fb = mixture_log_density(&next, *b);
                    fa.total_cmp(&fb)
                })
                .unwrap_or(mean);
            for j in 0..k {
                if mass[j] < EMPTY_COMPONENT_MASS * n {
                    next.components[j] = GaussianComponent {
                        weight: 1.0 / n,
                        mean: worst,
                        variance: init_var,
                    };
                }
            }
            let total: f64 = next.components.iter().map(|c| c.weight).sum();
            for c in &mut next.components {
                c.weight /= total;
            }
            reseeded_at.push(it);
        }

        model = next;
        let ll = model.log_likelihood(samples);
        trace.push(ll);
        if ll > best.0 {
            best = (ll, model.clone());
        }
        if !reseed && (ll - ll_prev).abs() < params.tol {
            converged = true;
            break;
        }
        ll_prev = ll;
    }

    Ok(GmmFit {
        model: if converged { model } else { best.1 },
        iterations,
        converged,
        log_likelihoods: trace,
        reseeded_at,
    })
}

fn mixture_log_density(model: &GmmModel, x: f64) -> f64 {
    let logs: Vec<f64> = model.components.iter().map(|c| c.weight.ln() + c.log_pdf(x)).collect();
    log_sum_exp(&logs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmSeeding {
    pub mask: SeedMask,
    pub selected: usize,
    /// Median intensity of each component's support set (`None` when empty).
    pub medians: Vec<Option<f64>>,
    /// PDF cut applied to the selected component's density map.
    pub pdf_threshold: f64,
}

/// Fraction of a component's peak density that defines its support set.
pub const SUPPORT_FRACTION: f64 = 0.5;

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    })
}

/// Picks the component whose high-density support has the largest median
/// intensity, then thresholds its density map at `(max + median) / 2`.
pub fn seed_gmm(grid: &ImageGrid, model: &GmmModel) -> Result<GmmSeeding> {
    let values = grid.values();
    let medians: Vec<Option<f64>> = model
        .components
        .iter()
        .map(|c| {
            let cut = SUPPORT_FRACTION * c.peak_density();
            let mut support: Vec<f64> = values.iter().copied().filter(|&v| c.pdf(v) > cut).collect();
            median(&mut support)
        })
        .collect();
    let selected = medians
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|m| (i, m)))
        .fold(None, |acc: Option<(usize, f64)>, (i, m)| match acc {
            Some((_, best)) if m <= best => acc,
            _ => Some((i, m)),
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Seeding("no GMM component has a non-empty support set".into()))?;

    let comp = model.components[selected];
    let density: Vec<f64> = values.iter().map(|&v| comp.pdf(v)).collect();
    let max = density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let med = median(&mut density.clone()).unwrap_or(0.0);
    let pdf_threshold = 0.5 * (max + med);
    let mask = SeedMask::from_fg_predicate(grid.shape().clone(), |i| density[i] >= pdf_threshold);
    Ok(GmmSeeding {
        mask,
        selected,
        medians,
        pdf_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Label, Shape};
    use crate::rng::ShiftRegisterRng;

    fn two_clusters(n_each: usize) -> Vec<f64> {
        let mut rng = ShiftRegisterRng::seed_from(11);
        let mut v = Vec::new();
        for _ in 0..n_each {
            v.push(0.2 + 0.005 * rng.next_gaussian());
            v.push(0.8 + 0.005 * rng.next_gaussian());
        }
        v
    }

    /// Assign each sample to the nearer of two centres, then take moments.
    fn nearest_centre_means(v: &[f64], a: f64, b: f64) -> (f64, f64) {
        let (lo, hi): (Vec<f64>, Vec<f64>) = v.iter().partition(|&&x| (x - a).abs() < (x - b).abs());
        (
            lo.iter().sum::<f64>() / lo.len() as f64,
            hi.iter().sum::<f64>() / hi.len() as f64,
        )
    }

    #[test]
    fn recovers_separable_means() {
        let v = two_clusters(200);
        let fit = fit_gmm_samples(
            &v,
            &GmmParams {
                k: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(fit.converged);
        let mut means: Vec<f64> = fit.model.components.iter().map(|c| c.mean).collect();
        means.sort_by(f64::total_cmp);
        let (oa, ob) = nearest_centre_means(&v, 0.2, 0.8);
        assert!((means[0] - oa).abs() < 1e-3 && (means[1] - ob).abs() < 1e-3);
        assert!((means[0] - 0.2).abs() < 0.02 && (means[1] - 0.8).abs() < 0.02);
    }

    #[test]
    fn recovers_weights_of_known_mixture() {
        let mut rng = ShiftRegisterRng::seed_from(5);
        let v: Vec<f64> = (0..10_000)
            .map(|_| {
                if rng.next_f64() < 0.7 {
                    0.3 + 0.01 * rng.next_gaussian()
                } else {
                    0.7 + 0.01 * rng.next_gaussian()
                }
            })
            .collect();
        let fit = fit_gmm_samples(
            &v,
            &GmmParams {
                k: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let mut comps = fit.model.components.clone();
        comps.sort_by(|a, b| a.mean.total_cmp(&b.mean));
        assert!((comps[0].weight - 0.7).abs() < 0.05);
        assert!((comps[1].weight - 0.3).abs() < 0.05);
        let wsum: f64 = comps.iter().map(|c| c.weight).sum();
        assert!((wsum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_samples_collapse_to_floor() {
        let v = vec![0.0; 50];
        let fit = fit_gmm_samples(
            &v,
            &GmmParams {
                k: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let c = &fit.model.components;
        assert_eq!(c[0].mean, c[1].mean);
        assert!(c.iter().all(|c| c.variance == VARIANCE_FLOOR));
    }

    #[test]
    fn log_likelihood_monotone() {
        let mut rng = ShiftRegisterRng::seed_from(99);
        let v: Vec<f64> = (0..3000)
            .map(|i| match i % 3 {
                0 => 0.15 + 0.05 * rng.next_gaussian(),
                1 => 0.5 + 0.08 * rng.next_gaussian(),
                _ => 0.85 + 0.03 * rng.next_gaussian(),
            })
            .collect();
        let fit = fit_gmm_samples(&v, &GmmParams::default()).unwrap();
        assert!(fit.reseeded_at.is_empty());
        for w in fit.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn parameter_errors() {
        assert!(fit_gmm_samples(
            &[0.0; 100],
            &GmmParams {
                k: 1,
                ..Default::default()
            }
        )
        .is_err());
        assert!(fit_gmm_samples(&[0.0; 29], &GmmParams::default()).is_err());
    }

    #[test]
    fn selects_bright_component() {
        let v = two_clusters(50);
        let shape = Shape::new(&[10, 10]).unwrap();
        let grid = ImageGrid::from_normalized(shape, v.iter().map(|x| x.clamp(0.0, 1.0)).collect()).unwrap();
        let fit = fit_gmm(
            &grid,
            &GmmParams {
                k: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let s = seed_gmm(&grid, &fit.model).unwrap();
        assert!((fit.model.components[s.selected].mean - 0.8).abs() < 0.02);
        // oracle: medians of each support, evaluated directly
        for (c, m) in fit.model.components.iter().zip(&s.medians) {
            let m = m.unwrap();
            assert!((m - c.mean).abs() < 0.02);
        }
        for i in s.mask.indices(Label::Fg) {
            assert!(grid.values()[i] > 0.5);
        }
        assert!(s.mask.count(Label::Fg) > 0);
    }

    #[test]
    fn fg_is_interval_around_mean() {
        let v: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let grid = ImageGrid::from_normalized(Shape::new(&[10, 10]).unwrap(), v).unwrap();
        let model = GmmModel {
            components: vec![
                GaussianComponent {
                    weight: 0.5,
                    mean: 0.2,
                    variance: 0.01,
                },
                GaussianComponent {
                    weight: 0.5,
                    mean: 0.7,
                    variance: 0.004,
                },
            ],
        };
        let s = seed_gmm(&grid, &model).unwrap();
        assert_eq!(s.selected, 1);
        let fg: Vec<f64> = s.mask.indices(Label::Fg).map(|i| grid.values()[i]).collect();
        let (lo, hi) = (fg[0], fg[fg.len() - 1]);
        // contiguous run of samples, symmetric about the mean up to grid spacing
        assert_eq!(fg.len(), ((hi - lo) * 99.0).round() as usize + 1);
        assert!(((lo + hi) / 2.0 - 0.7).abs() <= 1.0 / 99.0);
    }
}
