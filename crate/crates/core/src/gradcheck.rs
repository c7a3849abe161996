//! Central finite differences and the gradient-check suites that compare them
//! against the tape's analytic gradients.

use rand::Rng;

use crate::autodiff::{Pool, Tape, Var};
use crate::error::Result;
use crate::gd_layer;
use crate::network::{init_network, GdNetConfig};
use crate::parallel::Exec;
use crate::seed;
use crate::tensor::{Real, Tensor};

/// Step, error floor and pass threshold for one precision.
///
/// The relative error of an analytic/numeric pair is
/// `|a − n| / max(|a|, |n|, floor)`; the floor keeps near-zero gradients from
/// turning rounding noise into huge ratios.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub step: f64,
    pub floor: f64,
    pub max_rel: f64,
}

pub fn tolerance<T: Real>() -> Tolerance {
    if T::NAME == "f64" {
        Tolerance {
            step: 1e-6,
            floor: 1e-3,
            max_rel: 1e-6,
        }
    } else {
        Tolerance {
            step: 1e-3,
            floor: 1.0,
            max_rel: 1e-3,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every element `i`.
pub fn finite_diff_grad<T: Real>(
    mut f: impl FnMut(&Tensor<T>) -> T,
    at: &Tensor<T>,
    h: T,
) -> Tensor<T> {
    let idx: Vec<usize> = (0..at.numel()).collect();
    let g = finite_diff_at(&mut f, at, h, &idx);
    Tensor::new(at.shape(), g).expect("same shape")
}

/// Central differences at selected element indices only.
pub fn finite_diff_at<T: Real>(
    mut f: impl FnMut(&Tensor<T>) -> T,
    at: &Tensor<T>,
    h: T,
    indices: &[usize],
) -> Vec<T> {
    let mut x = at.clone();
    let two_h = h + h;
    indices
        .iter()
        .map(|&i| {
            let orig = x.data()[i];
            x.data_mut()[i] = orig + h;
            let up = f(&x);
            x.data_mut()[i] = orig - h;
            let down = f(&x);
            x.data_mut()[i] = orig;
            (up - down) / two_h
        })
        .collect()
}

/// Outcome of one suite entry.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub precision: &'static str,
    pub instances: usize,
    pub coordinates: usize,
    /// Stencils excluded for crossing a non-smooth boundary.
    pub straddled: usize,
    pub max_rel_error: f64,
    pub threshold: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.coordinates > 0 && self.max_rel_error < self.threshold
    }

    fn empty(name: &str, precision: &'static str, instances: usize, threshold: f64) -> Self {
        Self {
            name: name.into(),
            precision,
            instances,
            coordinates: 0,
            straddled: 0,
            max_rel_error: 0.0,
            threshold,
        }
    }

    fn absorb(&mut self, g: GraphCheck) {
        self.max_rel_error = self.max_rel_error.max(g.max_rel_error);
        self.coordinates += g.coordinates;
        self.straddled += g.straddled;
    }
}

type Builder<'a, T> = dyn Fn(&mut Tape<T>, &[Var]) -> Result<Var> + 'a;

/// Agreement of analytic and numeric gradients over one graph.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GraphCheck {
    pub max_rel_error: f64,
    pub coordinates: usize,
    /// Coordinates whose ±step stencil crossed a ReLU, max-pool or clamp
    /// boundary. The central difference is meaningless there, so they are
    /// excluded and, when probing, replaced by a fresh draw.
    pub straddled: usize,
}

/// Redraws allowed per probed coordinate before it is given up.
const REDRAWS: usize = 20;

/// Compare analytic and numeric gradients of a scalar-valued graph with
/// respect to each input. `probe` limits the number of coordinates checked
/// per input (all when `None`).
pub fn check_graph<T: Real>(
    inputs: &[Tensor<T>],
    build: &Builder<'_, T>,
    probe: Option<(usize, &mut seed::Rng)>,
) -> Result<GraphCheck> {
    let tol = tolerance::<T>();
    let h = T::from_f64_lossy(tol.step);
    let mut tape = Tape::with_exec(Exec::Sequential);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let base = tape.branch_signature();
    let grads = tape.backward(loss)?;

    let eval = |replaced: usize, value: &Tensor<T>| -> (T, u64) {
        let mut tape = Tape::with_exec(Exec::Sequential);
        let vars: Vec<Var> = inputs
            .iter()
            .enumerate()
            .map(|(i, t)| tape.param(if i == replaced { value.clone() } else { t.clone() }))
            .collect();
        let loss = build(&mut tape, &vars).expect("graph rebuilt with the same shapes");
        (tape.value(loss).data()[0], tape.branch_signature())
    };
    // central difference at one coordinate, or None if the stencil leaves
    // the smooth piece containing the base point
    let central = |i: usize, x: &mut Tensor<T>, j: usize| -> Option<T> {
        let orig = x.data()[j];
        x.data_mut()[j] = orig + h;
        let (up, s_up) = eval(i, x);
        x.data_mut()[j] = orig - h;
        let (down, s_down) = eval(i, x);
        x.data_mut()[j] = orig;
        (s_up == base && s_down == base).then(|| (up - down) / (h + h))
    };

    let mut probe = probe;
    let mut out = GraphCheck::default();
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.tensor(&tape, vars[i]);
        let mut x = input.clone();
        let compare = |j: usize, n: T, out: &mut GraphCheck| {
            let a = analytic.data()[j].to_f64_lossy();
            out.max_rel_error = out.max_rel_error.max(relative_error(a, n.to_f64_lossy(), tol.floor));
            out.coordinates += 1;
        };
        match probe.as_mut() {
            Some((k, rng)) if *k < input.numel() => {
                for _ in 0..*k {
                    for _ in 0..REDRAWS {
                        let j = rng.random_range(0..input.numel());
                        match central(i, &mut x, j) {
                            Some(n) => {
                                compare(j, n, &mut out);
                                break;
                            }
                            None => out.straddled += 1,
                        }
                    }
                }
            }
            _ => {
                for j in 0..input.numel() {
                    match central(i, &mut x, j) {
                        Some(n) => compare(j, n, &mut out),
                        None => out.straddled += 1,
                    }
                }
            }
        }
    }
    Ok(out)
}

fn uniform<T: Real>(shape: &[usize], lo: f64, hi: f64, rng: &mut seed::Rng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.random_range(lo..hi)))
}

/// Values bounded away from zero so ReLU kinks sit outside the step.
fn off_zero<T: Real>(shape: &[usize], rng: &mut seed::Rng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.05..1.0);
        T::from_f64_lossy(if rng.random_bool(0.5) { m } else { -m })
    })
}

/// Each channel plane is a shuffled ladder with 0.05 spacing, so the maximum
/// is unique and stays put under a small step.
fn separated<T: Real>(shape: &[usize], rng: &mut seed::Rng) -> Tensor<T> {
    use rand::seq::SliceRandom;
    let plane = shape[2] * shape[3];
    let mut data = Vec::new();
    for _ in 0..shape[0] * shape[1] {
        let mut ladder: Vec<f64> = (0..plane).map(|i| i as f64 * 0.05 - 0.4).collect();
        ladder.shuffle(rng);
        data.extend(ladder.into_iter().map(T::from_f64_lossy));
    }
    Tensor::new(shape, data).expect("shape")
}

/// Reduce any var to a scalar through a fixed random projection of norm ~1.
fn project<T: Real>(tape: &mut Tape<T>, v: Var, rng_seed: u64) -> Result<Var> {
    let shape = tape.value(v).shape().to_vec();
    let n = tape.value(v).numel() as f64;
    let mut rng = seed::rng(rng_seed);
    let weights: Tensor<T> = uniform(&shape, -1.0 / n.sqrt(), 1.0 / n.sqrt(), &mut rng);
    let w = tape.constant(weights);
    let prod = tape.mul(v, w)?;
    Ok(tape.sum(prod))
}

fn random_labels<T: Real>(n: usize, rng: &mut seed::Rng) -> Vec<T> {
    (0..n)
        .map(|_| if rng.random_bool(0.5) { T::one() } else { T::zero() })
        .collect()
}

/// Gradient checks for every differentiable primitive, one entry per op.
pub fn primitive_suite<T: Real>(instances: usize, base_seed: u64) -> Result<Vec<CheckResult>> {
    type Case<T> = (&'static str, fn(&mut seed::Rng, u64) -> Result<GraphCheck>, std::marker::PhantomData<T>);
    let cases: Vec<Case<T>> = vec![
        ("conv2d_dilated", conv_case::<T>, Default::default()),
        ("relu", relu_case::<T>, Default::default()),
        ("sigmoid", sigmoid_case::<T>, Default::default()),
        ("pool_global_avg", |r, s| pool_case::<T>(r, s, Pool::Avg), Default::default()),
        ("pool_global_max", |r, s| pool_case::<T>(r, s, Pool::Max), Default::default()),
        ("dense", dense_case::<T>, Default::default()),
        ("concat_channels", concat_case::<T>, Default::default()),
        ("scale_by_scalar", scale_case::<T>, Default::default()),
        ("one_minus", one_minus_case::<T>, Default::default()),
        ("mul", mul_case::<T>, Default::default()),
        ("dropout", dropout_case::<T>, Default::default()),
        ("bce_loss", bce_case::<T>, Default::default()),
        ("gd_layer", gd_layer_case::<T>, Default::default()),
    ];
    let tol = tolerance::<T>();
    cases
        .into_iter()
        .enumerate()
        .map(|(ci, (name, case, _))| {
            let mut r = CheckResult::empty(name, T::NAME, instances, tol.max_rel);
            for inst in 0..instances {
                let s = seed::derive(base_seed, &[ci as u64, inst as u64]);
                r.absorb(case(&mut seed::rng(s), s)?);
            }
            Ok(r)
        })
        .collect()
}

fn conv_case<T: Real>(rng: &mut seed::Rng, s: u64) -> Result<GraphCheck> {
    let (n, c, o) = (rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(1..=3));
    let (h, w) = (rng.random_range(1..=6), rng.random_range(1..=6));
    let r = rng.random_range(1..=2);
    let inputs = [uniform::<T>(&[n, c, h, w], -1.0, 1.0, rng), uniform::<T>(&[o, c, 3, 3], -1.0, 1.0, rng)];
    check_graph(
        &inputs,
        &move |t, v| {
            let y = t.conv2d(v[0], v[1], r)?;
            project(t, y, s)
        },
        None,
    )
}

fn relu_case<T: Real>(rng: &mut seed::Rng, s: u64) -> Result<GraphCheck> {
    let x = off_zero::<T>(&[2, 3, 2, 2], rng);
    check_graph(&[x], &move |t, v| {
        let y = t.relu(v[0]);
        project(t, y, s)
    }, None)
}

fn sigmoid_case<T: Real>(rng: &mut seed::Rng, s: u64) -> Result<GraphCheck> {
    let x = uniform::<T>(&[2, 5], -4.0, 4.0, rng);
    check_graph(&[x], &move |t, v| {
        let y = t.sigmoid(v[0]);
        project(t, y, s)
    }, None)
}

fn pool_case<T: Real>(rng: &mut seed::Rng, s: u64, mode: Pool) -> Result<GraphCheck> {
    let shape = [rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=4)];
    let x = match mode {
        Pool::Avg => uniform::<T>(&shape, -1.0, 1.0, rng),
        Pool::Max => separated::<T>(&shape, rng),
    };
    check_graph(&[x], &move |t, v| {
        let y = t.pool_global(v[0], mode)?;
        project(t, y, s)
    }, None)
}

fn dense_case<T: Real>(rng: &mut seed::Rng, s: u64) -> Result<GraphCheck> {
    let (n, f, g) = (rng.random_range(1..=3), rng.random_range(1..=5), rng.random_range(1..=4));
    let inputs = [
        uniform::<T>(&[n, f], -1.0, 1.0, rng),
        uniform::<T>(&[f, g], -1.0, 1.0, rng),
        uniform::<T>(&[g], -1.0, 1.0, rng),
    ];
    check_graph(&inputs, &move |t, v| {
        let y = t.dense(v[0], v[1], v[2])?;
        project(t, y, s)
    }, None)
}

fn concat_case<T: Real>(rng: &mut seed::Rng, s: u64) -> Result<GraphCheck> {
    let (n, h, w) = (rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(1..=3));
    let inputs = [
        uniform::<T>(&[n, rng.random_range(1..=3), h, w], -1.0, 1.0, rng),
        uniform::<T>(&[n, rng.random_range(1..=3), h, w], -1.0, 1.0, rng),
    ];
    check_graph(&inputs, &move |t, v| {
        let y = t.concat_channels(v[0], v[1])?;
        project(t, y, s)
    }, None)
}

fn scale_case<T: Real>(rng: &mut seed::Rng, s: u64) -> Result<GraphCheck> {
    let n = rng.random_range(1..=3);
    let inputs = [uniform::<T>(&[n, 2, 3, 3], -1.0, 1.0, rng), uniform::<T>(&[n, 1], 0.0, 1.0, rng)];
    check_graph(&inputs, &move |t, v| {
        let y = t.scale_by_scalar(v[0], v[1])?;
        project(t, y, s)
    }, None)
}

fn one_minus_case<T: Real>(rng: &mut seed::Rng, s: u64) -> Result<GraphCheck> {
    let x = uniform::<T>(&[3, 1], 0.0, 1.0, rng);
    check_graph(&[x], &move |t, v| {
        let y = t.one_minus(v[0]);
        project(t, y, s)
    }, None)
}

fn mul_case<T: Real>(rng: &mut seed::Rng, _s: u64) -> Result<GraphCheck> {
    let inputs = [uniform::<T>(&[2, 4], -1.0, 1.0, rng), uniform::<T>(&[2, 4], -1.0, 1.0, rng)];
    check_graph(&inputs, &|t, v| {
        let y = t.mul(v[0], v[1])?;
        Ok(t.sum(y))
    }, None)
}

fn dropout_case<T: Real>(rng: &mut seed::Rng, s: u64) -> Result<GraphCheck> {
    let x = uniform::<T>(&[2, 3, 3, 3], -1.0, 1.0, rng);
    let rate = rng.random_range(0.1..0.6);
    check_graph(&[x], &move |t, v| {
        let y = t.dropout(v[0], rate, true, s)?;
        project(t, y, s ^ 1)
    }, None)
}

fn bce_case<T: Real>(rng: &mut seed::Rng, _s: u64) -> Result<GraphCheck> {
    let n = rng.random_range(1..=5);
    let p = uniform::<T>(&[n, 1], 0.05, 0.95, rng);
    let labels = random_labels::<T>(n, rng);
    check_graph(&[p], &move |t, v| t.bce_loss(v[0], &labels), None)
}

fn gd_layer_case<T: Real>(rng: &mut seed::Rng, _s: u64) -> Result<GraphCheck> {
    let (n, c, sw, hw) = (2, rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(4..=6));
    let inputs = [
        uniform::<T>(&[n, c, hw, hw], -1.0, 1.0, rng),
        uniform::<T>(&[sw, c, 3, 3], -1.0, 1.0, rng),
        uniform::<T>(&[sw, c, 3, 3], -1.0, 1.0, rng),
        uniform::<T>(&[1, c, 3, 3], -1.0, 1.0, rng),
        uniform::<T>(&[1, 1], -1.0, 1.0, rng),
        uniform::<T>(&[1], -1.0, 1.0, rng),
        uniform::<T>(&[2 * sw, 1], -1.0, 1.0, rng),
        uniform::<T>(&[1], -0.5, 0.5, rng),
    ];
    let labels = random_labels::<T>(n, rng);
    check_graph(&inputs, &move |t, v| {
        let layer = gd_layer::GdLayerVars {
            k1: v[1],
            k2: v[2],
            subnet: gd_layer::SubnetVars {
                attn_kernel: v[3],
                neuron_weight: v[4],
                neuron_bias: v[5],
            },
        };
        let out = gd_layer::gd_forward(t, v[0], &layer)?;
        let pooled = t.pool_global(out.features, Pool::Avg)?;
        let logit = t.dense(pooled, v[6], v[7])?;
        let p = t.sigmoid(logit);
        t.bce_loss(p, &labels)
    }, None)
}

/// End-to-end check of the full network on a 2-sample batch with dropout
/// active. `coords` random coordinates of every parameter tensor are probed
/// per instance.
pub fn network_check<T: Real>(
    config: &GdNetConfig,
    instances: usize,
    coords: usize,
    base_seed: u64,
) -> Result<CheckResult> {
    let tol = tolerance::<T>();
    let mut r = CheckResult::empty("gd_network", T::NAME, instances, tol.max_rel);
    for inst in 0..instances {
        let s = seed::derive(base_seed, &[100, inst as u64]);
        let mut rng = seed::rng(s);
        let mut params = init_network::<T>(config, s)?;
        // non-zero biases so their gradients are exercised away from init
        for layer in &mut params.layers {
            layer.subnet.neuron_bias = uniform(&[1], -0.5, 0.5, &mut rng);
        }
        params.head_bias = uniform(&[1], -0.5, 0.5, &mut rng);
        let side = config.image_size;
        let batch = uniform::<T>(&[2, config.input_channels, side, side], -1.0, 1.0, &mut rng);
        let labels = random_labels::<T>(2, &mut rng);
        let names: Vec<Tensor<T>> = params.named_tensors().into_iter().map(|(_, t)| t.clone()).collect();
        let template = params.clone();
        let build = move |t: &mut Tape<T>, v: &[Var]| -> Result<Var> {
            let nl = template.layers.len();
            let layers = (0..nl)
                .map(|l| gd_layer::GdLayerVars {
                    k1: v[5 * l],
                    k2: v[5 * l + 1],
                    subnet: gd_layer::SubnetVars {
                        attn_kernel: v[5 * l + 2],
                        neuron_weight: v[5 * l + 3],
                        neuron_bias: v[5 * l + 4],
                    },
                })
                .collect();
            let vars = crate::network::NetVars {
                layers,
                head_weight: v[5 * nl],
                head_bias: v[5 * nl + 1],
            };
            let x = t.constant(batch.clone());
            let out = template.forward_tape(t, &vars, x, true, s)?;
            t.bce_loss(out.probabilities, &labels)
        };
        r.absorb(check_graph(&names, &build, Some((coords, &mut rng)))?);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_difference_basics() {
        let x = Tensor::<f64>::from_fn(&[2, 3], |i| i as f64 * 0.3 - 0.7);
        let g = finite_diff_grad(|t| t.sum(), &x, 1e-6);
        assert!(g.data().iter().all(|&v| (v - 1.0).abs() < 1e-8));
        let g = finite_diff_grad(|t| 0.5 * t.data().iter().map(|v| v * v).sum::<f64>(), &x, 1e-6);
        assert!(g.max_abs_diff(&x) < 1e-8);
        let z = Tensor::<f64>::zeros(&[1]);
        let g = finite_diff_grad(|t| crate::autodiff::sigmoid(t.data()[0]), &z, 1e-4);
        assert!((g.data()[0] - 0.25).abs() < 1e-8);
    }

    #[test]
    fn kink_straddling_stencils_are_excluded() {
        // 0 and 1e-9 sit inside the ±1e-6 stencil of the ReLU kink
        let x = Tensor::<f64>::new(&[4], vec![0.0, 1e-9, 0.5, -0.5]).unwrap();
        let g = check_graph(&[x], &|t, v| {
            let y = t.relu(v[0]);
            Ok(t.sum(y))
        }, None)
        .unwrap();
        assert_eq!((g.coordinates, g.straddled), (2, 2));
        assert!(g.max_rel_error < 1e-9);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(2.0, 1.0, 1.0), 0.5);
        assert_eq!(relative_error(1e-9, 0.0, 1e-3), 1e-6);
    }
}
