use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{NnError, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|a - n| / max(1, |a|, |n|)` over the checked coordinates.
    pub max_rel_err: f64,
    /// `(parameter index, element index)` where the maximum occurred.
    pub worst: (usize, usize),
    pub n_checked: usize,
}

fn eval<F>(f: &F, params: &[Tensor]) -> Result<f64, NnError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NnError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out).item();
    if !v.is_finite() {
        return Err(NnError::NonFinite("grad_check loss".into()));
    }
    Ok(v)
}

/// Compares backward gradients of the scalar `f` with central differences
/// over every parameter element.
pub fn grad_check<F>(f: F, params: &[Tensor], epsilon: f64) -> Result<GradCheckReport, NnError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NnError>,
{
    let coords = params
        .iter()
        .enumerate()
        .flat_map(|(p, t)| (0..t.len()).map(move |e| (p, e)))
        .collect();
    check_coords(&f, params, epsilon, coords)
}

/// Like [`grad_check`], but only on `max_coords` coordinates drawn without
/// replacement from a seeded stream.
pub fn grad_check_sampled<F>(
    f: F,
    params: &[Tensor],
    epsilon: f64,
    max_coords: usize,
    seed: u64,
) -> Result<GradCheckReport, NnError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NnError>,
{
    let all: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(p, t)| (0..t.len()).map(move |e| (p, e)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = max_coords.min(all.len());
    let mut picked: Vec<(usize, usize)> = sample(&mut rng, all.len(), k)
        .into_iter()
        .map(|i| all[i])
        .collect();
    picked.sort_unstable();
    check_coords(&f, params, epsilon, picked)
}

fn check_coords<F>(
    f: &F,
    params: &[Tensor],
    epsilon: f64,
    coords: Vec<(usize, usize)>,
) -> Result<GradCheckReport, NnError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NnError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    if !tape.value(out).is_finite() {
        return Err(NnError::NonFinite("grad_check loss".into()));
    }
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| tape.grad(v).map_or_else(|| vec![0.0; p.len()], <[f64]>::to_vec))
        .collect();

    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        n_checked: 0,
    };
    for (p, e) in coords {
        let orig = work[p].data()[e];
        work[p].data_mut()[e] = orig + epsilon;
        let up = eval(f, &work)?;
        work[p].data_mut()[e] = orig - epsilon;
        let down = eval(f, &work)?;
        work[p].data_mut()[e] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic[p][e];
        let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = (p, e);
        }
        report.n_checked += 1;
    }
    Ok(report)
}
