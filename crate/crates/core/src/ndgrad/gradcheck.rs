//! Central finite-difference gradient checks.
//!
//! A non-scalar output is reduced to a scalar with a fixed random
//! projection, so every output element contributes to the check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GradError, Tape, Tensor, Var};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Norm-wise relative error `‖a − n‖ / max(‖a‖, ‖n‖)` per input.
    pub rel_errors: Vec<f64>,
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.rel_errors.iter().copied().fold(0.0, f64::max)
    }
}

pub fn relative_error(a: &Tensor, n: &Tensor) -> f64 {
    let diff: f64 = a
        .data()
        .iter()
        .zip(n.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = a.norm().max(n.norm());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn projected_loss<F>(f: &F, inputs: &[Tensor], proj: Option<&Tensor>) -> Result<(Tape, Vec<Var>, Var, Tensor), GradError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, GradError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let proj = match proj {
        Some(p) => p.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
            Tensor::uniform(tape.shape(out), 1.0, &mut rng)
        }
    };
    let w = tape.constant(proj.clone());
    let weighted = tape.mul(out, w)?;
    let loss = tape.sum(weighted);
    Ok((tape, vars, loss, proj))
}

/// Compare the tape's gradients of `f` at `inputs` against central
/// differences with step `h`.
pub fn check<F>(f: F, inputs: &[Tensor], h: f64) -> Result<GradCheckReport, GradError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, GradError>,
{
    let (mut tape, vars, loss, proj) = projected_loss(&f, inputs, None)?;
    let mut grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.take(v)).collect();

    let eval = |xs: &[Tensor]| -> Result<f64, GradError> {
        let (tape, _, loss, _) = projected_loss(&f, xs, Some(&proj))?;
        Ok(tape.value(loss).item())
    };

    let mut numeric = Vec::with_capacity(inputs.len());
    let mut work = inputs.to_vec();
    for k in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[k].shape());
        for i in 0..inputs[k].len() {
            let x0 = inputs[k].data()[i];
            work[k].data_mut()[i] = x0 + h;
            let fp = eval(&work)?;
            work[k].data_mut()[i] = x0 - h;
            let fm = eval(&work)?;
            work[k].data_mut()[i] = x0;
            g.data_mut()[i] = (fp - fm) / (2.0 * h);
        }
        numeric.push(g);
    }
    let rel_errors = analytic.iter().zip(&numeric).map(|(a, n)| relative_error(a, n)).collect();
    Ok(GradCheckReport {
        rel_errors,
        analytic,
        numeric,
    })
}
