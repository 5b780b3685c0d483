//! Central finite-difference oracle for backward rules.

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use super::AdError;

/// Max over coordinates of `|analytic - numeric| / max(1e-8, |analytic| +
/// |numeric|)` for a scalar-valued graph function of one tensor, with
/// central differences of half-width `epsilon`. Runs at 64-bit.
pub fn grad_check<F>(f: F, point: &Tensor<f64>, epsilon: f64) -> Result<f64, AdError>
where
    F: Fn(&mut Graph<f64>, NodeId) -> Result<NodeId, AdError>,
{
    let coords: Vec<usize> = (0..point.numel()).collect();
    grad_check_coords(f, point, epsilon, &coords)
}

/// [`grad_check`] restricted to a subset of coordinates; used when the
/// point is too large to probe exhaustively.
pub fn grad_check_coords<F>(
    f: F,
    point: &Tensor<f64>,
    epsilon: f64,
    coords: &[usize],
) -> Result<f64, AdError>
where
    F: Fn(&mut Graph<f64>, NodeId) -> Result<NodeId, AdError>,
{
    let mut g = Graph::new();
    let x = g.param(point.clone());
    let loss = f(&mut g, x)?;
    if g.value(loss).numel() != 1 {
        return Err(AdError::NonScalarLoss(g.value(loss).shape().to_vec()));
    }
    g.backward(loss)?;
    let analytic = g
        .grad(x)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(point.shape()));

    let eval = |p: &Tensor<f64>| -> Result<f64, AdError> {
        let mut g = Graph::new();
        let x = g.constant(p.clone());
        let loss = f(&mut g, x)?;
        Ok(g.value(loss).item())
    };

    let mut worst = 0.0f64;
    for &c in coords {
        let mut hi = point.clone();
        hi.data_mut()[c] += epsilon;
        let mut lo = point.clone();
        lo.data_mut()[c] -= epsilon;
        let numeric = (eval(&hi)? - eval(&lo)?) / (2.0 * epsilon);
        let a = analytic.data()[c];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        if err > worst {
            worst = err;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_map_has_zero_error() {
        let p = Tensor::from_vec(&[3], vec![0.3, -1.2, 2.0]).unwrap();
        let err = grad_check(|g, x| Ok(g.sum_all(x)), &p, 1e-5).unwrap();
        assert!(err <= 1e-10, "identity err {err}");
    }

    #[test]
    fn square_at_three_gives_grad_six() {
        let p = Tensor::from_vec(&[1], vec![3.0f64]).unwrap();
        let mut g = Graph::new();
        let x = g.param(p);
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum_all(sq);
        g.backward(loss).unwrap();
        assert!((g.grad(x).unwrap().data()[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn relu_away_from_kink() {
        let p = Tensor::from_vec(&[4], vec![0.5, -0.7, 1.3, -2.0]).unwrap();
        let err = grad_check(
            |g, x| {
                let y = g.relu(x);
                Ok(g.sum_all(y))
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-6, "relu err {err}");
    }
}
