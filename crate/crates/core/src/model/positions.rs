use crate::tensor::{Real, Tensor};
use crate::{Error, Result};

/// Fixed sine/cosine encodings of absolute patch indices, `[len, dim]`.
/// Even columns hold sines and odd columns cosines.
pub fn sinusoidal_positions<T: Real>(positions: &[usize], dim: usize) -> Result<Tensor<T>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::Config(format!("positional encoding dim must be even, got {dim}")));
    }
    let mut data = Vec::with_capacity(positions.len() * dim);
    for &p in positions {
        for i in 0..dim / 2 {
            let freq = 10_000f64.powf(-((2 * i) as f64) / dim as f64);
            let angle = p as f64 * freq;
            data.push(T::c(angle.sin()));
            data.push(T::c(angle.cos()));
        }
    }
    Tensor::new(vec![positions.len(), dim], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_alternates_zero_one() {
        let pe = sinusoidal_positions::<f64>(&[0], 8).unwrap();
        assert_eq!(pe.data(), &[0., 1., 0., 1., 0., 1., 0., 1.]);
        assert!(sinusoidal_positions::<f64>(&[0], 7).is_err());
    }

    #[test]
    fn encodings_are_distinct_and_pure() {
        let pos: Vec<usize> = (0..50).collect();
        let pe = sinusoidal_positions::<f64>(&pos, 32).unwrap();
        let row = |i: usize| &pe.data()[i * 32..(i + 1) * 32];
        let mut min = f64::INFINITY;
        for i in 0..50 {
            for j in i + 1..50 {
                let d: f64 = row(i).iter().zip(row(j)).map(|(a, b)| (a - b).powi(2)).sum();
                min = min.min(d.sqrt());
            }
        }
        assert!(min > 0.0);
        assert_eq!(pe, sinusoidal_positions::<f64>(&pos, 32).unwrap());
    }
}
