use crate::error::{Error, Result};

/// Normalized Gaussian taps of odd length with `sigma = size / 5`.
pub fn gaussian_kernel(size: usize) -> Result<Vec<f64>> {
    if size == 0 || size % 2 == 0 {
        return Err(Error::invalid(format!(
            "kernel size must be odd and >= 1, got {size}"
        )));
    }
    let half = (size / 2) as f64;
    let sigma = size as f64 / 5.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let t = i as f64 - half;
            (-t * t / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

// Half-sample symmetric reflection: ... c b a | a b c ... | c b a ...
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

pub fn gaussian_smooth(series: &[f64], kernel_size: usize) -> Result<Vec<f64>> {
    let kernel = gaussian_kernel(kernel_size)?;
    let n = series.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let half = (kernel_size / 2) as isize;
    Ok((0..n as isize)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(j, w)| w * series[reflect(i + j as isize - half, n)])
                .sum()
        })
        .collect())
}
