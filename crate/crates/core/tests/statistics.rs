//! Monte-Carlo checks of the screen and noise statistics.

use dwfs::optics::wrap_phase;
use dwfs::sim::{apply_noise, kolmogorov_screen, ScreenSpec};

/// Mean squared increment along both axes at lag r, pooled over seeds.
fn structure_function(n: usize, r0: f64, lags: &[usize], seeds: u64) -> Vec<f64> {
    let mut acc = vec![0.0; lags.len()];
    let mut cnt = vec![0usize; lags.len()];
    for seed in 0..seeds {
        let s = kolmogorov_screen(&ScreenSpec::new(n, r0, seed)).unwrap().values;
        for (k, &r) in lags.iter().enumerate() {
            for i in 0..n {
                for j in 0..n - r {
                    let a = s[[i, j + r]] - s[[i, j]];
                    let b = s[[j + r, i]] - s[[j, i]];
                    acc[k] += a * a + b * b;
                    cnt[k] += 2;
                }
            }
        }
    }
    acc.iter().zip(&cnt).map(|(a, &c)| a / c as f64).collect()
}

fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[test]
fn structure_function_follows_five_thirds_law() {
    let lags = [1usize, 2, 3, 5, 7, 10];
    // Default outer scale (L0 = n) on a grid large against the lags.
    let n = 256;
    let mut acc = vec![0.0; lags.len()];
    for seed in 0..100u64 {
        let s = kolmogorov_screen(&ScreenSpec::new(n, 8.0, seed)).unwrap().values;
        for (k, &r) in lags.iter().enumerate() {
            let mut t = 0.0;
            for i in 0..n {
                for j in 0..n - r {
                    let a = s[[i, j + r]] - s[[i, j]];
                    let b = s[[j + r, i]] - s[[j, i]];
                    t += a * a + b * b;
                }
            }
            acc[k] += t / (2 * n * (n - r)) as f64;
        }
    }
    let x: Vec<f64> = lags.iter().map(|&r| r as f64).collect();
    let slope = loglog_slope(&x, &acc);
    println!("structure function slope {slope:.4}");
    assert!((slope - 5.0 / 3.0).abs() <= 0.15, "slope {slope}");
}

#[test]
fn structure_function_scales_with_r0() {
    let lags = [1usize, 4];
    let a = structure_function(64, 2.0, &lags, 20);
    let b = structure_function(64, 4.0, &lags, 20);
    for k in 0..lags.len() {
        let ratio = (b[k] / a[k]).sqrt();
        assert!((ratio - 2f64.powf(-5.0 / 6.0)).abs() <= 0.1 * 2f64.powf(-5.0 / 6.0), "{ratio}");
    }
}

#[test]
fn doubling_r0_scales_rms_by_five_sixths_power() {
    for seed in 0..100u64 {
        let a = kolmogorov_screen(&ScreenSpec::new(64, 3.0, seed)).unwrap().values;
        let b = kolmogorov_screen(&ScreenSpec::new(64, 6.0, seed)).unwrap().values;
        let rms = |v: &ndarray::Array2<f64>| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
        let ratio = rms(&b) / rms(&a);
        let want = 2f64.powf(-5.0 / 6.0);
        assert!((ratio - want).abs() <= 0.1 * want, "seed {seed}: {ratio}");
    }
}

#[test]
fn noise_rms_ratio_and_coverage() {
    let s = kolmogorov_screen(&ScreenSpec::new(256, 3.0, 5)).unwrap();
    let w = wrap_phase(&s).unwrap();
    let noisy = apply_noise(&w, 0.2, 5).unwrap();
    let d = &noisy.values - &w.values;
    let rms = |v: &ndarray::Array2<f64>| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let ratio = rms(&d) / rms(&w.values);
    let want = 0.2 / 3f64.sqrt();
    assert!((ratio - want).abs() <= 0.05 * want, "{ratio}");
    let changed = d.iter().filter(|v| **v != 0.0).count();
    assert!(changed as f64 > 0.99 * d.len() as f64);
    assert!(noisy.values.iter().any(|v| v.abs() > std::f64::consts::PI));
}
