//! Fast kernels against slow, obviously-correct reference implementations.

use ferex::nn::{conv_forward, maxpool_backward, maxpool_forward};
use ferex::rng::SeededRng;
use ferex::tensor::{col2im, im2col};
use ferex::Tensor;

fn random(rng: &mut SeededRng, dims: &[usize]) -> Tensor {
    let n = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| rng.uniform(-1.0, 1.0) as f32).collect()).unwrap()
}

/// Direct sliding-window cross-correlation, accumulated in f64.
fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
    let [n, c, h, wd] = <[usize; 4]>::try_from(x.dims()).unwrap();
    let [o, _, kh, kw] = <[usize; 4]>::try_from(w.dims()).unwrap();
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let xv = |i: usize, ch: usize, y: isize, xx: isize| -> f64 {
        if y < 0 || xx < 0 || y >= h as isize || xx >= wd as isize {
            0.0
        } else {
            f64::from(x.data()[((i * c + ch) * h + y as usize) * wd + xx as usize])
        }
    };
    let mut out = Vec::with_capacity(n * o * oh * ow);
    for i in 0..n {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = f64::from(b.data()[oc]);
                    for ch in 0..c {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let y = (oy * stride + ki) as isize - pad as isize;
                                let xx = (ox * stride + kj) as isize - pad as isize;
                                s += f64::from(w.data()[((oc * c + ch) * kh + ki) * kw + kj]) * xv(i, ch, y, xx);
                            }
                        }
                    }
                    out.push(s);
                }
            }
        }
    }
    out
}

pub fn conv_matches_sliding_window_on_100_cases() {
    let mut rng = SeededRng::new(2024);
    let mut checked = 0;
    while checked < 100 {
        let n = 1 + rng.below(3) as usize;
        let c = 1 + rng.below(4) as usize;
        let o = 1 + rng.below(5) as usize;
        let kh = 1 + rng.below(4) as usize;
        let kw = 1 + rng.below(4) as usize;
        let stride = 1 + rng.below(2) as usize;
        let pad = rng.below(3) as usize;
        let h = kh + rng.below(7) as usize;
        let wd = kw + rng.below(7) as usize;
        // Only geometries where the windows tile the padded input exactly.
        if !(h + 2 * pad - kh).is_multiple_of(stride) || !(wd + 2 * pad - kw).is_multiple_of(stride) {
            continue;
        }
        let x = random(&mut rng, &[n, c, h, wd]);
        let w = random(&mut rng, &[o, c, kh, kw]);
        let b = random(&mut rng, &[o]);
        let (y, _) = conv_forward(&x, &w, &b, stride, pad).unwrap();
        let expect = naive_conv(&x, &w, &b, stride, pad);
        assert_eq!(y.numel(), expect.len());
        for (got, want) in y.data().iter().zip(&expect) {
            assert!((f64::from(*got) - want).abs() <= 1e-5, "case {checked}: {got} vs {want}");
        }
        checked += 1;
    }
}

/// First maximum of each 2×2 window in row-major order, by enumeration.
fn brute_pool(x: &Tensor) -> (Vec<f32>, Vec<usize>) {
    let [n, c, h, w] = <[usize; 4]>::try_from(x.dims()).unwrap();
    let (mut vals, mut idx) = (Vec::new(), Vec::new());
    for plane in 0..n * c {
        for oy in 0..h / 2 {
            for ox in 0..w / 2 {
                let window: Vec<usize> =
                    (0..4).map(|k| plane * h * w + (2 * oy + k / 2) * w + 2 * ox + k % 2).collect();
                let max = window.iter().map(|&i| x.data()[i]).fold(f32::NEG_INFINITY, f32::max);
                let first = *window.iter().find(|&&i| x.data()[i] == max).unwrap();
                vals.push(max);
                idx.push(first);
            }
        }
    }
    (vals, idx)
}

pub fn maxpool_matches_brute_force_exactly() {
    let mut rng = SeededRng::new(77);
    for case in 0..100 {
        let dims = [
            1 + rng.below(3) as usize,
            1 + rng.below(3) as usize,
            2 * (1 + rng.below(5) as usize),
            2 * (1 + rng.below(5) as usize),
        ];
        // Coarse values on odd cases so ties are common.
        let levels = if case % 2 == 0 { 1_000_000 } else { 3 };
        let n: usize = dims.iter().product();
        let data: Vec<f32> = (0..n).map(|_| rng.below(levels) as f32).collect();
        let x = Tensor::from_vec(&dims, data).unwrap();
        let (y, cache) = maxpool_forward(&x).unwrap();
        let (vals, idx) = brute_pool(&x);
        assert_eq!(y.data(), &vals[..]);

        let g = random(&mut rng, y.dims());
        let back = maxpool_backward(&g, &cache).unwrap();
        let mut expect = vec![0.0f32; n];
        for (&i, &v) in idx.iter().zip(g.data()) {
            expect[i] += v;
        }
        assert_eq!(back.data(), &expect[..]);
    }
}

pub fn col2im_is_adjoint_of_im2col() {
    // <im2col(x), y> == <x, col2im(y)> for every x, y.
    let mut rng = SeededRng::new(5);
    for _ in 0..20 {
        let (c, h, w) = (1 + rng.below(3) as usize, 3 + rng.below(5) as usize, 3 + rng.below(5) as usize);
        let x = random(&mut rng, &[c, h, w]);
        let cols = im2col(&x, 3, 3, 1, 1).unwrap();
        let y = random(&mut rng, cols.dims());
        let back = col2im(&y, [c, h, w], 3, 3, 1, 1).unwrap();
        let lhs: f64 = cols.data().iter().zip(y.data()).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
        let rhs: f64 = x.data().iter().zip(back.data()).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
        assert!((lhs - rhs).abs() < 1e-4, "{lhs} vs {rhs}");
    }
}
