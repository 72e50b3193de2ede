use crate::raster::Raster;

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;
/// Weight of the structural term.
pub const SSIM_WEIGHT: f64 = 0.2;

fn gaussian_window() -> [f64; WINDOW] {
    let half = (WINDOW / 2) as f64;
    let mut w: [f64; WINDOW] = std::array::from_fn(|i| {
        let d = i as f64 - half;
        (-d * d / (2.0 * SIGMA * SIGMA)).exp()
    });
    let s: f64 = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    w
}

/// Separable Gaussian filter of one plane with zero padding, same size.
/// The kernel is symmetric, so this operator is self-adjoint.
fn blur(src: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let r = (WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (j, &kv) in k.iter().enumerate() {
                let xx = x as isize + j as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    acc += kv * row[xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (j, &kv) in k.iter().enumerate() {
            let yy = y as isize + j as isize - r;
            if yy < 0 || yy as usize >= h {
                continue;
            }
            let src_row = &tmp[yy as usize * w..(yy as usize + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for x in 0..w {
                dst[x] += kv * src_row[x];
            }
        }
    }
    out
}

fn plane(r: &Raster, c: usize) -> Vec<f64> {
    r.data().iter().skip(c).step_by(r.channels()).copied().collect()
}

/// Mean SSIM over pixels and channels, with its gradient with respect to `x`.
pub fn ssim(x: &Raster, y: &Raster) -> (f64, Raster) {
    assert!(x.same_shape(y), "ssim: shape mismatch");
    let (w, h, ch) = (x.width(), x.height(), x.channels());
    let n = (w * h * ch) as f64;
    let k = gaussian_window();
    let mut total = 0.0;
    let mut grad = Raster::new(w, h, ch);
    for c in 0..ch {
        let xp = plane(x, c);
        let yp = plane(y, c);
        let mx = blur(&xp, w, h, &k);
        let my = blur(&yp, w, h, &k);
        let xx: Vec<f64> = xp.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = yp.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = xp.iter().zip(&yp).map(|(a, b)| a * b).collect();
        let sxx = blur(&xx, w, h, &k);
        let syy = blur(&yy, w, h, &k);
        let sxy = blur(&xy, w, h, &k);
        let mut g_mu = vec![0.0; w * h];
        let mut g_xx = vec![0.0; w * h];
        let mut g_xy = vec![0.0; w * h];
        for i in 0..w * h {
            let (mx, my) = (mx[i], my[i]);
            let vx = sxx[i] - mx * mx;
            let vy = syy[i] - my * my;
            let cxy = sxy[i] - mx * my;
            let a1 = 2.0 * mx * my + C1;
            let a2 = 2.0 * cxy + C2;
            let b1 = mx * mx + my * my + C1;
            let b2 = vx + vy + C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            let g = 1.0 / n;
            g_mu[i] = g * s * (2.0 * my / a1 - 2.0 * my / a2 - 2.0 * mx / b1 + 2.0 * mx / b2);
            g_xx[i] = -g * s / b2;
            g_xy[i] = g * s * 2.0 / a2;
        }
        let d_mu = blur(&g_mu, w, h, &k);
        let d_xx = blur(&g_xx, w, h, &k);
        let d_xy = blur(&g_xy, w, h, &k);
        for i in 0..w * h {
            grad.at_mut(i)[c] = d_mu[i] + 2.0 * xp[i] * d_xx[i] + yp[i] * d_xy[i];
        }
    }
    (total / n, grad)
}

/// Value and gradient of the photometric distance.
#[derive(Debug, Clone)]
pub struct Photometric {
    pub value: f64,
    pub l1: f64,
    pub ssim: f64,
    /// Gradient with respect to the rendered image.
    pub grad: Raster,
}

/// `(1 - λ) L1 + λ (1 - SSIM) / 2` with `λ = 0.2`.
pub fn photometric(rendered: &Raster, observed: &Raster) -> Photometric {
    assert!(rendered.same_shape(observed), "photometric: shape mismatch");
    let n = rendered.data().len() as f64;
    let l1 = rendered
        .data()
        .iter()
        .zip(observed.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n;
    let (s, d_ssim) = ssim(rendered, observed);
    let mut grad = Raster::new(rendered.width(), rendered.height(), rendered.channels());
    for ((g, (a, b)), ds) in grad
        .data_mut()
        .iter_mut()
        .zip(rendered.data().iter().zip(observed.data()))
        .zip(d_ssim.data())
    {
        let sign = if a > b {
            1.0
        } else if a < b {
            -1.0
        } else {
            0.0
        };
        *g = (1.0 - SSIM_WEIGHT) * sign / n - 0.5 * SSIM_WEIGHT * ds;
    }
    Photometric {
        value: (1.0 - SSIM_WEIGHT) * l1 + SSIM_WEIGHT * (1.0 - s) / 2.0,
        l1,
        ssim: s,
        grad,
    }
}
