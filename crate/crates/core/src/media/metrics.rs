use crate::error::{Error, Result};

/// Reported PSNR when the inputs are identical.
pub const PSNR_CAP: f64 = 100.0;

pub fn mse(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "psnr operands have {} and {} samples",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// `10·log10(1/MSE)` for unit-range signals, capped at [`PSNR_CAP`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

pub fn psnr(a: &[f32], b: &[f32]) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

/// Translation `(dx, dy)` such that `b(x, y) ≈ a(x − dx, y − dy)`, found by
/// maximizing normalized cross-correlation over integer shifts in
/// `±max_shift` and refining each axis with a parabola through the peak.
pub fn register_translation(a: &[f32], b: &[f32], width: usize, height: usize, max_shift: usize) -> Result<(f64, f64)> {
    if a.len() != width * height || b.len() != width * height {
        return Err(Error::Shape(format!(
            "registration needs two {width}x{height} planes, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let m = max_shift as isize;
    let side = (2 * m + 1) as usize;
    let mut score = vec![f64::NEG_INFINITY; side * side];
    for dy in -m..=m {
        for dx in -m..=m {
            score[((dy + m) as usize) * side + (dx + m) as usize] = ncc(a, b, width, height, dx, dy);
        }
    }
    let (best, _) = score.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc },
    );
    let (by, bx) = (best / side, best % side);
    let at = |x: usize, y: usize| score[y * side + x];
    let refine = |lo: f64, mid: f64, hi: f64| {
        let denom = lo - 2.0 * mid + hi;
        if denom.abs() < 1e-12 || !denom.is_finite() {
            0.0
        } else {
            (0.5 * (lo - hi) / denom).clamp(-0.5, 0.5)
        }
    };
    let fx = if bx > 0 && bx + 1 < side {
        refine(at(bx - 1, by), at(bx, by), at(bx + 1, by))
    } else {
        0.0
    };
    let fy = if by > 0 && by + 1 < side {
        refine(at(bx, by - 1), at(bx, by), at(bx, by + 1))
    } else {
        0.0
    };
    Ok((bx as f64 - m as f64 + fx, by as f64 - m as f64 + fy))
}

fn ncc(a: &[f32], b: &[f32], w: usize, h: usize, dx: isize, dy: isize) -> f64 {
    let (w, h) = (w as isize, h as isize);
    let (x0, x1) = (dx.max(0), (w + dx).min(w));
    let (y0, y1) = (dy.max(0), (h + dy).min(h));
    let n = ((x1 - x0) * (y1 - y0)) as f64;
    if n < 1.0 {
        return f64::NEG_INFINITY;
    }
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for y in y0..y1 {
        for x in x0..x1 {
            let va = f64::from(a[((y - dy) * w + (x - dx)) as usize]);
            let vb = f64::from(b[(y * w + x) as usize]);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
        }
    }
    let cov = sab - sa * sb / n;
    let var = (saa - sa * sa / n) * (sbb - sb * sb / n);
    if var <= 0.0 {
        0.0
    } else {
        cov / var.sqrt()
    }
}
