//! Binary grid morphology and connected-component labeling.

/// Offsets of a square kernel of side `k` (anchor in the middle, biased
/// towards negative offsets for even sides).
fn kernel_range(k: usize) -> std::ops::RangeInclusive<isize> {
    let k = k.max(1) as isize;
    -((k - 1) / 2)..=k / 2
}

/// Erosion with a `k × k` square structuring element. Pixels outside the grid
/// count as background.
pub fn erode(mask: &[bool], width: usize, height: usize, k: usize) -> Vec<bool> {
    if k <= 1 {
        return mask.to_vec();
    }
    let r = kernel_range(k);
    let mut out = vec![false; mask.len()];
    for y in 0..height {
        for x in 0..width {
            if !mask[y * width + x] {
                continue;
            }
            out[y * width + x] = r.clone().all(|dy| {
                r.clone().all(|dx| {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    nx >= 0
                        && ny >= 0
                        && (nx as usize) < width
                        && (ny as usize) < height
                        && mask[ny as usize * width + nx as usize]
                })
            });
        }
    }
    out
}

/// Dilation by `radius` cells in every direction (a `(2r+1)` square).
pub fn dilate(mask: &[bool], width: usize, height: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return mask.to_vec();
    }
    let mut out = vec![false; mask.len()];
    for y in 0..height {
        for x in 0..width {
            if !mask[y * width + x] {
                continue;
            }
            let (y0, y1) = (y.saturating_sub(radius), (y + radius).min(height - 1));
            let (x0, x1) = (x.saturating_sub(radius), (x + radius).min(width - 1));
            for ny in y0..=y1 {
                out[ny * width + x0..=ny * width + x1].fill(true);
            }
        }
    }
    out
}

/// 8-connected component labels (`None` for background), numbered from 0 in
/// scan order. Returns the labels and the component count.
pub fn label_components(mask: &[bool], width: usize, height: usize) -> (Vec<Option<usize>>, usize) {
    let mut labels = vec![None; mask.len()];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(next);
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % width) as isize, (i / width) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    if mask[j] && labels[j].is_none() {
                        labels[j] = Some(next);
                        stack.push(j);
                    }
                }
            }
        }
        next += 1;
    }
    (labels, next)
}

pub fn count_components(mask: &[bool], width: usize, height: usize) -> usize {
    label_components(mask, width, height).1
}
