/// Half-cosine interpolation from `start` (step 0) to `end` (step `total - 1`).
pub fn cosine_schedule(start: f64, end: f64, step: usize, total: usize) -> f64 {
    if total <= 1 {
        return end;
    }
    let progress = step.min(total - 1) as f64 / (total - 1) as f64;
    end + (start - end) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}
