use crate::numerics::KahanSum;

/// Outcome of one arrival followed by the drain until the next arrival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Customer leaves without service (`V(t_j-) >= d_j`).
    pub abandoned: bool,
    /// `V(t_j)` after the arrival jump.
    pub v_post: f64,
    /// `V(t_{j+1}-)`.
    pub v_next: f64,
    /// Time the server works during the drain.
    pub busy: f64,
}

/// Offered-waiting-time update for one customer: served iff `v_pre < patience`,
/// then unit-rate drain for `u_next`, floored at zero.
#[inline]
pub fn step(v_pre: f64, u_next: f64, service: f64, patience: f64) -> StepOutcome {
    let abandoned = !(v_pre < patience);
    let v_post = if abandoned { v_pre } else { v_pre + service };
    let busy = v_post.min(u_next);
    StepOutcome { abandoned, v_post, v_next: (v_post - u_next).max(0.0), busy }
}

/// Exact time-weighted statistics of `V(s) = max(v_start - s, 0)` over `[0, duration]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentStats {
    /// `int_0^duration V(s)^m ds` for each requested order.
    pub moment_integrals: Vec<f64>,
    /// Time with `V(s) <= g` for each grid level `g`.
    pub time_below: Vec<f64>,
}

#[inline]
pub(crate) fn power_integral(v_start: f64, v_end: f64, m: f64) -> f64 {
    let k = m + 1.0;
    if m.fract() == 0.0 && m <= 8.0 {
        let e = k as i32;
        (v_start.powi(e) - v_end.powi(e)) / k
    } else {
        (v_start.powf(k) - v_end.powf(k)) / k
    }
}

#[inline]
pub(crate) fn time_below(v_start: f64, duration: f64, level: f64) -> f64 {
    if v_start <= level {
        duration
    } else {
        (duration - (v_start - level)).max(0.0)
    }
}

pub fn accumulate_segment(v_start: f64, duration: f64, orders: &[f64], grid: &[f64]) -> SegmentStats {
    let v_end = (v_start - duration).max(0.0);
    SegmentStats {
        moment_integrals: orders.iter().map(|&m| power_integral(v_start, v_end, m)).collect(),
        time_below: grid.iter().map(|&g| time_below(v_start, duration, g)).collect(),
    }
}

/// Per-batch accumulator. Grid occupancy uses a difference array: a segment
/// starting at or below a level contributes its full duration to that level
/// and every higher one, so only levels inside `(v_start - duration, v_start)`
/// need individual updates.
#[derive(Debug, Clone)]
pub(crate) struct SegmentAccumulator {
    levels: Vec<f64>,
    pub time: KahanSum,
    pub moments: Vec<KahanSum>,
    suffix: Vec<KahanSum>,
    partial: Vec<KahanSum>,
}

impl SegmentAccumulator {
    pub fn new(num_orders: usize, levels: Vec<f64>) -> Self {
        let g = levels.len();
        SegmentAccumulator {
            levels,
            time: KahanSum::new(),
            moments: vec![KahanSum::new(); num_orders],
            suffix: vec![KahanSum::new(); g + 1],
            partial: vec![KahanSum::new(); g],
        }
    }

    #[inline]
    pub fn add(&mut self, v_start: f64, duration: f64, orders: &[f64]) {
        self.time.add(duration);
        let v_end = (v_start - duration).max(0.0);
        for (acc, &m) in self.moments.iter_mut().zip(orders) {
            acc.add(power_integral(v_start, v_end, m));
        }
        let full = self.levels.partition_point(|&g| g < v_start);
        self.suffix[full].add(duration);
        let first = self.levels.partition_point(|&g| g <= v_start - duration);
        for i in first..full {
            self.partial[i].add(duration - (v_start - self.levels[i]));
        }
    }

    pub fn time_below(&self) -> Vec<f64> {
        let mut running = 0.0;
        self.partial
            .iter()
            .zip(&self.suffix)
            .map(|(p, s)| {
                running += s.value();
                running + p.value()
            })
            .collect()
    }
}
