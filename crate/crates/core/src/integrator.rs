//! Fixed-step classical RK4 over one flat state vector.
//!
//! Every subsystem lives in a named block of the same vector so the whole
//! coupled system advances with a single right-hand-side evaluation per stage.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: &'static str,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Maps block names to index ranges. Matrix blocks are stored row-major.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StateLayout {
    blocks: Vec<Block>,
    dim: usize,
}

impl StateLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block; panics on a duplicate name.
    pub fn push(&mut self, name: &'static str, rows: usize, cols: usize) -> &mut Self {
        assert!(self.block(name).is_none(), "duplicate block `{name}`");
        self.blocks.push(Block {
            name,
            offset: self.dim,
            rows,
            cols,
        });
        self.dim += rows * cols;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Name of the block containing `index`.
    pub fn block_at(&self, index: usize) -> Option<&'static str> {
        self.blocks
            .iter()
            .find(|b| b.range().contains(&index))
            .map(|b| b.name)
    }

    pub fn unpack(&self, v: &[f64]) -> Result<Vec<(&'static str, Vec<f64>)>> {
        if v.len() != self.dim {
            return Err(Error::dim("unpack", format!("state has {} entries, layout {}", v.len(), self.dim)));
        }
        Ok(self
            .blocks
            .iter()
            .map(|b| (b.name, v[b.range()].to_vec()))
            .collect())
    }

    /// Inverse of [`Self::unpack`]; every block must appear exactly once.
    pub fn pack(&self, parts: &[(&str, Vec<f64>)]) -> Result<Vec<f64>> {
        if parts.len() != self.blocks.len() {
            return Err(Error::dim(
                "pack",
                format!("{} blocks given, layout has {}", parts.len(), self.blocks.len()),
            ));
        }
        let mut out = vec![0.0; self.dim];
        let mut seen = vec![false; self.blocks.len()];
        for (name, values) in parts {
            let (i, b) = self
                .blocks
                .iter()
                .enumerate()
                .find(|(_, b)| b.name == *name)
                .ok_or_else(|| Error::dim("pack", format!("unknown block `{name}`")))?;
            if seen[i] || values.len() != b.len() {
                return Err(Error::dim(
                    "pack",
                    format!("block `{name}` repeated or has {} entries, expected {}", values.len(), b.len()),
                ));
            }
            seen[i] = true;
            out[b.range()].copy_from_slice(values);
        }
        Ok(out)
    }
}

pub trait OdeSystem {
    fn layout(&self) -> &StateLayout;

    /// Writes `ds = f(t, s)`; `ds` arrives with unspecified contents.
    fn rhs(&self, t: f64, s: &[f64], ds: &mut [f64]) -> Result<()>;
}

/// Adapts a closure into an [`OdeSystem`].
pub struct FnSystem<F> {
    layout: StateLayout,
    f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> FnSystem<F> {
    pub fn new(layout: StateLayout, f: F) -> Self {
        FnSystem { layout, f }
    }
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for FnSystem<F> {
    fn layout(&self) -> &StateLayout {
        &self.layout
    }

    fn rhs(&self, t: f64, s: &[f64], ds: &mut [f64]) -> Result<()> {
        (self.f)(t, s, ds);
        Ok(())
    }
}

/// Stage buffers reused across steps.
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `s` in place from `t` to `t + h`.
    pub fn step<S: OdeSystem + ?Sized>(&mut self, sys: &S, t: f64, s: &mut [f64], h: f64) -> Result<()> {
        let half = 0.5 * h;
        sys.rhs(t, s, &mut self.k1)?;
        for i in 0..s.len() {
            self.tmp[i] = s[i] + half * self.k1[i];
        }
        sys.rhs(t + half, &self.tmp, &mut self.k2)?;
        for i in 0..s.len() {
            self.tmp[i] = s[i] + half * self.k2[i];
        }
        sys.rhs(t + half, &self.tmp, &mut self.k3)?;
        for i in 0..s.len() {
            self.tmp[i] = s[i] + h * self.k3[i];
        }
        sys.rhs(t + h, &self.tmp, &mut self.k4)?;
        let sixth = h / 6.0;
        for i in 0..s.len() {
            s[i] += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        if let Some(i) = s.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                t: t + h,
                block: sys.layout().block_at(i).unwrap_or("?").to_string(),
            });
        }
        Ok(())
    }
}

/// One RK4 step from `(t, s)`.
pub fn rk4_step<S: OdeSystem + ?Sized>(sys: &S, s: &[f64], t: f64, h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::Parameter(format!("step must be > 0, got {h}")));
    }
    if s.len() != sys.layout().dim() {
        return Err(Error::dim("rk4_step", format!("state {} vs layout {}", s.len(), sys.layout().dim())));
    }
    let mut out = s.to_vec();
    Rk4::new(s.len()).step(sys, t, &mut out, h)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub t0: f64,
    pub horizon: f64,
    pub step: f64,
    pub sample_every: f64,
}

impl Schedule {
    /// Number of steps and the sampling stride in steps.
    pub fn resolve(&self) -> Result<(usize, usize)> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid("step", "must be > 0"));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("horizon", "must be >= 0"));
        }
        let stride = (self.sample_every / self.step).round();
        if stride < 1.0 || (stride * self.step - self.sample_every).abs() > 1e-12 {
            return Err(Error::invalid(
                "sample_every",
                format!("{} is not a multiple of step {}", self.sample_every, self.step),
            ));
        }
        let steps = (self.horizon / self.step).round();
        if (steps * self.step - self.horizon).abs() > 1e-9 * self.horizon.max(1.0) {
            return Err(Error::invalid(
                "horizon",
                format!("{} is not a multiple of step {}", self.horizon, self.step),
            ));
        }
        Ok((steps as usize, stride as usize))
    }
}

/// Result of a run: samples collected so far and, if the run stopped
/// early, why.
#[derive(Debug)]
pub struct Outcome<R> {
    pub records: Vec<R>,
    pub failure: Option<Error>,
    /// Time of the last accepted state.
    pub t_end: f64,
    pub state: Vec<f64>,
}

/// Runs the schedule, calling `sample` at `t0` and every `sample_every`.
///
/// Schedule and dimension problems are returned as `Err`; failures during
/// the run end up in [`Outcome::failure`] alongside the partial records.
pub fn integrate<S, R, F>(sys: &S, s0: Vec<f64>, schedule: &Schedule, mut sample: F) -> Result<Outcome<R>>
where
    S: OdeSystem + ?Sized,
    F: FnMut(f64, &[f64]) -> Result<R>,
{
    let (steps, stride) = schedule.resolve()?;
    if s0.len() != sys.layout().dim() {
        return Err(Error::dim("integrate", format!("state {} vs layout {}", s0.len(), sys.layout().dim())));
    }
    let mut out = Outcome {
        records: Vec::with_capacity(steps / stride + 1),
        failure: None,
        t_end: schedule.t0,
        state: s0,
    };
    let mut rk = Rk4::new(out.state.len());
    let h = schedule.step;
    for i in 0..=steps {
        let t = schedule.t0 + i as f64 * h;
        if i % stride == 0 {
            match sample(t, &out.state) {
                Ok(r) => out.records.push(r),
                Err(e) => {
                    out.failure = Some(e);
                    return Ok(out);
                }
            }
        }
        if i == steps {
            break;
        }
        let mut next = out.state.clone();
        if let Err(e) = rk.step(sys, t, &mut next, h) {
            out.failure = Some(e);
            return Ok(out);
        }
        out.state = next;
        out.t_end = schedule.t0 + (i + 1) as f64 * h;
    }
    Ok(out)
}

/// Sampled signals with shared column names; `t` is column 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Trace {
    pub fn new(columns: Vec<String>) -> Self {
        Trace { columns, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.index(name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Like [`Self::column`] but an error names the missing column.
    pub fn require(&self, name: &str) -> Result<Vec<f64>> {
        self.column(name)
            .ok_or_else(|| Error::Diagnostics(format!("trace has no column `{name}`")))
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    /// Row whose time is closest to `t`.
    pub fn row_near(&self, t: f64) -> Option<&[f64]> {
        self.rows
            .iter()
            .min_by(|a, b| (a[0] - t).abs().total_cmp(&(b[0] - t).abs()))
            .map(|r| r.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn decay() -> FnSystem<impl Fn(f64, &[f64], &mut [f64])> {
        let mut l = StateLayout::new();
        l.push("s", 1, 1);
        FnSystem::new(l, |_, s: &[f64], ds: &mut [f64]| ds[0] = -s[0])
    }

    #[test]
    fn zero_rhs_keeps_state() {
        let mut l = StateLayout::new();
        l.push("a", 2, 1);
        let sys = FnSystem::new(l, |_, _: &[f64], ds: &mut [f64]| ds.fill(0.0));
        assert_eq!(rk4_step(&sys, &[1.5, -2.0], 0.0, 0.1).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn decay_step_matches_taylor_polynomial() {
        let h: f64 = 0.1;
        let want = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        let got = rk4_step(&decay(), &[1.0], 0.0, h).unwrap()[0];
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.9048375).abs() < 1e-7);
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |h: f64| {
            let sched = Schedule { t0: 0.0, horizon: 2.0, step: h, sample_every: h };
            let out = integrate(&decay(), vec![1.0], &sched, |t, s| Ok((s[0] - (-t).exp()).abs())).unwrap();
            out.records.into_iter().fold(0.0, f64::max)
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn horizon_zero_gives_one_record() {
        let sched = Schedule { t0: 0.0, horizon: 0.0, step: 1e-3, sample_every: 1e-2 };
        let out = integrate(&decay(), vec![1.0], &sched, |t, s| Ok((t, s[0]))).unwrap();
        assert_eq!(out.records, vec![(0.0, 1.0)]);
        assert!(out.failure.is_none());
    }

    #[test]
    fn sampling_is_uniform() {
        let sched = Schedule { t0: 0.0, horizon: 1.0, step: 1e-3, sample_every: 1e-1 };
        let out = integrate(&decay(), vec![1.0], &sched, |t, _| Ok(t)).unwrap();
        assert_eq!(out.records.len(), 11);
        for (i, t) in out.records.iter().enumerate() {
            assert!((t - i as f64 * 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_incommensurate_sampling() {
        let sched = Schedule { t0: 0.0, horizon: 1.0, step: 1e-3, sample_every: 1.5e-3 };
        assert!(integrate(&decay(), vec![1.0], &sched, |t, _| Ok(t)).is_err());
    }

    #[test]
    fn blow_up_names_block() {
        let mut l = StateLayout::new();
        l.push("calm", 1, 1).push("wild", 1, 1);
        let sys = FnSystem::new(l, |_, s: &[f64], ds: &mut [f64]| {
            ds[0] = 0.0;
            ds[1] = s[1] * s[1];
        });
        let sched = Schedule { t0: 0.0, horizon: 10.0, step: 0.1, sample_every: 0.1 };
        let out = integrate(&sys, vec![1.0, 1.0], &sched, |t, _| Ok(t)).unwrap();
        match out.failure {
            Some(Error::NonFinite { block, t }) => {
                assert_eq!(block, "wild");
                assert!(t > 0.5 && t < 2.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(!out.records.is_empty());
    }

    #[test]
    fn runs_are_bit_identical() {
        let sched = Schedule { t0: 0.0, horizon: 3.0, step: 1e-2, sample_every: 1e-2 };
        let run = || integrate(&decay(), vec![1.0], &sched, |_, s| Ok(s[0].to_bits())).unwrap().records;
        assert_eq!(run(), run());
    }

    proptest! {
        #[test]
        fn layout_round_trip(shapes in proptest::collection::vec((1usize..4, 1usize..4), 1..6), seed in any::<u64>()) {
            const NAMES: [&str; 6] = ["b0", "b1", "b2", "b3", "b4", "b5"];
            let mut l = StateLayout::new();
            for (i, (r, c)) in shapes.iter().enumerate() {
                l.push(NAMES[i], *r, *c);
            }
            let v: Vec<f64> = (0..l.dim()).map(|i| ((seed as f64) * 1e-3 + i as f64).sin()).collect();
            let parts = l.unpack(&v).unwrap();
            let parts: Vec<(&str, Vec<f64>)> = parts.into_iter().rev().collect();
            prop_assert_eq!(l.pack(&parts).unwrap(), v);
        }
    }
}
