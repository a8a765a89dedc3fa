//! Exogenous market process: regulation signal, prices, and loads.
//!
//! A tick is one period's realization of the regulation signal, the three
//! price components, and the per-bus (re)active demands. Ticks come from a
//! periodic synthetic generator, a seeded random generator, or a pre-loaded
//! trace. Generators are pure in (config, seed, period) so runs replay
//! bit-identically.

use alloc::vec::Vec;

use crate::rng::DetRng;

#[derive(Debug, thiserror::Error)]
pub enum MarketError {
    #[error("bounds must satisfy 0 <= lo <= hi, got [{lo}, {hi}] for {what}")]
    InvalidBounds {
        what: &'static str,
        lo: f64,
        hi: f64,
    },
    #[error("competitive price lower bound must be positive")]
    NonPositiveCompetitiveFloor,
    #[error("bounds sized for {expected} buses, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("trace has {len} ticks, period {t} requested")]
    TraceExhausted { len: usize, t: usize },
    #[error("tick violates world bounds: {what} = {value}")]
    OutOfBounds { what: &'static str, value: f64 },
}

/// One period's market realization.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketTick {
    /// Regulation signal: +1 charge-only, -1 discharge-only.
    pub reg: i8,
    /// Base energy charge, $/unit.
    pub c0: f64,
    /// Competitive charge slope, $/unit².
    pub cp: f64,
    /// Regulation price, $/unit.
    pub cr: f64,
    /// Active demand per bus, pu.
    pub loads: Vec<f64>,
    /// Reactive demand per bus, pu.
    pub reactive: Vec<f64>,
}

/// Closed interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Known bounds on every exogenous quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldBounds {
    pub c0: Interval,
    pub cp: Interval,
    pub cr: Interval,
    pub loads: Vec<Interval>,
    pub reactive: Vec<Interval>,
}

impl WorldBounds {
    pub fn validate(&self) -> Result<(), MarketError> {
        check_interval("c0", self.c0)?;
        check_interval("cp", self.cp)?;
        check_interval("cr", self.cr)?;
        if !(self.cp.lo > 0.0) {
            return Err(MarketError::NonPositiveCompetitiveFloor);
        }
        for iv in &self.loads {
            check_interval("load", *iv)?;
        }
        for iv in &self.reactive {
            check_interval("reactive", *iv)?;
        }
        Ok(())
    }

    pub fn bus_count(&self) -> usize {
        self.loads.len()
    }

    /// Componentwise membership check with tolerance.
    pub fn admits(&self, tick: &MarketTick, tol: f64) -> Result<(), MarketError> {
        if tick.reg != 1 && tick.reg != -1 {
            return Err(MarketError::OutOfBounds {
                what: "reg",
                value: tick.reg as f64,
            });
        }
        if !self.c0.contains(tick.c0, tol) {
            return Err(MarketError::OutOfBounds {
                what: "c0",
                value: tick.c0,
            });
        }
        if !self.cp.contains(tick.cp, tol) {
            return Err(MarketError::OutOfBounds {
                what: "cp",
                value: tick.cp,
            });
        }
        if !self.cr.contains(tick.cr, tol) {
            return Err(MarketError::OutOfBounds {
                what: "cr",
                value: tick.cr,
            });
        }
        for (l, iv) in tick.loads.iter().zip(&self.loads) {
            if !iv.contains(*l, tol) {
                return Err(MarketError::OutOfBounds {
                    what: "load",
                    value: *l,
                });
            }
        }
        for (q, iv) in tick.reactive.iter().zip(&self.reactive) {
            if !iv.contains(*q, tol) {
                return Err(MarketError::OutOfBounds {
                    what: "reactive",
                    value: *q,
                });
            }
        }
        Ok(())
    }

    pub fn total_load_lo(&self) -> f64 {
        self.loads.iter().map(|iv| iv.lo).sum()
    }

    pub fn total_load_hi(&self) -> f64 {
        self.loads.iter().map(|iv| iv.hi).sum()
    }
}

fn check_interval(what: &'static str, iv: Interval) -> Result<(), MarketError> {
    if iv.lo >= 0.0 && iv.lo <= iv.hi {
        Ok(())
    } else {
        Err(MarketError::InvalidBounds {
            what,
            lo: iv.lo,
            hi: iv.hi,
        })
    }
}

/// Periodic scenario: the regulation signal flips every `reg_half_period`
/// slots, and each price stream holds its low level for `low_dwell` slots
/// then its high level for `high_dwell`. Loads are constant. The opposite
/// dwell reading is obtained by swapping the dwell fields.
#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub c0_levels: (f64, f64),
    /// Levels of the *total* competitive slope N·cp; the per-tick cp is the
    /// active level divided by the bus count.
    pub cp_sum_levels: (f64, f64),
    pub cr_levels: (f64, f64),
    pub low_dwell: u32,
    pub high_dwell: u32,
    pub reg_half_period: u32,
    pub loads: Vec<f64>,
    pub reactive: Vec<f64>,
}

impl SyntheticConfig {
    pub fn bus_count(&self) -> usize {
        self.loads.len()
    }

    fn high_phase(&self, t: usize) -> bool {
        let cycle = (self.low_dwell + self.high_dwell).max(1) as usize;
        (t % cycle) >= self.low_dwell as usize
    }

    pub fn bounds(&self) -> WorldBounds {
        let span = |(a, b): (f64, f64)| Interval::new(a.min(b), a.max(b));
        let n = self.bus_count() as f64;
        WorldBounds {
            c0: span(self.c0_levels),
            cp: span((self.cp_sum_levels.0 / n, self.cp_sum_levels.1 / n)),
            cr: span(self.cr_levels),
            loads: self.loads.iter().map(|&l| Interval::new(l, l)).collect(),
            reactive: self.reactive.iter().map(|&q| Interval::new(q, q)).collect(),
        }
    }
}

/// Tick `t` of the periodic scenario.
pub fn scenario_synthetic(cfg: &SyntheticConfig, t: usize) -> MarketTick {
    let n = cfg.bus_count() as f64;
    let high = cfg.high_phase(t);
    let pick = |(lo, hi): (f64, f64)| if high { hi } else { lo };
    let reg = if (t / cfg.reg_half_period.max(1) as usize) % 2 == 0 {
        1
    } else {
        -1
    };
    MarketTick {
        reg,
        c0: pick(cfg.c0_levels),
        cp: pick(cfg.cp_sum_levels) / n,
        cr: pick(cfg.cr_levels),
        loads: cfg.loads.clone(),
        reactive: cfg.reactive.clone(),
    }
}

/// Randomized scenario: fair ±1 regulation signal, prices and loads uniform
/// within the declared bounds. `cp_tied_to_c0` replaces the independent cp
/// draw by c0 divided by the bus count.
#[derive(Debug, Clone)]
pub struct RandomConfig {
    pub bounds: WorldBounds,
    pub cp_tied_to_c0: bool,
}

/// Tick `t` of the randomized scenario; pure in (cfg, seed, t).
pub fn scenario_random(cfg: &RandomConfig, seed: u64, t: usize) -> MarketTick {
    let mut rng = DetRng::for_tick(seed, t as u64);
    let b = &cfg.bounds;
    let reg = rng.sign();
    let c0 = rng.uniform(b.c0.lo, b.c0.hi);
    let cp = if cfg.cp_tied_to_c0 {
        c0 / b.bus_count() as f64
    } else {
        rng.uniform(b.cp.lo, b.cp.hi)
    };
    let cr = rng.uniform(b.cr.lo, b.cr.hi);
    let loads = b.loads.iter().map(|iv| rng.uniform(iv.lo, iv.hi)).collect();
    let reactive = b
        .reactive
        .iter()
        .map(|iv| rng.uniform(iv.lo, iv.hi))
        .collect();
    MarketTick {
        reg,
        c0,
        cp,
        cr,
        loads,
        reactive,
    }
}

/// Pre-loaded tick sequence with its bounds.
#[derive(Debug, Clone)]
pub struct TraceData {
    pub ticks: Vec<MarketTick>,
    pub bounds: WorldBounds,
}

/// A source of market ticks for the simulation loop.
#[derive(Debug, Clone)]
pub enum Scenario {
    Synthetic(SyntheticConfig),
    Random { cfg: RandomConfig, seed: u64 },
    Trace(TraceData),
}

impl Scenario {
    pub fn tick(&self, t: usize) -> Result<MarketTick, MarketError> {
        match self {
            Scenario::Synthetic(cfg) => Ok(scenario_synthetic(cfg, t)),
            Scenario::Random { cfg, seed } => Ok(scenario_random(cfg, *seed, t)),
            Scenario::Trace(data) => {
                data.ticks
                    .get(t)
                    .cloned()
                    .ok_or(MarketError::TraceExhausted {
                        len: data.ticks.len(),
                        t,
                    })
            }
        }
    }

    pub fn bounds(&self) -> WorldBounds {
        match self {
            Scenario::Synthetic(cfg) => cfg.bounds(),
            Scenario::Random { cfg, .. } => cfg.bounds.clone(),
            Scenario::Trace(data) => data.bounds.clone(),
        }
    }

    pub fn bus_count(&self) -> usize {
        match self {
            Scenario::Synthetic(cfg) => cfg.bus_count(),
            Scenario::Random { cfg, .. } => cfg.bounds.bus_count(),
            Scenario::Trace(data) => data.bounds.bus_count(),
        }
    }
}

/// Componentwise min/max bounds over a tick sequence.
pub fn infer_bounds(ticks: &[MarketTick]) -> Option<WorldBounds> {
    let first = ticks.first()?;
    let n = first.loads.len();
    let mut b = WorldBounds {
        c0: Interval::new(first.c0, first.c0),
        cp: Interval::new(first.cp, first.cp),
        cr: Interval::new(first.cr, first.cr),
        loads: first.loads.iter().map(|&l| Interval::new(l, l)).collect(),
        reactive: first
            .reactive
            .iter()
            .map(|&q| Interval::new(q, q))
            .collect(),
    };
    let widen = |iv: &mut Interval, x: f64| {
        iv.lo = iv.lo.min(x);
        iv.hi = iv.hi.max(x);
    };
    for tick in &ticks[1..] {
        widen(&mut b.c0, tick.c0);
        widen(&mut b.cp, tick.cp);
        widen(&mut b.cr, tick.cr);
        for i in 0..n {
            widen(&mut b.loads[i], tick.loads[i]);
            widen(&mut b.reactive[i], tick.reactive[i]);
        }
    }
    Some(b)
}
