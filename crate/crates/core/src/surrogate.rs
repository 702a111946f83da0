//! Surrogate-cache demo: a 1-D advection loop whose per-cell "chemistry"
//! kernel is memoized in the table.
//!
//! Each cell's state is 10 doubles (9 species concentrations plus the time
//! step). Before running the expensive kernel on a cell, its inputs are
//! rounded to a configurable number of significant decimal digits and
//! serialized into an 80-byte key; a table hit skips the kernel entirely and
//! returns the exact result that was stored by the first cell in the same
//! rounding equivalence class. An injected species advects across the grid
//! with a first-order upwind scheme, so cells ahead of the front keep
//! repeating identical inputs step after step and the hit rate climbs, while
//! the moving front keeps producing fresh keys.
//!
//! Grid cells are partitioned contiguously across participants; each step
//! exchanges one halo cell per internal boundary through the windows (put,
//! then barrier), advects, simulates, and gathers per-step hit counts to
//! participant 0.

use std::collections::HashMap;
use std::io::Write;
use std::time::{Duration, Instant};

use crate::dht::{DhtConfig, DhtHandle, Protocol};
use crate::harness::{HarnessError, WindowLayout};
use crate::rma::RmaHandle;

/// Key bytes: 10 rounded doubles, little-endian.
pub const KEY_BYTES: usize = 80;
/// Value bytes: the 13 result doubles, little-endian.
pub const VALUE_BYTES: usize = 104;

/// 9 species concentrations followed by the simulation time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellInput(pub [f64; 10]);

impl CellInput {
    pub fn concentrations(&self) -> &[f64] {
        &self.0[..9]
    }

    pub fn time_step(&self) -> f64 {
        self.0[9]
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|v| v.is_finite()) && self.concentrations().iter().all(|&c| c >= 0.0)
    }
}

/// The kernel's 13 output doubles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellResult(pub [f64; 13]);

impl CellResult {
    pub fn to_bytes(&self) -> [u8; VALUE_BYTES] {
        let mut buf = [0u8; VALUE_BYTES];
        for (slot, v) in buf.chunks_exact_mut(8).zip(self.0) {
            slot.copy_from_slice(&v.to_le_bytes());
        }
        buf
    }

    pub fn from_bytes(buf: &[u8]) -> Option<CellResult> {
        if buf.len() != VALUE_BYTES {
            return None;
        }
        let mut out = [0f64; 13];
        for (v, slot) in out.iter_mut().zip(buf.chunks_exact(8)) {
            *v = f64::from_le_bytes(slot.try_into().unwrap());
        }
        Some(CellResult(out))
    }
}

/// Exact powers of ten; every entry is an integer a double represents
/// exactly (5^22 still fits in the 53-bit mantissa, 5^23 does not).
const POW10: [f64; 23] = [
    1e0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9, 1e10, 1e11, 1e12, 1e13, 1e14, 1e15, 1e16,
    1e17, 1e18, 1e19, 1e20, 1e21, 1e22,
];

/// Multiply by 10^k (divide for negative k), stepping through exact powers.
fn scale_by_pow10(mut a: f64, mut k: i32) -> f64 {
    while k != 0 {
        let step = k.clamp(-22, 22);
        let factor = POW10[step.unsigned_abs() as usize];
        if step > 0 {
            a *= factor;
        } else {
            a /= factor;
        }
        k -= step;
    }
    a
}

/// Decimal exponent of a positive finite double: the exact floor(log10),
/// read off the scientific notation the formatter produces.
fn decimal_exponent(a: f64) -> i32 {
    let s = format!("{a:e}");
    let e = s.find('e').expect("scientific notation always carries an exponent");
    s[e + 1..].parse().expect("formatter exponents are well-formed")
}

/// Round to `digits` significant decimal digits, halves away from zero.
///
/// Zero maps to +0.0 and non-finite values pass through. Sixteen or more
/// digits returns the value unchanged (a double does not carry a 16th digit
/// reliably). The result is the double nearest to the exact decimal
/// rounding, so re-rounding is a no-op and results compare bit-equal to
/// decimal literals. Rounding whose magnitude overflows the double range
/// saturates to infinity.
///
/// # Panics
/// `digits` must be at least 1.
pub fn round_significant(x: f64, digits: u32) -> f64 {
    assert!(digits >= 1, "significant-digit rounding needs at least one digit");
    if x == 0.0 {
        return 0.0;
    }
    if !x.is_finite() || digits >= 16 {
        return x;
    }
    let a = x.abs();
    let exp = decimal_exponent(a);
    // Shift the first `digits` digits left of the decimal point and round.
    let scaled = scale_by_pow10(a, digits as i32 - 1 - exp);
    let mut mantissa = scaled.round() as u64;
    let mut e_out = exp - digits as i32 + 1;
    // 999.5 -> 1000 style carry into one more digit.
    while mantissa >= 10u64.pow(digits) {
        mantissa = (mantissa + 5) / 10;
        e_out += 1;
    }
    let magnitude: f64 = format!("{mantissa}e{e_out}")
        .parse()
        .expect("integer mantissa with integer exponent always parses");
    if x < 0.0 {
        -magnitude
    } else {
        magnitude
    }
}

/// Serialize the rounded inputs as the cache key.
pub fn make_key(input: &CellInput, digits: u32) -> [u8; KEY_BYTES] {
    let mut key = [0u8; KEY_BYTES];
    for (slot, v) in key.chunks_exact_mut(8).zip(input.0) {
        slot.copy_from_slice(&round_significant(v, digits).to_le_bytes());
    }
    key
}

/// The stand-in for the real chemistry solver: a fixed smooth map from the
/// 10 inputs to 13 outputs, plus an artificial busy-spin to emulate cost.
/// Inputs are squashed through x/(1+|x|) first, so every finite input yields
/// 13 finite outputs.
pub fn expensive_kernel(input: &CellInput, cost: Duration) -> CellResult {
    let squash = |v: f64| v / (1.0 + v.abs());
    let mut u = [0f64; 9];
    for (ui, &c) in u.iter_mut().zip(input.concentrations()) {
        *ui = squash(c);
    }
    let t = squash(input.time_step());
    let mean: f64 = u.iter().sum::<f64>() / 9.0;
    let mean_sq: f64 = u.iter().map(|v| v * v).sum::<f64>() / 9.0;

    let mut out = [0f64; 13];
    for (j, slot) in out.iter_mut().take(9).enumerate() {
        *slot = u[j] * (-t * (j + 1) as f64 / 9.0).exp();
    }
    out[9] = mean;
    out[10] = (-mean).exp();
    out[11] = t;
    out[12] = mean_sq;

    if !cost.is_zero() {
        let start = Instant::now();
        while start.elapsed() < cost {
            std::hint::spin_loop();
        }
    }
    CellResult(out)
}

/// Look the rounded inputs up in the table; on a miss run the kernel and
/// store its exact (unrounded) result. Returns the result and whether it
/// came from the table.
pub fn cached_simulate(
    dht: &mut DhtHandle,
    input: &CellInput,
    digits: u32,
    cost: Duration,
) -> Result<(CellResult, bool), HarnessError> {
    if !input.is_valid() {
        return Err(HarnessError::Config(
            "cell inputs must be finite with non-negative concentrations".into(),
        ));
    }
    let key = make_key(input, digits);
    if let Some(stored) = dht.read(&key)? {
        let result = CellResult::from_bytes(&stored)
            .ok_or_else(|| HarnessError::Config("stored cell result has a foreign size".into()))?;
        return Ok((result, true));
    }
    let result = expensive_kernel(input, cost);
    dht.write(&key, &result.to_bytes())?;
    Ok((result, false))
}

/// Demo configuration. The advection constants (velocity 1, dx 1, dt 0.5)
/// are fixed at a CFL number of 0.5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoParams {
    pub protocol: Protocol,
    pub buckets: u64,
    pub grid_width: usize,
    pub steps: usize,
    pub digits: u32,
    pub kernel_cost: Duration,
    /// Run the kernel through the cache; false measures the uncached
    /// baseline over the identical trajectory.
    pub cached: bool,
    /// Concentration held at the left boundary; values above the initial
    /// profile drive a front across the grid.
    pub inject: f64,
    /// Range of the initial profile: cell i starts at
    /// `DEMO_INITIAL_BASE + initial_spread * i / width`, giving every cell
    /// its own starting key. Zero makes the grid uniform.
    pub initial_spread: f64,
}

pub const DEMO_TIME_STEP: f64 = 0.5;
/// Left edge of the initial concentration profile.
pub const DEMO_INITIAL_BASE: f64 = 0.2;
const COURANT: f64 = 0.5;
/// Constant background concentrations of the non-advected species.
const SPECIES_BACKGROUND: [f64; 8] = [0.0125, 0.025, 0.0375, 0.05, 0.0625, 0.075, 0.0875, 0.1];

/// Halo cell (8 bytes) plus the per-step hit/miss pair (16 bytes).
const DEMO_AUX_BYTES: usize = 24;

impl DemoParams {
    pub fn dht_config(&self) -> DhtConfig {
        DhtConfig {
            protocol: self.protocol,
            key_size: KEY_BYTES,
            value_size: VALUE_BYTES,
            buckets: self.buckets,
        }
    }

    /// Window layout the demo needs: the table plus halo and counter slots.
    pub fn window_layout(&self) -> WindowLayout {
        WindowLayout::new(&self.dht_config(), DEMO_AUX_BYTES)
    }

    fn validate(&self, participants: usize) -> Result<(), HarnessError> {
        if self.grid_width < participants {
            return Err(HarnessError::Config(format!(
                "grid width {} cannot cover {participants} participants",
                self.grid_width
            )));
        }
        if self.steps == 0 {
            return Err(HarnessError::Config("step count must be at least 1".into()));
        }
        if !(1..=15).contains(&self.digits) {
            return Err(HarnessError::Config(format!(
                "significant digits {} outside 1..=15",
                self.digits
            )));
        }
        if !self.inject.is_finite() || self.inject < 0.0 {
            return Err(HarnessError::Config("injection must be finite and non-negative".into()));
        }
        if !self.initial_spread.is_finite() || self.initial_spread < 0.0 {
            return Err(HarnessError::Config(
                "initial spread must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepStat {
    pub step: usize,
    pub hits: u64,
    pub misses: u64,
}

impl StepStat {
    pub fn hit_rate(&self) -> f64 {
        self.hits as f64 / (self.hits + self.misses).max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSummary {
    pub protocol: Protocol,
    pub participants: usize,
    pub grid_width: usize,
    pub steps: usize,
    pub digits: u32,
    pub cached: bool,
    /// Times the expensive kernel actually ran (equals cell visits when
    /// uncached).
    pub kernel_calls: u64,
    pub hits: u64,
    pub wall_seconds: f64,
    pub per_step: Vec<StepStat>,
}

impl DemoSummary {
    pub fn hit_rate(&self) -> f64 {
        self.hits as f64 / (self.hits + self.kernel_calls).max(1) as f64
    }
}

/// Per-step CSV: step,hits,misses,hit_rate.
pub fn emit_demo_csv<W: Write>(summary: &DemoSummary, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "hits", "misses", "hit_rate"])?;
    for s in &summary.per_step {
        w.write_record([
            s.step.to_string(),
            s.hits.to_string(),
            s.misses.to_string(),
            format!("{:.6}", s.hit_rate()),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Contiguous slice of the grid owned by `rank`.
fn partition(width: usize, participants: usize, rank: usize) -> (usize, usize) {
    let base = width / participants;
    let rem = width % participants;
    let len = base + usize::from(rank < rem);
    let start = rank * base + rank.min(rem);
    (start, len)
}

/// Run the demo loop. Collective; every participant of the universe calls
/// this with identical parameters. Participant 0 returns the summary.
pub fn run_demo(rma: &RmaHandle, params: &DemoParams) -> Result<Option<DemoSummary>, HarnessError> {
    let participants = rma.participants();
    let rank = rma.rank();
    params.validate(participants)?;
    let layout = params.window_layout();
    if layout.window_size > rma.window_size() {
        return Err(HarnessError::Config(format!(
            "window size {} below the {} bytes the demo needs",
            rma.window_size(),
            layout.window_size
        )));
    }
    let halo_offset = layout.aux_offset;
    let stats_offset = layout.aux_offset + 8;

    let mut dht = if params.cached {
        Some(DhtHandle::create(rma.clone(), params.dht_config())?)
    } else {
        None
    };

    let (start, len) = partition(params.grid_width, participants, rank);
    let mut field: Vec<f64> = (0..len)
        .map(|i| {
            DEMO_INITIAL_BASE
                + params.initial_spread * (start + i) as f64 / params.grid_width as f64
        })
        .collect();
    let mut next = vec![0f64; len];
    let mut per_step = Vec::new();
    let mut total_hits = 0u64;
    let mut total_misses = 0u64;

    rma.barrier()?;
    let t0 = Instant::now();
    for step in 0..params.steps {
        // Push the rightmost cell into the right neighbour's halo slot,
        // then advect off last step's state.
        if rank + 1 < participants {
            rma.put(rank + 1, halo_offset, &field[len - 1].to_le_bytes())?;
        }
        rma.barrier()?;
        let left_halo = if rank == 0 {
            params.inject
        } else {
            let mut buf = [0u8; 8];
            rma.get(rank, halo_offset, &mut buf)?;
            f64::from_le_bytes(buf)
        };
        for i in 0..len {
            let left = if i == 0 { left_halo } else { field[i - 1] };
            next[i] = field[i] - COURANT * (field[i] - left);
        }
        if start == 0 {
            next[0] = params.inject;
        }
        std::mem::swap(&mut field, &mut next);

        // Simulate every owned cell off the fresh state.
        let mut hits = 0u64;
        let mut misses = 0u64;
        let mut species = [0f64; 10];
        species[1..9].copy_from_slice(&SPECIES_BACKGROUND);
        species[9] = DEMO_TIME_STEP;
        for &cell in &field {
            species[0] = cell;
            let input = CellInput(species);
            match dht.as_mut() {
                Some(table) => {
                    let (_, hit) =
                        cached_simulate(table, &input, params.digits, params.kernel_cost)?;
                    if hit {
                        hits += 1;
                    } else {
                        misses += 1;
                    }
                }
                None => {
                    expensive_kernel(&input, params.kernel_cost);
                    misses += 1;
                }
            }
        }

        // Publish this step's counts and fold them on participant 0.
        let mut counters = [0u8; 16];
        counters[..8].copy_from_slice(&hits.to_le_bytes());
        counters[8..].copy_from_slice(&misses.to_le_bytes());
        rma.put(rank, stats_offset, &counters)?;
        rma.barrier()?;
        if rank == 0 {
            let mut step_hits = 0u64;
            let mut step_misses = 0u64;
            let mut buf = [0u8; 16];
            for r in 0..participants {
                rma.get(r, stats_offset, &mut buf)?;
                step_hits += u64::from_le_bytes(buf[..8].try_into().unwrap());
                step_misses += u64::from_le_bytes(buf[8..].try_into().unwrap());
            }
            total_hits += step_hits;
            total_misses += step_misses;
            per_step.push(StepStat { step, hits: step_hits, misses: step_misses });
        }
    }
    let wall_seconds = t0.elapsed().as_secs_f64();

    if let Some(table) = dht.as_mut() {
        table.free()?;
    }
    if rank != 0 {
        return Ok(None);
    }
    Ok(Some(DemoSummary {
        protocol: params.protocol,
        participants,
        grid_width: params.grid_width,
        steps: params.steps,
        digits: params.digits,
        cached: params.cached,
        kernel_calls: total_misses,
        hits: total_hits,
        wall_seconds,
        per_step,
    }))
}

/// Exact-kernel reference for cached results: remembers the first input seen
/// per key and checks every cached answer against that input's kernel value.
/// Test helper; single-participant use.
pub fn transparency_reference(
    digits: u32,
) -> impl FnMut(&CellInput, &CellResult) -> bool {
    let mut first_inputs: HashMap<[u8; KEY_BYTES], CellInput> = HashMap::new();
    move |input, result| {
        let key = make_key(input, digits);
        let class_input = *first_inputs.entry(key).or_insert(*input);
        expensive_kernel(&class_input, Duration::ZERO) == *result
    }
}
