//! Varactor-tuned reflecting surface.
//!
//! Every unit cell is an LC resonator whose capacitance is set by a reverse
//! bias. The surface reflection is a unit baseline plus one complex
//! Lorentzian per cell:
//!
//! ```text
//! S(f) = e^{-j2πfτ_b} + Σ_n g_n (j f f_n / Q_n) / ((f_n² - f²) + j f f_n / Q_n) · e^{-j2πfτ_n}
//! ```
//!
//! Each term is a second-order band-pass: it equals `g_n` at resonance, so a
//! resonating cell adds in phase with the baseline (up to its path delay).
//!
//! The cell bias is `cv + sv[n]`: the common voltage picks the operating band,
//! the per-cell vector carries the signature.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_bigint::BigUint;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rounded speed of light used throughout the simulator, m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Voltage-to-capacitance law of a reverse-biased varactor.
///
/// Abrupt-junction shape `(1 + V/φ)^-γ`, affinely rescaled so the curve
/// passes exactly through `c_max` at 0 V and `c_min` at `v_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaractorModel {
    pub c_max: f64,
    pub c_min: f64,
    pub v_max: f64,
    pub junction_potential: f64,
    pub grading_exponent: f64,
}

impl Default for VaractorModel {
    fn default() -> Self {
        Self {
            c_max: 0.60e-12,
            c_min: 0.40e-12,
            v_max: 30.0,
            junction_potential: 0.7,
            grading_exponent: 0.5,
        }
    }
}

impl VaractorModel {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.c_max,
            self.c_min,
            self.v_max,
            self.junction_potential,
            self.grading_exponent,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("varactor constants must be finite"));
        }
        if !(self.c_max > self.c_min && self.c_min > 0.0) {
            return Err(Error::config("varactor needs c_max > c_min > 0"));
        }
        if self.v_max <= 0.0 {
            return Err(Error::config("varactor v_max must be positive"));
        }
        if self.junction_potential <= 0.0 || self.grading_exponent <= 0.0 {
            return Err(Error::config(
                "junction potential and grading exponent must be positive",
            ));
        }
        Ok(())
    }

    fn shape(&self, bias: f64) -> f64 {
        (1.0 + bias / self.junction_potential).powf(-self.grading_exponent)
    }

    /// Capacitance in farads at the given reverse bias.
    pub fn capacitance(&self, bias: f64) -> Result<f64> {
        if !(0.0..=self.v_max).contains(&bias) {
            return Err(Error::domain(format!(
                "bias {bias} V outside [0, {}] V",
                self.v_max
            )));
        }
        let top = self.shape(0.0);
        let bottom = self.shape(self.v_max);
        let t = (self.shape(bias) - bottom) / (top - bottom);
        let c = self.c_min + (self.c_max - self.c_min) * t;
        Ok(c.clamp(self.c_min, self.c_max))
    }
}

/// Free-function form of [`VaractorModel::capacitance`].
pub fn varactor_capacitance(model: &VaractorModel, bias: f64) -> Result<f64> {
    model.capacitance(bias)
}

/// One resonant element of the surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitCell {
    pub inductance: f64,
    pub varactor: VaractorModel,
    pub quality_factor: f64,
    pub coupling_gain: f64,
    pub path_delay: f64,
}

impl UnitCell {
    pub fn validate(&self) -> Result<()> {
        self.varactor.validate()?;
        if !(self.inductance > 0.0 && self.inductance.is_finite()) {
            return Err(Error::config("cell inductance must be positive"));
        }
        if !(self.quality_factor > 0.0 && self.quality_factor.is_finite()) {
            return Err(Error::config("cell quality factor must be positive"));
        }
        if !(self.coupling_gain >= 0.0 && self.coupling_gain.is_finite()) {
            return Err(Error::config("cell coupling gain must be non-negative"));
        }
        if !(self.path_delay >= 0.0 && self.path_delay.is_finite()) {
            return Err(Error::config("cell path delay must be non-negative"));
        }
        Ok(())
    }

    pub fn resonance(&self, capacitance: f64) -> Result<f64> {
        unit_cell_resonance(self, capacitance)
    }

    /// Resonant frequency at the given bias voltage.
    pub fn resonance_at_bias(&self, bias: f64) -> Result<f64> {
        self.resonance(self.varactor.capacitance(bias)?)
    }

    /// This cell's additive contribution at frequency `f` when resonating at `f_res`.
    pub fn contribution(&self, f: f64, f_res: f64) -> Complex64 {
        let damping = f * f_res / self.quality_factor;
        let lorentz = self.coupling_gain * Complex64::new(0.0, damping)
            / Complex64::new(f_res * f_res - f * f, damping);
        lorentz * Complex64::from_polar(1.0, -2.0 * PI * f * self.path_delay)
    }
}

/// LC resonance `1 / (2π √(L C))`.
pub fn unit_cell_resonance(cell: &UnitCell, capacitance: f64) -> Result<f64> {
    if !(capacitance > 0.0) || !capacitance.is_finite() {
        return Err(Error::domain(format!(
            "capacitance must be positive, got {capacitance}"
        )));
    }
    Ok(1.0 / (2.0 * PI * (cell.inductance * capacitance).sqrt()))
}

/// Channel-select voltage plus per-cell signature voltages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlCode {
    pub cv: f64,
    pub sv: Vec<f64>,
}

impl ControlCode {
    pub fn new(cv: f64, sv: Vec<f64>) -> Self {
        Self { cv, sv }
    }

    /// All-zero signature vector at the given channel-select voltage.
    pub fn idle(cv: f64, cells: usize) -> Self {
        Self {
            cv,
            sv: vec![0.0; cells],
        }
    }

    pub fn validate(&self, cells: usize, v_max: f64) -> Result<()> {
        if self.sv.len() != cells {
            return Err(Error::config(format!(
                "control code has {} signature voltages, surface has {} cells",
                self.sv.len(),
                cells
            )));
        }
        if !(0.0..=v_max).contains(&self.cv) {
            return Err(Error::domain(format!("cv {} V outside [0, {v_max}] V", self.cv)));
        }
        if let Some(bad) = self.sv.iter().find(|v| !(0.0..=v_max).contains(*v)) {
            return Err(Error::domain(format!("sv {bad} V outside [0, {v_max}] V")));
        }
        Ok(())
    }
}

/// Complex samples over a strictly increasing frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponse {
    frequencies: Vec<f64>,
    values: Vec<Complex64>,
}

impl FrequencyResponse {
    pub fn new(frequencies: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if frequencies.len() != values.len() {
            return Err(Error::config(format!(
                "grid has {} points but {} values",
                frequencies.len(),
                values.len()
            )));
        }
        check_grid(&frequencies)?;
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::numeric("frequency response contains non-finite values"));
        }
        Ok(Self {
            frequencies,
            values,
        })
    }

    /// Constant response over the grid.
    pub fn constant(frequencies: Vec<f64>, value: Complex64) -> Result<Self> {
        let values = vec![value; frequencies.len()];
        Self::new(frequencies, values)
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn mean_power(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.len() as f64
    }

    pub fn same_grid(&self, other: &FrequencyResponse) -> bool {
        self.frequencies == other.frequencies
    }

    /// Euclidean distance between the value vectors of two responses on one grid.
    pub fn l2_distance(&self, other: &FrequencyResponse) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(Error::config("responses are sampled on different grids"));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    pub fn scaled(&self, factor: Complex64) -> FrequencyResponse {
        FrequencyResponse {
            frequencies: self.frequencies.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Grid point with the largest magnitude (first one on ties).
    pub fn peak_frequency(&self) -> f64 {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if v.norm() > self.values[best].norm() {
                best = i;
            }
        }
        self.frequencies[best]
    }

    /// `frequency,re,im` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "frequency,re,im")?;
        for (f, v) in self.frequencies.iter().zip(&self.values) {
            writeln!(out, "{f},{},{}", v.re, v.im)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(file)
    }
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::config("frequency grid is empty"));
    }
    if grid.iter().any(|f| !f.is_finite()) {
        return Err(Error::config("frequency grid contains non-finite values"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("frequency grid must be strictly increasing"));
    }
    Ok(())
}

/// Evenly spaced grid with `points` samples from `start` to `stop` inclusive.
pub fn linear_grid(start: f64, stop: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![start];
    }
    let step = (stop - start) / (points - 1) as f64;
    (0..points).map(|i| start + step * i as f64).collect()
}

/// Reflection response of `cells` driven by `code` over `grid`.
pub fn surface_response(
    cells: &[UnitCell],
    code: &ControlCode,
    grid: &[f64],
    baseline_delay: f64,
) -> Result<FrequencyResponse> {
    if cells.len() != code.sv.len() {
        return Err(Error::config(format!(
            "{} cells but {} signature voltages",
            cells.len(),
            code.sv.len()
        )));
    }
    check_grid(grid)?;
    let resonances = cells
        .iter()
        .zip(&code.sv)
        .map(|(cell, sv)| cell.resonance_at_bias(code.cv + sv))
        .collect::<Result<Vec<_>>>()?;
    let values = grid
        .iter()
        .map(|&f| {
            let baseline = Complex64::from_polar(1.0, -2.0 * PI * f * baseline_delay);
            cells
                .iter()
                .zip(&resonances)
                .fold(baseline, |acc, (cell, &f_res)| acc + cell.contribution(f, f_res))
        })
        .collect();
    FrequencyResponse::new(grid.to_vec(), values)
}

/// `floor(dynamic_range / step) ^ cells` as an exact integer.
///
/// The ratio is floored after adding 1e-9 so ratios such as 0.3/0.1 that are
/// integral in exact arithmetic are not lost to binary rounding.
pub fn signature_capacity(dynamic_range: f64, step: f64, cells: u32) -> Result<BigUint> {
    if !(dynamic_range > 0.0 && dynamic_range.is_finite()) {
        return Err(Error::domain("dynamic range must be positive"));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::domain("voltage step must be positive"));
    }
    if cells == 0 {
        return Err(Error::domain("surface needs at least one cell"));
    }
    let levels = (dynamic_range / step + 1e-9).floor();
    Ok(BigUint::from(levels as u64).pow(cells))
}

/// Quantized signature voltages: `count` levels spread over `(low, high]`.
///
/// Level `k` (1-based) sits at `low + k (high - low) / count`; the zero level
/// is skipped because a zero on every cell is the idle code and would make
/// codes on different cells coincide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignatureLevels {
    pub count: usize,
    pub low: f64,
    pub high: f64,
}

impl Default for SignatureLevels {
    fn default() -> Self {
        Self {
            count: 26,
            low: 0.0,
            high: 10.0,
        }
    }
}

impl SignatureLevels {
    pub fn step(&self) -> f64 {
        (self.high - self.low) / self.count as f64
    }

    /// Voltage of 1-based level `k`.
    pub fn voltage(&self, k: usize) -> f64 {
        self.low + self.step() * k as f64
    }

    /// Snap a voltage onto the nearest level (clamped to the level range).
    pub fn quantize(&self, v: f64) -> f64 {
        let k = ((v - self.low) / self.step()).round().clamp(1.0, self.count as f64);
        self.voltage(k as usize)
    }
}

/// Calibration block of a surface configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Channel-select voltage at which the idle surface should peak.
    pub cv: f64,
    /// Frequency the idle surface should peak at.
    pub target_frequency: f64,
    /// Half-width of the fitting sweep around the target, Hz.
    pub sweep_half_width: f64,
    /// Resolution of the fitting sweep, Hz.
    pub sweep_step: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            cv: 16.1,
            target_frequency: 2.4225e9,
            sweep_half_width: 50.0e6,
            sweep_step: 10.0e3,
        }
    }
}

impl Calibration {
    pub fn sweep_grid(&self) -> Vec<f64> {
        let points = (2.0 * self.sweep_half_width / self.sweep_step).round() as usize + 1;
        linear_grid(
            self.target_frequency - self.sweep_half_width,
            self.target_frequency + self.sweep_half_width,
            points,
        )
    }
}

/// Inductance produced by [`fit_inductance`] for the default cell set and
/// [`Calibration::default`]. A unit test re-runs the fit against this value.
pub const DEFAULT_INDUCTANCE: f64 = 1.046_982_151_4e-8;

/// A complete surface: cells, baseline delay, and the quantization used by experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub cells: Vec<UnitCell>,
    pub baseline_delay: f64,
    #[serde(default)]
    pub levels: SignatureLevels,
    #[serde(default)]
    pub calibration: Calibration,
}

impl Default for Surface {
    fn default() -> Self {
        Self::with_inductance(DEFAULT_INDUCTANCE)
    }
}

impl Surface {
    /// Default 8-cell layout with every cell sharing `inductance`.
    ///
    /// Cells differ only in reflection path delay (their position on the
    /// board) and slightly in coupling, as fabricated cells do.
    pub fn with_inductance(inductance: f64) -> Self {
        const CELLS: usize = 8;
        let cells = (0..CELLS)
            .map(|n| UnitCell {
                inductance,
                varactor: VaractorModel::default(),
                quality_factor: 200.0,
                coupling_gain: 0.5 * (1.0 + 0.06 * (n as f64 - 3.5)),
                path_delay: 0.133e-9 + 0.06e-9 * n as f64,
            })
            .collect();
        Self {
            cells,
            baseline_delay: 0.133e-9,
            levels: SignatureLevels::default(),
            calibration: Calibration::default(),
        }
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn v_max(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| c.varactor.v_max)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::config("surface has no cells"));
        }
        for cell in &self.cells {
            cell.validate()?;
        }
        if !(self.baseline_delay >= 0.0 && self.baseline_delay.is_finite()) {
            return Err(Error::config("baseline delay must be non-negative"));
        }
        if self.levels.count == 0 || !(self.levels.high > self.levels.low) {
            return Err(Error::config("signature levels need count >= 1 and high > low"));
        }
        Ok(())
    }

    pub fn response(&self, code: &ControlCode, grid: &[f64]) -> Result<FrequencyResponse> {
        code.validate(self.cell_count(), self.v_max())?;
        surface_response(&self.cells, code, grid, self.baseline_delay)
    }

    /// Response with every cell's contribution removed.
    pub fn baseline(&self, grid: &[f64]) -> Result<FrequencyResponse> {
        check_grid(grid)?;
        let values = grid
            .iter()
            .map(|&f| Complex64::from_polar(1.0, -2.0 * PI * f * self.baseline_delay))
            .collect();
        FrequencyResponse::new(grid.to_vec(), values)
    }

    /// Idle code at the calibrated channel-select voltage.
    pub fn idle_code(&self) -> ControlCode {
        ControlCode::idle(self.calibration.cv, self.cell_count())
    }

    /// Code with a single cell raised to 1-based `level`.
    pub fn single_cell_code(&self, cv: f64, cell: usize, level: usize) -> ControlCode {
        let mut code = ControlCode::idle(cv, self.cell_count());
        code.sv[cell] = self.levels.voltage(level);
        code
    }

    /// The full single-cell sweep: every cell at every level, cell-major.
    ///
    /// For 8 cells and 26 levels this is the 208-code capacity set.
    pub fn sweep_codes(&self, cv: f64) -> Vec<ControlCode> {
        (0..self.cell_count())
            .flat_map(|cell| (1..=self.levels.count).map(move |level| (cell, level)))
            .map(|(cell, level)| self.single_cell_code(cv, cell, level))
            .collect()
    }

    /// `count` single-cell codes with distinct levels where possible.
    ///
    /// Code `i` drives cell `i mod cells` at a level spread evenly over the
    /// level range, so no two codes shift the resonance by the same amount.
    /// With more codes than levels it falls back to even steps through the
    /// sweep.
    pub fn spread_codes(&self, cv: f64, count: usize) -> Vec<ControlCode> {
        let levels = self.levels.count;
        if count > levels {
            let all = self.sweep_codes(cv);
            if count >= all.len() {
                return all;
            }
            return (0..count).map(|i| all[i * all.len() / count].clone()).collect();
        }
        (0..count)
            .map(|i| {
                let level = if count == 1 { 1 } else { 1 + i * (levels - 1) / (count - 1) };
                self.single_cell_code(cv, i % self.cell_count(), level)
            })
            .collect()
    }

    /// Channel-select voltage that centres the idle resonance of cell 0 on `frequency`.
    pub fn cv_for_frequency(&self, frequency: f64) -> Result<f64> {
        let cell = &self.cells[0];
        let (mut lo, mut hi) = (0.0, self.v_max());
        let f_lo = cell.resonance_at_bias(lo)?;
        let f_hi = cell.resonance_at_bias(hi)?;
        if !(f_lo..=f_hi).contains(&frequency) {
            return Err(Error::domain(format!(
                "{frequency} Hz outside the tuning range [{f_lo}, {f_hi}] Hz"
            )));
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if cell.resonance_at_bias(mid)? < frequency {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Fit the common cell inductance so the idle surface at `calibration.cv`
/// peaks (largest |S| on the sweep grid) at `calibration.target_frequency`.
///
/// The peak frequency falls monotonically with inductance, so a bisection on
/// log-inductance converges; the result is accurate to the sweep step.
pub fn fit_inductance(template: &Surface) -> Result<f64> {
    let cal = template.calibration;
    let grid = cal.sweep_grid();
    let peak_at = |inductance: f64| -> Result<f64> {
        let mut surface = template.clone();
        for cell in &mut surface.cells {
            cell.inductance = inductance;
        }
        Ok(surface
            .response(&surface.idle_code(), &grid)?
            .peak_frequency())
    };
    // Start from the bare LC solution and bracket generously around it.
    let c = template.cells[0].varactor.capacitance(cal.cv)?;
    let guess = 1.0 / ((2.0 * PI * cal.target_frequency).powi(2) * c);
    let (mut lo, mut hi) = (guess.ln() - 0.02, guess.ln() + 0.02);
    if peak_at(lo.exp())? < cal.target_frequency || peak_at(hi.exp())? > cal.target_frequency {
        return Err(Error::numeric("calibration target not bracketed"));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if peak_at(mid.exp())? > cal.target_frequency {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}
