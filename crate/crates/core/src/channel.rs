//! Indoor propagation: log-distance path loss, log-normal shadowing and a
//! Rician tapped-delay-line multipath channel, plus composition with the
//! surface response into the injected channel `SH`.
//!
//! Realizations are normalized to unit expected power; the large-scale
//! terms (path loss, walls, shadowing) are carried separately as a scalar
//! so the received power splits exactly into its dB components.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metasurface::{check_grid, FrequencyResponse, SPEED_OF_LIGHT};

/// Positions, obstructions and the moving-object population of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGeometry {
    pub tx_position: [f64; 2],
    pub rx_position: [f64; 2],
    /// Transmitter orientation in degrees.
    #[serde(default)]
    pub orientation: f64,
    #[serde(default)]
    pub wall_attenuations: Vec<f64>,
    #[serde(default)]
    pub moving_objects: u32,
    #[serde(default = "default_object_width")]
    pub object_width: f64,
    #[serde(default = "default_absorb")]
    pub absorb_factor: Complex64,
    #[serde(default = "default_r_min")]
    pub r_min: f64,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    /// K factor reported when there are no moving objects at all.
    #[serde(default = "default_los_cap")]
    pub los_k_cap: f64,
}

fn default_object_width() -> f64 {
    0.4
}
fn default_absorb() -> Complex64 {
    Complex64::new(0.5, 0.0)
}
fn default_r_min() -> f64 {
    0.5
}
fn default_r_max() -> f64 {
    6.0
}
fn default_los_cap() -> f64 {
    1.0e3
}

impl ScenarioGeometry {
    /// Free-space pair at `distance` metres along the x axis.
    pub fn at_distance(distance: f64) -> Self {
        Self {
            tx_position: [0.0, 0.0],
            rx_position: [distance, 0.0],
            orientation: 0.0,
            wall_attenuations: Vec::new(),
            moving_objects: 0,
            object_width: default_object_width(),
            absorb_factor: default_absorb(),
            r_min: default_r_min(),
            r_max: default_r_max(),
            los_k_cap: default_los_cap(),
        }
    }

    pub fn distance(&self) -> f64 {
        distance(self.tx_position, self.rx_position)
    }

    pub fn validate(&self) -> Result<()> {
        if self.distance() == 0.0 {
            return Err(Error::config("transmitter and receiver positions coincide"));
        }
        if !(self.r_max > self.r_min && self.r_min > 0.0) {
            return Err(Error::config("scenario needs r_max > r_min > 0"));
        }
        if self.wall_attenuations.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::config("wall attenuations must be finite and non-negative"));
        }
        Ok(())
    }
}

pub(crate) fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Large- and small-scale channel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub path_loss_exponent: f64,
    /// Loss at the 1 m reference distance, dB.
    pub reference_loss: f64,
    pub shadowing_sigma: f64,
    pub k_rician: f64,
    pub tap_count: usize,
    /// Latest diffuse arrival, seconds.
    pub max_delay_spread: f64,
    pub noise_power: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            path_loss_exponent: 2.0,
            reference_loss: 40.0,
            shadowing_sigma: 3.0,
            k_rician: 5.0,
            tap_count: 8,
            max_delay_spread: 150e-9,
            noise_power: 1e-12,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.path_loss_exponent >= 1.0) {
            return Err(Error::config("path-loss exponent must be at least 1"));
        }
        if !(self.shadowing_sigma >= 0.0) {
            return Err(Error::config("shadowing sigma must be non-negative"));
        }
        if !(self.k_rician >= 0.0) {
            return Err(Error::config("Rician K must be non-negative"));
        }
        if self.tap_count == 0 {
            return Err(Error::config("channel needs at least one tap"));
        }
        if !(self.max_delay_spread >= 0.0) || !(self.noise_power >= 0.0) {
            return Err(Error::config("delay spread and noise power must be non-negative"));
        }
        Ok(())
    }
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub amplitude: f64,
    pub phase: f64,
    pub delay: f64,
    /// Departure direction at the transmitter, radians.
    #[serde(default)]
    pub departure_angle: f64,
    /// Arrival direction at the receiver, radians.
    #[serde(default)]
    pub arrival_angle: f64,
}

/// Tapped delay line; tap 0 is the direct path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub taps: Vec<Tap>,
}

impl ChannelRealization {
    /// A single unit, zero-delay tap: the identity channel.
    pub fn identity() -> Self {
        Self {
            taps: vec![Tap {
                amplitude: 1.0,
                phase: 0.0,
                delay: 0.0,
                departure_angle: 0.0,
                arrival_angle: 0.0,
            }],
        }
    }

    pub fn direct(&self) -> &Tap {
        &self.taps[0]
    }

    pub fn total_power(&self) -> f64 {
        self.taps.iter().map(|t| t.amplitude * t.amplitude).sum()
    }

    pub fn diffuse_power(&self) -> f64 {
        self.taps[1..].iter().map(|t| t.amplitude * t.amplitude).sum()
    }

    /// The same scatterer set seen after moving the transmitter by `dtx` and
    /// the receiver by `drx` (metres). Diffuse paths shift in the plane-wave
    /// approximation; the direct path is recomputed from `new_distance`.
    pub fn translated(&self, dtx: [f64; 2], drx: [f64; 2], new_distance: f64) -> Self {
        let mut taps = self.taps.clone();
        taps[0].delay = new_distance / SPEED_OF_LIGHT;
        for tap in taps.iter_mut().skip(1) {
            let dep = [tap.departure_angle.cos(), tap.departure_angle.sin()];
            let arr = [tap.arrival_angle.cos(), tap.arrival_angle.sin()];
            // Moving towards a scatterer shortens its path.
            let delta = -(dtx[0] * dep[0] + dtx[1] * dep[1]) - (drx[0] * arr[0] + drx[1] * arr[1]);
            tap.delay = (tap.delay + delta / SPEED_OF_LIGHT).max(taps_direct_delay(new_distance));
        }
        sort_diffuse(&mut taps);
        Self { taps }
    }

    /// Transmitter rotated by `orientation` degrees.
    ///
    /// The antenna phase centre sits [`PHASE_CENTRE_OFFSET`] from the rotation
    /// axis, so every path delay shifts with the projection of that offset on
    /// the path's departure direction, and each path is weighted by the
    /// antenna pattern towards its departure direction.
    pub fn oriented(&self, orientation: f64) -> Self {
        let theta = orientation.to_radians();
        let mut taps = self.taps.clone();
        for tap in &mut taps {
            let before = PHASE_CENTRE_OFFSET * tap.departure_angle.cos();
            let after = PHASE_CENTRE_OFFSET * (tap.departure_angle - theta).cos();
            tap.delay = (tap.delay + (before - after) / SPEED_OF_LIGHT).max(0.0);
            let gain_db = antenna_pattern_db(tap.departure_angle - theta)
                - antenna_pattern_db(tap.departure_angle);
            tap.amplitude *= 10f64.powf(gain_db / 20.0);
        }
        sort_diffuse(&mut taps);
        Self { taps }
    }
}

fn taps_direct_delay(distance: f64) -> f64 {
    distance / SPEED_OF_LIGHT
}

fn sort_diffuse(taps: &mut [Tap]) {
    if taps.len() > 1 {
        taps[1..].sort_by(|a, b| a.delay.total_cmp(&b.delay));
    }
}

/// Distance from the rotation axis to the antenna phase centre, metres.
pub const PHASE_CENTRE_OFFSET: f64 = 0.03;

/// Antenna gain (dB) every 30° of departure angle, starting at 0°.
pub const ANTENNA_PATTERN_DB: [f64; 12] =
    [0.0, -0.5, -1.5, -2.0, -1.5, -0.5, 0.0, -0.5, -1.5, -2.0, -1.5, -0.5];

/// Linear interpolation of [`ANTENNA_PATTERN_DB`].
pub fn antenna_pattern_db(angle: f64) -> f64 {
    let deg = angle.to_degrees().rem_euclid(360.0);
    let pos = deg / 30.0;
    let i = pos.floor() as usize % 12;
    let frac = pos - pos.floor();
    ANTENNA_PATTERN_DB[i] * (1.0 - frac) + ANTENNA_PATTERN_DB[(i + 1) % 12] * frac
}

/// Log-distance path gain with per-wall attenuation, as a linear power ratio.
///
/// Capped at 1 inside the reference near zone, where the far-field law no
/// longer applies.
pub fn path_loss_gain(geometry: &ScenarioGeometry, params: &ChannelParams) -> Result<f64> {
    let d = geometry.distance();
    if !(d > 0.0) {
        return Err(Error::domain("path loss needs a positive distance"));
    }
    Ok(10f64.powf(path_gain_db(d, geometry, params) / 10.0).min(1.0))
}

fn path_gain_db(d: f64, geometry: &ScenarioGeometry, params: &ChannelParams) -> f64 {
    let walls: f64 = geometry.wall_attenuations.iter().sum();
    -params.reference_loss - 10.0 * params.path_loss_exponent * d.log10() - walls
}

/// One zero-mean Gaussian shadowing draw in dB.
pub fn shadowing_sample<R: Rng + ?Sized>(sigma_db: f64, rng: &mut R) -> Result<f64> {
    if !(sigma_db >= 0.0) {
        return Err(Error::domain("shadowing sigma must be non-negative"));
    }
    if sigma_db == 0.0 {
        return Ok(0.0);
    }
    let normal = Normal::new(0.0, sigma_db).map_err(|e| Error::domain(e.to_string()))?;
    Ok(normal.sample(rng))
}

/// `e^{-z} I0(z)` for `z >= 0`.
pub fn bessel_i0_scaled(z: f64) -> f64 {
    if z <= 30.0 {
        let q = z * z / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            k += 1.0;
        }
        sum * (-z).exp()
    } else {
        // Hankel asymptotic expansion; six terms are exact to f64 precision past z = 30.
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..6 {
            let odd = (2 * k - 1) as f64;
            term *= odd * odd / (k as f64 * 8.0 * z);
            sum += term;
        }
        sum / (2.0 * PI * z).sqrt()
    }
}

/// Density of the unit-mean Rician power `x` for K factor `k_r`:
/// `(1+K) e^{-K-(1+K)x} I0(2 √(x K (K+1)))`.
pub fn rician_envelope_pdf(x: f64, k_r: f64) -> Result<f64> {
    if !(x >= 0.0) || !(k_r >= 0.0) {
        return Err(Error::domain("Rician density needs x >= 0 and K >= 0"));
    }
    let z = 2.0 * (x * k_r * (k_r + 1.0)).sqrt();
    Ok((1.0 + k_r) * (-k_r - (1.0 + k_r) * x + z).exp() * bessel_i0_scaled(z))
}

/// Distribution function of the same law, via its Poisson mixture of
/// Gamma(j+1) variables (a noncentral chi-square with two degrees of freedom).
pub fn rician_power_cdf(x: f64, k_r: f64) -> Result<f64> {
    if !(x >= 0.0) || !(k_r >= 0.0) {
        return Err(Error::domain("Rician distribution needs x >= 0 and K >= 0"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let t = (1.0 + k_r) * x;
    let ln_t = t.ln();
    let terms = (k_r + 12.0 * k_r.sqrt() + 40.0).ceil() as usize;
    let mut cdf = 0.0;
    // upper = P(Gamma(j+1) > t) = e^{-t} Σ_{i<=j} t^i / i!
    let mut upper = 0.0;
    let mut ln_fact = 0.0;
    for j in 0..=terms {
        if j > 0 {
            ln_fact += (j as f64).ln();
        }
        upper += (-t + j as f64 * ln_t - ln_fact).exp();
        let ln_pois = if k_r == 0.0 {
            if j == 0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            -k_r + j as f64 * k_r.ln() - ln_fact
        };
        cdf += ln_pois.exp() * (1.0 - upper.min(1.0));
    }
    Ok(cdf.clamp(0.0, 1.0))
}

/// K factor of a region with `moving_objects` absorbers (uniformly spread
/// between `r_min` and `r_max`):
/// `K = (p_d / p_m) π (r_max + r_min) / (N |ζ|² δw)`.
///
/// With no moving objects the configured line-of-sight cap is returned.
pub fn rician_k_from_objects(
    direct_power: f64,
    path_power: f64,
    geometry: &ScenarioGeometry,
) -> Result<f64> {
    if !(path_power > 0.0) || !(direct_power >= 0.0) {
        return Err(Error::domain("powers must be positive"));
    }
    if geometry.moving_objects == 0 {
        return Ok(geometry.los_k_cap);
    }
    let absorb = geometry.absorb_factor.norm_sqr();
    if !(absorb > 0.0) || !(geometry.object_width > 0.0) {
        return Err(Error::domain("absorb factor and object width must be positive"));
    }
    Ok(direct_power / path_power * PI * (geometry.r_max + geometry.r_min)
        / (geometry.moving_objects as f64 * absorb * geometry.object_width))
}

/// Draw a unit-power Rician tapped delay line.
///
/// Tap 0 carries `K/(K+1)` of the power at the geometric delay with zero
/// phase; the remaining `tap_count - 1` taps share `1/(K+1)` as independent
/// Rayleigh amplitudes with uniform phases, delays uniform between the direct
/// delay and `max_delay_spread`, and uniform departure/arrival angles.
pub fn realize_channel<R: Rng + ?Sized>(
    geometry: &ScenarioGeometry,
    params: &ChannelParams,
    rng: &mut R,
) -> ChannelRealization {
    let direct_delay = geometry.distance() / SPEED_OF_LIGHT;
    let diffuse_count = params.tap_count.saturating_sub(1);
    let k = params.k_rician;
    let direct_power = if diffuse_count == 0 || k.is_infinite() {
        1.0
    } else {
        k / (k + 1.0)
    };
    let mut taps = Vec::with_capacity(params.tap_count);
    taps.push(Tap {
        amplitude: direct_power.sqrt(),
        phase: 0.0,
        delay: direct_delay,
        departure_angle: 0.0,
        arrival_angle: PI,
    });
    if diffuse_count > 0 {
        let per_tap = (1.0 - direct_power) / diffuse_count as f64;
        let latest = params.max_delay_spread.max(direct_delay);
        for _ in 0..diffuse_count {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let amplitude = (per_tap / 2.0).sqrt() * (re * re + im * im).sqrt();
            let phase = rng.random_range(0.0..2.0 * PI);
            let delay = if latest > direct_delay {
                rng.random_range(direct_delay..latest)
            } else {
                direct_delay
            };
            taps.push(Tap {
                amplitude,
                phase,
                delay,
                departure_angle: rng.random_range(0.0..2.0 * PI),
                arrival_angle: rng.random_range(0.0..2.0 * PI),
            });
        }
    }
    sort_diffuse(&mut taps);
    ChannelRealization { taps }
}

/// Redraw only the diffuse taps' complex gains, keeping delays and angles.
pub fn redraw_diffuse<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    k_rician: f64,
    rng: &mut R,
) -> ChannelRealization {
    let mut taps = realization.taps.clone();
    let diffuse_count = taps.len().saturating_sub(1);
    if diffuse_count == 0 {
        return ChannelRealization { taps };
    }
    let per_tap = 1.0 / (k_rician + 1.0) / diffuse_count as f64;
    for tap in taps.iter_mut().skip(1) {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        tap.amplitude = (per_tap / 2.0).sqrt() * (re * re + im * im).sqrt();
        tap.phase = rng.random_range(0.0..2.0 * PI);
    }
    ChannelRealization { taps }
}

/// `H(f) = Σ_m α_m e^{j(θ_m - 2π f τ_m)}` on the grid.
pub fn frequency_response(
    realization: &ChannelRealization,
    grid: &[f64],
) -> Result<FrequencyResponse> {
    check_grid(grid)?;
    let values = grid
        .iter()
        .map(|&f| {
            realization
                .taps
                .iter()
                .map(|t| Complex64::from_polar(t.amplitude, t.phase - 2.0 * PI * f * t.delay))
                .sum()
        })
        .collect();
    FrequencyResponse::new(grid.to_vec(), values)
}

/// Per-subcarrier product `SH_j = S_j H_j`.
pub fn injected_response(
    surface: &FrequencyResponse,
    channel: &FrequencyResponse,
) -> Result<FrequencyResponse> {
    if !surface.same_grid(channel) {
        return Err(Error::config("surface and channel responses use different grids"));
    }
    let values = surface
        .values()
        .iter()
        .zip(channel.values())
        .map(|(s, h)| s * h)
        .collect();
    FrequencyResponse::new(surface.frequencies().to_vec(), values)
}

/// How far the injected signature gain sits above the expected multipath power, dB.
pub fn signature_margin_db(surface_gain_db: f64, expected_multipath_db: f64) -> f64 {
    surface_gain_db - expected_multipath_db
}

/// Peak power gain of a surface response over its grid, dB.
pub fn surface_gain_db(surface: &FrequencyResponse) -> f64 {
    let peak = surface
        .values()
        .iter()
        .map(|v| v.norm_sqr())
        .fold(0.0, f64::max);
    10.0 * peak.log10()
}

/// Received power split into its multiplicative components, each in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub path_loss_db: f64,
    pub shadowing_db: f64,
    pub multipath_db: f64,
    pub signature_db: f64,
}

impl PowerBreakdown {
    pub fn total_db(&self) -> f64 {
        self.path_loss_db + self.shadowing_db + self.multipath_db + self.signature_db
    }
}

/// A frozen link: large-scale gain, shadowing draw and multipath realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub geometry: ScenarioGeometry,
    pub params: ChannelParams,
    pub shadowing_db: f64,
    pub realization: ChannelRealization,
}

impl Link {
    /// Draw shadowing then multipath from `rng`, and apply the orientation.
    pub fn realize<R: Rng + ?Sized>(
        geometry: &ScenarioGeometry,
        params: &ChannelParams,
        rng: &mut R,
    ) -> Result<Self> {
        geometry.validate()?;
        params.validate()?;
        let shadowing_db = shadowing_sample(params.shadowing_sigma, rng)?;
        let realization = realize_channel(geometry, params, rng).oriented(geometry.orientation);
        Ok(Self {
            geometry: geometry.clone(),
            params: params.clone(),
            shadowing_db,
            realization,
        })
    }

    pub fn path_gain(&self) -> Result<f64> {
        path_loss_gain(&self.geometry, &self.params)
    }

    /// Linear power gain of path loss, walls and shadowing together.
    pub fn large_scale_gain(&self) -> Result<f64> {
        Ok(self.path_gain()? * 10f64.powf(self.shadowing_db / 10.0))
    }

    /// Small-scale response without the large-scale scalar.
    pub fn multipath_response(&self, grid: &[f64]) -> Result<FrequencyResponse> {
        frequency_response(&self.realization, grid)
    }

    /// Full channel response including the large-scale amplitude.
    pub fn response(&self, grid: &[f64]) -> Result<FrequencyResponse> {
        let amp = self.large_scale_gain()?.sqrt();
        Ok(self.multipath_response(grid)?.scaled(Complex64::new(amp, 0.0)))
    }

    /// The same environment seen from moved endpoints.
    pub fn moved(&self, tx: [f64; 2], rx: [f64; 2]) -> Self {
        let dtx = [tx[0] - self.geometry.tx_position[0], tx[1] - self.geometry.tx_position[1]];
        let drx = [rx[0] - self.geometry.rx_position[0], rx[1] - self.geometry.rx_position[1]];
        let mut geometry = self.geometry.clone();
        geometry.tx_position = tx;
        geometry.rx_position = rx;
        let realization = self.realization.translated(dtx, drx, distance(tx, rx));
        Self {
            geometry,
            params: self.params.clone(),
            shadowing_db: self.shadowing_db,
            realization,
        }
    }

    /// dB decomposition of the received power of `surface` through this link.
    pub fn power_breakdown(&self, surface: &FrequencyResponse) -> Result<PowerBreakdown> {
        let h = self.multipath_response(surface.frequencies())?;
        let sh = injected_response(surface, &h)?;
        let multipath = h.mean_power();
        Ok(PowerBreakdown {
            path_loss_db: 10.0 * self.path_gain()?.log10(),
            shadowing_db: self.shadowing_db,
            multipath_db: 10.0 * multipath.log10(),
            signature_db: 10.0 * (sh.mean_power() / multipath).log10(),
        })
    }
}
