//! Runtime, energy, electricity bill and token budget accounting.
//!
//! Energy is `watts × seconds / 3.6e6` kWh per phase. Currency amounts are
//! kept as integer micro-units and only rendered to decimals at the edge.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const JOULES_PER_KWH: f64 = 3.6e6;
pub const DEFAULT_EXTRACT_WATTS: f64 = 240.0;
pub const DEFAULT_DOWNSTREAM_WATTS: f64 = 45.0;
/// USD per kWh.
pub const DEFAULT_TARIFF: f64 = 0.065;
/// USD per 1000 tokens.
pub const DEFAULT_TOKEN_PRICE: f64 = 0.002;

/// Phases drawn at extraction wattage by default.
pub const EXTRACT_PHASES: &[&str] = &["extract", "extract_train", "extract_test"];
/// Phases drawn at downstream (train/infer) wattage by default.
pub const DOWNSTREAM_PHASES: &[&str] = &["fuse", "train", "eval", "predict", "infer"];

/// Amount of money in millionths of a currency unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_micros(micros: i64) -> Self {
        Money(micros)
    }

    /// Rounds to the nearest micro-unit.
    pub fn from_amount(amount: f64) -> Self {
        Money((amount * 1e6).round() as i64)
    }

    pub fn micros(self) -> i64 {
        self.0
    }

    pub fn amount(self) -> f64 {
        self.0 as f64 / 1e6
    }

    /// Fixed `decimals` places (0..=6), rounding half away from zero.
    pub fn format(self, decimals: u32) -> String {
        assert!(decimals <= 6);
        let scale = 10i64.pow(6 - decimals);
        let mag = (self.0.unsigned_abs() as i64 + scale / 2) / scale;
        let unit = 10i64.pow(decimals);
        let sign = if self.0 < 0 && mag != 0 { "-" } else { "" };
        if decimals == 0 {
            format!("{sign}{mag}")
        } else {
            format!(
                "{sign}{}.{:0width$}",
                mag / unit,
                mag % unit,
                width = decimals as usize
            )
        }
    }

    /// At most `max_decimals` places, trailing zeros dropped.
    pub fn format_trimmed(self, max_decimals: u32) -> String {
        let s = self.format(max_decimals);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s
        }
    }
}

impl std::ops::Add for Money {
    type Output = Money;

    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}", self.format_trimmed(5))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

impl PhaseTiming {
    pub fn new(phase: impl Into<String>, seconds: f64) -> Result<Self> {
        let t = PhaseTiming {
            phase: phase.into(),
            seconds,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.seconds >= 0.0 && self.seconds.is_finite()) {
            return Err(Error::Validation(format!(
                "phase `{}` has invalid duration {}",
                self.phase, self.seconds
            )));
        }
        Ok(())
    }
}

/// Parses `SS`, `MM:SS` or `HH:MM:SS` (fractional seconds allowed).
pub fn parse_duration(text: &str) -> Result<f64> {
    let bad = || Error::Validation(format!("cannot parse duration `{text}`"));
    let parts: Vec<&str> = text.trim().split(':').collect();
    if parts.is_empty() || parts.len() > 3 {
        return Err(bad());
    }
    let mut seconds = 0.0;
    for p in &parts {
        let v: f64 = p.parse().map_err(|_| bad())?;
        seconds = seconds * 60.0 + v;
    }
    if parts.iter().any(|p| p.starts_with('-')) || !(seconds >= 0.0 && seconds.is_finite()) {
        return Err(Error::Validation(format!(
            "duration `{text}` must be non-negative"
        )));
    }
    Ok(seconds)
}

/// `HH:MM:SS`, rounded to whole seconds.
pub fn format_hms(seconds: f64) -> String {
    let s = seconds.round() as u64;
    format!("{:02}:{:02}:{:02}", s / 3600, (s / 60) % 60, s % 60)
}

/// Wall-clock capture of named phases.
#[derive(Debug, Default)]
pub struct PhaseClock {
    timings: Vec<PhaseTiming>,
}

impl PhaseClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.record(phase, start.elapsed());
        out
    }

    pub fn record(&mut self, phase: &str, elapsed: Duration) {
        self.timings.push(PhaseTiming {
            phase: phase.to_owned(),
            seconds: elapsed.as_secs_f64(),
        });
    }

    pub fn into_timings(self) -> Vec<PhaseTiming> {
        self.timings
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub watts: BTreeMap<String, f64>,
}

impl Default for PowerProfile {
    fn default() -> Self {
        let mut watts = BTreeMap::new();
        for p in EXTRACT_PHASES {
            watts.insert((*p).to_owned(), DEFAULT_EXTRACT_WATTS);
        }
        for p in DOWNSTREAM_PHASES {
            watts.insert((*p).to_owned(), DEFAULT_DOWNSTREAM_WATTS);
        }
        PowerProfile { watts }
    }
}

impl PowerProfile {
    pub fn empty() -> Self {
        PowerProfile {
            watts: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, phase: &str, watts: f64) -> Result<()> {
        if !(watts > 0.0 && watts.is_finite()) {
            return Err(Error::Validation(format!(
                "wattage for `{phase}` must be positive, got {watts}"
            )));
        }
        self.watts.insert(phase.to_owned(), watts);
        Ok(())
    }

    pub fn get(&self, phase: &str) -> Option<f64> {
        self.watts.get(phase).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEnergy {
    pub phase: String,
    pub seconds: f64,
    pub watts: f64,
    pub kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub phases: Vec<PhaseEnergy>,
    pub total_kwh: f64,
}

pub fn energy_kwh(timings: &[PhaseTiming], profile: &PowerProfile) -> Result<EnergyBreakdown> {
    let mut phases = Vec::with_capacity(timings.len());
    for t in timings {
        t.validate()?;
        let watts = profile
            .get(&t.phase)
            .ok_or_else(|| Error::UnknownPhase(t.phase.clone()))?;
        phases.push(PhaseEnergy {
            phase: t.phase.clone(),
            seconds: t.seconds,
            watts,
            kwh: watts * t.seconds / JOULES_PER_KWH,
        });
    }
    let total_kwh = phases.iter().map(|p| p.kwh).sum();
    Ok(EnergyBreakdown { phases, total_kwh })
}

pub fn electricity_bill(kwh: f64, tariff_per_kwh: f64) -> Result<Money> {
    if !(kwh >= 0.0 && kwh.is_finite()) || !(tariff_per_kwh >= 0.0 && tariff_per_kwh.is_finite())
    {
        return Err(Error::Validation(format!(
            "energy ({kwh}) and tariff ({tariff_per_kwh}) must be non-negative"
        )));
    }
    Ok(Money::from_amount(kwh * tariff_per_kwh))
}

/// `tokens / 1000 × price`, exact in micro-units for prices with at most six
/// decimals.
pub fn token_budget(tokens: u64, price_per_1k: f64) -> Result<Money> {
    if !(price_per_1k >= 0.0 && price_per_1k.is_finite()) {
        return Err(Error::Validation(format!(
            "token price must be non-negative, got {price_per_1k}"
        )));
    }
    let price_micros = (price_per_1k * 1e6).round() as i128;
    let micros = (tokens as i128 * price_micros + 500) / 1000;
    Ok(Money(micros as i64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub tokens: u64,
    pub price_per_1k: f64,
    #[serde(rename = "total_micros")]
    pub total: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub label: String,
    pub phases: Vec<PhaseEnergy>,
    pub total_kwh: f64,
    pub tariff_per_kwh: f64,
    #[serde(rename = "bill_micros")]
    pub bill: Money,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<TokenBudget>,
}

impl CostReport {
    pub fn electricity(
        label: &str,
        timings: &[PhaseTiming],
        profile: &PowerProfile,
        tariff_per_kwh: f64,
    ) -> Result<Self> {
        let energy = energy_kwh(timings, profile)?;
        let bill = electricity_bill(energy.total_kwh, tariff_per_kwh)?;
        Ok(CostReport {
            label: label.to_owned(),
            phases: energy.phases,
            total_kwh: energy.total_kwh,
            tariff_per_kwh,
            bill,
            tokens: None,
        })
    }

    /// A report billed purely by tokens, as for a hosted prompting service.
    pub fn tokens(label: &str, tokens: u64, price_per_1k: f64) -> Result<Self> {
        Ok(CostReport {
            label: label.to_owned(),
            phases: Vec::new(),
            total_kwh: 0.0,
            tariff_per_kwh: 0.0,
            bill: Money::ZERO,
            tokens: Some(TokenBudget {
                tokens,
                price_per_1k,
                total: token_budget(tokens, price_per_1k)?,
            }),
        })
    }

    pub fn total_cost(&self) -> Money {
        self.bill + self.tokens.as_ref().map_or(Money::ZERO, |t| t.total)
    }

    pub fn total_seconds(&self) -> f64 {
        self.phases.iter().map(|p| p.seconds).sum()
    }

    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[{}]", self.label);
        if !self.phases.is_empty() {
            let _ = writeln!(
                out,
                "{:<16} {:>10} {:>8} {:>14}",
                "phase", "runtime", "watts", "energy (kWh)"
            );
            for p in &self.phases {
                let _ = writeln!(
                    out,
                    "{:<16} {:>10} {:>8} {:>14.6}",
                    p.phase,
                    format_hms(p.seconds),
                    p.watts,
                    p.kwh
                );
            }
            let _ = writeln!(
                out,
                "{:<16} {:>10} {:>8} {:>14.6}",
                "total",
                format_hms(self.total_seconds()),
                "",
                self.total_kwh
            );
        } else if self.tokens.is_none() {
            let _ = writeln!(out, "total energy: {} kWh", self.total_kwh);
        }
        if !self.phases.is_empty() || self.tokens.is_none() {
            let _ = writeln!(
                out,
                "electricity bill: {} at ${}/kWh",
                self.bill, self.tariff_per_kwh
            );
        }
        if let Some(t) = &self.tokens {
            let _ = writeln!(
                out,
                "total tokens: {} at ${}/1k tokens = ${}",
                t.tokens,
                t.price_per_1k,
                t.total.format(2)
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub local_label: String,
    pub remote_label: String,
    #[serde(rename = "local_total_micros")]
    pub local_total: Money,
    #[serde(rename = "remote_total_micros")]
    pub remote_total: Money,
    /// `local / remote`; `None` when the remote total is zero.
    pub ratio: Option<f64>,
    pub ratio_text: String,
}

impl Comparison {
    pub fn to_table(&self) -> String {
        format!(
            "{}: {}\n{}: {}\ncost ratio ({} / {}): {}\n",
            self.local_label,
            self.local_total,
            self.remote_label,
            self.remote_total,
            self.local_label,
            self.remote_label,
            self.ratio_text
        )
    }
}

pub fn compare_report(local: &CostReport, remote: &CostReport) -> Comparison {
    let local_total = local.total_cost();
    let remote_total = remote.total_cost();
    let ratio = (remote_total.micros() != 0)
        .then(|| local_total.micros() as f64 / remote_total.micros() as f64);
    let ratio_text = ratio.map_or_else(|| "undefined".to_owned(), |r| percent_2sig(r * 100.0));
    Comparison {
        local_label: local.label.clone(),
        remote_label: remote.label.clone(),
        local_total,
        remote_total,
        ratio,
        ratio_text,
    }
}

/// Percentage with two significant digits, e.g. `0.0068%`.
pub fn percent_2sig(pct: f64) -> String {
    if pct == 0.0 || !pct.is_finite() {
        return format!("{pct}%");
    }
    let decimals = (1 - pct.abs().log10().floor() as i32).max(0) as usize;
    format!("{pct:.decimals$}%")
}
