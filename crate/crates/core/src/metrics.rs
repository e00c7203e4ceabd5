//! Attack-surface size and reduction ratio, generic over the scalar used
//! for the ratio.

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::syscalls::{SyscallClass, SyscallTable};
use crate::whitelist::Whitelist;

/// Scalars the reduction ratio can be computed in.
pub trait Scalar: Num + FromPrimitive + ToPrimitive + Clone + PartialOrd + Debug {}

impl<T: Num + FromPrimitive + ToPrimitive + Clone + PartialOrd + Debug> Scalar for T {}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMetrics<T> {
    pub s_base: u64,
    pub s_app: u64,
    pub sr: T,
    pub critical_allowed: u64,
    pub trivial_allowed: u64,
}

/// The persisted form of a metrics result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub s_base: u64,
    pub s_app: u64,
    pub sr: f64,
    /// `s_app/s_base` as an unreduced fraction.
    pub sr_fraction: String,
    /// The ratio rounded half-up to four decimals.
    pub sr_rounded: String,
    pub critical_allowed: u64,
    pub trivial_allowed: u64,
    pub critical: Vec<String>,
}

pub fn compute_metrics<T: Scalar>(wl: &Whitelist, table: &SyscallTable) -> Result<SurfaceMetrics<T>> {
    if table.is_empty() {
        return Err(Error::input("syscall table is empty"));
    }
    let mut critical = 0;
    let mut trivial = 0;
    for name in wl.union() {
        match table.class_of(&name) {
            Some(SyscallClass::Critical) => critical += 1,
            Some(SyscallClass::Trivial) => trivial += 1,
            None => {
                return Err(Error::input(format!(
                    "whitelisted syscall `{name}` is not in the table"
                )))
            }
        }
    }
    let s_app = critical + trivial;
    let s_base = table.len() as u64;
    let lift = |n: u64| T::from_u64(n).ok_or_else(|| Error::runtime(format!("{n} does not fit the scalar type")));
    Ok(SurfaceMetrics {
        s_base,
        s_app,
        sr: lift(s_app)? / lift(s_base)?,
        critical_allowed: critical,
        trivial_allowed: trivial,
    })
}

/// `num/den` rounded half-up to `places` decimals, computed on integers.
pub fn format_ratio(num: u64, den: u64, places: u32) -> String {
    let scale = 10u128.pow(places);
    let scaled = (num as u128 * scale * 2 + den as u128) / (den as u128 * 2);
    let whole = scaled / scale;
    let frac = scaled % scale;
    if places == 0 {
        whole.to_string()
    } else {
        format!("{whole}.{frac:0width$}", width = places as usize)
    }
}

impl<T: Scalar> SurfaceMetrics<T> {
    pub fn sr_rounded(&self) -> String {
        format_ratio(self.s_app, self.s_base, 4)
    }

    pub fn record(&self, wl: &Whitelist, table: &SyscallTable) -> MetricsRecord {
        MetricsRecord {
            s_base: self.s_base,
            s_app: self.s_app,
            sr: self.sr.to_f64().unwrap_or(f64::NAN),
            sr_fraction: format!("{}/{}", self.s_app, self.s_base),
            sr_rounded: self.sr_rounded(),
            critical_allowed: self.critical_allowed,
            trivial_allowed: self.trivial_allowed,
            critical: wl
                .union()
                .into_iter()
                .filter(|n| table.class_of(n) == Some(SyscallClass::Critical))
                .collect(),
        }
    }
}

impl MetricsRecord {
    pub fn to_json(&self) -> String {
        crate::error::to_stable_json(self)
    }
}
