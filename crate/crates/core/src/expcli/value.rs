use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Who pools what in a collaboration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Every company of every industry.
    Mics,
    /// All companies of a single industry.
    WithinIndustry,
    /// One company joined by every other industry on its own customers.
    OneCompanyCrossIndustry,
    /// One company per industry, restricted to their common customers.
    Coalition,
    /// A single company alone.
    None,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Mics,
        Scenario::WithinIndustry,
        Scenario::OneCompanyCrossIndustry,
        Scenario::Coalition,
        Scenario::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Mics => "mics",
            Scenario::WithinIndustry => "within_industry",
            Scenario::OneCompanyCrossIndustry => "one_company_cross_industry",
            Scenario::Coalition => "coalition",
            Scenario::None => "none",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown scenario `{s}` (mics|within_industry|one_company_cross_industry|coalition|none)"
            ))
        })
    }
}

/// `M` industries of `N` companies, each company holding `k` features about
/// its share of `m` customers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollaborationScenario {
    pub scenario: Scenario,
    pub industries: u64,
    pub companies: u64,
    pub k: u64,
    pub m: u64,
}

impl CollaborationScenario {
    pub fn validate(&self) -> Result<()> {
        if [self.industries, self.companies, self.k, self.m].contains(&0) {
            return Err(Error::Config(
                "industries, companies, k and m must all be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Usable feature points of a scenario, exactly.
///
/// mics `M·k·m`, within_industry `k·m`, one_company_cross_industry `M·k·m/N`,
/// coalition `M·k·m/N^M` (customers assigned to companies independently and
/// uniformly), none `k·m/N`.
pub fn collaboration_value(s: &CollaborationScenario) -> BigRational {
    let big = |v: u64| BigInt::from(v);
    let km = big(s.k) * big(s.m);
    let m_ind = big(s.industries);
    let n = big(s.companies);
    let (num, den) = match s.scenario {
        Scenario::Mics => (m_ind * km, BigInt::from(1)),
        Scenario::WithinIndustry => (km, BigInt::from(1)),
        Scenario::OneCompanyCrossIndustry => (m_ind * km, n),
        Scenario::Coalition => (m_ind * km, n.pow(s.industries as u32)),
        Scenario::None => (km, n),
    };
    BigRational::new(num, den)
}

/// Value divided by `k·m`: the coefficient `c` in `c·km` (5 for "5km").
pub fn per_km(s: &CollaborationScenario) -> BigRational {
    collaboration_value(s) / BigRational::from_integer(BigInt::from(s.k) * BigInt::from(s.m))
}

/// Decimal expansion with up to `places` fractional digits, trailing zeros trimmed.
pub fn to_decimal(r: &BigRational, places: usize) -> String {
    let neg = r.is_negative();
    let r = r.abs();
    let int = r.numer() / r.denom();
    let mut rem = r.numer() % r.denom();
    let mut s = format!("{}{}", if neg { "-" } else { "" }, int);
    if !rem.is_zero() {
        s.push('.');
        let ten = BigInt::from(10);
        for _ in 0..places {
            if rem.is_zero() {
                break;
            }
            rem *= &ten;
            let digit = &rem / r.denom();
            rem %= r.denom();
            s.push_str(&digit.to_string());
        }
    }
    s
}

/// `5km`, `km/4`, `5km/1024`, `1.25km` style rendering of a `k·m` coefficient.
pub fn km_expression(coefficient: &BigRational) -> String {
    let one = BigInt::from(1);
    let (num, den) = (coefficient.numer(), coefficient.denom());
    let num_part = if num == &one { String::new() } else { num.to_string() };
    if den == &one {
        return format!("{num_part}km");
    }
    // Terminating decimals with few digits read better inline.
    let dec = to_decimal(coefficient, 6);
    let exact = to_decimal(coefficient, 60) == dec;
    if exact && num > den && dec.len() <= 6 {
        return format!("{dec}km");
    }
    format!("{num_part}km/{den}")
}
