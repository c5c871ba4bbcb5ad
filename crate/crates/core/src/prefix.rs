//! IPv4 prefix arithmetic, AS numbers and AS paths.
//!
//! Every other module builds on these three value types. They are plain
//! immutable values and can be shared freely between threads.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Default longest mask length that is still globally propagated.
pub const DEFAULT_MAX_LENGTH: u8 = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrefixError {
    #[error("malformed prefix `{0}`")]
    MalformedPrefix(String),
    #[error("prefix `{0}` has host bits set")]
    NonCanonical(String),
    #[error("mask length {0} out of range (0..=32)")]
    LengthOutOfRange(u32),
    #[error("{0} cannot be split without exceeding /{1}")]
    Unsplittable(IpPrefix, u8),
    #[error("invalid AS number `{0}`")]
    InvalidAsn(String),
    #[error("AS 0 cannot originate a route")]
    ZeroOrigin,
}

/// An autonomous system number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Asn(pub u32);

impl Asn {
    /// Validates an ASN used as a route origin. AS 0 is reserved.
    pub fn origin(value: u32) -> Result<Self, PrefixError> {
        if value == 0 {
            Err(PrefixError::ZeroOrigin)
        } else {
            Ok(Asn(value))
        }
    }

    pub fn value(self) -> u32 {
        self.0
    }
}

impl fmt::Display for Asn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Asn {
    type Err = PrefixError;

    /// Accepts plain decimal and the `AS65001` spelling.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.strip_prefix("AS").or_else(|| s.strip_prefix("as")).unwrap_or(s);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(PrefixError::InvalidAsn(s.to_string()));
        }
        digits
            .parse::<u32>()
            .map(Asn)
            .map_err(|_| PrefixError::InvalidAsn(s.to_string()))
    }
}

impl From<u32> for Asn {
    fn from(value: u32) -> Self {
        Asn(value)
    }
}

/// A canonical IPv4 prefix: no host bits are set below the mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IpPrefix {
    addr: u32,
    len: u8,
}

fn mask(len: u8) -> u32 {
    if len == 0 {
        0
    } else {
        u32::MAX << (32 - len)
    }
}

impl IpPrefix {
    /// Builds a prefix, rejecting host bits instead of masking them away.
    pub fn new(addr: Ipv4Addr, len: u8) -> Result<Self, PrefixError> {
        if len > 32 {
            return Err(PrefixError::LengthOutOfRange(len as u32));
        }
        let bits = u32::from(addr);
        if bits & !mask(len) != 0 {
            return Err(PrefixError::NonCanonical(format!("{addr}/{len}")));
        }
        Ok(IpPrefix { addr: bits, len })
    }

    /// Builds a prefix from raw bits, truncating host bits.
    pub fn truncated(bits: u32, len: u8) -> Self {
        let len = len.min(32);
        IpPrefix {
            addr: bits & mask(len),
            len,
        }
    }

    pub fn addr(&self) -> Ipv4Addr {
        Ipv4Addr::from(self.addr)
    }

    pub fn bits(&self) -> u32 {
        self.addr
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> u8 {
        self.len
    }

    /// Number of addresses covered.
    pub fn size(&self) -> u64 {
        1u64 << (32 - self.len as u32)
    }

    /// First address as an integer.
    pub fn first(&self) -> u32 {
        self.addr
    }

    /// Last address as an integer.
    pub fn last(&self) -> u32 {
        self.addr | !mask(self.len)
    }

    /// True iff `child` lies inside `self` (or equals it).
    pub fn contains(&self, child: &IpPrefix) -> bool {
        self.len <= child.len && (child.addr & mask(self.len)) == self.addr
    }

    /// True iff `self` contains `child` and they are not equal.
    pub fn strictly_contains(&self, child: &IpPrefix) -> bool {
        self.len < child.len && self.contains(child)
    }

    pub fn contains_addr(&self, addr: u32) -> bool {
        addr & mask(self.len) == self.addr
    }

    pub fn overlaps(&self, other: &IpPrefix) -> bool {
        self.contains(other) || other.contains(self)
    }

    /// Splits into the two immediate children (low half, high half).
    ///
    /// Fails with [`PrefixError::Unsplittable`] when the children would be
    /// longer than `max_length`.
    pub fn deaggregate(&self, max_length: u8) -> Result<[IpPrefix; 2], PrefixError> {
        if self.len >= max_length || self.len >= 32 {
            return Err(PrefixError::Unsplittable(*self, max_length));
        }
        let len = self.len + 1;
        let high = self.addr | (1u32 << (32 - len as u32));
        Ok([IpPrefix { addr: self.addr, len }, IpPrefix { addr: high, len }])
    }
}

/// Parses `a.b.c.d/len` strictly. Equivalent to `text.parse::<IpPrefix>()`.
pub fn parse_prefix(text: &str) -> Result<IpPrefix, PrefixError> {
    text.parse()
}

impl FromStr for IpPrefix {
    type Err = PrefixError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || PrefixError::MalformedPrefix(s.to_string());
        let (addr, len) = s.split_once('/').ok_or_else(malformed)?;
        if len.is_empty() || !len.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        let addr: Ipv4Addr = addr.parse().map_err(|_| malformed())?;
        let len: u32 = len.parse().map_err(|_| PrefixError::LengthOutOfRange(u32::MAX))?;
        if len > 32 {
            return Err(PrefixError::LengthOutOfRange(len));
        }
        IpPrefix::new(addr, len as u8).map_err(|e| match e {
            PrefixError::NonCanonical(_) => PrefixError::NonCanonical(s.to_string()),
            other => other,
        })
    }
}

impl fmt::Display for IpPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr(), self.len)
    }
}

impl Serialize for IpPrefix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for IpPrefix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// AS path: first hop is the announcing neighbor, last hop the origin.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AsPath(Vec<Asn>);

impl AsPath {
    /// Fails on an empty hop list; announcements always carry a path.
    pub fn new(hops: Vec<Asn>) -> Option<Self> {
        if hops.is_empty() {
            None
        } else {
            Some(AsPath(hops))
        }
    }

    pub fn hops(&self) -> &[Asn] {
        &self.0
    }

    pub fn origin(&self) -> Asn {
        *self.0.last().expect("AsPath is never empty")
    }

    pub fn first_hop(&self) -> Asn {
        self.0[0]
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, asn: Asn) -> bool {
        self.0.contains(&asn)
    }

    /// Path as re-advertised by `asn`.
    pub fn prepend(&self, asn: Asn) -> AsPath {
        let mut hops = Vec::with_capacity(self.0.len() + 1);
        hops.push(asn);
        hops.extend_from_slice(&self.0);
        AsPath(hops)
    }

    pub fn is_loop_free(&self) -> bool {
        let mut seen = std::collections::HashSet::with_capacity(self.0.len());
        self.0.iter().all(|a| seen.insert(*a))
    }
}

impl fmt::Display for AsPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for hop in &self.0 {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            write!(f, "{hop}")?;
        }
        Ok(())
    }
}

impl FromStr for AsPath {
    type Err = PrefixError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hops = s.split_whitespace().map(str::parse).collect::<Result<Vec<Asn>, _>>()?;
        AsPath::new(hops).ok_or_else(|| PrefixError::InvalidAsn(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> IpPrefix {
        s.parse().unwrap()
    }

    #[test]
    fn parses_canonical_prefixes() {
        let hijacked = p("10.0.0.0/23");
        assert_eq!(hijacked.addr(), Ipv4Addr::new(10, 0, 0, 0));
        assert_eq!(hijacked.len(), 23);
        assert_eq!(p("0.0.0.0/0").len(), 0);
        assert_eq!(p("255.255.255.255/32").size(), 1);
    }

    #[test]
    fn rejects_bad_prefix_text() {
        assert!(matches!(parse_prefix("10.0.1.0/23"), Err(PrefixError::NonCanonical(_))));
        assert!(matches!(
            parse_prefix("10.0.0.0/33"),
            Err(PrefixError::LengthOutOfRange(33))
        ));
        assert!(matches!(
            parse_prefix("10.0.0.0/99999999999"),
            Err(PrefixError::LengthOutOfRange(_))
        ));
        for bad in [
            "10.0.0.0",
            "10.0.0/8",
            "10.0.0.0/",
            "10.0.0.0/+8",
            " 10.0.0.0/8",
            "10.0.0.0/8 ",
            "10.0.0.256/32",
            "a.b.c.d/8",
            "",
            "/8",
        ] {
            assert!(
                matches!(parse_prefix(bad), Err(PrefixError::MalformedPrefix(_))),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn host_bit_oracle_matches_parser() {
        // every address inside 10.0.0.0/22 with a /23 mask: canonical iff bit 9 (from the right) is 0
        for third in 0u8..4 {
            let text = format!("10.0.{third}.0/23");
            let expect_ok = third % 2 == 0;
            assert_eq!(parse_prefix(&text).is_ok(), expect_ok, "{text}");
        }
    }

    #[test]
    fn containment_examples() {
        assert!(p("10.0.0.0/23").contains(&p("10.0.1.0/24")));
        assert!(p("10.0.0.0/23").contains(&p("10.0.0.0/23")));
        assert!(!p("10.0.0.0/24").contains(&p("10.0.0.0/23")));
        assert!(p("0.0.0.0/0").contains(&p("203.0.113.7/32")));
        assert!(!p("10.0.0.0/23").strictly_contains(&p("10.0.0.0/23")));
    }

    #[test]
    fn deaggregate_examples() {
        assert_eq!(
            p("10.0.0.0/23").deaggregate(24).unwrap(),
            [p("10.0.0.0/24"), p("10.0.1.0/24")]
        );
        assert_eq!(
            p("10.0.0.0/22").deaggregate(24).unwrap(),
            [p("10.0.0.0/23"), p("10.0.2.0/23")]
        );
        assert!(matches!(
            p("198.51.100.0/24").deaggregate(DEFAULT_MAX_LENGTH),
            Err(PrefixError::Unsplittable(_, 24))
        ));
        assert!(p("198.51.100.0/24").deaggregate(25).is_ok());
        assert!(p("1.2.3.4/32").deaggregate(32).is_err());
    }

    #[test]
    fn asn_parsing() {
        assert_eq!("65001".parse::<Asn>().unwrap(), Asn(65001));
        assert_eq!("AS65001".parse::<Asn>().unwrap(), Asn(65001));
        assert_eq!("4294967295".parse::<Asn>().unwrap(), Asn(u32::MAX));
        assert!("4294967296".parse::<Asn>().is_err());
        assert!("-1".parse::<Asn>().is_err());
        assert!(Asn::origin(0).is_err());
    }

    #[test]
    fn as_path_basics() {
        let path: AsPath = "64500 65002".parse().unwrap();
        assert_eq!(path.origin(), Asn(65002));
        assert_eq!(path.first_hop(), Asn(64500));
        assert_eq!(path.prepend(Asn(1)).to_string(), "1 64500 65002");
        assert!(AsPath::new(vec![]).is_none());
        assert!(!"1 2 1".parse::<AsPath>().unwrap().is_loop_free());
    }

    fn arb_prefix() -> impl Strategy<Value = IpPrefix> {
        (any::<u32>(), 0u8..=32).prop_map(|(bits, len)| IpPrefix::truncated(bits, len))
    }

    proptest! {
        #[test]
        fn render_then_parse_is_identity(prefix in arb_prefix()) {
            prop_assert_eq!(parse_prefix(&prefix.to_string()).unwrap(), prefix);
        }

        #[test]
        fn containment_is_a_partial_order(a in arb_prefix(), b_len in 0u8..=32, c_len in 0u8..=32, salt in any::<u32>()) {
            // derive b and c near a so that containment actually occurs
            let b = IpPrefix::truncated(a.bits() ^ (salt >> b_len.min(31)), b_len);
            let c = IpPrefix::truncated(a.bits(), c_len);
            prop_assert!(a.contains(&a));
            if a.contains(&b) && b.contains(&a) {
                prop_assert_eq!(a, b);
            }
            if c.contains(&a) && a.contains(&b) {
                prop_assert!(c.contains(&b));
            }
            if b.contains(&a) && a.contains(&c) {
                prop_assert!(b.contains(&c));
            }
        }

        #[test]
        fn children_cover_parent_exactly(prefix in arb_prefix().prop_filter("splittable", |p| p.len() < 32)) {
            let [lo, hi] = prefix.deaggregate(32).unwrap();
            prop_assert!(prefix.strictly_contains(&lo) && prefix.strictly_contains(&hi));
            prop_assert!(!lo.overlaps(&hi));
            prop_assert_eq!(lo.size() + hi.size(), prefix.size());
            prop_assert_eq!(lo.first(), prefix.first());
            prop_assert_eq!(hi.last(), prefix.last());
            prop_assert_eq!(lo.last() as u64 + 1, hi.first() as u64);
        }
    }
}
