//! Prefix-to-origin-AS table with longest-prefix-match lookup.
//!
//! Text format, one entry per line: `prefix/len,asn` (an `AS` prefix on the
//! number is accepted). Blank lines and lines starting with `#` are skipped.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::net::IpAddr;

use crate::{Error, Result};

pub type Asn = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrefixEntry {
    pub prefix: IpAddr,
    pub len: u8,
    pub asn: Asn,
}

/// One hash map per prefix length; lookups probe lengths longest first.
#[derive(Debug, Clone)]
pub struct PrefixTable {
    v4: Vec<HashMap<u32, Asn>>,
    v6: Vec<HashMap<u128, Asn>>,
    entries: Vec<PrefixEntry>,
}

fn mask4(a: u32, len: u8) -> u32 {
    if len == 0 {
        0
    } else {
        a & (u32::MAX << (32 - u32::from(len)))
    }
}

fn mask6(a: u128, len: u8) -> u128 {
    if len == 0 {
        0
    } else {
        a & (u128::MAX << (128 - u32::from(len)))
    }
}

impl Default for PrefixTable {
    fn default() -> Self {
        Self::new()
    }
}

impl PrefixTable {
    pub fn new() -> Self {
        PrefixTable {
            v4: vec![HashMap::new(); 33],
            v6: vec![HashMap::new(); 129],
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PrefixEntry] {
        &self.entries
    }

    /// Adds an entry; host bits are cleared. Duplicate prefixes are rejected.
    pub fn insert(&mut self, prefix: IpAddr, len: u8, asn: Asn) -> Result<()> {
        let dup = || crate::error::invalid("prefix", format!("duplicate prefix {prefix}/{len}"));
        let stored = match prefix {
            IpAddr::V4(a) => {
                if len > 32 {
                    return Err(crate::error::invalid("prefix length", format!("{len} exceeds 32")));
                }
                let m = mask4(a.into(), len);
                if self.v4[len as usize].contains_key(&m) {
                    return Err(dup());
                }
                self.v4[len as usize].insert(m, asn);
                IpAddr::V4(m.into())
            }
            IpAddr::V6(a) => {
                if len > 128 {
                    return Err(crate::error::invalid("prefix length", format!("{len} exceeds 128")));
                }
                let m = mask6(a.into(), len);
                if self.v6[len as usize].contains_key(&m) {
                    return Err(dup());
                }
                self.v6[len as usize].insert(m, asn);
                IpAddr::V6(m.into())
            }
        };
        self.entries.push(PrefixEntry { prefix: stored, len, asn });
        Ok(())
    }

    /// Origin AS of the longest prefix covering `addr`.
    pub fn lookup(&self, addr: IpAddr) -> Option<Asn> {
        match addr {
            IpAddr::V4(a) => {
                let a = u32::from(a);
                (0..=32u8).rev().find_map(|l| {
                    let t = &self.v4[l as usize];
                    if t.is_empty() {
                        None
                    } else {
                        t.get(&mask4(a, l)).copied()
                    }
                })
            }
            IpAddr::V6(a) => {
                let a = u128::from(a);
                (0..=128u8).rev().find_map(|l| {
                    let t = &self.v6[l as usize];
                    if t.is_empty() {
                        None
                    } else {
                        t.get(&mask6(a, l)).copied()
                    }
                })
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut t = PrefixTable::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| Error::TraceFormat { line: i + 1, reason };
            let (pfx, asn) = line.split_once(',').ok_or_else(|| err(format!("expected `prefix/len,asn`, got `{line}`")))?;
            let (addr, len) = pfx.trim().split_once('/').ok_or_else(|| err(format!("missing prefix length in `{pfx}`")))?;
            let addr: IpAddr = addr.parse().map_err(|_| err(format!("bad address `{addr}`")))?;
            let len: u8 = len.parse().map_err(|_| err(format!("bad prefix length `{len}`")))?;
            let asn = asn.trim();
            let asn: Asn = asn
                .strip_prefix("AS")
                .unwrap_or(asn)
                .parse()
                .map_err(|_| err(format!("bad AS number `{asn}`")))?;
            t.insert(addr, len, asn).map_err(|e| err(e.to_string()))?;
        }
        Ok(t)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            writeln!(s, "{}/{},{}", e.prefix, e.len, e.asn).unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::net::Ipv4Addr;

    fn brute(entries: &[PrefixEntry], addr: IpAddr) -> Option<Asn> {
        entries
            .iter()
            .filter(|e| match (e.prefix, addr) {
                (IpAddr::V4(p), IpAddr::V4(a)) => mask4(a.into(), e.len) == u32::from(p),
                (IpAddr::V6(p), IpAddr::V6(a)) => mask6(a.into(), e.len) == u128::from(p),
                _ => false,
            })
            .max_by_key(|e| e.len)
            .map(|e| e.asn)
    }

    #[test]
    fn longest_match_wins() {
        let t = PrefixTable::parse("10.0.0.0/8,1\n10.1.0.0/16,AS2\n").unwrap();
        assert_eq!(t.lookup("10.1.2.3".parse().unwrap()), Some(2));
        assert_eq!(t.lookup("10.2.2.3".parse().unwrap()), Some(1));
        assert_eq!(t.lookup("11.0.0.1".parse().unwrap()), None);
        assert_eq!(PrefixTable::new().lookup("192.0.2.1".parse().unwrap()), None);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(PrefixTable::parse("10.0.0.0/8,1\n10.0.0.0/8,2\n").is_err());
        assert!(PrefixTable::parse("10.0.0.0/33,1\n").is_err());
        assert!(PrefixTable::parse("10.0.0/8,1\n").is_err());
        assert!(PrefixTable::parse("10.0.0.0,1\n").is_err());
        assert!(PrefixTable::parse("10.0.0.0/8,x\n").is_err());
    }

    #[test]
    fn text_round_trip_and_v6() {
        let t = PrefixTable::parse("# comment\n2001:db8::/32,65000\n10.1.2.0/24,7\n").unwrap();
        let again = PrefixTable::parse(&t.to_text()).unwrap();
        assert_eq!(again.entries(), t.entries());
        assert_eq!(t.lookup("2001:db8::1".parse().unwrap()), Some(65000));
        assert_eq!(t.lookup("2001:db9::1".parse().unwrap()), None);
    }

    #[test]
    fn matches_brute_force_scan() {
        let mut rng = crate::model::stream_rng(11, "lpm", 0);
        let mut t = PrefixTable::new();
        // clustered prefixes so nesting is common
        while t.len() < 400 {
            let base: u32 = 0x0a00_0000 | (rng.random::<u32>() & 0x00ff_ffff);
            let len = rng.random_range(8..=30u8);
            let _ = t.insert(IpAddr::V4(Ipv4Addr::from(base)), len, rng.random_range(1..1000));
        }
        for _ in 0..10_000 {
            let a: u32 = if rng.random_bool(0.9) { 0x0a00_0000 | (rng.random::<u32>() & 0x00ff_ffff) } else { rng.random() };
            let addr = IpAddr::V4(a.into());
            assert_eq!(t.lookup(addr), brute(t.entries(), addr), "{addr}");
        }
    }
}
