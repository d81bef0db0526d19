//! Closed-form weight policies evaluated at each rebalance date.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fgp::{self, ConstantGenerator, GeometricMeanGenerator, SwapGenerator};
use crate::market::{market_weights_from_logs, rank_values_unchecked, RankState, WeightVector};

/// `1/n` for each of `n` assets.
pub fn equal_weights(n: usize) -> Result<WeightVector> {
    if n == 0 {
        return Err(Error::invalid("equal weights need at least one asset"));
    }
    WeightVector::new(vec![1.0 / n as f64; n])
}

/// `π_i ∝ X_i^p`; `p = 0` is the equal-weight limit.
pub fn diversity_weights(prices: &[f64], p: f64) -> Result<WeightVector> {
    if let Some(x) = prices.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::invalid(format!("price must be positive, got {x}")));
    }
    let logs: Vec<f64> = prices.iter().map(|x| x.ln()).collect();
    diversity_weights_from_logs(&logs, p)
}

/// Diversity weights from log prices.
pub fn diversity_weights_from_logs(log_prices: &[f64], p: f64) -> Result<WeightVector> {
    if !p.is_finite() {
        return Err(Error::invalid(format!("diversity parameter must be finite, got {p}")));
    }
    if p == 0.0 {
        return equal_weights(log_prices.len());
    }
    let scaled: Vec<f64> = log_prices.iter().map(|l| p * l).collect();
    market_weights_from_logs(&scaled)
}

/// Reverse weights: the asset at rank `k` gets the market weight at rank `n+1−k`.
pub fn reverse_weights(mu: &WeightVector, ranks: &RankState) -> Result<WeightVector> {
    let n = mu.len();
    if ranks.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: ranks.len(),
        });
    }
    let pi = (0..n)
        .map(|i| mu[ranks.name_at(n - 1 - ranks.rank_of(i))])
        .collect();
    WeightVector::new(pi)
}

/// Reverse weights ranked by the market weights themselves.
pub fn reverse_of_market(mu: &WeightVector) -> Result<WeightVector> {
    let ranks = rank_values_unchecked(mu.as_slice());
    reverse_weights(mu, &ranks)
}

/// `π_i = μ_{p(i)}`; `perm` must be a bijection on `0..n`.
pub fn permutation_weights(mu: &WeightVector, perm: &[usize]) -> Result<WeightVector> {
    let n = mu.len();
    if perm.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: perm.len(),
        });
    }
    check_bijection(perm)?;
    WeightVector::new(perm.iter().map(|&k| mu[k]).collect())
}

/// Swap portfolio on `{i, j}`: `π_i = μ_j/(μ_i+μ_j)`, `π_j = μ_i/(μ_i+μ_j)`.
pub fn swap_weights(mu: &WeightVector, i: usize, j: usize) -> Result<WeightVector> {
    let n = mu.len();
    if i == j {
        return Err(Error::invalid("swap needs two distinct assets"));
    }
    if i >= n || j >= n {
        return Err(Error::invalid(format!("swap index out of range for {n} assets")));
    }
    let total = mu[i] + mu[j];
    if total <= 0.0 {
        return Err(Error::invalid("swap pair has zero market weight"));
    }
    let mut pi = vec![0.0; n];
    pi[i] = mu[j] / total;
    pi[j] = mu[i] / total;
    WeightVector::new(pi)
}

fn check_bijection(perm: &[usize]) -> Result<()> {
    let mut seen = vec![false; perm.len()];
    for &k in perm {
        if k >= perm.len() || std::mem::replace(&mut seen[k], true) {
            return Err(Error::invalid(format!("{perm:?} is not a permutation")));
        }
    }
    Ok(())
}

/// Reference to an asset in a policy string: a name or a 1-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssetRef {
    Position(usize),
    Name(String),
}

impl AssetRef {
    /// Resolves to a 0-based index into `assets`.
    pub fn resolve(&self, assets: &[String]) -> Result<usize> {
        match self {
            AssetRef::Position(p) if *p >= 1 && *p <= assets.len() => Ok(p - 1),
            AssetRef::Position(p) => Err(Error::invalid(format!(
                "asset position {p} out of range 1..={}",
                assets.len()
            ))),
            AssetRef::Name(name) => assets
                .iter()
                .position(|a| a == name)
                .ok_or_else(|| Error::invalid(format!("unknown asset '{name}'"))),
        }
    }
}

impl FromStr for AssetRef {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Usage("empty asset reference".into()));
        }
        Ok(match s.parse::<usize>() {
            Ok(p) => AssetRef::Position(p),
            Err(_) => AssetRef::Name(s.to_string()),
        })
    }
}

impl fmt::Display for AssetRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssetRef::Position(p) => write!(f, "{p}"),
            AssetRef::Name(n) => f.write_str(n),
        }
    }
}

/// Built-in generating functions selectable from configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Constant,
    GeometricMean,
    Swap(AssetRef, AssetRef),
}

/// A weight rule evaluated from the cross-section at a rebalance date.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightPolicy {
    Market,
    Equal,
    Diversity(f64),
    Reverse,
    Swap(AssetRef, AssetRef),
    /// `targets[k]` is the asset whose market weight asset `k` receives.
    Permutation(Vec<AssetRef>),
    Generated(Generator),
}

impl WeightPolicy {
    /// Short label used in report headers.
    pub fn label(&self) -> String {
        self.to_string()
    }

    /// Weights over the active cross-section.
    ///
    /// `active` holds panel indices and `log_prices` their log prices at the
    /// rebalance date; `assets` are the panel's names for resolving references.
    pub fn weights(&self, assets: &[String], active: &[usize], log_prices: &[f64]) -> Result<WeightVector> {
        if active.len() != log_prices.len() {
            return Err(Error::DimensionMismatch {
                expected: active.len(),
                got: log_prices.len(),
            });
        }
        if active.is_empty() {
            return Err(Error::invalid("no active assets"));
        }
        let position = |r: &AssetRef| -> Result<usize> {
            let idx = r.resolve(assets)?;
            active
                .iter()
                .position(|&a| a == idx)
                .ok_or_else(|| Error::invalid(format!("asset '{}' is not active", assets[idx])))
        };
        match self {
            WeightPolicy::Market => market_weights_from_logs(log_prices),
            WeightPolicy::Equal => equal_weights(active.len()),
            WeightPolicy::Diversity(p) => diversity_weights_from_logs(log_prices, *p),
            WeightPolicy::Reverse => {
                let mu = market_weights_from_logs(log_prices)?;
                let ranks = rank_values_unchecked(log_prices);
                reverse_weights(&mu, &ranks)
            }
            WeightPolicy::Swap(a, b) => {
                let mu = market_weights_from_logs(log_prices)?;
                swap_weights(&mu, position(a)?, position(b)?)
            }
            WeightPolicy::Permutation(targets) => {
                if targets.len() != active.len() {
                    return Err(Error::invalid(format!(
                        "permutation covers {} assets but {} are active",
                        targets.len(),
                        active.len()
                    )));
                }
                let mu = market_weights_from_logs(log_prices)?;
                // targets are listed in active order
                let perm = targets.iter().map(position).collect::<Result<Vec<_>>>()?;
                permutation_weights(&mu, &perm)
            }
            WeightPolicy::Generated(g) => {
                let mu = market_weights_from_logs(log_prices)?;
                match g {
                    Generator::Constant => fgp::fgp_weights(&ConstantGenerator, &mu),
                    Generator::GeometricMean => fgp::fgp_weights(&GeometricMeanGenerator, &mu),
                    Generator::Swap(a, b) => {
                        let s = SwapGenerator::new(position(a)?, position(b)?)?;
                        fgp::fgp_weights(&s, &mu)
                    }
                }
            }
        }
    }

    /// Parses a comma-free list separated by `;`, e.g. `market;equal;diversity:-0.5`.
    pub fn parse_list(s: &str) -> Result<Vec<WeightPolicy>> {
        s.split(';')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl FromStr for WeightPolicy {
    type Err = Error;

    /// `market | equal | diversity:<p> | reverse | swap:<i>,<j> |
    /// permutation:[<a>,<b>,...] | generated:constant | generated:geometric-mean |
    /// generated:swap:<i>,<j>`
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let usage = |msg: String| Error::Usage(format!("policy '{s}': {msg}"));
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (s, None),
        };
        let pair = |a: &str| -> Result<(AssetRef, AssetRef)> {
            let (i, j) = a
                .split_once(',')
                .ok_or_else(|| usage("expected two assets 'i,j'".into()))?;
            let (i, j): (AssetRef, AssetRef) = (i.parse()?, j.parse()?);
            if i == j {
                return Err(usage("swap assets must differ".into()));
            }
            Ok((i, j))
        };
        match (kind, arg) {
            ("market", None) => Ok(WeightPolicy::Market),
            ("equal", None) => Ok(WeightPolicy::Equal),
            ("reverse", None) => Ok(WeightPolicy::Reverse),
            ("diversity", Some(a)) => {
                let p: f64 = a
                    .parse()
                    .map_err(|_| usage(format!("bad diversity parameter '{a}'")))?;
                if !p.is_finite() {
                    return Err(usage("diversity parameter must be finite".into()));
                }
                Ok(WeightPolicy::Diversity(p))
            }
            ("swap", Some(a)) => {
                let (i, j) = pair(a)?;
                Ok(WeightPolicy::Swap(i, j))
            }
            ("permutation", Some(a)) => {
                let inner = a
                    .strip_prefix('[')
                    .and_then(|r| r.strip_suffix(']'))
                    .ok_or_else(|| usage("expected '[a,b,...]'".into()))?;
                let targets = inner
                    .split(',')
                    .map(str::parse)
                    .collect::<Result<Vec<AssetRef>>>()?;
                for (k, t) in targets.iter().enumerate() {
                    if targets[..k].contains(t) {
                        return Err(usage(format!("'{t}' appears twice")));
                    }
                }
                Ok(WeightPolicy::Permutation(targets))
            }
            ("generated", Some("constant")) => Ok(WeightPolicy::Generated(Generator::Constant)),
            ("generated", Some("geometric-mean")) => {
                Ok(WeightPolicy::Generated(Generator::GeometricMean))
            }
            ("generated", Some(g)) if g.starts_with("swap:") => {
                let (i, j) = pair(&g["swap:".len()..])?;
                Ok(WeightPolicy::Generated(Generator::Swap(i, j)))
            }
            _ => Err(usage("unknown policy".into())),
        }
    }
}

impl fmt::Display for WeightPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightPolicy::Market => f.write_str("market"),
            WeightPolicy::Equal => f.write_str("equal"),
            WeightPolicy::Diversity(p) => write!(f, "diversity:{p}"),
            WeightPolicy::Reverse => f.write_str("reverse"),
            WeightPolicy::Swap(i, j) => write!(f, "swap:{i},{j}"),
            WeightPolicy::Permutation(t) => {
                let parts: Vec<String> = t.iter().map(ToString::to_string).collect();
                write!(f, "permutation:[{}]", parts.join(","))
            }
            WeightPolicy::Generated(Generator::Constant) => f.write_str("generated:constant"),
            WeightPolicy::Generated(Generator::GeometricMean) => {
                f.write_str("generated:geometric-mean")
            }
            WeightPolicy::Generated(Generator::Swap(i, j)) => write!(f, "generated:swap:{i},{j}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{compute_ranks, market_weights};

    fn w(v: &[f64]) -> WeightVector {
        WeightVector::new(v.to_vec()).unwrap()
    }

    fn close(a: &WeightVector, b: &[f64]) {
        for (x, y) in a.as_slice().iter().zip(b) {
            assert!((x - y).abs() < 1e-15, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn equal_examples() {
        close(&equal_weights(4).unwrap(), &[0.25; 4]);
        close(&equal_weights(1).unwrap(), &[1.0]);
        let w26 = equal_weights(26).unwrap();
        assert!(w26.as_slice().iter().all(|&x| x == 1.0 / 26.0));
        assert!(equal_weights(0).is_err());
    }

    #[test]
    fn diversity_examples() {
        close(&diversity_weights(&[4.0, 1.0], -0.5).unwrap(), &[1.0 / 3.0, 2.0 / 3.0]);
        let prices = [2.0, 3.0, 5.0];
        close(
            &diversity_weights(&prices, 1.0).unwrap(),
            market_weights(&prices).unwrap().as_slice(),
        );
        close(&diversity_weights(&prices, 0.0).unwrap(), &[1.0 / 3.0; 3]);
        assert!(diversity_weights(&[1.0, 0.0], 0.5).is_err());
        assert!(diversity_weights(&[1.0, 2.0], f64::NAN).is_err());
    }

    #[test]
    fn reciprocal_weights_via_diversity() {
        let x = diversity_weights(&[1.0, 3.0], -1.0).unwrap();
        close(&x, &[0.75, 0.25]);
    }

    #[test]
    fn reverse_examples() {
        let mu = w(&[0.5, 0.3, 0.2]);
        let r = compute_ranks(mu.as_slice()).unwrap();
        close(&reverse_weights(&mu, &r).unwrap(), &[0.2, 0.3, 0.5]);
        let mu2 = w(&[0.6, 0.4]);
        let rev = reverse_of_market(&mu2).unwrap();
        close(&rev, &[0.4, 0.6]);
        assert_eq!(rev, swap_weights(&mu2, 0, 1).unwrap());
        let uni = w(&[0.25; 4]);
        assert_eq!(reverse_of_market(&uni).unwrap(), uni);
        let r3 = compute_ranks(&[1.0, 2.0, 3.0]).unwrap();
        assert!(reverse_weights(&mu2, &r3).is_err());
    }

    #[test]
    fn reverse_unsorted_input() {
        let mu = w(&[0.2, 0.5, 0.3]);
        close(&reverse_of_market(&mu).unwrap(), &[0.5, 0.2, 0.3]);
    }

    #[test]
    fn permutation_examples() {
        let mu = w(&[0.7, 0.3]);
        close(&permutation_weights(&mu, &[0, 1]).unwrap(), &[0.7, 0.3]);
        close(&permutation_weights(&mu, &[1, 0]).unwrap(), &[0.3, 0.7]);
        let mu3 = w(&[0.5, 0.3, 0.2]);
        // 1→2→3→1
        close(&permutation_weights(&mu3, &[1, 2, 0]).unwrap(), &[0.3, 0.2, 0.5]);
        assert!(permutation_weights(&mu3, &[0, 0, 1]).is_err());
        assert!(permutation_weights(&mu3, &[0, 1]).is_err());
    }

    #[test]
    fn swap_examples() {
        let mu = w(&[0.5, 0.3, 0.2]);
        close(&swap_weights(&mu, 0, 2).unwrap(), &[2.0 / 7.0, 0.0, 5.0 / 7.0]);
        close(&swap_weights(&w(&[0.4, 0.2, 0.4]), 0, 2).unwrap(), &[0.5, 0.0, 0.5]);
        close(&swap_weights(&w(&[0.6, 0.4]), 0, 1).unwrap(), &[0.4, 0.6]);
        assert!(swap_weights(&mu, 1, 1).is_err());
    }

    #[test]
    fn policy_strings_roundtrip() {
        for s in [
            "market",
            "equal",
            "diversity:-0.5",
            "reverse",
            "swap:1,3",
            "swap:corn,wheat",
            "permutation:[2,3,1]",
            "generated:constant",
            "generated:geometric-mean",
            "generated:swap:1,2",
        ] {
            let p: WeightPolicy = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        for bad in ["", "markets", "diversity", "diversity:x", "swap:1,1", "swap:1", "permutation:1,2", "permutation:[1,1]", "generated:foo"] {
            assert!(matches!(bad.parse::<WeightPolicy>(), Err(Error::Usage(_))), "{bad}");
        }
        let list = WeightPolicy::parse_list("market; reverse ;diversity:-0.5").unwrap();
        assert_eq!(list.len(), 3);
    }

    #[test]
    fn policies_on_cross_section() {
        let assets: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let active = [0, 2, 3];
        let logs = [0.5f64.ln(), 0.3f64.ln(), 0.2f64.ln()];
        let swap: WeightPolicy = "swap:a,d".parse().unwrap();
        close(&swap.weights(&assets, &active, &logs).unwrap(), &[2.0 / 7.0, 0.0, 5.0 / 7.0]);
        let gen: WeightPolicy = "generated:swap:1,4".parse().unwrap();
        let g = gen.weights(&assets, &active, &logs).unwrap();
        for (x, y) in g.as_slice().iter().zip([2.0 / 7.0, 0.0, 5.0 / 7.0]) {
            assert!((x - y).abs() < 1e-12);
        }
        let inactive: WeightPolicy = "swap:a,b".parse().unwrap();
        assert!(inactive.weights(&assets, &active, &logs).is_err());
        let perm: WeightPolicy = "permutation:[c,d,a]".parse().unwrap();
        close(&perm.weights(&assets, &active, &logs).unwrap(), &[0.3, 0.2, 0.5]);
    }
}
