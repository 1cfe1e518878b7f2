//! Reaction networks, propensity laws, and rectangular lattice state spaces.
//!
//! Two built-in systems are provided: a linear four-reaction chain
//! (`builtin_cs1`) whose slow variable is `(x1 + x2) / 2`, and a
//! six-reaction system with a fast dimerisation pair (`builtin_cs2`) whose
//! slow variable is `x1 + 2 x2`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mass-action rate laws supported by the propensity evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateLaw {
    /// `c`
    Constant,
    /// `c * x_i`
    Linear(usize),
    /// `c * x_i * x_j` with `i != j`
    Bilinear(usize, usize),
    /// `c * x_i * (x_i - 1)`
    PairQuadratic(usize),
}

impl RateLaw {
    /// Molecularity of the law, used for volume scaling.
    pub fn order(&self) -> i32 {
        match self {
            RateLaw::Constant => 0,
            RateLaw::Linear(_) => 1,
            RateLaw::Bilinear(..) | RateLaw::PairQuadratic(_) => 2,
        }
    }

    fn max_species(&self) -> Option<usize> {
        match *self {
            RateLaw::Constant => None,
            RateLaw::Linear(i) | RateLaw::PairQuadratic(i) => Some(i),
            RateLaw::Bilinear(i, j) => Some(i.max(j)),
        }
    }

    #[inline]
    fn combinatorial(&self, x: &[f64]) -> f64 {
        match *self {
            RateLaw::Constant => 1.0,
            RateLaw::Linear(i) => x[i],
            RateLaw::Bilinear(i, j) => x[i] * x[j],
            RateLaw::PairQuadratic(i) => x[i] * (x[i] - 1.0),
        }
    }
}

/// Which power of the volume multiplies each rate constant.
///
/// `Stated` is standard mass-action scaling, `c = k V^(1 - order)`.
/// `Table` uses the rate constants unscaled, `c = k`, which reproduces the
/// tabulated propensities of the CS-II system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeScaling {
    #[default]
    Stated,
    Table,
}

impl FromStr for VolumeScaling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stated" => Ok(VolumeScaling::Stated),
            "table" => Ok(VolumeScaling::Table),
            other => Err(Error::Config(format!("unknown volume convention `{other}`"))),
        }
    }
}

impl fmt::Display for VolumeScaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VolumeScaling::Stated => "stated",
            VolumeScaling::Table => "table",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    pub stoich: Vec<i64>,
    pub law: RateLaw,
    /// Rate constant before volume scaling.
    pub rate: f64,
}

impl Reaction {
    pub fn new(stoich: Vec<i64>, law: RateLaw, rate: f64) -> Result<Self> {
        if stoich.iter().all(|&v| v == 0) {
            return Err(Error::Network("reaction has an all-zero stoichiometry".into()));
        }
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::Network(format!("rate must be finite and >= 0, got {rate}")));
        }
        if let Some(i) = law.max_species() {
            if i >= stoich.len() {
                return Err(Error::Network(format!(
                    "rate law references species {i} but only {} species exist",
                    stoich.len()
                )));
            }
        }
        if let RateLaw::Bilinear(i, j) = law {
            if i == j {
                return Err(Error::Network("bilinear law needs two distinct species".into()));
            }
        }
        Ok(Self { stoich, law, rate })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReactionNetwork {
    species: Vec<String>,
    reactions: Vec<Reaction>,
    volume: f64,
    scaling: VolumeScaling,
    slow_weights: Option<Vec<f64>>,
    coeffs: Vec<f64>,
}

impl ReactionNetwork {
    pub fn new(
        species: Vec<String>,
        reactions: Vec<Reaction>,
        volume: f64,
        scaling: VolumeScaling,
        slow_weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        let l = species.len();
        if l == 0 {
            return Err(Error::Network("network needs at least one species".into()));
        }
        if !(volume > 0.0) || !volume.is_finite() {
            return Err(Error::Network(format!("volume must be positive, got {volume}")));
        }
        for (j, r) in reactions.iter().enumerate() {
            if r.stoich.len() != l {
                return Err(Error::Network(format!(
                    "reaction {} has {} stoichiometric entries, expected {l}",
                    j + 1,
                    r.stoich.len()
                )));
            }
        }
        if let Some(w) = &slow_weights {
            if w.len() != l || w.iter().all(|&v| v == 0.0) {
                return Err(Error::Network("slow weights must be a nonzero vector of length ℓ".into()));
            }
        }
        let mut net = Self {
            species,
            reactions,
            volume,
            scaling,
            slow_weights,
            coeffs: Vec::new(),
        };
        net.refresh_coeffs();
        Ok(net)
    }

    fn refresh_coeffs(&mut self) {
        let v = self.volume;
        let scaling = self.scaling;
        self.coeffs = self
            .reactions
            .iter()
            .map(|r| match scaling {
                VolumeScaling::Stated => r.rate * v.powi(1 - r.law.order()),
                VolumeScaling::Table => r.rate,
            })
            .collect();
    }

    pub fn num_species(&self) -> usize {
        self.species.len()
    }

    pub fn num_reactions(&self) -> usize {
        self.reactions.len()
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn scaling(&self) -> VolumeScaling {
        self.scaling
    }

    pub fn slow_weights(&self) -> Option<&[f64]> {
        self.slow_weights.as_deref()
    }

    /// Effective propensity coefficients after volume scaling.
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn stoich(&self, j: usize) -> &[i64] {
        &self.reactions[j].stoich
    }

    /// Copy of the network under a different volume convention.
    pub fn with_scaling(&self, scaling: VolumeScaling) -> Self {
        let mut out = self.clone();
        out.scaling = scaling;
        out.refresh_coeffs();
        out
    }

    /// Copy with every rate constant multiplied by `c`.
    pub fn rescaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for r in &mut out.reactions {
            r.rate *= c;
        }
        out.refresh_coeffs();
        out
    }

    pub fn with_slow_weights(&self, w: Option<Vec<f64>>) -> Result<Self> {
        Self::new(self.species.clone(), self.reactions.clone(), self.volume, self.scaling, w)
    }

    /// Propensities at an integer state.
    pub fn propensities(&self, x: &[i64]) -> Result<Vec<f64>> {
        if x.len() != self.num_species() {
            return Err(Error::Domain(format!("state has length {}, expected {}", x.len(), self.num_species())));
        }
        if x.iter().any(|&v| v < 0) {
            return Err(Error::Domain(format!("negative population in state {x:?}")));
        }
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let mut out = vec![0.0; self.num_reactions()];
        self.propensities_into(&xf, &mut out);
        Ok(out)
    }

    /// Propensities at a real-valued state, written into `out`; returns `α0`.
    ///
    /// No sign check is made. Integer callers go through [`propensities`].
    ///
    /// [`propensities`]: ReactionNetwork::propensities
    #[inline]
    pub fn propensities_into(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for ((r, c), o) in self.reactions.iter().zip(&self.coeffs).zip(out.iter_mut()) {
            let a = c * r.law.combinatorial(x);
            *o = a;
            total += a;
        }
        total
    }

    /// `w · x` when slow weights are known.
    pub fn slow_value(&self, x: &[i64]) -> Option<f64> {
        self.slow_weights
            .as_ref()
            .map(|w| w.iter().zip(x).map(|(a, &b)| a * b as f64).sum())
    }
}

/// Axis-aligned integer box `[lo, hi]` with a row-major index, species 1 fastest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeDomain {
    lo: Vec<i64>,
    hi: Vec<i64>,
    strides: Vec<usize>,
    len: usize,
}

impl LatticeDomain {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Domain("lo and hi must be non-empty and of equal length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::Domain(format!("empty box: lo {lo:?} exceeds hi {hi:?}")));
        }
        let mut strides = Vec::with_capacity(lo.len());
        let mut len = 1usize;
        for (a, b) in lo.iter().zip(&hi) {
            strides.push(len);
            len *= (b - a + 1) as usize;
        }
        Ok(Self { lo, hi, strides, len })
    }

    pub fn square(lo: i64, hi: i64) -> Result<Self> {
        Self::new(vec![lo, lo], vec![hi, hi])
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn hi(&self) -> &[i64] {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Number of lattice points `N`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn extent(&self, axis: usize) -> usize {
        (self.hi[axis] - self.lo[axis] + 1) as usize
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.lo).zip(&self.hi).all(|((v, a), b)| v >= a && v <= b)
    }

    /// Zero-based node index of `x`.
    pub fn index(&self, x: &[i64]) -> Result<usize> {
        if !self.contains(x) {
            return Err(Error::Domain(format!("state {x:?} lies outside the domain")));
        }
        Ok(self.index_unchecked(x))
    }

    #[inline]
    pub fn index_unchecked(&self, x: &[i64]) -> usize {
        x.iter()
            .zip(&self.lo)
            .zip(&self.strides)
            .map(|((v, a), s)| (v - a) as usize * s)
            .sum()
    }

    /// Lattice point of a zero-based node index.
    pub fn state(&self, index: usize) -> Vec<i64> {
        let mut out = vec![0; self.dim()];
        self.state_into(index, &mut out);
        out
    }

    #[inline]
    pub fn state_into(&self, index: usize, out: &mut [i64]) {
        let mut rem = index;
        for (k, o) in out.iter_mut().enumerate() {
            let ext = self.extent(k);
            *o = self.lo[k] + (rem % ext) as i64;
            rem /= ext;
        }
    }

    /// Chebyshev distance from `x` to the nearest face of the box.
    pub fn boundary_distance(&self, x: &[i64]) -> i64 {
        x.iter()
            .zip(&self.lo)
            .zip(&self.hi)
            .map(|((v, a), b)| (v - a).min(b - v))
            .min()
            .unwrap_or(0)
    }

    pub fn states(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len).map(move |i| self.state(i))
    }
}

/// CS-I: `∅ → X1 ⇌ X2 → ∅` on `[50,150]²` with slow variable `(x1 + x2) / 2`.
pub fn builtin_cs1() -> (ReactionNetwork, LatticeDomain) {
    let reactions = vec![
        Reaction::new(vec![1, 0], RateLaw::Constant, 100.0),
        Reaction::new(vec![-1, 1], RateLaw::Linear(0), 200.0),
        Reaction::new(vec![1, -1], RateLaw::Linear(1), 200.0),
        Reaction::new(vec![0, -1], RateLaw::Linear(1), 1.0),
    ]
    .into_iter()
    .collect::<Result<Vec<_>>>()
    .expect("built-in reactions are valid");
    let net = ReactionNetwork::new(
        vec!["X1".into(), "X2".into()],
        reactions,
        1.0,
        VolumeScaling::Stated,
        Some(vec![0.5, 0.5]),
    )
    .expect("built-in network is valid");
    (net, LatticeDomain::square(50, 150).expect("valid box"))
}

/// CS-II volume.
pub const CS2_VOLUME: f64 = 8.0;

/// CS-II: `X2 ⇌ X1 + X2`, `∅ ⇌ X1`, `2 X1 ⇌ X2` on `[1,110]²`, slow variable `x1 + 2 x2`.
pub fn builtin_cs2_with(scaling: VolumeScaling) -> (ReactionNetwork, LatticeDomain) {
    let v = CS2_VOLUME;
    let reactions = vec![
        Reaction::new(vec![1, 0], RateLaw::Linear(1), 32.0),
        Reaction::new(vec![-1, 0], RateLaw::Bilinear(0, 1), 0.04 * v),
        Reaction::new(vec![1, 0], RateLaw::Constant, 1475.0 / v),
        Reaction::new(vec![-1, 0], RateLaw::Linear(0), 19.75),
        Reaction::new(vec![-2, 1], RateLaw::PairQuadratic(0), 10.0 * v),
        Reaction::new(vec![2, -1], RateLaw::Linear(1), 4000.0),
    ]
    .into_iter()
    .collect::<Result<Vec<_>>>()
    .expect("built-in reactions are valid");
    let net = ReactionNetwork::new(
        vec!["X1".into(), "X2".into()],
        reactions,
        v,
        scaling,
        Some(vec![1.0, 2.0]),
    )
    .expect("built-in network is valid");
    (net, LatticeDomain::square(1, 110).expect("valid box"))
}

pub fn builtin_cs2() -> (ReactionNetwork, LatticeDomain) {
    builtin_cs2_with(VolumeScaling::Stated)
}

/// Definition read from a key–value network file.
#[derive(Debug, Clone)]
pub struct NetworkFile {
    pub network: ReactionNetwork,
    pub domain: Option<LatticeDomain>,
}

/// Parses the key–value network format:
///
/// ```text
/// species = X1, X2
/// volume = 8
/// convention = stated
/// slow_weights = 1, 2
/// domain = 1..110, 1..110
/// reaction = X2 -> X1 + X2 @ 32
/// reaction = 2 X1 -> X2 @ 80
/// reaction = 0 -> X1 @ 184.375
/// ```
///
/// `#` starts a comment; `0` or `∅` denotes the empty complex.
pub fn parse_network(text: &str) -> Result<NetworkFile> {
    let mut species: Option<Vec<String>> = None;
    let mut volume = 1.0;
    let mut scaling = VolumeScaling::Stated;
    let mut weights = None;
    let mut domain_spec: Option<String> = None;
    let mut raw_reactions = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Network(format!("line {}: expected `key = value`", lineno + 1)))?;
        let value = value.trim();
        match key.trim() {
            "species" => species = Some(value.split(',').map(|s| s.trim().to_string()).collect()),
            "volume" => volume = parse_f64(value, lineno)?,
            "convention" => scaling = value.parse()?,
            "slow_weights" => {
                weights = Some(value.split(',').map(|v| parse_f64(v, lineno)).collect::<Result<Vec<_>>>()?)
            }
            "domain" => domain_spec = Some(value.to_string()),
            "reaction" => raw_reactions.push((lineno, value.to_string())),
            other => return Err(Error::Network(format!("line {}: unknown key `{other}`", lineno + 1))),
        }
    }

    let species = species.ok_or_else(|| Error::Network("missing `species`".into()))?;
    let reactions = raw_reactions
        .iter()
        .map(|(ln, r)| parse_reaction(r, &species).map_err(|e| Error::Network(format!("line {}: {e}", ln + 1))))
        .collect::<Result<Vec<_>>>()?;
    let network = ReactionNetwork::new(species, reactions, volume, scaling, weights)?;
    let domain = domain_spec
        .map(|d| {
            let mut lo = Vec::new();
            let mut hi = Vec::new();
            for part in d.split(',') {
                let (a, b) = part
                    .trim()
                    .split_once("..")
                    .ok_or_else(|| Error::Network(format!("bad domain range `{part}`")))?;
                lo.push(a.trim().parse::<i64>().map_err(|e| Error::Network(e.to_string()))?);
                hi.push(b.trim().parse::<i64>().map_err(|e| Error::Network(e.to_string()))?);
            }
            LatticeDomain::new(lo, hi)
        })
        .transpose()?;
    Ok(NetworkFile { network, domain })
}

fn parse_f64(s: &str, lineno: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Network(format!("line {}: {e}", lineno + 1)))
}

fn parse_complex(side: &str, species: &[String]) -> Result<Vec<i64>> {
    let mut counts = vec![0i64; species.len()];
    let side = side.trim();
    if side == "0" || side == "∅" || side.is_empty() {
        return Ok(counts);
    }
    for term in side.split('+') {
        let term = term.trim();
        let (coef, name) = match term.split_once(char::is_whitespace) {
            Some((c, n)) if c.chars().all(|ch| ch.is_ascii_digit()) => {
                (c.parse::<i64>().map_err(|e| Error::Network(e.to_string()))?, n.trim())
            }
            _ => (1, term),
        };
        let idx = species
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Network(format!("unknown species `{name}`")))?;
        counts[idx] += coef;
    }
    Ok(counts)
}

fn parse_reaction(text: &str, species: &[String]) -> Result<Reaction> {
    let (lhs, rest) = text
        .split_once("->")
        .ok_or_else(|| Error::Network("reaction needs `->`".into()))?;
    let (rhs, rate) = rest
        .split_once('@')
        .ok_or_else(|| Error::Network("reaction needs `@ rate`".into()))?;
    let reactants = parse_complex(lhs, species)?;
    let products = parse_complex(rhs, species)?;
    let rate: f64 = rate.trim().parse().map_err(|e| Error::Network(format!("bad rate: {e}")))?;
    let active: Vec<(usize, i64)> = reactants.iter().copied().enumerate().filter(|(_, c)| *c > 0).collect();
    let law = match active.as_slice() {
        [] => RateLaw::Constant,
        [(i, 1)] => RateLaw::Linear(*i),
        [(i, 2)] => RateLaw::PairQuadratic(*i),
        [(i, 1), (j, 1)] => RateLaw::Bilinear(*i, *j),
        _ => return Err(Error::Network("only reactions of order ≤ 2 are supported".into())),
    };
    let stoich = products.iter().zip(&reactants).map(|(p, r)| p - r).collect();
    Reaction::new(stoich, law, rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cs1_propensities() {
        let (net, _) = builtin_cs1();
        assert_eq!(net.propensities(&[100, 100]).unwrap(), vec![100.0, 20000.0, 20000.0, 100.0]);
        assert_eq!(net.propensities(&[0, 0]).unwrap(), vec![100.0, 0.0, 0.0, 0.0]);
        assert!(matches!(net.propensities(&[-1, 3]), Err(Error::Domain(_))));
    }

    #[test]
    fn cs2_table_reproduces_tabulated_propensities() {
        let (net, _) = builtin_cs2_with(VolumeScaling::Table);
        // (state, [α1..α6]) with zero where the table has no row.
        let rows: [([i64; 2], [f64; 6]); 4] = [
            ([1, 3], [96.0, 0.96, 184.38, 19.75, 0.0, 12000.0]),
            ([3, 2], [64.0, 1.92, 184.38, 59.25, 480.0, 8000.0]),
            ([5, 1], [32.0, 1.6, 184.38, 98.75, 1600.0, 4000.0]),
            ([7, 0], [0.0, 0.0, 184.38, 138.25, 3360.0, 0.0]),
        ];
        for (x, expected) in rows {
            let a = net.propensities(&x).unwrap();
            for (got, want) in a.iter().zip(expected) {
                assert!((got - want).abs() < 0.005 + 1e-12, "{x:?}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn cs2_stated_convention() {
        let (net, dom) = builtin_cs2();
        assert_eq!(dom.len(), 12100);
        let a = net.propensities(&[3, 2]).unwrap();
        assert!((a[1] - 0.04 * 6.0).abs() < 1e-12);
        assert!((a[2] - 1475.0).abs() < 1e-9);
        assert!((a[4] - 60.0).abs() < 1e-9);
        assert_eq!(net.stoich(4), &[-2, 1]);
        assert_eq!(net.slow_value(&[1, 3]), Some(7.0));
    }

    #[test]
    fn cs1_builtin_facts() {
        let (net, dom) = builtin_cs1();
        assert_eq!(dom.len(), 10201);
        assert_eq!(net.stoich(1), &[-1, 1]);
        assert_eq!(net.slow_value(&[100, 100]), Some(100.0));
    }

    #[test]
    fn index_round_trip_and_order() {
        let (_, dom) = builtin_cs1();
        assert_eq!(dom.index(&[50, 50]).unwrap(), 0);
        assert_eq!(dom.index(&[150, 150]).unwrap(), dom.len() - 1);
        assert_eq!(dom.index(&[51, 50]).unwrap(), 1);
        assert!(dom.index(&[49, 50]).is_err());
        for i in 0..dom.len() {
            assert_eq!(dom.index(&dom.state(i)).unwrap(), i);
        }
    }

    #[test]
    fn rejects_bad_reactions() {
        assert!(Reaction::new(vec![0, 0], RateLaw::Constant, 1.0).is_err());
        assert!(Reaction::new(vec![1, 0], RateLaw::Constant, -1.0).is_err());
        assert!(Reaction::new(vec![1, 0], RateLaw::Linear(2), 1.0).is_err());
    }

    #[test]
    fn parses_network_file() {
        let text = "\
species = X1, X2
volume = 8
convention = table
slow_weights = 1, 2
domain = 1..110, 1..110
reaction = X2 -> X1 + X2 @ 32
reaction = X1 + X2 -> X2 @ 0.32
reaction = 0 -> X1 @ 184.375
reaction = X1 -> 0 @ 19.75
reaction = 2 X1 -> X2 @ 80   # dimerisation
reaction = X2 -> 2 X1 @ 4000
";
        let parsed = parse_network(text).unwrap();
        let (table, dom) = builtin_cs2_with(VolumeScaling::Table);
        assert_eq!(parsed.domain.as_ref(), Some(&dom));
        let a = parsed.network.propensities(&[3, 2]).unwrap();
        let b = table.propensities(&[3, 2]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
        assert_eq!(parsed.network.reactions()[4].law, RateLaw::PairQuadratic(0));
        assert!(parse_network("species = A\nreaction = B -> A @ 1").is_err());
    }
}
