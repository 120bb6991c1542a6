//! Integer genotypes and their decoding into networks and body parameters.
//!
//! Every allele is an integer in `1..=10` mapped linearly onto its parameter
//! range, endpoints included: `low + (v - 1) (high - low) / 9`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::body::JointCommandParams;
use crate::error::{Error, Result};
use crate::neuro::{NetworkSpec, NeuronParams, NeuronRole, NETWORK_SCHEMA_VERSION};
use crate::stimulus::FilterWiring;

pub const ALLELE_MIN: u8 = 1;
pub const ALLELE_MAX: u8 = 10;

/// Time constant shared by every neuron (s).
pub const NEURON_T0: f64 = 0.052;

pub const CPG_GENOME_LEN: usize = 32;
pub const FILTER_GENOME_LEN: usize = 62;
pub const FILTER_SIZE: usize = 6;
pub const LIMBS: usize = 4;
pub const CPG_SIZE: usize = 3 * LIMBS;

/// Limb order used throughout: left-front, right-front, left-hind, right-hind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Limb {
    LeftFront = 0,
    RightFront = 1,
    LeftHind = 2,
    RightHind = 3,
}

impl Limb {
    pub const ALL: [Limb; 4] = [Limb::LeftFront, Limb::RightFront, Limb::LeftHind, Limb::RightHind];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn mirror(self) -> Limb {
        match self {
            Limb::LeftFront => Limb::RightFront,
            Limb::RightFront => Limb::LeftFront,
            Limb::LeftHind => Limb::RightHind,
            Limb::RightHind => Limb::LeftHind,
        }
    }

    pub fn is_left(self) -> bool {
        matches!(self, Limb::LeftFront | Limb::LeftHind)
    }

    pub fn is_front(self) -> bool {
        matches!(self, Limb::LeftFront | Limb::RightFront)
    }

    pub fn interneuron(self) -> usize {
        3 * self.index()
    }

    pub fn motor_a(self) -> usize {
        3 * self.index() + 1
    }

    pub fn motor_b(self) -> usize {
        3 * self.index() + 2
    }
}

/// Left/right permutation of CPG neuron indices.
pub fn cpg_mirror() -> Vec<usize> {
    (0..CPG_SIZE)
        .map(|i| Limb::ALL[i / 3].mirror().index() * 3 + i % 3)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenomeKind {
    Cpg,
    Filter,
}

impl GenomeKind {
    pub fn name(self) -> &'static str {
        match self {
            GenomeKind::Cpg => "cpg",
            GenomeKind::Filter => "filter",
        }
    }

    pub fn param_map(self) -> ParamMap {
        match self {
            GenomeKind::Cpg => ParamMap::cpg(),
            GenomeKind::Filter => ParamMap::filter(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

impl ParamEntry {
    fn new(name: impl Into<String>, low: f64, high: f64) -> Self {
        Self {
            name: name.into(),
            low,
            high,
        }
    }

    pub fn decode(&self, allele: u8) -> f64 {
        match allele {
            ALLELE_MIN => self.low,
            ALLELE_MAX => self.high,
            _ => self.low + f64::from(allele - ALLELE_MIN) * (self.high - self.low) / 9.0,
        }
    }

    /// Nearest allele for a value inside the range.
    pub fn encode(&self, value: f64) -> u8 {
        let frac = (value - self.low) / (self.high - self.low);
        let step = (frac * 9.0).round().clamp(0.0, 9.0);
        step as u8 + ALLELE_MIN
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamMap {
    pub kind: GenomeKind,
    pub entries: Vec<ParamEntry>,
}

/// Names of the 6 within-limb weight classes (target <- source).
pub const WITHIN_LIMB_CLASSES: [&str; 6] = ["w_a_from_in", "w_in_from_a", "w_b_from_in", "w_in_from_b", "w_b_from_a", "w_a_from_b"];

/// Names of the 6 interneuron weight classes.
pub const INTERLIMB_CLASSES: [&str; 6] = [
    "w_ipsi_front_to_hind",
    "w_ipsi_hind_to_front",
    "w_contra_front",
    "w_contra_hind",
    "w_diag_front_to_hind",
    "w_diag_hind_to_front",
];

impl ParamMap {
    pub fn cpg() -> Self {
        let mut e = vec![
            ParamEntry::new("gamma", 0.01, 0.1),
            ParamEntry::new("a", 0.2, 2.0),
            ParamEntry::new("b", 0.02, 0.2),
            ParamEntry::new("kappa", 0.5, 5.0),
            ParamEntry::new("u0", 0.1, 1.0),
        ];
        for role in ["in", "a", "b"] {
            e.push(ParamEntry::new(format!("c_{role}"), 1.1, 2.0));
            e.push(ParamEntry::new(format!("d_{role}"), -0.9, 0.9));
        }
        for name in WITHIN_LIMB_CLASSES.iter().chain(INTERLIMB_CLASSES.iter()) {
            e.push(ParamEntry::new(*name, -1.8, 1.8));
        }
        e.extend([
            ParamEntry::new("theta0_hip", 2.7, 27.0),
            ParamEntry::new("theta0_leg", 4.5, 45.0),
            ParamEntry::new("theta0_knee", -7.2, -72.0),
            ParamEntry::new("gain_a", 0.005, 0.05),
            ParamEntry::new("gain_b", 0.005, 0.05),
            ParamEntry::new("q_a_front", -0.45, 0.45),
            ParamEntry::new("q_b_front", -0.45, 0.45),
            ParamEntry::new("q_a_side", -0.45, 0.45),
            ParamEntry::new("q_b_side", -0.45, 0.45),
        ]);
        Self {
            kind: GenomeKind::Cpg,
            entries: e,
        }
    }

    pub fn filter() -> Self {
        let mut e = Vec::with_capacity(FILTER_GENOME_LEN);
        for i in 0..FILTER_SIZE {
            e.push(ParamEntry::new(format!("G_{i}"), -1.0, 1.0));
        }
        for i in 0..FILTER_SIZE {
            for k in 0..LIMBS {
                e.push(ParamEntry::new(format!("M_{i}_{k}"), -10.0, 10.0));
            }
        }
        for i in 0..FILTER_SIZE {
            for j in (0..FILTER_SIZE).filter(|&j| j != i) {
                e.push(ParamEntry::new(format!("w_{i}_{j}"), -1.2, 0.0));
            }
        }
        e.push(ParamEntry::new("c", 2.0, 2.5));
        e.push(ParamEntry::new("lowpass_tau", 0.05, 0.55));
        Self {
            kind: GenomeKind::Filter,
            entries: e,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    /// Short hash of the names and ranges; persisted with genomes so that a
    /// stored allele vector is never decoded against a different map.
    pub fn version_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.kind.name().as_bytes());
        for e in &self.entries {
            hasher.update(format!("{}:{:?}:{:?};", e.name, e.low, e.high).as_bytes());
        }
        hasher.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Maps alleles to parameter values.
    pub fn decode(&self, genome: &Genome) -> Result<Vec<f64>> {
        genome.validate_against(self)?;
        Ok(self.entries.iter().zip(&genome.alleles).map(|(e, &a)| e.decode(a)).collect())
    }

    pub fn encode(&self, values: &[f64]) -> Result<Genome> {
        if values.len() != self.len() {
            return Err(Error::GenomeLength {
                kind: self.kind.name(),
                expected: self.len(),
                found: values.len(),
            });
        }
        Ok(Genome {
            kind: self.kind,
            alleles: self.entries.iter().zip(values).map(|(e, &v)| e.encode(v)).collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Genome {
    pub kind: GenomeKind,
    pub alleles: Vec<u8>,
}

impl Genome {
    pub fn new(kind: GenomeKind, alleles: Vec<u8>) -> Result<Self> {
        let g = Self { kind, alleles };
        g.validate_against(&kind.param_map())?;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.alleles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alleles.is_empty()
    }

    pub fn validate_alleles(&self) -> Result<()> {
        match self.alleles.iter().position(|a| !(ALLELE_MIN..=ALLELE_MAX).contains(a)) {
            Some(index) => Err(Error::InvalidAllele {
                index,
                value: self.alleles[index],
            }),
            None => Ok(()),
        }
    }

    fn validate_against(&self, map: &ParamMap) -> Result<()> {
        if self.kind != map.kind {
            return Err(Error::Config(format!(
                "genome kind {} does not match map kind {}",
                self.kind.name(),
                map.kind.name()
            )));
        }
        if self.alleles.len() != map.len() {
            return Err(Error::GenomeLength {
                kind: map.kind.name(),
                expected: map.len(),
                found: self.alleles.len(),
            });
        }
        self.validate_alleles()
    }

    pub fn to_record(&self) -> GenomeRecord {
        GenomeRecord {
            kind: self.kind,
            map_version: self.kind.param_map().version_hash(),
            alleles: self.alleles.clone(),
        }
    }
}

/// Uniform alleles in `1..=10`.
pub fn random_genome<R: Rng + ?Sized>(kind: GenomeKind, rng: &mut R) -> Genome {
    let len = match kind {
        GenomeKind::Cpg => CPG_GENOME_LEN,
        GenomeKind::Filter => FILTER_GENOME_LEN,
    };
    random_alleles(kind, len, rng)
}

pub fn random_alleles<R: Rng + ?Sized>(kind: GenomeKind, len: usize, rng: &mut R) -> Genome {
    Genome {
        kind,
        alleles: (0..len).map(|_| rng.gen_range(ALLELE_MIN..=ALLELE_MAX)).collect(),
    }
}

/// On-disk genome: allele array with its kind and the map version it was
/// produced under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenomeRecord {
    pub kind: GenomeKind,
    pub map_version: String,
    pub alleles: Vec<u8>,
}

impl GenomeRecord {
    pub fn into_genome(self) -> Result<Genome> {
        let expected = self.kind.param_map().version_hash();
        if self.map_version != expected {
            return Err(Error::Config(format!(
                "genome map version {} does not match current {} map {}",
                self.map_version,
                self.kind.name(),
                expected
            )));
        }
        Genome::new(self.kind, self.alleles)
    }
}

/// Which directed neuron links each evolvable weight class populates,
/// as `(target, source)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpgTopology {
    pub classes: Vec<WeightClass>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightClass {
    pub name: String,
    pub links: Vec<(usize, usize)>,
}

impl Default for CpgTopology {
    fn default() -> Self {
        use Limb::*;
        let per_limb = |f: fn(Limb) -> (usize, usize)| Limb::ALL.iter().map(|&l| f(l)).collect::<Vec<_>>();
        let within: [Vec<(usize, usize)>; 6] = [
            per_limb(|l| (l.motor_a(), l.interneuron())),
            per_limb(|l| (l.interneuron(), l.motor_a())),
            per_limb(|l| (l.motor_b(), l.interneuron())),
            per_limb(|l| (l.interneuron(), l.motor_b())),
            per_limb(|l| (l.motor_b(), l.motor_a())),
            per_limb(|l| (l.motor_a(), l.motor_b())),
        ];
        let link = |to: Limb, from: Limb| (to.interneuron(), from.interneuron());
        let between: [Vec<(usize, usize)>; 6] = [
            vec![link(LeftHind, LeftFront), link(RightHind, RightFront)],
            vec![link(LeftFront, LeftHind), link(RightFront, RightHind)],
            vec![link(LeftFront, RightFront), link(RightFront, LeftFront)],
            vec![link(LeftHind, RightHind), link(RightHind, LeftHind)],
            vec![link(RightHind, LeftFront), link(LeftHind, RightFront)],
            vec![link(RightFront, LeftHind), link(LeftFront, RightHind)],
        ];
        let names = WITHIN_LIMB_CLASSES.iter().chain(INTERLIMB_CLASSES.iter());
        Self {
            classes: names
                .zip(within.into_iter().chain(between))
                .map(|(name, links)| WeightClass {
                    name: name.to_string(),
                    links,
                })
                .collect(),
        }
    }
}

/// Decoded CPG genome: network plus joint mapping and feedback gains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpgParameters {
    pub spec: NetworkSpec,
    pub cmd: JointCommandParams,
}

pub fn decode_cpg(genome: &Genome) -> Result<CpgParameters> {
    decode_cpg_with(genome, &CpgTopology::default())
}

pub fn decode_cpg_with(genome: &Genome, topology: &CpgTopology) -> Result<CpgParameters> {
    let map = ParamMap::cpg();
    let x = map.decode(genome)?;
    if topology.classes.len() != 12 {
        return Err(Error::Config(format!(
            "CPG topology must define 12 weight classes, got {}",
            topology.classes.len()
        )));
    }
    let base = NeuronParams {
        t0: NEURON_T0,
        gamma: x[0],
        a: x[1],
        b: x[2],
        kappa: x[3],
        u0: x[4],
        c: 0.0,
        d: 0.0,
        g: 0.0,
    };
    let role_params = |k: usize| NeuronParams {
        c: x[5 + 2 * k],
        d: x[6 + 2 * k],
        ..base
    };
    let roles = [NeuronRole::Interneuron, NeuronRole::MotorA, NeuronRole::MotorB];
    let mut params = Vec::with_capacity(CPG_SIZE);
    let mut role_labels = Vec::with_capacity(CPG_SIZE);
    for _ in Limb::ALL {
        for (k, role) in roles.iter().enumerate() {
            params.push(role_params(k));
            role_labels.push(*role);
        }
    }
    let mut w = vec![vec![0.0; CPG_SIZE]; CPG_SIZE];
    for (k, class) in topology.classes.iter().enumerate() {
        for &(to, from) in &class.links {
            if to >= CPG_SIZE || from >= CPG_SIZE || to == from {
                return Err(Error::Config(format!("invalid link ({to}, {from}) in class {}", class.name)));
            }
            w[to][from] = x[11 + k];
        }
    }
    let spec = NetworkSpec {
        schema_version: NETWORK_SCHEMA_VERSION,
        params,
        w,
        tau: vec![vec![0.0; CPG_SIZE]; CPG_SIZE],
        roles: role_labels,
        mirror: cpg_mirror(),
    };
    spec.validate()?;
    if !spec.is_laterally_symmetric() {
        return Err(Error::Config("CPG topology breaks lateral symmetry".into()));
    }
    let cmd = JointCommandParams {
        theta0_hip: x[23],
        theta0_leg: x[24],
        theta0_knee: x[25],
        theta_lim_leg: 90.0,
        theta_lim_knee: 90.0,
        gain_a: x[26],
        gain_b: x[27],
        q_a_front: x[28],
        q_b_front: x[29],
        q_a_side: x[30],
        q_b_side: x[31],
    };
    Ok(CpgParameters { spec, cmd })
}

pub fn decode_filter(genome: &Genome) -> Result<FilterWiring> {
    let map = ParamMap::filter();
    let x = map.decode(genome)?;
    let g = x[0..FILTER_SIZE].to_vec();
    let m = (0..FILTER_SIZE)
        .map(|i| x[FILTER_SIZE + LIMBS * i..FILTER_SIZE + LIMBS * (i + 1)].to_vec())
        .collect();
    let mut w = vec![vec![0.0; FILTER_SIZE]; FILTER_SIZE];
    let mut k = FILTER_SIZE + FILTER_SIZE * LIMBS;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            if i != j {
                *slot = x[k];
                k += 1;
            }
        }
    }
    Ok(FilterWiring {
        g,
        w,
        m,
        c: x[60],
        lowpass_tau: x[61],
        ..FilterWiring::default()
    })
}
