//! Reference-point non-dominated sorting genetic algorithm (maximisation).

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::genome::{ALLELE_MAX, ALLELE_MIN};

/// Das-Dennis lattice: every point with coordinates `i / partitions`
/// summing to one.
pub fn reference_points(objectives: usize, partitions: usize) -> Result<Vec<Vec<f64>>> {
    if objectives < 2 || partitions < 1 {
        return Err(Error::Config("reference points need at least 2 objectives and 1 partition".into()));
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(objectives);
    lattice(objectives, partitions, partitions, &mut current, &mut out);
    Ok(out)
}

fn lattice(m: usize, p: usize, left: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
    if current.len() + 1 == m {
        current.push(left);
        out.push(current.iter().map(|&i| i as f64 / p as f64).collect());
        current.pop();
        return;
    }
    for i in 0..=left {
        current.push(i);
        lattice(m, p, left - i, current, out);
        current.pop();
    }
}

/// Binomial coefficient `C(partitions + m - 1, m - 1)`.
pub fn reference_point_count(objectives: usize, partitions: usize) -> usize {
    let (n, k) = (partitions + objectives - 1, objectives - 1);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// `a` dominates `b`: no worse everywhere, strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strictly = true;
        }
    }
    strictly
}

/// Fast non-dominated sort. Indices inside each front are ascending.
pub fn nondominated_sort(fitness: &[Vec<f64>]) -> Result<Vec<Vec<usize>>> {
    let n = fitness.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = fitness[0].len();
    if let Some(bad) = fitness.iter().find(|f| f.len() != m) {
        return Err(Error::DimensionMismatch {
            what: "fitness vector",
            expected: m,
            found: bad.len(),
        });
    }
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&fitness[i], &fitness[j]) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            } else if dominates(&fitness[j], &fitness[i]) {
                dominates_list[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    Ok(fronts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SelectOptions {
    /// Always keep the pool's best individual in each single objective.
    pub preserve_objective_champions: bool,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            preserve_objective_champions: true,
        }
    }
}

/// Chooses `k` survivors from `fitness`: whole fronts while they fit,
/// then reference-point niching on the last front.
pub fn nsga3_select<R: Rng + ?Sized>(
    fitness: &[Vec<f64>],
    refs: &[Vec<f64>],
    k: usize,
    opts: SelectOptions,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if fitness.len() < k {
        return Err(Error::InvalidInput(format!("pool of {} cannot supply {k} survivors", fitness.len())));
    }
    let fronts = nondominated_sort(fitness)?;
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut last: Vec<usize> = Vec::new();
    for front in fronts {
        if chosen.len() + front.len() <= k {
            chosen.extend(front);
            if chosen.len() == k {
                return Ok(chosen);
            }
        } else {
            last = front;
            break;
        }
    }
    let m = fitness[0].len();
    if refs.iter().any(|r| r.len() != m) {
        return Err(Error::DimensionMismatch {
            what: "reference point",
            expected: m,
            found: refs.iter().find(|r| r.len() != m).map_or(0, |r| r.len()),
        });
    }

    let candidates: Vec<usize> = chosen.iter().chain(&last).copied().collect();
    let normalised = normalise(fitness, &candidates);
    let assoc: Vec<(usize, f64)> = normalised.iter().map(|p| associate(p, refs)).collect();
    let slot = |idx: usize| candidates.iter().position(|&c| c == idx).unwrap_or(usize::MAX);

    let mut niche = vec![0usize; refs.len()];
    for &c in &chosen {
        niche[assoc[slot(c)].0] += 1;
    }
    let mut remaining: Vec<usize> = last.clone();

    if opts.preserve_objective_champions {
        for obj in 0..m {
            // ties: any holder of the best value counts, the dominated ones never reach here
            let best = fitness.iter().map(|f| f[obj]).fold(f64::NEG_INFINITY, f64::max);
            if chosen.len() < k && !chosen.iter().any(|&c| fitness[c][obj] == best) {
                if let Some(pos) = remaining.iter().position(|&r| fitness[r][obj] == best) {
                    let best = remaining[pos];
                    remaining.remove(pos);
                    chosen.push(best);
                    niche[assoc[slot(best)].0] += 1;
                }
            }
        }
    }

    let mut excluded = vec![false; refs.len()];
    while chosen.len() < k {
        let min_count = (0..refs.len()).filter(|&j| !excluded[j]).map(|j| niche[j]).min().ok_or_else(|| {
            Error::InvalidInput("niching ran out of reference points".into())
        })?;
        let lightest: Vec<usize> = (0..refs.len()).filter(|&j| !excluded[j] && niche[j] == min_count).collect();
        let j = *lightest.choose(rng).expect("nonempty by construction");
        let members: Vec<usize> = remaining.iter().copied().filter(|&r| assoc[slot(r)].0 == j).collect();
        if members.is_empty() {
            excluded[j] = true;
            continue;
        }
        let pick = if niche[j] == 0 {
            *members
                .iter()
                .min_by(|&&a, &&b| assoc[slot(a)].1.total_cmp(&assoc[slot(b)].1))
                .expect("nonempty")
        } else {
            *members.choose(rng).expect("nonempty")
        };
        remaining.retain(|&r| r != pick);
        chosen.push(pick);
        niche[j] += 1;
    }
    Ok(chosen)
}

/// Normalised objective vectors for `members`, in minimisation form.
fn normalise(fitness: &[Vec<f64>], members: &[usize]) -> Vec<Vec<f64>> {
    let m = fitness[0].len();
    let pts: Vec<Vec<f64>> = members.iter().map(|&i| fitness[i].iter().map(|v| -v).collect()).collect();
    let ideal: Vec<f64> = (0..m).map(|j| pts.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min)).collect();
    let shifted: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().zip(&ideal).map(|(v, z)| v - z).collect()).collect();

    // extreme point per axis by achievement scalarising function
    let extremes: Vec<usize> = (0..m)
        .map(|axis| {
            let asf = |p: &Vec<f64>| {
                p.iter()
                    .enumerate()
                    .map(|(j, v)| v / if j == axis { 1.0 } else { 1e-6 })
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            (0..shifted.len()).min_by(|&a, &b| asf(&shifted[a]).total_cmp(&asf(&shifted[b]))).unwrap_or(0)
        })
        .collect();
    let nadir: Vec<f64> = (0..m).map(|j| shifted.iter().map(|p| p[j]).fold(0.0, f64::max)).collect();
    let intercepts = hyperplane_intercepts(&shifted, &extremes)
        .filter(|a| a.iter().all(|x| x.is_finite() && *x > 1e-10))
        .unwrap_or_else(|| nadir.clone());
    let denom: Vec<f64> = intercepts.iter().map(|&a| if a > 1e-10 { a } else { 1.0 }).collect();
    shifted.iter().map(|p| p.iter().zip(&denom).map(|(v, d)| v / d).collect()).collect()
}

fn hyperplane_intercepts(shifted: &[Vec<f64>], extremes: &[usize]) -> Option<Vec<f64>> {
    let m = extremes.len();
    let a = DMatrix::from_fn(m, m, |i, j| shifted[extremes[i]][j]);
    let b = DVector::from_element(m, 1.0);
    let sol = a.lu().solve(&b)?;
    if sol.iter().any(|&x| !(x > 0.0)) {
        return None;
    }
    Some(sol.iter().map(|x| 1.0 / x).collect())
}

/// Nearest reference direction and perpendicular distance to it.
fn associate(point: &[f64], refs: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, r) in refs.iter().enumerate() {
        let rr: f64 = r.iter().map(|x| x * x).sum();
        let pr: f64 = point.iter().zip(r).map(|(p, x)| p * x).sum();
        let t = if rr > 0.0 { pr / rr } else { 0.0 };
        let d2: f64 = point.iter().zip(r).map(|(p, x)| (p - t * x).powi(2)).sum();
        if d2 < best.1 {
            best = (j, d2);
        }
    }
    (best.0, best.1.sqrt())
}

/// Random pairing, uniform per-allele crossover with probability
/// `p_crossover` per pair, then per-allele resampling with probability
/// `p_mutation`.
pub fn vary<R: Rng + ?Sized>(parents: &[Vec<u8>], p_crossover: f64, p_mutation: f64, rng: &mut R) -> Vec<Vec<u8>> {
    let mut order: Vec<usize> = (0..parents.len()).collect();
    order.shuffle(rng);
    let mut offspring: Vec<Vec<u8>> = order.iter().map(|&i| parents[i].clone()).collect();
    for pair in offspring.chunks_mut(2) {
        if let [a, b] = pair {
            if rng.gen::<f64>() < p_crossover {
                for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                    if rng.gen::<bool>() {
                        std::mem::swap(x, y);
                    }
                }
            }
        }
    }
    for child in &mut offspring {
        for allele in child.iter_mut() {
            if rng.gen::<f64>() < p_mutation {
                *allele = rng.gen_range(ALLELE_MIN..=ALLELE_MAX);
            }
        }
    }
    offspring
}

/// Area dominated by a two-objective point set above `reference`.
pub fn hypervolume_2d(points: &[Vec<f64>], reference: [f64; 2]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p[0] > reference[0] && p[1] > reference[1])
        .map(|p| (p[0], p[1]))
        .collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut area = 0.0;
    let mut best_y = reference[1];
    for (x, y) in pts {
        if y > best_y {
            area += (x - reference[0]) * (y - best_y);
            best_y = y;
        }
    }
    area
}
