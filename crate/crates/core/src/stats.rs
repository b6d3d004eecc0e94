//! Per-slot Gaussian fits over the particle symbol cloud and the branch
//! metric ψ_k driving the memory-aware detectors.
//!
//! For slot k with memory L the window is y_k = [s_k, s_{k−1}, …, s_{k−L}]
//! (4(L+1) reals) and the state x_k = [s_{k−1}, …, s_{k−L}] (4L reals). The
//! metric
//!
//! ψ_k(s_k, x_k) = (y−μʸ)ᵀ(Σʸ)⁻¹(y−μʸ) − (x−μˣ)ᵀ(Σˣ)⁻¹(x−μˣ)
//!                 [+ ln det Σʸ − ln det Σˣ]
//!
//! is −2 ln p(y_k)/p(x_k) up to a constant, i.e. −2 ln p(s_k | x_k).

use serde::{Deserialize, Serialize};

use crate::linalg::{regularized_cholesky, Cholesky, SquareMatrix};
use crate::modem::{Constellation, Symbol};
use crate::sdbp::SymbolCloud;
use crate::{Error, Result};

/// Sample mean and unbiased (N_p − 1) covariance of the window at slot k.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowStats {
    pub k: usize,
    pub memory: usize,
    pub mu_y: Vec<f64>,
    /// Row-major 4(L+1) × 4(L+1).
    pub sigma_y: Vec<f64>,
    pub mu_x: Vec<f64>,
    /// Row-major 4L × 4L.
    pub sigma_x: Vec<f64>,
}

impl WindowStats {
    pub fn dim_y(&self) -> usize {
        4 * (self.memory + 1)
    }

    pub fn dim_x(&self) -> usize {
        4 * self.memory
    }

    /// Builds stats from a y-window mean and covariance; the x-part is the
    /// trailing block.
    pub fn from_y(k: usize, memory: usize, mu_y: Vec<f64>, sigma_y: Vec<f64>) -> Result<Self> {
        let dy = 4 * (memory + 1);
        if mu_y.len() != dy || sigma_y.len() != dy * dy {
            return Err(Error::LengthMismatch {
                expected: dy,
                actual: mu_y.len(),
            });
        }
        let dx = 4 * memory;
        let mu_x = mu_y[4..].to_vec();
        let mut sigma_x = Vec::with_capacity(dx * dx);
        for i in 4..dy {
            sigma_x.extend_from_slice(&sigma_y[i * dy + 4..(i + 1) * dy]);
        }
        Ok(WindowStats {
            k,
            memory,
            mu_y,
            sigma_y,
            mu_x,
            sigma_x,
        })
    }
}

fn window(cloud: &SymbolCloud, n: usize, k: usize, memory: usize, out: &mut [f64]) {
    for j in 0..=memory {
        out[4 * j..4 * j + 4].copy_from_slice(cloud.symbol(n, k - j));
    }
}

/// Moments of the window at slot `k` (0-based; requires L ≤ k < K).
pub fn estimate_moments(cloud: &SymbolCloud, k: usize, memory: usize) -> Result<WindowStats> {
    let np = cloud.n_particles();
    if np < 2 {
        return Err(Error::InsufficientParticles(np));
    }
    let big_k = cloud.num_symbols();
    if k < memory || k >= big_k {
        return Err(Error::OutOfRange(format!(
            "slot {k} with memory {memory} does not fit in a block of {big_k} symbols"
        )));
    }
    let d = 4 * (memory + 1);
    let mut y = vec![0.0; d];
    let mut mu = vec![0.0; d];
    for n in 0..np {
        window(cloud, n, k, memory, &mut y);
        mu.iter_mut().zip(&y).for_each(|(m, v)| *m += v);
    }
    mu.iter_mut().for_each(|m| *m /= np as f64);
    let mut sigma = vec![0.0; d * d];
    for n in 0..np {
        window(cloud, n, k, memory, &mut y);
        y.iter_mut().zip(&mu).for_each(|(v, m)| *v -= m);
        for i in 0..d {
            let yi = y[i];
            for j in 0..=i {
                sigma[i * d + j] += yi * y[j];
            }
        }
    }
    let denom = (np - 1) as f64;
    for i in 0..d {
        for j in 0..=i {
            let v = sigma[i * d + j] / denom;
            sigma[i * d + j] = v;
            sigma[j * d + i] = v;
        }
    }
    WindowStats::from_y(k, memory, mu, sigma)
}

/// Diagonal loading Σ + λI with λ = max(floor, relative · tr Σ / dim).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub floor: f64,
    pub relative: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization {
            floor: 1e-12,
            relative: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    /// Add ln det Σʸ − ln det Σˣ. It is the same for every hypothesis at a
    /// slot, so decisions never depend on it; it makes ψ a proper
    /// −2 log-likelihood for reporting.
    pub include_logdet: bool,
    pub regularization: Regularization,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            include_logdet: true,
            regularization: Regularization::default(),
        }
    }
}

/// Factored form of ψ_k for one slot.
///
/// The y-covariance is factored in the order [x; s] so that the whitened
/// state part is shared by all M hypotheses for s_k.
#[derive(Clone, Debug)]
pub struct SlotMetric {
    pub k: usize,
    pub memory: usize,
    mu_y_perm: Vec<f64>,
    chol_y: Cholesky,
    chol_x: Option<Cholesky>,
    offset: f64,
    /// Loading escalations beyond the baseline λ (see [`Regularization`]).
    pub regularization_events: usize,
}

fn matrix(dim: usize, data: &[f64]) -> SquareMatrix {
    SquareMatrix {
        dim,
        data: data.to_vec(),
    }
}

impl SlotMetric {
    pub fn new(stats: &WindowStats, opts: &MetricOptions) -> Self {
        let (dy, dx) = (stats.dim_y(), stats.dim_x());
        // permutation to [x; s]
        let perm: Vec<usize> = (4..dy).chain(0..4).collect();
        let mu_y_perm = perm.iter().map(|&i| stats.mu_y[i]).collect();
        let reg = opts.regularization;
        let (chol_y, ev_y) = regularized_cholesky(&matrix(dy, &stats.sigma_y).permuted(&perm), reg.floor, reg.relative);
        let (chol_x, ev_x) = if dx > 0 {
            let (c, e) = regularized_cholesky(&matrix(dx, &stats.sigma_x), reg.floor, reg.relative);
            (Some(c), e)
        } else {
            (None, 0)
        };
        let offset = if opts.include_logdet {
            chol_y.log_det() - chol_x.as_ref().map_or(0.0, Cholesky::log_det)
        } else {
            0.0
        };
        SlotMetric {
            k: stats.k,
            memory: stats.memory,
            mu_y_perm,
            chol_y,
            chol_x,
            offset,
            regularization_events: ev_y + ev_x,
        }
    }

    /// Per-state precomputation: whitened x-part of the permuted y vector
    /// and the partial metric. `state` is [s_{k−1}, …, s_{k−L}].
    fn state_part(&self, state: &[&Symbol]) -> (Vec<f64>, f64) {
        let dx = 4 * self.memory;
        let mut z = vec![0.0; dx + 4];
        for (j, s) in state.iter().enumerate() {
            for c in 0..4 {
                z[4 * j + c] = s[c] - self.mu_y_perm[4 * j + c];
            }
        }
        // μˣ is the leading part of the permuted μʸ, so z[..dx] = x − μˣ
        let q_x = self.chol_x.as_ref().map_or(0.0, |cx| cx.quad_form(&z[..dx]));
        self.chol_y.forward_solve_range(&mut z, 0, dx);
        let q_head: f64 = z[..dx].iter().map(|v| v * v).sum();
        (z, q_head - q_x)
    }

    fn finish(&self, z: &mut [f64], partial: f64, s: &Symbol) -> f64 {
        let dx = 4 * self.memory;
        for c in 0..4 {
            z[dx + c] = s[c] - self.mu_y_perm[dx + c];
        }
        self.chol_y.forward_solve_range(z, dx, dx + 4);
        partial + z[dx..].iter().map(|v| v * v).sum::<f64>() + self.offset
    }

    /// ψ_k(s_k, x_k) with `state` = [s_{k−1}, …, s_{k−L}].
    pub fn eval(&self, s: &Symbol, state: &[&Symbol]) -> f64 {
        assert_eq!(state.len(), self.memory, "state length must equal the memory");
        let (mut z, partial) = self.state_part(state);
        self.finish(&mut z, partial, s)
    }

    /// ψ_k for every s_k ∈ Ω at a fixed state, in constellation order.
    pub fn row(&self, constellation: &Constellation, state: &[&Symbol]) -> Vec<f64> {
        assert_eq!(state.len(), self.memory, "state length must equal the memory");
        let (z0, partial) = self.state_part(state);
        let mut z = z0.clone();
        constellation
            .points()
            .iter()
            .map(|p| {
                z.copy_from_slice(&z0);
                self.finish(&mut z, partial, p)
            })
            .collect()
    }

    /// Full table over Ω × Ω^L, laid out as `table[state * M + s]` with
    /// state index Σ_j i(s_{k−j}) · M^{j−1}.
    pub fn table(&self, constellation: &Constellation) -> Vec<f64> {
        let m = constellation.cardinality();
        let n_states = m.pow(self.memory as u32);
        let mut out = Vec::with_capacity(n_states * m);
        let mut state_syms: Vec<&Symbol> = Vec::with_capacity(self.memory);
        for st in 0..n_states {
            state_syms.clear();
            let mut rest = st;
            for _ in 0..self.memory {
                state_syms.push(constellation.point(rest % m));
                rest /= m;
            }
            out.extend(self.row(constellation, &state_syms));
        }
        out
    }
}

/// Independent evaluation of ψ directly from the window moments; used as a
/// cross-check of the factored form.
pub fn branch_metric(s: &Symbol, state: &[&Symbol], stats: &WindowStats, opts: &MetricOptions) -> f64 {
    SlotMetric::new(stats, opts).eval(s, state)
}

/// ψ tables for slots L..K−1 of a block.
#[derive(Clone, Debug)]
pub struct PsiTable {
    pub memory: usize,
    pub cardinality: usize,
    /// First slot with a table (= L).
    pub first_slot: usize,
    pub slots: Vec<Vec<f64>>,
    pub regularization_events: usize,
}

impl PsiTable {
    /// Tables for every slot of the cloud.
    pub fn from_cloud(
        cloud: &SymbolCloud,
        memory: usize,
        constellation: &Constellation,
        opts: &MetricOptions,
        exec: crate::exec::Exec,
    ) -> Result<Self> {
        let k = cloud.num_symbols();
        if k <= memory {
            return Err(Error::OutOfRange(format!("block of {k} symbols is too short for memory {memory}")));
        }
        let rows = exec
            .map_range(k - memory, |i| {
                let st = estimate_moments(cloud, memory + i, memory)?;
                let sm = SlotMetric::new(&st, opts);
                Ok((sm.table(constellation), sm.regularization_events))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let regularization_events = rows.iter().map(|r| r.1).sum();
        Ok(PsiTable {
            memory,
            cardinality: constellation.cardinality(),
            first_slot: memory,
            slots: rows.into_iter().map(|r| r.0).collect(),
            regularization_events,
        })
    }

    pub fn num_states(&self) -> usize {
        self.cardinality.pow(self.memory as u32)
    }

    /// Slots covered are `first_slot .. first_slot + slots.len()`.
    pub fn num_symbols(&self) -> usize {
        self.first_slot + self.slots.len()
    }

    /// ψ at absolute slot `k` for hypothesis `s` and state index `state`.
    pub fn get(&self, k: usize, state: usize, s: usize) -> f64 {
        self.slots[k - self.first_slot][state * self.cardinality + s]
    }
}
