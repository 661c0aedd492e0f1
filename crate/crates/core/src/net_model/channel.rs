use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::geometry::{antenna_gain, blockage, distance_3d, interferers, ul_pathloss};
use super::{ApConfig, RadioParams, UserState};
use crate::error::{Error, Result};

/// Small-scale randomness of one user-AP link: a standard-normal shadowing
/// draw and a phase per antenna element. Kept separate from geometry so the
/// same slot can be evaluated at predicted and at true positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkDraws {
    pub shadow: Vec<f64>,
    pub phase: Vec<f64>,
}

impl LinkDraws {
    pub fn sample<R: Rng + ?Sized>(num_elements: usize, rng: &mut R) -> Self {
        let shadow = (0..num_elements).map(|_| StandardNormal.sample(rng)).collect();
        let phase = (0..num_elements)
            .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
            .collect();
        Self { shadow, phase }
    }
}

/// Per-slot draws for every (user, AP) pair, indexed `[i][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallScaleDraws {
    pub links: Vec<Vec<LinkDraws>>,
}

impl SmallScaleDraws {
    pub fn sample<R: Rng + ?Sized>(users: usize, aps: usize, elements: usize, rng: &mut R) -> Self {
        let links = (0..users)
            .map(|_| (0..aps).map(|_| LinkDraws::sample(elements, rng)).collect())
            .collect();
        Self { links }
    }

    /// Keep the shadowing of `frozen` and take only the phases from `self`.
    pub fn with_frozen_shadowing(mut self, frozen: &SmallScaleDraws) -> Self {
        for (row, frow) in self.links.iter_mut().zip(&frozen.links) {
            for (l, f) in row.iter_mut().zip(frow) {
                l.shadow.clone_from(&f.shadow);
            }
        }
        self
    }
}

/// Downlink channel of one link given geometry and draws.
///
/// Per element the path loss in dB is
/// `10 η log10 d + 20 log10(4π f_c / c) + μ_k` with `μ_k = σ z_k`; the
/// antenna gain adds `10 log10 f` to the received power and the phase is
/// taken from the draws.
pub fn dl_channel_from_draws(
    distance: f64,
    gain: f64,
    blocked: bool,
    params: &RadioParams,
    draws: &LinkDraws,
) -> Result<Vec<Complex64>> {
    if distance <= 0.0 {
        return Err(Error::domain("downlink distance must be positive"));
    }
    if draws.shadow.len() != draws.phase.len() {
        return Err(Error::Dimension {
            expected: draws.shadow.len(),
            got: draws.phase.len(),
        });
    }
    let (eta, var) = if blocked {
        (params.pathloss_exp_nlos, params.shadow_var_nlos)
    } else {
        (params.pathloss_exp_los, params.shadow_var_los)
    };
    let fspl = 20.0 * (4.0 * std::f64::consts::PI * params.carrier_freq / params.light_speed).log10();
    let base = 10.0 * eta * distance.log10() + fspl;
    let sigma = var.sqrt();
    Ok(draws
        .shadow
        .iter()
        .zip(&draws.phase)
        .map(|(z, ph)| {
            let loss_db = base + sigma * z;
            let power = gain * 10f64.powf(-loss_db / 10.0);
            Complex64::from_polar(power.sqrt(), *ph)
        })
        .collect())
}

/// Downlink channel vector (length K) from AP `ap` to `user`, drawing fresh
/// shadowing and phases from `rng`.
pub fn dl_channel<R: Rng + ?Sized>(
    user: &UserState,
    ap: &ApConfig,
    params: &RadioParams,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let draws = LinkDraws::sample(ap.num_elements, rng);
    let f = antenna_gain(user, ap, params)?;
    let b = blockage(user, ap, params)?;
    dl_channel_from_draws(distance_3d(user, ap), f, b, params, &draws)
}

/// APs, users and radio constants at one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkScene {
    pub aps: Vec<ApConfig>,
    pub users: Vec<UserState>,
    pub radio: RadioParams,
}

impl NetworkScene {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_aps(&self) -> usize {
        self.aps.len()
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.users.iter().map(|u| u.position).collect()
    }

    /// Evaluate every uplink and downlink channel of the slot.
    pub fn realize(&self, draws: &SmallScaleDraws) -> Result<ChannelRealization> {
        let n = self.users.len();
        let k = self.aps.first().map_or(0, |a| a.num_elements);
        if draws.links.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: draws.links.len(),
            });
        }
        let mut ul = Vec::with_capacity(n);
        let mut dl = Vec::with_capacity(n);
        let mut blk = Vec::with_capacity(n);
        let mut gains = Vec::with_capacity(n);
        for (user, row) in self.users.iter().zip(&draws.links) {
            if row.len() != self.aps.len() {
                return Err(Error::Dimension {
                    expected: self.aps.len(),
                    got: row.len(),
                });
            }
            let mut ul_row = Vec::with_capacity(self.aps.len());
            let mut dl_row = Vec::with_capacity(self.aps.len());
            let mut b_row = Vec::with_capacity(self.aps.len());
            let mut g_row = Vec::with_capacity(self.aps.len());
            for (ap, link) in self.aps.iter().zip(row) {
                let f = antenna_gain(user, ap, &self.radio)?;
                let b = blockage(user, ap, &self.radio)?;
                ul_row.push(ul_pathloss(user, ap, &self.radio)?);
                dl_row.push(dl_channel_from_draws(distance_3d(user, ap), f, b, &self.radio, link)?);
                b_row.push(b);
                g_row.push(f);
            }
            ul.push(ul_row);
            dl.push(dl_row);
            blk.push(b_row);
            gains.push(g_row);
        }
        Ok(ChannelRealization {
            num_antennas: k,
            ul_pathloss: ul,
            dl_channel: dl,
            blockage: blk,
            antenna_gain: gains,
            interferers: interferers(&self.positions(), self.radio.interference_radius),
        })
    }
}

/// Channel state of one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub num_antennas: usize,
    /// `ĥ_ij`, users × APs.
    pub ul_pathloss: Vec<Vec<f64>>,
    /// `h_ijk`, users × APs × elements, antenna gain included.
    pub dl_channel: Vec<Vec<Vec<Complex64>>>,
    pub blockage: Vec<Vec<bool>>,
    pub antenna_gain: Vec<Vec<f64>>,
    pub interferers: Vec<Vec<usize>>,
}

impl ChannelRealization {
    pub fn num_users(&self) -> usize {
        self.ul_pathloss.len()
    }

    pub fn num_aps(&self) -> usize {
        self.ul_pathloss.first().map_or(0, Vec::len)
    }

    /// Stacked CoMP channel `[h_i1; …; h_iJ]` of user `i` (length `J·K`).
    pub fn stacked(&self, i: usize) -> DVector<Complex64> {
        DVector::from_iterator(
            self.num_aps() * self.num_antennas,
            self.dl_channel[i].iter().flatten().copied(),
        )
    }
}
