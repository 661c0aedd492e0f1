use super::{ApConfig, RadioParams, UserState};
use crate::error::{Error, Result};

/// Relative round-off allowance on the uplink SNR threshold, so a power set
/// exactly at the threshold decodes.
pub const SNR_REL_SLACK: f64 = 1e-12;

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Euclidean distance between the HMD and the AP antenna in 3-D.
pub fn distance_3d(user: &UserState, ap: &ApConfig) -> f64 {
    norm3([
        user.position[0] - ap.position[0],
        user.position[1] - ap.position[1],
        user.height - ap.antenna_height,
    ])
}

/// Uplink path gain `d^{-α}`.
pub fn ul_pathloss(user: &UserState, ap: &ApConfig, params: &RadioParams) -> Result<f64> {
    let d = distance_3d(user, ap);
    if d <= 0.0 {
        return Err(Error::domain("user and AP antenna coincide"));
    }
    Ok(d.powf(-params.ul_fading_exponent))
}

/// Uplink SNR at `ap` for `user` transmitting at `user.hmd_tx_power` over a
/// band split evenly between `n_users` users.
pub fn ul_snr(assoc: bool, user: &UserState, ap: &ApConfig, params: &RadioParams, n_users: usize) -> Result<f64> {
    if n_users == 0 {
        return Err(Error::domain("uplink SNR needs at least one user"));
    }
    if !assoc {
        return Ok(0.0);
    }
    let h = ul_pathloss(user, ap, params)?;
    let noise = params.noise_psd * params.ul_bandwidth / n_users as f64;
    Ok(user.hmd_tx_power * params.rayleigh_gain * h / noise)
}

/// Decoding succeeds only for an associated pair meeting the SNR threshold
/// (up to [`SNR_REL_SLACK`] of round-off).
pub fn ul_decodes(assoc: bool, user: &UserState, ap: &ApConfig, params: &RadioParams, n_users: usize) -> Result<bool> {
    Ok(assoc && ul_snr(assoc, user, ap, params, n_users)? >= params.ul_snr_threshold * (1.0 - SNR_REL_SLACK))
}

/// Ground point `B_j` hit by the antenna boresight, which is tilted down by
/// the AP's downtilt towards the area centre.
pub fn boresight_point(ap: &ApConfig, params: &RadioParams) -> Result<[f64; 2]> {
    let [xj, yj] = ap.position;
    let [xo, yo] = params.area_center;
    let r = (xo - xj).hypot(yo - yj);
    if r == 0.0 {
        return Err(Error::domain("AP located at the area centre has no boresight"));
    }
    let d = ap.antenna_height / ap.downtilt.tan();
    Ok([d * (xo - xj) / r + xj, d * (yo - yj) / r + yj])
}

/// Angle `∠B_j C_j D_it` between the boresight and the direction towards the
/// HMD, in `[0, π]`.
pub fn tilt_angle(user: &UserState, ap: &ApConfig, params: &RadioParams) -> Result<f64> {
    let [xb, yb] = boresight_point(ap, params)?;
    let [xj, yj] = ap.position;
    let cb = [xb - xj, yb - yj, -ap.antenna_height];
    let cd = [
        user.position[0] - xj,
        user.position[1] - yj,
        user.height - ap.antenna_height,
    ];
    let ncd = norm3(cd);
    if ncd == 0.0 {
        return Err(Error::domain("user located at the antenna point"));
    }
    let cos = dot3(cb, cd) / (norm3(cb) * ncd);
    Ok(cos.clamp(-1.0, 1.0).acos())
}

/// Sectored antenna gain: mainlobe within half the beamwidth (inclusive),
/// sidelobe otherwise.
pub fn antenna_gain(user: &UserState, ap: &ApConfig, params: &RadioParams) -> Result<f64> {
    let angle = tilt_angle(user, ap, params)?;
    Ok(if angle <= ap.beamwidth / 2.0 {
        ap.mainlobe_gain
    } else {
        ap.sidelobe_gain
    })
}

/// Angle between the user's heading and the direction towards the AP.
pub fn orientation_angle(user: &UserState, ap: &ApConfig) -> Result<f64> {
    let a = [ap.position[0] - user.position[0], ap.position[1] - user.position[1]];
    let x = user.direction;
    let na = a[0].hypot(a[1]);
    let nx = x[0].hypot(x[1]);
    if nx == 0.0 {
        return Err(Error::domain("zero direction vector"));
    }
    if na == 0.0 {
        return Err(Error::domain("user stands at the AP's ground position"));
    }
    let cos = (a[0] * x[0] + a[1] * x[1]) / (na * nx);
    Ok(cos.clamp(-1.0, 1.0).acos())
}

/// Body blockage indicator: the AP lies behind the user.
pub fn blockage(user: &UserState, ap: &ApConfig, params: &RadioParams) -> Result<bool> {
    Ok(orientation_angle(user, ap)? > params.blockage_angle)
}

/// Interfering-user sets: `m` interferes with `i` iff they are distinct and
/// strictly closer than `radius`.
pub fn interferers(positions: &[[f64; 2]], radius: f64) -> Vec<Vec<usize>> {
    positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            positions
                .iter()
                .enumerate()
                .filter(|&(m, q)| m != i && (p[0] - q[0]).hypot(p[1] - q[1]) < radius)
                .map(|(m, _)| m)
                .collect()
        })
        .collect()
}

/// Turns a position stream into direction vectors. The first slot uses the
/// position itself; a user that did not move keeps its previous heading.
#[derive(Debug, Clone, Default)]
pub struct DirectionTracker {
    last: Option<Vec<([f64; 2], [f64; 2])>>,
}

impl DirectionTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, positions: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let dirs: Vec<[f64; 2]> = match &self.last {
            Some(last) if last.len() == positions.len() => positions
                .iter()
                .zip(last)
                .map(|(p, (prev, prev_dir))| {
                    let d = [p[0] - prev[0], p[1] - prev[1]];
                    if d[0] == 0.0 && d[1] == 0.0 {
                        *prev_dir
                    } else {
                        d
                    }
                })
                .collect(),
            _ => positions
                .iter()
                .map(|&p| if p == [0.0, 0.0] { [1.0, 0.0] } else { p })
                .collect(),
        };
        self.last = Some(positions.iter().copied().zip(dirs.iter().copied()).collect());
        dirs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ap() -> ApConfig {
        ApConfig {
            position: [0.0, 0.0],
            antenna_height: 5.5,
            downtilt: PI / 3.0,
            mainlobe_gain: 10f64.powf(0.5),
            sidelobe_gain: 10f64.powf(0.1),
            beamwidth: PI / 3.0,
            num_elements: 2,
            max_power: 10.0,
            circuit_power: 1.0,
            decode_capacity: 6,
        }
    }

    fn params() -> RadioParams {
        RadioParams {
            carrier_freq: 28e9,
            light_speed: 3e8,
            noise_psd: 2e-20,
            ul_bandwidth: 200e6,
            dl_bandwidth: 800e6,
            ul_snr_threshold: 200.0,
            dl_rate_threshold: 1e9,
            ul_fading_exponent: 5.0,
            rayleigh_gain: 0.3,
            pathloss_exp_los: 2.0,
            pathloss_exp_nlos: 2.4,
            shadow_var_los: 5.3,
            shadow_var_nlos: 5.27,
            blockage_angle: PI / 2.0,
            interference_radius: 50.0,
            area_center: [250.0, 250.0],
        }
    }

    fn user_at(x: f64, y: f64, h: f64) -> UserState {
        UserState {
            position: [x, y],
            height: h,
            direction: [1.0, 0.0],
            hmd_tx_power: 1e-3,
            hmd_circuit_power: 0.2,
            hmd_max_power: 0.5,
        }
    }

    /// User whose 3-D distance to `ap()` is exactly `d`.
    fn user_at_distance(d: f64) -> UserState {
        let dz: f64 = 1.8 - 5.5;
        user_at((d * d - dz * dz).sqrt(), 0.0, 1.8)
    }

    #[test]
    fn pathloss_examples() {
        let p = params();
        let u = user_at(0.0, 0.0, 4.5);
        assert!((ul_pathloss(&u, &ap(), &p).unwrap() - 1.0).abs() < 1e-12);
        let u = user_at_distance(20.0);
        let h = ul_pathloss(&u, &ap(), &p).unwrap();
        assert!((h - 3.125e-7).abs() / 3.125e-7 < 1e-12);
    }

    #[test]
    fn pathloss_rejects_coincident_points() {
        let u = user_at(0.0, 0.0, 5.5);
        assert!(ul_pathloss(&u, &ap(), &params()).is_err());
    }

    #[test]
    fn snr_examples() {
        let p = params();
        let mut u = user_at_distance(20.0);
        // scalar oracle: (1e-3 * 0.3 * 20^-5) / (2e-20 * 200e6 / 16)
        let expected: f64 = (1e-3 * 0.3 * 3.125e-7) / (2.5e-13);
        assert!((expected - 375.0).abs() < 1e-9);
        let snr = ul_snr(true, &u, &ap(), &p, 16).unwrap();
        assert!((snr - 375.0).abs() < 1e-9);
        assert!(ul_decodes(true, &u, &ap(), &p, 16).unwrap());
        assert!(!ul_decodes(false, &u, &ap(), &p, 16).unwrap());
        u.hmd_tx_power = 0.0;
        assert_eq!(ul_snr(true, &u, &ap(), &p, 16).unwrap(), 0.0);
        assert!(!ul_decodes(true, &u, &ap(), &p, 16).unwrap());
        assert!(ul_snr(true, &u, &ap(), &p, 0).is_err());
    }

    #[test]
    fn boresight_user_gets_mainlobe() {
        let p = params();
        let a = ap();
        let b = boresight_point(&a, &p).unwrap();
        // Point on the boresight ray at height 1.8 m.
        let s = 1.0 - 1.8 / a.antenna_height;
        let u = user_at(s * b[0], s * b[1], 1.8);
        assert!(tilt_angle(&u, &a, &p).unwrap() < 1e-7);
        assert_eq!(antenna_gain(&u, &a, &p).unwrap(), a.mainlobe_gain);
    }

    #[test]
    fn tilt_angle_matches_law_of_cosines() {
        let p = params();
        let a = ap();
        let u = user_at(200.0, 200.0, 1.8);
        // Independent route: triangle B-C-D side lengths.
        let d = 5.5 / (PI / 3.0).tan();
        let b = [d / 2f64.sqrt(), d / 2f64.sqrt(), 0.0];
        let c = [0.0, 0.0, 5.5];
        let dd = [200.0, 200.0, 1.8];
        let len =
            |p: [f64; 3], q: [f64; 3]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
        let (cb, cd, bd) = (len(c, b), len(c, dd), len(b, dd));
        let oracle = ((cb * cb + cd * cd - bd * bd) / (2.0 * cb * cd)).acos();
        let angle = tilt_angle(&u, &a, &p).unwrap();
        assert!((angle - oracle).abs() < 1e-9, "{angle} vs {oracle}");
        let expected_gain = if oracle <= PI / 6.0 {
            a.mainlobe_gain
        } else {
            a.sidelobe_gain
        };
        assert_eq!(antenna_gain(&u, &a, &p).unwrap(), expected_gain);
    }

    #[test]
    fn tilt_boundary_is_mainlobe() {
        let p = params();
        let mut a = ap();
        let u = user_at(40.0, 10.0, 1.8);
        let angle = tilt_angle(&u, &a, &p).unwrap();
        a.beamwidth = 2.0 * angle;
        assert_eq!(antenna_gain(&u, &a, &p).unwrap(), a.mainlobe_gain);
        a.beamwidth = 2.0 * angle * (1.0 - 1e-12);
        assert_eq!(antenna_gain(&u, &a, &p).unwrap(), a.sidelobe_gain);
    }

    #[test]
    fn ap_at_centre_is_domain_error() {
        let mut p = params();
        p.area_center = [0.0, 0.0];
        assert!(boresight_point(&ap(), &p).is_err());
    }

    #[test]
    fn blockage_follows_heading() {
        let p = params();
        let a = ap();
        let mut u = user_at(100.0, 0.0, 1.8);
        u.direction = [-1.0, 0.0];
        assert!(orientation_angle(&u, &a).unwrap().abs() < 1e-12);
        assert!(!blockage(&u, &a, &p).unwrap());
        u.direction = [1.0, 0.0];
        assert!((orientation_angle(&u, &a).unwrap() - PI).abs() < 1e-12);
        assert!(blockage(&u, &a, &p).unwrap());
        // exactly perpendicular stays LoS
        u.direction = [0.0, 1.0];
        assert!(!blockage(&u, &a, &p).unwrap());
        u.direction = [0.0, 0.0];
        assert!(blockage(&u, &a, &p).is_err());
    }

    #[test]
    fn interferer_sets() {
        assert_eq!(interferers(&[[1.0, 1.0]], 50.0), vec![Vec::<usize>::new()]);
        let s = interferers(&[[0.0, 0.0], [30.0, 0.0]], 50.0);
        assert_eq!(s, vec![vec![1], vec![0]]);
        let s = interferers(&[[0.0, 0.0], [60.0, 0.0]], 50.0);
        assert_eq!(s, vec![Vec::<usize>::new(), vec![]]);
        let s = interferers(&[[0.0, 0.0], [50.0, 0.0]], 50.0);
        assert!(s[0].is_empty());
    }

    #[test]
    fn direction_tracker_rules() {
        let mut t = DirectionTracker::new();
        assert_eq!(t.update(&[[3.0, 4.0]]), vec![[3.0, 4.0]]);
        assert_eq!(t.update(&[[4.0, 4.0]]), vec![[1.0, 0.0]]);
        // stationary: keep previous heading
        assert_eq!(t.update(&[[4.0, 4.0]]), vec![[1.0, 0.0]]);
        assert_eq!(t.update(&[[4.0, 6.0]]), vec![[0.0, 2.0]]);
    }

    proptest::proptest! {
        #[test]
        fn snr_linear_in_power(p1 in 1e-6f64..1.0, k in 0.1f64..10.0, x in 5.0f64..400.0) {
            let mut u = user_at(x, 3.0, 1.8);
            u.hmd_tx_power = p1;
            let s1 = ul_snr(true, &u, &ap(), &params(), 16).unwrap();
            u.hmd_tx_power = p1 * k;
            let s2 = ul_snr(true, &u, &ap(), &params(), 16).unwrap();
            proptest::prop_assert!((s2 - k * s1).abs() <= 1e-12 * s2.abs());
        }

        #[test]
        fn pathloss_decreasing(x in 1.0f64..400.0, dx in 0.01f64..50.0) {
            let a = ul_pathloss(&user_at(x, 0.0, 1.8), &ap(), &params()).unwrap();
            let b = ul_pathloss(&user_at(x + dx, 0.0, 1.8), &ap(), &params()).unwrap();
            proptest::prop_assert!(b < a);
        }

        #[test]
        fn gain_two_valued_and_orientation_in_range(x in -300.0f64..300.0, y in -300.0f64..300.0,
                                                     dx in -1.0f64..1.0, dy in -1.0f64..1.0) {
            proptest::prop_assume!(x.hypot(y) > 1e-3 && dx.hypot(dy) > 1e-6);
            let a = ap();
            let mut u = user_at(x, y, 1.8);
            u.direction = [dx, dy];
            let g = antenna_gain(&u, &a, &params()).unwrap();
            proptest::prop_assert!(g == a.mainlobe_gain || g == a.sidelobe_gain);
            let ang = orientation_angle(&u, &a).unwrap();
            proptest::prop_assert!((0.0..=PI).contains(&ang));
            proptest::prop_assert_eq!(blockage(&u, &a, &params()).unwrap(), ang > PI / 2.0);
        }
    }
}
