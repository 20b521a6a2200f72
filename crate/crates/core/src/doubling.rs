//! The doubling: glue the end of a shrinker to a cylinder and reflect.
//!
//! In the rotationally symmetric case the link θ of the cone is the single
//! half-plane direction e_α = (cos α, sin α) and v is the rotation axis e_x, so
//! every stage collapses to a planar curve.

use serde::{Deserialize, Serialize};

use crate::cutoff::CutoffEta;
use crate::geometry::{EndKind, GeometryError, ShrinkerProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Shrinker,
    Stage1,
    Stage2,
    Stage3,
    Stage4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionTag {
    pub region: Region,
    pub reflected: bool,
}

impl RegionTag {
    pub fn label(&self) -> String {
        let base = match self.region {
            Region::Shrinker => "shrinker",
            Region::Stage1 => "stage1",
            Region::Stage2 => "stage2",
            Region::Stage3 => "stage3",
            Region::Stage4 => "stage4",
        };
        if self.reflected {
            format!("reflected-{base}")
        } else {
            base.to_string()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Junction {
    pub label: String,
    pub index: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoubledProfile {
    pub n: usize,
    pub big_r: f64,
    /// sup⟨F₄(4R), v⟩; absent for a trivial doubling.
    pub b_offset: Option<f64>,
    pub v: [f64; 2],
    /// Position of the mirror plane ⟨x, v⟩ = B + R.
    pub plane: Option<f64>,
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub tags: Vec<RegionTag>,
    /// Profile node each sample copies, for samples in the unmodified shrinker region.
    pub profile_index: Vec<Option<usize>>,
    pub junctions: Vec<Junction>,
    /// Both ends of the generating arc lie on the axis.
    pub closed: bool,
    /// The profile was already closed and is used unchanged.
    pub trivial: bool,
    pub h_grid: f64,
}

impl DoubledProfile {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Closed planar polygon for embedding checks: the generating arc followed by
    /// its mirror image across the axis when both ends lie on the axis.
    pub fn meridian(&self) -> (Vec<[f64; 2]>, bool) {
        let mut pts: Vec<[f64; 2]> = self.x.iter().zip(&self.r).map(|(&a, &b)| [a, b]).collect();
        if self.closed {
            let back: Vec<[f64; 2]> = pts.iter().rev().map(|p| [p[0], -p[1]]).collect();
            pts.extend(back);
        }
        (pts, self.closed)
    }
}

/// ∫₀^t η(τ) dτ by composite Gauss–Legendre.
fn eta_integral(eta: &CutoffEta, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let nodes = [
        (-0.906_179_845_938_664, 0.236_926_885_056_189),
        (-0.538_469_310_105_683, 0.478_628_670_499_366),
        (0.0, 0.568_888_888_888_889),
        (0.538_469_310_105_683, 0.478_628_670_499_366),
        (0.906_179_845_938_664, 0.236_926_885_056_189),
    ];
    let panels = 256;
    let h = t / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        let a = k as f64 * h;
        for (xi, wi) in nodes.iter() {
            acc += wi * eta.eval(a + 0.5 * h * (1.0 + xi));
        }
    }
    acc * 0.5 * h
}

/// Samples the parametric curve F on [t0, t1] at (nearly) uniform arc length h,
/// including both endpoints. Points lie exactly on F.
fn resample<F: Fn(f64) -> [f64; 2]>(f: F, t0: f64, t1: f64, h: f64) -> Vec<[f64; 2]> {
    let dense = 4000;
    let mut ts = Vec::with_capacity(dense + 1);
    let mut cum = Vec::with_capacity(dense + 1);
    let mut prev = f(t0);
    let mut acc = 0.0;
    for k in 0..=dense {
        let t = t0 + (t1 - t0) * k as f64 / dense as f64;
        let p = f(t);
        acc += (p[0] - prev[0]).hypot(p[1] - prev[1]);
        prev = p;
        ts.push(t);
        cum.push(acc);
    }
    let total = acc;
    let m = ((total / h).round() as usize).max(1);
    let mut out = Vec::with_capacity(m + 1);
    let mut j = 0;
    for k in 0..=m {
        let target = total * k as f64 / m as f64;
        while j + 1 < cum.len() - 1 && cum[j + 1] < target {
            j += 1;
        }
        let t = if k == 0 {
            t0
        } else if k == m {
            t1
        } else {
            let span = cum[j + 1] - cum[j];
            let w = if span > 0.0 { (target - cum[j]) / span } else { 0.0 };
            ts[j] + w * (ts[j + 1] - ts[j])
        };
        out.push(f(t));
    }
    out
}

/// Builds the doubled generating curve. A closed profile (both ends on the axis)
/// is returned unchanged as a trivial doubling.
pub fn build_doubling(p: &ShrinkerProfile, big_r: f64, eta: &CutoffEta) -> Result<DoubledProfile, GeometryError> {
    let h_grid = p.ds;
    if p.is_closed() {
        let max_rho = (0..p.len()).map(|i| p.radius(i)).fold(0.0, f64::max);
        if max_rho > big_r {
            return Err(GeometryError::NotGraphical(format!(
                "closed profile reaches |γ| = {max_rho:.4} beyond R = {big_r}"
            )));
        }
        let symmetric = (0..p.len()).all(|i| {
            let j = p.len() - 1 - i;
            (p.x[i] + p.x[j]).abs() < 1e-12 && (p.r[i] - p.r[j]).abs() < 1e-12
        });
        return Ok(DoubledProfile {
            n: p.n,
            big_r,
            b_offset: None,
            v: [1.0, 0.0],
            plane: if symmetric { Some(0.0) } else { None },
            x: p.x.clone(),
            r: p.r.clone(),
            tags: vec![RegionTag { region: Region::Shrinker, reflected: false }; p.len()],
            profile_index: (0..p.len()).map(Some).collect(),
            junctions: Vec::new(),
            closed: true,
            trivial: true,
            h_grid,
        });
    }
    let cone = p
        .cone
        .ok_or_else(|| GeometryError::NotGraphical("profile has no asymptotic cone".into()))?;
    if p.outer != EndKind::Truncated {
        return Err(GeometryError::NotGraphical("profile has no outer end".into()));
    }
    let alpha = cone.alpha();
    let (sa, ca) = alpha.sin_cos();
    let e = [ca, sa];
    let nu_c = [sa, -ca];
    let v = [1.0, 0.0];
    let rho: Vec<f64> = (0..p.len()).map(|i| p.x[i] * e[0] + p.r[i] * e[1]).collect();
    let u: Vec<f64> = (0..p.len()).map(|i| p.x[i] * nu_c[0] + p.r[i] * nu_c[1]).collect();

    // graphical check on the end {|γ| ≥ R}
    let first_out = (0..p.len())
        .find(|&i| p.radius(i) >= big_r)
        .ok_or_else(|| GeometryError::NotGraphical(format!("profile never reaches |γ| = R = {big_r}")))?;
    for i in first_out.max(1)..p.len() {
        if rho[i] <= rho[i - 1] {
            return Err(GeometryError::NotGraphical(format!("cone distance not increasing at node {i}")));
        }
    }
    if *rho.last().unwrap() < 2.0 * big_r {
        return Err(GeometryError::NotGraphical(format!(
            "profile ends at cone distance {:.3} < 2R = {}",
            rho.last().unwrap(),
            2.0 * big_r
        )));
    }
    // the shrinker region is the initial run of nodes with ρ ≤ R
    let n_shrink = (0..p.len()).take_while(|&i| rho[i] <= big_r || i < first_out).count();
    if rho[..n_shrink].iter().any(|&r| r > big_r) {
        return Err(GeometryError::NotGraphical("cone distance exceeds R inside B_R".into()));
    }

    let mut pts: Vec<[f64; 2]> = Vec::new();
    let mut tags: Vec<RegionTag> = Vec::new();
    let mut pidx: Vec<Option<usize>> = Vec::new();
    let mut junctions = Vec::new();
    let tag = |region| RegionTag { region, reflected: false };
    for i in 0..n_shrink {
        pts.push([p.x[i], p.r[i]]);
        tags.push(tag(Region::Shrinker));
        pidx.push(Some(i));
    }
    junctions.push(Junction { label: "R".into(), index: n_shrink });

    // stage 1: cut the graph off between R and 2R
    let corner2 = [2.0 * big_r * e[0], 2.0 * big_r * e[1]];
    for i in n_shrink..p.len() {
        if rho[i] >= 2.0 * big_r {
            break;
        }
        let w = eta.eval((rho[i] - big_r) / big_r) * u[i];
        let q = [rho[i] * e[0] + w * nu_c[0], rho[i] * e[1] + w * nu_c[1]];
        if (q[0] - corner2[0]).hypot(q[1] - corner2[1]) < 0.3 * h_grid {
            break;
        }
        pts.push(q);
        tags.push(tag(Region::Stage1));
        pidx.push(None);
    }

    // stage 2: rotate the link towards v
    let f2 = |rr: f64| -> [f64; 2] {
        let et = eta.eval((rr - 2.0 * big_r) / big_r);
        let a = 2.0 / 3.0 * et + 1.0 / 3.0;
        let b = 2.0 / 3.0 - 2.0 / 3.0 * et;
        let d = [a * e[0] + b * v[0], a * e[1] + b * v[1]];
        let nd = d[0].hypot(d[1]);
        [rr * d[0] / nd, rr * d[1] / nd]
    };
    junctions.push(Junction { label: "2R".into(), index: pts.len() });
    let s2 = resample(f2, 2.0 * big_r, 3.0 * big_r, h_grid);
    for q in &s2[..s2.len() - 1] {
        pts.push(*q);
        tags.push(tag(Region::Stage2));
        pidx.push(None);
    }

    // stage 3: straighten the radial direction to v
    let dvec = {
        let d = [e[0] + 2.0 * v[0], e[1] + 2.0 * v[1]];
        let nd = d[0].hypot(d[1]);
        [d[0] / nd, d[1] / nd]
    };
    let f4 = |rr: f64| -> [f64; 2] {
        let i_eta = big_r * eta_integral(eta, (rr - 3.0 * big_r) / big_r);
        let rest = rr - 3.0 * big_r - i_eta;
        [
            3.0 * big_r * dvec[0] + i_eta * dvec[0] + rest * v[0],
            3.0 * big_r * dvec[1] + i_eta * dvec[1] + rest * v[1],
        ]
    };
    junctions.push(Junction { label: "3R".into(), index: pts.len() });
    let s3 = resample(f4, 3.0 * big_r, 4.0 * big_r, h_grid);
    for q in &s3[..s3.len() - 1] {
        pts.push(*q);
        tags.push(tag(Region::Stage3));
        pidx.push(None);
    }

    // stage 4: flat end at ⟨x, v⟩ = B + R
    let f44 = f4(4.0 * big_r);
    let b_offset = f44[0] * v[0] + f44[1] * v[1];
    let plane = b_offset + big_r;
    let fend = |rr: f64| -> [f64; 2] {
        let et = eta.eval((rr - 4.0 * big_r) / big_r);
        let along = f44[0] * v[0] + f44[1] * v[1];
        [
            f44[0] + (et - 1.0) * along * v[0] + (1.0 - et) * plane * v[0],
            f44[1] + (et - 1.0) * along * v[1] + (1.0 - et) * plane * v[1],
        ]
    };
    junctions.push(Junction { label: "4R".into(), index: pts.len() });
    let s4 = resample(fend, 4.0 * big_r, 5.0 * big_r, h_grid);
    for q in &s4 {
        pts.push(*q);
        tags.push(tag(Region::Stage4));
        pidx.push(None);
    }
    let last = pts.len() - 1;
    // the formula lands on the plane; pin the rounding
    pts[last][0] = plane;
    junctions.push(Junction { label: "5R".into(), index: last });

    // reflection across the plane
    for k in (0..last).rev() {
        let q = pts[k];
        pts.push([2.0 * plane - q[0], q[1]]);
        tags.push(RegionTag { region: tags[k].region, reflected: true });
        pidx.push(None);
    }

    Ok(DoubledProfile {
        n: p.n,
        big_r,
        b_offset: Some(b_offset),
        v,
        plane: Some(plane),
        x: pts.iter().map(|q| q[0]).collect(),
        r: pts.iter().map(|q| q[1]).collect(),
        tags,
        profile_index: pidx,
        junctions,
        closed: p.inner == EndKind::Axis,
        trivial: false,
        h_grid,
    })
}

/// Default gluing scale: max(20, 4ρ*) where ρ* is the smallest radius beyond which
/// sup r̃|A| < 0.05; when no such radius exists on the profile, 20.
pub fn default_gluing_scale(p: &ShrinkerProfile) -> f64 {
    let mut tail_sup = 0.0_f64;
    let mut rho_star = None;
    for i in (0..p.len()).rev() {
        tail_sup = tail_sup.max(p.r_tilde[i] * p.a2[i].sqrt());
        if tail_sup < 0.05 {
            rho_star = Some(p.radius(i));
        } else {
            break;
        }
    }
    match rho_star {
        Some(rs) if rs < p.s_max => 20.0_f64.max(4.0 * rs),
        _ => 20.0,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JunctionReport {
    pub label: String,
    pub index: usize,
    /// |t_left − t_right| of the one-sided unit tangents.
    pub c1_mismatch: f64,
    /// Difference of the one-sided discrete curvatures.
    pub c2_mismatch: f64,
    pub local_spacing: f64,
}

fn unit(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let d = [b[0] - a[0], b[1] - a[1]];
    let l = d[0].hypot(d[1]);
    [d[0] / l, d[1] / l]
}

fn turning(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let t1 = unit(a, b);
    let t2 = unit(b, c);
    let cross = t1[0] * t2[1] - t1[1] * t2[0];
    let dot = t1[0] * t2[0] + t1[1] * t2[1];
    let l = 0.5 * ((b[0] - a[0]).hypot(b[1] - a[1]) + (c[0] - b[0]).hypot(c[1] - b[1]));
    cross.atan2(dot) / l
}

/// One-sided tangent and curvature mismatch at every junction of the unreflected half.
pub fn junction_report(d: &DoubledProfile) -> Vec<JunctionReport> {
    let pt = |i: usize| [d.x[i], d.r[i]];
    let mut out = Vec::new();
    for j in &d.junctions {
        let i = j.index;
        if i < 2 || i + 2 >= d.len() {
            continue;
        }
        let tl = unit(pt(i - 1), pt(i));
        let tr = unit(pt(i), pt(i + 1));
        let kl = turning(pt(i - 2), pt(i - 1), pt(i));
        let kr = turning(pt(i), pt(i + 1), pt(i + 2));
        let hl = (d.x[i] - d.x[i - 1]).hypot(d.r[i] - d.r[i - 1]);
        let hr = (d.x[i + 1] - d.x[i]).hypot(d.r[i + 1] - d.r[i]);
        out.push(JunctionReport {
            label: j.label.clone(),
            index: i,
            c1_mismatch: (tl[0] - tr[0]).hypot(tl[1] - tr[1]),
            c2_mismatch: (kl - kr).abs(),
            local_spacing: 0.5 * (hl + hr),
        });
    }
    out
}

/// Max over samples of the mirror defect |x + x′ − 2(B+R)| + |r − r′| for partner samples.
pub fn mirror_defect(d: &DoubledProfile) -> Option<f64> {
    let plane = d.plane?;
    let m = d.len();
    let mut worst: f64 = 0.0;
    for i in 0..m {
        let j = m - 1 - i;
        worst = worst.max((d.x[i] + d.x[j] - 2.0 * plane).abs() + (d.r[i] - d.r[j]).abs());
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sphere_profile;

    #[test]
    fn eta_integral_limits() {
        let g = CutoffEta::GLUING;
        assert!((eta_integral(&g, 1.0) - 0.5).abs() < 1e-10);
        let half = eta_integral(&g, 0.5);
        assert!(half > 0.25 && half < 0.5);
        assert!(eta_integral(&g, 0.25) < half);
    }

    #[test]
    fn trivial_doubling_of_sphere() {
        let s = sphere_profile(2, 200);
        let d = build_doubling(&s, 20.0, &CutoffEta::GLUING).unwrap();
        assert!(d.trivial && d.closed);
        assert_eq!(d.plane, Some(0.0));
        assert!(mirror_defect(&d).unwrap() < 1e-12);
    }
}
