//! Product-state initial conditions: strips, corners, bubbles and uniform
//! states.
//!
//! "Up" and "down" always refer to the Ising (x) axis. A pattern flips the
//! spins inside its region relative to the background.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::LocalState;
use crate::topology::LatticeSpec;

#[derive(Debug, Error, PartialEq)]
pub enum PatternError {
    #[error("pattern region is empty")]
    Empty,
    #[error("pattern does not fit in the {lx}x{ly} lattice: {what}")]
    OutOfBounds { lx: usize, ly: usize, what: String },
    #[error("corner interface is not Lipschitz in the rotated frame")]
    NotLipschitz,
    #[error("pattern kind {0} has no such region")]
    NoRegion(&'static str),
}

type Result<T> = std::result::Result<T, PatternError>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    #[default]
    Up,
    Down,
}

impl Spin {
    pub fn flipped(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }

    pub fn local(self) -> LocalState {
        match self {
            Spin::Up => LocalState::Up,
            Spin::Down => LocalState::Down,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StripOrientation {
    /// Long side along x.
    #[default]
    Horizontal,
    /// Long side along y.
    Vertical,
}

/// Lattice corner that a corner pattern is attached to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CornerAnchor {
    #[default]
    Origin,
    MaxX,
    MaxY,
    MaxXY,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PatternSpec {
    /// `length × width` block starting at `(x0, y0)`.
    Strip {
        length: usize,
        #[serde(default = "one")]
        width: usize,
        x0: usize,
        y0: usize,
        #[serde(default)]
        orientation: StripOrientation,
        #[serde(default)]
        background: Spin,
    },
    /// `size × size` block in a lattice corner.
    Corner {
        size: usize,
        #[serde(default)]
        anchor: CornerAnchor,
        #[serde(default)]
        background: Spin,
    },
    /// `w × h` block at `(x0, y0)`.
    Bubble {
        w: usize,
        h: usize,
        x0: usize,
        y0: usize,
        #[serde(default)]
        background: Spin,
    },
    UniformX {
        #[serde(default)]
        background: Spin,
    },
    /// `+1` eigenstate of the transverse field operator on every site.
    UniformZPolarized,
}

fn one() -> usize {
    1
}

impl PatternSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            PatternSpec::Strip { .. } => "strip",
            PatternSpec::Corner { .. } => "corner",
            PatternSpec::Bubble { .. } => "bubble",
            PatternSpec::UniformX { .. } => "uniform_x",
            PatternSpec::UniformZPolarized => "uniform_z_polarized",
        }
    }

    fn background(&self) -> Spin {
        match self {
            PatternSpec::Strip { background, .. }
            | PatternSpec::Corner { background, .. }
            | PatternSpec::Bubble { background, .. }
            | PatternSpec::UniformX { background } => *background,
            PatternSpec::UniformZPolarized => Spin::Up,
        }
    }

    /// Flipped sites as a rectangle `(x0, y0, w, h)`, if the pattern has one.
    fn rect(&self, lat: &LatticeSpec) -> Option<(usize, usize, usize, usize)> {
        match *self {
            PatternSpec::Strip {
                length,
                width,
                x0,
                y0,
                orientation,
                ..
            } => Some(match orientation {
                StripOrientation::Horizontal => (x0, y0, length, width),
                StripOrientation::Vertical => (x0, y0, width, length),
            }),
            PatternSpec::Corner { size, anchor, .. } => {
                let x0 = match anchor {
                    CornerAnchor::MaxX | CornerAnchor::MaxXY => lat.lx.checked_sub(size)?,
                    _ => 0,
                };
                let y0 = match anchor {
                    CornerAnchor::MaxY | CornerAnchor::MaxXY => lat.ly.checked_sub(size)?,
                    _ => 0,
                };
                Some((x0, y0, size, size))
            }
            PatternSpec::Bubble { w, h, x0, y0, .. } => Some((x0, y0, w, h)),
            _ => None,
        }
    }

    pub fn validate(&self, lat: &LatticeSpec) -> Result<()> {
        let oob = |what: String| PatternError::OutOfBounds {
            lx: lat.lx,
            ly: lat.ly,
            what,
        };
        if let PatternSpec::Corner { size, .. } = *self {
            if size == 0 {
                return Err(PatternError::Empty);
            }
            if size > lat.lx || size > lat.ly {
                return Err(oob(format!("corner of size {size}")));
            }
        }
        if let Some((x0, y0, w, h)) = self.rect(lat) {
            if w == 0 || h == 0 {
                return Err(PatternError::Empty);
            }
            if x0 + w > lat.lx || y0 + h > lat.ly {
                return Err(oob(format!("{w}x{h} block at ({x0}, {y0})")));
            }
        }
        Ok(())
    }

    /// Sites whose spin differs from the background.
    pub fn flipped_sites(&self, lat: &LatticeSpec) -> Result<Vec<usize>> {
        self.validate(lat)?;
        let Some((x0, y0, w, h)) = self.rect(lat) else {
            return Ok(Vec::new());
        };
        let mut out = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                out.push(lat.site(x, y));
            }
        }
        Ok(out)
    }

    /// Bulk and end sites of a width-1 strip: the `n_bulk` innermost spins
    /// and the two outermost ones.
    pub fn strip_regions(&self, lat: &LatticeSpec, n_bulk: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let PatternSpec::Strip { length, .. } = *self else {
            return Err(PatternError::NoRegion(self.kind_name()));
        };
        let sites = self.flipped_sites(lat)?;
        if sites.len() != length || length < 2 || n_bulk > length - 2 || n_bulk == 0 {
            return Err(PatternError::NoRegion("strip"));
        }
        let start = (length - n_bulk) / 2;
        let bulk = sites[start..start + n_bulk].to_vec();
        let edges = vec![sites[0], sites[length - 1]];
        Ok((bulk, edges))
    }

    /// The flipped site at the inner corner of a corner pattern.
    pub fn corner_site(&self, lat: &LatticeSpec) -> Result<usize> {
        let PatternSpec::Corner { anchor, .. } = *self else {
            return Err(PatternError::NoRegion(self.kind_name()));
        };
        let (x0, y0, w, h) = self.rect(lat).ok_or(PatternError::Empty)?;
        self.validate(lat)?;
        let x = match anchor {
            CornerAnchor::MaxX | CornerAnchor::MaxXY => x0,
            _ => x0 + w - 1,
        };
        let y = match anchor {
            CornerAnchor::MaxY | CornerAnchor::MaxXY => y0,
            _ => y0 + h - 1,
        };
        Ok(lat.site(x, y))
    }
}

/// Per-site product state for `spec`.
pub fn make_pattern(lat: &LatticeSpec, spec: &PatternSpec) -> Result<Vec<LocalState>> {
    if *spec == PatternSpec::UniformZPolarized {
        return Ok(vec![LocalState::z_plus(); lat.n_sites()]);
    }
    let bg = spec.background();
    let mut spins = vec![bg; lat.n_sites()];
    for s in spec.flipped_sites(lat)? {
        spins[s] = bg.flipped();
    }
    if let PatternSpec::Corner { anchor, .. } = *spec {
        if !interface_is_lipschitz(lat, &spins, anchor) {
            return Err(PatternError::NotLipschitz);
        }
    }
    Ok(spins.into_iter().map(Spin::local).collect())
}

/// Whether the flipped region seen from `anchor` is a staircase: each column
/// is flipped on a prefix and prefix heights never increase away from the
/// anchor. The interface is then a path of ±1 slopes in the frame rotated by
/// 45°.
pub fn interface_is_lipschitz(lat: &LatticeSpec, spins: &[Spin], anchor: CornerAnchor) -> bool {
    let bg = spins[lat.site(
        if matches!(anchor, CornerAnchor::MaxX | CornerAnchor::MaxXY) { 0 } else { lat.lx - 1 },
        if matches!(anchor, CornerAnchor::MaxY | CornerAnchor::MaxXY) { 0 } else { lat.ly - 1 },
    )];
    let at = |u: usize, v: usize| {
        let x = if matches!(anchor, CornerAnchor::MaxX | CornerAnchor::MaxXY) { lat.lx - 1 - u } else { u };
        let y = if matches!(anchor, CornerAnchor::MaxY | CornerAnchor::MaxXY) { lat.ly - 1 - v } else { v };
        spins[lat.site(x, y)] != bg
    };
    let mut prev = usize::MAX;
    for u in 0..lat.lx {
        let height = (0..lat.ly).take_while(|&v| at(u, v)).count();
        if (height..lat.ly).any(|v| at(u, v)) || height > prev {
            return false;
        }
        prev = height;
    }
    true
}

/// `⟨D⟩ = ½ Σ_bonds (1 − m_i m_j)` of a product state, with `m = ⟨σx⟩`.
pub fn product_domain_walls(lat: &LatticeSpec, locals: &[LocalState]) -> f64 {
    let m: Vec<f64> = locals
        .iter()
        .map(|l| {
            let [a, b] = l.amplitudes();
            (a.norm_sqr() - b.norm_sqr()) / (a.norm_sqr() + b.norm_sqr())
        })
        .collect();
    lat.bonds
        .iter()
        .map(|&(i, j)| 0.5 * (1.0 - m[i] * m[j]))
        .sum()
}

/// Picture of a pattern, top row first: `+` up, `-` down, `z` anything else.
pub fn ascii_dump(lat: &LatticeSpec, locals: &[LocalState]) -> String {
    let mut out = String::with_capacity((lat.lx + 1) * lat.ly);
    for y in (0..lat.ly).rev() {
        for x in 0..lat.lx {
            out.push(match locals[lat.site(x, y)] {
                LocalState::Up => '+',
                LocalState::Down => '-',
                LocalState::Amplitudes(_) => 'z',
            });
        }
        out.push('\n');
    }
    out
}
