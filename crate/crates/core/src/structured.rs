//! Structure constants for locally connected networks.
//!
//! Hidden layers live on square grids of sites. A site at grid index `(i, j)` of a
//! layer with stride `s` sits at `(i·s, j·s)` in input-pixel coordinates and holds
//! `nps` units. A unit receives feedforward input from every unit of the previous
//! layer whose site lies within Euclidean distance `radius` of its own site, and
//! is laterally connected only to units sharing its site. Boundary sites keep
//! their truncated receptive fields. The output layer stays fully connected.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use ndarray::{Array1, Array2};

use crate::error::{CsmError, Result};
use crate::learning::{csm_update, LearningRates};
use crate::net::{NetworkState, Parameters};

/// Nonnegative structure constants `s^W,(p)` and symmetric `s^L,(p)` for `p = 1..=P`.
/// A zero entry removes the synapse.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureMasks {
    pub feedforward: Vec<Array2<f64>>,
    pub lateral: Vec<Array2<f64>>,
}

impl StructureMasks {
    /// All-ones masks: a fully connected network.
    pub fn all_ones(sizes: &[usize]) -> Self {
        let depth = sizes.len() - 1;
        Self {
            feedforward: (1..=depth)
                .map(|p| Array2::ones((sizes[p], sizes[p - 1])))
                .collect(),
            lateral: (1..=depth).map(|p| Array2::ones((sizes[p], sizes[p]))).collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.feedforward.len()
    }

    pub fn check_shapes(&self, sizes: &[usize]) -> Result<()> {
        let depth = sizes.len() - 1;
        if self.feedforward.len() != depth || self.lateral.len() != depth {
            return Err(CsmError::Shape(format!(
                "masks cover {} layers, topology has {depth}",
                self.feedforward.len()
            )));
        }
        for p in 1..=depth {
            let w = self.feedforward[p - 1].dim();
            let l = self.lateral[p - 1].dim();
            if w != (sizes[p], sizes[p - 1]) || l != (sizes[p], sizes[p]) {
                return Err(CsmError::Shape(format!(
                    "layer {p}: masks {w:?} / {l:?} do not match sizes {} and {}",
                    sizes[p],
                    sizes[p - 1]
                )));
            }
        }
        for (p, m) in self.feedforward.iter().chain(&self.lateral).enumerate() {
            if m.iter().any(|&s| !(s.is_finite() && s >= 0.0)) {
                return Err(CsmError::InvalidTopology(format!(
                    "mask {p} has a negative or non-finite structure constant"
                )));
            }
        }
        for (p, m) in self.lateral.iter().enumerate() {
            if m != m.t() {
                return Err(CsmError::InvalidTopology(format!(
                    "lateral mask of layer {} is not symmetric",
                    p + 1
                )));
            }
        }
        Ok(())
    }

    /// Number of present synapses per layer: `(feedforward, lateral)`.
    pub fn connection_counts(&self) -> Vec<(usize, usize)> {
        self.feedforward
            .iter()
            .zip(&self.lateral)
            .map(|(w, l)| {
                (
                    w.iter().filter(|&&s| s != 0.0).count(),
                    l.iter().filter(|&&s| s != 0.0).count(),
                )
            })
            .collect()
    }

    /// Sparse coordinate list, one nonzero per line: `kind layer row col value`,
    /// where `kind` is `W` or `L`.
    pub fn write_coo<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# csm-mask v1 layers={}", self.depth())?;
        for (p, (w, l)) in self.feedforward.iter().zip(&self.lateral).enumerate() {
            writeln!(
                out,
                "# layer {} W {}x{} L {}x{}",
                p + 1,
                w.nrows(),
                w.ncols(),
                l.nrows(),
                l.ncols()
            )?;
            for ((i, j), &s) in w.indexed_iter() {
                if s != 0.0 {
                    writeln!(out, "W {} {i} {j} {s}", p + 1)?;
                }
            }
            for ((i, j), &s) in l.indexed_iter() {
                if s != 0.0 {
                    writeln!(out, "L {} {i} {j} {s}", p + 1)?;
                }
            }
        }
        Ok(())
    }

    pub fn to_coo_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_coo(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("coordinate list is ASCII")
    }

    /// Reads the format written by [`StructureMasks::write_coo`].
    pub fn read_coo<R: BufRead>(input: R) -> Result<Self> {
        let bad = |line: usize, msg: &str| CsmError::Config(format!("mask line {line}: {msg}"));
        let mut ff = Vec::new();
        let mut lat = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("# layer ") {
                let f: Vec<&str> = rest.split_whitespace().collect();
                let dims = |s: &str| -> Option<(usize, usize)> {
                    let (a, b) = s.split_once('x')?;
                    Some((a.parse().ok()?, b.parse().ok()?))
                };
                match (f.get(1), f.get(2).and_then(|s| dims(s)), f.get(3), f.get(4).and_then(|s| dims(s))) {
                    (Some(&"W"), Some(w), Some(&"L"), Some(l)) => {
                        ff.push(Array2::zeros(w));
                        lat.push(Array2::zeros(l));
                    }
                    _ => return Err(bad(n + 1, "malformed layer header")),
                }
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(bad(n + 1, "expected `kind layer row col value`"));
            }
            let layer: usize = f[1].parse().map_err(|_| bad(n + 1, "layer"))?;
            let i: usize = f[2].parse().map_err(|_| bad(n + 1, "row"))?;
            let j: usize = f[3].parse().map_err(|_| bad(n + 1, "col"))?;
            let v: f64 = f[4].parse().map_err(|_| bad(n + 1, "value"))?;
            let target = match f[0] {
                "W" => ff.get_mut(layer.wrapping_sub(1)),
                "L" => lat.get_mut(layer.wrapping_sub(1)),
                _ => return Err(bad(n + 1, "kind must be W or L")),
            }
            .ok_or_else(|| bad(n + 1, "layer without header"))?;
            *target
                .get_mut((i, j))
                .ok_or_else(|| bad(n + 1, "index out of range"))? = v;
        }
        Ok(Self {
            feedforward: ff,
            lateral: lat,
        })
    }
}

/// One hidden grid layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridLayerSpec {
    pub nps: usize,
    pub stride: usize,
    pub radius: f64,
}

impl GridLayerSpec {
    pub fn new(nps: usize, stride: usize, radius: f64) -> Self {
        Self { nps, stride, radius }
    }

    /// Grid side `d = input_side / stride`.
    pub fn side(&self, input_side: usize) -> usize {
        input_side / self.stride
    }

    pub fn units(&self, input_side: usize) -> usize {
        let d = self.side(input_side);
        d * d * self.nps
    }
}

/// Layer sizes and masks of a grid network.
#[derive(Debug, Clone)]
pub struct GridNetwork {
    pub sizes: Vec<usize>,
    pub masks: StructureMasks,
}

#[derive(Clone, Copy)]
struct GridGeom {
    side: usize,
    stride: usize,
    nps: usize,
    /// Channel-major unit order `k · side² + row · side + col`, as in planar image files.
    planar: bool,
}

impl GridGeom {
    /// Site position of unit `idx` in input coordinates. Hidden units are
    /// ordered `(row · side + col) · nps + k`.
    fn position(&self, idx: usize) -> (f64, f64) {
        let site = self.site(idx);
        let (row, col) = (site / self.side, site % self.side);
        ((row * self.stride) as f64, (col * self.stride) as f64)
    }

    fn site(&self, idx: usize) -> usize {
        if self.planar {
            idx % (self.side * self.side)
        } else {
            idx / self.nps
        }
    }

    fn units(&self) -> usize {
        self.side * self.side * self.nps
    }
}

/// Builds masks for `input_side × input_side` inputs, one grid per entry of
/// `hidden`, and a fully connected output layer of `outputs` units.
pub fn build_grid_masks(
    input_side: usize,
    hidden: &[GridLayerSpec],
    outputs: usize,
) -> Result<GridNetwork> {
    build_grid_masks_channels(input_side, 1, hidden, outputs)
}

/// [`build_grid_masks`] for multi-channel inputs stored channel-major
/// (all of channel 0, then channel 1, ...). Every channel of a pixel shares its site.
pub fn build_grid_masks_channels(
    input_side: usize,
    channels: usize,
    hidden: &[GridLayerSpec],
    outputs: usize,
) -> Result<GridNetwork> {
    if input_side == 0 || outputs == 0 || channels == 0 {
        return Err(CsmError::InvalidTopology("empty input grid or output layer".into()));
    }
    let mut geoms = vec![GridGeom {
        side: input_side,
        stride: 1,
        nps: channels,
        planar: true,
    }];
    for (h, spec) in hidden.iter().enumerate() {
        if spec.nps == 0 || spec.stride == 0 || !(spec.radius > 0.0) {
            return Err(CsmError::InvalidTopology(format!(
                "grid layer {}: nps, stride and radius must be positive",
                h + 1
            )));
        }
        if !input_side.is_multiple_of(spec.stride) {
            return Err(CsmError::InvalidTopology(format!(
                "grid layer {}: stride {} does not divide input side {input_side}",
                h + 1,
                spec.stride
            )));
        }
        let prev = geoms.last().expect("input geometry present");
        if spec.stride < prev.stride {
            return Err(CsmError::InvalidTopology(format!(
                "grid layer {}: stride {} smaller than previous stride {}",
                h + 1,
                spec.stride,
                prev.stride
            )));
        }
        geoms.push(GridGeom {
            side: spec.side(input_side),
            stride: spec.stride,
            nps: spec.nps,
            planar: false,
        });
    }

    let mut sizes: Vec<usize> = geoms.iter().map(GridGeom::units).collect();
    sizes.push(outputs);

    let mut feedforward = Vec::with_capacity(sizes.len() - 1);
    let mut lateral = Vec::with_capacity(sizes.len() - 1);
    for (h, spec) in hidden.iter().enumerate() {
        let post = geoms[h + 1];
        let pre = geoms[h];
        let r2 = spec.radius * spec.radius;
        let pre_pos: Vec<(f64, f64)> = (0..pre.units()).map(|j| pre.position(j)).collect();
        let w = Array2::from_shape_fn((post.units(), pre.units()), |(i, j)| {
            let (y0, x0) = post.position(i);
            let (y1, x1) = pre_pos[j];
            let d2 = (y0 - y1).powi(2) + (x0 - x1).powi(2);
            if d2 <= r2 {
                1.0
            } else {
                0.0
            }
        });
        let l = Array2::from_shape_fn((post.units(), post.units()), |(i, j)| {
            if post.site(i) == post.site(j) {
                1.0
            } else {
                0.0
            }
        });
        feedforward.push(w);
        lateral.push(l);
    }
    let last = sizes.len() - 1;
    feedforward.push(Array2::ones((sizes[last], sizes[last - 1])));
    lateral.push(Array2::ones((sizes[last], sizes[last])));

    Ok(GridNetwork {
        sizes,
        masks: StructureMasks {
            feedforward,
            lateral,
        },
    })
}

/// CSM update restricted to present synapses; lateral decay is divided by `s^L`.
pub fn structured_csm_update(
    params: &Parameters,
    free: &NetworkState,
    nudged: &NetworkState,
    rates: &LearningRates,
    masks: &StructureMasks,
) -> Result<Parameters> {
    csm_update(params, free, nudged, rates, Some(masks))
}

/// Parses `nps:stride:radius` layer descriptors separated by commas, e.g.
/// `4:1:4` or `16:1:4,8:2:6`.
pub fn parse_grid_spec(s: &str) -> Result<Vec<GridLayerSpec>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let f: Vec<&str> = t.trim().split(':').collect();
            let err = || CsmError::Config(format!("grid layer `{t}`: expected nps:stride:radius"));
            if f.len() != 3 {
                return Err(err());
            }
            Ok(GridLayerSpec {
                nps: f[0].parse().map_err(|_| err())?,
                stride: f[1].parse().map_err(|_| err())?,
                radius: f[2].parse().map_err(|_| err())?,
            })
        })
        .collect()
}

pub fn format_grid_spec(layers: &[GridLayerSpec]) -> String {
    let mut s = String::new();
    for (i, l) in layers.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{}:{}:{}", l.nps, l.stride, l.radius).unwrap();
    }
    s
}

/// Fraction of present feedforward synapses per layer.
pub fn density(masks: &StructureMasks) -> Array1<f64> {
    masks
        .feedforward
        .iter()
        .map(|m| m.iter().filter(|&&s| s != 0.0).count() as f64 / m.len() as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force count of integer lattice points within distance `r` of the origin.
    fn lattice_points(r: f64) -> usize {
        let k = r.ceil() as i64;
        let mut n = 0;
        for x in -k..=k {
            for y in -k..=k {
                if ((x * x + y * y) as f64) <= r * r {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn interior_receptive_field_matches_lattice_count() {
        assert_eq!(lattice_points(4.0), 49);
        let g = build_grid_masks(28, &[GridLayerSpec::new(20, 1, 4.0)], 10).unwrap();
        assert_eq!(g.sizes, vec![784, 28 * 28 * 20, 10]);
        let w = &g.masks.feedforward[0];
        // unit k=3 of site (14, 14)
        let unit = (14 * 28 + 14) * 20 + 3;
        let n = w.row(unit).iter().filter(|&&s| s != 0.0).count();
        assert_eq!(n, 49);
        // corner site keeps a truncated field: the quarter disc with x, y >= 0
        let quarter = (0..=4i64)
            .flat_map(|x| (0..=4i64).map(move |y| x * x + y * y))
            .filter(|&d2| d2 <= 16)
            .count();
        let corner = w.row(0).iter().filter(|&&s| s != 0.0).count();
        assert_eq!(corner, quarter);
    }

    #[test]
    fn single_neuron_per_site_gives_identity_lateral() {
        let g = build_grid_masks(6, &[GridLayerSpec::new(1, 2, 2.0)], 3).unwrap();
        assert_eq!(g.masks.lateral[0], Array2::<f64>::eye(9));
    }

    #[test]
    fn lateral_blocks_share_site() {
        let g = build_grid_masks(4, &[GridLayerSpec::new(3, 2, 1.0)], 2).unwrap();
        let l = &g.masks.lateral[0];
        assert_eq!(l.dim(), (12, 12));
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(l[(i, j)] != 0.0, i / 3 == j / 3);
            }
        }
    }

    #[test]
    fn large_radius_is_fully_connected() {
        let d = 5usize;
        let stride = 2usize;
        let radius = d as f64 * 2f64.sqrt() * stride as f64;
        let g = build_grid_masks(10, &[GridLayerSpec::new(2, stride, radius)], 4).unwrap();
        assert!(g.masks.feedforward[0].iter().all(|&s| s == 1.0));
    }

    #[test]
    fn stride_errors() {
        assert!(matches!(
            build_grid_masks(28, &[GridLayerSpec::new(4, 3, 4.0)], 10),
            Err(CsmError::InvalidTopology(_))
        ));
        assert!(build_grid_masks(
            28,
            &[GridLayerSpec::new(4, 2, 4.0), GridLayerSpec::new(4, 1, 4.0)],
            10
        )
        .is_err());
    }

    #[test]
    fn translation_by_one_stride_preserves_interior_rows() {
        let side = 12;
        let g = build_grid_masks(side, &[GridLayerSpec::new(2, 2, 3.0)], 3).unwrap();
        let w = &g.masks.feedforward[0];
        let d = side / 2;
        // site (2,2) and (2,3): the second field equals the first shifted by 2 pixels
        for k in 0..2 {
            let a = (2 * d + 2) * 2 + k;
            let b = (2 * d + 3) * 2 + k;
            for row in 0..side {
                for col in 0..side - 2 {
                    assert_eq!(w[(a, row * side + col)], w[(b, row * side + col + 2)]);
                }
            }
        }
    }

    #[test]
    fn planar_channels_share_a_site() {
        let spec = [GridLayerSpec::new(2, 2, 1.0)];
        let net = build_grid_masks_channels(4, 3, &spec, 2).unwrap();
        assert_eq!(net.sizes, vec![48, 8, 2]);
        let w = &net.masks.feedforward[0];
        // hidden site (0, 0) sees pixels within distance 1 of the origin in every channel
        for c in 0..3 {
            for (pix, on) in [(0, 1.0), (1, 1.0), (4, 1.0), (5, 0.0), (2, 0.0)] {
                assert_eq!(w[(0, c * 16 + pix)], on);
            }
        }
        let mono = build_grid_masks(4, &spec, 2).unwrap();
        assert_eq!(mono.masks.feedforward[0], net.masks.feedforward[0].slice(ndarray::s![.., 0..16]));
    }

    #[test]
    fn coo_round_trip() {
        let g = build_grid_masks(6, &[GridLayerSpec::new(2, 2, 2.5)], 3).unwrap();
        let text = g.masks.to_coo_string();
        let back = StructureMasks::read_coo(text.as_bytes()).unwrap();
        assert_eq!(back, g.masks);
    }

    #[test]
    fn grid_spec_parsing() {
        let v = parse_grid_spec("4:1:4, 8:2:6.5").unwrap();
        assert_eq!(v, vec![GridLayerSpec::new(4, 1, 4.0), GridLayerSpec::new(8, 2, 6.5)]);
        assert_eq!(format_grid_spec(&v), "4:1:4,8:2:6.5");
        assert!(parse_grid_spec("4:1").is_err());
    }
}
