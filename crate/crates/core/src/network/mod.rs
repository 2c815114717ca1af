//! Evaluation network.
//!
//! ```text
//! board X (n x 14) -> GCN1 (60) -> GCN2 (30) -> flatten (n*30) -> FC2 (60) --+
//!                                                                            +-> FC3 (30) -> out (6)
//! global g (72) ------------------------------------------------> FC1 (60) --+
//! ```
//!
//! Graph layers compute `ReLU(Â H W)` with `Â = D^-1/2 (A + I) D^-1/2` and no
//! bias. Every layer but the last is followed by a ReLU.

mod file;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{self, FeatureConfig, FeatureSet, Normalizer, BOARD_DIM, GLOBAL_DIM};
use crate::rules::{MapDef, PlayerId, Position, Rules, MAX_PLAYERS};

pub use file::{MODEL_MAGIC, MODEL_VERSION};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("dimension mismatch: {0}")]
    Dims(String),
    #[error("output index {0} out of range")]
    OutputIndex(usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file")]
    Magic,
    #[error("model file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("model file is corrupt or truncated (checksum mismatch)")]
    Checksum,
    #[error("model file is malformed: {0}")]
    Malformed(String),
    #[error("model was trained on a different map")]
    MapMismatch,
}

/// Layer widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Arch {
    pub nodes: usize,
    pub board_dim: usize,
    pub global_dim: usize,
    pub gcn1: usize,
    pub gcn2: usize,
    pub fc1: usize,
    pub fc2: usize,
    pub fc3: usize,
    pub outputs: usize,
}

impl Arch {
    pub fn for_map(map: &MapDef) -> Arch {
        Arch {
            nodes: map.territory_count(),
            board_dim: BOARD_DIM,
            global_dim: GLOBAL_DIM,
            gcn1: 60,
            gcn2: 30,
            fc1: 60,
            fc2: 60,
            fc3: 30,
            outputs: MAX_PLAYERS,
        }
    }

    /// Same wiring with every hidden width set to `w`; handy for gradient checks.
    pub fn narrow(self, w: usize) -> Arch {
        Arch {
            gcn1: w,
            gcn2: w,
            fc1: w,
            fc2: w,
            fc3: w,
            ..self
        }
    }

    fn validate(&self) -> Result<(), NetworkError> {
        let all = [
            self.nodes,
            self.board_dim,
            self.global_dim,
            self.gcn1,
            self.gcn2,
            self.fc1,
            self.fc2,
            self.fc3,
            self.outputs,
        ];
        if all.contains(&0) {
            return Err(NetworkError::Dims(format!("zero width in {self:?}")));
        }
        Ok(())
    }
}

/// Sparse `Â`, one row of `(column, weight)` per node, self-loop included.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphOperator {
    rows: Vec<Vec<(usize, f64)>>,
}

impl GraphOperator {
    pub fn new(map: &MapDef) -> GraphOperator {
        let deg: Vec<f64> = map
            .territory_ids()
            .map(|t| map.neighbours(t).len() as f64 + 1.0)
            .collect();
        let rows = map
            .territory_ids()
            .map(|t| {
                let i = t.index();
                let mut row: Vec<(usize, f64)> = std::iter::once(i)
                    .chain(map.neighbours(t).iter().map(|n| n.index()))
                    .map(|j| (j, 1.0 / (deg[i] * deg[j]).sqrt()))
                    .collect();
                row.sort_by_key(|&(j, _)| j);
                row
            })
            .collect();
        GraphOperator { rows }
    }

    pub fn nodes(&self) -> usize {
        self.rows.len()
    }

    pub fn dense(&self) -> Array2<f64> {
        let n = self.nodes();
        let mut a = Array2::zeros((n, n));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                a[[i, j]] = w;
            }
        }
        a
    }

    /// `Â X` for each of the stacked `n`-row blocks of `x`.
    pub fn propagate(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let n = self.nodes();
        let mut out = Array2::zeros(x.raw_dim());
        for b in 0..x.nrows() / n {
            let off = b * n;
            for (i, row) in self.rows.iter().enumerate() {
                let mut dst = out.row_mut(off + i);
                for &(j, w) in row {
                    dst.scaled_add(w, &x.row(off + j));
                }
            }
        }
        out
    }
}

/// Trainable tensors. Weights are stored `(in, out)`. Also used as the
/// gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub w_gcn1: Array2<f64>,
    pub w_gcn2: Array2<f64>,
    pub w_fc1: Array2<f64>,
    pub b_fc1: Array1<f64>,
    pub w_fc2: Array2<f64>,
    pub b_fc2: Array1<f64>,
    pub w_fc3: Array2<f64>,
    pub b_fc3: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

impl Params {
    pub fn zeros(a: &Arch) -> Params {
        Params {
            w_gcn1: Array2::zeros((a.board_dim, a.gcn1)),
            w_gcn2: Array2::zeros((a.gcn1, a.gcn2)),
            w_fc1: Array2::zeros((a.global_dim, a.fc1)),
            b_fc1: Array1::zeros(a.fc1),
            w_fc2: Array2::zeros((a.nodes * a.gcn2, a.fc2)),
            b_fc2: Array1::zeros(a.fc2),
            w_fc3: Array2::zeros((a.fc2 + a.fc1, a.fc3)),
            b_fc3: Array1::zeros(a.fc3),
            w_out: Array2::zeros((a.fc3, a.outputs)),
            b_out: Array1::zeros(a.outputs),
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(a: &Arch, seed: u64) -> Result<Params, NetworkError> {
        a.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Params::zeros(a);
        for w in [
            &mut p.w_gcn1,
            &mut p.w_gcn2,
            &mut p.w_fc1,
            &mut p.w_fc2,
            &mut p.w_fc3,
            &mut p.w_out,
        ] {
            let bound = 1.0 / (w.nrows() as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-bound..=bound));
        }
        Ok(p)
    }

    pub fn arch_matches(&self, a: &Arch) -> bool {
        self.shapes() == Params::zeros(a).shapes()
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        self.tensors().iter().map(|t| t.1.to_vec()).collect()
    }

    fn tensors(&self) -> [(&[f64], &[usize]); 10] {
        fn v2(a: &Array2<f64>) -> (&[f64], &[usize]) {
            (a.as_slice().expect("standard layout"), a.shape())
        }
        fn v1(a: &Array1<f64>) -> (&[f64], &[usize]) {
            (a.as_slice().expect("standard layout"), a.shape())
        }
        [
            v2(&self.w_gcn1),
            v2(&self.w_gcn2),
            v2(&self.w_fc1),
            v1(&self.b_fc1),
            v2(&self.w_fc2),
            v1(&self.b_fc2),
            v2(&self.w_fc3),
            v1(&self.b_fc3),
            v2(&self.w_out),
            v1(&self.b_out),
        ]
    }

    /// Flat views of every tensor in file order.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.tensors().into_iter().map(|t| t.0).collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let Params {
            w_gcn1,
            w_gcn2,
            w_fc1,
            b_fc1,
            w_fc2,
            b_fc2,
            w_fc3,
            b_fc3,
            w_out,
            b_out,
        } = self;
        vec![
            w_gcn1.as_slice_mut().expect("standard layout"),
            w_gcn2.as_slice_mut().expect("standard layout"),
            w_fc1.as_slice_mut().expect("standard layout"),
            b_fc1.as_slice_mut().expect("standard layout"),
            w_fc2.as_slice_mut().expect("standard layout"),
            b_fc2.as_slice_mut().expect("standard layout"),
            w_fc3.as_slice_mut().expect("standard layout"),
            b_fc3.as_slice_mut().expect("standard layout"),
            w_out.as_slice_mut().expect("standard layout"),
            b_out.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    /// `self += k * other`.
    pub fn add_scaled(&mut self, k: f64, other: &Params) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += k * s;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|x| *x *= k);
        }
    }

    pub fn fill(&mut self, v: f64) {
        for s in self.slices_mut() {
            s.fill(v);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Intermediate activations kept for the reverse pass.
#[derive(Clone, Debug)]
pub struct Trace {
    ax: Array2<f64>,
    z1: Array2<f64>,
    ah1: Array2<f64>,
    z2: Array2<f64>,
    flat: Array1<f64>,
    z_fc2: Array1<f64>,
    global: Array1<f64>,
    z_fc1: Array1<f64>,
    cat: Array1<f64>,
    z3: Array1<f64>,
    h3: Array1<f64>,
    pub output: Array1<f64>,
}

fn relu1(z: &Array1<f64>) -> Array1<f64> {
    z.mapv(|v| v.max(0.0))
}

fn relu2(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

fn gate1(grad: &mut Array1<f64>, z: &Array1<f64>) {
    Zip::from(grad).and(z).for_each(|g, &z| {
        if z <= 0.0 {
            *g = 0.0
        }
    });
}

fn gate2(grad: &mut Array2<f64>, z: &Array2<f64>) {
    Zip::from(grad).and(z).for_each(|g, &z| {
        if z <= 0.0 {
            *g = 0.0
        }
    });
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.dot(&b2)
}

/// Weights plus everything needed to evaluate a raw position.
#[derive(Clone, Debug)]
pub struct Network {
    pub arch: Arch,
    pub params: Params,
    pub graph: GraphOperator,
    pub normalizer: Normalizer,
    pub feature_config: FeatureConfig,
    map: MapDef,
}

impl Network {
    pub fn new(map: &MapDef, arch: Arch, params: Params) -> Result<Network, NetworkError> {
        arch.validate()?;
        if arch.nodes != map.territory_count() || arch.board_dim != BOARD_DIM || arch.global_dim != GLOBAL_DIM {
            return Err(NetworkError::Dims(format!(
                "{arch:?} does not fit a {}-territory map with {BOARD_DIM}/{GLOBAL_DIM} features",
                map.territory_count()
            )));
        }
        if !params.arch_matches(&arch) {
            return Err(NetworkError::Dims(
                "parameter shapes do not match the architecture".into(),
            ));
        }
        Ok(Network {
            arch,
            params,
            graph: GraphOperator::new(map),
            normalizer: Normalizer::identity(),
            feature_config: FeatureConfig::default(),
            map: map.clone(),
        })
    }

    pub fn init(map: &MapDef, seed: u64) -> Network {
        let arch = Arch::for_map(map);
        let params = Params::init(&arch, seed).expect("default widths are valid");
        Network::new(map, arch, params).expect("consistent by construction")
    }

    /// Random initialisation with explicit layer widths.
    pub fn init_with(map: &MapDef, arch: Arch, seed: u64) -> Result<Network, NetworkError> {
        arch.validate()?;
        let params = Params::init(&arch, seed)?;
        Network::new(map, arch, params)
    }

    pub fn map(&self) -> &MapDef {
        &self.map
    }

    /// Extracts and normalizes features.
    pub fn features(&self, rules: &Rules, pos: &Position) -> FeatureSet {
        let mut fs = features::extract(rules, pos, &self.feature_config);
        self.normalizer.apply_in_place(&mut fs);
        fs
    }

    pub fn evaluate(&self, rules: &Rules, pos: &Position) -> Array1<f64> {
        self.forward(&self.features(rules, pos))
            .expect("features match the map")
    }

    pub fn evaluate_for(&self, rules: &Rules, pos: &Position, p: PlayerId) -> f64 {
        self.evaluate(rules, pos)[p.index()]
    }

    fn check_input(&self, fs: &FeatureSet) -> Result<(), NetworkError> {
        let a = &self.arch;
        if fs.global.len() != a.global_dim || fs.board.shape() != [a.nodes, a.board_dim] {
            return Err(NetworkError::Dims(format!(
                "input global {} board {:?}, network expects {} and [{}, {}]",
                fs.global.len(),
                fs.board.shape(),
                a.global_dim,
                a.nodes,
                a.board_dim
            )));
        }
        Ok(())
    }

    /// Forward pass on normalized features.
    pub fn forward(&self, fs: &FeatureSet) -> Result<Array1<f64>, NetworkError> {
        Ok(self.trace(fs)?.output)
    }

    pub fn trace(&self, fs: &FeatureSet) -> Result<Trace, NetworkError> {
        self.check_input(fs)?;
        let p = &self.params;
        let ax = self.graph.propagate(fs.board.view());
        let z1 = ax.dot(&p.w_gcn1);
        let ah1 = self.graph.propagate(relu2(&z1).view());
        let z2 = ah1.dot(&p.w_gcn2);
        let flat = Array1::from_iter(relu2(&z2).iter().copied());
        let z_fc2 = flat.dot(&p.w_fc2) + &p.b_fc2;
        let global = fs.global.clone();
        let z_fc1 = global.dot(&p.w_fc1) + &p.b_fc1;
        let mut cat = Array1::zeros(self.arch.fc2 + self.arch.fc1);
        cat.slice_mut(s![..self.arch.fc2]).assign(&relu1(&z_fc2));
        cat.slice_mut(s![self.arch.fc2..]).assign(&relu1(&z_fc1));
        let z3 = cat.dot(&p.w_fc3) + &p.b_fc3;
        let h3 = relu1(&z3);
        let output = h3.dot(&p.w_out) + &p.b_out;
        Ok(Trace {
            ax,
            z1,
            ah1,
            z2,
            flat,
            z_fc2,
            global,
            z_fc1,
            cat,
            z3,
            h3,
            output,
        })
    }

    /// Outputs for many positions at once, one row each.
    pub fn forward_batch(&self, sets: &[FeatureSet]) -> Result<Array2<f64>, NetworkError> {
        let a = &self.arch;
        if sets.is_empty() {
            return Ok(Array2::zeros((0, a.outputs)));
        }
        for fs in sets {
            self.check_input(fs)?;
        }
        let p = &self.params;
        let b = sets.len();
        let x = features::stack_boards(sets);
        let h1 = relu2(&self.graph.propagate(x.view()).dot(&p.w_gcn1));
        let h2 = relu2(&self.graph.propagate(h1.view()).dot(&p.w_gcn2));
        let flat = h2
            .into_shape_with_order((b, a.nodes * a.gcn2))
            .map_err(|e| NetworkError::Dims(e.to_string()))?;
        let f2 = relu2(&(flat.dot(&p.w_fc2) + &p.b_fc2));
        let mut g = Array2::zeros((b, a.global_dim));
        for (i, fs) in sets.iter().enumerate() {
            g.row_mut(i).assign(&fs.global);
        }
        let f1 = relu2(&(g.dot(&p.w_fc1) + &p.b_fc1));
        let cat = ndarray::concatenate(Axis(1), &[f2.view(), f1.view()]).expect("same row count");
        let h3 = relu2(&(cat.dot(&p.w_fc3) + &p.b_fc3));
        Ok(h3.dot(&p.w_out) + &p.b_out)
    }

    /// Gradient of output `index` with respect to every parameter.
    pub fn backward(&self, trace: &Trace, index: usize) -> Result<Params, NetworkError> {
        if index >= self.arch.outputs {
            return Err(NetworkError::OutputIndex(index));
        }
        let mut seed = Array1::zeros(self.arch.outputs);
        seed[index] = 1.0;
        Ok(self.backward_seeded(trace, seed.view()))
    }

    /// Gradient of `seed · output`: one reverse pass for any linear
    /// combination of the outputs.
    pub fn backward_seeded(&self, t: &Trace, seed: ArrayView1<f64>) -> Params {
        let a = &self.arch;
        let p = &self.params;
        let mut g = Params::zeros(a);

        g.b_out.assign(&seed);
        g.w_out = outer(t.h3.view(), seed);
        let mut dz3 = p.w_out.dot(&seed);
        gate1(&mut dz3, &t.z3);

        g.b_fc3.assign(&dz3);
        g.w_fc3 = outer(t.cat.view(), dz3.view());
        let dcat = p.w_fc3.dot(&dz3);

        let mut dz_fc2 = dcat.slice(s![..a.fc2]).to_owned();
        gate1(&mut dz_fc2, &t.z_fc2);
        let mut dz_fc1 = dcat.slice(s![a.fc2..]).to_owned();
        gate1(&mut dz_fc1, &t.z_fc1);

        g.b_fc1.assign(&dz_fc1);
        g.w_fc1 = outer(t.global.view(), dz_fc1.view());
        g.b_fc2.assign(&dz_fc2);
        g.w_fc2 = outer(t.flat.view(), dz_fc2.view());

        let dflat = p.w_fc2.dot(&dz_fc2);
        let mut dz2 = dflat
            .into_shape_with_order((a.nodes, a.gcn2))
            .expect("flat length is nodes * gcn2");
        gate2(&mut dz2, &t.z2);
        g.w_gcn2 = t.ah1.t().dot(&dz2);

        // Â is symmetric, so its transpose is itself.
        let dh1 = self.graph.propagate(dz2.dot(&p.w_gcn2.t()).view());
        let mut dz1 = dh1;
        gate2(&mut dz1, &t.z1);
        g.w_gcn1 = t.ax.t().dot(&dz1);
        for w in [
            &mut g.w_gcn1,
            &mut g.w_gcn2,
            &mut g.w_fc1,
            &mut g.w_fc2,
            &mut g.w_fc3,
            &mut g.w_out,
        ] {
            if !w.is_standard_layout() {
                *w = w.as_standard_layout().into_owned();
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::new_game;
    use std::sync::Arc;

    fn toy_map(edges: &[(usize, usize)]) -> MapDef {
        MapDef::new(
            "toy",
            vec![("c".into(), 1)],
            (0..3).map(|i| (format!("t{i}"), 0)).collect(),
            edges,
        )
        .unwrap()
    }

    fn random_features(arch: &Arch, seed: u64) -> FeatureSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureSet {
            global: Array1::from_shape_fn(arch.global_dim, |_| rng.random_range(-2.0..2.0)),
            board: Array2::from_shape_fn((arch.nodes, arch.board_dim), |_| rng.random_range(-2.0..2.0)),
        }
    }

    #[test]
    fn operator_is_symmetric_and_normalised() {
        let map = MapDef::classic();
        let a = GraphOperator::new(&map).dense();
        assert_eq!(a, a.t());
        // Alaska: 3 neighbours, so the self weight is 1/4.
        assert!((a[[0, 0]] - 0.25).abs() < 1e-15);
        let edgeless = GraphOperator::new(&toy_map(&[])).dense();
        assert_eq!(edgeless, Array2::<f64>::eye(3));
    }

    #[test]
    fn edgeless_gcn_is_per_node_dense() {
        let map = toy_map(&[]);
        let net = Network::init(&map, 5);
        let fs = random_features(&net.arch, 1);
        let t = net.trace(&fs).unwrap();
        let per_node = fs.board.dot(&net.params.w_gcn1);
        assert!((t.z1 - per_node).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let map = MapDef::classic();
        let mut net = Network::init(&map, 1);
        net.params.fill(0.0);
        let fs = random_features(&net.arch, 2);
        assert!(net.forward(&fs).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_board_uses_global_path_only() {
        let map = MapDef::classic();
        let net = Network::init(&map, 3);
        let mut fs = random_features(&net.arch, 4);
        fs.board.fill(0.0);
        let t = net.trace(&fs).unwrap();
        assert!(t.flat.iter().all(|&v| v == 0.0));
        let mut other = net.clone();
        other.params.w_gcn1.fill(7.0);
        other.params.w_gcn2.fill(-3.0);
        assert_eq!(net.forward(&fs).unwrap(), other.forward(&fs).unwrap());
    }

    #[test]
    fn init_bounds_and_determinism() {
        let map = MapDef::classic();
        let a = Arch::for_map(&map);
        let p = Params::init(&a, 9).unwrap();
        assert_eq!(p, Params::init(&a, 9).unwrap());
        assert_ne!(p, Params::init(&a, 10).unwrap());
        let bound = 1.0 / (a.nodes as f64 * 30.0).sqrt();
        assert!(p.w_fc2.iter().all(|x| x.abs() <= bound));
        assert!(p.b_fc3.iter().all(|&x| x == 0.0));
        let wide = Arch { global_dim: 100, ..a };
        assert!(Params::init(&wide, 1).unwrap().w_fc1.iter().all(|x| x.abs() <= 0.1));
    }

    #[test]
    fn output_bias_gradient_is_one_hot() {
        let map = MapDef::classic();
        let net = Network::init(&map, 11);
        let t = net.trace(&random_features(&net.arch, 12)).unwrap();
        for p in 0..6 {
            let g = net.backward(&t, p).unwrap();
            let want: Vec<f64> = (0..6).map(|i| if i == p { 1.0 } else { 0.0 }).collect();
            assert_eq!(g.b_out.to_vec(), want);
        }
        assert!(net.backward(&t, 6).is_err());
    }

    #[test]
    fn dead_units_get_no_gradient() {
        let map = MapDef::classic();
        let mut net = Network::init(&map, 13);
        net.params.b_fc3.fill(-1e6);
        let t = net.trace(&random_features(&net.arch, 14)).unwrap();
        let g = net.backward(&t, 0).unwrap();
        assert!(g.w_fc3.iter().all(|&x| x == 0.0));
        assert!(g.w_gcn1.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn finite_differences_small_net() {
        let map = MapDef::new(
            "square",
            vec![("c".into(), 1)],
            (0..4).map(|i| (format!("t{i}"), 0)).collect(),
            &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)],
        )
        .unwrap();
        let arch = Arch::for_map(&map).narrow(5);
        let mut net = Network::new(&map, arch, Params::init(&arch, 21).unwrap()).unwrap();
        for t in 0..net.params.b_fc1.len() {
            net.params.b_fc1[t] = 0.1;
        }
        let fs = random_features(&arch, 22);
        let eps = 1e-5;
        for out in 0..6 {
            let g = net.backward(&net.trace(&fs).unwrap(), out).unwrap();
            let analytic: Vec<f64> = g.slices().concat();
            let mut k = 0;
            for ti in 0..10 {
                for i in (0..net.params.slices()[ti].len()).step_by(7) {
                    let mut plus = net.clone();
                    plus.params.slices_mut()[ti][i] += eps;
                    let mut minus = net.clone();
                    minus.params.slices_mut()[ti][i] -= eps;
                    let num = (plus.forward(&fs).unwrap()[out] - minus.forward(&fs).unwrap()[out]) / (2.0 * eps);
                    let off: usize = net.params.slices()[..ti].iter().map(|s| s.len()).sum();
                    let an = analytic[off + i];
                    assert!(
                        (num - an).abs() <= 1e-6 * (1.0 + an.abs()),
                        "tensor {ti} idx {i}: {num} vs {an}"
                    );
                    k += 1;
                }
            }
            assert!(k > 20);
        }
    }

    #[test]
    fn batch_matches_single() {
        let rules = Arc::new(Rules::classic());
        let net = Network::init(&rules.map, 31);
        let sets: Vec<FeatureSet> = (0..5)
            .map(|s| net.features(&rules, new_game(rules.clone(), 6, 20, s).unwrap().position()))
            .collect();
        let batch = net.forward_batch(&sets).unwrap();
        for (i, fs) in sets.iter().enumerate() {
            let single = net.forward(fs).unwrap();
            for j in 0..6 {
                assert!((batch[[i, j]] - single[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn automorphism_invariance() {
        // Path 0-1-2: swapping the two ends is an automorphism.
        let map = toy_map(&[(0, 1), (1, 2)]);
        let arch = Arch::for_map(&map);
        let mut net = Network::new(&map, arch, Params::init(&arch, 41).unwrap()).unwrap();
        // Tie FC2 weights of nodes 0 and 2 so the flatten respects the symmetry.
        let g2 = arch.gcn2;
        let block0 = net.params.w_fc2.slice(s![0..g2, ..]).to_owned();
        net.params.w_fc2.slice_mut(s![2 * g2..3 * g2, ..]).assign(&block0);
        let fs = random_features(&arch, 42);
        let before = net.forward(&fs).unwrap();
        let mut swapped = fs.clone();
        swapped.board.row_mut(0).assign(&fs.board.row(2));
        swapped.board.row_mut(2).assign(&fs.board.row(0));
        let after = net.forward(&swapped).unwrap();
        assert!((before - after).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn forward_is_pure() {
        let rules = Arc::new(Rules::classic());
        let net = Network::init(&rules.map, 51);
        let pos = new_game(rules.clone(), 6, 20, 1).unwrap().position().clone();
        assert_eq!(net.evaluate(&rules, &pos), net.evaluate(&rules, &pos));
    }
}
