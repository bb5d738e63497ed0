#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::RngExt;
use proptest::test_runner::{RngAlgorithm, TestRng};

pub const CORPUS: [&str; 6] = [
    "poisson_h1",
    "poisson_l2",
    "mixed_poisson",
    "stokes",
    "hyperelasticity",
    "optimization",
];

pub fn corpus_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/corpus")
        .join(format!("{name}.form"))
}

pub fn corpus_text(name: &str) -> String {
    std::fs::read_to_string(corpus_path(name)).unwrap()
}

pub fn formlang(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_formlang"))
        .args(args)
        .output()
        .expect("run formlang")
}

/// Writes `text` to a scratch file and returns its path.
pub fn scratch(name: &str, text: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("formlang-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

pub fn rng(seed: u8) -> TestRng {
    TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32])
}

/// Random `.form` modules over a fixed header of elements and functions.
pub struct ModuleGen<'a> {
    rng: &'a mut TestRng,
    scalars: Vec<String>,
    vectors: Vec<String>,
    matrices: Vec<String>,
    depth: u32,
}

const HEADER: &str = "\
V = FiniteElement(\"Lagrange\", triangle, 2)
D = FiniteElement(\"DG\", triangle, 1)
W = VectorElement(\"Lagrange\", triangle, 1)
u = TrialFunction(V)
v = TestFunction(V)
f = Coefficient(V)
g = Coefficient(D)
w = Coefficient(W)
k = Constant(triangle)
x = SpatialCoordinate(triangle)
n = FacetNormal(triangle)
";

impl<'a> ModuleGen<'a> {
    pub fn new(rng: &'a mut TestRng) -> Self {
        ModuleGen {
            rng,
            scalars: ["f", "g", "k", "x[0]", "x[1]", "w[1]"]
                .map(String::from)
                .to_vec(),
            vectors: ["w", "x", "grad(f)"].map(String::from).to_vec(),
            matrices: ["grad(w)", "Identity(2)"].map(String::from).to_vec(),
            depth: 0,
        }
    }

    fn pick(&mut self, v: &[String]) -> String {
        v[self.rng.random_range(0..v.len())].clone()
    }

    fn literal(&mut self) -> String {
        match self.rng.random_range(0..3) {
            0 => self.rng.random_range(1..4).to_string(),
            1 => format!("{:.2}", self.rng.random_range(0.1..3.0)),
            _ => "0.5".into(),
        }
    }

    pub fn scalar(&mut self) -> String {
        self.depth += 1;
        let leaf = self.depth > 3 || self.rng.random_bool(0.3);
        let s = if leaf {
            if self.rng.random_bool(0.2) {
                self.literal()
            } else {
                let pool = self.scalars.clone();
                self.pick(&pool)
            }
        } else {
            match self.rng.random_range(0..20) {
                0 => format!("({} + {})", self.scalar(), self.scalar()),
                1 => format!("({} - {})", self.scalar(), self.scalar()),
                2 => format!("({}*{})", self.scalar(), self.scalar()),
                3 => format!("({}/(1 + {}**2))", self.scalar(), self.scalar()),
                4 => format!("(-{})", self.scalar()),
                5 => format!("({})**2", self.scalar()),
                6 => format!("sin({})", self.scalar()),
                7 => format!("exp({})", self.scalar()),
                8 => format!("sqrt(1 + ({})**2)", self.scalar()),
                9 => format!("inner({}, {})", self.vector(), self.vector()),
                10 => format!("dot({}, {})", self.vector(), self.vector()),
                11 => format!("{}[{}]", self.vector(), self.rng.random_range(0..2)),
                12 => format!("tr({})", self.matrix()),
                13 => format!("det({})", self.matrix()),
                14 => format!(
                    "conditional(lt({}, {}), {}, {})",
                    self.scalar(),
                    self.scalar(),
                    self.scalar(),
                    self.scalar()
                ),
                15 => format!("abs({})", self.scalar()),
                16 => format!("Dx(f*{}, {})", self.scalar(), self.rng.random_range(0..2)),
                17 => format!("({}[i]*{}[i])", self.vector(), self.vector()),
                18 => format!("index_sum({}[i, i], i)", self.matrix()),
                _ => format!("atan({})", self.scalar()),
            }
        };
        self.depth -= 1;
        s
    }

    pub fn vector(&mut self) -> String {
        self.depth += 1;
        let leaf = self.depth > 3 || self.rng.random_bool(0.4);
        let s = if leaf {
            let pool = self.vectors.clone();
            self.pick(&pool)
        } else {
            match self.rng.random_range(0..7) {
                0 => format!("as_vector(({}, {}))", self.scalar(), self.scalar()),
                1 => format!("grad(g*{})", self.scalar()),
                2 => format!("({}*{})", self.scalar(), self.vector()),
                3 => format!("({} + {})", self.vector(), self.vector()),
                4 => format!("dot({}, {})", self.matrix(), self.vector()),
                5 => format!("as_vector({}[j, i]*{}[j], i)", self.matrix(), self.vector()),
                _ => format!("{}[0]", self.matrix()),
            }
        };
        self.depth -= 1;
        s
    }

    pub fn matrix(&mut self) -> String {
        self.depth += 1;
        let leaf = self.depth > 3 || self.rng.random_bool(0.5);
        let s = if leaf {
            let pool = self.matrices.clone();
            self.pick(&pool)
        } else {
            match self.rng.random_range(0..6) {
                0 => format!("grad(f*{})", self.vector()),
                1 => format!("outer({}, {})", self.vector(), self.vector()),
                2 => format!("transpose({})", self.matrix()),
                3 => format!("sym({})", self.matrix()),
                4 => format!("({}*{})", self.matrix(), self.matrix()),
                _ => format!("as_matrix({}[i, j], (j, i))", self.matrix()),
            }
        };
        self.depth -= 1;
        s
    }

    /// A module with named expressions and the exported forms a, L and M.
    pub fn module(&mut self) -> String {
        let mut src = HEADER.to_string();
        let n = self.rng.random_range(1..5);
        for t in 0..n {
            let name = format!("e{t}");
            match self.rng.random_range(0..4) {
                0 => {
                    src.push_str(&format!("{name} = {}\n", self.vector()));
                    self.vectors.push(name);
                }
                1 => {
                    src.push_str(&format!("{name} = {}\n", self.matrix()));
                    self.matrices.push(name);
                }
                _ => {
                    src.push_str(&format!("{name} = {}\n", self.scalar()));
                    self.scalars.push(name);
                }
            }
        }
        let s1 = self.scalar();
        let s2 = self.scalar();
        let id = self.rng.random_range(0..3);
        src.push_str(&format!(
            "a = {s1}*u*v*dx + {s2}*inner(grad(u), grad(v))*ds({id}) + avg({})*jump(u)*jump(v)*dS\n",
            self.scalar()
        ));
        let s3 = self.scalar();
        let vec = self.vector();
        src.push_str(&format!("L = {s3}*v*dx - inner({vec}, grad(v))*ds\n"));
        let s4 = self.scalar();
        src.push_str(&format!("M = {s4}*dx\n"));
        if self.rng.random_bool(0.5) {
            src.push_str("F = derivative(M, f, v)\n");
        }
        src
    }
}
