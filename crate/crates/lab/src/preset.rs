//! Named space forms and the matrix/motion literals used in configs.
//!
//! Matrices are written row by row: `1,0;0,1`. Rigid motions are
//! `matrix | shift`, e.g. `-1,0;0,1 | 0,0.5`.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use knapp_core::geometry::{FlatQuotient, GeometryError, RigidMotion, SphereQuotient, DEFAULT_TOL};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PresetError {
    #[error("unknown preset {0:?}")]
    Unknown(String),
    #[error("bad arguments for {name}: {message}")]
    Arguments { name: String, message: String },
    #[error("bad matrix literal: {0}")]
    Matrix(String),
}

/// Dimension cap for literals and presets; keeps closures and grids finite.
pub const MAX_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    Sphere { n: usize },
    RealProjective { n: usize },
    Lens { p: u64, q: u64 },
    Quaternion,
    Torus { basis: DMatrix<f64> },
    KleinBottle,
    CustomSphere { n: usize, generators: Vec<DMatrix<f64>> },
    CustomFlat { basis: DMatrix<f64>, generators: Vec<RigidMotion> },
}

#[derive(Debug, Clone)]
pub enum SpaceForm {
    Sphere(Arc<SphereQuotient>),
    Flat(FlatQuotient),
}

fn args_err(name: &str, message: impl Into<String>) -> PresetError {
    PresetError::Arguments { name: name.into(), message: message.into() }
}

fn parse_number(s: &str) -> Result<f64, PresetError> {
    let v: f64 = s.trim().parse().map_err(|_| PresetError::Matrix(format!("not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(PresetError::Matrix(format!("not finite: {s:?}")));
    }
    Ok(v)
}

/// Parses `a,b;c,d` (rows separated by `;`) into a square matrix.
pub fn parse_matrix(s: &str) -> Result<DMatrix<f64>, PresetError> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|r| r.split(',').map(parse_number).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    let n = rows.len();
    if n == 0 || n > MAX_DIM {
        return Err(PresetError::Matrix(format!("dimension {n} outside 1..={MAX_DIM}")));
    }
    if rows.iter().any(|r| r.len() != n) {
        return Err(PresetError::Matrix("matrix must be square".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Parses `matrix | shift`.
pub fn parse_motion(s: &str) -> Result<RigidMotion, PresetError> {
    let (m, t) = s
        .split_once('|')
        .ok_or_else(|| PresetError::Matrix("rigid motion needs `matrix | shift`".into()))?;
    let m = parse_matrix(m)?;
    let t: Vec<f64> = t.split(',').map(parse_number).collect::<Result<_, _>>()?;
    if t.len() != m.nrows() {
        return Err(PresetError::Matrix("shift length must match the matrix".into()));
    }
    Ok(RigidMotion::new(m, DVector::from_vec(t)))
}

fn format_matrix(m: &DMatrix<f64>) -> String {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join(";")
}

fn format_motion(g: &RigidMotion) -> String {
    let t: Vec<String> = g.shift.iter().map(|v| format!("{v:?}")).collect();
    format!("{} | {}", format_matrix(&g.linear), t.join(","))
}

fn rotation_block(m: &mut DMatrix<f64>, at: usize, angle: f64) {
    let (s, c) = angle.sin_cos();
    m[(at, at)] = c;
    m[(at, at + 1)] = -s;
    m[(at + 1, at)] = s;
    m[(at + 1, at + 1)] = c;
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Preset {
    /// Parses `sphere(n)`, `rp_n(n)`, `lens(p,q)`, `quaternion`,
    /// `torus`, `torus(rows)` or `klein_bottle`.
    pub fn parse(s: &str) -> Result<Self, PresetError> {
        let s = s.trim();
        let (name, args) = match s.split_once('(') {
            Some((name, rest)) => {
                let inner = rest.strip_suffix(')').ok_or_else(|| args_err(name.trim(), "missing `)`"))?;
                (name.trim(), Some(inner))
            }
            None => (s, None),
        };
        let dim = |a: Option<&str>| -> Result<usize, PresetError> {
            let a = a.ok_or_else(|| args_err(name, "expected a dimension"))?;
            let n: usize = a.trim().parse().map_err(|_| args_err(name, format!("bad dimension {a:?}")))?;
            if !(2..MAX_DIM).contains(&n) {
                return Err(args_err(name, format!("dimension {n} outside 2..{MAX_DIM}")));
            }
            Ok(n)
        };
        match name {
            "sphere" => Ok(Preset::Sphere { n: dim(args)? }),
            "rp_n" | "rp" => Ok(Preset::RealProjective { n: dim(args)? }),
            "lens" => {
                let a = args.ok_or_else(|| args_err(name, "expected (p,q)"))?;
                let v: Vec<u64> = a
                    .split(',')
                    .map(|t| t.trim().parse::<u64>().map_err(|_| args_err(name, format!("bad integer {t:?}"))))
                    .collect::<Result<_, _>>()?;
                let [p, q] = v[..] else {
                    return Err(args_err(name, "expected two integers"));
                };
                if !(2..=1000).contains(&p) {
                    return Err(args_err(name, "p must lie in 2..=1000"));
                }
                if gcd(p, q) != 1 {
                    return Err(args_err(name, "p and q must be coprime"));
                }
                Ok(Preset::Lens { p, q: q % p })
            }
            "quaternion" if args.is_none() => Ok(Preset::Quaternion),
            "klein_bottle" | "klein" if args.is_none() => Ok(Preset::KleinBottle),
            "torus" => {
                let basis = match args {
                    None => DMatrix::identity(2, 2),
                    Some(a) => parse_matrix(a)?,
                };
                if basis.nrows() < 2 {
                    return Err(args_err(name, "dimension must be at least 2"));
                }
                Ok(Preset::Torus { basis })
            }
            _ => Err(PresetError::Unknown(s.to_string())),
        }
    }

    pub fn custom_sphere(n: usize, generators: Vec<DMatrix<f64>>) -> Result<Self, PresetError> {
        if !(2..MAX_DIM).contains(&n) {
            return Err(args_err("sphere", format!("dimension {n} outside 2..{MAX_DIM}")));
        }
        if generators.iter().any(|g| g.nrows() != n + 1) {
            return Err(args_err("sphere", format!("generators must be {0}×{0}", n + 1)));
        }
        Ok(Preset::CustomSphere { n, generators })
    }

    pub fn custom_flat(basis: DMatrix<f64>, generators: Vec<RigidMotion>) -> Result<Self, PresetError> {
        let n = basis.nrows();
        if n < 2 {
            return Err(args_err("flat", "dimension must be at least 2"));
        }
        if generators.is_empty() || generators.iter().any(|g| g.dim() != n) {
            return Err(args_err("flat", format!("need generators of dimension {n}")));
        }
        Ok(Preset::CustomFlat { basis, generators })
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, Preset::Torus { .. } | Preset::KleinBottle | Preset::CustomFlat { .. })
    }

    pub fn dim(&self) -> usize {
        match self {
            Preset::Sphere { n } | Preset::RealProjective { n } | Preset::CustomSphere { n, .. } => *n,
            Preset::Lens { .. } | Preset::Quaternion => 3,
            Preset::Torus { basis } | Preset::CustomFlat { basis, .. } => basis.nrows(),
            Preset::KleinBottle => 2,
        }
    }

    /// Short label for the `manifold` column.
    pub fn label(&self) -> String {
        match self {
            Preset::Sphere { n } => format!("sphere({n})"),
            Preset::RealProjective { n } => format!("rp_n({n})"),
            Preset::Lens { p, q } => format!("lens({p},{q})"),
            Preset::Quaternion => "quaternion".into(),
            Preset::Torus { .. } => "torus".into(),
            Preset::KleinBottle => "klein_bottle".into(),
            Preset::CustomSphere { .. } => "custom_sphere".into(),
            Preset::CustomFlat { .. } => "custom_flat".into(),
        }
    }

    pub fn build(&self) -> Result<SpaceForm, GeometryError> {
        match self {
            Preset::Sphere { n } => Ok(SpaceForm::Sphere(Arc::new(SphereQuotient::new(*n, &[], DEFAULT_TOL)?))),
            Preset::RealProjective { n } => {
                let g = -DMatrix::<f64>::identity(n + 1, n + 1);
                Ok(SpaceForm::Sphere(Arc::new(SphereQuotient::new(*n, &[g], DEFAULT_TOL)?)))
            }
            Preset::Lens { p, q } => {
                let mut g = DMatrix::zeros(4, 4);
                rotation_block(&mut g, 0, TAU / *p as f64);
                rotation_block(&mut g, 2, TAU * *q as f64 / *p as f64);
                Ok(SpaceForm::Sphere(Arc::new(SphereQuotient::new(3, &[g], DEFAULT_TOL)?)))
            }
            Preset::Quaternion => {
                // Left multiplication by i and j in the basis (1, i, j, k).
                let li = DMatrix::from_row_slice(
                    4,
                    4,
                    &[0., -1., 0., 0., 1., 0., 0., 0., 0., 0., 0., -1., 0., 0., 1., 0.],
                );
                let lj = DMatrix::from_row_slice(
                    4,
                    4,
                    &[0., 0., -1., 0., 0., 0., 0., 1., 1., 0., 0., 0., 0., -1., 0., 0.],
                );
                Ok(SpaceForm::Sphere(Arc::new(SphereQuotient::new(3, &[li, lj], DEFAULT_TOL)?)))
            }
            Preset::CustomSphere { n, generators } => {
                Ok(SpaceForm::Sphere(Arc::new(SphereQuotient::new(*n, generators, DEFAULT_TOL)?)))
            }
            Preset::Torus { basis } => {
                let gens = (0..basis.ncols()).map(|j| RigidMotion::translation(basis.column(j).into_owned())).collect();
                Ok(SpaceForm::Flat(FlatQuotient::new(basis.clone(), gens, DEFAULT_TOL)?))
            }
            Preset::KleinBottle => {
                let glide =
                    RigidMotion::new(DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0])), DVector::from_vec(vec![0.0, 0.5]));
                let t = RigidMotion::translation(DVector::from_vec(vec![1.0, 0.0]));
                Ok(SpaceForm::Flat(FlatQuotient::new(DMatrix::identity(2, 2), vec![glide, t], DEFAULT_TOL)?))
            }
            Preset::CustomFlat { basis, generators } => {
                Ok(SpaceForm::Flat(FlatQuotient::new(basis.clone(), generators.clone(), DEFAULT_TOL)?))
            }
        }
    }
}

/// Canonical text; equal presets print equally, which the cache relies on.
impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Torus { basis } => write!(f, "torus({})", format_matrix(basis)),
            Preset::CustomSphere { n, generators } => {
                write!(f, "custom_sphere({n}")?;
                for g in generators {
                    write!(f, "; {}", format_matrix(g))?;
                }
                write!(f, ")")
            }
            Preset::CustomFlat { basis, generators } => {
                write!(f, "custom_flat({}", format_matrix(basis))?;
                for g in generators {
                    write!(f, "; {}", format_motion(g))?;
                }
                write!(f, ")")
            }
            other => f.write_str(&other.label()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_orders() {
        let order = |s: &str| match Preset::parse(s).unwrap().build().unwrap() {
            SpaceForm::Sphere(q) => q.order(),
            SpaceForm::Flat(f) => f.index(),
        };
        assert_eq!(order("sphere(2)"), 1);
        assert_eq!(order("rp_n(2)"), 2);
        assert_eq!(order("lens(3,1)"), 3);
        assert_eq!(order("lens(5,2)"), 5);
        assert_eq!(order("quaternion"), 8);
        assert_eq!(order("torus"), 1);
        assert_eq!(order("torus(1,0.3;0,2)"), 1);
        assert_eq!(order("klein_bottle"), 2);
    }

    #[test]
    fn rejects_malformed() {
        for s in ["", "sphere", "sphere(1)", "lens(4,2)", "lens(3)", "torus(1,0;0)", "quaternion(2)", "cube", "torus(1,0;0,1"] {
            assert!(Preset::parse(s).is_err(), "{s}");
        }
    }

    #[test]
    fn display_round_trips() {
        for s in ["sphere(3)", "rp_n(2)", "lens(7,3)", "quaternion", "klein_bottle", "torus(1.0,0.5;0.0,2.0)"] {
            let p = Preset::parse(s).unwrap();
            assert_eq!(Preset::parse(&p.to_string()).unwrap(), p);
        }
    }

    #[test]
    fn motion_literal() {
        let g = parse_motion("-1,0;0,1 | 0,0.5").unwrap();
        assert_eq!(g.shift[1], 0.5);
        assert!(parse_motion("-1,0;0,1 | 0").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn torus_literal_round_trips(n in 2usize..5, vals in proptest::collection::vec(-10.0f64..10.0, 16)) {
                let basis = DMatrix::from_fn(n, n, |i, j| vals[i * 4 + j]);
                let p = Preset::Torus { basis };
                prop_assert_eq!(Preset::parse(&p.to_string()).unwrap(), p);
            }

            #[test]
            fn lens_reduces_q(p in 2u64..200, q in 0u64..1000) {
                match Preset::parse(&format!("lens({p},{q})")) {
                    Ok(Preset::Lens { p: pp, q: qq }) => {
                        prop_assert_eq!(pp, p);
                        prop_assert!(qq < p);
                        prop_assert_eq!(gcd(p, q), 1);
                    }
                    Ok(other) => prop_assert!(false, "unexpected {:?}", other),
                    Err(_) => prop_assert!(gcd(p, q) != 1),
                }
            }

            #[test]
            fn parser_never_panics(s in "\\PC{0,64}") {
                let _ = Preset::parse(&s);
                let _ = parse_matrix(&s);
                let _ = parse_motion(&s);
            }
        }
    }
}
