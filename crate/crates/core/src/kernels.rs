//! Kernels `K(t, s, u)`, their `u`-derivatives, and problem definitions.
//!
//! A [`ProblemSpec`] couples a kernel with the inhomogeneous term `g(t)` and
//! the horizon `T` of `u(t) = g(t) + ∫₀ᵗ K(t, s, u(s)) ds`. Shipped models are
//! available by name through [`KernelRegistry`]; other kernels can be built
//! directly with [`KernelSpec::new`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::precision::{PrecisionContext, PrecisionError, Scalar};

pub type KernelFn = Arc<dyn Fn(&Scalar, &Scalar, &Scalar) -> Scalar + Send + Sync>;
pub type TimeFn = Arc<dyn Fn(&Scalar) -> Scalar + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("unknown kernel {name:?} (available: {available})")]
    Unknown { name: String, available: String },
    #[error("kernel {kernel:?} has no parameter {param:?}")]
    UnknownParameter { kernel: String, param: String },
    #[error("parameter {param:?}: {source}")]
    BadParameter {
        param: String,
        #[source]
        source: PrecisionError,
    },
    #[error("horizon must be positive, got {0}")]
    Horizon(String),
}

#[derive(Clone)]
pub struct KernelSpec {
    name: String,
    params: BTreeMap<String, Scalar>,
    eval: KernelFn,
    eval_du: KernelFn,
}

impl KernelSpec {
    pub fn new(
        name: impl Into<String>,
        params: BTreeMap<String, Scalar>,
        eval: KernelFn,
        eval_du: KernelFn,
    ) -> KernelSpec {
        KernelSpec {
            name: name.into(),
            params,
            eval,
            eval_du,
        }
    }

    /// `K ≡ 0`.
    pub fn zero(ctx: &PrecisionContext) -> KernelSpec {
        let z = ctx.zero();
        let z2 = z.clone();
        KernelSpec::new(
            "zero",
            BTreeMap::new(),
            Arc::new(move |_, _, _| z.clone()),
            Arc::new(move |_, _, _| z2.clone()),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &BTreeMap<String, Scalar> {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Scalar> {
        self.params.get(name)
    }

    pub fn eval(&self, t: &Scalar, s: &Scalar, u: &Scalar) -> Scalar {
        (self.eval)(t, s, u)
    }

    pub fn eval_du(&self, t: &Scalar, s: &Scalar, u: &Scalar) -> Scalar {
        (self.eval_du)(t, s, u)
    }

    /// `|∂K/∂u − (K(u+h) − K(u−h))/(2h)|` at one probe point.
    pub fn derivative_discrepancy(&self, t: &Scalar, s: &Scalar, u: &Scalar, h: &Scalar) -> Scalar {
        let up = u + h;
        let down = u - h;
        let fd = (self.eval(t, s, &up) - self.eval(t, s, &down)) / &(h + h);
        (self.eval_du(t, s, u) - fd).abs()
    }
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("name", &self.name)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

/// `u(t) = g(t) + ∫₀ᵗ K(t, s, u(s)) ds` on `[0, t_end]`, optionally with a
/// known exact solution used to report true errors.
#[derive(Clone)]
pub struct ProblemSpec {
    kernel: KernelSpec,
    inhomogeneous: TimeFn,
    t_end: Scalar,
    exact: Option<TimeFn>,
}

impl ProblemSpec {
    pub fn new(
        kernel: KernelSpec,
        inhomogeneous: TimeFn,
        t_end: Scalar,
    ) -> Result<ProblemSpec, KernelError> {
        if t_end.is_sign_negative() || t_end.is_zero() {
            return Err(KernelError::Horizon(t_end.to_decimal_string()));
        }
        Ok(ProblemSpec {
            kernel,
            inhomogeneous,
            t_end,
            exact: None,
        })
    }

    pub fn with_exact(mut self, exact: TimeFn) -> ProblemSpec {
        self.exact = Some(exact);
        self
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn t_end(&self) -> &Scalar {
        &self.t_end
    }

    /// `g(t)`.
    pub fn inhomogeneous(&self, t: &Scalar) -> Scalar {
        (self.inhomogeneous)(t)
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn exact(&self, t: &Scalar) -> Option<Scalar> {
        self.exact.as_ref().map(|f| f(t))
    }
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("kernel", &self.kernel)
            .field("t_end", &self.t_end)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

/// Bratu equation `u'' + λe^u = 0`, `u(0) = u0`, `u'(0) = uprime0`, in
/// Volterra form: `K(t, s, u) = −λ(t − s)e^u`, `g(t) = u0 + uprime0·t`.
///
/// An exact solution is attached when `uprime0 = 0` (any λ) or `λ = 0`.
pub fn bratu_kernel(
    lambda: &Scalar,
    u0: &Scalar,
    uprime0: &Scalar,
    t_end: &Scalar,
) -> Result<ProblemSpec, KernelError> {
    let mut params = BTreeMap::new();
    params.insert("lambda".to_string(), lambda.clone());
    params.insert("u0".to_string(), u0.clone());
    params.insert("uprime0".to_string(), uprime0.clone());
    let neg_lambda = -lambda;
    let nl = neg_lambda.clone();
    let eval: KernelFn = Arc::new(move |t, s, u| &nl * &(t - s) * &u.exp());
    let eval_du = eval.clone();
    let kernel = KernelSpec::new("bratu", params, eval, eval_du);
    let (a, b) = (u0.clone(), uprime0.clone());
    let g: TimeFn = Arc::new(move |t| &a + &(&b * t));
    let problem = ProblemSpec::new(kernel, g, t_end.clone())?;
    Ok(match bratu_exact(lambda, u0, uprime0) {
        Some(exact) => problem.with_exact(exact),
        None => problem,
    })
}

fn bratu_exact(lambda: &Scalar, u0: &Scalar, uprime0: &Scalar) -> Option<TimeFn> {
    if lambda.is_zero() {
        let (a, b) = (u0.clone(), uprime0.clone());
        return Some(Arc::new(move |t| &a + &(&b * t)));
    }
    if !uprime0.is_zero() {
        return None;
    }
    // u'' = −c e^{u − u0} with c = λ e^{u0}
    let c = lambda * &u0.exp();
    let two = c.int_like(2);
    let shift = u0.clone();
    if c.is_sign_negative() {
        // u0 + ln sec²(k t), valid up to the blow-up at k t = π/2
        let k = (-(&c) / &two).sqrt().ok()?;
        Some(Arc::new(move |t| {
            let cos = (&k * t).cos();
            let sec2 = cos.int_like(1) / &(&cos * &cos);
            &shift + &sec2.ln().expect("sec² is positive")
        }))
    } else {
        let k = (&c / &two).sqrt().ok()?;
        Some(Arc::new(move |t| {
            let ln_cosh = (&k * t).cosh().ln().expect("cosh is at least one");
            &shift - &(&two * &ln_cosh)
        }))
    }
}

/// `K(t, s, u) = a·u`, `g ≡ b`; exact solution `u(t) = b·e^{a t}`.
pub fn linear_kernel(a: &Scalar, b: &Scalar, t_end: &Scalar) -> Result<ProblemSpec, KernelError> {
    let mut params = BTreeMap::new();
    params.insert("a".to_string(), a.clone());
    params.insert("b".to_string(), b.clone());
    let (ka, kb) = (a.clone(), a.clone());
    let kernel = KernelSpec::new(
        "linear",
        params,
        Arc::new(move |_, _, u| &ka * u),
        Arc::new(move |_, _, _| kb.clone()),
    );
    let g_value = b.clone();
    let (ea, eb) = (a.clone(), b.clone());
    Ok(
        ProblemSpec::new(kernel, Arc::new(move |_| g_value.clone()), t_end.clone())?
            .with_exact(Arc::new(move |t| &eb * &(&ea * t).exp())),
    )
}

/// Builds a problem from decimal parameter strings at a given precision.
pub type ProblemBuilder =
    fn(&BTreeMap<String, Scalar>, &Scalar) -> Result<ProblemSpec, KernelError>;

struct RegistryEntry {
    defaults: &'static [(&'static str, &'static str)],
    build: ProblemBuilder,
}

/// Name → problem constructor table used by the command-line front end.
pub struct KernelRegistry {
    entries: HashMap<String, RegistryEntry>,
}

impl Default for KernelRegistry {
    fn default() -> Self {
        let mut registry = KernelRegistry {
            entries: HashMap::new(),
        };
        registry.register(
            "bratu",
            &[("lambda", "1"), ("u0", "0"), ("uprime0", "0")],
            |p, t_end| bratu_kernel(&p["lambda"], &p["u0"], &p["uprime0"], t_end),
        );
        registry.register("linear", &[("a", "1"), ("b", "1")], |p, t_end| {
            linear_kernel(&p["a"], &p["b"], t_end)
        });
        registry
    }
}

impl KernelRegistry {
    /// Registers `name` with its parameter names and default values.
    pub fn register(
        &mut self,
        name: &str,
        defaults: &'static [(&'static str, &'static str)],
        build: ProblemBuilder,
    ) {
        self.entries
            .insert(name.to_string(), RegistryEntry { defaults, build });
    }

    pub fn names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.entries.keys().map(String::as_str).collect();
        names.sort_unstable();
        names
    }

    pub fn parameter_names(&self, name: &str) -> Option<Vec<&'static str>> {
        self.entries
            .get(name)
            .map(|e| e.defaults.iter().map(|(k, _)| *k).collect())
    }

    /// Parses `params` (missing ones take their defaults) and `t_end` at
    /// `ctx` and builds the named problem.
    pub fn build(
        &self,
        name: &str,
        params: &BTreeMap<String, String>,
        t_end: &str,
        ctx: &PrecisionContext,
    ) -> Result<ProblemSpec, KernelError> {
        let entry = self.entries.get(name).ok_or_else(|| KernelError::Unknown {
            name: name.to_string(),
            available: self.names().join(", "),
        })?;
        if let Some(bad) = params
            .keys()
            .find(|k| !entry.defaults.iter().any(|(d, _)| d == k))
        {
            return Err(KernelError::UnknownParameter {
                kernel: name.to_string(),
                param: bad.clone(),
            });
        }
        let parse = |param: &str, text: &str| {
            ctx.parse(text).map_err(|source| KernelError::BadParameter {
                param: param.to_string(),
                source,
            })
        };
        let mut values = BTreeMap::new();
        for (key, default) in entry.defaults {
            let text = params.get(*key).map(String::as_str).unwrap_or(default);
            values.insert(key.to_string(), parse(key, text)?);
        }
        let t_end = parse("t_end", t_end)?;
        (entry.build)(&values, &t_end)
    }
}
