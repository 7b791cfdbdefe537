use std::fmt;
use std::path::Path;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use dormant_pam::environment::EnvironmentKind;
use dormant_pam::estimators::ModelParams;
use dormant_pam::switching::SwitchRates;
use dormant_pam::verify::DEFAULT_SEED;
use dormant_pam::walker::WalkParams;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::CliError;

/// γ as written on the command line or in JSON: a number or `neg_inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gamma(pub f64);

impl FromStr for Gamma {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "neg_inf" | "-inf" => Ok(Gamma(f64::NEG_INFINITY)),
            other => other.parse::<f64>().map(Gamma).map_err(|_| format!("invalid gamma '{other}'")),
        }
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&dormant_pam::asymptotics::format_gamma(self.0))
    }
}

impl Serialize for Gamma {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0 == f64::NEG_INFINITY {
            s.serialize_str("neg_inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Gamma {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Gamma(x)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvChoice {
    Bernoulli,
    SingleWalker,
    Poisson,
}

/// Model, estimator and solver settings. Every key is optional here; the JSON
/// config file uses the same lower_snake_case keys, and flags win over it.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub s0: Option<f64>,
    #[arg(long)]
    pub s1: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Number or `neg_inf`.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<Gamma>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, value_enum)]
    pub env: Option<EnvChoice>,
    #[arg(long)]
    pub t: Option<f64>,
    /// Replicate count.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, alias = "seed")]
    pub master_seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Box radius of lattice and spectral solves.
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
}

macro_rules! overlay {
    ($self:ident, $base:ident, $($f:ident),*) => {
        Settings { $($f: $self.$f.or($base.$f)),* }
    };
}

impl Settings {
    pub fn load(path: &Path) -> Result<Settings, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }

    /// Flags override the file.
    pub fn over(self, base: Settings) -> Settings {
        overlay!(self, base, d, s0, s1, kappa, rho, gamma, nu, p, env, t, n, master_seed, workers, radius, dt, tol)
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let env = self.env.unwrap_or(EnvChoice::Bernoulli);
        if self.p.is_some() && env != EnvChoice::Bernoulli {
            return Err(CliError::Config("p applies only to the bernoulli environment".into()));
        }
        if self.nu.is_some() && env != EnvChoice::Poisson {
            return Err(CliError::Config("nu applies only to the poisson environment".into()));
        }
        Ok(Resolved {
            d: self.d.unwrap_or(1),
            s0: self.s0.unwrap_or(1.0),
            s1: self.s1.unwrap_or(1.0),
            kappa: self.kappa.unwrap_or(1.0),
            rho: self.rho.unwrap_or(1.0),
            gamma: self.gamma.map(|g| g.0).unwrap_or(-1.0),
            nu: (env == EnvChoice::Poisson).then(|| self.nu.unwrap_or(1.0)),
            p: (env == EnvChoice::Bernoulli).then(|| self.p.unwrap_or(0.5)),
            env,
            t: self.t.unwrap_or(1.0),
            n: self.n.unwrap_or(10_000),
            master_seed: self.master_seed.unwrap_or(DEFAULT_SEED),
            workers: self.workers.unwrap_or(0),
            radius: self.radius,
            dt: self.dt,
            tol: self.tol.unwrap_or(1e-10),
        })
    }
}

/// Settings with defaults filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub d: usize,
    pub s0: f64,
    pub s1: f64,
    pub kappa: f64,
    pub rho: f64,
    pub gamma: f64,
    pub nu: Option<f64>,
    pub p: Option<f64>,
    pub env: EnvChoice,
    pub t: f64,
    pub n: usize,
    pub master_seed: u64,
    pub workers: usize,
    pub radius: Option<usize>,
    pub dt: Option<f64>,
    pub tol: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Resolved {
    pub fn rates(&self) -> Result<SwitchRates, CliError> {
        Ok(SwitchRates::new(self.s0, self.s1)?)
    }

    pub fn walk(&self) -> Result<WalkParams, CliError> {
        Ok(WalkParams::new(self.d, self.kappa, self.rho)?)
    }

    pub fn env_kind(&self) -> EnvironmentKind {
        match self.env {
            EnvChoice::Bernoulli => EnvironmentKind::BernoulliField { p: self.p.unwrap_or(0.5) },
            EnvChoice::SingleWalker => EnvironmentKind::SingleWalker { rho: self.rho },
            EnvChoice::Poisson => EnvironmentKind::PoissonField { nu: self.nu.unwrap_or(1.0), rho: self.rho },
        }
    }

    pub fn model(&self) -> Result<ModelParams, CliError> {
        Ok(ModelParams::new(self.walk()?, self.rates()?, self.gamma, self.env_kind())?)
    }

    pub const RECORD_HEADER: &'static str = "env,d,s0,s1,kappa,rho,gamma,nu,p,t,master_seed";

    /// Parameter record carried by every output row.
    pub fn record(&self) -> String {
        let env = match self.env {
            EnvChoice::Bernoulli => "bernoulli",
            EnvChoice::SingleWalker => "single_walker",
            EnvChoice::Poisson => "poisson",
        };
        format!(
            "{env},{},{},{},{},{},{},{},{},{},{}",
            self.d,
            self.s0,
            self.s1,
            self.kappa,
            self.rho,
            Gamma(self.gamma),
            opt(self.nu),
            opt(self.p),
            self.t,
            self.master_seed
        )
    }
}
