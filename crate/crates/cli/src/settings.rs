use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use tvae_core::ballsim::PhysicsParams;
use tvae_core::config::KeyValues;
use tvae_core::Error;

use crate::args::PhysicsArgs;

/// Values from the config file overridden by flags; every value read is
/// recorded so the run can report exactly what it used.
#[derive(Debug, Default)]
pub struct Settings {
    file: KeyValues,
    resolved: KeyValues,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, Error> {
        let file = match path {
            Some(p) => KeyValues::parse(&std::fs::read_to_string(p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => KeyValues::default(),
        };
        Ok(Settings {
            file,
            resolved: KeyValues::default(),
        })
    }

    pub fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, Error>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.file.parsed(key)?.unwrap_or(default),
        };
        self.resolved.set(key, &v);
        Ok(v)
    }

    /// Like [`Settings::value`] for keys without a default; absent keys are not reported.
    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, Error>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file.parsed(key)?,
        };
        if let Some(v) = &v {
            self.resolved.set(key, v);
        }
        Ok(v)
    }

    pub fn list(&mut self, key: &str, flag: Option<Vec<usize>>, default: &[usize]) -> Result<Vec<usize>, Error> {
        let v = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(text) => text
                    .split(',')
                    .map(|s| s.trim().parse().map_err(|e| Error::Config(format!("{key} = {text}: {e}"))))
                    .collect::<Result<_, _>>()?,
                None => default.to_vec(),
            },
        };
        let text: Vec<String> = v.iter().map(ToString::to_string).collect();
        self.resolved.set(key, text.join(","));
        Ok(v)
    }

    pub fn physics(&mut self, flags: &PhysicsArgs) -> Result<PhysicsParams, Error> {
        let mut p = PhysicsParams::from_key_values(&self.file)?;
        if let Some(v) = flags.drag_coeff {
            p.drag_coeff = v;
        }
        if let Some(v) = flags.gravity {
            p.gravity = v;
        }
        if let Some(v) = flags.restitution_z {
            p.restitution_z = v;
        }
        p.validate()?;
        let kv = p.to_key_values();
        for k in kv.keys() {
            self.resolved.set(k, kv.get(k).unwrap_or_default());
        }
        Ok(p)
    }

    pub fn resolved_text(&self) -> String {
        self.resolved.to_text()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file_and_file_over_defaults() {
        let mut s = Settings {
            file: KeyValues::parse("epochs = 7\nk = 3\nlatents = 2, 4\n").unwrap(),
            ..Default::default()
        };
        assert_eq!(s.value("epochs", None, 200usize).unwrap(), 7);
        assert_eq!(s.value("k", Some(5usize), 64).unwrap(), 5);
        assert_eq!(s.value("hidden", None, 256usize).unwrap(), 256);
        assert_eq!(s.list("latents", None, &[1]).unwrap(), vec![2, 4]);
        assert_eq!(s.optional::<usize>("given", None).unwrap(), None);
        assert_eq!(s.resolved_text(), "epochs = 7\nhidden = 256\nk = 5\nlatents = 2,4\n");
    }

    #[test]
    fn bad_file_values_are_config_errors() {
        let mut s = Settings {
            file: KeyValues::parse("epochs = many\n").unwrap(),
            ..Default::default()
        };
        assert!(matches!(s.value("epochs", None, 1usize), Err(Error::Config(_))));
    }
}
