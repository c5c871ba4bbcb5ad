//! Line protocol spoken with the BGP controller.
//!
//! ```text
//! announce 10.0.0.0/24 origin 65001
//! withdraw 10.0.0.0/24
//! ```
//!
//! The controller answers every line with `ok <echoed line>` or
//! `error <reason>`, in order.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::prefix::{Asn, IpPrefix};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad controller line `{line}`: {reason}")]
pub struct ProtocolError {
    pub line: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Command {
    Announce { prefix: IpPrefix, origin: Asn },
    Withdraw { prefix: IpPrefix },
}

impl Command {
    pub fn prefix(&self) -> IpPrefix {
        match self {
            Command::Announce { prefix, .. } | Command::Withdraw { prefix } => *prefix,
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Announce { prefix, origin } => write!(f, "announce {prefix} origin {origin}"),
            Command::Withdraw { prefix } => write!(f, "withdraw {prefix}"),
        }
    }
}

impl FromStr for Command {
    type Err = ProtocolError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| ProtocolError {
            line: line.to_string(),
            reason: reason.to_string(),
        };
        let words: Vec<&str> = line.split(' ').collect();
        match words.as_slice() {
            ["announce", prefix, "origin", origin] => {
                let prefix = prefix.parse().map_err(|_| err("bad prefix"))?;
                let origin: Asn = origin.parse().map_err(|_| err("bad origin"))?;
                if origin.value() == 0 || origin.to_string() != words[3] {
                    return Err(err("bad origin"));
                }
                Ok(Command::Announce { prefix, origin })
            }
            ["withdraw", prefix] => Ok(Command::Withdraw {
                prefix: prefix.parse().map_err(|_| err("bad prefix"))?,
            }),
            _ => Err(err("unknown command")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Ok(String),
    Error(String),
}

impl Reply {
    pub fn ok(command: &Command) -> Self {
        Reply::Ok(command.to_string())
    }
}

impl fmt::Display for Reply {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reply::Ok(echo) => write!(f, "ok {echo}"),
            Reply::Error(reason) => write!(f, "error {reason}"),
        }
    }
}

impl FromStr for Reply {
    type Err = ProtocolError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        if let Some(echo) = line.strip_prefix("ok ") {
            Ok(Reply::Ok(echo.to_string()))
        } else if let Some(reason) = line.strip_prefix("error ") {
            Ok(Reply::Error(reason.to_string()))
        } else if line == "error" {
            Ok(Reply::Error(String::new()))
        } else {
            Err(ProtocolError {
                line: line.to_string(),
                reason: "expected `ok` or `error`".into(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn renders_exact_lines() {
        let cmd = Command::Announce {
            prefix: "10.0.0.0/24".parse().unwrap(),
            origin: Asn(65001),
        };
        assert_eq!(cmd.to_string(), "announce 10.0.0.0/24 origin 65001");
        let cmd = Command::Withdraw {
            prefix: "10.0.1.0/24".parse().unwrap(),
        };
        assert_eq!(cmd.to_string(), "withdraw 10.0.1.0/24");
        assert_eq!(Reply::ok(&cmd).to_string(), "ok withdraw 10.0.1.0/24");
    }

    #[test]
    fn rejects_sloppy_lines() {
        for bad in [
            "announce 10.0.0.0/24 origin",
            "announce 10.0.0.0/24  origin 65001",
            "announce 10.0.0.1/24 origin 65001",
            "announce 10.0.0.0/24 origin AS65001",
            "announce 10.0.0.0/24 origin 0",
            "ANNOUNCE 10.0.0.0/24 origin 65001",
            "withdraw",
            "",
        ] {
            assert!(bad.parse::<Command>().is_err(), "{bad:?}");
        }
        assert!("okay".parse::<Reply>().is_err());
        assert_eq!("error busy".parse::<Reply>().unwrap(), Reply::Error("busy".into()));
    }

    proptest! {
        #[test]
        fn command_lines_round_trip(bits in any::<u32>(), len in 0u8..=32, origin in 1u32.., announce in any::<bool>()) {
            let prefix = IpPrefix::truncated(bits, len);
            let cmd = if announce {
                Command::Announce { prefix, origin: Asn(origin) }
            } else {
                Command::Withdraw { prefix }
            };
            prop_assert_eq!(cmd.to_string().parse::<Command>().unwrap(), cmd);
            let reply = Reply::ok(&cmd);
            prop_assert_eq!(reply.to_string().parse::<Reply>().unwrap(), reply);
        }
    }
}
