use std::str::FromStr;

use super::DistError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterConfig {
    pub nodes: usize,
    /// Pipelining threads per node.
    pub n_threads: usize,
    /// Combining threads per node.
    pub k_combiners: usize,
    /// Hash partitions per node.
    pub m_partitions: usize,
    pub page_size: usize,
    pub chunk_size: usize,
    pub broadcast_threshold: u64,
    pub compression: bool,
    /// Send every block through a temporary file instead of memory.
    pub via_file: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            nodes: 2,
            n_threads: std::thread::available_parallelism().map_or(2, |n| n.get()),
            k_combiners: 2,
            m_partitions: 2,
            page_size: 1 << 20,
            chunk_size: 1024,
            broadcast_threshold: 2 << 30,
            compression: false,
            via_file: false,
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, DistError> {
    v.parse()
        .map_err(|_| DistError::Config(format!("`{key}` expects a number, got `{v}`")))
}

fn flag(key: &str, v: &str) -> Result<bool, DistError> {
    match v {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(DistError::Config(format!(
            "`{key}` expects on or off, got `{v}`"
        ))),
    }
}

impl ClusterConfig {
    /// Parses `key=value` lines; `#` starts a comment. Unset keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self, DistError> {
        let mut c = ClusterConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| DistError::Config(format!("line {}: expected key=value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "nodes" => c.nodes = num(k, v)?,
                "N" => c.n_threads = num(k, v)?,
                "K" => c.k_combiners = num(k, v)?,
                "M" => c.m_partitions = num(k, v)?,
                "pageSizeBytes" => c.page_size = num(k, v)?,
                "chunkSize" => c.chunk_size = num(k, v)?,
                "broadcastThresholdBytes" => c.broadcast_threshold = num(k, v)?,
                "compression" => c.compression = flag(k, v)?,
                "viaFile" => c.via_file = flag(k, v)?,
                _ => {
                    return Err(DistError::Config(format!(
                        "line {}: unknown key `{k}`",
                        i + 1
                    )))
                }
            }
        }
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<(), DistError> {
        for (name, v) in [
            ("nodes", self.nodes),
            ("N", self.n_threads),
            ("K", self.k_combiners),
            ("M", self.m_partitions),
        ] {
            if v == 0 {
                return Err(DistError::Config(format!("`{name}` must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn partitions(&self) -> usize {
        self.nodes * self.m_partitions
    }

    /// Node owning global partition `p`, and the partition's index there.
    pub fn home(&self, p: usize) -> (usize, usize) {
        (p / self.m_partitions, p % self.m_partitions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_keeps_defaults() {
        let c = ClusterConfig::parse("nodes=4\nM = 3 # per node\ncompression=on\n\n").unwrap();
        assert_eq!((c.nodes, c.m_partitions, c.compression), (4, 3, true));
        assert_eq!(c.k_combiners, 2);
        assert_eq!(c.partitions(), 12);
        assert_eq!(c.home(7), (2, 1));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(ClusterConfig::parse("nodes").is_err());
        assert!(ClusterConfig::parse("nodes=x").is_err());
        assert!(ClusterConfig::parse("colour=red").is_err());
        assert!(ClusterConfig::parse("K=0").is_err());
    }
}
