//! Population files.
//!
//! A population on disk is a directory with three files:
//!
//! - `users.jsonl`: one JSON object per line,
//!   `{"user_id":1,"gender":"m","age":27,"country":"ES","interests":[5,9]}`;
//!   gender is `m`, `f` or `u`, age and country may be `null`.
//! - `catalog.csv`: header `interest_id,name`, one row per interest. Extra
//!   columns (for example stale audience counts) are ignored; audiences are
//!   always recomputed from the users.
//! - `manifest.json`: provenance and summary counts.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CountryCode, Demographics, Gender, InterestRecord, Population, Provenance, UserProfile, MIN_AGE};
use crate::{Error, InterestId, Result, UserId};

pub const USERS_FILE: &str = "users.jsonl";
pub const CATALOG_FILE: &str = "catalog.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Serialize, Deserialize)]
struct UserLine {
    user_id: UserId,
    gender: String,
    age: Option<u16>,
    country: Option<String>,
    interests: Vec<InterestId>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    provenance: Provenance,
    digest: String,
    n_users: usize,
    n_interests: usize,
    total_occurrences: u64,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(buf)
}

fn parse_catalog(path: &Path, bytes: &[u8]) -> Result<Vec<InterestRecord>> {
    let malformed = |line: usize, message: String| Error::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(bytes);
    let headers = reader.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(id_col), Some(name_col)) = (col("interest_id"), col("name")) else {
        return Err(malformed(1, "catalog header must contain interest_id and name".into()));
    };
    let mut seen = HashSet::new();
    let mut catalog = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            malformed(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let id: InterestId = record
            .get(id_col)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| malformed(line, "interest_id is not a non-negative integer".into()))?;
        let name = record
            .get(name_col)
            .ok_or_else(|| malformed(line, "missing name".into()))?
            .to_string();
        if !seen.insert(id) {
            return Err(malformed(line, format!("duplicate interest_id {id}")));
        }
        catalog.push(InterestRecord {
            interest_id: id,
            name,
            global_audience: 0,
        });
    }
    Ok(catalog)
}

fn parse_users(path: &Path, bytes: &[u8], known: &HashSet<InterestId>) -> Result<Vec<UserProfile>> {
    let malformed = |line: usize, message: String| Error::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut users = Vec::new();
    let mut ids = HashSet::new();
    for (i, raw) in bytes.lines().enumerate() {
        let line = i + 1;
        let raw = raw.map_err(|e| malformed(line, e.to_string()))?;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: UserLine = serde_json::from_str(&raw).map_err(|e| malformed(line, e.to_string()))?;
        let gender = Gender::from_code(&rec.gender)
            .ok_or_else(|| malformed(line, format!("gender must be \"m\", \"f\" or \"u\", got {:?}", rec.gender)))?;
        if let Some(age) = rec.age {
            if age < MIN_AGE {
                return Err(malformed(line, format!("age {age} below minimum {MIN_AGE}")));
            }
        }
        let country = match rec.country {
            Some(c) => Some(CountryCode::new(&c).ok_or_else(|| malformed(line, format!("invalid country code {c:?}")))?),
            None => None,
        };
        if rec.interests.is_empty() {
            return Err(malformed(line, format!("user {} has no interests", rec.user_id)));
        }
        if let Some(&unknown) = rec.interests.iter().find(|i| !known.contains(i)) {
            return Err(Error::UnknownInterestInFile {
                path: path.to_path_buf(),
                line,
                interest: unknown,
            });
        }
        if !ids.insert(rec.user_id) {
            return Err(Error::DuplicateUser {
                path: path.to_path_buf(),
                line,
                user: rec.user_id,
            });
        }
        users.push(UserProfile {
            user_id: rec.user_id,
            demographics: Demographics {
                gender,
                age_years: rec.age,
                country,
            },
            interests: rec.interests,
        });
    }
    Ok(users)
}

/// Reads a population from a users file and a catalog file.
pub fn ingest(users_file: &Path, catalog_file: &Path) -> Result<Population> {
    let catalog_bytes = read_bytes(catalog_file)?;
    let users_bytes = read_bytes(users_file)?;
    let catalog = parse_catalog(catalog_file, &catalog_bytes)?;
    let known: HashSet<InterestId> = catalog.iter().map(|r| r.interest_id).collect();
    let users = parse_users(users_file, &users_bytes, &known)?;
    if users.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let mut h = Sha256::new();
    h.update((users_bytes.len() as u64).to_le_bytes());
    h.update(&users_bytes);
    h.update(&catalog_bytes);
    let provenance = Provenance::Ingested {
        path_digest: hex::encode(h.finalize()),
    };
    Population::new(catalog, users, provenance)
}

pub fn write_catalog(population: &Population, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Serialization(e.to_string()))?;
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    w.write_record(["interest_id", "name"]).map_err(ser)?;
    for rec in population.catalog() {
        w.write_record([rec.interest_id.to_string(), rec.name.clone()]).map_err(ser)?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn write_users(population: &Population, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for u in population.users() {
        let line = UserLine {
            user_id: u.user_id,
            gender: u.demographics.gender.code().to_string(),
            age: u.demographics.age_years,
            country: u.demographics.country.map(|c| c.to_string()),
            interests: u.interests.clone(),
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::Serialization(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Writes the population directory (users, catalog, manifest).
pub fn save_population(population: &Population, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    write_catalog(population, &dir.join(CATALOG_FILE))?;
    write_users(population, &dir.join(USERS_FILE))?;
    let manifest = Manifest {
        format_version: 1,
        provenance: population.provenance().clone(),
        digest: population.digest(),
        n_users: population.len(),
        n_interests: population.catalog().len(),
        total_occurrences: population.total_occurrences(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Serialization(e.to_string()))?;
    let path: PathBuf = dir.join(MANIFEST_FILE);
    fs::write(&path, text + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Loads a population directory written by [`save_population`].
///
/// The manifest, when present, restores the original provenance; a directory
/// without one is treated as a plain ingestion.
pub fn load_population(dir: &Path) -> Result<Population> {
    let population = ingest(&dir.join(USERS_FILE), &dir.join(CATALOG_FILE))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.exists() {
        return Ok(population);
    }
    let bytes = read_bytes(&manifest_path)?;
    let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|e| Error::Malformed {
        path: manifest_path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if manifest.n_users != population.len() {
        return Err(Error::Malformed {
            path: manifest_path,
            line: 0,
            message: format!("manifest lists {} users, users file has {}", manifest.n_users, population.len()),
        });
    }
    Ok(population.with_provenance(manifest.provenance))
}

impl Population {
    pub(crate) fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn ingests_single_user() {
        let dir = tempfile::tempdir().unwrap();
        let users = write(dir.path(), "u.jsonl", "{\"user_id\":1,\"gender\":\"f\",\"age\":null,\"country\":null,\"interests\":[5]}\n");
        let cat = write(dir.path(), "c.csv", "interest_id,name\n5,Hiking\n6,Chess\n");
        let pop = ingest(&users, &cat).unwrap();
        assert_eq!(pop.len(), 1);
        assert_eq!(pop.global_audience(5), Some(1));
        assert_eq!(pop.global_audience(6), Some(0));
        assert!(matches!(pop.provenance(), Provenance::Ingested { .. }));
    }

    #[test]
    fn unknown_interest_names_interest_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let users = write(
            dir.path(),
            "u.jsonl",
            "{\"user_id\":1,\"gender\":\"m\",\"age\":30,\"country\":\"ES\",\"interests\":[5]}\n\
             {\"user_id\":2,\"gender\":\"m\",\"age\":30,\"country\":\"ES\",\"interests\":[5,99]}\n",
        );
        let cat = write(dir.path(), "c.csv", "interest_id,name\n5,Hiking\n");
        let err = ingest(&users, &cat).unwrap_err();
        match &err {
            Error::UnknownInterestInFile { line, interest, .. } => {
                assert_eq!((*line, *interest), (2, 99));
            }
            other => panic!("unexpected {other:?}"),
        }
        let msg = err.to_string();
        assert!(msg.contains("99") && msg.contains(":2:"), "{msg}");
    }

    #[test]
    fn duplicate_user_and_malformed_lines() {
        let dir = tempfile::tempdir().unwrap();
        let cat = write(dir.path(), "c.csv", "interest_id,name,global_audience\n5,Hiking,123456\n");
        let dup = write(
            dir.path(),
            "dup.jsonl",
            "{\"user_id\":1,\"gender\":\"m\",\"age\":null,\"country\":null,\"interests\":[5]}\n\
             {\"user_id\":1,\"gender\":\"m\",\"age\":null,\"country\":null,\"interests\":[5]}\n",
        );
        assert!(matches!(ingest(&dup, &cat), Err(Error::DuplicateUser { line: 2, user: 1, .. })));
        let bad = write(dir.path(), "bad.jsonl", "\n{\"user_id\":1,\"gender\":\"x\",\"age\":null,\"country\":null,\"interests\":[5]}\n");
        assert!(matches!(ingest(&bad, &cat), Err(Error::Malformed { line: 2, .. })));
        let young = write(dir.path(), "young.jsonl", "{\"user_id\":1,\"gender\":\"m\",\"age\":9,\"country\":null,\"interests\":[5]}\n");
        assert!(matches!(ingest(&young, &cat), Err(Error::Malformed { line: 1, .. })));
        // stale audience column is ignored
        let ok = write(dir.path(), "ok.jsonl", "{\"user_id\":1,\"gender\":\"m\",\"age\":null,\"country\":null,\"interests\":[5]}\n");
        assert_eq!(ingest(&ok, &cat).unwrap().global_audience(5), Some(1));
    }

    #[test]
    fn save_and_load_preserve_population() {
        let cfg = crate::population::GeneratorConfig {
            n_users: 40,
            n_interests: 30,
            popularity_exponent: 1.1,
            interests_per_user: crate::population::InterestCountModel {
                mu: 5f64.ln(),
                sigma: 0.5,
                min: 1,
                max: 12,
            },
            communities: Some(crate::population::CommunityModel {
                count: 2,
                pool_size: 8,
                memberships: 1,
                affinity: 0.5,
            }),
            seed: 11,
        };
        let pop = crate::population::generate_population(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_population(&pop, dir.path()).unwrap();
        let back = load_population(dir.path()).unwrap();
        assert_eq!(back.users(), pop.users());
        assert_eq!(back.catalog(), pop.catalog());
        assert_eq!(back.provenance(), pop.provenance());
        assert_eq!(back.digest(), pop.digest());
    }
}
