//! JSON file formats. Matrices are arrays of row arrays. Numbers are written
//! in shortest round-trip form, so every emitted file parses back to the
//! same values bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lqg::LqgProblem;
use crate::matrix::{from_rows, to_rows, Mat};
use crate::static_team::{InfoMode, LinearTeamStrategy};
use crate::team::{InfoBlock, Member, TeamProblem};

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamProblemFile {
    pub n: usize,
    pub d_xi: usize,
    pub sigma: Rows,
    #[serde(rename = "M")]
    pub m: Rows,
    pub members: Vec<MemberFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberFile {
    pub d_u: usize,
    #[serde(rename = "N")]
    pub n: Rows,
    pub info_blocks: Vec<BlockRef>,
}

/// A block entry. The first mention of a block id defines it; later
/// mentions may repeat the definition or give the id alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRef {
    pub block_id: String,
    #[serde(rename = "H_rows", default, skip_serializing_if = "Option::is_none")]
    pub h_rows: Option<Rows>,
    #[serde(rename = "D_rows", default, skip_serializing_if = "Option::is_none")]
    pub d_rows: Option<BTreeMap<String, Rows>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqgProblemFile {
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B_blocks")]
    pub b_blocks: Vec<Rows>,
    #[serde(rename = "C_blocks")]
    pub c_blocks: Vec<Rows>,
    #[serde(rename = "Sigma_x")]
    pub sigma_x: Rows,
    #[serde(rename = "Sigma_w")]
    pub sigma_w: Rows,
    #[serde(rename = "Sigma_v")]
    pub sigma_v: Rows,
    #[serde(rename = "M")]
    pub m: Rows,
    #[serde(rename = "N_blocks")]
    pub n_blocks: Vec<Rows>,
}

/// `{info_mode, coeffs: {member: {block_id: matrix}}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyFile {
    pub info_mode: InfoMode,
    pub coeffs: BTreeMap<String, BTreeMap<String, Rows>>,
}

fn parse_member_key(key: &str, n: usize, what: &str) -> Result<usize> {
    match key.parse::<usize>() {
        Ok(j) if (1..=n).contains(&j) => Ok(j),
        _ => Err(Error::Parse(format!(
            "{what}: '{key}' is not a member index in 1..={n}"
        ))),
    }
}

fn mat(rows: &Rows, cols: usize) -> Result<Mat> {
    if rows.is_empty() {
        return Ok(Mat::zeros(0, cols));
    }
    from_rows(rows)
}

impl TeamProblemFile {
    pub fn into_problem(self) -> Result<TeamProblem> {
        if self.n != self.members.len() {
            return Err(Error::Parse(format!(
                "n = {} but {} members are listed",
                self.n,
                self.members.len()
            )));
        }
        let n = self.n;
        let mut blocks: BTreeMap<String, InfoBlock> = BTreeMap::new();
        let mut members = Vec::with_capacity(n);
        for (idx, mf) in self.members.into_iter().enumerate() {
            let mut info = Vec::new();
            for r in mf.info_blocks {
                let d_rows = match &r.d_rows {
                    Some(map) => {
                        let mut out = BTreeMap::new();
                        for (k, rows) in map {
                            let j = parse_member_key(k, n, &format!("block '{}'", r.block_id))?;
                            out.insert(j, from_rows(rows)?);
                        }
                        Some(out)
                    }
                    None => None,
                };
                let h_rows = r.h_rows.as_ref().map(|h| mat(h, self.d_xi)).transpose()?;
                match blocks.get(&r.block_id) {
                    None => {
                        let h = h_rows.ok_or_else(|| {
                            Error::Parse(format!(
                                "block '{}' is first used by member {} without H_rows",
                                r.block_id,
                                idx + 1
                            ))
                        })?;
                        blocks.insert(
                            r.block_id.clone(),
                            InfoBlock {
                                id: r.block_id.clone(),
                                h_rows: h,
                                d_rows: d_rows.unwrap_or_default(),
                            },
                        );
                    }
                    Some(existing) => {
                        let same_h = h_rows.is_none_or(|h| h == existing.h_rows);
                        let same_d = d_rows.is_none_or(|d| d == existing.d_rows);
                        if !(same_h && same_d) {
                            return Err(Error::Parse(format!(
                                "block '{}' is redefined with different rows by member {}",
                                r.block_id,
                                idx + 1
                            )));
                        }
                    }
                }
                info.push(r.block_id);
            }
            members.push(Member {
                d_u: mf.d_u,
                n_block: from_rows(&mf.n)?,
                info,
            });
        }
        TeamProblem {
            d_xi: self.d_xi,
            sigma: from_rows(&self.sigma)?,
            m: from_rows(&self.m)?,
            members,
            blocks,
        }
        .checked()
    }

    pub fn from_problem(p: &TeamProblem) -> Self {
        let mut defined = std::collections::BTreeSet::new();
        let members = p
            .members
            .iter()
            .map(|mem| MemberFile {
                d_u: mem.d_u,
                n: to_rows(&mem.n_block),
                info_blocks: mem
                    .info
                    .iter()
                    .map(|id| {
                        if defined.insert(id.clone()) {
                            let b = &p.blocks[id];
                            BlockRef {
                                block_id: id.clone(),
                                h_rows: Some(to_rows(&b.h_rows)),
                                d_rows: Some(
                                    b.d_rows
                                        .iter()
                                        .map(|(j, d)| (j.to_string(), to_rows(d)))
                                        .collect(),
                                ),
                            }
                        } else {
                            BlockRef {
                                block_id: id.clone(),
                                h_rows: None,
                                d_rows: None,
                            }
                        }
                    })
                    .collect(),
            })
            .collect();
        TeamProblemFile {
            n: p.n(),
            d_xi: p.d_xi,
            sigma: to_rows(&p.sigma),
            m: to_rows(&p.m),
            members,
        }
    }
}

impl LqgProblemFile {
    pub fn into_problem(self) -> Result<LqgProblem> {
        let counts = [self.b_blocks.len(), self.c_blocks.len(), self.n_blocks.len()];
        if counts.iter().any(|&c| c != self.n) {
            return Err(Error::Parse(format!(
                "n = {} but there are {} B blocks, {} C blocks and {} N blocks",
                self.n, counts[0], counts[1], counts[2]
            )));
        }
        let dx = self.a.len();
        let list = |v: &[Rows]| v.iter().map(|r| from_rows(r)).collect::<Result<Vec<_>>>();
        Ok(LqgProblem {
            horizon: self.horizon,
            a: mat(&self.a, 0)?,
            b_blocks: list(&self.b_blocks)?,
            c_blocks: self
                .c_blocks
                .iter()
                .map(|r| mat(r, dx))
                .collect::<Result<_>>()?,
            sigma_x: from_rows(&self.sigma_x)?,
            sigma_w: from_rows(&self.sigma_w)?,
            sigma_v: from_rows(&self.sigma_v)?,
            m: from_rows(&self.m)?,
            n_blocks: list(&self.n_blocks)?,
        })
    }

    pub fn from_problem(p: &LqgProblem) -> Self {
        let list = |v: &[Mat]| v.iter().map(to_rows).collect();
        LqgProblemFile {
            n: p.n(),
            horizon: p.horizon,
            a: to_rows(&p.a),
            b_blocks: list(&p.b_blocks),
            c_blocks: list(&p.c_blocks),
            sigma_x: to_rows(&p.sigma_x),
            sigma_w: to_rows(&p.sigma_w),
            sigma_v: to_rows(&p.sigma_v),
            m: to_rows(&p.m),
            n_blocks: list(&p.n_blocks),
        }
    }
}

impl StrategyFile {
    pub fn from_strategy(s: &LinearTeamStrategy) -> Self {
        StrategyFile {
            info_mode: s.mode,
            coeffs: s
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let blocks = c.iter().map(|(b, k)| (b.clone(), to_rows(k))).collect();
                    ((i + 1).to_string(), blocks)
                })
                .collect(),
        }
    }

    /// Members absent from the file get no coefficients.
    pub fn into_strategy(self, n: usize) -> Result<LinearTeamStrategy> {
        let mut out = LinearTeamStrategy::zero(n, self.info_mode);
        for (key, blocks) in self.coeffs {
            let i = parse_member_key(&key, n, "strategy")?;
            for (b, rows) in blocks {
                out.coeffs[i - 1].insert(b, from_rows(&rows)?);
            }
        }
        Ok(out)
    }
}

/// Reads `{member: matrix}` gain overrides into a list ordered by member.
pub fn gains_from_map(map: BTreeMap<String, Rows>, n: usize) -> Result<Vec<Mat>> {
    let mut out: Vec<Option<Mat>> = vec![None; n];
    for (key, rows) in map {
        let i = parse_member_key(&key, n, "gain override")?;
        out[i - 1] = Some(from_rows(&rows)?);
    }
    out.into_iter()
        .enumerate()
        .map(|(i, m)| m.ok_or_else(|| Error::Parse(format!("gain override is missing member {}", i + 1))))
        .collect()
}

pub fn gains_to_map(pi: &[Mat]) -> BTreeMap<String, Rows> {
    pi.iter()
        .enumerate()
        .map(|(i, m)| ((i + 1).to_string(), to_rows(m)))
        .collect()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn read_team_problem(path: &Path) -> Result<TeamProblem> {
    read_json::<TeamProblemFile>(path)?.into_problem()
}

pub fn read_lqg_problem(path: &Path) -> Result<LqgProblem> {
    read_json::<LqgProblemFile>(path)?.into_problem()
}

pub fn team_problem_to_json(p: &TeamProblem) -> Result<String> {
    to_json(&TeamProblemFile::from_problem(p))
}

pub fn team_problem_from_json(text: &str) -> Result<TeamProblem> {
    serde_json::from_str::<TeamProblemFile>(text)?.into_problem()
}

pub fn lqg_problem_to_json(p: &LqgProblem) -> Result<String> {
    to_json(&LqgProblemFile::from_problem(p))
}

pub fn lqg_problem_from_json(text: &str) -> Result<LqgProblem> {
    serde_json::from_str::<LqgProblemFile>(text)?.into_problem()
}
