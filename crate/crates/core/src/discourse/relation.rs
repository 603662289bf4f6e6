use std::fmt;
use std::str::FromStr;

/// The eighteen coarse RST relation classes.
///
/// Index order is fixed and is the layout of the relation block in the
/// shallow feature vector: purp, cont, attr, evid, comp, list, back, same,
/// topic, mann, summ, cond, temp, eval, text, cause, prob, elab.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    Purp,
    Cont,
    Attr,
    Evid,
    Comp,
    List,
    Back,
    Same,
    Topic,
    Mann,
    Summ,
    Cond,
    Temp,
    Eval,
    Text,
    Cause,
    Prob,
    Elab,
}

pub const NUM_RELATIONS: usize = 18;

impl Relation {
    pub const ALL: [Relation; NUM_RELATIONS] = [
        Relation::Purp,
        Relation::Cont,
        Relation::Attr,
        Relation::Evid,
        Relation::Comp,
        Relation::List,
        Relation::Back,
        Relation::Same,
        Relation::Topic,
        Relation::Mann,
        Relation::Summ,
        Relation::Cond,
        Relation::Temp,
        Relation::Eval,
        Relation::Text,
        Relation::Cause,
        Relation::Prob,
        Relation::Elab,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<Relation> {
        Self::ALL.get(idx).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Purp => "purp",
            Relation::Cont => "cont",
            Relation::Attr => "attr",
            Relation::Evid => "evid",
            Relation::Comp => "comp",
            Relation::List => "list",
            Relation::Back => "back",
            Relation::Same => "same",
            Relation::Topic => "topic",
            Relation::Mann => "mann",
            Relation::Summ => "summ",
            Relation::Cond => "cond",
            Relation::Temp => "temp",
            Relation::Eval => "eval",
            Relation::Text => "text",
            Relation::Cause => "cause",
            Relation::Prob => "prob",
            Relation::Elab => "elab",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relation::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown relation label `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Nuclearity {
    Nucleus,
    Satellite,
}

impl Nuclearity {
    /// 1.0 for a nucleus, 0.0 for a satellite.
    pub fn indicator(self) -> f64 {
        match self {
            Nuclearity::Nucleus => 1.0,
            Nuclearity::Satellite => 0.0,
        }
    }
}

/// Nuclearity of the (left, right) children of a binary relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NuclearityPattern {
    NS,
    SN,
    NN,
}

impl NuclearityPattern {
    pub const ALL: [NuclearityPattern; 3] = [NuclearityPattern::NS, NuclearityPattern::SN, NuclearityPattern::NN];

    pub fn index(self) -> usize {
        match self {
            NuclearityPattern::NS => 0,
            NuclearityPattern::SN => 1,
            NuclearityPattern::NN => 2,
        }
    }

    pub fn left(self) -> Nuclearity {
        match self {
            NuclearityPattern::NS | NuclearityPattern::NN => Nuclearity::Nucleus,
            NuclearityPattern::SN => Nuclearity::Satellite,
        }
    }

    pub fn right(self) -> Nuclearity {
        match self {
            NuclearityPattern::SN | NuclearityPattern::NN => Nuclearity::Nucleus,
            NuclearityPattern::NS => Nuclearity::Satellite,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NuclearityPattern::NS => "NS",
            NuclearityPattern::SN => "SN",
            NuclearityPattern::NN => "NN",
        }
    }
}

impl FromStr for NuclearityPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NS" => Ok(NuclearityPattern::NS),
            "SN" => Ok(NuclearityPattern::SN),
            "NN" => Ok(NuclearityPattern::NN),
            _ => Err(format!("unknown nuclearity pattern `{s}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_index_mapping_is_total_and_stable() {
        let expected = [
            "purp", "cont", "attr", "evid", "comp", "list", "back", "same", "topic", "mann", "summ", "cond", "temp",
            "eval", "text", "cause", "prob", "elab",
        ];
        for (i, name) in expected.iter().enumerate() {
            let r: Relation = name.parse().unwrap();
            assert_eq!(r.index(), i);
            assert_eq!(Relation::from_index(i), Some(r));
            assert_eq!(r.to_string(), *name);
        }
        assert_eq!(Relation::from_index(18), None);
        assert!("elaboration".parse::<Relation>().is_err());
    }
}
