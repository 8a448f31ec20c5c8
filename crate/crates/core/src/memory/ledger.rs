use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Dram,
    Tsv,
    Serdes,
    Noc,
    Sram,
    Mac,
}

impl Category {
    pub const ALL: [Category; 6] =
        [Category::Dram, Category::Tsv, Category::Serdes, Category::Noc, Category::Sram, Category::Mac];

    pub fn name(self) -> &'static str {
        match self {
            Category::Dram => "dram",
            Category::Tsv => "tsv",
            Category::Serdes => "serdes",
            Category::Noc => "noc",
            Category::Sram => "sram",
            Category::Mac => "mac",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// `count` is row activations for DRAM, MACs for `Mac`, transfers otherwise.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryTotals {
    pub count: u64,
    pub bytes: u64,
    pub pj: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertFetchStats {
    pub fp8_fetches: u64,
    pub bf16_fetches: u64,
    /// Extra fetches caused by gating mispredictions.
    pub mispredicted_fetches: u64,
    pub bytes: u64,
    pub row_activations: u64,
}

/// Monotone counters of every byte moved and every MAC issued.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccessLedger {
    totals: [CategoryTotals; 6],
    pub noc_byte_mm: f64,
    pub expert: ExpertFetchStats,
}

impl AccessLedger {
    pub fn record(&mut self, cat: Category, count: u64, bytes: u64, pj: f64) {
        debug_assert!(pj >= 0.0);
        let t = &mut self.totals[cat.index()];
        t.count += count;
        t.bytes += bytes;
        t.pj += pj;
    }

    pub fn get(&self, cat: Category) -> CategoryTotals {
        self.totals[cat.index()]
    }

    pub fn total_pj(&self) -> f64 {
        self.totals.iter().map(|t| t.pj).sum()
    }

    pub fn dram_accesses(&self) -> u64 {
        self.get(Category::Dram).count
    }

    pub fn dram_bytes(&self) -> u64 {
        self.get(Category::Dram).bytes
    }

    pub fn merge(&mut self, other: &AccessLedger) {
        for cat in Category::ALL {
            let o = other.get(cat);
            self.record(cat, o.count, o.bytes, o.pj);
        }
        self.noc_byte_mm += other.noc_byte_mm;
        let (e, o) = (&mut self.expert, &other.expert);
        e.fp8_fetches += o.fp8_fetches;
        e.bf16_fetches += o.bf16_fetches;
        e.mispredicted_fetches += o.mispredicted_fetches;
        e.bytes += o.bytes;
        e.row_activations += o.row_activations;
    }

    /// `(category, totals)` in a fixed order.
    pub fn rows(&self) -> impl Iterator<Item = (Category, CategoryTotals)> + '_ {
        Category::ALL.into_iter().map(|c| (c, self.get(c)))
    }
}
