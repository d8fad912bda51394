#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hrmsm/panel.hpp"

namespace hrmsm {

// The two availability-respecting rules: never treat, or treat exactly when
// available. These are the only atoms for which contrasts remain identified
// under designed positivity violations.
enum class RegimeAtom : std::uint8_t { never_treat = 0, treat_if_available = 1 };

inline int intended_treatment(RegimeAtom atom, int availability) {
    return atom == RegimeAtom::never_treat ? 0 : availability;
}

struct RegimeSequence {
    std::vector<RegimeAtom> atoms;  // atoms[0] applies at the window start t-Gamma+1

    int gamma() const { return static_cast<int>(atoms.size()); }
    int dose() const;
    // Bit p set <=> treat_if_available at window position p (0 = earliest).
    std::uint32_t mask() const;
    std::string label() const;  // e.g. "10": treat-if-available then never-treat
    static RegimeSequence from_label(const std::string& label);
};

struct RegimeSet {
    int gamma = 0;
    std::vector<RegimeSequence> sequences;  // distinct, lexicographic by label
};

// All length-gamma sequences over the two atoms, optionally filtered to
// dose <= max_dose, in lexicographic label order.
RegimeSet enumerate_regimes(int gamma, std::optional<int> max_dose = std::nullopt);
RegimeSet regimes_from_labels(int gamma, const std::vector<std::string>& labels);

// 1 iff the observed treatments match the intended treatments at every
// window position. Window must hold gamma() consecutive records.
int compliance(const RegimeSequence& seq, std::span<const TrajectoryRecord> window);

// prod_j 1(A_j = d_j(H_j)) / pi_j(A_j; H_j) with pi_j(1)=propensity,
// pi_j(0)=1-propensity. Unavailable compliant steps contribute factor 1.
double ip_weight(const RegimeSequence& seq, std::span<const TrajectoryRecord> window);

struct ExpandOptions {
    // Static open-loop mode: keep only the regime matching the observed
    // sequence for each (subject, t); requires I == 1 on all rows.
    bool observed_only = false;
    // Diagnostic-only cap: weights above it are counted, never truncated.
    std::optional<double> weight_warn_threshold;
    int threads = 1;
};

struct ExpandedTable {
    struct Row {
        std::int32_t subject = 0;  // index into subject_ids
        std::int64_t t = 0;
        std::int32_t regime = 0;   // index into regime_labels
        std::int32_t compliance = 0;
        std::uint32_t treat_mask = 0;  // per-position indicators J_1..J_Gamma
        double weight = 0.0;
        double outcome = 0.0;
        double dose = 0.0;
        std::vector<double> modifiers;
    };

    int gamma = 0;
    std::vector<std::string> subject_ids;
    std::vector<std::string> regime_labels;
    std::vector<std::string> modifier_names;
    std::vector<Row> rows;  // grouped by subject, in subject order
    std::size_t weight_warnings = 0;

    std::size_t n_rows() const { return rows.size(); }
    // Contiguous [begin, end) row range per subject index.
    std::vector<std::pair<std::size_t, std::size_t>> subject_ranges() const;
};

// One row per (subject, t >= Gamma, regime). Modifier values are read from
// the record at the window start t-Gamma+1 (falling back to baseline
// columns), so no post-window variable can leak into the design.
ExpandedTable expand_panel(const Panel& panel, const RegimeSet& regimes,
                           const std::vector<std::string>& modifier_names,
                           const ExpandOptions& opts = {});

void write_expanded(const ExpandedTable& table, std::ostream& out, char delim = ',');
std::string write_expanded_string(const ExpandedTable& table, char delim = ',');
ExpandedTable read_expanded(std::istream& in, char delim = ',');

}  // namespace hrmsm
