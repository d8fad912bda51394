#include "hrmsm/regimes.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "hrmsm/common.hpp"
#include "hrmsm/csv.hpp"

namespace hrmsm {

int RegimeSequence::dose() const {
    int d = 0;
    for (auto a : atoms)
        if (a == RegimeAtom::treat_if_available) ++d;
    return d;
}

std::uint32_t RegimeSequence::mask() const {
    std::uint32_t m = 0;
    for (std::size_t p = 0; p < atoms.size(); ++p)
        if (atoms[p] == RegimeAtom::treat_if_available) m |= (1u << p);
    return m;
}

std::string RegimeSequence::label() const {
    std::string s;
    for (auto a : atoms) s.push_back(a == RegimeAtom::treat_if_available ? '1' : '0');
    return s;
}

RegimeSequence RegimeSequence::from_label(const std::string& label) {
    RegimeSequence seq;
    for (char c : label) {
        if (c == '0')
            seq.atoms.push_back(RegimeAtom::never_treat);
        else if (c == '1')
            seq.atoms.push_back(RegimeAtom::treat_if_available);
        else
            throw ConfigError("InvalidFilter: regime label must be 0/1 string, got '" + label +
                              "'");
    }
    if (seq.atoms.empty()) throw ConfigError("InvalidFilter: empty regime label");
    return seq;
}

RegimeSet enumerate_regimes(int gamma, std::optional<int> max_dose) {
    if (gamma < 1) throw ConfigError("InvalidFilter: gamma must be >= 1");
    if (gamma > 20) throw ConfigError("InvalidFilter: gamma too large (max 20)");
    if (max_dose && (*max_dose < 0 || *max_dose > gamma))
        throw ConfigError("InvalidFilter: max_dose must be in [0, gamma]");
    RegimeSet set;
    set.gamma = gamma;
    std::uint32_t count = 1u << gamma;
    for (std::uint32_t code = 0; code < count; ++code) {
        RegimeSequence seq;
        seq.atoms.resize(static_cast<std::size_t>(gamma));
        // Lexicographic label order: the leftmost (earliest) position is the
        // most significant digit of `code`.
        for (int p = 0; p < gamma; ++p) {
            bool treat = (code >> (gamma - 1 - p)) & 1u;
            seq.atoms[static_cast<std::size_t>(p)] =
                treat ? RegimeAtom::treat_if_available : RegimeAtom::never_treat;
        }
        if (max_dose && seq.dose() > *max_dose) continue;
        set.sequences.push_back(std::move(seq));
    }
    return set;
}

RegimeSet regimes_from_labels(int gamma, const std::vector<std::string>& labels) {
    if (labels.empty()) throw ConfigError("InvalidFilter: empty regime list");
    RegimeSet set;
    set.gamma = gamma;
    std::set<std::string> seen;
    for (const auto& label : labels) {
        auto seq = RegimeSequence::from_label(label);
        if (seq.gamma() != gamma)
            throw ConfigError("InvalidFilter: regime '" + label + "' has length " +
                              std::to_string(seq.gamma()) + ", expected " + std::to_string(gamma));
        if (!seen.insert(label).second)
            throw ConfigError("InvalidFilter: duplicate regime '" + label + "'");
        set.sequences.push_back(std::move(seq));
    }
    std::sort(set.sequences.begin(), set.sequences.end(),
              [](const RegimeSequence& a, const RegimeSequence& b) { return a.label() < b.label(); });
    return set;
}

int compliance(const RegimeSequence& seq, std::span<const TrajectoryRecord> window) {
    if (window.size() != seq.atoms.size())
        throw DataError("WindowLengthMismatch: window has " + std::to_string(window.size()) +
                        " records, regime has " + std::to_string(seq.atoms.size()));
    for (std::size_t p = 0; p < window.size(); ++p)
        if (window[p].treatment != intended_treatment(seq.atoms[p], window[p].availability))
            return 0;
    return 1;
}

double ip_weight(const RegimeSequence& seq, std::span<const TrajectoryRecord> window) {
    if (compliance(seq, window) == 0) return 0.0;
    double w = 1.0;
    for (const auto& rec : window) {
        double p_obs = rec.treatment ? rec.propensity : 1.0 - rec.propensity;
        if (p_obs <= 0.0)
            throw DataError("DegeneratePropensity: observed treatment " +
                            std::to_string(rec.treatment) + " has probability 0 at t=" +
                            std::to_string(rec.t));
        w /= p_obs;
    }
    return w;
}

std::vector<std::pair<std::size_t, std::size_t>> ExpandedTable::subject_ranges() const {
    std::vector<std::pair<std::size_t, std::size_t>> ranges(subject_ids.size(), {0, 0});
    std::size_t i = 0;
    while (i < rows.size()) {
        std::size_t j = i;
        while (j < rows.size() && rows[j].subject == rows[i].subject) ++j;
        ranges[static_cast<std::size_t>(rows[i].subject)] = {i, j};
        i = j;
    }
    return ranges;
}

ExpandedTable expand_panel(const Panel& panel, const RegimeSet& regimes,
                           const std::vector<std::string>& modifier_names,
                           const ExpandOptions& opts) {
    const int gamma = regimes.gamma;
    if (gamma < 1) throw ConfigError("InvalidFilter: regime set has gamma < 1");

    // Resolve modifiers against time-varying covariates first, then baseline.
    struct ModifierRef {
        bool from_baseline;
        int index;
    };
    std::vector<ModifierRef> refs;
    for (const auto& name : modifier_names) {
        int ci = panel.covariate_index(name);
        if (ci >= 0) {
            refs.push_back({false, ci});
            continue;
        }
        int bi = panel.baseline_index(name);
        if (bi >= 0) {
            refs.push_back({true, bi});
            continue;
        }
        throw DataError("UnknownModifier: '" + name + "'");
    }

    for (const auto& s : panel.subjects())
        if (static_cast<int>(s.records.size()) < gamma)
            throw DataError("InsufficientTimepoints: subject '" + s.id + "' has " +
                            std::to_string(s.records.size()) + " timepoints, need >= " +
                            std::to_string(gamma));

    if (opts.observed_only)
        for (const auto& s : panel.subjects())
            for (const auto& r : s.records)
                if (r.availability != 1)
                    throw DataError(
                        "observed_only expansion requires a static design (I=1 everywhere); "
                        "subject '" +
                        s.id + "' t=" + std::to_string(r.t) + " has I=0");

    ExpandedTable table;
    table.gamma = gamma;
    table.modifier_names = modifier_names;
    for (const auto& seq : regimes.sequences) table.regime_labels.push_back(seq.label());
    for (const auto& s : panel.subjects()) table.subject_ids.push_back(s.id);

    // Per-subject row counts are known up front, so expansion can fill
    // disjoint slices in parallel and stay deterministic.
    const std::size_t n_subjects = panel.n_subjects();
    std::vector<std::size_t> offsets(n_subjects + 1, 0);
    for (std::size_t i = 0; i < n_subjects; ++i) {
        std::size_t windows = panel.subject(i).records.size() - static_cast<std::size_t>(gamma) + 1;
        std::size_t per = opts.observed_only ? windows : windows * regimes.sequences.size();
        offsets[i + 1] = offsets[i] + per;
    }
    table.rows.resize(offsets[n_subjects]);

    std::vector<std::size_t> warn_counts(n_subjects, 0);
    std::vector<std::size_t> used_counts(n_subjects, 0);

    parallel_for(n_subjects, opts.threads, [&](std::size_t si) {
        const SubjectBlock& s = panel.subject(si);
        std::size_t out = offsets[si];
        std::size_t used = 0;
        for (std::size_t w0 = 0; w0 + static_cast<std::size_t>(gamma) <= s.records.size(); ++w0) {
            std::span<const TrajectoryRecord> window(&s.records[w0],
                                                     static_cast<std::size_t>(gamma));
            const TrajectoryRecord& start = window.front();
            const TrajectoryRecord& end = window.back();
            std::vector<double> mods;
            mods.reserve(refs.size());
            for (const auto& ref : refs)
                mods.push_back(ref.from_baseline ? s.baseline[static_cast<std::size_t>(ref.index)]
                                                 : start.covariates[static_cast<std::size_t>(
                                                       ref.index)]);
            for (std::size_t ri = 0; ri < regimes.sequences.size(); ++ri) {
                const RegimeSequence& seq = regimes.sequences[ri];
                if (opts.observed_only) {
                    bool matches = true;
                    for (std::size_t p = 0; p < window.size(); ++p)
                        if (window[p].treatment !=
                            intended_treatment(seq.atoms[p], window[p].availability))
                            matches = false;
                    if (!matches) continue;
                }
                ExpandedTable::Row row;
                row.subject = static_cast<std::int32_t>(si);
                row.t = end.t;
                row.regime = static_cast<std::int32_t>(ri);
                row.compliance = compliance(seq, window);
                row.weight = ip_weight(seq, window);
                row.outcome = end.outcome;
                row.treat_mask = seq.mask();
                row.dose = static_cast<double>(seq.dose());
                row.modifiers = mods;
                if (opts.weight_warn_threshold && row.weight > *opts.weight_warn_threshold)
                    ++warn_counts[si];
                table.rows[out + used] = std::move(row);
                ++used;
            }
        }
        used_counts[si] = used;
    });

    if (opts.observed_only) {
        // Windows whose observed sequence is not in the regime set leave
        // gaps; compact them away while preserving subject order.
        std::vector<ExpandedTable::Row> compact;
        compact.reserve(table.rows.size());
        for (std::size_t si = 0; si < n_subjects; ++si)
            for (std::size_t k = 0; k < used_counts[si]; ++k)
                compact.push_back(std::move(table.rows[offsets[si] + k]));
        table.rows = std::move(compact);
    }

    for (std::size_t c : warn_counts) table.weight_warnings += c;
    return table;
}

void write_expanded(const ExpandedTable& table, std::ostream& out, char delim) {
    std::vector<std::string> header = {"subject", "t", "regime", "compliance", "weight", "Y"};
    for (int p = 1; p <= table.gamma; ++p) header.push_back("J" + std::to_string(p));
    header.push_back("dose");
    for (const auto& m : table.modifier_names) header.push_back(m);
    write_row(out, header, delim);
    std::vector<std::string> cells;
    for (const auto& row : table.rows) {
        cells.clear();
        cells.push_back(table.subject_ids[static_cast<std::size_t>(row.subject)]);
        cells.push_back(std::to_string(row.t));
        cells.push_back(table.regime_labels[static_cast<std::size_t>(row.regime)]);
        cells.push_back(std::to_string(row.compliance));
        cells.push_back(format_double(row.weight));
        cells.push_back(format_double(row.outcome));
        for (int p = 0; p < table.gamma; ++p)
            cells.push_back((row.treat_mask >> p) & 1u ? "1" : "0");
        cells.push_back(format_double(row.dose));
        for (double m : row.modifiers) cells.push_back(format_double(m));
        write_row(out, cells, delim);
    }
}

std::string write_expanded_string(const ExpandedTable& table, char delim) {
    std::ostringstream out;
    write_expanded(table, out, delim);
    return out.str();
}

ExpandedTable read_expanded(std::istream& in, char delim) {
    DelimitedTable raw = read_delimited(in, delim);
    auto require = [&](const std::string& name) {
        int idx = raw.column(name);
        if (idx < 0) throw DataError("MissingColumn: '" + name + "'");
        return idx;
    };
    int c_subject = require("subject");
    int c_t = require("t");
    int c_regime = require("regime");
    int c_compliance = require("compliance");
    int c_weight = require("weight");
    int c_y = require("Y");

    int gamma = 0;
    std::vector<int> j_cols;
    while (true) {
        int idx = raw.column("J" + std::to_string(gamma + 1));
        if (idx < 0) break;
        j_cols.push_back(idx);
        ++gamma;
    }
    if (gamma == 0) throw DataError("MissingColumn: 'J1'");
    int c_dose = require("dose");

    std::vector<int> mod_cols;
    ExpandedTable table;
    table.gamma = gamma;
    std::set<int> known = {c_subject, c_t, c_regime, c_compliance, c_weight, c_y, c_dose};
    known.insert(j_cols.begin(), j_cols.end());
    for (std::size_t i = 0; i < raw.header.size(); ++i) {
        if (known.count(static_cast<int>(i))) continue;
        table.modifier_names.push_back(raw.header[i]);
        mod_cols.push_back(static_cast<int>(i));
    }

    std::map<std::string, std::int32_t> subject_index;  // first-appearance order preserved
    std::map<std::string, std::int32_t> regime_index;
    for (const auto& cells : raw.rows) {
        ExpandedTable::Row row;
        const std::string& sid = cells[static_cast<std::size_t>(c_subject)];
        auto sit = subject_index.find(sid);
        if (sit == subject_index.end()) {
            sit = subject_index.emplace(sid, static_cast<std::int32_t>(table.subject_ids.size()))
                      .first;
            table.subject_ids.push_back(sid);
        }
        row.subject = sit->second;
        row.t = static_cast<std::int64_t>(parse_double(cells[static_cast<std::size_t>(c_t)], "t"));
        const std::string& rlabel = cells[static_cast<std::size_t>(c_regime)];
        auto rit = regime_index.find(rlabel);
        if (rit == regime_index.end()) {
            rit = regime_index.emplace(rlabel, static_cast<std::int32_t>(table.regime_labels.size()))
                      .first;
            table.regime_labels.push_back(rlabel);
        }
        row.regime = rit->second;
        row.compliance = static_cast<std::int32_t>(
            parse_double(cells[static_cast<std::size_t>(c_compliance)], "compliance"));
        row.weight = parse_double(cells[static_cast<std::size_t>(c_weight)], "weight");
        row.outcome = parse_double(cells[static_cast<std::size_t>(c_y)], "Y");
        for (int p = 0; p < gamma; ++p)
            if (parse_double(cells[static_cast<std::size_t>(j_cols[static_cast<std::size_t>(p)])],
                             "J") != 0.0)
                row.treat_mask |= (1u << p);
        row.dose = parse_double(cells[static_cast<std::size_t>(c_dose)], "dose");
        for (int col : mod_cols)
            row.modifiers.push_back(
                parse_double(cells[static_cast<std::size_t>(col)], "modifier"));
        table.rows.push_back(std::move(row));
    }

    // Rows must be grouped by subject for clustered reductions.
    std::set<std::int32_t> closed;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        if (i == 0 || table.rows[i].subject != table.rows[i - 1].subject) {
            if (!closed.insert(table.rows[i].subject).second)
                throw DataError("expanded rows for subject '" +
                                table.subject_ids[static_cast<std::size_t>(
                                    table.rows[i].subject)] +
                                "' are not contiguous");
        }
    }
    return table;
}

}  // namespace hrmsm
