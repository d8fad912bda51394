#include "hrmsm/panel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "hrmsm/common.hpp"
#include "hrmsm/csv.hpp"

namespace hrmsm {

Panel::Panel(std::vector<std::string> covariate_names, std::vector<std::string> baseline_names,
             std::vector<SubjectBlock> subjects, double epsilon)
    : covariate_names_(std::move(covariate_names)),
      baseline_names_(std::move(baseline_names)),
      subjects_(std::move(subjects)),
      epsilon_(epsilon) {
    std::sort(subjects_.begin(), subjects_.end(),
              [](const SubjectBlock& a, const SubjectBlock& b) { return a.id < b.id; });
    validate();
}

int Panel::covariate_index(const std::string& name) const {
    for (std::size_t i = 0; i < covariate_names_.size(); ++i)
        if (covariate_names_[i] == name) return static_cast<int>(i);
    return -1;
}

int Panel::baseline_index(const std::string& name) const {
    for (std::size_t i = 0; i < baseline_names_.size(); ++i)
        if (baseline_names_[i] == name) return static_cast<int>(i);
    return -1;
}

std::size_t Panel::n_records() const {
    std::size_t n = 0;
    for (const auto& s : subjects_) n += s.records.size();
    return n;
}

Panel Panel::subset_by_baseline(const std::string& name, double value) const {
    int idx = baseline_index(name);
    if (idx < 0) throw DataError("UnknownModifier: no baseline column named '" + name + "'");
    std::vector<SubjectBlock> kept;
    for (const auto& s : subjects_)
        if (s.baseline[static_cast<std::size_t>(idx)] == value) kept.push_back(s);
    return Panel(covariate_names_, baseline_names_, std::move(kept), epsilon_);
}

void Panel::validate() const {
    std::set<std::string> ids;
    for (const auto& s : subjects_) {
        if (!ids.insert(s.id).second)
            throw DataError("duplicate subject id '" + s.id + "'");
        if (s.baseline.size() != baseline_names_.size())
            throw DataError("subject '" + s.id + "' baseline width mismatch");
        std::int64_t expected_t = 1;
        for (const auto& r : s.records) {
            std::string where = "subject '" + s.id + "' t=" + std::to_string(r.t);
            if (r.t != expected_t)
                throw DataError("NonConsecutiveTimepoints: " + where + ", expected t=" +
                                std::to_string(expected_t));
            ++expected_t;
            if (r.availability != 0 && r.availability != 1)
                throw DataError("InvariantViolation: " + where + ": availability must be 0/1");
            if (r.treatment != 0 && r.treatment != 1)
                throw DataError("InvariantViolation: " + where + ": treatment must be 0/1");
            if (!std::isfinite(r.outcome) || !std::isfinite(r.propensity))
                throw DataError("InvariantViolation: " + where + ": non-finite Y or pi");
            if (r.availability == 0) {
                if (r.treatment != 0)
                    throw DataError("InvariantViolation: " + where +
                                    ": availability=0 requires treatment=0");
                if (r.propensity != 0.0)
                    throw DataError("InvariantViolation: " + where +
                                    ": availability=0 requires propensity=0");
            } else if (r.propensity < epsilon_ || r.propensity > 1.0 - epsilon_) {
                throw DataError("PropensityOutOfRange: " + where + ": pi=" +
                                format_double(r.propensity) + " outside [" +
                                format_double(epsilon_) + ", " + format_double(1.0 - epsilon_) +
                                "]");
            }
            for (double c : r.covariates)
                if (!std::isfinite(c))
                    throw DataError("InvariantViolation: " + where + ": non-finite covariate");
            if (r.covariates.size() != covariate_names_.size())
                throw DataError("InvariantViolation: " + where + ": covariate width mismatch");
        }
    }
}

Panel ingest(std::istream& in, const PanelSchema& schema) {
    DelimitedTable table = read_delimited(in, schema.delimiter);

    auto require = [&](const std::string& name) {
        int idx = table.column(name);
        if (idx < 0) throw DataError("MissingColumn: '" + name + "'");
        return idx;
    };
    int c_subject = require(schema.subject);
    int c_time = require(schema.time);
    int c_avail = require(schema.availability);
    int c_treat = require(schema.treatment);
    int c_outcome = require(schema.outcome);
    int c_pi = table.column(schema.propensity);
    if (c_pi < 0 && !schema.constant_propensity)
        throw DataError("MissingColumn: '" + schema.propensity +
                        "' (or supply a constant propensity)");

    std::vector<int> baseline_cols;
    for (const auto& name : schema.baseline_columns) baseline_cols.push_back(require(name));

    std::vector<std::string> covariate_names;
    std::vector<int> covariate_cols;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        int idx = static_cast<int>(i);
        if (idx == c_subject || idx == c_time || idx == c_avail || idx == c_treat ||
            idx == c_outcome || idx == c_pi)
            continue;
        if (std::find(baseline_cols.begin(), baseline_cols.end(), idx) != baseline_cols.end())
            continue;
        covariate_names.push_back(table.header[i]);
        covariate_cols.push_back(idx);
    }

    auto parse_binary = [&](const std::string& cell, const std::string& what, std::size_t row) {
        if (cell == "0") return 0;
        if (cell == "1") return 1;
        throw DataError("InvariantViolation: row " + std::to_string(row + 2) + ": " + what +
                        " must be 0/1, got '" + cell + "'");
    };

    std::map<std::string, SubjectBlock> blocks;       // keyed by id
    std::map<std::string, std::int64_t> last_t_seen;  // rows may arrive unsorted
    struct RawRow {
        std::string subject;
        std::int64_t t;
        TrajectoryRecord rec;
        std::vector<double> baseline;
    };
    std::vector<RawRow> raw;
    raw.reserve(table.rows.size());

    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& cells = table.rows[i];
        std::string where = "row " + std::to_string(i + 2);
        RawRow rr;
        rr.subject = cells[static_cast<std::size_t>(c_subject)];
        double t_val = parse_double(cells[static_cast<std::size_t>(c_time)], where + " column t");
        rr.t = static_cast<std::int64_t>(t_val);
        if (static_cast<double>(rr.t) != t_val || rr.t < 1)
            throw DataError("InvariantViolation: " + where + ": t must be a positive integer");
        rr.rec.t = rr.t;
        rr.rec.availability =
            parse_binary(cells[static_cast<std::size_t>(c_avail)], schema.availability, i);
        rr.rec.treatment =
            parse_binary(cells[static_cast<std::size_t>(c_treat)], schema.treatment, i);
        rr.rec.outcome = parse_double(cells[static_cast<std::size_t>(c_outcome)], where + " Y");
        if (c_pi >= 0)
            rr.rec.propensity = parse_double(cells[static_cast<std::size_t>(c_pi)], where + " pi");
        else
            rr.rec.propensity = rr.rec.availability ? *schema.constant_propensity : 0.0;
        for (int col : covariate_cols)
            rr.rec.covariates.push_back(
                parse_double(cells[static_cast<std::size_t>(col)], where + " covariate"));
        for (int col : baseline_cols)
            rr.baseline.push_back(
                parse_double(cells[static_cast<std::size_t>(col)], where + " baseline"));
        raw.push_back(std::move(rr));
    }

    std::stable_sort(raw.begin(), raw.end(), [](const RawRow& a, const RawRow& b) {
        return a.subject != b.subject ? a.subject < b.subject : a.t < b.t;
    });

    std::vector<SubjectBlock> subjects;
    for (auto& rr : raw) {
        if (subjects.empty() || subjects.back().id != rr.subject) {
            subjects.push_back(SubjectBlock{rr.subject, {}, rr.baseline});
        } else {
            if (!subjects.back().records.empty() && subjects.back().records.back().t == rr.t)
                throw DataError("InvariantViolation: duplicate (subject, t) = ('" + rr.subject +
                                "', " + std::to_string(rr.t) + ")");
            for (std::size_t j = 0; j < rr.baseline.size(); ++j)
                if (subjects.back().baseline[j] != rr.baseline[j])
                    throw DataError("InvariantViolation: baseline column '" +
                                    schema.baseline_columns[j] + "' varies within subject '" +
                                    rr.subject + "'");
        }
        subjects.back().records.push_back(std::move(rr.rec));
    }

    return Panel(covariate_names, schema.baseline_columns, std::move(subjects), schema.epsilon);
}

Panel ingest_string(const std::string& text, const PanelSchema& schema) {
    std::istringstream in(text);
    return ingest(in, schema);
}

Panel ingest_file(const std::string& path, const PanelSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    return ingest(in, schema);
}

void serialize(const Panel& panel, std::ostream& out, char delim) {
    std::vector<std::string> header = {"subject", "t", "I", "A", "Y", "pi"};
    for (const auto& c : panel.covariate_names()) header.push_back(c);
    for (const auto& b : panel.baseline_names()) header.push_back(b);
    write_row(out, header, delim);
    std::vector<std::string> cells;
    for (const auto& s : panel.subjects()) {
        for (const auto& r : s.records) {
            cells.clear();
            cells.push_back(s.id);
            cells.push_back(std::to_string(r.t));
            cells.push_back(std::to_string(r.availability));
            cells.push_back(std::to_string(r.treatment));
            cells.push_back(format_double(r.outcome));
            cells.push_back(format_double(r.propensity));
            for (double c : r.covariates) cells.push_back(format_double(c));
            for (double b : s.baseline) cells.push_back(format_double(b));
            write_row(out, cells, delim);
        }
    }
}

std::string serialize_string(const Panel& panel, char delim) {
    std::ostringstream out;
    serialize(panel, out, delim);
    return out.str();
}

PositivityReport validate_positivity(const Panel& panel, double epsilon) {
    PositivityReport report;
    report.epsilon = epsilon;
    for (const auto& s : panel.subjects())
        for (const auto& r : s.records)
            if (r.availability == 1 &&
                (r.propensity < epsilon || r.propensity > 1.0 - epsilon))
                report.violations.push_back({s.id, r.t, r.propensity});
    return report;
}

}  // namespace hrmsm
