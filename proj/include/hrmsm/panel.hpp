#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hrmsm {

// One observed (subject, t) row: covariates X_t, availability I_t,
// treatment A_t, outcome Y_t, and the treatment probability
// pi_t(1; H_t) = P[A_t = 1 | H_t].
struct TrajectoryRecord {
    std::int64_t t = 0;
    int availability = 0;
    int treatment = 0;
    double outcome = 0.0;
    double propensity = 0.0;
    std::vector<double> covariates;  // aligned with Panel::covariate_names()
};

struct SubjectBlock {
    std::string id;
    std::vector<TrajectoryRecord> records;   // t = 1..T_s consecutive
    std::vector<double> baseline;            // aligned with Panel::baseline_names()
};

// Immutable after construction; safe to share across threads.
class Panel {
  public:
    Panel() = default;
    Panel(std::vector<std::string> covariate_names, std::vector<std::string> baseline_names,
          std::vector<SubjectBlock> subjects, double epsilon);

    std::size_t n_subjects() const { return subjects_.size(); }
    const SubjectBlock& subject(std::size_t i) const { return subjects_[i]; }
    const std::vector<SubjectBlock>& subjects() const { return subjects_; }
    const std::vector<std::string>& covariate_names() const { return covariate_names_; }
    const std::vector<std::string>& baseline_names() const { return baseline_names_; }
    double epsilon() const { return epsilon_; }

    int covariate_index(const std::string& name) const;  // -1 if absent
    int baseline_index(const std::string& name) const;
    std::size_t n_records() const;

    // Subjects whose baseline column `name` equals `value` (exact compare).
    Panel subset_by_baseline(const std::string& name, double value) const;

  private:
    void validate() const;

    std::vector<std::string> covariate_names_;
    std::vector<std::string> baseline_names_;
    std::vector<SubjectBlock> subjects_;  // sorted by subject id
    double epsilon_ = 0.01;
};

// Column-name mapping for ingestion. Unknown columns are carried as named
// covariates unless listed in baseline_columns (then validated constant per
// subject and stored once).
struct PanelSchema {
    std::string subject = "subject";
    std::string time = "t";
    std::string availability = "I";
    std::string treatment = "A";
    std::string outcome = "Y";
    std::string propensity = "pi";
    std::vector<std::string> baseline_columns;
    char delimiter = ',';
    double epsilon = 0.01;
    // When set, the pi column may be absent: propensity is c on available
    // rows and 0 otherwise. The IPW path never infers pi from data.
    std::optional<double> constant_propensity;
};

Panel ingest(std::istream& in, const PanelSchema& schema = {});
Panel ingest_string(const std::string& text, const PanelSchema& schema = {});
Panel ingest_file(const std::string& path, const PanelSchema& schema = {});

void serialize(const Panel& panel, std::ostream& out, char delim = ',');
std::string serialize_string(const Panel& panel, char delim = ',');

struct PositivityReport {
    struct Violation {
        std::string subject;
        std::int64_t t;
        double propensity;
    };
    double epsilon = 0.0;
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

PositivityReport validate_positivity(const Panel& panel, double epsilon);

}  // namespace hrmsm
