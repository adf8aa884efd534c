#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pcix {

// One participant. Covariates are real-coded; categoricals were expanded to
// indicator columns at ingestion. nce/nco are binary when present.
struct SubjectRecord {
  std::uint8_t study = 0;  // 0 = primary, 1 = external
  int arm = 0;             // 0 = placebo, 1.. = active arms
  double time = 0.0;       // follow-up days
  std::uint8_t event = 0;
  std::vector<double> covariates;  // NaN marks a missing value
  std::optional<std::uint8_t> nce;
  std::optional<std::uint8_t> nco;
  std::vector<double> latent;  // simulation-only passthrough columns
};

struct Schema {
  std::vector<std::string> covariate_names;  // post-expansion
  bool has_nce = false;
  bool has_nco = false;
  std::vector<std::string> latent_names;
};

struct RejectedRow {
  std::size_t row;  // 1-based data row (header not counted)
  std::string reason;
};

struct StudyDataset {
  Schema schema;
  std::vector<SubjectRecord> records;
  std::string provenance;
  std::vector<RejectedRow> rejects;
  std::vector<std::string> notes;  // exclusion accounting, warnings

  std::size_t count_study(int s) const;
};

// Column mapping from CSV header names onto the record fields.
struct CovariateSpec {
  std::string column;
  bool categorical = false;
};

struct ColumnMapping {
  std::string study = "R";
  std::string arm = "A";
  std::string time = "T";
  std::string event = "delta";
  std::vector<CovariateSpec> covariates;
  std::string nce;  // empty = column absent
  std::string nco;
  std::vector<std::string> latent;
};

StudyDataset load_csv(const std::string& path, const ColumnMapping& mapping);
void write_csv(const StudyDataset& ds, const std::string& path);

// Keeps records with no missing values among `required`, which may name
// covariate columns or the pseudo-fields "nce"/"nco". Exclusions are counted
// on the first failing field in the given order and recorded in notes.
StudyDataset complete_case(const StudyDataset& ds,
                           const std::vector<std::string>& required);

// Drops records with time == 0 and event == 0 (no follow-up), counting them.
StudyDataset drop_zero_followup(const StudyDataset& ds);

struct SummaryRow {
  std::string variable;
  std::string level;  // formatted value or "Missing"
  std::size_t count0 = 0, count1 = 0;
  double pct0 = 0.0, pct1 = 0.0;
};

struct SummaryTable {
  std::vector<SummaryRow> rows;
  std::size_t n0 = 0, n1 = 0;
  std::string to_csv() const;
  std::string to_text() const;
};

SummaryTable summarize(const StudyDataset& ds,
                       const std::vector<std::string>& variables);

// Column-oriented view used by the fitting code. Missing values are NaN.
struct DataView {
  Eigen::VectorXd time, event, study, arm;
  Eigen::MatrixXd x;
  std::vector<std::string> xnames;
  Eigen::VectorXd z, w;  // empty when the schema lacks them
  std::map<std::string, Eigen::VectorXd> latent;

  Eigen::Index n() const { return time.size(); }
  bool has_z() const { return z.size() > 0; }
  bool has_w() const { return w.size() > 0; }
};

DataView make_view(const StudyDataset& ds);

}  // namespace pcix
