#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace cffe {

// One country-year row. `features` is the country's (time-invariant) feature
// vector in dataset order; `treated` is derived, never stored in files:
// treated == adoption_year.has_value() && year >= *adoption_year.
struct Observation {
  std::string country;
  int year = 0;
  double outcome = 0.0;
  std::optional<int> adoption_year;
  bool treated = false;
  // year - adoption_year; absent for never-treated countries.
  std::optional<int> event_time;
  std::vector<double> features;
  std::map<std::string, double> extra_outcomes;
};

struct PanelDataset {
  std::vector<Observation> observations;
  std::vector<std::string> feature_names;
  std::vector<std::string> extra_outcome_names;
  // country -> row indices, in file/generation order
  std::map<std::string, std::vector<std::size_t>> country_index;
  std::pair<int, int> year_range{0, 0};
  int n_dropped_missing_outcome = 0;
  std::vector<std::string> warnings;

  std::size_t n_rows() const { return observations.size(); }
  std::size_t n_countries() const { return country_index.size(); }
  // a country is "treated" in the group sense when it ever adopts
  bool country_ever_treated(const std::string& c) const;
  std::vector<std::string> treated_countries() const;
  std::vector<std::string> never_treated_countries() const;
};

// Column layout of a panel CSV. The four fixed columns are required; feature
// and extra-outcome columns must be declared (via sidecar config or flags),
// never guessed.
struct CsvSchema {
  std::string country_col = "country";
  std::string year_col = "year";
  std::string outcome_col = "outcome";
  std::string adoption_col = "adoption_year";
  std::vector<std::string> feature_cols;
  std::vector<std::string> extra_outcome_cols;
};

// Assembles a dataset from rows, enforcing panel invariants:
// no duplicate (country, year), adoption years inside the year range for
// every adopting country, one canonical feature vector per country
// (first non-missing value wins; conflicts are recorded as warnings).
// Rows with missing outcome are dropped and counted.
PanelDataset build_dataset(std::vector<Observation> rows,
                           std::vector<std::string> feature_names,
                           std::vector<std::string> extra_outcome_names = {});

PanelDataset load_panel(std::istream& in, const CsvSchema& schema);
PanelDataset load_panel_file(const std::string& csv_path, const CsvSchema& schema);

// Annotates event_time = year - adoption_year (absent when never treated)
// and re-derives `treated`. Idempotent.
void compute_event_time(PanelDataset& data);

// Writes the CSV back out in the schema's column order. Doubles are printed
// with 17 significant digits so a re-ingest reproduces bit-identical values.
void export_panel(const PanelDataset& data, std::ostream& out,
                  const CsvSchema& schema);
void export_panel_file(const PanelDataset& data, const std::string& csv_path,
                       const CsvSchema& schema);

// key=value sidecar describing a panel CSV (feature/extra columns, optional
// column renames, optional eu_controls list). '#' starts a comment.
struct PanelConfig {
  CsvSchema schema;
  std::vector<std::string> eu_controls;
};
PanelConfig parse_panel_config(std::istream& in);
PanelConfig parse_panel_config_file(const std::string& path);
void write_panel_config(const PanelConfig& config, std::ostream& out);

struct GroupStats {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation
  int n = 0;
};

// Mean / sample-sd / n of the outcome and every feature, split by
// ever-treated status, plus row and country counts per group.
struct SummaryStats {
  std::vector<std::string> variables;
  std::map<std::string, std::vector<GroupStats>> by_group;  // group -> per-variable
  std::map<std::string, int> rows_by_group;
  std::map<std::string, int> countries_by_group;
  static constexpr const char* kTreated = "treated";
  static constexpr const char* kControl = "control";
  static constexpr const char* kAll = "all";
};
SummaryStats summary_stats(const PanelDataset& data);

struct BalanceRow {
  std::string variable;
  GroupStats left;
  GroupStats right;
  double diff = 0.0;  // left mean - right mean
};
// Cross-sectional comparison of two country sets in a single year.
std::vector<BalanceRow> balance_table(const PanelDataset& data,
                                      const std::set<std::string>& left,
                                      const std::set<std::string>& right,
                                      int as_of_year);

// Dataset restricted to the given countries (others removed whole).
PanelDataset subset_countries(const PanelDataset& data,
                              const std::set<std::string>& keep);
PanelDataset drop_country(const PanelDataset& data, const std::string& country);

}  // namespace cffe
