#include "cffe/panel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "cffe/errors.hpp"

namespace cffe {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Minimal CSV field splitter: commas separate, double quotes protect commas,
// CRLF tolerated. Good enough for numeric panels; anything pathological
// surfaces as a parse error on the offending cell.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c == '\r') {
      // swallow
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& cell, std::size_t row, const std::string& col) {
  const std::string t = trim(cell);
  if (t.empty()) return kMissing;
  const char* begin = t.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end != begin + t.size() || !std::isfinite(v)) {
    throw MalformedCsv("row " + std::to_string(row) + ", column '" + col +
                       "': cannot parse '" + t + "' as a number");
  }
  return v;
}

std::optional<int> parse_int_opt(const std::string& cell, std::size_t row,
                                 const std::string& col) {
  const std::string t = trim(cell);
  if (t.empty()) return std::nullopt;
  const char* begin = t.c_str();
  char* end = nullptr;
  long v = std::strtol(begin, &end, 10);
  if (end != begin + t.size()) {
    throw MalformedCsv("row " + std::to_string(row) + ", column '" + col +
                       "': cannot parse '" + t + "' as an integer");
  }
  return static_cast<int>(v);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

bool PanelDataset::country_ever_treated(const std::string& c) const {
  auto it = country_index.find(c);
  if (it == country_index.end() || it->second.empty()) return false;
  return observations[it->second.front()].adoption_year.has_value();
}

std::vector<std::string> PanelDataset::treated_countries() const {
  std::vector<std::string> out;
  for (const auto& [c, rows] : country_index)
    if (country_ever_treated(c)) out.push_back(c);
  return out;
}

std::vector<std::string> PanelDataset::never_treated_countries() const {
  std::vector<std::string> out;
  for (const auto& [c, rows] : country_index)
    if (!country_ever_treated(c)) out.push_back(c);
  return out;
}

void compute_event_time(PanelDataset& data) {
  for (auto& obs : data.observations) {
    if (obs.adoption_year) {
      obs.event_time = obs.year - *obs.adoption_year;
      obs.treated = obs.year >= *obs.adoption_year;
    } else {
      obs.event_time.reset();
      obs.treated = false;
    }
  }
}

PanelDataset build_dataset(std::vector<Observation> rows,
                           std::vector<std::string> feature_names,
                           std::vector<std::string> extra_outcome_names) {
  PanelDataset data;
  data.feature_names = std::move(feature_names);
  data.extra_outcome_names = std::move(extra_outcome_names);
  const std::size_t p = data.feature_names.size();

  // drop rows with missing outcome up front; the calendar still counts them,
  // so an adoption year observed only on a dropped row stays valid
  std::vector<Observation> kept;
  kept.reserve(rows.size());
  int cal_max = std::numeric_limits<int>::min();
  for (auto& r : rows) {
    cal_max = std::max(cal_max, r.year);
    if (std::isnan(r.outcome)) {
      ++data.n_dropped_missing_outcome;
    } else {
      kept.push_back(std::move(r));
    }
  }
  if (kept.empty()) throw InvalidPanel("no rows with a non-missing outcome");

  std::set<std::pair<std::string, int>> seen;
  std::map<std::string, std::optional<int>> adoption_by_country;
  std::map<std::string, std::vector<double>> features_by_country;
  int ymin = std::numeric_limits<int>::max();
  int ymax = std::numeric_limits<int>::min();

  for (auto& r : kept) {
    if (r.features.size() != p) {
      throw InvalidPanel("country " + r.country + " year " +
                         std::to_string(r.year) + ": expected " +
                         std::to_string(p) + " features, got " +
                         std::to_string(r.features.size()));
    }
    if (!seen.insert({r.country, r.year}).second) {
      throw DuplicateKey("country " + r.country + ", year " +
                         std::to_string(r.year) + " appears more than once");
    }
    ymin = std::min(ymin, r.year);
    ymax = std::max(ymax, r.year);

    auto [ait, inserted] = adoption_by_country.try_emplace(r.country, r.adoption_year);
    if (!inserted && ait->second != r.adoption_year) {
      throw InvalidPanel("country " + r.country +
                         ": adoption_year differs across rows");
    }

    // canonical feature vector: first non-missing value per slot wins
    auto& canon = features_by_country[r.country];
    if (canon.empty()) canon.assign(p, kMissing);
    for (std::size_t j = 0; j < p; ++j) {
      if (std::isnan(canon[j])) {
        canon[j] = r.features[j];
      } else if (!std::isnan(r.features[j]) && r.features[j] != canon[j]) {
        data.warnings.push_back("country " + r.country + ": feature '" +
                                data.feature_names[j] +
                                "' varies across rows; first value kept");
        r.features[j] = canon[j];
      }
    }
  }
  data.year_range = {ymin, ymax};

  for (const auto& [country, canon] : features_by_country) {
    for (std::size_t j = 0; j < p; ++j) {
      if (std::isnan(canon[j])) {
        throw InvalidPanel("country " + country + ": feature '" +
                           data.feature_names[j] + "' missing in every row");
      }
    }
  }
  for (const auto& [country, adoption] : adoption_by_country) {
    if (adoption && *adoption > cal_max) {
      throw InvalidPanel("country " + country + ": adoption year " +
                         std::to_string(*adoption) +
                         " lies beyond the last observed year " +
                         std::to_string(cal_max));
    }
  }

  for (auto& r : kept) {
    r.features = features_by_country[r.country];
  }

  data.observations = std::move(kept);
  for (std::size_t i = 0; i < data.observations.size(); ++i) {
    data.country_index[data.observations[i].country].push_back(i);
  }
  compute_event_time(data);
  return data;
}

PanelDataset load_panel(std::istream& in, const CsvSchema& schema) {
  std::string header_line;
  if (!std::getline(in, header_line)) throw MalformedCsv("empty input");
  std::vector<std::string> header = split_csv_line(header_line);
  for (auto& h : header) h = trim(h);

  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw SchemaMismatch("declared column '" + name + "' not found in header");
    }
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t ci = column(schema.country_col);
  const std::size_t yi = column(schema.year_col);
  const std::size_t oi = column(schema.outcome_col);
  const std::size_t ai = column(schema.adoption_col);
  std::vector<std::size_t> fi, xi;
  for (const auto& f : schema.feature_cols) fi.push_back(column(f));
  for (const auto& x : schema.extra_outcome_cols) xi.push_back(column(x));

  std::vector<Observation> rows;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw MalformedCsv("row " + std::to_string(lineno) + ": expected " +
                         std::to_string(header.size()) + " cells, got " +
                         std::to_string(cells.size()));
    }
    Observation obs;
    obs.country = trim(cells[ci]);
    if (obs.country.empty()) {
      throw MalformedCsv("row " + std::to_string(lineno) + ": empty country");
    }
    auto year = parse_int_opt(cells[yi], lineno, schema.year_col);
    if (!year) {
      throw MalformedCsv("row " + std::to_string(lineno) + ": empty year");
    }
    obs.year = *year;
    obs.outcome = parse_double(cells[oi], lineno, schema.outcome_col);
    obs.adoption_year = parse_int_opt(cells[ai], lineno, schema.adoption_col);
    obs.features.reserve(fi.size());
    for (std::size_t j = 0; j < fi.size(); ++j) {
      obs.features.push_back(
          parse_double(cells[fi[j]], lineno, schema.feature_cols[j]));
    }
    for (std::size_t j = 0; j < xi.size(); ++j) {
      double v = parse_double(cells[xi[j]], lineno, schema.extra_outcome_cols[j]);
      if (!std::isnan(v)) obs.extra_outcomes[schema.extra_outcome_cols[j]] = v;
    }
    rows.push_back(std::move(obs));
  }
  return build_dataset(std::move(rows), schema.feature_cols,
                       schema.extra_outcome_cols);
}

PanelDataset load_panel_file(const std::string& csv_path, const CsvSchema& schema) {
  std::ifstream in(csv_path);
  if (!in) throw IoFailure("cannot open '" + csv_path + "' for reading");
  return load_panel(in, schema);
}

void export_panel(const PanelDataset& data, std::ostream& out,
                  const CsvSchema& schema) {
  if (schema.feature_cols.size() != data.feature_names.size()) {
    throw SchemaMismatch("schema declares " +
                         std::to_string(schema.feature_cols.size()) +
                         " features, dataset has " +
                         std::to_string(data.feature_names.size()));
  }
  out << schema.country_col << ',' << schema.year_col << ','
      << schema.outcome_col << ',' << schema.adoption_col;
  for (const auto& f : schema.feature_cols) out << ',' << f;
  for (const auto& x : schema.extra_outcome_cols) out << ',' << x;
  out << '\n';
  for (const auto& obs : data.observations) {
    out << obs.country << ',' << obs.year << ',' << format_double(obs.outcome)
        << ',';
    if (obs.adoption_year) out << *obs.adoption_year;
    for (double f : obs.features) out << ',' << format_double(f);
    for (const auto& x : schema.extra_outcome_cols) {
      out << ',';
      auto it = obs.extra_outcomes.find(x);
      if (it != obs.extra_outcomes.end()) out << format_double(it->second);
    }
    out << '\n';
  }
  if (!out) throw IoFailure("panel export stream went bad");
}

void export_panel_file(const PanelDataset& data, const std::string& csv_path,
                       const CsvSchema& schema) {
  std::ofstream out(csv_path);
  if (!out) throw IoFailure("cannot open '" + csv_path + "' for writing");
  export_panel(data, out, schema);
}

PanelConfig parse_panel_config(std::istream& in) {
  PanelConfig config;
  std::string line;
  std::size_t lineno = 0;
  auto split_list = [](const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw MalformedCsv("config line " + std::to_string(lineno) +
                         ": expected key=value, got '" + t + "'");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key == "features") {
      config.schema.feature_cols = split_list(value);
    } else if (key == "extra_outcomes") {
      config.schema.extra_outcome_cols = split_list(value);
    } else if (key == "eu_controls") {
      config.eu_controls = split_list(value);
    } else if (key == "country_col") {
      config.schema.country_col = value;
    } else if (key == "year_col") {
      config.schema.year_col = value;
    } else if (key == "outcome_col") {
      config.schema.outcome_col = value;
    } else if (key == "adoption_col") {
      config.schema.adoption_col = value;
    } else {
      throw SchemaMismatch("config line " + std::to_string(lineno) +
                           ": unknown key '" + key + "'");
    }
  }
  return config;
}

PanelConfig parse_panel_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open '" + path + "' for reading");
  return parse_panel_config(in);
}

void write_panel_config(const PanelConfig& config, std::ostream& out) {
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ',';
      s += v[i];
    }
    return s;
  };
  out << "country_col=" << config.schema.country_col << '\n'
      << "year_col=" << config.schema.year_col << '\n'
      << "outcome_col=" << config.schema.outcome_col << '\n'
      << "adoption_col=" << config.schema.adoption_col << '\n'
      << "features=" << join(config.schema.feature_cols) << '\n';
  if (!config.schema.extra_outcome_cols.empty())
    out << "extra_outcomes=" << join(config.schema.extra_outcome_cols) << '\n';
  if (!config.eu_controls.empty())
    out << "eu_controls=" << join(config.eu_controls) << '\n';
}

namespace {

GroupStats stats_of(const std::vector<double>& values) {
  GroupStats g;
  g.n = static_cast<int>(values.size());
  if (g.n == 0) return g;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= g.n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  g.mean = mean;
  g.sd = g.n > 1 ? std::sqrt(ss / (g.n - 1)) : 0.0;
  return g;
}

}  // namespace

SummaryStats summary_stats(const PanelDataset& data) {
  SummaryStats s;
  s.variables.push_back("outcome");
  for (const auto& f : data.feature_names) s.variables.push_back(f);

  auto group_of = [&](const Observation& obs) {
    return obs.adoption_year ? SummaryStats::kTreated : SummaryStats::kControl;
  };

  std::map<std::string, std::vector<std::vector<double>>> columns;
  for (const char* g : {SummaryStats::kTreated, SummaryStats::kControl,
                        SummaryStats::kAll}) {
    columns[g].resize(s.variables.size());
    s.rows_by_group[g] = 0;
  }
  std::map<std::string, std::set<std::string>> countries;
  for (const auto& obs : data.observations) {
    for (const std::string& g : {std::string(group_of(obs)), std::string(SummaryStats::kAll)}) {
      auto& cols = columns[g];
      cols[0].push_back(obs.outcome);
      for (std::size_t j = 0; j < obs.features.size(); ++j)
        cols[j + 1].push_back(obs.features[j]);
      s.rows_by_group[g] += 1;
      countries[g].insert(obs.country);
    }
  }
  for (auto& [g, cols] : columns) {
    auto& rows = s.by_group[g];
    rows.reserve(cols.size());
    for (const auto& col : cols) rows.push_back(stats_of(col));
    s.countries_by_group[g] = static_cast<int>(countries[g].size());
  }
  return s;
}

std::vector<BalanceRow> balance_table(const PanelDataset& data,
                                      const std::set<std::string>& left,
                                      const std::set<std::string>& right,
                                      int as_of_year) {
  if (left.empty() || right.empty()) throw EmptyGroup("both country sets must be non-empty");
  if (as_of_year < data.year_range.first || as_of_year > data.year_range.second) {
    throw YearOutOfRange("as-of year " + std::to_string(as_of_year) +
                         " outside observed range [" +
                         std::to_string(data.year_range.first) + ", " +
                         std::to_string(data.year_range.second) + "]");
  }
  for (const auto& c : left) {
    if (right.count(c)) throw EmptyGroup("country " + c + " appears in both sets");
  }

  std::vector<std::string> variables;
  variables.push_back("outcome");
  for (const auto& f : data.feature_names) variables.push_back(f);

  auto collect = [&](const std::set<std::string>& group) {
    std::vector<std::vector<double>> cols(variables.size());
    int found = 0;
    for (const auto& c : group) {
      auto it = data.country_index.find(c);
      if (it == data.country_index.end()) {
        throw EmptyGroup("country " + c + " not present in the dataset");
      }
      for (std::size_t idx : it->second) {
        const auto& obs = data.observations[idx];
        if (obs.year != as_of_year) continue;
        ++found;
        cols[0].push_back(obs.outcome);
        for (std::size_t j = 0; j < obs.features.size(); ++j)
          cols[j + 1].push_back(obs.features[j]);
      }
    }
    if (found == 0) {
      throw EmptyGroup("no rows at year " + std::to_string(as_of_year) +
                       " for one of the country sets");
    }
    return cols;
  };

  auto lcols = collect(left);
  auto rcols = collect(right);
  std::vector<BalanceRow> rows;
  rows.reserve(variables.size());
  for (std::size_t v = 0; v < variables.size(); ++v) {
    BalanceRow row;
    row.variable = variables[v];
    row.left = stats_of(lcols[v]);
    row.right = stats_of(rcols[v]);
    row.diff = row.left.mean - row.right.mean;
    rows.push_back(row);
  }
  return rows;
}

PanelDataset subset_countries(const PanelDataset& data,
                              const std::set<std::string>& keep) {
  std::vector<Observation> rows;
  for (const auto& obs : data.observations) {
    if (keep.count(obs.country)) rows.push_back(obs);
  }
  if (rows.empty()) throw EmptyGroup("country subset matches no rows");
  return build_dataset(std::move(rows), data.feature_names,
                       data.extra_outcome_names);
}

PanelDataset drop_country(const PanelDataset& data, const std::string& country) {
  if (!data.country_index.count(country)) {
    throw EmptyGroup("country " + country + " not present in the dataset");
  }
  std::vector<Observation> rows;
  for (const auto& obs : data.observations) {
    if (obs.country != country) rows.push_back(obs);
  }
  return build_dataset(std::move(rows), data.feature_names,
                       data.extra_outcome_names);
}

}  // namespace cffe
