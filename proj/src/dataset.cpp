#include "pcix/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "pcix/errors.hpp"

namespace pcix {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool is_missing(const std::string& s) { return s.empty() || s == "NA"; }

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto res = std::from_chars(b, e, out);
  return res.ec == std::errc{} && res.ptr == e && std::isfinite(out);
}

bool parse_binary(const std::string& s, std::uint8_t& out) {
  double v;
  if (!parse_double(s, v)) return false;
  if (v != 0.0 && v != 1.0) return false;
  out = static_cast<std::uint8_t>(v);
  return true;
}

std::size_t find_column(const std::vector<std::string>& header,
                        const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end())
    throw DataError("column '" + name + "' not found in header");
  return static_cast<std::size_t>(it - header.begin());
}

std::string format_level(double v) {
  char buf[32];
  if (v == std::floor(v) && std::fabs(v) < 1e15)
    std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(v));
  else
    std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::size_t StudyDataset::count_study(int s) const {
  std::size_t k = 0;
  for (const auto& r : records) k += (r.study == s);
  return k;
}

StudyDataset load_csv(const std::string& path, const ColumnMapping& mapping) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file '" + path + "'");
  const auto header = split_csv_line(line);

  const std::size_t ci_study = find_column(header, mapping.study);
  const std::size_t ci_arm = find_column(header, mapping.arm);
  const std::size_t ci_time = find_column(header, mapping.time);
  const std::size_t ci_event = find_column(header, mapping.event);
  std::vector<std::size_t> ci_cov;
  for (const auto& cs : mapping.covariates)
    ci_cov.push_back(find_column(header, cs.column));
  const bool has_z = !mapping.nce.empty();
  const bool has_w = !mapping.nco.empty();
  const std::size_t ci_z = has_z ? find_column(header, mapping.nce) : 0;
  const std::size_t ci_w = has_w ? find_column(header, mapping.nco) : 0;
  std::vector<std::size_t> ci_lat;
  for (const auto& name : mapping.latent) ci_lat.push_back(find_column(header, name));

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
  }

  // Pass 1: observed levels of each categorical covariate (reference level
  // = first in sorted order, dropped).
  std::vector<std::vector<std::string>> levels(mapping.covariates.size());
  for (std::size_t j = 0; j < mapping.covariates.size(); ++j) {
    if (!mapping.covariates[j].categorical) continue;
    std::set<std::string> seen;
    for (const auto& cells : rows) {
      if (ci_cov[j] < cells.size() && !is_missing(cells[ci_cov[j]]))
        seen.insert(cells[ci_cov[j]]);
    }
    levels[j].assign(seen.begin(), seen.end());
    if (levels[j].size() < 2)
      throw DataError("categorical covariate '" + mapping.covariates[j].column +
                      "' has fewer than two observed levels");
  }

  StudyDataset ds;
  ds.provenance = path;
  for (std::size_t j = 0; j < mapping.covariates.size(); ++j) {
    const auto& cs = mapping.covariates[j];
    if (cs.categorical) {
      for (std::size_t l = 1; l < levels[j].size(); ++l)
        ds.schema.covariate_names.push_back(cs.column + "=" + levels[j][l]);
    } else {
      ds.schema.covariate_names.push_back(cs.column);
    }
  }
  ds.schema.has_nce = has_z;
  ds.schema.has_nco = has_w;
  ds.schema.latent_names = mapping.latent;

  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    const auto& cells = rows[ri];
    const std::size_t rownum = ri + 1;
    auto reject = [&](const std::string& why) {
      ds.rejects.push_back({rownum, why});
    };
    std::size_t need = std::max({ci_study, ci_arm, ci_time, ci_event});
    for (auto c : ci_cov) need = std::max(need, c);
    if (has_z) need = std::max(need, ci_z);
    if (has_w) need = std::max(need, ci_w);
    for (auto c : ci_lat) need = std::max(need, c);
    if (cells.size() <= need) {
      reject("too few cells");
      continue;
    }

    SubjectRecord rec;
    if (!parse_binary(cells[ci_study], rec.study)) {
      reject("unparseable study indicator");
      continue;
    }
    double armv;
    if (!parse_double(cells[ci_arm], armv) || armv != std::floor(armv) ||
        armv < 0) {
      reject("unparseable arm");
      continue;
    }
    rec.arm = static_cast<int>(armv);
    if (rec.study == 1 && rec.arm != 0) {
      reject("external record with non-placebo arm");
      continue;
    }
    if (!parse_double(cells[ci_time], rec.time)) {
      reject("unparseable time");
      continue;
    }
    if (rec.time < 0) {
      reject("negative time");
      continue;
    }
    if (!parse_binary(cells[ci_event], rec.event)) {
      reject("event not in {0,1}");
      continue;
    }

    bool bad = false;
    for (std::size_t j = 0; j < mapping.covariates.size() && !bad; ++j) {
      const auto& cell = cells[ci_cov[j]];
      if (mapping.covariates[j].categorical) {
        if (is_missing(cell)) {
          for (std::size_t l = 1; l < levels[j].size(); ++l)
            rec.covariates.push_back(kNaN);
        } else {
          for (std::size_t l = 1; l < levels[j].size(); ++l)
            rec.covariates.push_back(cell == levels[j][l] ? 1.0 : 0.0);
        }
      } else if (is_missing(cell)) {
        rec.covariates.push_back(kNaN);
      } else {
        double v;
        if (!parse_double(cell, v)) {
          ds.rejects.push_back({rownum, "unparseable covariate '" +
                                            mapping.covariates[j].column + "'"});
          bad = true;
        } else {
          rec.covariates.push_back(v);
        }
      }
    }
    if (bad) continue;

    auto read_nc = [&](std::size_t ci, std::optional<std::uint8_t>& dst,
                       const char* what) {
      const auto& cell = cells[ci];
      if (is_missing(cell)) return true;
      std::uint8_t v;
      if (!parse_binary(cell, v)) {
        reject(std::string(what) + " not binary");
        return false;
      }
      dst = v;
      return true;
    };
    if (has_z && !read_nc(ci_z, rec.nce, "negative control exposure")) continue;
    if (has_w && !read_nc(ci_w, rec.nco, "negative control outcome")) continue;

    for (auto c : ci_lat) {
      double v = kNaN;
      if (!is_missing(cells[c]) && !parse_double(cells[c], v)) {
        bad = true;
        reject("unparseable latent column");
        break;
      }
      rec.latent.push_back(v);
    }
    if (bad) continue;

    ds.records.push_back(std::move(rec));
  }
  return ds;
}

void write_csv(const StudyDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "R,A,T,delta";
  for (const auto& c : ds.schema.covariate_names) out << ',' << c;
  if (ds.schema.has_nce) out << ",Z";
  if (ds.schema.has_nco) out << ",W";
  for (const auto& c : ds.schema.latent_names) out << ',' << c;
  out << '\n';
  char buf[64];
  auto put = [&](double v) {
    if (std::isnan(v)) return;  // empty cell
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (const auto& r : ds.records) {
    out << int(r.study) << ',' << r.arm << ',';
    put(r.time);
    out << ',' << int(r.event);
    for (double v : r.covariates) {
      out << ',';
      put(v);
    }
    if (ds.schema.has_nce) {
      out << ',';
      if (r.nce) out << int(*r.nce);
    }
    if (ds.schema.has_nco) {
      out << ',';
      if (r.nco) out << int(*r.nco);
    }
    for (double v : r.latent) {
      out << ',';
      put(v);
    }
    out << '\n';
  }
}

namespace {

// field accessor: covariate index, or -1 = nce, -2 = nco
int resolve_field(const Schema& schema, const std::string& name) {
  if (name == "nce") {
    if (!schema.has_nce) throw DataError("dataset has no NCE column");
    return -1;
  }
  if (name == "nco") {
    if (!schema.has_nco) throw DataError("dataset has no NCO column");
    return -2;
  }
  auto it = std::find(schema.covariate_names.begin(),
                      schema.covariate_names.end(), name);
  if (it == schema.covariate_names.end())
    throw DataError("unknown field '" + name + "'");
  return static_cast<int>(it - schema.covariate_names.begin());
}

bool field_missing(const SubjectRecord& r, int f) {
  if (f == -1) return !r.nce.has_value();
  if (f == -2) return !r.nco.has_value();
  return std::isnan(r.covariates[static_cast<std::size_t>(f)]);
}

}  // namespace

StudyDataset complete_case(const StudyDataset& ds,
                           const std::vector<std::string>& required) {
  std::vector<int> fields;
  for (const auto& name : required) fields.push_back(resolve_field(ds.schema, name));

  StudyDataset out;
  out.schema = ds.schema;
  out.provenance = ds.provenance;
  out.notes = ds.notes;
  std::vector<std::size_t> excluded(fields.size(), 0);
  for (const auto& r : ds.records) {
    bool keep = true;
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (field_missing(r, fields[j])) {
        ++excluded[j];  // first failing field only
        keep = false;
        break;
      }
    }
    if (keep) out.records.push_back(r);
  }
  for (std::size_t j = 0; j < fields.size(); ++j) {
    std::ostringstream note;
    note << "complete_case: excluded " << excluded[j] << " records missing '"
         << required[j] << "'";
    out.notes.push_back(note.str());
  }
  if (!required.empty() && out.records.empty())
    throw DataError("no complete cases");
  return out;
}

StudyDataset drop_zero_followup(const StudyDataset& ds) {
  StudyDataset out;
  out.schema = ds.schema;
  out.provenance = ds.provenance;
  out.notes = ds.notes;
  std::size_t dropped = 0;
  for (const auto& r : ds.records) {
    if (r.time == 0.0 && r.event == 0)
      ++dropped;
    else
      out.records.push_back(r);
  }
  std::ostringstream note;
  note << "drop_zero_followup: excluded " << dropped << " records";
  out.notes.push_back(note.str());
  return out;
}

SummaryTable summarize(const StudyDataset& ds,
                       const std::vector<std::string>& variables) {
  SummaryTable table;
  table.n0 = ds.count_study(0);
  table.n1 = ds.count_study(1);

  for (const auto& var : variables) {
    const int f = resolve_field(ds.schema, var);
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
    std::pair<std::size_t, std::size_t> missing{0, 0};
    for (const auto& r : ds.records) {
      const bool g1 = r.study == 1;
      if (field_missing(r, f)) {
        (g1 ? missing.second : missing.first)++;
        continue;
      }
      double v;
      if (f == -1)
        v = *r.nce;
      else if (f == -2)
        v = *r.nco;
      else
        v = r.covariates[static_cast<std::size_t>(f)];
      auto& c = counts[format_level(v)];
      (g1 ? c.second : c.first)++;
    }
    auto pct = [](std::size_t c, std::size_t n) {
      return n == 0 ? 0.0 : 100.0 * static_cast<double>(c) / static_cast<double>(n);
    };
    for (const auto& [level, c] : counts) {
      table.rows.push_back({var, level, c.first, c.second,
                            pct(c.first, table.n0), pct(c.second, table.n1)});
    }
    table.rows.push_back({var, "Missing", missing.first, missing.second,
                          pct(missing.first, table.n0),
                          pct(missing.second, table.n1)});
  }
  return table;
}

std::string SummaryTable::to_csv() const {
  std::ostringstream out;
  out << "variable,level,count_primary,pct_primary,count_external,pct_external\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.1f", r.pct0);
    out << r.variable << ',' << r.level << ',' << r.count0 << ',' << buf;
    std::snprintf(buf, sizeof buf, "%.1f", r.pct1);
    out << ',' << r.count1 << ',' << buf << '\n';
  }
  return out.str();
}

std::string SummaryTable::to_text() const {
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-24s %-12s %18s %18s\n", "variable", "level",
                "primary", "external");
  out << buf;
  for (const auto& r : rows) {
    char c0[32], c1[32];
    std::snprintf(c0, sizeof c0, "%zu (%.1f%%)", r.count0, r.pct0);
    std::snprintf(c1, sizeof c1, "%zu (%.1f%%)", r.count1, r.pct1);
    std::snprintf(buf, sizeof buf, "%-24s %-12s %18s %18s\n", r.variable.c_str(),
                  r.level.c_str(), c0, c1);
    out << buf;
  }
  return out.str();
}

DataView make_view(const StudyDataset& ds) {
  const Eigen::Index n = static_cast<Eigen::Index>(ds.records.size());
  const Eigen::Index k = static_cast<Eigen::Index>(ds.schema.covariate_names.size());
  DataView v;
  v.time.resize(n);
  v.event.resize(n);
  v.study.resize(n);
  v.arm.resize(n);
  v.x.resize(n, k);
  v.xnames = ds.schema.covariate_names;
  if (ds.schema.has_nce) v.z.resize(n);
  if (ds.schema.has_nco) v.w.resize(n);
  for (const auto& name : ds.schema.latent_names)
    v.latent[name] = Eigen::VectorXd(n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = ds.records[static_cast<std::size_t>(i)];
    v.time[i] = r.time;
    v.event[i] = r.event;
    v.study[i] = r.study;
    v.arm[i] = r.arm;
    for (Eigen::Index j = 0; j < k; ++j)
      v.x(i, j) = r.covariates[static_cast<std::size_t>(j)];
    if (ds.schema.has_nce) v.z[i] = r.nce ? double(*r.nce) : kNaN;
    if (ds.schema.has_nco) v.w[i] = r.nco ? double(*r.nco) : kNaN;
    for (std::size_t l = 0; l < ds.schema.latent_names.size(); ++l)
      v.latent[ds.schema.latent_names[l]][i] =
          l < r.latent.size() ? r.latent[l] : kNaN;
  }
  return v;
}

}  // namespace pcix
